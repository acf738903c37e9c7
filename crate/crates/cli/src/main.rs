use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gusim::experiment::{load_config, run_experiment, validate_config, ConfigIssue, LoadedConfig};

/// Output directory used when neither `--out` nor the config sets one.
const OUT_DIR_ENV: &str = "GUSIM_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "gusim-results";

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "gusim",
    version,
    about = "Uplink MU-MIMO radio resource management experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every sweep point of an experiment and write the result files.
    Run {
        config: PathBuf,
        /// Base seed; realization i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0 = all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory [default: config `output_dir`, then $GUSIM_OUT_DIR, then ./gusim-results]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reuse per-user rates across search iterations.
        #[arg(long, value_enum)]
        reuse: Option<Toggle>,
        /// Only report warnings and errors.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Check a config file without running it.
    Validate {
        config: PathBuf,
        #[arg(long, short)]
        quiet: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

fn report(path: &Path, issues: &[ConfigIssue]) {
    for i in issues {
        eprintln!("{}: {i}", path.display());
    }
}

fn load(path: &Path) -> Result<LoadedConfig, ExitCode> {
    load_config(path).map_err(|issues| {
        report(path, &issues);
        ExitCode::from(EXIT_CONFIG)
    })
}

fn out_dir(flag: Option<PathBuf>, loaded: &LoadedConfig) -> PathBuf {
    flag.or_else(|| loaded.config.output_dir.clone())
        .or_else(|| {
            std::env::var_os(OUT_DIR_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
        })
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn init_logging(quiet: bool) {
    let level = if quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_target(false)
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config, quiet } => {
            init_logging(quiet);
            match load(&config) {
                Ok(loaded) => {
                    if !quiet {
                        let n = gusim::experiment::sweep_points(&loaded.config).len();
                        println!(
                            "{}: ok ({n} sweep points x {} realizations)",
                            config.display(),
                            loaded.config.num_realizations
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(code) => code,
            }
        }
        Command::Run {
            config,
            seed,
            jobs,
            out,
            reuse,
            quiet,
        } => {
            init_logging(quiet);
            let mut loaded = match load(&config) {
                Ok(l) => l,
                Err(code) => return code,
            };
            let cfg = &mut loaded.config;
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(j) = jobs {
                cfg.jobs = j;
            }
            if let Some(r) = reuse {
                cfg.reuse = matches!(r, Toggle::On);
            }
            let issues = validate_config(cfg);
            if !issues.is_empty() {
                for (_, msg) in issues {
                    eprintln!("{}: {msg}", config.display());
                }
                return ExitCode::from(EXIT_CONFIG);
            }
            let dir = out_dir(out, &loaded);
            match run_experiment(&loaded, &dir) {
                Ok(outcome) => {
                    let total = outcome.points.len() * loaded.config.num_realizations;
                    if !outcome.failures.is_empty() {
                        log::warn!(
                            "{} of {total} realizations failed; see {}",
                            outcome.failures.len(),
                            dir.join("manifest.json").display()
                        );
                    }
                    if outcome.failures.len() == total {
                        return ExitCode::from(EXIT_RUNTIME);
                    }
                    if !quiet {
                        println!("results written to {}", dir.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
    }
}
