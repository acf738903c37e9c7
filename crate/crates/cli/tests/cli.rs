use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"{
  "strategies": ["CTR_ONE", "BD"],
  "num_users": [3],
  "antennas": [{"bs": 4, "user": 2}],
  "power_budgets_mw": [5],
  "num_realizations": 2,
  "horizon": 3,
  "scenario": {"num_subchannels": 4, "report_block_subchannels": 2}
}"#;

fn gusim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gusim"))
        .args(args)
        .current_dir(cwd)
        .env_remove("GUSIM_OUT_DIR")
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.json");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_accepts_a_good_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let o = gusim(&["validate", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("2 sweep points"));
}

#[test]
fn validate_reports_the_line_of_a_bad_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &CONFIG.replace(r#""horizon": 3"#, r#""horizon": 3, "beta": 0.5"#),
    );
    let o = gusim(&["validate", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 7") && err.contains("β must exceed 1"), "{err}");
}

#[test]
fn syntax_errors_and_missing_files_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{\n  \"strategies\": [\"BD\"\n}");
    let o = gusim(&["validate", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    let o = gusim(&["run", "does-not-exist.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let o = gusim(&["run", &cfg, "--out", "res", "--jobs", "1", "--quiet"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    for f in ["rates.csv", "histogram.csv", "summary.json", "manifest.json"] {
        assert!(dir.path().join("res").join(f).is_file(), "{f}");
    }
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let run = |out: &str, extra: &[&str]| {
        let mut args = vec!["run", &cfg, "--out", out, "-q"];
        args.extend_from_slice(extra);
        let o = gusim(&args, dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read(dir.path().join(out).join("rates.csv")).unwrap()
    };
    let base = run("a", &[]);
    assert_eq!(base, run("b", &["--reuse", "off"]));
    assert_ne!(base, run("c", &["--seed", "99"]));
    let manifest = fs::read_to_string(dir.path().join("c/manifest.json")).unwrap();
    assert!(manifest.contains("99"));
}

#[test]
fn environment_sets_the_default_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let o = Command::new(env!("CARGO_BIN_EXE_gusim"))
        .args(["run", &cfg, "-q"])
        .current_dir(dir.path())
        .env("GUSIM_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("from-env/summary.json").is_file());

    let o = gusim(&["run", &cfg, "-q"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("gusim-results/summary.json").is_file());
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    fs::write(dir.path().join("blocker"), "").unwrap();
    let o = gusim(&["run", &cfg, "--out", "blocker/res", "-q"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn unknown_flag_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let o = gusim(&["run", &cfg, "--reuse", "maybe"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
