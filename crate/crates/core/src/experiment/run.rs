use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{Antennas, LoadedConfig};
use super::output::{format_number, pattern_label, push_row, rounded, HISTOGRAM_HEADER, RATES_HEADER};
use crate::error::{Error, Result};
use crate::fairness::{aggregate, geometric_mean, run_realization, RealizationParams, RealizationResult};
use crate::power::PowerScheme;
use crate::search::StrategyKind;

/// One combination of swept parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub strategy: StrategyKind,
    pub power_scheme: PowerScheme,
    pub num_users: usize,
    #[serde(rename = "M_B")]
    pub m_b: usize,
    #[serde(rename = "M_U")]
    pub m_u: usize,
    #[serde(rename = "P_U")]
    pub p_u: f64,
}

impl SweepPoint {
    fn columns(&self) -> [String; 6] {
        [
            self.strategy.to_string(),
            self.power_scheme.to_string(),
            self.num_users.to_string(),
            self.m_b.to_string(),
            self.m_u.to_string(),
            format_number(self.p_u),
        ]
    }

    fn same_setting(&self, other: &SweepPoint) -> bool {
        self.num_users == other.num_users && self.m_b == other.m_b && self.m_u == other.m_u && self.p_u == other.p_u
    }
}

/// Sweep points in file order: antennas, budget, users, scheme, strategy.
pub fn sweep_points(cfg: &super::ExperimentConfig) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for a in &cfg.antennas {
        for &p_u in &cfg.power_budgets_mw {
            for &num_users in &cfg.num_users {
                for &power_scheme in &cfg.power_schemes {
                    for &strategy in &cfg.strategies {
                        out.push(SweepPoint {
                            strategy,
                            power_scheme,
                            num_users,
                            m_b: a.bs,
                            m_u: a.user,
                            p_u,
                        });
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub point: usize,
    pub realization: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    #[serde(flatten)]
    pub point: SweepPoint,
    pub realizations: usize,
    pub failed: usize,
    pub mean_gm: Option<f64>,
    pub ci90_half_width: Option<f64>,
    /// Per-realization GM, Mbps, in realization order.
    pub gm: Vec<f64>,
    #[serde(skip)]
    pub runtime_s: f64,
    #[serde(skip)]
    pub mean_ts_runtime_s: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    pub points: Vec<PointSummary>,
    pub failures: Vec<Failure>,
}

type TaskResult = std::result::Result<(RealizationResult, f64), String>;

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Runs every (sweep point, realization) pair on a pool of `config.jobs`
/// workers and writes `rates.csv`, `histogram.csv`, `summary.json` and
/// `manifest.json` into `out_dir`.
pub fn run_experiment(loaded: &LoadedConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    let cfg = &loaded.config;
    let started = SystemTime::now();
    let points = sweep_points(cfg);
    let scenarios: Vec<_> = cfg
        .antennas
        .iter()
        .map(|&a| cfg.scenario_for(a).map(|s| (a, s)))
        .collect::<std::result::Result<_, _>>()
        .map_err(Error::Config)?;
    let scenario_of = |p: &SweepPoint| {
        let key = Antennas { bs: p.m_b, user: p.m_u };
        &scenarios
            .iter()
            .find(|(a, _)| *a == key)
            .expect("scenario per antenna pair")
            .1
    };
    let seeds: Vec<u64> = (0..cfg.num_realizations as u64).map(|i| cfg.base_seed + i).collect();

    let tasks: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cfg.num_realizations).map(move |r| (p, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let threads = pool.current_num_threads();
    let results: Vec<TaskResult> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(pi, r)| {
                let p = &points[pi];
                let params = RealizationParams {
                    scheme: p.power_scheme,
                    horizon: cfg.horizon,
                    window: cfg.window,
                    beta: cfg.beta,
                    model: cfg.fitting,
                    table: loaded.table.clone(),
                    reuse: cfg.reuse,
                    proportional_fair: cfg.proportional_fair,
                    ..RealizationParams::new(p.strategy, p.num_users, p.p_u)
                };
                let start = Instant::now();
                let out = catch_unwind(AssertUnwindSafe(|| run_realization(scenario_of(p), &params, seeds[r])));
                let elapsed = start.elapsed().as_secs_f64();
                log::debug!("point {pi} realization {r} done in {elapsed:.3} s");
                match out {
                    Ok(Ok(res)) => Ok((res, elapsed)),
                    Ok(Err(e)) => Err(e.to_string()),
                    Err(p) => Err(panic_message(p)),
                }
            })
            .collect()
    });

    let mut rates = String::from(RATES_HEADER);
    rates.push('\n');
    let mut hist = String::from(HISTOGRAM_HEADER);
    hist.push('\n');
    let mut failures = Vec::new();
    let mut summaries = Vec::with_capacity(points.len());

    for (pi, point) in points.iter().enumerate() {
        let cols = point.columns();
        let mut gms = Vec::new();
        let mut runtime_s = 0.0;
        let mut ts_runtimes = Vec::new();
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        for r in 0..cfg.num_realizations {
            let (res, elapsed) = match &results[pi * cfg.num_realizations + r] {
                Ok(v) => v,
                Err(message) => {
                    log::warn!("point {pi} realization {r} failed: {message}");
                    failures.push(Failure {
                        point: pi,
                        realization: r,
                        seed: seeds[r],
                        message: message.clone(),
                    });
                    continue;
                }
            };
            runtime_s += elapsed;
            ts_runtimes.extend_from_slice(&res.ts_runtime_s);
            let mut totals = vec![0.0; point.num_users];
            for (t, row) in res.rates.iter().enumerate() {
                for (u, &x) in row.iter().enumerate() {
                    let shown = format_number(x);
                    totals[u] += rounded(x);
                    let (rs, ts, us) = (r.to_string(), t.to_string(), u.to_string());
                    let mut fields = vec![rs.as_str(), ts.as_str(), us.as_str(), shown.as_str()];
                    fields.extend(cols.iter().map(String::as_str));
                    push_row(&mut rates, &fields);
                }
            }
            gms.push(geometric_mean(&totals));
            for (&mask, &n) in &res.histogram {
                *counts.entry(mask).or_insert(0) += n;
            }
        }
        let total: usize = counts.values().sum();
        for (&mask, &n) in &counts {
            let (label, ns, cs, mass) = (
                pattern_label(mask),
                mask.count_ones().to_string(),
                n.to_string(),
                format_number(n as f64 / total as f64),
            );
            let mut fields: Vec<&str> = cols.iter().map(String::as_str).collect();
            fields.extend([label.as_str(), ns.as_str(), cs.as_str(), mass.as_str()]);
            push_row(&mut hist, &fields);
        }
        let agg = aggregate(&gms).ok();
        log::info!(
            "{} {} users={} M_B={} M_U={} P_U={}: {} realizations, mean GM {}",
            cols[0],
            cols[1],
            cols[2],
            cols[3],
            cols[4],
            cols[5],
            gms.len(),
            agg.map_or_else(|| "n/a".into(), |a| format!("{:.3} ± {:.3}", a.mean, a.half_width)),
        );
        summaries.push(PointSummary {
            point: *point,
            realizations: gms.len(),
            failed: cfg.num_realizations - gms.len(),
            mean_gm: agg.map(|a| a.mean).or_else(|| (gms.len() == 1).then(|| gms[0])),
            ci90_half_width: agg.map(|a| a.half_width),
            gm: gms,
            runtime_s,
            mean_ts_runtime_s: if ts_runtimes.is_empty() {
                0.0
            } else {
                ts_runtimes.iter().sum::<f64>() / ts_runtimes.len() as f64
            },
        });
    }

    fs::create_dir_all(out_dir)?;
    let summary = summary_json(&summaries);
    let files = [
        ("rates.csv", rates),
        ("histogram.csv", hist),
        ("summary.json", serde_json::to_string_pretty(&summary)? + "\n"),
    ];
    let mut hashes = serde_json::Map::new();
    for (name, body) in &files {
        fs::write(out_dir.join(name), body)?;
        hashes.insert((*name).into(), hex::encode(Sha256::digest(body.as_bytes())).into());
    }
    let manifest = manifest_json(
        loaded,
        &seeds,
        &summaries,
        &failures,
        started,
        threads,
        Value::Object(hashes),
    )?;
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;

    Ok(ExperimentOutcome {
        out_dir: out_dir.to_owned(),
        points: summaries,
        failures,
    })
}

fn summary_json(points: &[PointSummary]) -> Value {
    let mean = |s: StrategyKind, scheme: PowerScheme, like: &SweepPoint| {
        points
            .iter()
            .find(|q| q.point.strategy == s && q.point.power_scheme == scheme && q.point.same_setting(like))
            .and_then(|q| q.mean_gm)
    };
    let ratio = |num: Option<f64>, den: Option<f64>| match (num, den) {
        (Some(n), Some(d)) if d > 0.0 => Some(n / d),
        _ => None,
    };
    let mut strategy_ratios = Vec::new();
    let mut scheme_ratios = Vec::new();
    for q in points {
        let p = &q.point;
        if p.strategy == StrategyKind::CtrF {
            let f = mean(StrategyKind::CtrF, p.power_scheme, p);
            let bd = ratio(mean(StrategyKind::Bd, p.power_scheme, p), f);
            let one = ratio(mean(StrategyKind::CtrOne, p.power_scheme, p), f);
            if bd.is_some() || one.is_some() {
                strategy_ratios.push(json!({
                    "power_scheme": p.power_scheme, "num_users": p.num_users,
                    "M_B": p.m_b, "M_U": p.m_u, "P_U": p.p_u,
                    "BD/CTR_F": bd, "CTR_ONE/CTR_F": one,
                }));
            }
        }
        if p.power_scheme == PowerScheme::Tpm {
            if let Some(r) = ratio(mean(p.strategy, PowerScheme::Epm, p), q.mean_gm) {
                scheme_ratios.push(json!({
                    "strategy": p.strategy, "num_users": p.num_users,
                    "M_B": p.m_b, "M_U": p.m_u, "P_U": p.p_u,
                    "EPM/TPM": r,
                }));
            }
        }
    }
    json!({
        "metric": "geometric mean over users of the per-realization total rate, Mbps",
        "confidence": 0.9,
        "points": points,
        "strategy_ratios": strategy_ratios,
        "power_scheme_ratios": scheme_ratios,
    })
}

fn unix_secs(t: SystemTime) -> f64 {
    t.duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn manifest_json(
    loaded: &LoadedConfig,
    seeds: &[u64],
    points: &[PointSummary],
    failures: &[Failure],
    started: SystemTime,
    threads: usize,
    outputs: Value,
) -> Result<Value> {
    let cfg = serde_json::to_value(&loaded.config)?;
    let canonical = serde_json::to_string(&cfg)?;
    let runtimes: Vec<Value> = points
        .iter()
        .map(|p| {
            json!({
                "point": p.point,
                "realizations": p.realizations,
                "runtime_s": p.runtime_s,
                "mean_ts_runtime_s": p.mean_ts_runtime_s,
            })
        })
        .collect();
    Ok(json!({
        "tool": "gusim",
        "version": env!("CARGO_PKG_VERSION"),
        "config_source": loaded.source.as_ref().map(|p| p.display().to_string()),
        "config_sha256": hex::encode(Sha256::digest(canonical.as_bytes())),
        "config": cfg,
        "mcs_table": loaded.table,
        "seeds": seeds,
        "started_unix_s": unix_secs(started),
        "finished_unix_s": unix_secs(SystemTime::now()),
        "worker_threads": threads,
        "runtimes": runtimes,
        "failures": failures,
        "outputs": outputs,
    }))
}
