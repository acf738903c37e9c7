use std::fs;
use std::path::Path;

use gusim::experiment::{geometric_means_from_csv, parse_config, run_experiment, sweep_points, LoadedConfig};

const SMALL: &str = r#"{
  "strategies": ["CTR_ONE", "BD", "CTR_F"],
  "power_schemes": ["tpm", "epm"],
  "num_users": [4],
  "antennas": [{"bs": 8, "user": 2}],
  "power_budgets_mw": [5],
  "num_realizations": 2,
  "horizon": 4,
  "scenario": {"num_subchannels": 6, "report_block_subchannels": 2}
}"#;

fn load(text: &str) -> LoadedConfig {
    parse_config(text, None).unwrap_or_else(|e| panic!("{e:?}"))
}

fn run(loaded: &LoadedConfig, dir: &Path) {
    let out = run_experiment(loaded, dir).unwrap();
    assert!(out.failures.is_empty());
}

#[test]
fn sweep_covers_every_combination() {
    let cfg = load(SMALL).config;
    let pts = sweep_points(&cfg);
    assert_eq!(pts.len(), 6);
    assert!(pts.iter().all(|p| p.num_users == 4 && p.m_b == 8 && p.m_u == 2));
}

#[test]
fn outputs_are_written_and_reproducible() {
    let loaded = load(SMALL);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&loaded, a.path());
    run(&loaded, b.path());
    for f in ["rates.csv", "histogram.csv", "summary.json"] {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["failures"].as_array().unwrap().len(), 0);
    assert!(manifest["config_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn reuse_does_not_change_results() {
    let on = load(SMALL);
    let mut off = on.clone();
    off.config.reuse = false;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&on, a.path());
    run(&off, b.path());
    for f in ["rates.csv", "histogram.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn summary_can_be_recomputed_from_csv() {
    let loaded = load(SMALL);
    let dir = tempfile::tempdir().unwrap();
    run(&loaded, dir.path());
    let csv = fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    let gms = geometric_means_from_csv(&csv);
    assert_eq!(gms.len(), 12);
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    let points = summary["points"].as_array().unwrap();
    assert_eq!(points.len(), 6);
    let mut recomputed: Vec<f64> = gms.values().copied().collect();
    let mut reported: Vec<f64> = points
        .iter()
        .flat_map(|p| p["gm"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()))
        .collect();
    recomputed.sort_by(f64::total_cmp);
    reported.sort_by(f64::total_cmp);
    for (a, b) in recomputed.iter().zip(&reported) {
        assert!((a - b).abs() <= 1e-12 * a.abs(), "{a} vs {b}");
    }
    for p in points {
        let gm: Vec<f64> = p["gm"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let mean = gm.iter().sum::<f64>() / gm.len() as f64;
        assert!((p["mean_gm"].as_f64().unwrap() - mean).abs() <= 1e-12 * mean);
    }
}

#[test]
fn csv_rows_match_the_sweep() {
    let loaded = load(SMALL);
    let dir = tempfile::tempdir().unwrap();
    run(&loaded, dir.path());
    let csv = fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    // 6 points, 2 realizations, 4 slots, 4 users
    assert_eq!(csv.lines().count(), 1 + 6 * 2 * 4 * 4);
    let hist = fs::read_to_string(dir.path().join("histogram.csv")).unwrap();
    let mut mass = std::collections::BTreeMap::<String, f64>::new();
    for line in hist.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        *mass.entry(f[..6].join(",")).or_default() += f[9].parse::<f64>().unwrap();
    }
    assert_eq!(mass.len(), 6);
    for (k, m) in mass {
        assert!((m - 1.0).abs() < 1e-6, "{k}: {m}");
    }
}

#[test]
fn invalid_configs_are_reported() {
    let bad = [
        (
            r#"{"strategies": [], "num_users": [2], "antennas": [{"bs": 4, "user": 2}], "power_budgets_mw": [1], "num_realizations": 1}"#,
            "strategies must not be empty",
        ),
        (
            r#"{"strategies": ["BD"], "num_users": [2], "antennas": [{"bs": 4, "user": 2}], "power_budgets_mw": [1], "num_realizations": 1, "beta": 0.9}"#,
            "β must exceed 1",
        ),
        (
            r#"{"strategies": ["BD"], "num_users": [2], "antennas": [{"bs": 4, "user": 8}], "power_budgets_mw": [1], "num_realizations": 1}"#,
            "exceeds M_B",
        ),
        (
            r#"{"strategies": ["BD"], "num_users": [2], "antennas": [{"bs": 4, "user": 2}], "power_budgets_mw": [1], "num_realizations": 1, "scenario": {"warp": 9}}"#,
            "unknown scenario parameter",
        ),
        (
            r#"{"strategies": ["XYZ"], "num_users": [2], "antennas": [{"bs": 4, "user": 2}], "power_budgets_mw": [1], "num_realizations": 1}"#,
            "unknown variant",
        ),
    ];
    for (text, needle) in bad {
        let issues = parse_config(text, None).unwrap_err();
        assert!(
            issues.iter().any(|i| i.message.contains(needle)),
            "{needle}: {issues:?}"
        );
    }
}

#[test]
fn mcs_table_path_is_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let missing = r#"{"strategies": ["BD"], "num_users": [2], "antennas": [{"bs": 4, "user": 2}], "power_budgets_mw": [1], "num_realizations": 1, "mcs_table": "nope.json"}"#;
    assert!(parse_config(missing, Some(dir.path())).is_err());
}
