use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::channel::{ScenarioConfig, ScenarioKind};
use crate::mcs::{FittedRateModel, McsTable};
use crate::power::PowerScheme;
use crate::search::StrategyKind;

/// Antenna counts of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Antennas {
    pub bs: usize,
    pub user: usize,
}

/// An experiment definition as read from a JSON file. Scenario parameters
/// start from `preset` and are patched by the keys of `scenario`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_preset")]
    pub preset: ScenarioKind,
    #[serde(default)]
    pub scenario: Map<String, Value>,
    pub strategies: Vec<StrategyKind>,
    #[serde(default = "default_schemes")]
    pub power_schemes: Vec<PowerScheme>,
    pub num_users: Vec<usize>,
    pub antennas: Vec<Antennas>,
    /// Per-user budget per time slot, mW.
    pub power_budgets_mw: Vec<f64>,
    pub num_realizations: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub fitting: FittedRateModel,
    /// Optional MCS table file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcs_table: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default = "default_true")]
    pub reuse: bool,
    #[serde(default = "default_true")]
    pub proportional_fair: bool,
}

fn default_preset() -> ScenarioKind {
    ScenarioKind::Uma
}

fn default_schemes() -> Vec<PowerScheme> {
    vec![PowerScheme::Tpm]
}

fn default_horizon() -> usize {
    66
}

fn default_window() -> usize {
    6
}

fn default_beta() -> f64 {
    1.05
}

fn default_true() -> bool {
    true
}

/// One problem found in a config file. `line` is 1-based when known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

/// A parsed config together with what was resolved from it.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub source: Option<PathBuf>,
    pub text: String,
    pub table: McsTable,
}

impl ExperimentConfig {
    /// Small defaults used by examples and tests.
    pub fn example() -> Self {
        serde_json::from_str(
            r#"{"strategies": ["CTR_ONE", "BD", "CTR_F"],
                "num_users": [10], "antennas": [{"bs": 16, "user": 4}],
                "power_budgets_mw": [5.0], "num_realizations": 2,
                "scenario": {"num_subchannels": 13}, "horizon": 4}"#,
        )
        .expect("valid example config")
    }

    /// Scenario for the given antenna pair with overrides applied.
    pub fn scenario_for(&self, antennas: Antennas) -> Result<ScenarioConfig, String> {
        let mut base = serde_json::to_value(ScenarioConfig::preset(self.preset)).expect("scenario serializes");
        let obj = base.as_object_mut().expect("scenario is an object");
        for (k, v) in &self.scenario {
            match k.as_str() {
                "kind" => return Err("scenario.kind is set through `preset`".into()),
                "num_bs_antennas" | "num_user_antennas" => {
                    return Err(format!("scenario.{k} is set through `antennas`"));
                }
                _ if !obj.contains_key(k) => return Err(format!("unknown scenario parameter {k:?}")),
                _ => {
                    obj.insert(k.clone(), v.clone());
                }
            }
        }
        obj.insert("num_bs_antennas".into(), antennas.bs.into());
        obj.insert("num_user_antennas".into(), antennas.user.into());
        let sc: ScenarioConfig = serde_json::from_value(base).map_err(|e| format!("scenario: {e}"))?;
        sc.validate().map_err(|e| format!("scenario: {e}"))?;
        Ok(sc)
    }
}

/// Parses and validates config text. `base_dir` resolves a relative MCS
/// table path.
pub fn parse_config(text: &str, base_dir: Option<&Path>) -> Result<LoadedConfig, Vec<ConfigIssue>> {
    let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
        vec![ConfigIssue {
            line: (e.line() > 0).then_some(e.line()),
            column: (e.column() > 0).then_some(e.column()),
            message: strip_position(&e.to_string()),
        }]
    })?;
    let mut issues = validate_config(&config);
    let table = match &config.mcs_table {
        None => McsTable::nr(),
        Some(p) => {
            let path = base_dir.map_or_else(|| p.clone(), |d| d.join(p));
            McsTable::load(&path).unwrap_or_else(|e| {
                issues.push((vec!["mcs_table"], format!("{}: {e}", path.display())));
                McsTable::nr()
            })
        }
    };
    if !issues.is_empty() {
        return Err(issues
            .into_iter()
            .map(|(path, message)| ConfigIssue {
                line: locate_key(text, &path),
                column: None,
                message,
            })
            .collect());
    }
    Ok(LoadedConfig {
        config,
        source: None,
        text: text.to_owned(),
        table,
    })
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<LoadedConfig, Vec<ConfigIssue>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![ConfigIssue {
            line: None,
            column: None,
            message: format!("cannot read {}: {e}", path.display()),
        }]
    })?;
    let mut loaded = parse_config(&text, path.parent())?;
    loaded.source = Some(path.to_owned());
    Ok(loaded)
}

type Issue = (Vec<&'static str>, String);

/// Semantic checks. Each issue carries the key path it refers to.
pub fn validate_config(cfg: &ExperimentConfig) -> Vec<Issue> {
    let mut out: Vec<Issue> = Vec::new();
    let mut push = |path: &[&'static str], msg: String| out.push((path.to_vec(), msg));

    for (key, empty) in [
        ("strategies", cfg.strategies.is_empty()),
        ("power_schemes", cfg.power_schemes.is_empty()),
        ("num_users", cfg.num_users.is_empty()),
        ("antennas", cfg.antennas.is_empty()),
        ("power_budgets_mw", cfg.power_budgets_mw.is_empty()),
    ] {
        if empty {
            push(&[key], format!("{key} must not be empty"));
        }
    }
    if cfg.num_users.contains(&0) {
        push(&["num_users"], "user counts must be at least 1".into());
    }
    if let Some(p) = cfg.power_budgets_mw.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        push(
            &["power_budgets_mw"],
            format!("power budgets must be positive, got {p}"),
        );
    }
    if !(cfg.beta > 1.0) {
        push(&["beta"], format!("β must exceed 1, got {}", cfg.beta));
    }
    if cfg.num_realizations == 0 {
        push(&["num_realizations"], "num_realizations must be at least 1".into());
    }
    if cfg.horizon == 0 {
        push(&["horizon"], "horizon must be at least 1 time slot".into());
    }
    if cfg.window == 0 {
        push(&["window"], "window must be at least 1 time slot".into());
    }
    if let Err(e) = FittedRateModel::new(cfg.fitting.a_coeff, cfg.fitting.d_coeff) {
        push(&["fitting"], e.to_string());
    }
    if cfg.base_seed.checked_add(cfg.num_realizations as u64).is_none() {
        push(&["base_seed"], "base_seed + num_realizations overflows".into());
    }
    for a in &cfg.antennas {
        if a.bs == 0 || a.user == 0 {
            push(&["antennas"], "antenna counts must be at least 1".into());
        } else if a.user > a.bs {
            push(
                &["antennas"],
                format!("M_U = {} exceeds M_B = {}: no user fits in a PRB", a.user, a.bs),
            );
        } else if a.user > 64 {
            push(
                &["antennas"],
                format!("M_U = {} exceeds the supported 64 streams", a.user),
            );
        }
    }
    if let Some(&a) = cfg.antennas.iter().find(|a| a.user >= 1 && a.user <= a.bs) {
        if let Err(e) = cfg.scenario_for(a) {
            push(&["scenario"], e);
        }
    } else if cfg.antennas.is_empty() {
        if let Err(e) = cfg.scenario_for(Antennas { bs: 1, user: 1 }) {
            push(&["scenario"], e);
        }
    }
    out
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_owned(),
        None => msg.to_owned(),
    }
}

/// Line of the last key of `path`, searched after the line of its parent.
fn locate_key(text: &str, path: &[&str]) -> Option<usize> {
    let mut from = 0;
    let mut found = None;
    for key in path {
        let needle = format!("\"{key}\"");
        let (i, _) = text.lines().enumerate().skip(from).find(|(_, l)| l.contains(&needle))?;
        found = Some(i + 1);
        from = i;
    }
    found
}
