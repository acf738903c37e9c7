//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export returns a JSON string so the page needs no generated
//! TypeScript glue beyond `JSON.parse`.

use gusim::channel::{generate_realization, noise_power, ScenarioConfig};
use gusim::mcs::db_to_linear;
use gusim::power::{capped_waterfill, tpm, JpmProblem, Slot};
use gusim::search::{run_gus, SearchParams, StrategyKind, TsChannels};
use gusim::zf::stream_basis;
use gusim::{FittedRateModel, McsTable, PowerScheme};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn slots_from_db(effs_db: &[f64]) -> Vec<Slot> {
    effs_db
        .iter()
        .enumerate()
        .map(|(i, &db)| Slot {
            prb: i,
            stream: 0,
            eff: db_to_linear(db),
        })
        .collect()
}

/// Capped water-filling and TPM for one user. `effs_db` are effective
/// channels in dB (SNR per mW), `budget` is in mW.
pub fn waterfill_value(effs_db: &[f64], budget: f64) -> Result<Value, String> {
    if effs_db.is_empty() || effs_db.len() > 32 {
        return Err("between 1 and 32 slots are supported".into());
    }
    if effs_db.iter().any(|x| x.is_nan() || x.abs() > 200.0) {
        return Err("effective channels must be finite dB values within ±200".into());
    }
    if !budget.is_finite() || budget <= 0.0 {
        return Err("budget must be positive".into());
    }
    let (table, model) = (McsTable::nr(), FittedRateModel::default());
    let slots = slots_from_db(effs_db);
    let wf = capped_waterfill(
        &JpmProblem {
            slots: slots.clone(),
            budget,
            model,
        },
        &table,
    );
    let level = wf
        .slots
        .iter()
        .filter(|s| s.power > 0.0 && s.power < s.cap)
        .map(|s| s.power + 1.0 / (model.d_coeff * s.eff))
        .next();
    let two_step = tpm(&slots, budget, &table, &model);
    let rows: Vec<Value> = wf
        .slots
        .iter()
        .zip(&two_step.slots)
        .map(|(w, t)| {
            json!({
                "floor": 1.0 / (model.d_coeff * w.eff),
                "cap": w.cap,
                "wf_power": w.power,
                "wf_fitted_rate": w.fitted_rate,
                "tpm_power": t.power,
                "tpm_level": t.mcs_level,
                "tpm_rate": t.mcs_rate,
            })
        })
        .collect();
    Ok(json!({
        "level": level,
        "slots": rows,
        "wf_fitted_rate": wf.fitted_rate(),
        "wf_mcs_rate": wf.mcs_rate(),
        "tpm_rate": two_step.mcs_rate(),
        "tpm_power": two_step.total_power(),
    }))
}

/// MCS step function and fitted curve sampled on an SNR grid in dB.
pub fn rate_curves_value(min_db: f64, max_db: f64, points: usize) -> Result<Value, String> {
    if !min_db.is_finite() || !max_db.is_finite() || max_db <= min_db || !(2..=4096).contains(&points) {
        return Err("need max_db > min_db and 2..=4096 points".into());
    }
    let (table, model) = (McsTable::nr(), FittedRateModel::default());
    let grid: Vec<f64> = (0..points)
        .map(|i| min_db + (max_db - min_db) * i as f64 / (points - 1) as f64)
        .collect();
    let thresholds: Vec<Value> = table
        .levels()
        .iter()
        .map(|l| json!({"snr_db": l.snr_threshold_db, "rate": l.rate}))
        .collect();
    Ok(json!({
        "snr_db": grid,
        "mcs": grid.iter().map(|&d| table.rate(db_to_linear(d))).collect::<Vec<_>>(),
        "fitted": grid.iter().map(|&d| model.rate(db_to_linear(d))).collect::<Vec<_>>(),
        "levels": thresholds,
    }))
}

/// Demo cell: 6 PRBs in 3 reporting blocks, 8 base-station antennas and
/// 2 antennas per user.
pub fn demo_scenario() -> ScenarioConfig {
    ScenarioConfig {
        num_subchannels: 6,
        report_block_subchannels: 2,
        num_bs_antennas: 8,
        num_user_antennas: 2,
        ..ScenarioConfig::uma()
    }
}

/// One time slot of the greedy-up search on a random drop.
pub fn gus_value(strategy: &str, scheme: &str, num_users: usize, budget: f64, seed: u64) -> Result<Value, String> {
    let strategy: StrategyKind = strategy.parse().map_err(|e: gusim::Error| e.to_string())?;
    let scheme = match scheme.to_ascii_lowercase().as_str() {
        "tpm" => PowerScheme::Tpm,
        "epm" => PowerScheme::Epm,
        other => return Err(format!("unknown power scheme {other:?}")),
    };
    if !(1..=12).contains(&num_users) {
        return Err("the demo supports 1 to 12 users".into());
    }
    let sc = demo_scenario();
    let real = generate_realization(&sc, num_users, 1, seed).map_err(|e| e.to_string())?;
    let bases = (0..sc.num_subchannels)
        .flat_map(|c| {
            let real = &real;
            let fb = c / sc.report_block_subchannels;
            (0..num_users).map(move |u| stream_basis(&real.block_channel(u, fb, 0)))
        })
        .collect();
    let ch = TsChannels::new(
        num_users,
        sc.num_subchannels,
        sc.num_bs_antennas,
        noise_power(&sc),
        bases,
    )
    .map_err(|e| e.to_string())?;
    let params = SearchParams {
        scheme,
        ..SearchParams::new(strategy, budget)
    };
    params.validate().map_err(|e| e.to_string())?;
    let res = run_gus(&ch, &vec![1.0; num_users], &params).map_err(|e| e.to_string())?;
    let users: Vec<Value> = real
        .users
        .iter()
        .zip(&res.user_rates)
        .map(|(d, r)| {
            json!({
                "x": d.x, "y": d.y, "los": d.los,
                "pathloss_db": d.pathloss_db,
                "rate": r,
            })
        })
        .collect();
    Ok(json!({
        "prbs": res.prbs,
        "users": users,
        "trajectory": res.trajectory,
        "incumbent_len": res.incumbent_len,
        "total_rate": res.total_rate(),
        "pruned": res.pruned,
        "iterations": res.stats.iterations,
        "cell_radius_m": sc.cell_radius_m,
    }))
}

#[wasm_bindgen]
pub fn waterfill(effs_db: Vec<f64>, budget: f64) -> Result<String, String> {
    waterfill_value(&effs_db, budget).map(|v| v.to_string())
}

#[wasm_bindgen]
pub fn rate_curves(min_db: f64, max_db: f64, points: usize) -> Result<String, String> {
    rate_curves_value(min_db, max_db, points).map(|v| v.to_string())
}

#[wasm_bindgen]
pub fn gus_demo(strategy: &str, scheme: &str, num_users: usize, budget: f64, seed: u64) -> Result<String, String> {
    gus_value(strategy, scheme, num_users, budget, seed).map(|v| v.to_string())
}
