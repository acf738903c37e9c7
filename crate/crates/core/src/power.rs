//! Per-user power management over a time slot.
//!
//! The water-filling solves
//! `max Σ A ln(1 + D E_j P_j)  s.t.  Σ P_j ≤ P_U,  0 ≤ P_j ≤ τ_j`
//! whose KKT point is `P_j = clamp(μ − 1/(D E_j), 0, τ_j)` for a common
//! water level `μ`. The total allocated power is piecewise linear in `μ`,
//! so the level is found exactly by walking the sorted breakpoints.

use serde::{Deserialize, Serialize};

use crate::mcs::{power_for_snr, FittedRateModel, McsTable};

/// Absolute slack on affordability comparisons in the MCS upgrade.
pub const UPGRADE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerScheme {
    /// Water-filling followed by MCS quantization and greedy upgrades.
    Tpm,
    /// Equal split of the budget over the user's selected streams.
    Epm,
}

impl std::fmt::Display for PowerScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PowerScheme::Tpm => "TPM",
            PowerScheme::Epm => "EPM",
        })
    }
}

/// One selected stream of a user in one PRB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub prb: usize,
    pub stream: usize,
    /// Effective channel (SNR per mW).
    pub eff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotPlan {
    pub prb: usize,
    pub stream: usize,
    pub eff: f64,
    pub cap: f64,
    pub power: f64,
    pub fitted_rate: f64,
    pub mcs_level: usize,
    pub mcs_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerPlan {
    pub slots: Vec<SlotPlan>,
}

impl PowerPlan {
    pub fn total_power(&self) -> f64 {
        self.slots.iter().map(|s| s.power).sum()
    }

    pub fn fitted_rate(&self) -> f64 {
        self.slots.iter().map(|s| s.fitted_rate).sum()
    }

    pub fn mcs_rate(&self) -> f64 {
        self.slots.iter().map(|s| s.mcs_rate).sum()
    }
}

/// A per-user joint power allocation/distribution instance on the fitted
/// rate model.
#[derive(Debug, Clone, PartialEq)]
pub struct JpmProblem {
    pub slots: Vec<Slot>,
    pub budget: f64,
    pub model: FittedRateModel,
}

/// Water-filling powers for effective channels `effs` with per-slot caps:
/// slot `j` is filled to `level − 1/(D·E_j)`, clamped to `[0, cap_j]`.
pub fn waterfill_powers(effs: &[f64], caps: &[f64], budget: f64, d_coeff: f64) -> Vec<f64> {
    let n = effs.len();
    let cap_total: f64 = caps.iter().sum();
    if cap_total <= budget {
        return caps.to_vec();
    }
    let floors: Vec<f64> = effs.iter().map(|&e| 1.0 / (d_coeff * e)).collect();

    // (level, +1 start / −1 end) breakpoints; ties resolved by index order
    let mut events: Vec<(f64, i32)> = Vec::with_capacity(2 * n);
    for j in 0..n {
        events.push((floors[j], 1));
        events.push((floors[j] + caps[j], -1));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut slope = 0i64;
    let mut total = 0.0;
    let mut prev = events[0].0;
    let mut level = prev;
    for &(x, delta) in &events {
        let next_total = total + slope as f64 * (x - prev);
        if slope > 0 && next_total >= budget {
            level = prev + (budget - total) / slope as f64;
            break;
        }
        total = next_total;
        prev = x;
        slope += delta as i64;
        level = x;
    }
    floors
        .iter()
        .zip(caps)
        .map(|(&f, &c)| (level - f).clamp(0.0, c))
        .collect()
}

fn caps_for(effs: &[f64], table: &McsTable) -> Vec<f64> {
    effs.iter()
        .map(|&e| table.power_cap(e).expect("selected streams have positive gain"))
        .collect()
}

fn plan_from_powers(
    slots: &[Slot],
    caps: &[f64],
    powers: &[f64],
    model: &FittedRateModel,
    table: &McsTable,
) -> PowerPlan {
    PowerPlan {
        slots: slots
            .iter()
            .zip(caps.iter().zip(powers))
            .map(|(s, (&cap, &power))| {
                let snr = power * s.eff;
                let mcs_level = table.level(snr);
                SlotPlan {
                    prb: s.prb,
                    stream: s.stream,
                    eff: s.eff,
                    cap,
                    power,
                    fitted_rate: model.rate(snr),
                    mcs_level,
                    mcs_rate: table.rate_of(mcs_level),
                }
            })
            .collect(),
    }
}

/// KKT-optimal powers for the capped fitted problem.
pub fn capped_waterfill(problem: &JpmProblem, table: &McsTable) -> PowerPlan {
    if problem.slots.is_empty() {
        return PowerPlan::default();
    }
    let effs: Vec<f64> = problem.slots.iter().map(|s| s.eff).collect();
    let caps = caps_for(&effs, table);
    let powers = waterfill_powers(&effs, &caps, problem.budget, problem.model.d_coeff);
    plan_from_powers(&problem.slots, &caps, &powers, &problem.model, table)
}

/// Fitted rate sum of the water-filling solution, used inside the search.
pub fn waterfill_rate_sum(effs: &[f64], budget: f64, model: &FittedRateModel, table: &McsTable) -> f64 {
    if effs.is_empty() {
        return 0.0;
    }
    let caps = caps_for(effs, table);
    let powers = waterfill_powers(effs, &caps, budget, model.d_coeff);
    effs.iter().zip(&powers).map(|(&e, &p)| model.rate(p * e)).sum()
}

/// Drops every slot to the exact power of the MCS level it achieves and
/// returns the freed power.
pub fn mcs_quantize_and_pool(plan: &PowerPlan, table: &McsTable) -> (PowerPlan, f64) {
    let mut surplus = 0.0;
    let slots = plan
        .slots
        .iter()
        .map(|s| {
            let level = table.level(s.power * s.eff);
            let power = if level == 0 {
                0.0
            } else {
                power_for_snr(table.threshold(level), s.eff).min(s.power)
            };
            surplus += s.power - power;
            SlotPlan {
                power,
                mcs_level: level,
                mcs_rate: table.rate_of(level),
                ..*s
            }
        })
        .collect();
    (PowerPlan { slots }, surplus)
}

/// Spends `available` power on MCS upgrades, always taking the affordable
/// upgrade with the smallest extra power per extra rate. Ties go to the
/// smallest `(prb, stream)`.
pub fn mcs_greedy_upgrade(plan: &PowerPlan, available: f64, table: &McsTable, model: &FittedRateModel) -> PowerPlan {
    let mut out = plan.clone();
    let mut order: Vec<usize> = (0..out.slots.len()).collect();
    order.sort_by_key(|&i| (out.slots[i].prb, out.slots[i].stream));
    let top = table.len();
    let mut avail = available.max(0.0);
    loop {
        let mut best: Option<(f64, usize, f64)> = None;
        for &i in &order {
            let s = &out.slots[i];
            if s.mcs_level >= top {
                continue;
            }
            let next = s.mcs_level + 1;
            let target = power_for_snr(table.threshold(next), s.eff);
            let dp = (target - s.power).max(0.0);
            if dp > avail + UPGRADE_SLACK {
                continue;
            }
            let ratio = dp / (table.rate_of(next) - table.rate_of(s.mcs_level));
            if best.is_none_or(|(r, _, _)| ratio < r) {
                best = Some((ratio, i, target));
            }
        }
        let Some((_, i, target)) = best else { break };
        let s = &mut out.slots[i];
        avail = (avail - (target - s.power).max(0.0)).max(0.0);
        s.power = target.max(s.power);
        s.mcs_level += 1;
        s.mcs_rate = table.rate_of(s.mcs_level);
        s.fitted_rate = model.rate(s.power * s.eff);
    }
    out
}

/// Two-step power management: capped water-filling, then MCS quantization
/// and greedy upgrades with the pooled power.
pub fn tpm(slots: &[Slot], budget: f64, table: &McsTable, model: &FittedRateModel) -> PowerPlan {
    let wf = capped_waterfill(
        &JpmProblem {
            slots: slots.to_vec(),
            budget,
            model: *model,
        },
        table,
    );
    let (quantized, _) = mcs_quantize_and_pool(&wf, table);
    let available = budget - quantized.total_power();
    mcs_greedy_upgrade(&quantized, available, table, model)
}

/// Equal power per selected slot.
pub fn epm(n: usize, budget: f64) -> Vec<f64> {
    vec![budget / n as f64; n]
}

/// Equal-power plan evaluated on the MCS table.
pub fn epm_plan(slots: &[Slot], budget: f64, table: &McsTable, model: &FittedRateModel) -> PowerPlan {
    let effs: Vec<f64> = slots.iter().map(|s| s.eff).collect();
    let caps = caps_for(&effs, table);
    plan_from_powers(slots, &caps, &epm(slots.len(), budget), model, table)
}

/// Fitted rate sum under equal power; SNR beyond the top threshold earns
/// nothing extra.
pub fn epm_rate_sum(effs: &[f64], budget: f64, model: &FittedRateModel, table: &McsTable) -> f64 {
    if effs.is_empty() {
        return 0.0;
    }
    let p = budget / effs.len() as f64;
    let top = table.top_threshold();
    effs.iter().map(|&e| model.rate((p * e).min(top))).sum()
}

/// Fitted rate sum under `scheme` as used during the search.
pub fn search_rate_sum(
    scheme: PowerScheme,
    effs: &[f64],
    budget: f64,
    model: &FittedRateModel,
    table: &McsTable,
) -> f64 {
    match scheme {
        PowerScheme::Tpm => waterfill_rate_sum(effs, budget, model, table),
        PowerScheme::Epm => epm_rate_sum(effs, budget, model, table),
    }
}

/// Final exact-MCS plan under `scheme`.
pub fn final_plan(
    scheme: PowerScheme,
    slots: &[Slot],
    budget: f64,
    table: &McsTable,
    model: &FittedRateModel,
) -> PowerPlan {
    match scheme {
        PowerScheme::Tpm => tpm(slots, budget, table, model),
        PowerScheme::Epm => epm_plan(slots, budget, table, model),
    }
}
