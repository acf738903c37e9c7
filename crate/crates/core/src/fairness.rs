//! Proportional-fairness driver: runs the greedy-up search over the time
//! slots of a realization, feeding it weights `w_u = 1/R_u` where `R_u` is a
//! `W`-slot moving average of the user's rate.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::channel::{generate_realization, noise_power, Realization, ScenarioConfig};
use crate::error::{Error, Result};
use crate::mcs::{FittedRateModel, McsTable};
use crate::power::PowerScheme;
use crate::search::{run_gus, SearchParams, SearchStats, StrategyKind, TsAllocationResult, TsChannels};
use crate::zf::{stream_basis, StreamBasis};

/// Floor on the bootstrap average rate (Mbps) so starved users keep a
/// finite weight.
pub const MIN_AVERAGE_RATE: f64 = 1e-6;

/// `R' = ((W − 1) R + r) / W`
pub fn update_average(avg: f64, rate: f64, window: usize) -> f64 {
    let w = window as f64;
    ((w - 1.0) * avg + rate) / w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessState {
    pub window: usize,
    pub averages: Vec<f64>,
    pub weights: Vec<f64>,
    bootstrapped: bool,
}

impl FairnessState {
    /// Equal unit weights for the first slot.
    pub fn new(num_users: usize, window: usize) -> Self {
        Self {
            window,
            averages: vec![1.0; num_users],
            weights: vec![1.0; num_users],
            bootstrapped: false,
        }
    }

    /// Starts from explicit averages (already bootstrapped).
    pub fn with_averages(averages: Vec<f64>, window: usize) -> Self {
        let weights = averages.iter().map(|r| 1.0 / r).collect();
        Self {
            window,
            averages,
            weights,
            bootstrapped: true,
        }
    }

    /// Moving-average update with the rates of the slot just served. The
    /// first call seeds the averages with the observed rates.
    pub fn update(&mut self, rates: &[f64]) {
        for (avg, &r) in self.averages.iter_mut().zip(rates) {
            *avg = if self.bootstrapped {
                update_average(*avg, r, self.window)
            } else {
                r.max(MIN_AVERAGE_RATE)
            };
        }
        self.bootstrapped = true;
        for (w, r) in self.weights.iter_mut().zip(&self.averages) {
            *w = 1.0 / r;
        }
    }
}

/// `(Π_u total_u)^{1/|U|}`, evaluated in the log domain.
pub fn geometric_mean(totals: &[f64]) -> f64 {
    if totals.is_empty() || totals.iter().any(|&t| t <= 0.0) {
        return 0.0;
    }
    (totals.iter().map(|t| t.ln()).sum::<f64>() / totals.len() as f64).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationParams {
    pub strategy: StrategyKind,
    pub scheme: PowerScheme,
    pub num_users: usize,
    pub horizon: usize,
    pub window: usize,
    pub beta: f64,
    pub budget: f64,
    pub model: FittedRateModel,
    pub table: McsTable,
    pub reuse: bool,
    /// `false` keeps equal unit weights in every slot.
    pub proportional_fair: bool,
    /// Keep every slot's allocation in the result.
    pub keep_allocations: bool,
}

impl RealizationParams {
    pub fn new(strategy: StrategyKind, num_users: usize, budget: f64) -> Self {
        Self {
            strategy,
            scheme: PowerScheme::Tpm,
            num_users,
            horizon: 66,
            window: 6,
            beta: 1.05,
            budget,
            model: FittedRateModel::default(),
            table: McsTable::nr(),
            reuse: true,
            proportional_fair: true,
            keep_allocations: false,
        }
    }

    fn search_params(&self) -> SearchParams {
        SearchParams {
            strategy: self.strategy,
            beta: self.beta,
            budget: self.budget,
            scheme: self.scheme,
            reuse: self.reuse,
            model: self.model,
            table: self.table.clone(),
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationResult {
    pub seed: u64,
    /// `rates[t][u]`, Mbps in time slot `t`.
    pub rates: Vec<Vec<f64>>,
    pub gm: f64,
    /// Count of each enabled-stream pattern (bitmask) per scheduled
    /// `(user, PRB)` event.
    pub histogram: BTreeMap<u64, usize>,
    pub ts_runtime_s: Vec<f64>,
    pub stats: SearchStats,
    pub constraint_violations: usize,
    pub allocations: Vec<TsAllocationResult>,
}

impl RealizationResult {
    /// Total rate of each user over the horizon, Mbps.
    pub fn user_totals(&self) -> Vec<f64> {
        let n = self.rates.first().map_or(0, |r| r.len());
        (0..n).map(|u| self.rates.iter().map(|r| r[u]).sum()).collect()
    }

    /// Histogram normalized to probability masses.
    pub fn histogram_masses(&self) -> BTreeMap<u64, f64> {
        let total: usize = self.histogram.values().sum();
        self.histogram
            .iter()
            .map(|(&k, &v)| (k, v as f64 / total as f64))
            .collect()
    }
}

/// Checks the per-PRB stream budget and the strategy's per-user stream
/// pattern; returns a description of every violation.
pub fn audit_allocation(alloc: &TsAllocationResult, num_bs_antennas: usize, num_user_antennas: usize) -> Vec<String> {
    let mut issues = Vec::new();
    let full = if num_user_antennas >= 64 {
        u64::MAX
    } else {
        (1u64 << num_user_antennas) - 1
    };
    for (prb, streams) in alloc.prbs.iter().enumerate() {
        if streams.len() > num_bs_antennas {
            issues.push(format!(
                "PRB {prb}: {} streams > M_B = {num_bs_antennas}",
                streams.len()
            ));
        }
    }
    for (user, prb, mask) in alloc.stream_patterns() {
        let ok = match alloc.strategy {
            StrategyKind::CtrOne => mask == 1,
            StrategyKind::Bd => mask == full,
            StrategyKind::CtrF => mask != 0 && mask & !full == 0,
        };
        if !ok {
            issues.push(format!(
                "PRB {prb}, user {user}: pattern {mask:#b} not allowed under {}",
                alloc.strategy
            ));
        }
    }
    issues
}

/// Per-PRB stream bases of time slot `t` of a realization.
pub fn ts_channels(real: &Realization, t: usize) -> Result<TsChannels> {
    let sc = real.config();
    if t >= real.horizon {
        return Err(Error::OutOfRange {
            what: "time slot",
            index: t,
            limit: real.horizon,
        });
    }
    let tblock = t / sc.report_block_slots;
    let nu = real.num_users();
    let blocks: Vec<Vec<StreamBasis>> = (0..sc.freq_blocks())
        .map(|fb| {
            (0..nu)
                .map(|u| stream_basis(&real.block_channel(u, fb, tblock)))
                .collect()
        })
        .collect();
    let bases = (0..sc.num_subchannels)
        .flat_map(|c| blocks[c / sc.report_block_subchannels].iter().cloned())
        .collect();
    TsChannels::new(nu, sc.num_subchannels, sc.num_bs_antennas, noise_power(sc), bases)
}

/// Runs one realization over its horizon.
pub fn run_realization(scenario: &ScenarioConfig, params: &RealizationParams, seed: u64) -> Result<RealizationResult> {
    if params.window == 0 {
        return Err(Error::Config("fairness window must be at least 1".into()));
    }
    let real = generate_realization(scenario, params.num_users, params.horizon, seed)?;
    let search = search_params_checked(params)?;
    let noise = noise_power(scenario);
    let (nu, nc) = (params.num_users, scenario.num_subchannels);
    let bw_mhz = scenario.subchannel_bw_hz / 1e6;

    let mut fair = FairnessState::new(nu, params.window);
    let mut rates = Vec::with_capacity(params.horizon);
    let mut histogram = BTreeMap::new();
    let mut ts_runtime_s = Vec::with_capacity(params.horizon);
    let mut stats = SearchStats::default();
    let mut violations = 0;
    let mut allocations = Vec::new();

    // stream bases per (frequency block, user), refreshed per time block
    let mut block_bases: Vec<Vec<StreamBasis>> = Vec::new();
    let mut current_tblock = usize::MAX;

    for t in 0..params.horizon {
        let tblock = t / scenario.report_block_slots;
        if tblock != current_tblock {
            current_tblock = tblock;
            block_bases = (0..scenario.freq_blocks())
                .map(|fb| {
                    (0..nu)
                        .map(|u| stream_basis(&real.block_channel(u, fb, tblock)))
                        .collect()
                })
                .collect();
        }
        let bases: Vec<StreamBasis> = (0..nc)
            .flat_map(|c| block_bases[c / scenario.report_block_subchannels].iter().cloned())
            .collect();
        let ch = TsChannels::new(nu, nc, scenario.num_bs_antennas, noise, bases)?;

        let start = Instant::now();
        let weights = if params.proportional_fair {
            fair.weights.clone()
        } else {
            vec![1.0; nu]
        };
        let alloc = run_gus(&ch, &weights, &search)?;
        ts_runtime_s.push(start.elapsed().as_secs_f64());

        let r: Vec<f64> = alloc.user_rates.iter().map(|x| x * bw_mhz).collect();
        fair.update(&r);
        rates.push(r);
        for (_, _, mask) in alloc.stream_patterns() {
            *histogram.entry(mask).or_insert(0) += 1;
        }
        violations += audit_allocation(&alloc, scenario.num_bs_antennas, scenario.num_user_antennas).len();
        let s = alloc.stats;
        stats.iterations += s.iterations;
        stats.assessments += s.assessments;
        stats.zf_computations += s.zf_computations;
        stats.wf_runs += s.wf_runs;
        for i in 0..4 {
            stats.type_counts[i] += s.type_counts[i];
        }
        if params.keep_allocations {
            allocations.push(alloc);
        }
    }

    let mut result = RealizationResult {
        seed,
        rates,
        gm: 0.0,
        histogram,
        ts_runtime_s,
        stats,
        constraint_violations: violations,
        allocations,
    };
    result.gm = geometric_mean(&result.user_totals());
    Ok(result)
}

fn search_params_checked(params: &RealizationParams) -> Result<SearchParams> {
    let p = params.search_params();
    p.validate()?;
    Ok(p)
}

/// Sample mean with a two-sided confidence interval from Student's t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub half_width: f64,
    pub confidence: f64,
}

/// Mean ± 90% confidence half-width over per-seed values.
pub fn aggregate(values: &[f64]) -> Result<Aggregate> {
    aggregate_with(values, 0.90)
}

pub fn aggregate_with(values: &[f64], confidence: f64) -> Result<Aggregate> {
    let n = values.len();
    if n < 2 {
        return Err(Error::NoConfidenceInterval(n));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std_dev = var.sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5 + confidence / 2.0);
    Ok(Aggregate {
        n,
        mean,
        std_dev,
        half_width: t * std_dev / (n as f64).sqrt(),
        confidence,
    })
}
