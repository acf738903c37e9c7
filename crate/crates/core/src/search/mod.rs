//! Greedy-up search (GUS) over stream sets for one time slot.
//!
//! Each iteration assesses every legal `(prb, user[, stream])` candidate by
//! temporarily adding it, recomputing the zero-forcing effective channels of
//! its PRB and re-running the fitted water-filling of every user that has a
//! stream in that PRB. The best candidate is committed while the weighted
//! sum rate stays within a factor `β` of the best seen so far; the best
//! allocation (the incumbent) is then finalized with exact MCS rates.
//!
//! With rate reuse enabled, per-user rates computed for a candidate in the
//! previous iteration are reused unless the user was touched by the last
//! commit; see [`CandidateType`].

mod finalize;
mod state;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use finalize::{StreamAllocation, TsAllocationResult};
pub use state::{SearchState, StepOutcome, StopReason};

use crate::error::{Error, Result};
use crate::mcs::{FittedRateModel, McsTable};
use crate::power::{search_rate_sum, PowerScheme, Slot};
use crate::zf::{GramState, StreamBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyKind {
    /// Only the strongest stream of a scheduled user.
    #[serde(rename = "CTR_ONE")]
    CtrOne,
    /// All `M_U` streams of a scheduled user.
    #[serde(rename = "BD")]
    Bd,
    /// Any subset of a user's streams.
    #[serde(rename = "CTR_F")]
    CtrF,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [StrategyKind::CtrOne, StrategyKind::Bd, StrategyKind::CtrF];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::CtrOne => "CTR_ONE",
            StrategyKind::Bd => "BD",
            StrategyKind::CtrF => "CTR_F",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "CTR_ONE" | "CTRONE" => Ok(StrategyKind::CtrOne),
            "BD" => Ok(StrategyKind::Bd),
            "CTR_F" | "CTRF" => Ok(StrategyKind::CtrF),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

/// A candidate for selection. `stream` is meaningful for `CTR_F` only; it
/// is 0 for `CTR_ONE` (the strongest stream) and for `BD` (all streams).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Candidate {
    pub prb: usize,
    pub user: usize,
    pub stream: usize,
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(prb {}, user {}, stream {})", self.prb, self.user, self.stream)
    }
}

/// Classification of a candidate with respect to the PRB `ĉ` of the
/// previous commit. Types 2 and 3 may co-occur; type 4 is "none of these".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CandidateType {
    /// Candidate lies in `ĉ`.
    pub type1: bool,
    /// Candidate user is selected in `ĉ`.
    pub type2: bool,
    /// Some user selected in `ĉ` is also selected in the candidate PRB.
    pub type3: bool,
}

impl CandidateType {
    pub fn type4(&self) -> bool {
        !(self.type1 || self.type2 || self.type3)
    }

    /// Type numbers present, ascending.
    pub fn types(&self) -> Vec<u8> {
        let mut v = Vec::new();
        if self.type1 {
            v.push(1);
        }
        if self.type2 {
            v.push(2);
        }
        if self.type3 {
            v.push(3);
        }
        if self.type4() {
            v.push(4);
        }
        v
    }
}

/// Stream bases of every user in every PRB of one time slot.
#[derive(Debug, Clone)]
pub struct TsChannels {
    num_users: usize,
    num_prbs: usize,
    num_bs_antennas: usize,
    num_user_antennas: usize,
    noise: f64,
    bases: Vec<StreamBasis>,
}

impl TsChannels {
    /// `bases` is PRB-major: entry `prb * num_users + user`.
    pub fn new(
        num_users: usize,
        num_prbs: usize,
        num_bs_antennas: usize,
        noise: f64,
        bases: Vec<StreamBasis>,
    ) -> Result<Self> {
        if num_users == 0 || num_prbs == 0 {
            return Err(Error::Config("need at least one user and one PRB".into()));
        }
        if bases.len() != num_users * num_prbs {
            return Err(Error::Config(format!(
                "expected {} stream bases, got {}",
                num_users * num_prbs,
                bases.len()
            )));
        }
        let num_user_antennas = bases[0].num_streams();
        if num_user_antennas == 0 || num_user_antennas > 64 {
            return Err(Error::Config("streams per user must lie in 1..=64".into()));
        }
        if bases
            .iter()
            .any(|b| b.num_streams() != num_user_antennas || b.signatures.iter().any(|s| s.len() != num_bs_antennas))
        {
            return Err(Error::Config("inconsistent stream basis dimensions".into()));
        }
        if num_user_antennas > num_bs_antennas {
            return Err(Error::Config("M_U must not exceed M_B".into()));
        }
        if !(noise > 0.0) {
            return Err(Error::Config("noise power must be positive".into()));
        }
        Ok(Self {
            num_users,
            num_prbs,
            num_bs_antennas,
            num_user_antennas,
            noise,
            bases,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_prbs(&self) -> usize {
        self.num_prbs
    }

    pub fn num_bs_antennas(&self) -> usize {
        self.num_bs_antennas
    }

    pub fn num_user_antennas(&self) -> usize {
        self.num_user_antennas
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn basis(&self, prb: usize, user: usize) -> &StreamBasis {
        &self.bases[prb * self.num_users + user]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub strategy: StrategyKind,
    pub beta: f64,
    /// Per-user power budget over the time slot, mW.
    pub budget: f64,
    pub scheme: PowerScheme,
    pub reuse: bool,
    pub model: FittedRateModel,
    pub table: McsTable,
    /// Assess the candidates of an iteration on the rayon pool.
    pub parallel: bool,
}

impl SearchParams {
    pub fn new(strategy: StrategyKind, budget: f64) -> Self {
        Self {
            strategy,
            beta: 1.05,
            budget,
            scheme: PowerScheme::Tpm,
            reuse: true,
            model: FittedRateModel::default(),
            table: McsTable::nr(),
            parallel: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 1.0) {
            return Err(Error::Config(format!("beta must exceed 1, got {}", self.beta)));
        }
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return Err(Error::Config(format!(
                "power budget must be positive, got {}",
                self.budget
            )));
        }
        Ok(())
    }
}

/// Counters gathered during one search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub iterations: usize,
    pub assessments: usize,
    pub zf_computations: usize,
    pub wf_runs: usize,
    pub type_counts: [usize; 4],
}

/// Streams selected in each PRB, as `(user, stream)` pairs.
pub type Allocation = Vec<Vec<(usize, usize)>>;

/// Fitted weighted sum rate of an allocation computed from scratch, or
/// `None` if zero-forcing is infeasible in some PRB.
pub fn allocation_wsr(ch: &TsChannels, alloc: &Allocation, weights: &[f64], params: &SearchParams) -> Option<f64> {
    let mut per_user: Vec<Vec<Slot>> = vec![Vec::new(); ch.num_users()];
    for (prb, members) in alloc.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let rows: Vec<&[num_complex::Complex64]> =
            members.iter().map(|&(u, s)| ch.basis(prb, u).signature(s)).collect();
        let eff = GramState::from_rows(&rows).ok()?.effective(ch.noise());
        for (&(u, s), e) in members.iter().zip(eff) {
            per_user[u].push(Slot { prb, stream: s, eff: e });
        }
    }
    Some(
        per_user
            .iter_mut()
            .zip(weights)
            .map(|(slots, w)| {
                slots.sort_by_key(|s| (s.prb, s.stream));
                let effs: Vec<f64> = slots.iter().map(|s| s.eff).collect();
                w * search_rate_sum(params.scheme, &effs, params.budget, &params.model, &params.table)
            })
            .sum(),
    )
}

/// Runs the whole heuristic for one time slot.
pub fn run_gus(ch: &TsChannels, weights: &[f64], params: &SearchParams) -> Result<TsAllocationResult> {
    let mut state = SearchState::new(ch, weights, params)?;
    while let StepOutcome::Selected { .. } = state.search_step() {}
    Ok(state.finalize())
}
