use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{Candidate, CandidateType, SearchParams, SearchStats, StrategyKind, TsChannels};
use crate::error::{Error, Result};
use crate::power::search_rate_sum;
use crate::zf::GramState;

/// One PRB seen with a different member list and effective channels.
type PrbOverride<'a> = (usize, &'a [(usize, usize)], &'a [f64]);

#[derive(Debug, Clone, Default)]
pub(super) struct PrbState {
    pub(super) gram: GramState,
    /// `(user, stream)` in Gram row order.
    pub(super) members: Vec<(usize, usize)>,
    pub(super) eff: Vec<f64>,
}

/// What an assessment leaves behind for the next iteration: the PRB's
/// effective channels with the candidate added (`None` if infeasible) and
/// the fitted rate sum of each user affected by the candidate.
#[derive(Debug, Clone)]
struct Assessment {
    wsr: f64,
    prb_eff: Option<Arc<Vec<f64>>>,
    rates: Vec<(usize, f64)>,
    wf_runs: usize,
    zf_runs: usize,
    kind: Option<CandidateType>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Selected {
        candidate: Candidate,
        wsr: f64,
        incumbent_updated: bool,
    },
    Stopped(StopReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum StopReason {
    /// The best candidate fell more than a factor β below the incumbent.
    Beta,
    /// No legal candidate left (PRBs full or all streams selected).
    Exhausted,
    /// Every remaining candidate is ZF-infeasible.
    NoFeasibleCandidate,
    /// The best candidate has zero weighted sum rate.
    NonPositive,
}

/// Mutable state of one search over a time slot.
pub struct SearchState<'a> {
    pub(super) ch: &'a TsChannels,
    pub(super) params: &'a SearchParams,
    pub(super) weights: Vec<f64>,
    pub(super) prbs: Vec<PrbState>,
    /// Selected-stream bitmask per `(prb, user)`, PRB-major.
    pub(super) masks: Vec<u64>,
    rate_sums: Vec<f64>,
    current_wsr: f64,
    pub(super) wsr_max: f64,
    pub(super) incumbent_len: usize,
    pub(super) committed: Vec<Candidate>,
    pub(super) trajectory: Vec<f64>,
    reference: Option<usize>,
    cache: HashMap<Candidate, Assessment>,
    pub(super) stats: SearchStats,
    pub(super) stopped: Option<StopReason>,
}

impl<'a> SearchState<'a> {
    pub fn new(ch: &'a TsChannels, weights: &[f64], params: &'a SearchParams) -> Result<Self> {
        params.validate()?;
        if weights.len() != ch.num_users() {
            return Err(Error::Config(format!(
                "expected {} weights, got {}",
                ch.num_users(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Config("weights must be finite and non-negative".into()));
        }
        Ok(Self {
            ch,
            params,
            weights: weights.to_vec(),
            prbs: vec![PrbState::default(); ch.num_prbs()],
            masks: vec![0; ch.num_prbs() * ch.num_users()],
            rate_sums: vec![0.0; ch.num_users()],
            current_wsr: 0.0,
            wsr_max: 0.0,
            incumbent_len: 0,
            committed: Vec::new(),
            trajectory: Vec::new(),
            reference: None,
            cache: HashMap::new(),
            stats: SearchStats::default(),
            stopped: None,
        })
    }

    pub(super) fn mask(&self, prb: usize, user: usize) -> u64 {
        self.masks[prb * self.ch.num_users() + user]
    }

    pub fn wsr_max(&self) -> f64 {
        self.wsr_max
    }

    pub fn current_wsr(&self) -> f64 {
        self.current_wsr
    }

    pub fn committed(&self) -> &[Candidate] {
        &self.committed
    }

    pub fn trajectory(&self) -> &[f64] {
        &self.trajectory
    }

    pub fn stats(&self) -> SearchStats {
        self.stats
    }

    pub fn reference_prb(&self) -> Option<usize> {
        self.reference
    }

    /// Fitted rate sum of every user under the current allocation.
    pub fn rate_sums(&self) -> &[f64] {
        &self.rate_sums
    }

    /// Current allocation as `(user, stream)` lists per PRB, in selection order.
    pub fn allocation(&self) -> super::Allocation {
        self.prbs.iter().map(|p| p.members.clone()).collect()
    }

    /// Effective channels of the streams selected in a PRB, aligned with
    /// [`SearchState::allocation`].
    pub fn prb_effective(&self, prb: usize) -> &[f64] {
        &self.prbs[prb].eff
    }

    /// Streams a candidate would add.
    pub fn candidate_streams(&self, cand: &Candidate) -> Vec<usize> {
        match self.params.strategy {
            StrategyKind::CtrOne => vec![0],
            StrategyKind::Bd => (0..self.ch.num_user_antennas()).collect(),
            StrategyKind::CtrF => vec![cand.stream],
        }
    }

    /// Every strategy-legal, capacity-legal candidate, ordered by
    /// `(prb, user, stream)`.
    pub fn enumerate_candidates(&self) -> Vec<Candidate> {
        let (nu, mb, mu) = (
            self.ch.num_users(),
            self.ch.num_bs_antennas(),
            self.ch.num_user_antennas(),
        );
        let mut out = Vec::new();
        for prb in 0..self.ch.num_prbs() {
            let used = self.prbs[prb].members.len();
            for user in 0..nu {
                let mask = self.mask(prb, user);
                match self.params.strategy {
                    StrategyKind::CtrOne => {
                        if mask == 0 && used < mb {
                            out.push(Candidate { prb, user, stream: 0 });
                        }
                    }
                    StrategyKind::Bd => {
                        if mask == 0 && used + mu <= mb {
                            out.push(Candidate { prb, user, stream: 0 });
                        }
                    }
                    StrategyKind::CtrF => {
                        if used < mb {
                            for stream in 0..mu {
                                if mask & (1 << stream) == 0 {
                                    out.push(Candidate { prb, user, stream });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Classifies a candidate against the previous commit's PRB.
    pub fn candidate_type(&self, cand: &Candidate) -> Result<CandidateType> {
        let reference = self.reference.ok_or(Error::NoReference)?;
        if cand.prb == reference {
            return Ok(CandidateType {
                type1: true,
                ..Default::default()
            });
        }
        let type2 = self.mask(reference, cand.user) != 0;
        let type3 = (0..self.ch.num_users()).any(|k| self.mask(reference, k) != 0 && self.mask(cand.prb, k) != 0);
        Ok(CandidateType {
            type1: false,
            type2,
            type3,
        })
    }

    /// Effective channels of `user` over the time slot, ordered by
    /// `(prb, stream)`. PRB `over.0` is read from the override view.
    fn user_effs(&self, user: usize, over: Option<PrbOverride<'_>>) -> Vec<f64> {
        let mut effs = Vec::new();
        let mut buf: Vec<(usize, f64)> = Vec::new();
        for prb in 0..self.ch.num_prbs() {
            let (members, eff): (&[(usize, usize)], &[f64]) = match over {
                Some((c, m, e)) if c == prb => (m, e),
                _ => {
                    if self.mask(prb, user) == 0 {
                        continue;
                    }
                    (&self.prbs[prb].members, &self.prbs[prb].eff)
                }
            };
            buf.clear();
            buf.extend(
                members
                    .iter()
                    .zip(eff)
                    .filter(|((u, _), _)| *u == user)
                    .map(|(&(_, s), &e)| (s, e)),
            );
            buf.sort_by_key(|x| x.0);
            effs.extend(buf.iter().map(|x| x.1));
        }
        effs
    }

    fn rate_sum(&self, effs: &[f64]) -> f64 {
        let p = self.params;
        search_rate_sum(p.scheme, effs, p.budget, &p.model, &p.table)
    }

    /// Core assessment. With `prior` (the same candidate's assessment from
    /// the previous iteration, valid only when the candidate PRB is not the
    /// reference PRB) the PRB's effective channels and the rates of users
    /// untouched by the last commit are reused.
    fn evaluate(&self, cand: &Candidate, prior: Option<&Assessment>, touched: &[bool]) -> Assessment {
        let c = cand.prb;
        let streams = self.candidate_streams(cand);
        let mut zf_runs = 0;
        let prb_eff = match prior {
            Some(p) => p.prb_eff.clone(),
            None => {
                zf_runs = 1;
                let rows: Vec<&[Complex64]> = streams
                    .iter()
                    .map(|&s| self.ch.basis(c, cand.user).signature(s))
                    .collect();
                self.prbs[c].gram.assess(&rows).ok().map(|diag| {
                    let noise = self.ch.noise();
                    Arc::new(diag.into_iter().map(|d| 1.0 / (noise * d)).collect())
                })
            }
        };
        let Some(prb_eff) = prb_eff else {
            return Assessment {
                wsr: f64::NEG_INFINITY,
                prb_eff: None,
                rates: Vec::new(),
                wf_runs: 0,
                zf_runs,
                kind: None,
            };
        };

        let mut members = self.prbs[c].members.clone();
        members.extend(streams.iter().map(|&s| (cand.user, s)));
        let mut affected: Vec<usize> = members.iter().map(|m| m.0).collect();
        affected.sort_unstable();
        affected.dedup();

        let mut wf_runs = 0;
        let rates: Vec<(usize, f64)> = affected
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                if let Some(p) = prior {
                    if !touched[k] {
                        debug_assert_eq!(p.rates[i].0, k);
                        return (k, p.rates[i].1);
                    }
                }
                wf_runs += 1;
                let effs = self.user_effs(k, Some((c, &members, &prb_eff)));
                (k, self.rate_sum(&effs))
            })
            .collect();

        let mut wsr = 0.0;
        let mut next = rates.iter().peekable();
        for (k, w) in self.weights.iter().enumerate() {
            let r = match next.peek() {
                Some(&&(u, r)) if u == k => {
                    next.next();
                    r
                }
                _ => self.rate_sums[k],
            };
            wsr += w * r;
        }
        Assessment {
            wsr,
            prb_eff: Some(prb_eff),
            rates,
            wf_runs,
            zf_runs,
            kind: None,
        }
    }

    /// Users selected in the reference PRB, i.e. those whose rates the last
    /// commit may have changed.
    fn touched_users(&self) -> Vec<bool> {
        match self.reference {
            Some(r) => (0..self.ch.num_users()).map(|k| self.mask(r, k) != 0).collect(),
            None => vec![false; self.ch.num_users()],
        }
    }

    /// Weighted sum rate over the time slot with `cand` temporarily added,
    /// computed without rate reuse. `-inf` if ZF is infeasible.
    pub fn assess_candidate(&self, cand: &Candidate) -> f64 {
        self.evaluate(cand, None, &[]).wsr
    }

    /// Same value as [`SearchState::assess_candidate`], reusing the previous
    /// iteration's per-user rates where the candidate type allows it.
    /// Returns the WSR and the number of water-filling runs performed.
    pub fn assess_candidate_with_reuse(&self, cand: &Candidate) -> (f64, usize) {
        let a = self.assess_reusing(cand, &self.touched_users());
        (a.wsr, a.wf_runs)
    }

    fn assess_reusing(&self, cand: &Candidate, touched: &[bool]) -> Assessment {
        let prior = match self.reference {
            Some(r) if r != cand.prb => self.cache.get(cand),
            _ => None,
        };
        let mut a = self.evaluate(cand, prior, touched);
        a.kind = self.candidate_type(cand).ok();
        a
    }

    fn assess_all(&self, cands: &[Candidate]) -> Vec<Assessment> {
        let touched = self.touched_users();
        let one = |c: &Candidate| {
            if self.params.reuse {
                self.assess_reusing(c, &touched)
            } else {
                self.evaluate(c, None, &touched)
            }
        };
        if self.params.parallel {
            cands.par_iter().map(one).collect()
        } else {
            cands.iter().map(one).collect()
        }
    }

    fn commit(&mut self, cand: Candidate, a: &Assessment) {
        let c = cand.prb;
        let streams = self.candidate_streams(&cand);
        let rows: Vec<Vec<Complex64>> = streams
            .iter()
            .map(|&s| self.ch.basis(c, cand.user).signature(s).to_vec())
            .collect();
        let refs: Vec<&[Complex64]> = rows.iter().map(|r| r.as_slice()).collect();
        self.prbs[c]
            .gram
            .extend(&refs)
            .expect("committed candidate was assessed feasible");
        self.prbs[c].members.extend(streams.iter().map(|&s| (cand.user, s)));
        self.prbs[c].eff = a.prb_eff.as_ref().expect("feasible").as_ref().clone();
        let nu = self.ch.num_users();
        for &s in &streams {
            self.masks[c * nu + cand.user] |= 1 << s;
        }
        for &(k, r) in &a.rates {
            self.rate_sums[k] = r;
        }
        self.current_wsr = a.wsr;
        self.reference = Some(c);
        self.committed.push(cand);
        self.trajectory.push(a.wsr);
    }

    /// One search iteration: assess all candidates, then commit the best or
    /// stop.
    pub fn search_step(&mut self) -> StepOutcome {
        if let Some(r) = self.stopped {
            return StepOutcome::Stopped(r);
        }
        let cands = self.enumerate_candidates();
        if cands.is_empty() {
            return self.stop(StopReason::Exhausted);
        }
        let assessed = self.assess_all(&cands);
        self.stats.iterations += 1;
        self.stats.assessments += assessed.len();
        let mut best: Option<usize> = None;
        for (i, a) in assessed.iter().enumerate() {
            self.stats.wf_runs += a.wf_runs;
            self.stats.zf_computations += a.zf_runs;
            if let Some(t) = a.kind {
                if t.type1 {
                    self.stats.type_counts[0] += 1;
                }
                if t.type2 {
                    self.stats.type_counts[1] += 1;
                }
                if t.type3 {
                    self.stats.type_counts[2] += 1;
                }
                if t.type4() {
                    self.stats.type_counts[3] += 1;
                }
            }
            if a.wsr > f64::NEG_INFINITY && best.is_none_or(|b| a.wsr > assessed[b].wsr) {
                best = Some(i);
            }
        }
        let Some(bi) = best else {
            return self.stop(StopReason::NoFeasibleCandidate);
        };
        let wsr = assessed[bi].wsr;
        if !(wsr > 0.0) {
            return self.stop(StopReason::NonPositive);
        }
        let improved = wsr > self.wsr_max;
        if !improved && self.wsr_max / wsr > self.params.beta {
            return self.stop(StopReason::Beta);
        }
        let cand = cands[bi];
        self.commit(cand, &assessed[bi]);
        if improved {
            self.wsr_max = wsr;
            self.incumbent_len = self.committed.len();
        }
        if self.params.reuse {
            self.cache = cands.into_iter().zip(assessed).filter(|(c, _)| *c != cand).collect();
        }
        StepOutcome::Selected {
            candidate: cand,
            wsr,
            incumbent_updated: improved,
        }
    }

    fn stop(&mut self, reason: StopReason) -> StepOutcome {
        self.stopped = Some(reason);
        self.cache.clear();
        StepOutcome::Stopped(reason)
    }

    /// Hash of the cached rates and effective channels; assessments must
    /// leave it unchanged.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for r in &self.rate_sums {
            r.to_bits().hash(&mut h);
        }
        for p in &self.prbs {
            p.members.hash(&mut h);
            for e in &p.eff {
                e.to_bits().hash(&mut h);
            }
        }
        self.masks.hash(&mut h);
        self.current_wsr.to_bits().hash(&mut h);
        h.finish()
    }

    /// Recomputes every cached per-user rate sum and PRB effective channel
    /// from scratch; returns the largest relative deviation.
    pub fn consistency_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let rel = |a: f64, b: f64| {
            if a == b {
                0.0
            } else {
                (a - b).abs() / a.abs().max(b.abs())
            }
        };
        for (prb, p) in self.prbs.iter().enumerate() {
            if p.members.is_empty() {
                continue;
            }
            let rows: Vec<&[Complex64]> = p
                .members
                .iter()
                .map(|&(u, s)| self.ch.basis(prb, u).signature(s))
                .collect();
            let fresh = GramState::from_rows(&rows).expect("committed sets are feasible");
            for (a, b) in fresh.effective(self.ch.noise()).iter().zip(&p.eff) {
                worst = worst.max(rel(*a, *b));
            }
        }
        for k in 0..self.ch.num_users() {
            let effs = self.user_effs(k, None);
            worst = worst.max(rel(self.rate_sum(&effs), self.rate_sums[k]));
        }
        worst
    }
}
