use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::state::{PrbState, SearchState, StopReason};
use super::{Candidate, SearchStats, StrategyKind};
use crate::power::{final_plan, PowerPlan, Slot};
use crate::zf::GramState;

/// One selected stream after finalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamAllocation {
    pub user: usize,
    pub stream: usize,
    pub eff: f64,
    pub power: f64,
    pub mcs_level: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsAllocationResult {
    pub strategy: StrategyKind,
    /// Final streams per PRB.
    pub prbs: Vec<Vec<StreamAllocation>>,
    /// Per-user rate over the time slot, bits/s/Hz summed over PRBs and streams.
    pub user_rates: Vec<f64>,
    /// Per-user power spent, mW.
    pub user_power: Vec<f64>,
    /// Every committed candidate, in order.
    pub committed: Vec<Candidate>,
    /// Fitted WSR after each commit.
    pub trajectory: Vec<f64>,
    /// Number of leading commits forming the incumbent.
    pub incumbent_len: usize,
    /// Fitted WSR of the incumbent.
    pub wsr_max: f64,
    pub stop: Option<StopReason>,
    /// Streams removed for having zero MCS rate.
    pub pruned: usize,
    pub stats: SearchStats,
}

impl TsAllocationResult {
    pub fn total_rate(&self) -> f64 {
        self.user_rates.iter().sum()
    }

    /// Bitmask of enabled streams per scheduled `(user, prb)` pair.
    pub fn stream_patterns(&self) -> Vec<(usize, usize, u64)> {
        let mut out = Vec::new();
        for (prb, streams) in self.prbs.iter().enumerate() {
            let mut users: Vec<(usize, u64)> = Vec::new();
            for s in streams {
                match users.iter_mut().find(|(u, _)| *u == s.user) {
                    Some((_, m)) => *m |= 1 << s.stream,
                    None => users.push((s.user, 1 << s.stream)),
                }
            }
            users.sort_unstable();
            out.extend(users.into_iter().map(|(u, m)| (u, prb, m)));
        }
        out
    }
}

impl SearchState<'_> {
    fn rebuild_incumbent(&self) -> Vec<PrbState> {
        let mut prbs = vec![PrbState::default(); self.ch.num_prbs()];
        for cand in &self.committed[..self.incumbent_len] {
            let streams = self.candidate_streams(cand);
            let rows: Vec<&[Complex64]> = streams
                .iter()
                .map(|&s| self.ch.basis(cand.prb, cand.user).signature(s))
                .collect();
            let p = &mut prbs[cand.prb];
            p.gram.extend(&rows).expect("incumbent streams were feasible");
            p.members.extend(streams.iter().map(|&s| (cand.user, s)));
        }
        for p in &mut prbs {
            p.eff = p.gram.effective(self.ch.noise());
        }
        prbs
    }

    fn user_slots(&self, prbs: &[PrbState], user: usize) -> Vec<Slot> {
        let mut slots: Vec<Slot> = prbs
            .iter()
            .enumerate()
            .flat_map(|(prb, p)| {
                p.members
                    .iter()
                    .zip(&p.eff)
                    .filter(move |((u, _), _)| *u == user)
                    .map(move |(&(_, stream), &eff)| Slot { prb, stream, eff })
            })
            .collect();
        slots.sort_by_key(|s| (s.prb, s.stream));
        slots
    }

    fn plan_user(&self, prbs: &[PrbState], user: usize) -> PowerPlan {
        let p = self.params;
        final_plan(p.scheme, &self.user_slots(prbs, user), p.budget, &p.table, &p.model)
    }

    /// Restores the incumbent, runs exact-MCS power management per user,
    /// drops zero-rate streams in one pass and re-plans the users affected
    /// by the removal. Under BD a user leaves a PRB only when all of its
    /// streams there have zero rate.
    pub fn finalize(self) -> TsAllocationResult {
        let nu = self.ch.num_users();
        let mut prbs = self.rebuild_incumbent();
        let mut plans: Vec<PowerPlan> = (0..nu).map(|u| self.plan_user(&prbs, u)).collect();

        let mut zero: Vec<Vec<bool>> = prbs.iter().map(|p| vec![false; p.members.len()]).collect();
        for (u, plan) in plans.iter().enumerate() {
            for s in plan.slots.iter().filter(|s| s.mcs_level == 0) {
                let pos = prbs[s.prb]
                    .members
                    .iter()
                    .position(|&m| m == (u, s.stream))
                    .expect("planned slot is selected");
                zero[s.prb][pos] = true;
            }
        }
        if self.params.strategy == StrategyKind::Bd {
            for (p, z) in prbs.iter().zip(zero.iter_mut()) {
                for u in 0..nu {
                    let idx: Vec<usize> = (0..p.members.len()).filter(|&i| p.members[i].0 == u).collect();
                    let all_zero = idx.iter().all(|&i| z[i]);
                    for i in idx {
                        z[i] = all_zero;
                    }
                }
            }
        }

        let mut pruned = 0;
        let mut replan = vec![false; nu];
        for (prb, z) in zero.iter().enumerate() {
            if !z.iter().any(|&x| x) {
                continue;
            }
            let p = &prbs[prb];
            for &(u, _) in &p.members {
                replan[u] = true;
            }
            let keep: Vec<(usize, usize)> = p
                .members
                .iter()
                .zip(z)
                .filter(|(_, &gone)| !gone)
                .map(|(&m, _)| m)
                .collect();
            pruned += p.members.len() - keep.len();
            let rows: Vec<&[Complex64]> = keep.iter().map(|&(u, s)| self.ch.basis(prb, u).signature(s)).collect();
            let gram = GramState::from_rows(&rows).expect("a subset of a feasible set is feasible");
            let eff = gram.effective(self.ch.noise());
            prbs[prb] = PrbState {
                gram,
                members: keep,
                eff,
            };
        }
        for u in (0..nu).filter(|&u| replan[u]) {
            plans[u] = self.plan_user(&prbs, u);
        }

        let mut out_prbs: Vec<Vec<StreamAllocation>> =
            prbs.iter().map(|p| Vec::with_capacity(p.members.len())).collect();
        for (u, plan) in plans.iter().enumerate() {
            for s in &plan.slots {
                out_prbs[s.prb].push(StreamAllocation {
                    user: u,
                    stream: s.stream,
                    eff: s.eff,
                    power: s.power,
                    mcs_level: s.mcs_level,
                    rate: s.mcs_rate,
                });
            }
        }
        for v in &mut out_prbs {
            v.sort_by_key(|s| (s.user, s.stream));
        }
        TsAllocationResult {
            strategy: self.params.strategy,
            prbs: out_prbs,
            user_rates: plans.iter().map(|p| p.mcs_rate()).collect(),
            user_power: plans.iter().map(|p| p.total_power()).collect(),
            committed: self.committed,
            trajectory: self.trajectory,
            incumbent_len: self.incumbent_len,
            wsr_max: self.wsr_max,
            stop: self.stopped,
            pruned,
            stats: self.stats,
        }
    }
}
