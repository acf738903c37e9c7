#![allow(dead_code)]

use gusim::mcs::McsTable;
use gusim::search::{Allocation, StrategyKind, TsChannels};
use gusim::zf::stream_basis;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unit-variance circular complex Gaussian.
pub fn cgauss(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_rows(rng: &mut ChaCha8Rng, count: usize, len: usize) -> Vec<Vec<Complex64>> {
    (0..count).map(|_| (0..len).map(|_| cgauss(rng)).collect()).collect()
}

pub fn as_slices(rows: &[Vec<Complex64>]) -> Vec<&[Complex64]> {
    rows.iter().map(Vec::as_slice).collect()
}

/// Random Rayleigh channels with per-user gains drawn in `gain_db`, unit
/// noise power.
pub fn random_channels(
    rng: &mut ChaCha8Rng,
    num_users: usize,
    num_prbs: usize,
    m_b: usize,
    m_u: usize,
    gain_db: (f64, f64),
) -> TsChannels {
    let gains: Vec<f64> = (0..num_users)
        .map(|_| 10f64.powf(rng.random_range(gain_db.0..gain_db.1) / 10.0))
        .collect();
    let mut bases = Vec::with_capacity(num_users * num_prbs);
    for _ in 0..num_prbs {
        for g in &gains {
            let h = DMatrix::from_fn(m_u, m_b, |_, _| cgauss(rng) * g.sqrt());
            bases.push(stream_basis(&h));
        }
    }
    TsChannels::new(num_users, num_prbs, m_b, 1.0, bases).expect("consistent dimensions")
}

pub fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.25..4.0)).collect()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// `‖P⊥ g_i‖²`: squared norm of row `i` after projecting out the span of
/// the other rows, by modified Gram-Schmidt with a second
/// re-orthogonalization pass. Equals `1 / [(G G^H)^{-1}]_ii`.
pub fn residual_oracle(rows: &[Vec<Complex64>], i: usize) -> f64 {
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    for (k, r) in rows.iter().enumerate() {
        if k == i {
            continue;
        }
        let mut v = r.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&v, q);
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= c * y;
                }
            }
        }
        let n = dot(&v, &v).re.sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        basis.push(v);
    }
    let mut v = rows[i].clone();
    for _ in 0..2 {
        for q in &basis {
            let c = dot(&v, q);
            for (x, y) in v.iter_mut().zip(q) {
                *x -= c * y;
            }
        }
    }
    dot(&v, &v).re
}

/// Capped water-filling by bisection on the water level `ν`.
pub fn waterfill_bisection(effs: &[f64], caps: &[f64], budget: f64, d: f64) -> Vec<f64> {
    let alloc = |nu: f64| -> Vec<f64> {
        effs.iter()
            .zip(caps)
            .map(|(&e, &c)| (nu - 1.0 / (d * e)).clamp(0.0, c))
            .collect()
    };
    if caps.iter().sum::<f64>() <= budget {
        return caps.to_vec();
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while alloc(hi).iter().sum::<f64>() < budget {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if alloc(mid).iter().sum::<f64>() < budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    alloc(0.5 * (lo + hi))
}

/// Best total MCS rate over every level assignment whose exact threshold
/// powers fit in the budget.
pub fn exhaustive_mcs(effs: &[f64], budget: f64, table: &McsTable) -> f64 {
    let levels = table.len() + 1;
    let mut best: f64 = 0.0;
    let mut idx = vec![0usize; effs.len()];
    loop {
        let power: f64 = idx
            .iter()
            .zip(effs)
            .map(|(&l, &e)| if l == 0 { 0.0 } else { table.threshold(l) / e })
            .sum();
        if power <= budget * (1.0 + 1e-9) {
            best = best.max(idx.iter().map(|&l| table.rate_of(l)).sum());
        }
        let mut k = 0;
        loop {
            if k == idx.len() {
                return best;
            }
            idx[k] += 1;
            if idx[k] < levels {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Every allocation permitted by `strategy` (at most `M_B` streams per PRB).
pub fn all_allocations(ch: &TsChannels, strategy: StrategyKind) -> Vec<Allocation> {
    let (nu, mu, mb) = (ch.num_users(), ch.num_user_antennas(), ch.num_bs_antennas());
    let units: Vec<Vec<(usize, usize)>> = match strategy {
        StrategyKind::CtrOne => (0..nu).map(|u| vec![(u, 0)]).collect(),
        StrategyKind::Bd => (0..nu).map(|u| (0..mu).map(|s| (u, s)).collect()).collect(),
        StrategyKind::CtrF => (0..nu).flat_map(|u| (0..mu).map(move |s| vec![(u, s)])).collect(),
    };
    let per_prb: Vec<Vec<(usize, usize)>> = (0u64..1 << units.len())
        .map(|mask| {
            (0..units.len())
                .filter(|i| mask >> i & 1 == 1)
                .flat_map(|i| units[i].iter().copied())
                .collect::<Vec<_>>()
        })
        .filter(|set| set.len() <= mb)
        .collect();
    let mut out: Vec<Allocation> = vec![Vec::new()];
    for _ in 0..ch.num_prbs() {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                per_prb.iter().map(move |set| {
                    let mut a = prefix.clone();
                    a.push(set.clone());
                    a
                })
            })
            .collect();
    }
    out
}
