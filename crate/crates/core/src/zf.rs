//! Stream decomposition and zero-forcing effective channels.
//!
//! Each user transmits stream `s` along its `s`-th right singular direction,
//! which arrives at the BS with signature `g_s = σ_s · v_s^H`. Stacking the
//! signatures of all streams selected in a PRB into `G`, the BS applies
//! `W = (G G^H)^{-1} G`, so `W G^H = I` and stream `i` sees
//! `SNR_i = P_i · E_i` with `E_i = 1 / (N0 · [(G G^H)^{-1}]_ii)`.

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;
use thiserror::Error;

use crate::channel::CMatrix;

/// A stream set is rejected when any stream keeps less than this fraction of
/// its interference-free gain after zero-forcing.
pub const ZF_EFFICIENCY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("zero-forcing is undefined for this stream combination (near-collinear signatures)")]
pub struct Infeasible;

/// Per-user stream decomposition, strongest stream first.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamBasis {
    pub singular_values: Vec<f64>,
    /// Receive signature of each stream, length `M_B`, norm `σ_s`.
    pub signatures: Vec<Vec<Complex64>>,
}

impl StreamBasis {
    pub fn num_streams(&self) -> usize {
        self.singular_values.len()
    }

    pub fn signature(&self, stream: usize) -> &[Complex64] {
        &self.signatures[stream]
    }
}

pub fn stream_basis(h: &CMatrix) -> StreamBasis {
    let svd = h.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut singular_values = Vec::with_capacity(order.len());
    let mut signatures = Vec::with_capacity(order.len());
    for k in order {
        let sigma = svd.singular_values[k];
        let row: Vec<Complex64> = v_t.row(k).iter().copied().collect();
        // v_s = conj(row); rotate so its first significant entry is real positive
        let norm: f64 = row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let phase = row
            .iter()
            .find(|z| z.norm() > 1e-12 * norm)
            .map(|z| z.conj() / z.norm())
            .unwrap_or(Complex64::new(1.0, 0.0));
        signatures.push(row.iter().map(|z| z * phase * sigma).collect());
        singular_values.push(sigma);
    }
    StreamBasis {
        singular_values,
        signatures,
    }
}

#[inline]
fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    // <a, b> = Σ a_m conj(b_m), i.e. entry of G G^H
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.im * y.re - x.re * y.im;
    }
    Complex64::new(re, im)
}

#[inline]
fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

fn gram(rows: &[&[Complex64]]) -> DMatrix<Complex64> {
    let n = rows.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = inner(rows[i], rows[j]);
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
    }
    g
}

fn check_efficiency(diag: &[f64], norms: &[f64]) -> Result<(), Infeasible> {
    for (&d, &n) in diag.iter().zip(norms) {
        if !(d.is_finite() && d > 0.0) || 1.0 / (d * n) < ZF_EFFICIENCY_FLOOR {
            return Err(Infeasible);
        }
    }
    Ok(())
}

/// Gram inverse of the streams selected in one PRB.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GramState {
    rows: Vec<Vec<Complex64>>,
    norms: Vec<f64>,
    /// Row-major `S × S` inverse of `G G^H`.
    inv: Vec<Complex64>,
}

impl GramState {
    pub fn new() -> Self {
        Self::default()
    }

    /// From-scratch construction through a Cholesky factorization.
    pub fn from_rows(rows: &[&[Complex64]]) -> Result<Self, Infeasible> {
        let n = rows.len();
        let norms: Vec<f64> = rows.iter().map(|r| norm_sqr(r)).collect();
        if norms.iter().any(|&x| !(x > 0.0)) {
            return Err(Infeasible);
        }
        let inv_m = if n == 0 {
            DMatrix::zeros(0, 0)
        } else {
            Cholesky::new(gram(rows)).ok_or(Infeasible)?.inverse()
        };
        let mut inv = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                inv.push(inv_m[(i, j)]);
            }
        }
        let state = Self {
            rows: rows.iter().map(|r| r.to_vec()).collect(),
            norms,
            inv,
        };
        check_efficiency(&state.diag(), &state.norms)?;
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<Complex64>] {
        &self.rows
    }

    fn inv_at(&self, i: usize, j: usize) -> Complex64 {
        self.inv[i * self.rows.len() + j]
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.len()).map(|i| self.inv_at(i, i).re).collect()
    }

    /// Effective channels of the current stream set.
    pub fn effective(&self, noise: f64) -> Vec<f64> {
        self.diag().into_iter().map(|d| 1.0 / (noise * d)).collect()
    }

    /// ZF receiver `W = (G G^H)^{-1} G`, one row per stream.
    pub fn receiver(&self) -> CMatrix {
        let s = self.rows.len();
        let m = self.rows.first().map_or(0, |r| r.len());
        CMatrix::from_fn(s, m, |i, col| {
            (0..s).map(|k| self.inv_at(i, k) * self.rows[k][col]).sum()
        })
    }

    /// Shared part of the bordered update: `X = Ginv · B` with
    /// `B = G · Gn^H`, and the inverse Schur complement.
    fn border(&self, new_rows: &[&[Complex64]]) -> Result<(Vec<Complex64>, DMatrix<Complex64>), Infeasible> {
        let s = self.rows.len();
        let k = new_rows.len();
        let b: Vec<Complex64> = (0..s)
            .flat_map(|i| new_rows.iter().map(move |n| (i, n)))
            .map(|(i, n)| inner(&self.rows[i], n))
            .collect();
        let mut x = vec![Complex64::new(0.0, 0.0); s * k];
        for i in 0..s {
            for j in 0..s {
                let g = self.inv_at(i, j);
                for a in 0..k {
                    x[i * k + a] += g * b[j * k + a];
                }
            }
        }
        let mut schur = gram(new_rows);
        for a in 0..k {
            for c in 0..k {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..s {
                    acc += b[i * k + a].conj() * x[i * k + c];
                }
                schur[(a, c)] -= acc;
            }
        }
        let schur_inv = if k == 1 {
            let v = schur[(0, 0)].re;
            if !(v > 0.0) {
                return Err(Infeasible);
            }
            DMatrix::from_element(1, 1, Complex64::new(1.0 / v, 0.0))
        } else {
            Cholesky::new(schur).ok_or(Infeasible)?.inverse()
        };
        Ok((x, schur_inv))
    }

    /// Diagonal of the Gram inverse after appending `new_rows`, without
    /// modifying `self`. Old streams first, then the new ones in order.
    pub fn assess(&self, new_rows: &[&[Complex64]]) -> Result<Vec<f64>, Infeasible> {
        let s = self.rows.len();
        let k = new_rows.len();
        let new_norms: Vec<f64> = new_rows.iter().map(|r| norm_sqr(r)).collect();
        if new_norms.iter().any(|&x| !(x > 0.0)) {
            return Err(Infeasible);
        }
        let (x, si) = self.border(new_rows)?;
        let mut diag = Vec::with_capacity(s + k);
        for i in 0..s {
            let mut add = 0.0;
            for a in 0..k {
                for c in 0..k {
                    add += (x[i * k + a] * si[(a, c)] * x[i * k + c].conj()).re;
                }
            }
            diag.push(self.inv_at(i, i).re + add);
        }
        for a in 0..k {
            diag.push(si[(a, a)].re);
        }
        let norms: Vec<f64> = self.norms.iter().chain(&new_norms).copied().collect();
        check_efficiency(&diag, &norms)?;
        Ok(diag)
    }

    /// Appends `new_rows` in place (bordered-Gram update).
    pub fn extend(&mut self, new_rows: &[&[Complex64]]) -> Result<(), Infeasible> {
        let diag = self.assess(new_rows)?;
        let s = self.rows.len();
        let k = new_rows.len();
        let n = s + k;
        let (x, si) = self.border(new_rows)?;
        // Y = X · Sinv  (s × k)
        let mut y = vec![Complex64::new(0.0, 0.0); s * k];
        for i in 0..s {
            for c in 0..k {
                for a in 0..k {
                    y[i * k + c] += x[i * k + a] * si[(a, c)];
                }
            }
        }
        let mut inv = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..s {
            for j in 0..s {
                let mut acc = self.inv_at(i, j);
                for c in 0..k {
                    acc += y[i * k + c] * x[j * k + c].conj();
                }
                inv[i * n + j] = acc;
            }
            for c in 0..k {
                inv[i * n + s + c] = -y[i * k + c];
                inv[(s + c) * n + i] = -y[i * k + c].conj();
            }
        }
        for a in 0..k {
            for c in 0..k {
                inv[(s + a) * n + s + c] = si[(a, c)];
            }
        }
        // keep the stored diagonal identical to the assessed one
        for (i, d) in diag.iter().enumerate() {
            inv[i * n + i] = Complex64::new(*d, 0.0);
        }
        self.inv = inv;
        self.rows.extend(new_rows.iter().map(|r| r.to_vec()));
        self.norms.extend(new_rows.iter().map(|r| norm_sqr(r)));
        Ok(())
    }
}

/// Effective channels of a stream set from scratch.
pub fn effective_channels(rows: &[&[Complex64]], noise: f64) -> Result<Vec<f64>, Infeasible> {
    Ok(GramState::from_rows(rows)?.effective(noise))
}

/// Effective channels after adding `new_rows` to an existing state.
pub fn assess_with_added_stream(
    state: &GramState,
    new_rows: &[&[Complex64]],
    noise: f64,
) -> Result<Vec<f64>, Infeasible> {
    Ok(state.assess(new_rows)?.into_iter().map(|d| 1.0 / (noise * d)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn basis_of_identity_and_diag() {
        let b = stream_basis(&CMatrix::identity(2, 2));
        assert_relative_eq!(b.singular_values[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(b.singular_values[1], 1.0, epsilon = 1e-14);
        assert!(inner(b.signature(0), b.signature(1)).norm() < 1e-14);

        let h = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(3.0, 0.0)]);
        let b = stream_basis(&h);
        assert_relative_eq!(b.singular_values[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(b.singular_values[1], 1.0, epsilon = 1e-14);
        // phase convention makes the leading entry real positive
        assert!((b.signature(0)[1] - c(3.0, 0.0)).norm() < 1e-12);
        assert!(b.signature(0)[0].norm() < 1e-12);
        assert!((b.signature(1)[0] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn single_stream_effective_channel() {
        let g = [c(1.0, 2.0), c(-0.5, 0.3)];
        let e = effective_channels(&[&g], 2.0).unwrap();
        assert_relative_eq!(e[0], norm_sqr(&g) / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn orthogonal_and_skewed_pairs() {
        let a = [c(1.0, 0.0), c(0.0, 0.0)];
        let b = [c(0.0, 0.0), c(1.0, 0.0)];
        let e = effective_channels(&[&a, &b], 1.0).unwrap();
        assert_relative_eq!(e[0], 1.0);
        assert_relative_eq!(e[1], 1.0);

        // Gram [[1, r], [r, 1]] with r = 1/√2, inverse diagonal 1/(1 − r²) = 2
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let b = [c(r, 0.0), c(r, 0.0)];
        let e = effective_channels(&[&a, &b], 1.0).unwrap();
        assert_relative_eq!(e[0], 0.5, max_relative = 1e-12);
        assert_relative_eq!(e[1], 0.5, max_relative = 1e-12);
    }

    #[test]
    fn duplicate_signature_is_infeasible() {
        let a = [c(1.0, 0.5), c(0.2, 0.0)];
        assert_eq!(effective_channels(&[&a, &a], 1.0), Err(Infeasible));
        let st = GramState::from_rows(&[&a]).unwrap();
        assert_eq!(st.assess(&[&a]), Err(Infeasible));
        let zero = [c(0.0, 0.0), c(0.0, 0.0)];
        assert_eq!(GramState::new().assess(&[&zero]), Err(Infeasible));
    }

    #[test]
    fn add_to_empty_and_orthogonal() {
        let a = [c(0.3, 0.1), c(0.0, 0.0), c(0.0, 0.0)];
        let e = assess_with_added_stream(&GramState::new(), &[&a], 1.0).unwrap();
        assert_relative_eq!(e[0], norm_sqr(&a), max_relative = 1e-14);

        let st = GramState::from_rows(&[&a]).unwrap();
        let b = [c(0.0, 0.0), c(2.0, -1.0), c(0.0, 0.0)];
        let e = assess_with_added_stream(&st, &[&b], 1.0).unwrap();
        assert_relative_eq!(e[0], norm_sqr(&a), max_relative = 1e-14);
        assert_relative_eq!(e[1], norm_sqr(&b), max_relative = 1e-14);
    }
}
