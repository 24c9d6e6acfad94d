//! Algebra of the product cone `ℝ₊ˡ × Q^{q₁} × … × Q^{qₖ}`.
//!
//! Vectors are laid out with the nonnegative orthant first, then each
//! second-order cone block `(u₀, u₁)` with `u₀ ≥ ‖u₁‖`.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{dot, norm2, sqrt};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConeDims {
    pub nonneg: usize,
    pub soc: Vec<usize>,
}

impl ConeDims {
    pub fn total(&self) -> usize {
        self.nonneg + self.soc.iter().sum::<usize>()
    }

    /// Degree of the cone (number of "eigenvalues" of the identity).
    pub fn degree(&self) -> usize {
        self.nonneg + self.soc.len()
    }

    fn soc_ranges(&self) -> impl Iterator<Item = core::ops::Range<usize>> + '_ {
        let mut start = self.nonneg;
        self.soc.iter().map(move |&q| {
            let r = start..start + q;
            start += q;
            r
        })
    }

    pub fn identity(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.total()];
        e[..self.nonneg].iter_mut().for_each(|v| *v = 1.0);
        for r in self.soc_ranges() {
            e[r.start] = 1.0;
        }
        e
    }

    /// Smallest "eigenvalue" of `u`; `u` is interior iff this is positive.
    pub fn min_eig(&self, u: &[f64]) -> f64 {
        let mut m = f64::INFINITY;
        for &v in &u[..self.nonneg] {
            m = m.min(v);
        }
        for r in self.soc_ranges() {
            let b = &u[r];
            m = m.min(b[0] - norm2(&b[1..]));
        }
        m
    }

    /// Jordan product `u ∘ v`.
    pub fn circ(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for i in 0..self.nonneg {
            out[i] = u[i] * v[i];
        }
        for r in self.soc_ranges() {
            let (ub, vb) = (&u[r.clone()], &v[r.clone()]);
            out[r.start] = dot(ub, vb);
            for k in 1..ub.len() {
                out[r.start + k] = ub[0] * vb[k] + vb[0] * ub[k];
            }
        }
        out
    }

    /// Solves `λ ∘ x = d` for `x`; `λ` must be interior.
    pub fn inv_circ(&self, lambda: &[f64], d: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; d.len()];
        for i in 0..self.nonneg {
            out[i] = d[i] / lambda[i];
        }
        for r in self.soc_ranges() {
            let (l, db) = (&lambda[r.clone()], &d[r.clone()]);
            let det = l[0] * l[0] - dot(&l[1..], &l[1..]);
            let x0 = (l[0] * db[0] - dot(&l[1..], &db[1..])) / det;
            out[r.start] = x0;
            for k in 1..l.len() {
                out[r.start + k] = (db[k] - x0 * l[k]) / l[0];
            }
        }
        out
    }

    /// Largest `α ≤ cap` with `u + α du` in the cone (`u` interior).
    pub fn max_step(&self, u: &[f64], du: &[f64], cap: f64) -> f64 {
        let mut alpha = cap;
        for i in 0..self.nonneg {
            if du[i] < 0.0 {
                alpha = alpha.min(-u[i] / du[i]);
            }
        }
        for r in self.soc_ranges() {
            let (ub, db) = (&u[r.clone()], &du[r.clone()]);
            // f(α) = (u₀+αd₀)² − ‖u₁+αd₁‖² = aα² + 2bα + c with c > 0
            let a = db[0] * db[0] - dot(&db[1..], &db[1..]);
            let b = ub[0] * db[0] - dot(&ub[1..], &db[1..]);
            let c = (ub[0] * ub[0] - dot(&ub[1..], &ub[1..])).max(0.0);
            let disc = b * b - a * c;
            if a < 0.0 || (b < 0.0 && disc >= 0.0) {
                let denom = -b + sqrt(disc.max(0.0));
                if denom > 0.0 {
                    alpha = alpha.min(c / denom);
                } else {
                    alpha = 0.0;
                }
            }
            if db[0] < 0.0 {
                alpha = alpha.min(-ub[0] / db[0]);
            }
        }
        alpha.max(0.0)
    }
}

/// Nesterov–Todd scaling `W` with `W z = W⁻¹ s = λ`; `W` is symmetric.
#[derive(Debug, Clone)]
pub(crate) struct NtScaling {
    /// Orthant part: `W = diag(√(sᵢ/zᵢ))`.
    diag: Vec<f64>,
    /// Per SOC block: `(η, w̄)` with `w̄ᵀJw̄ = 1`.
    soc: Vec<(f64, Vec<f64>)>,
    dims: ConeDims,
}

impl NtScaling {
    /// `s`, `z` must be strictly interior.
    pub fn new(dims: &ConeDims, s: &[f64], z: &[f64]) -> Self {
        let diag = (0..dims.nonneg).map(|i| sqrt(s[i] / z[i])).collect();
        let soc = dims
            .soc_ranges()
            .map(|r| {
                let (sb, zb) = (&s[r.clone()], &z[r.clone()]);
                let s_res = sqrt((sb[0] - norm2(&sb[1..])) * (sb[0] + norm2(&sb[1..])));
                let z_res = sqrt((zb[0] - norm2(&zb[1..])) * (zb[0] + norm2(&zb[1..])));
                let sbar: Vec<f64> = sb.iter().map(|v| v / s_res).collect();
                let zbar: Vec<f64> = zb.iter().map(|v| v / z_res).collect();
                let gamma = sqrt(0.5 * (1.0 + dot(&sbar, &zbar)));
                let mut w: Vec<f64> = vec![0.0; sb.len()];
                w[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
                for k in 1..sb.len() {
                    w[k] = (sbar[k] - zbar[k]) / (2.0 * gamma);
                }
                (sqrt(s_res / z_res), w)
            })
            .collect();
        Self { diag, soc, dims: dims.clone() }
    }

    fn apply_impl(&self, v: &[f64], inverse: bool) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for i in 0..self.dims.nonneg {
            out[i] = if inverse { v[i] / self.diag[i] } else { v[i] * self.diag[i] };
        }
        for (r, (eta, w)) in self.dims.soc_ranges().zip(&self.soc) {
            let vb = &v[r.clone()];
            let sign = if inverse { -1.0 } else { 1.0 };
            let scale = if inverse { 1.0 / eta } else { *eta };
            let w1v1 = dot(&w[1..], &vb[1..]);
            out[r.start] = scale * (w[0] * vb[0] + sign * w1v1);
            let coef = sign * vb[0] + w1v1 / (1.0 + w[0]);
            for k in 1..vb.len() {
                out[r.start + k] = scale * (vb[k] + coef * w[k]);
            }
        }
        out
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.apply_impl(v, false)
    }

    pub fn apply_inv(&self, v: &[f64]) -> Vec<f64> {
        self.apply_impl(v, true)
    }
}
