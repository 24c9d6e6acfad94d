//! Support sets and their radius function.
//!
//! For a support set `Ŝ` the radius in direction `z` is
//! `r(z) = ½ sup_{a₁,a₂ ∈ Ŝ} |a₁ᵀz − a₂ᵀz|`, half the width of the projection
//! of `Ŝ` onto `z`. It is convex and positively homogeneous in `z`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::conic::{self, ConicProgram, LinearRow, Sense, Status, ToleranceSettings};
use crate::error::{invalid, Result};
use crate::math::{dot, norm2};

/// Ellipsoid membership slack.
const ELLIPSOID_TOL: f64 = 1e-12;
/// Convex-combination residual accepted by polytope membership.
const POLYTOPE_TOL: f64 = 1e-9;

/// Axis-aligned box `lower ≤ a ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSupport {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

/// Convex hull of an enumerated vertex list.
#[derive(Debug, Clone, PartialEq)]
pub struct PolytopeSupport {
    vertices: Vec<Vec<f64>>,
}

/// Ellipsoid `(a − c)ᵀ V (a − c) ≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidSupport {
    center: Vec<f64>,
    shape: DMatrix<f64>,
    /// `L⁻¹` where `V = L Lᵀ`; `zᵀV⁻¹z = ‖L⁻¹ z‖²`.
    inv_factor: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SupportSet {
    Box(BoxSupport),
    Polytope(PolytopeSupport),
    Ellipsoid(EllipsoidSupport),
}

impl BoxSupport {
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Diagonal of `S = diag(upper − lower)`.
    pub fn widths(&self) -> Vec<f64> {
        self.upper.iter().zip(&self.lower).map(|(u, l)| u - l).collect()
    }
}

impl PolytopeSupport {
    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }
}

impl EllipsoidSupport {
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn inv_factor(&self) -> &DMatrix<f64> {
        &self.inv_factor
    }
}

impl SupportSet {
    pub fn boxed(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(invalid!("box bounds must be non-empty and of equal length"));
        }
        if lower.iter().chain(upper).any(|v| !v.is_finite()) {
            return Err(invalid!("box bounds must be finite"));
        }
        if let Some(i) = lower.iter().zip(upper).position(|(l, u)| l > u) {
            return Err(invalid!("box lower bound exceeds upper bound in coordinate {i}"));
        }
        Ok(SupportSet::Box(BoxSupport { lower: lower.to_vec(), upper: upper.to_vec() }))
    }

    pub fn polytope(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let dim = vertices.first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(invalid!("polytope needs at least one non-empty vertex"));
        }
        if vertices.iter().any(|v| v.len() != dim) {
            return Err(invalid!("polytope vertices must share one dimension"));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid!("polytope vertices must be finite"));
        }
        Ok(SupportSet::Polytope(PolytopeSupport { vertices }))
    }

    /// `shape` must be symmetric positive definite.
    pub fn ellipsoid(center: &[f64], shape: DMatrix<f64>) -> Result<Self> {
        let dim = center.len();
        if dim == 0 || shape.nrows() != dim || shape.ncols() != dim {
            return Err(invalid!("ellipsoid shape must be {dim}x{dim}"));
        }
        if center.iter().chain(shape.iter()).any(|v| !v.is_finite()) {
            return Err(invalid!("ellipsoid data must be finite"));
        }
        let scale = shape.amax().max(f64::MIN_POSITIVE);
        for i in 0..dim {
            for j in 0..i {
                if (shape[(i, j)] - shape[(j, i)]).abs() > 1e-12 * scale {
                    return Err(invalid!("ellipsoid shape matrix is not symmetric"));
                }
            }
        }
        let chol = nalgebra::Cholesky::new(shape.clone())
            .ok_or_else(|| invalid!("ellipsoid shape matrix is not positive definite"))?;
        let l = chol.l();
        let inv_factor = l
            .clone()
            .try_inverse()
            .filter(|m| m.iter().all(|v| v.is_finite()))
            .ok_or_else(|| invalid!("ellipsoid shape matrix is not positive definite"))?;
        Ok(SupportSet::Ellipsoid(EllipsoidSupport { center: center.to_vec(), shape, inv_factor }))
    }

    pub fn dim(&self) -> usize {
        match self {
            SupportSet::Box(b) => b.lower.len(),
            SupportSet::Polytope(p) => p.vertices[0].len(),
            SupportSet::Ellipsoid(e) => e.center.len(),
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(invalid!("vector has length {len}, support has dimension {}", self.dim()));
        }
        Ok(())
    }

    /// `r(z)`: half the width of the support projected onto `z`.
    pub fn radius(&self, z: &[f64]) -> Result<f64> {
        self.check_dim(z.len())?;
        Ok(match self {
            SupportSet::Box(b) => {
                0.5 * z.iter().zip(b.widths()).map(|(zi, w)| (zi * w).abs()).sum::<f64>()
            }
            SupportSet::Polytope(p) => {
                let (lo, hi) = p.vertices.iter().map(|v| dot(v, z)).fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(lo, hi), t| (lo.min(t), hi.max(t)),
                );
                0.5 * (hi - lo)
            }
            SupportSet::Ellipsoid(e) => {
                let y = &e.inv_factor * DVector::from_column_slice(z);
                norm2(y.as_slice())
            }
        })
    }

    /// Closed-set membership.
    pub fn contains(&self, a: &[f64]) -> Result<bool> {
        self.check_dim(a.len())?;
        Ok(match self {
            SupportSet::Box(b) => a.iter().zip(b.lower.iter().zip(&b.upper)).all(|(x, (l, u))| l <= x && x <= u),
            SupportSet::Ellipsoid(e) => {
                let d = DVector::from_iterator(a.len(), a.iter().zip(&e.center).map(|(x, c)| x - c));
                (d.transpose() * &e.shape * &d)[(0, 0)] <= 1.0 + ELLIPSOID_TOL
            }
            SupportSet::Polytope(p) => polytope_contains(&p.vertices, a)?,
        })
    }
}

/// Decides `a ∈ conv(vertices)` by minimising the largest coordinate residual of
/// a convex combination: `min t  s.t. −t ≤ (Σ wₖvₖ − a)ᵢ ≤ t, Σ wₖ = 1, w ≥ 0`.
fn polytope_contains(vertices: &[Vec<f64>], a: &[f64]) -> Result<bool> {
    let m = vertices.len();
    if vertices.iter().any(|v| v.as_slice() == a) {
        return Ok(true);
    }
    if m == 1 {
        return Ok(vertices[0].iter().zip(a).all(|(v, x)| (v - x).abs() <= POLYTOPE_TOL));
    }
    let scale = 1.0 + a.iter().chain(vertices.iter().flatten()).fold(0.0_f64, |s, v| s.max(v.abs()));
    let t = m;
    let mut prog = ConicProgram::new(m + 1);
    prog.set_objective(Sense::Minimize, {
        let mut c = alloc::vec![0.0; m + 1];
        c[t] = 1.0;
        c
    });
    for i in 0..a.len() {
        let mut up = alloc::vec![0.0; m + 1];
        let mut down = alloc::vec![0.0; m + 1];
        for (k, v) in vertices.iter().enumerate() {
            up[k] = v[i] / scale;
            down[k] = -v[i] / scale;
        }
        up[t] = -1.0;
        down[t] = -1.0;
        prog.add_linear(LinearRow::less_eq(up, -a[i] / scale));
        prog.add_linear(LinearRow::less_eq(down, a[i] / scale));
    }
    let mut simplex = alloc::vec![1.0; m + 1];
    simplex[t] = 0.0;
    prog.add_linear(LinearRow::equal(simplex, -1.0));
    for k in 0..m {
        prog.set_lower_bound(k, 0.0);
    }
    let tol = ToleranceSettings { feasibility: 1e-11, optimality: 1e-11, max_iterations: 200 };
    let sol = conic::solve(&prog, &tol)?;
    match sol.status {
        Status::Optimal | Status::IterationLimit => Ok(sol.x[t] * scale <= POLYTOPE_TOL),
        _ => Err(invalid!("polytope membership solve failed ({:?})", sol.status)),
    }
}
