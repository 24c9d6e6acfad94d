//! Deterministic surrogate constraints for `Pr(aᵀ(Mx) + d ≤ 0) ≥ 1 − α`.
//!
//! Every method reduces to one collapsed scalar inequality over `z = Mx`:
//!
//! ```text
//! g(z) = μᵀz + d + a_r·r(z) + b·√(‖Fᵀz‖² + c_r·r(z)²) ≤ 0
//! ```
//!
//! where `FFᵀ` is the covariance (or squared standard deviations) in use and
//! `r` the support radius. The blocks encode `g` with auxiliary variables:
//!
//! - `y₁ ≥ ‖FᵀMx‖` and `y₂ ≥ √c_r·r(Mx)`, with the main row `‖b·y‖ ≤ −μᵀMx − d − a_r·r`,
//! - box supports lift `r` with `tᵢ ≥ ±(S M x)ᵢ`, `r = ½Σtᵢ`,
//! - vertex polytopes with `l ≤ vₖᵀMx ≤ u`, `r = ½(u − l)`,
//! - ellipsoids with one cone row `‖L⁻¹Mx‖ ≤ ρ`, `r = ρ`.
//!
//! Terms whose coefficient is zero are left out, so a data-driven block with
//! `κ = 1`, `φ = 0` is structurally identical to its known-moment counterpart.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::conic::{self, ConicProgram, LinearRow, Sense, SocRow, Solution, Status, ToleranceSettings};
use crate::error::{invalid, Error, Result};
use crate::math::{ln, norm2, sqrt};
use crate::moments::{Covariance, CovarianceMode, MomentState, Moments};
use crate::schedules::{self, general_constant, Method, ScheduleResult};
use crate::support::SupportSet;

/// `Pr(aᵀ(Mx) + d ≤ 0) ≥ 1 − α` with `M` of shape `random_dim × decision_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChanceSpec {
    map: DMatrix<f64>,
    offset: f64,
    alpha: f64,
}

impl ChanceSpec {
    pub fn new(map: DMatrix<f64>, offset: f64, alpha: f64) -> Result<Self> {
        if map.nrows() == 0 || map.ncols() == 0 {
            return Err(invalid!("chance map must be non-empty"));
        }
        if map.iter().any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(invalid!("chance map and offset must be finite"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid!("alpha must lie in (0, 1), got {alpha}"));
        }
        Ok(Self { map, offset, alpha })
    }

    /// `M = I`.
    pub fn identity(dim: usize, offset: f64, alpha: f64) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim), offset, alpha)
    }

    pub fn map(&self) -> &DMatrix<f64> {
        &self.map
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn random_dim(&self) -> usize {
        self.map.nrows()
    }

    pub fn decision_dim(&self) -> usize {
        self.map.ncols()
    }

    pub fn with_offset(&self, offset: f64) -> Self {
        Self { offset, ..self.clone() }
    }

    /// `z = Mx`.
    pub fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.decision_dim() {
            return Err(invalid!("decision has length {}, expected {}", x.len(), self.decision_dim()));
        }
        Ok((&self.map * DVector::from_column_slice(x)).iter().copied().collect())
    }

    /// Coefficients over `x` of `wᵀMx`.
    fn pull_back(&self, w: &[f64]) -> Vec<f64> {
        (0..self.decision_dim())
            .map(|j| w.iter().enumerate().map(|(i, wi)| wi * self.map[(i, j)]).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateKind {
    /// Known mean and covariance.
    Known,
    /// Sample moments substituted into the known-moment form.
    Plugin,
    /// Sample moments with covariance schedule coefficients.
    Thm1,
    /// Confidence-region constraint at a fixed violation probability `δ`.
    FixedDelta,
    /// Sample mean with independent support intervals.
    IndMean,
    /// Sample mean and variances with independent support intervals.
    IndVar,
    /// Known mean with independent support intervals.
    KnownIndMean,
    /// Known mean and variances of independent coordinates.
    KnownIndVar,
}

/// Meaning of an auxiliary variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxRole {
    /// `y₁ ≥ ‖FᵀMx‖`.
    NormVariance,
    /// `y₂ ≥ √c_r·r(Mx)`.
    NormRadius,
    /// `tᵢ ≥ |(S M x)ᵢ|`.
    AbsProjection(usize),
    /// `u ≥ vₖᵀMx` for every vertex.
    EnvelopeUpper,
    /// `l ≤ vₖᵀMx` for every vertex.
    EnvelopeLower,
    /// `ρ ≥ ‖L⁻¹Mx‖`.
    EllipsoidRadius,
}

/// Coefficients of the collapsed inequality `g(z) ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapsedForm {
    pub mean: Vec<f64>,
    pub offset: f64,
    pub radius_coef: f64,
    pub norm_coef: f64,
    pub radius_in_norm: f64,
    /// Columns `F` with `FFᵀ` the dispersion matrix; zero columns are dropped.
    pub factor: DMatrix<f64>,
}

/// Linear and cone rows over `[x; aux]` encoding one surrogate constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateBlocks {
    kind: SurrogateKind,
    spec: ChanceSpec,
    support: Option<SupportSet>,
    form: CollapsedForm,
    aux: Vec<AuxRole>,
    linear: Vec<LinearRow>,
    cones: Vec<SocRow>,
}

fn unit(len: usize, at: usize, value: f64) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[at] = value;
    v
}

impl SurrogateBlocks {
    fn assemble(kind: SurrogateKind, spec: &ChanceSpec, support: Option<SupportSet>, form: CollapsedForm) -> Self {
        let n = spec.decision_dim();
        let k = spec.random_dim();
        let mut aux = Vec::new();
        let mut linear = Vec::new();
        let mut cones = Vec::new();
        let with_var = |coeffs: &[f64], var: usize, value: f64| {
            let mut c = coeffs.to_vec();
            c.resize(c.len().max(var + 1), 0.0);
            c[var] += value;
            c
        };

        // r(Mx) as Σ wⱼ·auxⱼ
        let mut radius_terms: Vec<(usize, f64)> = Vec::new();
        let needs_radius = form.radius_coef != 0.0 || (form.norm_coef != 0.0 && form.radius_in_norm > 0.0);
        if let (true, Some(set)) = (needs_radius, support.as_ref()) {
            match set {
                SupportSet::Box(b) => {
                    for (i, w) in b.widths().into_iter().enumerate() {
                        let t = n + aux.len();
                        aux.push(AuxRole::AbsProjection(i));
                        let row = spec.pull_back(&unit(k, i, w));
                        let neg: Vec<f64> = row.iter().map(|v| -v).collect();
                        linear.push(LinearRow::less_eq(with_var(&row, t, -1.0), 0.0));
                        linear.push(LinearRow::less_eq(with_var(&neg, t, -1.0), 0.0));
                        radius_terms.push((t, 0.5));
                    }
                }
                SupportSet::Polytope(p) => {
                    let (u, l) = (n + aux.len(), n + aux.len() + 1);
                    aux.push(AuxRole::EnvelopeUpper);
                    aux.push(AuxRole::EnvelopeLower);
                    for v in p.vertices() {
                        let row = spec.pull_back(v);
                        let neg: Vec<f64> = row.iter().map(|c| -c).collect();
                        linear.push(LinearRow::less_eq(with_var(&row, u, -1.0), 0.0));
                        linear.push(LinearRow::less_eq(with_var(&neg, l, 1.0), 0.0));
                    }
                    radius_terms.push((u, 0.5));
                    radius_terms.push((l, -0.5));
                }
                SupportSet::Ellipsoid(e) => {
                    let rho = n + aux.len();
                    aux.push(AuxRole::EllipsoidRadius);
                    let inv = e.inv_factor();
                    let rows =
                        (0..k).map(|i| spec.pull_back(&inv.row(i).iter().copied().collect::<Vec<f64>>())).collect();
                    cones.push(SocRow { a: rows, b: vec![0.0; k], c: unit(rho + 1, rho, 1.0), e: 0.0 });
                    radius_terms.push((rho, 1.0));
                }
            }
        }

        let mut norm_vars = Vec::new();
        if form.norm_coef != 0.0 && form.factor.ncols() > 0 {
            let y1 = n + aux.len();
            aux.push(AuxRole::NormVariance);
            let rows: Vec<Vec<f64>> = form
                .factor
                .column_iter()
                .map(|col| spec.pull_back(&col.iter().copied().collect::<Vec<f64>>()))
                .collect();
            let len = rows.len();
            cones.push(SocRow { a: rows, b: vec![0.0; len], c: unit(y1 + 1, y1, 1.0), e: 0.0 });
            norm_vars.push(y1);
        }
        if form.norm_coef != 0.0 && form.radius_in_norm > 0.0 {
            let y2 = n + aux.len();
            aux.push(AuxRole::NormRadius);
            let s = sqrt(form.radius_in_norm);
            let mut row = vec![0.0; y2 + 1];
            for &(var, w) in &radius_terms {
                row[var] += s * w;
            }
            row[y2] = -1.0;
            linear.push(LinearRow::less_eq(row, 0.0));
            norm_vars.push(y2);
        }

        let total = n + aux.len();
        let mut main = spec.pull_back(&form.mean);
        main.resize(total, 0.0);
        for &(var, w) in &radius_terms {
            main[var] += form.radius_coef * w;
        }
        if norm_vars.is_empty() {
            linear.insert(0, LinearRow::less_eq(main, form.offset));
        } else {
            let rows = norm_vars.iter().map(|&v| unit(total, v, form.norm_coef)).collect();
            let c = main.iter().map(|v| -v).collect();
            cones.insert(0, SocRow { a: rows, b: vec![0.0; norm_vars.len()], c, e: -form.offset });
        }
        Self { kind, spec: spec.clone(), support, form, aux, linear, cones }
    }

    pub fn kind(&self) -> SurrogateKind {
        self.kind
    }

    pub fn spec(&self) -> &ChanceSpec {
        &self.spec
    }

    pub fn support(&self) -> Option<&SupportSet> {
        self.support.as_ref()
    }

    pub fn form(&self) -> &CollapsedForm {
        &self.form
    }

    pub fn decision_dim(&self) -> usize {
        self.spec.decision_dim()
    }

    pub fn aux_roles(&self) -> &[AuxRole] {
        &self.aux
    }

    /// Decision plus auxiliary variable count.
    pub fn num_vars(&self) -> usize {
        self.decision_dim() + self.aux.len()
    }

    pub fn linear_rows(&self) -> &[LinearRow] {
        &self.linear
    }

    pub fn cone_rows(&self) -> &[SocRow] {
        &self.cones
    }

    fn radius_of(&self, z: &[f64]) -> Result<f64> {
        match &self.support {
            Some(s) => s.radius(z),
            None => Ok(0.0),
        }
    }

    /// `g(Mx)`; the constraint holds iff this is `≤ 0`.
    pub fn scalar_value(&self, x: &[f64]) -> Result<f64> {
        let z = self.spec.lift(x)?;
        let f = &self.form;
        let r = self.radius_of(&z)?;
        let proj: Vec<f64> = f.factor.column_iter().map(|c| c.iter().zip(&z).map(|(a, b)| a * b).sum()).collect();
        let var = norm2(&proj);
        let dispersion = sqrt(var * var + f.radius_in_norm * r * r);
        let mean: f64 = f.mean.iter().zip(&z).map(|(a, b)| a * b).sum();
        Ok(mean + f.offset + f.radius_coef * r + f.norm_coef * dispersion)
    }

    /// `[x; aux]` with every auxiliary variable at its smallest feasible value.
    pub fn complete(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.spec.lift(x)?;
        let mut out = x.to_vec();
        let r = self.radius_of(&z)?;
        for role in &self.aux {
            let value = match (*role, self.support.as_ref()) {
                (AuxRole::AbsProjection(i), Some(SupportSet::Box(b))) => (b.widths()[i] * z[i]).abs(),
                (AuxRole::EnvelopeUpper, Some(SupportSet::Polytope(p))) => {
                    p.vertices().iter().map(|v| crate::math::dot(v, &z)).fold(f64::NEG_INFINITY, f64::max)
                }
                (AuxRole::EnvelopeLower, Some(SupportSet::Polytope(p))) => {
                    p.vertices().iter().map(|v| crate::math::dot(v, &z)).fold(f64::INFINITY, f64::min)
                }
                (AuxRole::EllipsoidRadius, _) => r,
                (AuxRole::NormVariance, _) => {
                    let proj: Vec<f64> =
                        self.form.factor.column_iter().map(|c| c.iter().zip(&z).map(|(a, b)| a * b).sum()).collect();
                    norm2(&proj)
                }
                (AuxRole::NormRadius, _) => sqrt(self.form.radius_in_norm) * r,
                _ => return Err(invalid!("auxiliary role {role:?} does not match the support")),
            };
            out.push(value);
        }
        Ok(out)
    }

    /// Program over `[x; aux]` holding only these rows and a zero objective.
    pub fn to_program(&self) -> ConicProgram {
        let mut prog = ConicProgram::new(self.decision_dim());
        self.append_to(&mut prog).expect("program has the decision variables");
        prog
    }

    /// Adds the rows to `prog`, whose first `decision_dim` variables are `x`;
    /// auxiliary variables are appended. Returns the index of the first one.
    pub fn append_to(&self, prog: &mut ConicProgram) -> Result<usize> {
        let n = self.decision_dim();
        if prog.num_vars() < n {
            return Err(invalid!("program has {} variables, blocks need {n} decision variables", prog.num_vars()));
        }
        let first = prog.add_variables(self.aux.len());
        let remap = |coeffs: &[f64]| {
            let mut out = vec![0.0; first + self.aux.len()];
            for (j, c) in coeffs.iter().enumerate() {
                out[if j < n { j } else { first + j - n }] = *c;
            }
            out
        };
        for row in &self.linear {
            prog.add_linear(LinearRow { coeffs: remap(&row.coeffs), ..row.clone() });
        }
        for cone in &self.cones {
            prog.add_cone(SocRow {
                a: cone.a.iter().map(|r| remap(r)).collect(),
                b: cone.b.clone(),
                c: remap(&cone.c),
                e: cone.e,
            });
        }
        Ok(first)
    }
}

/// `F` with `FFᵀ = Σ`, from the eigendecomposition with negative eigenvalues clipped.
pub fn psd_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = sigma.nrows();
    if sigma.ncols() != k || k == 0 {
        return Err(invalid!("covariance must be square and non-empty"));
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(invalid!("covariance must be finite"));
    }
    let scale = sigma.amax().max(1.0);
    for i in 0..k {
        for j in 0..i {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-10 * scale {
                return Err(invalid!("covariance is not symmetric"));
            }
        }
    }
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-10 * scale {
        return Err(invalid!("covariance is not positive semidefinite (eigenvalue {min})"));
    }
    let cols: Vec<DVector<f64>> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, l)| **l > 0.0)
        .map(|(i, l)| eig.eigenvectors.column(i) * sqrt(*l))
        .collect();
    Ok(if cols.is_empty() { DMatrix::zeros(k, 0) } else { DMatrix::from_columns(&cols) })
}

fn diagonal_factor(std_devs: &[f64]) -> DMatrix<f64> {
    let k = std_devs.len();
    let cols: Vec<DVector<f64>> = std_devs
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > 0.0)
        .map(|(i, s)| DVector::from_fn(k, |r, _| if r == i { *s } else { 0.0 }))
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(k, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

fn check_vec(name: &str, v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(invalid!("{name} has length {}, expected {dim}", v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid!("{name} must be finite"));
    }
    Ok(())
}

fn check_support(support: &SupportSet, spec: &ChanceSpec) -> Result<()> {
    if support.dim() != spec.random_dim() {
        return Err(invalid!("support has dimension {}, expected {}", support.dim(), spec.random_dim()));
    }
    Ok(())
}

fn check_box(support: &SupportSet, spec: &ChanceSpec) -> Result<()> {
    check_support(support, spec)?;
    match support {
        SupportSet::Box(_) => Ok(()),
        _ => Err(invalid!("independent surrogates require a box support")),
    }
}

fn moments_of(state: &MomentState, spec: &ChanceSpec) -> Result<Moments> {
    if state.dim() != spec.random_dim() {
        return Err(invalid!("moment state has dimension {}, expected {}", state.dim(), spec.random_dim()));
    }
    state.extract()
}

fn check_schedule(sched: &ScheduleResult, state: &MomentState, spec: &ChanceSpec, allowed: &[Method]) -> Result<()> {
    let tag_ok = allowed.iter().any(|m| core::mem::discriminant(m) == core::mem::discriminant(&sched.method));
    if !tag_ok {
        return Err(invalid!("schedule {:?} does not apply to this surrogate", sched.method));
    }
    if (sched.alpha - spec.alpha).abs() > 1e-15 * spec.alpha.max(1.0) {
        return Err(invalid!("schedule alpha {} differs from constraint alpha {}", sched.alpha, spec.alpha));
    }
    if sched.n != state.count() {
        return Err(invalid!("schedule is for N = {}, state holds {} samples", sched.n, state.count()));
    }
    if !sched.feasible {
        return Err(Error::NotEnoughSamples(alloc::format!(
            "schedule {:?} is infeasible at N = {}",
            sched.method,
            sched.n
        )));
    }
    Ok(())
}

/// `μᵀz + d + √((1−α)/α)·√(zᵀΣz) ≤ 0`.
pub fn build_known(mu: &[f64], sigma: &DMatrix<f64>, spec: &ChanceSpec) -> Result<SurrogateBlocks> {
    check_vec("mean", mu, spec.random_dim())?;
    if sigma.nrows() != spec.random_dim() {
        return Err(invalid!("covariance has dimension {}, expected {}", sigma.nrows(), spec.random_dim()));
    }
    let form = CollapsedForm {
        mean: mu.to_vec(),
        offset: spec.offset,
        radius_coef: 0.0,
        norm_coef: general_constant(spec.alpha),
        radius_in_norm: 0.0,
        factor: psd_factor(sigma)?,
    };
    Ok(SurrogateBlocks::assemble(SurrogateKind::Known, spec, None, form))
}

fn full_covariance(m: &Moments) -> Result<&DMatrix<f64>> {
    match &m.covariance {
        Covariance::Full(s) => Ok(s),
        Covariance::Diagonal(_) => Err(invalid!("this surrogate needs a full-covariance moment state")),
    }
}

/// [`build_known`] with the sample moments.
pub fn build_plugin(state: &MomentState, spec: &ChanceSpec) -> Result<SurrogateBlocks> {
    let m = moments_of(state, spec)?;
    let mut blocks = build_known(m.mean.as_slice(), full_covariance(&m)?, spec)?;
    blocks.kind = SurrogateKind::Plugin;
    Ok(blocks)
}

/// `μ̂ᵀz + d + φ·r(z) + κ√((1−α)/α)·‖y‖ ≤ 0`, `‖Σ̂^½z‖ ≤ y₁`, `√(2φ)·r(z) ≤ y₂`.
pub fn build_thm1(
    state: &MomentState,
    support: &SupportSet,
    spec: &ChanceSpec,
    sched: &ScheduleResult,
) -> Result<SurrogateBlocks> {
    check_support(support, spec)?;
    check_schedule(sched, state, spec, &[Method::Thm1 { p: 3.0 }, Method::Cor1])?;
    let m = moments_of(state, spec)?;
    let kappa = sched.kappa.ok_or_else(|| Error::NotEnoughSamples(alloc::format!("schedule has no kappa")))?;
    let form = CollapsedForm {
        mean: m.mean.iter().copied().collect(),
        offset: spec.offset,
        radius_coef: sched.phi,
        norm_coef: kappa * general_constant(spec.alpha),
        radius_in_norm: 2.0 * sched.phi,
        factor: psd_factor(full_covariance(&m)?)?,
    };
    Ok(SurrogateBlocks::assemble(SurrogateKind::Thm1, spec, Some(support.clone()), form))
}

/// Confidence-region constraint at violation probability `δ < α`:
/// `μ̂ᵀz + d + (r/√N)c₂ + √((1−α)/(α−δ))·√(zᵀΣ̂z + (2r²/√N)c₄) ≤ 0`
/// with `c_x = 2 + √(2 ln(x/δ))`. `widened` uses `c₄` in the mean term too.
pub fn build_fixed_delta(
    state: &MomentState,
    support: &SupportSet,
    spec: &ChanceSpec,
    delta: f64,
    widened: bool,
) -> Result<SurrogateBlocks> {
    check_support(support, spec)?;
    if !(delta > 0.0 && delta < spec.alpha) {
        return Err(invalid!("delta must lie in (0, alpha), got {delta}"));
    }
    let m = moments_of(state, spec)?;
    let bounds = schedules::confidence_bounds(1.0, m.count, delta)?;
    if !bounds.condition_met {
        return Err(Error::NotEnoughSamples(alloc::format!(
            "N = {} is below the confidence-region minimum for delta = {delta}",
            m.count
        )));
    }
    let radius_coef = if widened { bounds.covariance / 2.0 } else { bounds.mean };
    let form = CollapsedForm {
        mean: m.mean.iter().copied().collect(),
        offset: spec.offset,
        radius_coef,
        norm_coef: sqrt((1.0 - spec.alpha) / (spec.alpha - delta)),
        radius_in_norm: bounds.covariance,
        factor: psd_factor(full_covariance(&m)?)?,
    };
    Ok(SurrogateBlocks::assemble(SurrogateKind::FixedDelta, spec, Some(support.clone()), form))
}

/// `√(½ ln(1/α) + ν)`.
fn independent_constant(alpha: f64, nu: f64) -> f64 {
    sqrt(0.5 * ln(1.0 / alpha) + nu)
}

/// `μ̂ᵀz + d + (½φ + √(½ ln(1/α) + ν))·‖Sz‖₁ ≤ 0`.
pub fn build_ind_mean(
    state: &MomentState,
    support: &SupportSet,
    spec: &ChanceSpec,
    sched: &ScheduleResult,
) -> Result<SurrogateBlocks> {
    check_box(support, spec)?;
    check_schedule(sched, state, spec, &[Method::Prop2 { p: 1.0 }, Method::Cor2])?;
    let m = moments_of(state, spec)?;
    let nu = sched.nu.ok_or_else(|| Error::NotEnoughSamples(alloc::format!("schedule has no nu")))?;
    // ‖Sz‖₁ = 2 r(z)
    let form = CollapsedForm {
        mean: m.mean.iter().copied().collect(),
        offset: spec.offset,
        radius_coef: sched.phi + 2.0 * independent_constant(spec.alpha, nu),
        norm_coef: 0.0,
        radius_in_norm: 0.0,
        factor: DMatrix::zeros(spec.random_dim(), 0),
    };
    Ok(SurrogateBlocks::assemble(SurrogateKind::IndMean, spec, Some(support.clone()), form))
}

/// `μ̂ᵀz + d + ½φ‖Sz‖₁ + κ√((1−α)/α)·‖y‖ ≤ 0`, `‖D̂z‖ ≤ y₁`, `√(½φ)‖Sz‖₁ ≤ y₂`.
/// `D̂` is taken from the diagonal of the state's covariance in either mode.
pub fn build_ind_var(
    state: &MomentState,
    support: &SupportSet,
    spec: &ChanceSpec,
    sched: &ScheduleResult,
) -> Result<SurrogateBlocks> {
    check_box(support, spec)?;
    check_schedule(sched, state, spec, &[Method::Prop3 { p: 3.0 }, Method::Cor3])?;
    let m = moments_of(state, spec)?;
    let kappa = sched.kappa.ok_or_else(|| Error::NotEnoughSamples(alloc::format!("schedule has no kappa")))?;
    let std_devs: Vec<f64> = m.covariance.to_matrix().diagonal().iter().map(|v| sqrt(v.max(0.0))).collect();
    let form = CollapsedForm {
        mean: m.mean.iter().copied().collect(),
        offset: spec.offset,
        radius_coef: sched.phi,
        norm_coef: kappa * general_constant(spec.alpha),
        radius_in_norm: 2.0 * sched.phi,
        factor: diagonal_factor(&std_devs),
    };
    Ok(SurrogateBlocks::assemble(SurrogateKind::IndVar, spec, Some(support.clone()), form))
}

/// Norm applied to `Sz` in [`build_known_ind_mean`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxNorm {
    /// `‖Sz‖₁`, the limit of [`build_ind_mean`].
    L1,
    /// `‖Sz‖₂`, tighter.
    L2,
}

/// `μᵀz + d + √(½ ln(1/α))·‖Sz‖ ≤ 0` with `S` the box widths.
pub fn build_known_ind_mean(
    mu: &[f64],
    support: &SupportSet,
    spec: &ChanceSpec,
    norm: BoxNorm,
) -> Result<SurrogateBlocks> {
    check_box(support, spec)?;
    check_vec("mean", mu, spec.random_dim())?;
    let c = independent_constant(spec.alpha, 0.0);
    let form = match (norm, support) {
        (BoxNorm::L1, _) => CollapsedForm {
            mean: mu.to_vec(),
            offset: spec.offset,
            radius_coef: 2.0 * c,
            norm_coef: 0.0,
            radius_in_norm: 0.0,
            factor: DMatrix::zeros(spec.random_dim(), 0),
        },
        (BoxNorm::L2, SupportSet::Box(b)) => CollapsedForm {
            mean: mu.to_vec(),
            offset: spec.offset,
            radius_coef: 0.0,
            norm_coef: c,
            radius_in_norm: 0.0,
            factor: diagonal_factor(&b.widths()),
        },
        _ => unreachable!("checked above"),
    };
    let support = (norm == BoxNorm::L1).then(|| support.clone());
    Ok(SurrogateBlocks::assemble(SurrogateKind::KnownIndMean, spec, support, form))
}

/// `μᵀz + d + √((1−α)/α)·‖Dz‖ ≤ 0` with `D = diag(σ)`.
pub fn build_known_ind_var(mu: &[f64], variances: &[f64], spec: &ChanceSpec) -> Result<SurrogateBlocks> {
    check_vec("mean", mu, spec.random_dim())?;
    check_vec("variances", variances, spec.random_dim())?;
    if variances.iter().any(|v| *v < 0.0) {
        return Err(invalid!("variances must be nonnegative"));
    }
    let std_devs: Vec<f64> = variances.iter().map(|v| sqrt(*v)).collect();
    let form = CollapsedForm {
        mean: mu.to_vec(),
        offset: spec.offset,
        radius_coef: 0.0,
        norm_coef: general_constant(spec.alpha),
        radius_in_norm: 0.0,
        factor: diagonal_factor(&std_devs),
    };
    Ok(SurrogateBlocks::assemble(SurrogateKind::KnownIndVar, spec, None, form))
}

/// Outcome of [`best_of_both`].
#[derive(Debug, Clone, PartialEq)]
pub struct BestOfBoth {
    pub blocks: SurrogateBlocks,
    pub solution: Solution,
    /// Optimal objective of each surrogate that could be built and solved.
    pub ind_mean_objective: Option<f64>,
    pub ind_var_objective: Option<f64>,
}

/// Solves `base` with the independent-mean and the independent-variance
/// surrogates (auto-exponent schedules at the state's `N`)
/// and keeps whichever reaches the better objective.
pub fn best_of_both(
    state: &MomentState,
    support: &SupportSet,
    spec: &ChanceSpec,
    base: &ConicProgram,
    tol: &ToleranceSettings,
) -> Result<BestOfBoth> {
    let n = state.count();
    if n < 2 {
        return Err(Error::NotEnoughSamples(alloc::format!("independent surrogates need N >= 2, got {n}")));
    }
    let solve_with = |blocks: SurrogateBlocks| -> Result<(SurrogateBlocks, Solution)> {
        let mut prog = base.clone();
        blocks.append_to(&mut prog)?;
        let sol = conic::solve(&prog, tol)?;
        Ok((blocks, sol))
    };
    let mean_sched = schedules::cor2(n, spec.alpha)?;
    let (mean_blocks, mean_sol) = solve_with(build_ind_mean(state, support, spec, &mean_sched)?)?;
    let var_sched = schedules::cor3(n, spec.alpha)?;
    let var = if var_sched.feasible {
        Some(solve_with(build_ind_var(state, support, spec, &var_sched)?)?)
    } else {
        None
    };
    let optimal = |s: &Solution| (s.status == Status::Optimal).then_some(s.objective);
    let ind_mean_objective = optimal(&mean_sol);
    let ind_var_objective = var.as_ref().and_then(|(_, s)| optimal(s));
    let var_better = match (ind_mean_objective, ind_var_objective) {
        (_, None) => false,
        (None, Some(_)) => true,
        (Some(a), Some(b)) => match base.sense() {
            Sense::Maximize => b > a,
            Sense::Minimize => b < a,
        },
    };
    let (blocks, solution) = match var {
        Some(v) if var_better => v,
        _ => (mean_blocks, mean_sol),
    };
    Ok(BestOfBoth { blocks, solution, ind_mean_objective, ind_var_objective })
}

/// Moment state of `samples` in the given mode; convenience for tests and callers.
pub fn state_from_samples(dim: usize, mode: CovarianceMode, samples: &[Vec<f64>]) -> Result<MomentState> {
    let mut st = MomentState::new(dim, mode)?;
    for s in samples {
        st.update(s)?;
    }
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::check;

    fn scalar_spec(alpha: f64, d: f64) -> ChanceSpec {
        ChanceSpec::identity(1, d, alpha).unwrap()
    }

    /// Checks `blocks` at `x` through the lifted rows with tight aux values.
    fn lifted_ok(blocks: &SurrogateBlocks, x: &[f64]) -> bool {
        let full = blocks.complete(x).unwrap();
        check(&blocks.to_program(), &full, 1e-9).unwrap().feasible
    }

    #[test]
    fn known_scalar_half() {
        let b = build_known(&[-1.0], &DMatrix::from_element(1, 1, 1.0), &scalar_spec(0.5, 0.0)).unwrap();
        for x in [0.0, 0.5, 3.0] {
            assert!(b.scalar_value(&[x]).unwrap().abs() < 1e-15);
            assert!(lifted_ok(&b, &[x]));
        }
        assert!(b.scalar_value(&[-1.0]).unwrap() > 0.0);
    }

    #[test]
    fn zero_covariance_is_linear() {
        let b = build_known(&[1.0, -2.0], &DMatrix::zeros(2, 2), &ChanceSpec::identity(2, 0.3, 0.1).unwrap()).unwrap();
        assert!(b.cone_rows().is_empty() && b.aux_roles().is_empty());
        assert_eq!(b.linear_rows(), &[LinearRow::less_eq(vec![1.0, -2.0], 0.3)]);
    }

    #[test]
    fn non_psd_rejected() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(build_known(&[0.0, 0.0], &s, &ChanceSpec::identity(2, 0.0, 0.1).unwrap()).is_err());
    }

    #[test]
    fn plugin_scalar() {
        let st = state_from_samples(1, CovarianceMode::Full, &[vec![0.0], vec![2.0]]).unwrap();
        let b = build_plugin(&st, &scalar_spec(0.5, 0.0)).unwrap();
        assert_eq!(b.kind(), SurrogateKind::Plugin);
        assert!(b.scalar_value(&[-2.0]).unwrap().abs() < 1e-15);
        assert!(b.scalar_value(&[0.1]).unwrap() > 0.0);
        let one = state_from_samples(1, CovarianceMode::Full, &[vec![3.0]]).unwrap();
        let b = build_plugin(&one, &scalar_spec(0.5, 0.0)).unwrap();
        assert!(b.cone_rows().is_empty());
        assert!(build_plugin(&MomentState::new(1, CovarianceMode::Full).unwrap(), &scalar_spec(0.5, 0.0)).is_err());
    }

    fn box_state() -> (MomentState, SupportSet, ChanceSpec) {
        let samples = vec![vec![0.1, 0.3], vec![0.7, 0.2], vec![0.4, 0.9], vec![0.5, 0.5]];
        let st = state_from_samples(2, CovarianceMode::Full, &samples).unwrap();
        let support = SupportSet::boxed(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        (st, support, ChanceSpec::identity(2, 0.0, 0.2).unwrap())
    }

    #[test]
    fn thm1_pinned_matches_plugin() {
        let (st, support, spec) = box_state();
        let pinned = ScheduleResult {
            method: Method::Cor1,
            n: st.count(),
            alpha: 0.2,
            kappa: Some(1.0),
            phi: 0.0,
            nu: None,
            feasible: true,
        };
        let t = build_thm1(&st, &support, &spec, &pinned).unwrap();
        let p = build_plugin(&st, &spec).unwrap();
        assert_eq!(t.linear_rows(), p.linear_rows());
        assert_eq!(t.cone_rows(), p.cone_rows());
        assert_eq!(t.aux_roles(), p.aux_roles());
        assert_eq!(t.scalar_value(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn thm1_refuses_infeasible_schedule() {
        let (st, support, spec) = box_state();
        let sched = schedules::cor1(st.count(), 0.2).unwrap();
        assert!(!sched.feasible);
        assert!(matches!(build_thm1(&st, &support, &spec, &sched), Err(Error::NotEnoughSamples(_))));
    }

    #[test]
    fn lifted_rows_agree_with_collapsed_value() {
        let (st, _, spec) = box_state();
        let supports = [
            SupportSet::boxed(&[-1.0, 0.0], &[1.0, 2.0]).unwrap(),
            SupportSet::polytope(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.3, 2.0]]).unwrap(),
            SupportSet::ellipsoid(&[0.5, 0.5], DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0])).unwrap(),
        ];
        let sched =
            ScheduleResult { method: Method::Cor1, n: 4, alpha: 0.2, kappa: Some(1.3), phi: 0.4, nu: None, feasible: true };
        for support in &supports {
            let b = build_thm1(&st, support, &spec, &sched).unwrap();
            for x in [[0.3, -0.2], [-1.0, 0.5], [0.0, 0.0], [2.0, 1.0]] {
                let g = b.scalar_value(&x).unwrap();
                assert_eq!(lifted_ok(&b, &x), g <= 1e-9, "{support:?} {x:?} {g}");
            }
        }
    }

    #[test]
    fn fixed_delta_point_mass() {
        let samples = vec![vec![0.2], vec![0.2], vec![0.2]];
        let mut st = MomentState::new(1, CovarianceMode::Full).unwrap();
        for _ in 0..100 {
            st.extend(samples.iter().map(|s| s.as_slice())).unwrap();
        }
        let support = SupportSet::boxed(&[0.2], &[0.2]).unwrap();
        let spec = scalar_spec(0.2, -0.5);
        let b = build_fixed_delta(&st, &support, &spec, 0.1, false).unwrap();
        assert!((b.scalar_value(&[1.0]).unwrap() - (0.2 - 0.5)).abs() < 1e-15);
        assert!(build_fixed_delta(&st, &support, &spec, 0.2, false).is_err());
        let small = state_from_samples(1, CovarianceMode::Full, &samples).unwrap();
        assert!(matches!(build_fixed_delta(&small, &support, &spec, 0.1, false), Err(Error::NotEnoughSamples(_))));
    }

    #[test]
    fn ind_mean_scalar_threshold() {
        // a ∈ [0,1], μ̂ = 0.2, α = 0.1, N = 100: g(x) = 0.2x + d + (½φ + √(½ln10 + ν))·x
        let mut st = MomentState::new(1, CovarianceMode::Diagonal).unwrap();
        for i in 0..100 {
            st.update(&[if i % 5 == 0 { 1.0 } else { 0.0 }]).unwrap();
        }
        let support = SupportSet::boxed(&[0.0], &[1.0]).unwrap();
        let spec = scalar_spec(0.1, -1.0);
        let sched = schedules::cor2(100, 0.1).unwrap();
        let b = build_ind_mean(&st, &support, &spec, &sched).unwrap();
        let phi = (2.0 + (2.0 * (10.0f64 / 0.1).ln()).sqrt()) / 10.0;
        let nu = 0.5 * (1.0 + 0.9 / 9.0f64).ln();
        let slope = 0.2 + 0.5 * phi + (0.5 * 10.0f64.ln() + nu).sqrt();
        let threshold = 1.0 / slope;
        assert!(b.scalar_value(&[threshold]).unwrap().abs() < 1e-12);
        assert!(b.cone_rows().is_empty());
        let ell = SupportSet::ellipsoid(&[0.0], DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!(build_ind_mean(&st, &ell, &spec, &sched).is_err());
    }

    #[test]
    fn independent_pinned_match_known() {
        let samples = vec![vec![0.1, 0.3], vec![0.7, 0.2], vec![0.4, 0.9]];
        let st = state_from_samples(2, CovarianceMode::Diagonal, &samples).unwrap();
        let m = st.extract().unwrap();
        let support = SupportSet::boxed(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        let spec = ChanceSpec::identity(2, 0.1, 0.2).unwrap();
        let mean_pin =
            ScheduleResult { method: Method::Cor2, n: 3, alpha: 0.2, kappa: None, phi: 0.0, nu: Some(0.0), feasible: true };
        let a = build_ind_mean(&st, &support, &spec, &mean_pin).unwrap();
        let b = build_known_ind_mean(m.mean.as_slice(), &support, &spec, BoxNorm::L1).unwrap();
        assert_eq!((a.linear_rows(), a.cone_rows()), (b.linear_rows(), b.cone_rows()));

        let var_pin =
            ScheduleResult { method: Method::Cor3, n: 3, alpha: 0.2, kappa: Some(1.0), phi: 0.0, nu: None, feasible: true };
        let a = build_ind_var(&st, &support, &spec, &var_pin).unwrap();
        let vars: Vec<f64> = m.covariance.to_matrix().diagonal().iter().copied().collect();
        let b = build_known_ind_var(m.mean.as_slice(), &vars, &spec).unwrap();
        assert_eq!((a.linear_rows(), a.cone_rows()), (b.linear_rows(), b.cone_rows()));
    }

    #[test]
    fn ind_var_constant_samples_keep_support_terms() {
        let st = state_from_samples(1, CovarianceMode::Diagonal, &[vec![0.5], vec![0.5]]).unwrap();
        let support = SupportSet::boxed(&[0.0], &[1.0]).unwrap();
        let spec = scalar_spec(0.2, 0.0);
        let sched =
            ScheduleResult { method: Method::Cor3, n: 2, alpha: 0.2, kappa: Some(1.5), phi: 0.3, nu: None, feasible: true };
        let b = build_ind_var(&st, &support, &spec, &sched).unwrap();
        assert!(!b.aux_roles().contains(&AuxRole::NormVariance));
        let want = 0.5 + 0.3 * 0.5 + 1.5 * 2.0 * (0.6f64 * 0.25).sqrt();
        assert!((b.scalar_value(&[1.0]).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn known_ind_mean_l2_is_tighter_than_box_bound() {
        let support = SupportSet::boxed(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let spec = ChanceSpec::identity(2, 0.0, 0.1).unwrap();
        let l1 = build_known_ind_mean(&[-1.0, -1.0], &support, &spec, BoxNorm::L1).unwrap();
        let l2 = build_known_ind_mean(&[-1.0, -1.0], &support, &spec, BoxNorm::L2).unwrap();
        let x = [1.0, 1.0];
        assert!(l2.scalar_value(&x).unwrap() < l1.scalar_value(&x).unwrap());
        assert!(lifted_ok(&l2, &x) == (l2.scalar_value(&x).unwrap() <= 0.0));
    }

    #[test]
    fn best_of_both_small_n_uses_ind_mean() {
        let st = state_from_samples(1, CovarianceMode::Diagonal, &[vec![0.4], vec![0.6]]).unwrap();
        let support = SupportSet::boxed(&[0.0], &[1.0]).unwrap();
        let spec = scalar_spec(0.2, -1.0);
        let mut base = ConicProgram::new(1);
        base.set_objective(Sense::Maximize, vec![1.0]);
        base.set_lower_bound(0, 0.0);
        let r = best_of_both(&st, &support, &spec, &base, &ToleranceSettings::default()).unwrap();
        assert_eq!(r.blocks.kind(), SurrogateKind::IndMean);
        assert!(r.ind_var_objective.is_none());
        let one = state_from_samples(1, CovarianceMode::Diagonal, &[vec![0.4]]).unwrap();
        assert!(best_of_both(&one, &support, &spec, &base, &ToleranceSettings::default()).is_err());
    }

    #[test]
    fn appended_rows_are_remapped() {
        let (st, support, spec) = box_state();
        let sched =
            ScheduleResult { method: Method::Cor1, n: 4, alpha: 0.2, kappa: Some(1.1), phi: 0.2, nu: None, feasible: true };
        let b = build_thm1(&st, &support, &spec, &sched).unwrap();
        let mut prog = ConicProgram::new(3);
        let first = b.append_to(&mut prog).unwrap();
        assert_eq!(first, 3);
        let x = [0.2, -0.4];
        let full = b.complete(&x).unwrap();
        let mut v = vec![x[0], x[1], 123.0];
        v.extend_from_slice(&full[2..]);
        assert!(check(&prog, &v, 1e-9).unwrap().feasible == (b.scalar_value(&x).unwrap() <= 1e-9));
    }
}
