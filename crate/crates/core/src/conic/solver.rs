//! Primal-dual interior-point method for linear + second-order cone programs.
//!
//! Internally the program is put in the form
//!
//! ```text
//! minimize cᵀx   s.t.  A x = b,  G x + s = h,  s ∈ K
//! ```
//!
//! with `K` a product of a nonnegative orthant and second-order cones, and
//! solved from an infeasible start with Nesterov–Todd scaling and Mehrotra
//! predictor-corrector steps. The scaled KKT system
//!
//! ```text
//! [ 0   Aᵀ  Ĝᵀ ] [dx]   [bx    ]
//! [ A   0   0  ] [dy] = [by    ]      Ĝ = W⁻¹G,  dz = W⁻¹ dz̃
//! [ Ĝ   0  -I  ] [dz̃]   [W⁻¹ bz]
//! ```
//!
//! is factored densely once per iteration with a small static regularisation
//! and polished by iterative refinement. When the main solve does not reach
//! optimality an elastic phase-1 program (minimise the largest constraint
//! violation) decides whether the program is infeasible.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::cones::{ConeDims, NtScaling};
use super::{worst_violation, ConicProgram, LinearRow, Relation, Sense, Solution, Status, ToleranceSettings};
use crate::error::Result;
use crate::math::{dot, norm2};

/// Phase-1 optimum above which a program is declared infeasible.
const INFEASIBILITY_THRESHOLD: f64 = 1e-6;
const REGULARIZATION: f64 = 1e-10;
const REFINEMENT_STEPS: usize = 3;
const STEP_FRACTION: f64 = 0.99;
const DIVERGENCE_LIMIT: f64 = 1e13;

/// Solves `prog`. Non-convergence is reported through [`Status`], never as a
/// wrong `Optimal` answer.
pub fn solve(prog: &ConicProgram, tol: &ToleranceSettings) -> Result<Solution> {
    prog.validate()?;
    let main = match StandardForm::build(prog) {
        Some(form) => run_ipm(&form, prog, tol),
        None => IpmOutcome { status: Status::Infeasible, x: vec![0.0; prog.num_vars()], iterations: 0 },
    };
    if main.status == Status::Optimal {
        return Ok(finish(prog, main.status, main.x, main.iterations));
    }

    let phase_one = elastic_program(prog);
    let p1 = StandardForm::build(&phase_one)
        .map(|form| run_ipm(&form, &phase_one, tol))
        .unwrap_or(IpmOutcome { status: Status::NumericalFailure, x: vec![0.0; phase_one.num_vars()], iterations: 0 });
    let iterations = main.iterations + p1.iterations;
    let n = prog.num_vars();
    if p1.status == Status::Optimal && p1.x[n] > INFEASIBILITY_THRESHOLD {
        return Ok(finish(prog, Status::Infeasible, p1.x[..n].to_vec(), iterations));
    }
    let status = if main.status == Status::Infeasible { Status::NumericalFailure } else { main.status };
    Ok(finish(prog, status, main.x, iterations))
}

fn finish(prog: &ConicProgram, status: Status, x: Vec<f64>, iterations: usize) -> Solution {
    let objective = prog.objective_value(&x);
    let primal_residual = worst_violation(prog, &x);
    Solution { status, x, objective, primal_residual, iterations }
}

/// `min t` subject to every constraint relaxed by `t ≥ 0`.
fn elastic_program(prog: &ConicProgram) -> ConicProgram {
    let n = prog.num_vars();
    let mut p = ConicProgram::new(n + 1);
    let mut obj = vec![0.0; n + 1];
    obj[n] = 1.0;
    p.set_objective(Sense::Minimize, obj);
    p.set_lower_bound(n, 0.0);
    let relaxed = |coeffs: &[f64], sign: f64| {
        let mut c: Vec<f64> = coeffs.iter().map(|v| sign * v).collect();
        c.resize(n + 1, 0.0);
        c[n] = -1.0;
        c
    };
    for row in prog.linear_rows() {
        p.add_linear(LinearRow::less_eq(relaxed(&row.coeffs, 1.0), row.constant));
        if row.relation == Relation::Equal {
            p.add_linear(LinearRow::less_eq(relaxed(&row.coeffs, -1.0), -row.constant));
        }
    }
    for cone in prog.cone_rows() {
        let mut cone = cone.clone();
        cone.c.resize(n + 1, 0.0);
        cone.c[n] = 1.0;
        p.add_cone(cone);
    }
    for (i, lb) in prog.lower_bounds().iter().enumerate() {
        if let Some(lb) = lb {
            let mut c = vec![0.0; n + 1];
            c[i] = -1.0;
            c[n] = -1.0;
            p.add_linear(LinearRow::less_eq(c, *lb));
        }
    }
    p
}

struct StandardForm {
    c: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
    dims: ConeDims,
}

impl StandardForm {
    /// `None` when a constraint without variables is violated outright.
    fn build(prog: &ConicProgram) -> Option<Self> {
        let n = prog.num_vars();
        let sign = if prog.sense() == Sense::Maximize { -1.0 } else { 1.0 };
        let c = DVector::from_iterator(n, prog.objective().iter().map(|v| sign * v));

        let padded = |coeffs: &[f64]| {
            let mut r = coeffs.to_vec();
            r.resize(n, 0.0);
            r
        };
        let mut eq_rows: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut ineq_rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for row in prog.linear_rows() {
            let coeffs = padded(&row.coeffs);
            let scale = norm2(&coeffs);
            if scale == 0.0 {
                let ok = match row.relation {
                    Relation::LessEq => row.constant <= 0.0,
                    Relation::Equal => row.constant == 0.0,
                };
                if ok {
                    continue;
                }
                return None;
            }
            let scaled: Vec<f64> = coeffs.iter().map(|v| v / scale).collect();
            match row.relation {
                Relation::LessEq => ineq_rows.push((scaled, -row.constant / scale)),
                Relation::Equal => eq_rows.push((scaled, -row.constant / scale)),
            }
        }
        for (i, lb) in prog.lower_bounds().iter().enumerate() {
            if let Some(lb) = lb {
                let mut r = vec![0.0; n];
                r[i] = -1.0;
                ineq_rows.push((r, -lb));
            }
        }
        let mut soc_blocks: Vec<(Vec<Vec<f64>>, Vec<f64>)> = Vec::new();
        for cone in prog.cone_rows() {
            // s = (cᵀv + e, A v + b) = h − G v
            let mut rows = vec![padded(&cone.c).iter().map(|v| -v).collect::<Vec<f64>>()];
            rows.extend(cone.a.iter().map(|r| padded(r).iter().map(|v| -v).collect()));
            let mut h = vec![cone.e];
            h.extend_from_slice(&cone.b);
            let scale = rows.iter().map(|r| norm2(r)).fold(0.0, f64::max);
            if scale == 0.0 {
                if norm2(&h[1..]) <= h[0] {
                    continue;
                }
                return None;
            }
            let rows = rows.into_iter().map(|r| r.into_iter().map(|v| v / scale).collect()).collect();
            soc_blocks.push((rows, h.into_iter().map(|v| v / scale).collect()));
        }

        let dims = ConeDims { nonneg: ineq_rows.len(), soc: soc_blocks.iter().map(|(r, _)| r.len()).collect() };
        let m = dims.total();
        let mut g = DMatrix::zeros(m, n);
        let mut h = DVector::zeros(m);
        let mut row = 0;
        let all_rows = ineq_rows
            .iter()
            .map(|(r, hv)| (r, *hv))
            .chain(soc_blocks.iter().flat_map(|(rs, hs)| rs.iter().zip(hs.iter().copied())));
        for (r, hv) in all_rows {
            for (j, v) in r.iter().enumerate() {
                g[(row, j)] = *v;
            }
            h[row] = hv;
            row += 1;
        }
        let p = eq_rows.len();
        let mut a = DMatrix::zeros(p, n);
        let mut b = DVector::zeros(p);
        for (i, (r, bv)) in eq_rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                a[(i, j)] = *v;
            }
            b[i] = *bv;
        }
        Some(Self { c, a, b, g, h, dims })
    }
}

struct IpmOutcome {
    status: Status,
    x: Vec<f64>,
    iterations: usize,
}

/// Dense KKT factorisation for one scaling.
struct Kkt {
    exact: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
    p: usize,
}

impl Kkt {
    /// `scaled_g` is `W⁻¹G` (or `G` with identity scaling).
    fn factor(a: &DMatrix<f64>, scaled_g: &DMatrix<f64>) -> Self {
        let (n, p, m) = (a.ncols(), a.nrows(), scaled_g.nrows());
        let size = n + p + m;
        let mut k = DMatrix::zeros(size, size);
        k.view_mut((0, n), (n, p)).copy_from(&a.transpose());
        k.view_mut((0, n + p), (n, m)).copy_from(&scaled_g.transpose());
        k.view_mut((n, 0), (p, n)).copy_from(a);
        k.view_mut((n + p, 0), (m, n)).copy_from(scaled_g);
        for i in 0..m {
            k[(n + p + i, n + p + i)] = -1.0;
        }
        let mut reg = k.clone();
        for i in 0..n {
            reg[(i, i)] += REGULARIZATION;
        }
        for i in 0..p {
            reg[(n + i, n + i)] -= REGULARIZATION;
        }
        Self { exact: k, lu: reg.lu(), n, p }
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let mut sol = self.lu.solve(rhs)?;
        for _ in 0..REFINEMENT_STEPS {
            let resid = rhs - &self.exact * &sol;
            if resid.amax() <= 1e-15 * (1.0 + rhs.amax()) {
                break;
            }
            sol += self.lu.solve(&resid)?;
        }
        sol.iter().all(|v| v.is_finite()).then_some(sol)
    }

    fn split(&self, sol: &DVector<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (n, p) = (self.n, self.p);
        (
            sol.rows(0, n).iter().copied().collect(),
            sol.rows(n, p).iter().copied().collect(),
            sol.rows(n + p, sol.len() - n - p).iter().copied().collect(),
        )
    }
}

fn stack(parts: &[&[f64]]) -> DVector<f64> {
    DVector::from_iterator(parts.iter().map(|p| p.len()).sum(), parts.iter().flat_map(|p| p.iter().copied()))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Shift `u` into the interior as CVXOPT does: `u ← u + (1 + t)e` when `u + te` is not interior for `t ≤ 0`.
fn push_interior(dims: &ConeDims, u: &mut [f64]) {
    let t = -dims.min_eig(u);
    if t >= -1e-8 * inf_norm(u).max(1.0) {
        let e = dims.identity();
        axpy(u, 1.0 + t, &e);
    }
}

fn run_ipm(form: &StandardForm, prog: &ConicProgram, tol: &ToleranceSettings) -> IpmOutcome {
    let n = form.c.len();
    let p = form.b.len();
    let m = form.dims.total();
    let dims = &form.dims;

    if m == 0 {
        // equality-constrained linear objective: optimal only if c ⟂ null(A)
        let kkt = Kkt::factor(&form.a, &DMatrix::zeros(0, n));
        let rhs = stack(&[(-&form.c).as_slice(), form.b.as_slice()]);
        let status = match kkt.solve(&rhs) {
            Some(sol) => {
                let (x, y, _) = kkt.split(&sol);
                let rx = form.a.transpose() * DVector::from_vec(y) + &form.c;
                let ry = &form.a * DVector::from_vec(x.clone()) - &form.b;
                if rx.amax() <= tol.optimality * (1.0 + form.c.amax()) && ry.amax() <= tol.feasibility {
                    return IpmOutcome { status: Status::Optimal, x, iterations: 1 };
                }
                Status::NumericalFailure
            }
            None => Status::NumericalFailure,
        };
        return IpmOutcome { status, x: vec![0.0; n], iterations: 1 };
    }

    // initial point
    let init = Kkt::factor(&form.a, &form.g);
    let zero_n = vec![0.0; n];
    let zero_p = vec![0.0; p];
    let zero_m = vec![0.0; m];
    let Some(primal) = init.solve(&stack(&[&zero_n, form.b.as_slice(), form.h.as_slice()])) else {
        return IpmOutcome { status: Status::NumericalFailure, x: zero_n, iterations: 0 };
    };
    let (mut x, _, z0) = init.split(&primal);
    let mut s: Vec<f64> = z0.iter().map(|v| -v).collect();
    let neg_c: Vec<f64> = form.c.iter().map(|v| -v).collect();
    let Some(dual) = init.solve(&stack(&[&neg_c, &zero_p, &zero_m])) else {
        return IpmOutcome { status: Status::NumericalFailure, x: zero_n, iterations: 0 };
    };
    let (_, mut y, mut z) = init.split(&dual);
    push_interior(dims, &mut s);
    push_interior(dims, &mut z);

    let c = form.c.as_slice();
    let b_norm = 1.0 + inf_norm(form.b.as_slice());
    let h_norm = 1.0 + inf_norm(form.h.as_slice());
    let c_norm = 1.0 + inf_norm(c);
    let identity = dims.identity();
    let degree = dims.degree() as f64;
    let gt = form.g.transpose();
    let at = form.a.transpose();

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut pres_history: Vec<f64> = Vec::new();
    let mut status = Status::IterationLimit;
    let mut iterations = 0;

    for iter in 0..=tol.max_iterations {
        iterations = iter;
        let xv = DVector::from_column_slice(&x);
        let yv = DVector::from_column_slice(&y);
        let zv = DVector::from_column_slice(&z);
        let rx: Vec<f64> = (&at * &yv + &gt * &zv + &form.c).iter().copied().collect();
        let ry: Vec<f64> = (&form.a * &xv - &form.b).iter().copied().collect();
        let rz: Vec<f64> = (&form.g * &xv + DVector::from_column_slice(&s) - &form.h).iter().copied().collect();

        let gap = dot(&s, &z);
        let pobj = dot(c, &x);
        let dobj = -dot(form.b.as_slice(), &y) - dot(form.h.as_slice(), &z);
        let pres = (inf_norm(&ry) / b_norm).max(inf_norm(&rz) / h_norm);
        let dres = inf_norm(&rx) / c_norm;
        let rel_gap = gap / pobj.abs().max(dobj.abs()).max(1.0);

        if pres <= tol.feasibility && dres <= tol.optimality && rel_gap <= tol.optimality {
            let violation = worst_violation(prog, &x);
            if violation <= tol.feasibility {
                return IpmOutcome { status: Status::Optimal, x, iterations: iter };
            }
            if best.as_ref().map_or(true, |(v, _)| violation < *v) {
                best = Some((violation, x.clone()));
            }
        }
        if iter == tol.max_iterations {
            break;
        }
        pres_history.push(pres);
        if iter >= 40 && pres > tol.feasibility && pres > 0.5 * pres_history[iter - 20] {
            // primal residual stalled: let phase 1 decide feasibility
            status = Status::NumericalFailure;
            break;
        }
        if inf_norm(&x).max(inf_norm(&z)).max(inf_norm(&s)) > DIVERGENCE_LIMIT {
            status = Status::NumericalFailure;
            break;
        }

        let w = NtScaling::new(dims, &s, &z);
        let lambda = w.apply(&z);
        let mut scaled_g = form.g.clone();
        for j in 0..n {
            let col: Vec<f64> = form.g.column(j).iter().copied().collect();
            let sc = w.apply_inv(&col);
            scaled_g.column_mut(j).copy_from_slice(&sc);
        }
        let kkt = Kkt::factor(&form.a, &scaled_g);

        // returns (dx, dy, dz, ds, ds̃, dz̃) for complementarity target d_s
        let direction = |ds_target: &[f64]| -> Option<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
            let lam_inv = dims.inv_circ(&lambda, ds_target);
            let w_lam_inv = w.apply(&lam_inv);
            let bz: Vec<f64> = rz.iter().zip(&w_lam_inv).map(|(r, v)| -r - v).collect();
            let bx: Vec<f64> = rx.iter().map(|v| -v).collect();
            let by: Vec<f64> = ry.iter().map(|v| -v).collect();
            let sol = kkt.solve(&stack(&[&bx, &by, &w.apply_inv(&bz)]))?;
            let (dx, dy, dz_tilde) = kkt.split(&sol);
            let dz = w.apply_inv(&dz_tilde);
            // ds from the unscaled linearisation keeps the primal residual from drifting
            let g_dx = &form.g * DVector::from_column_slice(&dx);
            let ds: Vec<f64> = rz.iter().zip(g_dx.iter()).map(|(r, g)| -r - g).collect();
            let ds_tilde = w.apply_inv(&ds);
            Some((dx, dy, dz, ds, ds_tilde, dz_tilde))
        };

        // predictor
        let lam_sq = dims.circ(&lambda, &lambda);
        let aff_target: Vec<f64> = lam_sq.iter().map(|v| -v).collect();
        let Some((_, _, dz_a, ds_a, ds_tilde_a, dz_tilde_a)) = direction(&aff_target) else {
            status = Status::NumericalFailure;
            break;
        };
        let alpha_aff = dims.max_step(&s, &ds_a, 1.0).min(dims.max_step(&z, &dz_a, 1.0));
        let sigma = {
            let g = (1.0 - alpha_aff).clamp(0.0, 1.0);
            g * g * g
        };
        let mu = gap / degree;

        // corrector
        let cross = dims.circ(&ds_tilde_a, &dz_tilde_a);
        let target: Vec<f64> = (0..m).map(|i| -lam_sq[i] - cross[i] + sigma * mu * identity[i]).collect();
        let Some((dx, dy, dz, ds, _, _)) = direction(&target) else {
            status = Status::NumericalFailure;
            break;
        };
        let alpha_max = dims.max_step(&s, &ds, f64::INFINITY).min(dims.max_step(&z, &dz, f64::INFINITY));
        let alpha = (STEP_FRACTION * alpha_max).min(1.0);
        if !(alpha > 1e-14) {
            status = Status::NumericalFailure;
            break;
        }
        axpy(&mut x, alpha, &dx);
        axpy(&mut y, alpha, &dy);
        axpy(&mut z, alpha, &dz);
        axpy(&mut s, alpha, &ds);
    }

    match best {
        // converged in the scaled sense but the model-level check is slightly off
        Some((_, bx)) => IpmOutcome { status: Status::NumericalFailure, x: bx, iterations },
        None => IpmOutcome { status, x, iterations },
    }
}
