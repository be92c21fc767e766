//! Log-barrier interior-point method for [`LseProgram`]s.
//!
//! Equality rows are removed by a nullspace parametrization `y = y_p + Z w`;
//! box bounds become affine rows. Inner iterations are damped Newton steps
//! with Armijo backtracking. A slack-variable phase I runs when the starting
//! point is not strictly feasible.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lse::LseFunction;
use super::program::LseProgram;
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Target duality gap and KKT residual.
    pub tol: f64,
    /// Newton steps allowed per centering.
    pub newton_max: usize,
    /// Barrier weight growth factor.
    pub mu: f64,
    /// Armijo sufficient-decrease fraction.
    pub armijo: f64,
    /// Backtracking factor.
    pub backtrack: f64,
    /// Centering rounds allowed.
    pub max_outer: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, newton_max: 200, mu: 10.0, armijo: 0.01, backtrack: 0.5, max_outer: 60 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub y: Vec<f64>,
    pub objective_value: f64,
    /// Duality gap combined with the Newton-decrement centrality measure,
    /// both divided by the final barrier weight.
    pub kkt_residual: f64,
    /// Componentwise Lagrangian stationarity, informational; limited by
    /// roundoff in slacks near active constraints.
    pub stationarity: f64,
    pub duality_gap: f64,
    pub status: SolveStatus,
    pub newton_steps: usize,
    pub used_phase1: bool,
}

/// Program with equalities eliminated and every inequality in one of two
/// shapes: `f(w) ≤ 0` or `G w ≤ h`.
struct Reduced {
    n: usize,
    c: DVector<f64>,
    d: f64,
    obj_lse: Vec<(f64, LseFunction)>,
    cons_lse: Vec<LseFunction>,
    g: DMatrix<f64>,
    h: DVector<f64>,
}

struct Workspace {
    grad: DVector<f64>,
    hess: DMatrix<f64>,
    tmp: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self { grad: DVector::zeros(n), hess: DMatrix::zeros(n, n), tmp: vec![0.0; n] }
    }
}

impl Reduced {
    fn m(&self) -> usize {
        self.cons_lse.len() + self.g.nrows()
    }

    fn f0(&self, w: &[f64]) -> f64 {
        let lin: f64 = self.c.iter().zip(w).map(|(a, b)| a * b).sum();
        lin + self.d + self.obj_lse.iter().map(|(k, f)| k * f.eval(w)).sum::<f64>()
    }

    fn affine_slack(&self, w: &[f64], r: usize) -> f64 {
        self.h[r] - (0..self.n).map(|j| self.g[(r, j)] * w[j]).sum::<f64>()
    }

    /// Largest constraint value (negative when strictly feasible).
    fn max_constraint(&self, w: &[f64]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for f in &self.cons_lse {
            worst = worst.max(f.eval(w));
        }
        for r in 0..self.g.nrows() {
            worst = worst.max(-self.affine_slack(w, r));
        }
        worst
    }

    /// `t f0(w) − Σ ln(−g_i(w))`, or `None` outside the strict interior.
    fn barrier(&self, w: &[f64], t: f64) -> Option<f64> {
        let mut acc = t * self.f0(w);
        for f in &self.cons_lse {
            let v = f.eval(w);
            if !(v < 0.0) {
                return None;
            }
            acc -= (-v).ln();
        }
        for r in 0..self.g.nrows() {
            let s = self.affine_slack(w, r);
            if !(s > 0.0) {
                return None;
            }
            acc -= s.ln();
        }
        acc.is_finite().then_some(acc)
    }

    /// Fills gradient and Hessian of the barrier function; returns its value.
    /// Also returns the gradient of `f0` alone, used for the KKT residual.
    fn barrier_derivatives(&self, w: &[f64], t: f64, ws: &mut Workspace) -> (f64, DVector<f64>) {
        let n = self.n;
        ws.grad.fill(0.0);
        ws.hess.fill(0.0);
        let mut value = 0.0;
        let mut grad_f0 = self.c.clone();
        value += self.c.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + self.d;
        for (k, f) in &self.obj_lse {
            let v = f.value_grad_into(w, &mut ws.tmp, Some((&mut ws.hess, t * k)));
            value += k * v;
            for j in 0..n {
                grad_f0[j] += k * ws.tmp[j];
            }
        }
        value *= t;
        ws.grad.axpy(t, &grad_f0, 0.0);
        for f in &self.cons_lse {
            let v = f.eval(w);
            let inv = -1.0 / v;
            value -= (-v).ln();
            f.value_grad_into(w, &mut ws.tmp, Some((&mut ws.hess, inv)));
            for a in 0..n {
                let ga = ws.tmp[a];
                if ga == 0.0 {
                    continue;
                }
                ws.grad[a] += inv * ga;
                for b in 0..n {
                    ws.hess[(a, b)] += inv * inv * ga * ws.tmp[b];
                }
            }
        }
        for r in 0..self.g.nrows() {
            let s = self.affine_slack(w, r);
            value -= s.ln();
            let inv = 1.0 / s;
            for a in 0..n {
                let ga = self.g[(r, a)];
                if ga == 0.0 {
                    continue;
                }
                ws.grad[a] += inv * ga;
                for b in 0..n {
                    ws.hess[(a, b)] += inv * inv * ga * self.g[(r, b)];
                }
            }
        }
        (value, grad_f0)
    }
}

struct BarrierOutcome {
    w: Vec<f64>,
    t: f64,
    kkt: f64,
    stationarity: f64,
    newton_steps: usize,
    status: SolveStatus,
}

fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = hess.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut h = hess.clone();
        if reg > 0.0 {
            for i in 0..h.nrows() {
                h[(i, i)] += reg;
            }
        }
        if let Some(ch) = h.cholesky() {
            let d = ch.solve(&(-grad));
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
    }
    None
}

/// Barrier path following from a strictly feasible `w0`. `stop` lets phase I
/// quit as soon as it has found an interior point.
fn barrier_method(
    prob: &Reduced,
    w0: Vec<f64>,
    opts: &SolverOptions,
    stop: Option<&dyn Fn(&[f64]) -> bool>,
) -> BarrierOutcome {
    let m = prob.m();
    let mut w = w0;
    let mut ws = Workspace::new(prob.n);
    let mut newton_steps = 0;
    // Start with the gap estimate m/t of order one.
    let mut t = if m == 0 { 1.0 } else { (m as f64).max(1.0) / (1.0 + prob.f0(&w).abs()).max(1.0) };
    let mut kkt = f64::INFINITY;
    let mut stat = f64::INFINITY;
    let done = |w: &[f64]| stop.is_some_and(|f| f(w));
    let outcome = |w, t, kkt, stat, newton_steps, status| BarrierOutcome { w, t, kkt, stationarity: stat, newton_steps, status };
    for _outer in 0..opts.max_outer {
        let mut centered = false;
        let mut prev_decrement = f64::INFINITY;
        for _ in 0..opts.newton_max {
            let (val, grad_f0) = prob.barrier_derivatives(&w, t, &mut ws);
            let Some(dir) = newton_direction(&ws.hess, &ws.grad) else {
                break;
            };
            let slope = ws.grad.dot(&dir);
            let decrement = (-slope).max(0.0);
            stat = stationarity(&ws.grad, t, &grad_f0);
            kkt = (m as f64 / t).max(decrement.sqrt() / t);
            // Converged, or stalled at the roundoff floor of the barrier value.
            let stalled = decrement <= 1e-10 * (1.0 + val.abs()) && decrement >= 0.5 * prev_decrement;
            if decrement <= 2e-14_f64.min((0.5 * opts.tol * t).powi(2)) || stalled {
                centered = true;
                break;
            }
            prev_decrement = decrement;
            let mut step = 1.0;
            let mut accepted = None;
            if decrement < 1e-3 {
                // Inside the quadratic-convergence region the full step is
                // safe; barrier values there differ by less than roundoff.
                let trial: Vec<f64> = w.iter().zip(dir.iter()).map(|(a, d)| a + d).collect();
                if prob.barrier(&trial, t).is_some() {
                    accepted = Some(trial);
                    step = 0.0;
                }
            }
            while step > 1e-16 {
                let trial: Vec<f64> = w.iter().zip(dir.iter()).map(|(a, d)| a + step * d).collect();
                if let Some(v) = prob.barrier(&trial, t) {
                    if v <= val + opts.armijo * step * slope {
                        accepted = Some(trial);
                        break;
                    }
                }
                step *= opts.backtrack;
            }
            newton_steps += 1;
            match accepted {
                Some(trial) if trial != w => w = trial,
                // No progress possible at working precision.
                _ => {
                    centered = true;
                    break;
                }
            }
            if done(&w) {
                return outcome(w, t, kkt, stat, newton_steps, SolveStatus::Optimal);
            }
        }
        if !centered {
            return outcome(w, t, kkt, stat, newton_steps, SolveStatus::MaxIter);
        }
        if done(&w) || m as f64 / t <= opts.tol {
            return outcome(w, t, kkt, stat, newton_steps, SolveStatus::Optimal);
        }
        t *= opts.mu;
    }
    outcome(w, t, kkt, stat, newton_steps, SolveStatus::MaxIter)
}

/// Lagrangian stationarity `‖∇f0 + Σ λ_i ∇g_i‖∞` with `λ_i = 1/(−t g_i)`,
/// relative to `max(1, ‖∇f0‖∞)`. Equals `‖∇φ_t‖∞ / t`.
fn stationarity(barrier_grad: &DVector<f64>, t: f64, grad_f0: &DVector<f64>) -> f64 {
    barrier_grad.amax() / t / grad_f0.amax().max(1.0)
}

struct Elimination {
    y_p: DVector<f64>,
    z: DMatrix<f64>,
}

impl Elimination {
    fn to_y(&self, w: &[f64]) -> Vec<f64> {
        (&self.y_p + &self.z * DVector::from_column_slice(w)).iter().copied().collect()
    }
}

fn eliminate(prog: &LseProgram) -> Result<Option<Elimination>> {
    let n = prog.n_vars();
    let eqs = prog.equalities();
    if eqs.is_empty() {
        return Ok(None);
    }
    let p = eqs.len();
    let rows = p.max(n);
    let mut a = DMatrix::zeros(rows, n);
    let mut b = DVector::zeros(p);
    for (r, row) in eqs.iter().enumerate() {
        for j in 0..n {
            a[(r, j)] = row.coeffs[j];
        }
        b[r] = row.rhs;
    }
    let svd = a.clone().svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u.as_ref(), svd.v_t.as_ref()) else {
        return Err(Error::Modeling("SVD failed on equality rows".into()));
    };
    let smax = svd.singular_values.max();
    let thresh = smax * 1e-12 * rows as f64;
    let mut b_full = DVector::zeros(rows);
    b_full.rows_mut(0, p).copy_from(&b);
    let mut y_p = DVector::zeros(n);
    let mut null_cols = Vec::new();
    for k in 0..svd.singular_values.len() {
        let s = svd.singular_values[k];
        let vk = v_t.row(k).transpose();
        if s > thresh {
            let coef = u.column(k).dot(&b_full) / s;
            y_p += vk * coef;
        } else {
            null_cols.push(vk);
        }
    }
    let resid = (a.rows(0, p) * &y_p - &b).amax();
    if resid > 1e-9 * (1.0 + b.amax()) {
        return Err(Error::Infeasible {
            iteration: 0,
            detail: format!("equality rows are inconsistent (residual {resid:.3e})"),
        });
    }
    let z = if null_cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&null_cols)
    };
    Ok(Some(Elimination { y_p, z }))
}

fn reduce(prog: &LseProgram, elim: Option<&Elimination>) -> Result<Reduced> {
    let n = prog.n_vars();
    let mut rows: Vec<(Vec<f64>, f64)> =
        prog.affine_rows().iter().map(|r| (r.coeffs.clone(), r.rhs)).collect();
    let (lower, upper) = prog.bounds();
    for i in 0..n {
        if lower[i].is_finite() {
            let mut a = vec![0.0; n];
            a[i] = -1.0;
            rows.push((a, -lower[i]));
        }
        if upper[i].is_finite() {
            let mut a = vec![0.0; n];
            a[i] = 1.0;
            rows.push((a, upper[i]));
        }
    }
    let obj = prog.objective();
    match elim {
        None => {
            let mut g = DMatrix::zeros(rows.len(), n);
            let mut h = DVector::zeros(rows.len());
            for (r, (a, b)) in rows.iter().enumerate() {
                for j in 0..n {
                    g[(r, j)] = a[j];
                }
                h[r] = *b;
            }
            Ok(Reduced {
                n,
                c: DVector::from_column_slice(&obj.linear),
                d: obj.constant,
                obj_lse: obj.lse.clone(),
                cons_lse: prog.lse_constraints().to_vec(),
                g,
                h,
            })
        }
        Some(el) => {
            let k = el.z.ncols();
            let c_y = DVector::from_column_slice(&obj.linear);
            let c = el.z.transpose() * &c_y;
            let d = obj.constant + c_y.dot(&el.y_p);
            let y_p: Vec<f64> = el.y_p.iter().copied().collect();
            let obj_lse = obj
                .lse
                .iter()
                .map(|(wt, f)| Ok((*wt, f.reparametrize(&y_p, &el.z)?)))
                .collect::<Result<Vec<_>>>()?;
            let cons_lse = prog
                .lse_constraints()
                .iter()
                .map(|f| f.reparametrize(&y_p, &el.z))
                .collect::<Result<Vec<_>>>()?;
            let mut g_rows = Vec::new();
            let mut h = Vec::new();
            for (a, b) in rows {
                let a_y = DVector::from_vec(a);
                let a_w = el.z.transpose() * &a_y;
                let rhs = b - a_y.dot(&el.y_p);
                if a_w.amax() <= 1e-14 * (1.0 + a_y.amax()) {
                    // Row constant on the affine subspace.
                    if rhs <= 0.0 {
                        return Err(Error::Infeasible {
                            iteration: 0,
                            detail: "affine row has no interior on the equality subspace".into(),
                        });
                    }
                    continue;
                }
                g_rows.push(a_w.transpose());
                h.push(rhs);
            }
            let g = if g_rows.is_empty() { DMatrix::zeros(0, k) } else { DMatrix::from_rows(&g_rows) };
            Ok(Reduced { n: k, c, d, obj_lse, cons_lse, g, h: DVector::from_vec(h) })
        }
    }
}

/// Radius of the box around the starting point searched by phase I; keeps the
/// auxiliary problem bounded when the feasible set is not.
const PHASE1_RADIUS: f64 = 1e3;

/// Phase I: minimize `s` subject to `g_i(w) ≤ s`, `s ≥ −1`, `|w − w0| ≤ R`.
/// Returns an interior point of the original feasible set or `None`.
fn phase_one(prob: &Reduced, w0: &[f64], opts: &SolverOptions) -> Result<(Option<Vec<f64>>, usize)> {
    let n = prob.n;
    let s0 = prob.max_constraint(w0).max(0.0) + 1.0;
    let mut start = w0.to_vec();
    start.push(s0);
    let mut ext = |f: &LseFunction| -> Result<LseFunction> {
        let mut terms = f.terms().to_vec();
        for t in &mut terms {
            t.exponents.push(-1.0);
        }
        LseFunction::new(n + 1, terms)
    };
    let cons_lse = prob.cons_lse.iter().map(&mut ext).collect::<Result<Vec<_>>>()?;
    let mg = prob.g.nrows();
    let mut g = DMatrix::zeros(mg + 1 + 2 * n, n + 1);
    let mut h = DVector::zeros(mg + 1 + 2 * n);
    for r in 0..mg {
        for j in 0..n {
            g[(r, j)] = prob.g[(r, j)];
        }
        g[(r, n)] = -1.0;
        h[r] = prob.h[r];
    }
    g[(mg, n)] = -1.0;
    h[mg] = 1.0;
    for j in 0..n {
        let r = mg + 1 + 2 * j;
        g[(r, j)] = 1.0;
        h[r] = w0[j] + PHASE1_RADIUS;
        g[(r + 1, j)] = -1.0;
        h[r + 1] = PHASE1_RADIUS - w0[j];
    }
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    let aux = Reduced { n: n + 1, c, d: 0.0, obj_lse: Vec::new(), cons_lse, g, h };
    let target = -1e-3;
    let stop = |w: &[f64]| w[n] < target;
    let phase_opts = SolverOptions { tol: opts.tol.max(1e-10), ..*opts };
    let out = barrier_method(&aux, start, &phase_opts, Some(&stop));
    let s = out.w[n];
    let w = out.w[..n].to_vec();
    if s < 0.0 && prob.max_constraint(&w) < 0.0 {
        Ok((Some(w), out.newton_steps))
    } else {
        Ok((None, out.newton_steps))
    }
}

/// Minimizes `prog` starting from `y0`. A phase I is run first when `y0` is
/// not strictly feasible for the inequality constraints.
pub fn solve(prog: &LseProgram, y0: &[f64], opts: &SolverOptions) -> Result<Solution> {
    check_len(prog.n_vars(), y0.len())?;
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("starting point must be finite".into()));
    }
    let elim = eliminate(prog)?;
    let prob = reduce(prog, elim.as_ref())?;
    let w0: Vec<f64> = match &elim {
        None => y0.to_vec(),
        Some(el) => {
            let diff = DVector::from_column_slice(y0) - &el.y_p;
            (el.z.transpose() * diff).iter().copied().collect()
        }
    };
    let to_y = |w: &[f64]| match &elim {
        None => w.to_vec(),
        Some(el) => el.to_y(w),
    };
    let mut used_phase1 = false;
    let mut steps = 0;
    let start = if prob.m() == 0 || prob.max_constraint(&w0) < 0.0 {
        w0
    } else {
        used_phase1 = true;
        let (found, s) = phase_one(&prob, &w0, opts)?;
        steps += s;
        match found {
            Some(w) => w,
            None => {
                let y = to_y(&w0);
                return Ok(Solution {
                    objective_value: prog.objective_value(&y),
                    y,
                    kkt_residual: f64::INFINITY,
                    stationarity: f64::INFINITY,
                    duality_gap: f64::INFINITY,
                    status: SolveStatus::Infeasible,
                    newton_steps: steps,
                    used_phase1,
                });
            }
        }
    };
    let out = barrier_method(&prob, start, opts, None);
    steps += out.newton_steps;
    let y = to_y(&out.w);
    let gap = prob.m() as f64 / out.t;
    let status = if out.status == SolveStatus::Optimal && out.kkt > opts.tol {
        SolveStatus::MaxIter
    } else {
        out.status
    };
    Ok(Solution {
        objective_value: prog.objective_value(&y),
        y,
        kkt_residual: out.kkt,
        stationarity: out.stationarity,
        duality_gap: gap,
        status,
        newton_steps: steps,
        used_phase1,
    })
}
