//! DC-based successive convex approximation for AF relaying.
//!
//! In log variables `x̄ = ln x` every throughput is a difference of convex
//! functions, `2τ_i = v̄_i − ū_i` with `ū_i = log₂ u_i(e^{x̄})` and
//! `v̄_i = log₂ v_i(e^{x̄})` both log-sum-exp. Each iteration replaces `v̄_i` by
//! its tangent plane at the previous point and the relay energy caps by the
//! affine rows obtained from the AGM bound on `Σ_j P_j h̄_ji`.
//!
//! Variables use the GP layout `[P̄ (N), p̄ (N), t̄ (N), ᾱ (N), τ?]`.

use nalgebra::DMatrix;

use crate::convexcore::{AffineRow, ExpTerm, LseFunction, LseProgram};
use crate::error::{check_len, Error, Result};
use crate::linkmodel::{throughput_af, Allocation, PhiCoefficients, SystemParams};
use crate::netgen::NetworkInstance;
use crate::sca_gp::{eh_weights, AfProblem, GpLayout, RELAY_FLOOR, SPLIT_FLOOR};

const LN_2: f64 = std::f64::consts::LN_2;

/// Log-domain allocation `(P̄, p̄, t̄, ᾱ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogVars {
    pub bs: Vec<f64>,
    pub relay: Vec<f64>,
    pub info: Vec<f64>,
    pub split: Vec<f64>,
}

impl LogVars {
    pub fn from_allocation(alloc: &Allocation) -> Self {
        let ln = |v: &[f64]| v.iter().map(|x| x.ln()).collect();
        Self {
            bs: ln(&alloc.bs_power),
            relay: ln(&alloc.relay_power),
            info: ln(&alloc.info_share),
            split: ln(&alloc.split),
        }
    }

    /// Reads the first `4N` entries of a layout vector.
    pub fn from_slice(n_cells: usize, y: &[f64]) -> Result<Self> {
        if y.len() < 4 * n_cells {
            return Err(Error::Dimension { expected: 4 * n_cells, got: y.len() });
        }
        let part = |k: usize| y[k * n_cells..(k + 1) * n_cells].to_vec();
        Ok(Self { bs: part(0), relay: part(1), info: part(2), split: part(3) })
    }

    pub fn n_cells(&self) -> usize {
        self.bs.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(4 * self.n_cells());
        y.extend_from_slice(&self.bs);
        y.extend_from_slice(&self.relay);
        y.extend_from_slice(&self.info);
        y.extend_from_slice(&self.split);
        y
    }

    /// Allocation with `t` taken as `1 − e^{ᾱ}` rather than `e^{t̄}`.
    pub fn to_allocation(&self) -> Result<Allocation> {
        let exp = |v: &[f64]| v.iter().map(|x| x.exp()).collect();
        Allocation::new(exp(&self.bs), exp(&self.relay), exp(&self.split))
    }
}

fn lse(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Log of every term of `u_i` and of the signal term, at log point `y`.
fn log_terms(y: &[f64], phi: &PhiCoefficients, i: usize) -> (Vec<f64>, f64) {
    let n = phi.n_cells();
    let l = GpLayout::new(n, 0);
    let (pi, ti) = (y[l.relay(i)], y[l.info(i)]);
    let mut z = Vec::with_capacity(2 * n + n * n);
    for j in 0..n {
        if j != i {
            z.push(phi.phi1(i, j).ln() + y[l.bs(j)] + pi + ti);
        }
        z.push(phi.phi2(i, j).ln() + y[l.bs(j)] + ti);
        z.push(phi.phi3(i, j).ln() + y[l.relay(j)]);
        if j != i {
            for k in 0..n {
                z.push(phi.phi4(i, j, k).ln() + y[l.bs(k)] + y[l.relay(j)] + ti);
            }
        }
    }
    z.push(0.0);
    let signal = phi.phi1(i, i).ln() + y[l.bs(i)] + pi + ti;
    (z, signal)
}

/// `(ū_i, v̄_i)` per cell at a log point (first `4N` entries of `y`).
pub fn eval_ubar_vbar(y: &[f64], phi: &PhiCoefficients) -> (Vec<f64>, Vec<f64>) {
    let n = phi.n_cells();
    let mut ub = Vec::with_capacity(n);
    let mut vb = Vec::with_capacity(n);
    for i in 0..n {
        let (mut z, s) = log_terms(y, phi, i);
        ub.push(lse(&z) / LN_2);
        z.push(s);
        vb.push(lse(&z) / LN_2);
    }
    (ub, vb)
}

/// Gradient of `v̄_i` over the `4N` layout for every cell. Each entry is
/// `x_ℓ ∂v_i/∂x_ℓ / (v_i ln 2)`; the `ᾱ` block is zero.
pub fn grad_vbar(y: &[f64], phi: &PhiCoefficients) -> Vec<Vec<f64>> {
    let n = phi.n_cells();
    let l = GpLayout::new(n, 0);
    let x: Vec<f64> = y[..4 * n].iter().map(|v| v.exp()).collect();
    let (bs, relay, info) = (&x[..n], &x[n..2 * n], &x[2 * n..3 * n]);
    (0..n)
        .map(|i| {
            let (pi, ti) = (relay[i], info[i]);
            let mut g = vec![0.0; 4 * n];
            let noise_relay: f64 = (0..n).map(|j| phi.phi3(i, j) * relay[j]).sum();
            let mut v = 1.0 + noise_relay;
            for j in 0..n {
                v += phi.phi1(i, j) * bs[j] * pi * ti + phi.phi2(i, j) * bs[j] * ti;
                if j != i {
                    for k in 0..n {
                        v += phi.phi4(i, j, k) * bs[k] * relay[j] * ti;
                    }
                }
            }
            for m in 0..n {
                // P̄_m: every term carrying P_m
                let mut d = (phi.phi1(i, m) * pi + phi.phi2(i, m)) * bs[m] * ti;
                for j in (0..n).filter(|&j| j != i) {
                    d += phi.phi4(i, j, m) * bs[m] * relay[j] * ti;
                }
                g[l.bs(m)] = d;
                // p̄_m
                g[l.relay(m)] = if m == i {
                    (0..n).map(|j| phi.phi1(i, j) * bs[j]).sum::<f64>() * pi * ti + phi.phi3(i, i) * pi
                } else {
                    phi.phi3(i, m) * relay[m] + (0..n).map(|k| phi.phi4(i, m, k) * bs[k]).sum::<f64>() * relay[m] * ti
                };
            }
            // t̄_i multiplies everything except the constant and φ3 terms
            g[l.info(i)] = v - 1.0 - noise_relay;
            let scale = 1.0 / (v * LN_2);
            g.iter_mut().for_each(|e| *e *= scale);
            g
        })
        .collect()
}

/// Tangent data of one DC iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct DcExpansion {
    /// Log point (`4N` entries) the surrogates touch at.
    pub x_prev: Vec<f64>,
    pub vbar: Vec<f64>,
    pub grad: Vec<Vec<f64>>,
    /// `λ[(j, i)]`, columns sum to one.
    pub lambda: DMatrix<f64>,
    /// `c_i = ln η + Σ_j λ_ji (ln h̄_ji − ln λ_ji)`.
    pub c: Vec<f64>,
}

impl DcExpansion {
    pub fn new(x_prev: &[f64], net: &NetworkInstance, params: &SystemParams, phi: &PhiCoefficients) -> Result<Self> {
        let n = net.n_cells();
        check_len(4 * n, x_prev.len())?;
        if x_prev.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("expansion point must be finite".into()));
        }
        let x_prev = x_prev.to_vec();
        let (_, vbar) = eval_ubar_vbar(&x_prev, phi);
        let grad = grad_vbar(&x_prev, phi);
        let bs0: Vec<f64> = x_prev[..n].iter().map(|v| v.exp()).collect();
        let lambda = eh_weights(net, &bs0)?;
        let c = (0..n)
            .map(|i| {
                params.eta.ln()
                    + (0..n)
                        .map(|j| {
                            let w = lambda[(j, i)];
                            w * (net.h(j, i).ln() - w.ln())
                        })
                        .sum::<f64>()
            })
            .collect();
        Ok(Self { x_prev, vbar, grad, lambda, c })
    }

    pub fn n_cells(&self) -> usize {
        self.vbar.len()
    }
}

/// Tangent-plane value `v̄_i(x̄⁰) + ∇v̄_i(x̄⁰)ᵀ(x̄ − x̄⁰)` for cell `i`.
pub fn linearize_vbar(exp: &DcExpansion, i: usize, y: &[f64]) -> f64 {
    exp.vbar[i] + exp.grad[i].iter().zip(y).zip(&exp.x_prev).map(|((g, a), b)| g * (a - b)).sum::<f64>()
}

/// Row `p̄_i − ᾱ_i − Σ_j λ_ji P̄_j ≤ c_i`, padded to `n_vars`.
pub fn eh_affine_constraint(exp: &DcExpansion, i: usize, n_vars: usize) -> AffineRow {
    let n = exp.n_cells();
    let l = GpLayout::new(n, 0);
    let mut a = vec![0.0; n_vars];
    a[l.relay(i)] = 1.0;
    a[l.split(i)] = -1.0;
    for j in 0..n {
        a[l.bs(j)] -= exp.lambda[(j, i)];
    }
    AffineRow::new(a, exp.c[i])
}

/// `ln u_i` as an LSE function over `n_vars` variables.
fn u_lse(phi: &PhiCoefficients, i: usize, n_vars: usize) -> Result<LseFunction> {
    let n = phi.n_cells();
    let l = GpLayout::new(n, 0);
    let term = |coeff: f64, vars: &[usize]| {
        let mut e = vec![0.0; n_vars];
        for &v in vars {
            e[v] += 1.0;
        }
        ExpTerm::new(coeff, e, 0.0)
    };
    let (pi, ti) = (l.relay(i), l.info(i));
    let mut terms = Vec::new();
    for j in 0..n {
        if j != i {
            terms.push(term(phi.phi1(i, j), &[l.bs(j), pi, ti]));
        }
        terms.push(term(phi.phi2(i, j), &[l.bs(j), ti]));
        terms.push(term(phi.phi3(i, j), &[l.relay(j)]));
        if j != i {
            for k in 0..n {
                terms.push(term(phi.phi4(i, j, k), &[l.bs(k), l.relay(j), ti]));
            }
        }
    }
    terms.push(term(1.0, &[]));
    LseFunction::new(n_vars, terms)
}

/// A compiled DC subproblem with its interior starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct DcSubproblem {
    pub program: LseProgram,
    pub y0: Vec<f64>,
}

/// Per-instance data for the DC path (joint optimization only).
#[derive(Debug, Clone)]
pub struct AfDcModel {
    pub layout: GpLayout,
    pub problem: AfProblem,
    net: NetworkInstance,
    params: SystemParams,
    phi: PhiCoefficients,
}

impl AfDcModel {
    pub fn new(net: &NetworkInstance, params: &SystemParams, phi: &PhiCoefficients, problem: AfProblem) -> Result<Self> {
        params.validate()?;
        check_len(net.n_cells(), phi.n_cells())?;
        if let AfProblem::SumPower { tau_min } = problem {
            if !(tau_min >= 0.0 && tau_min.is_finite()) {
                return Err(Error::Config(format!("throughput floor must be nonnegative, got {tau_min}")));
            }
        }
        let n_extra = usize::from(problem == AfProblem::MaxMin);
        Ok(Self {
            layout: GpLayout::new(net.n_cells(), n_extra),
            problem,
            net: net.clone(),
            params: *params,
            phi: phi.clone(),
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn expansion(&self, alloc: &Allocation) -> Result<DcExpansion> {
        check_len(self.layout.n_cells, alloc.n_cells())?;
        DcExpansion::new(&LogVars::from_allocation(alloc).to_vec(), &self.net, &self.params, &self.phi)
    }

    /// Box, split-sum and energy-harvesting constraints shared by all problems.
    fn base_program(&self, exp: &DcExpansion) -> Result<LseProgram> {
        let l = &self.layout;
        let nv = l.n_vars();
        let mut prog = LseProgram::new(nv);
        let floor = SPLIT_FLOOR.ln();
        for i in 0..l.n_cells {
            prog.set_bounds(l.bs(i), self.params.p_min.ln(), self.params.p_max.ln())?;
            prog.set_bounds(l.relay(i), (RELAY_FLOOR * self.params.sigma).ln(), f64::INFINITY)?;
            prog.set_bounds(l.info(i), floor, 0.0)?;
            prog.set_bounds(l.split(i), floor, 0.0)?;
            let mut et = vec![0.0; nv];
            et[l.info(i)] = 1.0;
            let mut ea = vec![0.0; nv];
            ea[l.split(i)] = 1.0;
            prog.add_lse_constraint(LseFunction::new(nv, vec![ExpTerm::new(1.0, et, 0.0), ExpTerm::new(1.0, ea, 0.0)])?)?;
            prog.add_affine(eh_affine_constraint(exp, i, nv))?;
        }
        Ok(prog)
    }

    /// `ū_i − (tangent of v̄_i) + 2·rhs ≤ 0` scaled by `ln 2`, where `rhs` is
    /// the variable `τ` (when `tau_var` is set) or the constant `tau_const`.
    fn rate_constraint(&self, exp: &DcExpansion, i: usize, tau_var: Option<usize>, tau_const: f64) -> Result<LseFunction> {
        let nv = self.layout.n_vars();
        let mut c: Vec<f64> = (0..nv).map(|k| if k < exp.grad[i].len() { -LN_2 * exp.grad[i][k] } else { 0.0 }).collect();
        if let Some(t) = tau_var {
            c[t] += 2.0 * LN_2;
        }
        let g0: f64 = exp.grad[i].iter().zip(&exp.x_prev).map(|(g, x)| g * x).sum();
        let d = LN_2 * (g0 - exp.vbar[i] + 2.0 * tau_const);
        u_lse(&self.phi, i, nv)?.plus_affine(&c, d)
    }

    /// Sum-rate subproblem: minimize `Σ_i [ū_i − tangent_i]`.
    pub fn build_p1_dc(&self, exp: &DcExpansion) -> Result<DcSubproblem> {
        if self.problem != AfProblem::SumRate {
            return Err(Error::Config(format!("model prepared for {:?}", self.problem)));
        }
        let l = &self.layout;
        let nv = l.n_vars();
        let mut prog = self.base_program(exp)?;
        let mut linear = vec![0.0; nv];
        let mut constant = 0.0;
        for i in 0..l.n_cells {
            for (k, g) in exp.grad[i].iter().enumerate() {
                linear[k] -= g;
            }
            let g0: f64 = exp.grad[i].iter().zip(&exp.x_prev).map(|(g, x)| g * x).sum();
            constant -= exp.vbar[i] - g0;
            prog.add_objective_lse(1.0 / LN_2, u_lse(&self.phi, i, nv)?)?;
        }
        prog.set_linear_objective(linear, constant)?;
        Ok(DcSubproblem { program: prog, y0: self.start_point(exp, &[]) })
    }

    /// Max-min subproblem: maximize `τ` subject to `tangent_i − ū_i ≥ 2τ`, `τ ≥ 0`.
    pub fn build_p2_dc(&self, exp: &DcExpansion) -> Result<DcSubproblem> {
        if self.problem != AfProblem::MaxMin {
            return Err(Error::Config(format!("model prepared for {:?}", self.problem)));
        }
        let l = &self.layout;
        let tau = l.extra(0);
        let mut prog = self.base_program(exp)?;
        let mut linear = vec![0.0; l.n_vars()];
        linear[tau] = -1.0;
        prog.set_linear_objective(linear, 0.0)?;
        prog.set_bounds(tau, 0.0, f64::INFINITY)?;
        for i in 0..l.n_cells {
            prog.add_lse_constraint(self.rate_constraint(exp, i, Some(tau), 0.0)?)?;
        }
        let (ub, vb) = eval_ubar_vbar(&exp.x_prev, &self.phi);
        let tau_now = ub.iter().zip(&vb).map(|(u, v)| 0.5 * (v - u)).fold(f64::INFINITY, f64::min);
        Ok(DcSubproblem { program: prog, y0: self.start_point(exp, &[0.5 * tau_now.max(0.0)]) })
    }

    /// Sum-power subproblem: minimize `ln Σ_i e^{P̄_i}` subject to
    /// `tangent_i − ū_i ≥ 2τ_min`.
    pub fn build_p3_dc(&self, exp: &DcExpansion) -> Result<DcSubproblem> {
        let AfProblem::SumPower { tau_min } = self.problem else {
            return Err(Error::Config("model not prepared for sum-power minimization".into()));
        };
        let l = &self.layout;
        let nv = l.n_vars();
        let mut prog = self.base_program(exp)?;
        let terms = (0..l.n_cells)
            .map(|i| {
                let mut e = vec![0.0; nv];
                e[l.bs(i)] = 1.0;
                ExpTerm::new(1.0, e, 0.0)
            })
            .collect();
        prog.add_objective_lse(1.0, LseFunction::new(nv, terms)?)?;
        for i in 0..l.n_cells {
            prog.add_lse_constraint(self.rate_constraint(exp, i, None, tau_min)?)?;
        }
        Ok(DcSubproblem { program: prog, y0: self.start_point(exp, &[]) })
    }

    pub fn build(&self, exp: &DcExpansion) -> Result<DcSubproblem> {
        match self.problem {
            AfProblem::SumRate => self.build_p1_dc(exp),
            AfProblem::MaxMin => self.build_p2_dc(exp),
            AfProblem::SumPower { .. } => self.build_p3_dc(exp),
        }
    }

    /// Expansion point pulled slightly inside the tight constraints.
    fn start_point(&self, exp: &DcExpansion, extra: &[f64]) -> Vec<f64> {
        const NUDGE: f64 = 1e-7;
        let l = &self.layout;
        let n = l.n_cells;
        let (lo, hi) = (self.params.p_min.ln(), self.params.p_max.ln());
        let margin = 1e-9f64.min(0.25 * (hi - lo));
        let relay_lo = (RELAY_FLOOR * self.params.sigma).ln();
        let mut y: Vec<f64> = exp
            .x_prev
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                if k < n {
                    v.clamp(lo + margin, hi - margin)
                } else if k < 2 * n {
                    (v - 3.0 * NUDGE).max(relay_lo + 1e-9)
                } else {
                    (v - NUDGE).min(-NUDGE)
                }
            })
            .collect();
        y.extend_from_slice(extra);
        y
    }

    /// Allocation from a subproblem solution; `t` is reset to `1 − α`.
    pub fn decode(&self, y: &[f64]) -> Result<Allocation> {
        check_len(self.layout.n_vars(), y.len())?;
        LogVars::from_slice(self.layout.n_cells, y)?.to_allocation()
    }

    /// `Σ_i (v̄_i − ū_i)` at an allocation, i.e. twice the sum throughput.
    pub fn true_objective(&self, alloc: &Allocation) -> f64 {
        2.0 * throughput_af(alloc, &self.phi).iter().sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkmodel::{phi_coeffs, relay_cap_af, sinr_af};
    use crate::netgen::NetworkInstance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize, seed: u64) -> (NetworkInstance, SystemParams, PhiCoefficients) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = || DMatrix::from_fn(n, n, |i, j| if i == j { 1e-5 } else { 1e-7 } * rng.random_range(0.5..2.0));
        let net = NetworkInstance::from_gains(m(), m()).unwrap();
        let params = SystemParams::new(0.5, 1e-13, 0.4, 40.0, 1.0, 0.5).unwrap();
        let phi = phi_coeffs(&net, params.sigma);
        (net, params, phi)
    }

    fn random_alloc(rng: &mut ChaCha8Rng, n: usize, net: &NetworkInstance, params: &SystemParams) -> Allocation {
        let bs: Vec<f64> = (0..n).map(|_| rng.random_range(params.p_min..params.p_max)).collect();
        let split: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
        let a = Allocation::new(bs.clone(), vec![1.0; n], split.clone()).unwrap();
        let caps = relay_cap_af(&a, net, params);
        let relay = caps.iter().map(|c| c * rng.random_range(0.1..1.0)).collect();
        Allocation::new(bs, relay, split).unwrap()
    }

    #[test]
    fn difference_matches_link_sinr() {
        let (net, params, phi) = toy(3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let a = random_alloc(&mut rng, 3, &net, &params);
            let y = LogVars::from_allocation(&a).to_vec();
            let (u, v) = eval_ubar_vbar(&y, &phi);
            for (i, g) in sinr_af(&a, &phi).iter().enumerate() {
                let want = g.ln_1p() / LN_2;
                assert!(((v[i] - u[i]) - want).abs() <= 1e-10 * want.max(1e-3));
            }
        }
    }

    #[test]
    fn vanishing_powers_give_zero() {
        let (_, _, phi) = toy(2, 2);
        let (u, v) = eval_ubar_vbar(&[-60.0; 8], &phi);
        assert!(u.iter().chain(&v).all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn single_cell_rate() {
        // σ = 1, gains 2: φ1 = 4, φ2 = φ3 = 2
        let net = NetworkInstance::from_gains(DMatrix::from_element(1, 1, 2.0), DMatrix::from_element(1, 1, 2.0)).unwrap();
        let phi = phi_coeffs(&net, 1.0);
        let y = [0.5f64.ln(), 0.0, 0.0, 0.5f64.ln()];
        let (u, v) = eval_ubar_vbar(&y, &phi);
        let p: f64 = 0.5;
        let want = (1.0 + 4.0 * p / (1.0 + 2.0 * p + 2.0)).log2();
        assert!(((v[0] - u[0]) - want).abs() < 1e-12);
        // dv̄/dP̄ = (φ1 P p t + φ2 P t)/(v ln 2)
        let g = grad_vbar(&y, &phi);
        let vv = 1.0 + 4.0 * p + 2.0 * p + 2.0;
        assert!((g[0][0] - (4.0 * p + 2.0 * p) / (vv * LN_2)).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (net, params, phi) = toy(3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-5;
        for _ in 0..20 {
            let y = LogVars::from_allocation(&random_alloc(&mut rng, 3, &net, &params)).to_vec();
            let g = grad_vbar(&y, &phi);
            for k in 0..12 {
                let (mut yp, mut ym) = (y.clone(), y.clone());
                yp[k] += h;
                ym[k] -= h;
                let (_, vp) = eval_ubar_vbar(&yp, &phi);
                let (_, vm) = eval_ubar_vbar(&ym, &phi);
                for i in 0..3 {
                    let fd = (vp[i] - vm[i]) / (2.0 * h);
                    assert!((fd - g[i][k]).abs() <= 1e-6 * g[i][k].abs().max(1e-4), "cell {i} var {k}");
                }
            }
            // out-of-cell info shares and the split block never enter v̄_i
            assert_eq!(g[0][2 * 3 + 1], 0.0);
            assert!(g.iter().all(|gi| gi[9..].iter().all(|e| *e == 0.0)));
        }
    }

    #[test]
    fn tangent_is_global_lower_bound() {
        let (net, params, phi) = toy(2, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x0 = LogVars::from_allocation(&random_alloc(&mut rng, 2, &net, &params)).to_vec();
        let exp = DcExpansion::new(&x0, &net, &params, &phi).unwrap();
        for i in 0..2 {
            assert!((linearize_vbar(&exp, i, &x0) - exp.vbar[i]).abs() < 1e-12);
        }
        for _ in 0..500 {
            let y: Vec<f64> = x0.iter().map(|v| v + rng.random_range(-3.0..3.0)).collect();
            let (_, v) = eval_ubar_vbar(&y, &phi);
            for i in 0..2 {
                assert!(linearize_vbar(&exp, i, &y) <= v[i] + 1e-9 * v[i].abs().max(1.0));
            }
        }
    }

    #[test]
    fn eh_row_is_exact_for_one_cell_and_conservative_otherwise() {
        let net = NetworkInstance::from_gains(DMatrix::from_element(1, 1, 3e-5), DMatrix::from_element(1, 1, 1e-5)).unwrap();
        let params = SystemParams::new(0.5, 1e-13, 0.4, 40.0, 1.0, 0.5).unwrap();
        let phi = phi_coeffs(&net, params.sigma);
        let exp = DcExpansion::new(&[1.0, -3.0, -0.5, -1.0], &net, &params, &phi).unwrap();
        assert!((exp.lambda[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((exp.c[0] - (0.5f64.ln() + 3e-5f64.ln())).abs() < 1e-12);

        let (net, params, phi) = toy(3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a0 = random_alloc(&mut rng, 3, &net, &params);
        let exp = DcExpansion::new(&LogVars::from_allocation(&a0).to_vec(), &net, &params, &phi).unwrap();
        for i in 0..3 {
            assert!((exp.lambda.column(i).sum() - 1.0).abs() < 1e-12);
        }
        let mut checked = 0;
        for _ in 0..2000 {
            let a = random_alloc(&mut rng, 3, &net, &params);
            let y = LogVars::from_allocation(&a).to_vec();
            let caps = relay_cap_af(&a, &net, &params);
            for i in 0..3 {
                if eh_affine_constraint(&exp, i, 12).residual(&y) <= 0.0 {
                    checked += 1;
                    assert!(a.relay_power[i] <= caps[i] * (1.0 + 1e-9));
                }
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn p1_program_matches_true_objective_at_touch_point() {
        let (net, params, phi) = toy(3, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_alloc(&mut rng, 3, &net, &params);
        let model = AfDcModel::new(&net, &params, &phi, AfProblem::SumRate).unwrap();
        let exp = model.expansion(&a).unwrap();
        let sub = model.build_p1_dc(&exp).unwrap();
        let y = LogVars::from_allocation(&a).to_vec();
        let val = sub.program.objective_value(&y);
        assert!((val + model.true_objective(&a)).abs() < 1e-9);
        assert_eq!(sub.program.max_violation(&sub.y0), 0.0);
    }

    #[test]
    fn wrong_builder_is_rejected() {
        let (net, params, phi) = toy(2, 12);
        let model = AfDcModel::new(&net, &params, &phi, AfProblem::MaxMin).unwrap();
        let a = random_alloc(&mut ChaCha8Rng::seed_from_u64(1), 2, &net, &params);
        let exp = model.expansion(&a).unwrap();
        assert!(model.build_p1_dc(&exp).is_err());
        assert!(model.build_p3_dc(&exp).is_err());
        assert!(model.build_p2_dc(&exp).is_ok());
    }
}
