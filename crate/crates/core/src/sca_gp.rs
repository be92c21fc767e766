//! GP-based successive convex approximation.
//!
//! Each iteration replaces the signal-plus-interference posynomials `v_i` and
//! the relay energy caps by their AGM monomial lower bounds at the current
//! point, which turns the nonconvex problems into geometric programs.
//!
//! GP variables are laid out as `[P (N), p (N), t (N), α (N), extra...]`
//! where `t` is the information share `1 − α` and the extra slots hold the
//! common throughput (max-min) or the per-cell DF SINR targets.

use nalgebra::DMatrix;

use crate::convexcore::{gp_to_lse, GeometricProgram, LseProgram, Monomial, Posynomial};
use crate::error::{check_len, Error, Result};
use crate::linkmodel::{received_power, sinr_df, Allocation, PhiCoefficients, SystemParams};
use crate::netgen::NetworkInstance;

/// Smallest AGM weight kept before renormalizing.
pub const AGM_WEIGHT_FLOOR: f64 = 1e-12;
/// Lower bound on α and t inside subproblems.
pub const SPLIT_FLOOR: f64 = 1e-6;
/// Lower bound on relay power inside subproblems, as a fraction of the noise
/// power. Switched-off relays otherwise drift toward zero without bound.
pub const RELAY_FLOOR: f64 = 1e-6;

const LN_2: f64 = std::f64::consts::LN_2;

/// Index map for GP variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GpLayout {
    pub n_cells: usize,
    pub n_extra: usize,
}

impl GpLayout {
    pub fn new(n_cells: usize, n_extra: usize) -> Self {
        Self { n_cells, n_extra }
    }

    pub fn n_vars(&self) -> usize {
        4 * self.n_cells + self.n_extra
    }

    pub fn bs(&self, i: usize) -> usize {
        i
    }

    pub fn relay(&self, i: usize) -> usize {
        self.n_cells + i
    }

    pub fn info(&self, i: usize) -> usize {
        2 * self.n_cells + i
    }

    pub fn split(&self, i: usize) -> usize {
        3 * self.n_cells + i
    }

    pub fn extra(&self, k: usize) -> usize {
        4 * self.n_cells + k
    }

    /// Packs an allocation (and extra values) into a GP point.
    pub fn point(&self, alloc: &Allocation, extra: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_cells, alloc.n_cells())?;
        check_len(self.n_extra, extra.len())?;
        let mut x = Vec::with_capacity(self.n_vars());
        x.extend_from_slice(&alloc.bs_power);
        x.extend_from_slice(&alloc.relay_power);
        x.extend_from_slice(&alloc.info_share);
        x.extend_from_slice(&alloc.split);
        x.extend_from_slice(extra);
        Ok(x)
    }
}

/// Per-cell posynomials with `1 + γ_i = v_i / u_i`: `u_i` collects interference
/// and noise, `v_i = u_i + φ1_ii P_i p_i t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct UvFunctions {
    pub u: Vec<Posynomial>,
    pub v: Vec<Posynomial>,
}

impl UvFunctions {
    /// `Σ_i ln(u_i/v_i)`, the log of the product the GP iterations decrease.
    pub fn log_ratio_product(&self, x: &[f64]) -> f64 {
        self.u.iter().zip(&self.v).map(|(u, v)| (u.eval(x) / v.eval(x)).ln()).sum()
    }
}

pub fn uv_functions(phi: &PhiCoefficients, layout: &GpLayout) -> UvFunctions {
    let n = phi.n_cells();
    let nv = layout.n_vars();
    let mono = |coeff: f64, vars: &[usize]| {
        let mut e = vec![0.0; nv];
        for &v in vars {
            e[v] += 1.0;
        }
        Monomial::new(coeff, e)
    };
    let mut us = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    for i in 0..n {
        let (pi, ti) = (layout.relay(i), layout.info(i));
        let mut u = Posynomial::empty(nv);
        for j in (0..n).filter(|&j| j != i) {
            u.push(mono(phi.phi1(i, j), &[layout.bs(j), pi, ti]));
        }
        for j in 0..n {
            u.push(mono(phi.phi2(i, j), &[layout.bs(j), ti]));
        }
        for j in 0..n {
            u.push(mono(phi.phi3(i, j), &[layout.relay(j)]));
        }
        for j in (0..n).filter(|&j| j != i) {
            for k in 0..n {
                u.push(mono(phi.phi4(i, j, k), &[layout.bs(k), layout.relay(j), ti]));
            }
        }
        u.push(mono(1.0, &[]));
        let mut v = Posynomial::empty(nv);
        v.push(mono(phi.phi1(i, i), &[layout.bs(i), pi, ti]));
        v.terms.extend(u.terms.iter().cloned());
        us.push(u);
        vs.push(v);
    }
    UvFunctions { u: us, v: vs }
}

/// Normalized term weights `m_k(x0)/f(x0)`, floored at [`AGM_WEIGHT_FLOOR`]
/// and renormalized.
pub fn agm_weights(posy: &Posynomial, x0: &[f64]) -> Result<Vec<f64>> {
    check_len(posy.n_vars, x0.len())?;
    if posy.terms.is_empty() {
        return Err(Error::Modeling("cannot condense an empty posynomial".into()));
    }
    if x0.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Domain("condensation point must be strictly positive".into()));
    }
    let logs: Vec<f64> = posy
        .terms
        .iter()
        .map(|m| m.coeff.ln() + m.exponents.iter().zip(x0).map(|(a, x)| a * x.ln()).sum::<f64>())
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Domain("posynomial is not finite at the condensation point".into()));
    }
    let mut w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v = (*v / total).max(AGM_WEIGHT_FLOOR));
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// Best local monomial lower bound `Π_k (m_k(x)/θ_k)^{θ_k}` of a posynomial.
pub fn condense_posynomial(posy: &Posynomial, x0: &[f64]) -> Result<Monomial> {
    if posy.terms.len() == 1 {
        return Ok(posy.terms[0].clone());
    }
    let w = agm_weights(posy, x0)?;
    Ok(condense_with_weights(posy, &w))
}

fn condense_with_weights(posy: &Posynomial, w: &[f64]) -> Monomial {
    let mut log_coeff = 0.0;
    let mut exponents = vec![0.0; posy.n_vars];
    for (m, &th) in posy.terms.iter().zip(w) {
        log_coeff += th * (m.coeff.ln() - th.ln());
        exponents.iter_mut().zip(&m.exponents).for_each(|(e, a)| *e += th * a);
    }
    Monomial::new(log_coeff.exp(), exponents)
}

/// Energy-harvesting weights `λ[(j, i)] = P_j⁰ h̄_ji / Σ_k P_k⁰ h̄_ki`.
pub fn eh_weights(net: &NetworkInstance, bs_power0: &[f64]) -> Result<DMatrix<f64>> {
    let n = net.n_cells();
    check_len(n, bs_power0.len())?;
    if bs_power0.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::Domain("expansion BS powers must be positive".into()));
    }
    let mut lam = DMatrix::zeros(n, n);
    for i in 0..n {
        let s = received_power(bs_power0, net, i);
        for j in 0..n {
            lam[(j, i)] = bs_power0[j] * net.h(j, i) / s;
        }
    }
    Ok(lam)
}

/// Monomial lower bounds on the AF relay caps,
/// `w_i = η α_i Π_j (P_j S_i / P_j⁰)^{λ_ji}` with `S_i = Σ_k P_k⁰ h̄_ki`.
pub fn eh_monomial_bound(
    net: &NetworkInstance,
    params: &SystemParams,
    bs_power0: &[f64],
    layout: &GpLayout,
) -> Result<Vec<Monomial>> {
    let lam = eh_weights(net, bs_power0)?;
    let n = net.n_cells();
    Ok((0..n)
        .map(|i| {
            let s = received_power(bs_power0, net, i);
            let mut e = vec![0.0; layout.n_vars()];
            e[layout.split(i)] = 1.0;
            let mut log_c = params.eta.ln();
            for j in 0..n {
                e[layout.bs(j)] = lam[(j, i)];
                log_c += lam[(j, i)] * (s.ln() - bs_power0[j].ln());
            }
            Monomial::new(log_c.exp(), e)
        })
        .collect())
}

/// How the BS powers enter a subproblem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BsBlock {
    Free,
    Fixed(f64),
}

/// How the relay powers enter a subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelayBlock {
    Free,
    /// Relays always transmit at their full harvested cap.
    TiedToCap,
}

/// How the power-splitting factors enter a subproblem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitBlock {
    Free,
    Fixed(f64),
}

/// Which variable blocks are optimized; anything else is frozen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockConfig {
    pub bs: BsBlock,
    pub relay: RelayBlock,
    pub split: SplitBlock,
}

impl BlockConfig {
    pub const JOINT: BlockConfig =
        BlockConfig { bs: BsBlock::Free, relay: RelayBlock::Free, split: SplitBlock::Free };

    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        if let BsBlock::Fixed(p) = self.bs {
            if !(p >= params.p_min && p <= params.p_max) {
                return Err(Error::Config(format!("frozen BS power {p} W outside the allowed range")));
            }
        }
        if let SplitBlock::Fixed(a) = self.split {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Config(format!("frozen power-splitting factor {a} outside (0,1)")));
            }
        }
        if matches!(
            (self.bs, self.relay, self.split),
            (BsBlock::Fixed(_), RelayBlock::TiedToCap, SplitBlock::Fixed(_))
        ) {
            return Err(Error::Config("every block is frozen; nothing to optimize".into()));
        }
        Ok(())
    }
}

/// Expansion data for one GP iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensationPoint {
    /// Full GP point the bounds touch at.
    pub x_prev: Vec<f64>,
    /// AGM weights used for each `ṽ_i`.
    pub v_weights: Vec<Vec<f64>>,
    /// Energy-harvesting weights `λ[(j, i)]`.
    pub eh_weights: DMatrix<f64>,
    /// Monomial lower bounds `ṽ_i`.
    pub v_tilde: Vec<Monomial>,
    /// Monomial lower bounds on the relay caps (AF form, before any DF scaling).
    pub eh_bound: Vec<Monomial>,
}

/// A compiled GP subproblem over the free variables only.
#[derive(Debug, Clone, PartialEq)]
pub struct GpSubproblem {
    pub layout: GpLayout,
    /// GP over the free variables.
    pub gp: GeometricProgram,
    /// Full-layout index of each free variable.
    pub free: Vec<usize>,
    /// Full point at the expansion; frozen entries keep these values.
    pub x_fixed: Vec<f64>,
    /// Starting point in log variables.
    pub y0: Vec<f64>,
}

impl GpSubproblem {
    pub fn program(&self) -> Result<LseProgram> {
        gp_to_lse(&self.gp)
    }

    /// Full GP point from a solution in log variables.
    pub fn full_point(&self, y: &[f64]) -> Vec<f64> {
        let mut x = self.x_fixed.clone();
        for (k, &idx) in self.free.iter().enumerate() {
            x[idx] = y[k].exp();
        }
        x
    }
}

/// Which AF problem a subproblem approximates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AfProblem {
    /// Maximize the sum throughput.
    SumRate,
    /// Maximize the minimum throughput.
    MaxMin,
    /// Minimize total BS power subject to a per-cell throughput floor.
    SumPower { tau_min: f64 },
}

impl AfProblem {
    fn n_extra(&self) -> usize {
        match self {
            AfProblem::MaxMin => 1,
            _ => 0,
        }
    }
}

/// AF problem data prepared once per instance: `u_i`, `v_i` with frozen blocks
/// already substituted.
#[derive(Debug, Clone)]
pub struct AfGpModel {
    pub layout: GpLayout,
    pub blocks: BlockConfig,
    pub problem: AfProblem,
    net: NetworkInstance,
    params: SystemParams,
    uv: UvFunctions,
    u_sub: Vec<Posynomial>,
    v_sub: Vec<Posynomial>,
    free: Vec<usize>,
}

impl AfGpModel {
    pub fn new(
        net: &NetworkInstance,
        params: &SystemParams,
        phi: &PhiCoefficients,
        blocks: BlockConfig,
        problem: AfProblem,
    ) -> Result<Self> {
        params.validate()?;
        blocks.validate(params)?;
        if let AfProblem::SumPower { tau_min } = problem {
            if !(tau_min >= 0.0 && tau_min.is_finite()) {
                return Err(Error::Config(format!("throughput floor must be nonnegative, got {tau_min}")));
            }
            if blocks.bs != BsBlock::Free {
                return Err(Error::Config("sum-power minimization needs free BS powers".into()));
            }
        }
        let n = net.n_cells();
        let layout = GpLayout::new(n, problem.n_extra());
        let uv = uv_functions(phi, &layout);
        let mut u_sub = uv.u.clone();
        let mut v_sub = uv.v.clone();
        let mut subst = |f: &mut dyn FnMut(&Posynomial) -> Result<Posynomial>| -> Result<()> {
            for p in u_sub.iter_mut().chain(v_sub.iter_mut()) {
                *p = f(p)?;
            }
            Ok(())
        };
        if blocks.relay == RelayBlock::TiedToCap {
            for j in 0..n {
                let cap = Posynomial::new(
                    layout.n_vars(),
                    (0..n)
                        .map(|l| {
                            let mut e = vec![0.0; layout.n_vars()];
                            e[layout.split(j)] = 1.0;
                            e[layout.bs(l)] = 1.0;
                            Monomial::new(params.eta * net.h(l, j), e)
                        })
                        .collect(),
                )?;
                subst(&mut |p: &Posynomial| p.substitute(layout.relay(j), &cap))?;
            }
        }
        if let SplitBlock::Fixed(a) = blocks.split {
            for i in 0..n {
                subst(&mut |p: &Posynomial| Ok(p.fix_variable(layout.split(i), a).fix_variable(layout.info(i), 1.0 - a)))?;
            }
        }
        if let BsBlock::Fixed(pw) = blocks.bs {
            for i in 0..n {
                subst(&mut |p: &Posynomial| Ok(p.fix_variable(layout.bs(i), pw)))?;
            }
        }
        let mut free = Vec::new();
        if blocks.bs == BsBlock::Free {
            free.extend((0..n).map(|i| layout.bs(i)));
        }
        if blocks.relay == RelayBlock::Free {
            free.extend((0..n).map(|i| layout.relay(i)));
        }
        if blocks.split == SplitBlock::Free {
            free.extend((0..n).map(|i| layout.info(i)));
            free.extend((0..n).map(|i| layout.split(i)));
        }
        free.extend((0..layout.n_extra).map(|k| layout.extra(k)));
        Ok(Self { layout, blocks, problem, net: net.clone(), params: *params, uv, u_sub, v_sub, free })
    }

    pub fn uv(&self) -> &UvFunctions {
        &self.uv
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    /// Projects an allocation onto the frozen blocks: fixed values are
    /// imposed and tied relays are set to their caps.
    pub fn conform(&self, alloc: &Allocation) -> Result<Allocation> {
        let n = self.layout.n_cells;
        let bs = match self.blocks.bs {
            BsBlock::Free => alloc.bs_power.clone(),
            BsBlock::Fixed(p) => vec![p; n],
        };
        let split = match self.blocks.split {
            SplitBlock::Free => alloc.split.clone(),
            SplitBlock::Fixed(a) => vec![a; n],
        };
        let relay = match self.blocks.relay {
            RelayBlock::Free => alloc.relay_power.clone(),
            RelayBlock::TiedToCap => (0..n)
                .map(|i| self.params.eta * split[i] * received_power(&bs, &self.net, i))
                .collect(),
        };
        Allocation::new(bs, relay, split)
    }

    /// Full GP point for an allocation (extra slots set to 1).
    pub fn point(&self, alloc: &Allocation) -> Result<Vec<f64>> {
        self.layout.point(alloc, &vec![1.0; self.layout.n_extra])
    }

    pub fn condensation_point(&self, alloc: &Allocation) -> Result<CondensationPoint> {
        let x0 = self.point(alloc)?;
        let v_weights = self.v_sub.iter().map(|v| agm_weights(v, &x0)).collect::<Result<Vec<_>>>()?;
        let v_tilde = self
            .v_sub
            .iter()
            .zip(&v_weights)
            .map(|(v, w)| if v.terms.len() == 1 { v.terms[0].clone() } else { condense_with_weights(v, w) })
            .collect();
        let eh_weights = eh_weights(&self.net, &alloc.bs_power)?;
        let eh_bound = eh_monomial_bound(&self.net, &self.params, &alloc.bs_power, &self.layout)?;
        Ok(CondensationPoint { x_prev: x0, v_weights, eh_weights, v_tilde, eh_bound })
    }

    /// Constraints shared by all three AF problems, added to a full-layout GP.
    fn add_common(&self, cp: &CondensationPoint, gp: &mut GeometricProgram) -> Result<()> {
        let l = &self.layout;
        let nv = l.n_vars();
        for i in 0..l.n_cells {
            if self.blocks.relay == RelayBlock::Free {
                let mut m = Monomial::var(nv, l.relay(i), 1.0, 1.0).mul(&cp.eh_bound[i].recip());
                if let SplitBlock::Fixed(a) = self.blocks.split {
                    m = m.fix_variable(l.split(i), a);
                }
                if let BsBlock::Fixed(pw) = self.blocks.bs {
                    for j in 0..l.n_cells {
                        m = m.fix_variable(l.bs(j), pw);
                    }
                }
                gp.constraints.push(Posynomial::new(nv, vec![m])?);
                gp.lower[l.relay(i)] = RELAY_FLOOR * self.params.sigma;
            }
            if self.blocks.split == SplitBlock::Free {
                gp.constraints.push(Posynomial::new(
                    nv,
                    vec![Monomial::var(nv, l.info(i), 1.0, 1.0), Monomial::var(nv, l.split(i), 1.0, 1.0)],
                )?);
                gp.lower[l.info(i)] = SPLIT_FLOOR;
                gp.upper[l.info(i)] = 1.0;
                gp.lower[l.split(i)] = SPLIT_FLOOR;
                gp.upper[l.split(i)] = 1.0;
            }
            if self.blocks.bs == BsBlock::Free {
                gp.lower[l.bs(i)] = self.params.p_min;
                gp.upper[l.bs(i)] = self.params.p_max;
            }
        }
        Ok(())
    }

    /// `u_i ṽ_i^{-1}` per cell.
    fn ratio(&self, cp: &CondensationPoint, i: usize) -> Posynomial {
        self.u_sub[i].mul_monomial(&cp.v_tilde[i].recip())
    }

    fn finish(&self, cp: &CondensationPoint, gp: GeometricProgram, extra0: &[f64]) -> Result<GpSubproblem> {
        let l = &self.layout;
        let gp = gp.restrict(&self.free)?;
        let mut x_fixed = cp.x_prev.clone();
        for (k, v) in extra0.iter().enumerate() {
            x_fixed[l.extra(k)] = *v;
        }
        let y0 = start_point(&self.free, &x_fixed, l, &self.params);
        Ok(GpSubproblem { layout: *l, gp, free: self.free.clone(), x_fixed, y0 })
    }

    fn check_problem(&self, expected: AfProblem) -> Result<()> {
        if std::mem::discriminant(&self.problem) != std::mem::discriminant(&expected) {
            return Err(Error::Config(format!("model prepared for {:?}, not {:?}", self.problem, expected)));
        }
        Ok(())
    }

    /// Sum-rate subproblem: minimize `Π_i u_i/ṽ_i`.
    pub fn build_p1_gp(&self, cp: &CondensationPoint) -> Result<GpSubproblem> {
        self.check_problem(AfProblem::SumRate)?;
        let mut gp = GeometricProgram::new(self.layout.n_vars());
        gp.objective = (0..self.layout.n_cells).map(|i| self.ratio(cp, i)).collect();
        self.add_common(cp, &mut gp)?;
        self.finish(cp, gp, &[])
    }

    /// Max-min subproblem over `(x, e^τ)`: minimize `e^{−τ}` subject to
    /// `u_i e^{2τ ln 2}/ṽ_i ≤ 1` and `τ ≥ 0`.
    pub fn build_p2_gp(&self, cp: &CondensationPoint) -> Result<GpSubproblem> {
        self.check_problem(AfProblem::MaxMin)?;
        let l = &self.layout;
        let nv = l.n_vars();
        let tau = l.extra(0);
        let mut gp = GeometricProgram::new(nv);
        gp.objective.push(Posynomial::new(nv, vec![Monomial::var(nv, tau, 1.0, -1.0)])?);
        for i in 0..l.n_cells {
            gp.constraints.push(self.ratio(cp, i).mul_monomial(&Monomial::var(nv, tau, 1.0, 2.0 * LN_2)));
        }
        gp.lower[tau] = 1.0;
        self.add_common(cp, &mut gp)?;
        // Start halfway to the weakest cell's current throughput.
        let x0 = &cp.x_prev;
        let tau_now = self
            .u_sub
            .iter()
            .zip(&self.v_sub)
            .map(|(u, v)| 0.5 * (v.eval(x0) / u.eval(x0)).log2())
            .fold(f64::INFINITY, f64::min);
        self.finish(cp, gp, &[(0.5 * tau_now.max(0.0)).exp()])
    }

    /// Sum-power subproblem: minimize `Σ_i P_i` subject to
    /// `u_i 2^{2 τ_min}/ṽ_i ≤ 1`.
    pub fn build_p3_gp(&self, cp: &CondensationPoint) -> Result<GpSubproblem> {
        let AfProblem::SumPower { tau_min } = self.problem else {
            return Err(Error::Config("model not prepared for sum-power minimization".into()));
        };
        let l = &self.layout;
        let nv = l.n_vars();
        let mut gp = GeometricProgram::new(nv);
        gp.objective.push(Posynomial::new(
            nv,
            (0..l.n_cells).map(|i| Monomial::var(nv, l.bs(i), 1.0, 1.0)).collect(),
        )?);
        let floor = Monomial::constant(nv, (2.0 * tau_min * LN_2).exp());
        for i in 0..l.n_cells {
            gp.constraints.push(self.ratio(cp, i).mul_monomial(&floor));
        }
        self.add_common(cp, &mut gp)?;
        self.finish(cp, gp, &[])
    }

    pub fn build(&self, cp: &CondensationPoint) -> Result<GpSubproblem> {
        match self.problem {
            AfProblem::SumRate => self.build_p1_gp(cp),
            AfProblem::MaxMin => self.build_p2_gp(cp),
            AfProblem::SumPower { .. } => self.build_p3_gp(cp),
        }
    }

    /// Allocation encoded by a subproblem solution. The information share is
    /// reset to `1 − α`, which can only raise every SINR.
    pub fn decode(&self, sub: &GpSubproblem, y: &[f64]) -> Result<Allocation> {
        let x = sub.full_point(y);
        let l = &self.layout;
        let n = l.n_cells;
        let alloc = Allocation::new(
            (0..n).map(|i| x[l.bs(i)]).collect(),
            (0..n).map(|i| x[l.relay(i)]).collect(),
            (0..n).map(|i| x[l.split(i)]).collect(),
        )?;
        self.conform(&alloc)
    }
}

/// Log of the expansion point nudged into the interior: `t`, `α` and `p`
/// shrink slightly so that the tight constraints `t + α ≤ 1` and `p ≤ w`
/// become strict; `P` is clipped inside its box.
fn start_point(free: &[usize], x: &[f64], l: &GpLayout, params: &SystemParams) -> Vec<f64> {
    const NUDGE: f64 = 1e-7;
    let n = l.n_cells;
    let (lo, hi) = (params.p_min.ln(), params.p_max.ln());
    let margin = (1e-9f64).min(0.25 * (hi - lo));
    let relay_lo = (RELAY_FLOOR * params.sigma).ln();
    free.iter()
        .map(|&k| {
            let y = x[k].ln();
            if k < n {
                y.clamp(lo + margin, hi - margin)
            } else if k < 2 * n {
                (y - 3.0 * NUDGE).max(relay_lo + 1e-9)
            } else if k < 4 * n {
                (y - NUDGE).min(-NUDGE)
            } else {
                y
            }
        })
        .collect()
}

/// DF sum-rate model at a fixed timeslot fraction; extra slots hold the
/// per-cell SINR targets `z_i`.
#[derive(Debug, Clone)]
pub struct DfGpModel {
    pub layout: GpLayout,
    net: NetworkInstance,
    params: SystemParams,
}

impl DfGpModel {
    pub fn new(net: &NetworkInstance, params: &SystemParams) -> Result<Self> {
        params.validate()?;
        let n = net.n_cells();
        Ok(Self { layout: GpLayout::new(n, n), net: net.clone(), params: *params })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    /// Per-cell `min(γ_R, γ_U)` at an allocation.
    pub fn sinr_targets(&self, alloc: &Allocation) -> Vec<f64> {
        let (r, u) = sinr_df(alloc, &self.net, &self.params);
        r.iter().zip(&u).map(|(a, b)| a.min(*b)).collect()
    }

    /// Subproblem around `alloc` with `z⁰ = min(γ_R, γ_U)` there.
    pub fn build_df_gp(&self, alloc: &Allocation) -> Result<GpSubproblem> {
        let l = self.layout;
        let n = l.n_cells;
        let nv = l.n_vars();
        let net = &self.net;
        let sigma = self.params.sigma;
        let eps = self.params.epsilon;
        let z0 = self.sinr_targets(alloc);
        let x0 = l.point(alloc, &z0)?;
        let mut gp = GeometricProgram::new(nv);
        for i in 0..n {
            let z = l.extra(i);
            // 1 + z_i ≥ monomial touching at z⁰; the objective is the product of
            // the reciprocals.
            let one_plus_z =
                Posynomial::new(nv, vec![Monomial::constant(nv, 1.0), Monomial::var(nv, z, 1.0, 1.0)])?;
            let lower = condense_posynomial(&one_plus_z, &x0)?;
            gp.objective.push(Posynomial::new(nv, vec![lower.recip()])?);

            // z_i (t_i Σ_{j≠i} h̄_ji P_j + σ) / (t_i h̄_ii P_i) ≤ 1
            let mut relay_side = Posynomial::empty(nv);
            for j in (0..n).filter(|&j| j != i) {
                let mut e = vec![0.0; nv];
                e[z] = 1.0;
                e[l.bs(j)] = 1.0;
                e[l.bs(i)] = -1.0;
                relay_side.push(Monomial::new(net.h(j, i) / net.h(i, i), e));
            }
            let mut e = vec![0.0; nv];
            e[z] = 1.0;
            e[l.info(i)] = -1.0;
            e[l.bs(i)] = -1.0;
            relay_side.push(Monomial::new(sigma / net.h(i, i), e));
            gp.constraints.push(relay_side);

            // z_i (Σ_{j≠i} ḡ_ji p_j + σ) / (ḡ_ii p_i) ≤ 1
            let mut user_side = Posynomial::empty(nv);
            for j in (0..n).filter(|&j| j != i) {
                let mut e = vec![0.0; nv];
                e[z] = 1.0;
                e[l.relay(j)] = 1.0;
                e[l.relay(i)] = -1.0;
                user_side.push(Monomial::new(net.g(j, i) / net.g(i, i), e));
            }
            let mut e = vec![0.0; nv];
            e[z] = 1.0;
            e[l.relay(i)] = -1.0;
            user_side.push(Monomial::new(sigma / net.g(i, i), e));
            gp.constraints.push(user_side);
        }
        let caps = eh_monomial_bound(net, &self.params, &alloc.bs_power, &l)?;
        for i in 0..n {
            let scale = Monomial::constant(nv, eps / (1.0 - eps));
            let m = Monomial::var(nv, l.relay(i), 1.0, 1.0).mul(&caps[i].recip()).mul(&scale);
            gp.constraints.push(Posynomial::new(nv, vec![m])?);
            gp.constraints.push(Posynomial::new(
                nv,
                vec![Monomial::var(nv, l.info(i), 1.0, 1.0), Monomial::var(nv, l.split(i), 1.0, 1.0)],
            )?);
            gp.lower[l.bs(i)] = self.params.p_min;
            gp.upper[l.bs(i)] = self.params.p_max;
            gp.lower[l.relay(i)] = RELAY_FLOOR * sigma;
            gp.lower[l.info(i)] = SPLIT_FLOOR;
            gp.upper[l.info(i)] = 1.0;
            gp.lower[l.split(i)] = SPLIT_FLOOR;
            gp.upper[l.split(i)] = 1.0;
        }
        let free: Vec<usize> = (0..nv).collect();
        let mut y0 = start_point(&free, &x0, &l, &self.params);
        for i in 0..n {
            y0[l.extra(i)] = (0.999 * z0[i]).ln();
        }
        Ok(GpSubproblem { layout: l, gp, free, x_fixed: x0, y0 })
    }

    pub fn decode(&self, sub: &GpSubproblem, y: &[f64]) -> Result<Allocation> {
        let x = sub.full_point(y);
        let l = &self.layout;
        let n = l.n_cells;
        Allocation::new(
            (0..n).map(|i| x[l.bs(i)]).collect(),
            (0..n).map(|i| x[l.relay(i)]).collect(),
            (0..n).map(|i| x[l.split(i)]).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkmodel::{phi_coeffs, relay_cap_af, sinr_af};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn x_plus_inv() -> Posynomial {
        Posynomial::new(1, vec![Monomial::new(1.0, vec![1.0]), Monomial::new(1.0, vec![-1.0])]).unwrap()
    }

    fn random_net(n: usize, seed: u64) -> NetworkInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = DMatrix::from_fn(n, n, |_, _| rng.random_range(1e-7..1e-5));
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(1e-7..1e-5));
        NetworkInstance::from_gains(h, g).unwrap()
    }

    fn params() -> SystemParams {
        SystemParams::new(0.5, 7.943e-17, 0.398, 39.8, 1.0, 0.5).unwrap()
    }

    #[test]
    fn condensation_at_one_is_constant_two() {
        let m = condense_posynomial(&x_plus_inv(), &[1.0]).unwrap();
        assert!((m.coeff - 2.0).abs() < 1e-11);
        assert!(m.exponents[0].abs() < 1e-12);
    }

    #[test]
    fn condensation_at_two() {
        // (1.25 x)^0.8 (5/x)^0.2
        let m = condense_posynomial(&x_plus_inv(), &[2.0]).unwrap();
        let expected = 1.25f64.powf(0.8) * 5f64.powf(0.2);
        assert!((m.coeff - expected).abs() < 1e-12 * expected);
        assert!((m.exponents[0] - 0.6).abs() < 1e-12);
        assert!((m.eval(&[2.0]) - 2.5).abs() < 1e-12);
        for x in [0.1, 0.5, 1.0, 3.0, 10.0] {
            assert!(m.eval(&[x]) <= x + 1.0 / x + 1e-12);
        }
    }

    #[test]
    fn single_term_condenses_to_itself() {
        let p = Posynomial::new(2, vec![Monomial::new(3.0, vec![1.0, -2.0])]).unwrap();
        assert_eq!(condense_posynomial(&p, &[0.7, 1.3]).unwrap(), p.terms[0]);
    }

    #[test]
    fn eh_weights_are_proportional() {
        let net = NetworkInstance::from_gains(DMatrix::from_element(2, 2, 1.0), DMatrix::from_element(2, 2, 1.0))
            .unwrap();
        let lam = eh_weights(&net, &[1.0, 3.0]).unwrap();
        assert!((lam[(0, 0)] - 0.25).abs() < 1e-15 && (lam[(1, 0)] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn eh_bound_single_cell_is_exact() {
        let net = NetworkInstance::from_gains(DMatrix::from_element(1, 1, 2e-6), DMatrix::from_element(1, 1, 1e-6))
            .unwrap();
        let l = GpLayout::new(1, 0);
        let w = &eh_monomial_bound(&net, &params(), &[5.0], &l).unwrap()[0];
        for (pw, a) in [(1.0, 0.3), (20.0, 0.9)] {
            let x = [pw, 1.0, 1.0 - a, a];
            assert!((w.eval(&x) - 0.5 * a * pw * 2e-6).abs() < 1e-15);
        }
    }

    #[test]
    fn eh_bound_touches_cap() {
        let net = random_net(4, 9);
        let p = params();
        let l = GpLayout::new(4, 0);
        let alloc = Allocation::new(vec![1.0, 3.0, 7.0, 0.5], vec![1e-5; 4], vec![0.2, 0.4, 0.6, 0.8]).unwrap();
        let w = eh_monomial_bound(&net, &p, &alloc.bs_power, &l).unwrap();
        let caps = relay_cap_af(&alloc, &net, &p);
        let x = l.point(&alloc, &[]).unwrap();
        for i in 0..4 {
            assert!((w[i].eval(&x) - caps[i]).abs() <= 1e-13 * caps[i]);
        }
    }

    #[test]
    fn v_minus_u_is_signal_term() {
        let net = random_net(3, 4);
        let phi = phi_coeffs(&net, params().sigma);
        let l = GpLayout::new(3, 0);
        let uv = uv_functions(&phi, &l);
        let alloc = Allocation::new(vec![2.0, 5.0, 1.0], vec![1e-5, 3e-5, 2e-6], vec![0.3, 0.5, 0.7]).unwrap();
        let x = l.point(&alloc, &[]).unwrap();
        let gamma = sinr_af(&alloc, &phi);
        for i in 0..3 {
            let sig = phi.phi1(i, i) * alloc.bs_power[i] * alloc.relay_power[i] * alloc.info_share[i];
            let (u, v) = (uv.u[i].eval(&x), uv.v[i].eval(&x));
            assert!(((v - u) - sig).abs() <= 1e-12 * v);
            assert!((v / u - 1.0 - gamma[i]).abs() <= 1e-10 * (1.0 + gamma[i]));
        }
    }

    #[test]
    fn p1_objective_touches_at_expansion() {
        let net = random_net(4, 21);
        let p = params();
        let phi = phi_coeffs(&net, p.sigma);
        let model = AfGpModel::new(&net, &p, &phi, BlockConfig::JOINT, AfProblem::SumRate).unwrap();
        let alloc = Allocation::new(vec![4.0, 8.0, 2.0, 10.0], vec![2e-5, 1e-5, 3e-5, 4e-5], vec![0.5; 4]).unwrap();
        let cp = model.condensation_point(&alloc).unwrap();
        let sub = model.build_p1_gp(&cp).unwrap();
        let prog = sub.program().unwrap();
        let y: Vec<f64> = cp.x_prev.iter().map(|v| v.ln()).collect();
        let direct = model.uv().log_ratio_product(&cp.x_prev);
        assert!((prog.objective_value(&y) - direct).abs() < 1e-9 * direct.abs());
    }

    #[test]
    fn frozen_blocks_are_conformed() {
        let net = random_net(2, 5);
        let p = params();
        let phi = phi_coeffs(&net, p.sigma);
        let blocks = BlockConfig { bs: BsBlock::Free, relay: RelayBlock::TiedToCap, split: SplitBlock::Fixed(0.5) };
        let model = AfGpModel::new(&net, &p, &phi, blocks, AfProblem::SumRate).unwrap();
        let alloc = Allocation::new(vec![3.0, 4.0], vec![1e-9, 1e-9], vec![0.2, 0.9]).unwrap();
        let c = model.conform(&alloc).unwrap();
        assert_eq!(c.split, vec![0.5, 0.5]);
        assert_eq!(c.relay_power, relay_cap_af(&c, &net, &p));
        assert_eq!(model.free, vec![0, 1]);
    }

    #[test]
    fn all_frozen_is_rejected() {
        let blocks =
            BlockConfig { bs: BsBlock::Fixed(1.0), relay: RelayBlock::TiedToCap, split: SplitBlock::Fixed(0.5) };
        assert!(blocks.validate(&params()).is_err());
    }

    #[test]
    fn df_objective_touches_one_plus_z() {
        let net = random_net(2, 8);
        let p = params();
        let model = DfGpModel::new(&net, &p).unwrap();
        let alloc = Allocation::new(vec![3.0, 4.0], vec![1e-5, 2e-5], vec![0.4, 0.6]).unwrap();
        let sub = model.build_df_gp(&alloc).unwrap();
        let z0 = model.sinr_targets(&alloc);
        for i in 0..2 {
            let m = sub.gp.objective[i].terms[0].recip();
            assert!((m.eval(&sub.x_fixed) - (1.0 + z0[i])).abs() < 1e-10 * (1.0 + z0[i]));
        }
    }
}
