//! Outer SCA loop, initialization, DF timeslot search, individual-block
//! baselines and the experiment harness.

mod config;
mod experiments;

pub use config::{Config, ExperimentConfig, FadingConfig, ProblemConfig, SystemConfig, TopologyConfig};
pub use experiments::{experiment_suite, run_manifest, SuiteReport};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::convexcore::{solve, Solution, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::linkmodel::{
    check_feasibility, phi_coeffs, relay_cap, relay_cap_af, sinr_af, throughput, Allocation, RelayMode, SystemParams,
    FEASIBILITY_TOL,
};
use crate::netgen::NetworkInstance;
use crate::sca_dc::AfDcModel;
use crate::sca_gp::{AfGpModel, AfProblem, BlockConfig, BsBlock, DfGpModel, RelayBlock, SplitBlock};

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watt_to_dbm(watt: f64) -> f64 {
    10.0 * watt.log10() + 30.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    SumRate,
    MaxMin,
    SumPower,
}

impl ProblemKind {
    /// Short label used in file names and CSV columns.
    pub fn label(&self) -> &'static str {
        match self {
            ProblemKind::SumRate => "p1",
            ProblemKind::MaxMin => "p2",
            ProblemKind::SumPower => "p3",
        }
    }

    /// Whether larger objective values are better.
    pub fn maximizes(&self) -> bool {
        !matches!(self, ProblemKind::SumPower)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gp,
    Dc,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Gp => "gp",
            Method::Dc => "dc",
        }
    }
}

/// Largest log-domain change of `(P, p, α)` between iterates that still counts
/// as converged.
pub const ALLOC_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub mode: RelayMode,
    pub method: Method,
    /// Per-cell throughput floor, bps/Hz (sum-power problem only).
    pub tau_min: f64,
    /// Initialization scalar in (0, 1).
    pub varsigma: f64,
    /// Relative objective change at which the outer loop stops.
    pub tol: f64,
    pub max_iter: usize,
    pub solver: SolverOptions,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self {
            kind: ProblemKind::SumRate,
            mode: RelayMode::Af,
            method: Method::Gp,
            tau_min: 0.0,
            varsigma: 0.5,
            tol: 1e-4,
            max_iter: 50,
            solver: SolverOptions::default(),
        }
    }
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind, method: Method) -> Self {
        Self { kind, method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == RelayMode::Df && (self.method != Method::Gp || self.kind != ProblemKind::SumRate) {
            return Err(Error::Config("DF relaying is supported for sum-rate maximization with GP only".into()));
        }
        if !(self.tau_min >= 0.0 && self.tau_min.is_finite()) {
            return Err(Error::Config(format!("tau_min must be nonnegative, got {}", self.tau_min)));
        }
        if !(self.varsigma > 0.0 && self.varsigma < 1.0) {
            return Err(Error::Config(format!("varsigma must lie in (0, 1), got {}", self.varsigma)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) || self.max_iter == 0 {
            return Err(Error::Config("tol must be positive and max_iter at least 1".into()));
        }
        Ok(())
    }

    fn af_problem(&self) -> AfProblem {
        match self.kind {
            ProblemKind::SumRate => AfProblem::SumRate,
            ProblemKind::MaxMin => AfProblem::MaxMin,
            ProblemKind::SumPower => AfProblem::SumPower { tau_min: self.tau_min },
        }
    }
}

/// `P_i = ς P_max` (clipped into `[P_min, P_max]`), `α_i = ς`, `t_i = 1 − ς`,
/// `p_i = ς η α_i Σ_j P_j h̄_ji`.
pub fn init_allocation(varsigma: f64, params: &SystemParams, net: &NetworkInstance) -> Result<Allocation> {
    if !(varsigma > 0.0 && varsigma < 1.0) {
        return Err(Error::Config(format!("varsigma must lie in (0, 1), got {varsigma}")));
    }
    params.validate()?;
    let n = net.n_cells();
    let bs = vec![(varsigma * params.p_max).clamp(params.p_min, params.p_max); n];
    let split = vec![varsigma; n];
    let probe = Allocation::new(bs.clone(), vec![1.0; n], split.clone())?;
    let relay = relay_cap_af(&probe, net, params).into_iter().map(|c| varsigma * c).collect();
    Allocation::new(bs, relay, split)
}

/// Problem objective at an allocation: sum throughput, minimum throughput or
/// total BS power (W).
pub fn objective(kind: ProblemKind, alloc: &Allocation, net: &NetworkInstance, params: &SystemParams, mode: RelayMode) -> f64 {
    match kind {
        ProblemKind::SumRate => throughput(alloc, net, params, mode).iter().sum(),
        ProblemKind::MaxMin => throughput(alloc, net, params, mode).into_iter().fold(f64::INFINITY, f64::min),
        ProblemKind::SumPower => alloc.bs_power.iter().sum(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStatus {
    Converged,
    MaxIter,
}

/// State after one outer iteration (iteration 0 is the starting point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Max-min iterations run to reach the throughput floor before a
    /// sum-power run starts.
    pub warmup: bool,
    /// True problem objective.
    pub objective: f64,
    pub sum_rate: f64,
    pub min_rate: f64,
    pub sum_power: f64,
    /// `Σ_i ln(u_i/v_i) = −Σ_i ln(1 + γ_i)` for AF, the log of the product the
    /// GP iterations decrease.
    pub log_ratio_product: Option<f64>,
    /// Largest relative constraint violation of the original problem.
    pub max_residual: f64,
    /// `max |ln x − ln x_prev|` over BS power, relay power and split.
    pub alloc_change: f64,
    pub kkt_residual: Option<f64>,
    pub solver_status: Option<SolveStatus>,
    pub newton_steps: usize,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub spec: ProblemSpec,
    /// DF timeslot fraction the throughputs refer to.
    pub epsilon: Option<f64>,
    pub records: Vec<IterationRecord>,
    pub status: TraceStatus,
    pub allocation: Allocation,
    pub throughput: Vec<f64>,
    pub wall_clock_s: f64,
}

impl Trace {
    /// Final true objective.
    pub fn objective(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.objective)
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// Outer iterations run (excluding the starting point).
    pub fn n_iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    /// First iteration whose relative objective change is at most `tol`.
    pub fn first_stall(&self, tol: f64) -> Option<usize> {
        self.records
            .windows(2)
            .find(|w| !w[1].warmup && relative_change(w[0].objective, w[1].objective) <= tol)
            .map(|w| w[1].iteration)
    }

    pub fn max_residual(&self) -> f64 {
        self.records.iter().map(|r| r.max_residual).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn relative_change(prev: f64, next: f64) -> f64 {
    (next - prev).abs() / prev.abs().max(1e-300)
}

fn log_change(a: &Allocation, b: &Allocation) -> f64 {
    let pairs = a.bs_power.iter().zip(&b.bs_power).chain(a.relay_power.iter().zip(&b.relay_power)).chain(a.split.iter().zip(&b.split));
    pairs.map(|(x, y)| (x.ln() - y.ln()).abs()).fold(0.0, f64::max)
}

/// One surrogate model per method and relaying mode.
enum Engine {
    Gp(AfGpModel),
    Dc(AfDcModel),
    Df(DfGpModel),
}

impl Engine {
    fn step(&self, alloc: &Allocation, opts: &SolverOptions) -> Result<(Allocation, Solution)> {
        let (next, sol) = match self {
            Engine::Gp(m) => {
                let sub = m.build(&m.condensation_point(alloc)?)?;
                let sol = solve(&sub.program()?, &sub.y0, opts)?;
                if sol.status == SolveStatus::Infeasible {
                    return Ok((alloc.clone(), sol));
                }
                (m.decode(&sub, &sol.y)?, sol)
            }
            Engine::Dc(m) => {
                let sub = m.build(&m.expansion(alloc)?)?;
                let sol = solve(&sub.program, &sub.y0, opts)?;
                if sol.status == SolveStatus::Infeasible {
                    return Ok((alloc.clone(), sol));
                }
                (m.decode(&sol.y)?, sol)
            }
            Engine::Df(m) => {
                let sub = m.build_df_gp(alloc)?;
                let sol = solve(&sub.program()?, &sub.y0, opts)?;
                if sol.status == SolveStatus::Infeasible {
                    return Ok((alloc.clone(), sol));
                }
                (m.decode(&sub, &sol.y)?, sol)
            }
        };
        Ok((next, sol))
    }
}

struct Run<'a> {
    spec: &'a ProblemSpec,
    net: &'a NetworkInstance,
    params: &'a SystemParams,
    main: Engine,
    /// Max-min engine used until a sum-power start meets its floor.
    warmup: Option<Engine>,
}

impl Run<'_> {
    fn record(&self, iteration: usize, warmup: bool, alloc: &Allocation, prev: Option<&Allocation>, sol: Option<&Solution>, t0: &Instant) -> Result<IterationRecord> {
        let (net, params, mode) = (self.net, self.params, self.spec.mode);
        let tau = throughput(alloc, net, params, mode);
        let log_ratio_product = (mode == RelayMode::Af)
            .then(|| -sinr_af(alloc, &phi_coeffs(net, params.sigma)).iter().map(|g| g.ln_1p()).sum::<f64>());
        Ok(IterationRecord {
            iteration,
            warmup,
            objective: objective(self.spec.kind, alloc, net, params, mode),
            sum_rate: tau.iter().sum(),
            min_rate: tau.iter().cloned().fold(f64::INFINITY, f64::min),
            sum_power: alloc.bs_power.iter().sum(),
            log_ratio_product,
            max_residual: check_feasibility(alloc, net, params, mode, FEASIBILITY_TOL)?.max_relative_violation,
            alloc_change: prev.map_or(0.0, |p| log_change(p, alloc)),
            kkt_residual: sol.map(|s| s.kkt_residual),
            solver_status: sol.map(|s| s.status),
            newton_steps: sol.map_or(0, |s| s.newton_steps),
            elapsed_s: t0.elapsed().as_secs_f64(),
        })
    }

    fn execute(&self, alloc0: Allocation) -> Result<Trace> {
        let t0 = Instant::now();
        let spec = self.spec;
        let report = check_feasibility(&alloc0, self.net, self.params, spec.mode, FEASIBILITY_TOL)?;
        if !report.feasible {
            return Err(Error::Domain(format!(
                "starting allocation violates the constraints by {:.3e}",
                report.max_relative_violation
            )));
        }
        let mut records = vec![self.record(0, false, &alloc0, None, None, &t0)?];
        let mut alloc = alloc0;
        let mut in_warmup = self.warmup.is_some() && records[0].min_rate < spec.tau_min;
        let mut status = TraceStatus::MaxIter;
        for m in 1..=spec.max_iter {
            let engine = if in_warmup { self.warmup.as_ref().unwrap_or(&self.main) } else { &self.main };
            let (next, sol) = engine.step(&alloc, &spec.solver)?;
            if sol.status == SolveStatus::Infeasible {
                return Err(Error::Infeasible {
                    iteration: m,
                    detail: format!("convex surrogate has no strictly feasible point ({:?})", spec.kind),
                });
            }
            let rec = self.record(m, in_warmup, &next, Some(&alloc), Some(&sol), &t0)?;
            let prev = records.last().expect("starting record");
            let obj_change = if in_warmup {
                relative_change(prev.min_rate, rec.min_rate)
            } else {
                relative_change(prev.objective, rec.objective)
            };
            let settled = obj_change <= spec.tol && rec.alloc_change <= ALLOC_TOL;
            let reached_floor = rec.min_rate >= spec.tau_min;
            records.push(rec);
            alloc = next;
            if in_warmup {
                if reached_floor {
                    in_warmup = false;
                } else if settled {
                    break;
                }
            } else if settled {
                status = TraceStatus::Converged;
                break;
            }
        }
        if in_warmup {
            let best = records.last().map_or(0.0, |r| r.min_rate);
            return Err(Error::Infeasible {
                iteration: records.len() - 1,
                detail: format!("throughput floor {} not reached; best minimum throughput {best:.6}", spec.tau_min),
            });
        }
        let throughput = throughput(&alloc, self.net, self.params, spec.mode);
        Ok(Trace {
            spec: *spec,
            epsilon: (spec.mode == RelayMode::Df).then_some(self.params.epsilon),
            records,
            status,
            allocation: alloc,
            throughput,
            wall_clock_s: t0.elapsed().as_secs_f64(),
        })
    }
}

fn af_engine(spec: &ProblemSpec, net: &NetworkInstance, params: &SystemParams, blocks: BlockConfig, problem: AfProblem) -> Result<Engine> {
    let phi = phi_coeffs(net, params.sigma);
    Ok(match spec.method {
        Method::Gp => Engine::Gp(AfGpModel::new(net, params, &phi, blocks, problem)?),
        Method::Dc => Engine::Dc(AfDcModel::new(net, params, &phi, problem)?),
    })
}

/// Runs the SCA iteration for `spec` from the standard initialization.
pub fn run_sca(spec: &ProblemSpec, net: &NetworkInstance, params: &SystemParams) -> Result<Trace> {
    let mut alloc0 = init_allocation(spec.varsigma, params, net)?;
    if spec.mode == RelayMode::Df {
        // The DF cap shrinks by (1 − ε)/ε; keep the start strictly inside it.
        let caps = relay_cap(&alloc0, net, params, RelayMode::Df);
        for (p, c) in alloc0.relay_power.iter_mut().zip(caps) {
            *p = p.min(spec.varsigma * c);
        }
    }
    run_sca_from(spec, net, params, alloc0)
}

/// Runs the SCA iteration for `spec` from a given feasible allocation.
pub fn run_sca_from(spec: &ProblemSpec, net: &NetworkInstance, params: &SystemParams, alloc0: Allocation) -> Result<Trace> {
    spec.validate()?;
    params.validate()?;
    let (main, warmup) = match spec.mode {
        RelayMode::Df => (Engine::Df(DfGpModel::new(net, params)?), None),
        RelayMode::Af => {
            let main = af_engine(spec, net, params, BlockConfig::JOINT, spec.af_problem())?;
            let warmup = if spec.kind == ProblemKind::SumPower {
                Some(af_engine(spec, net, params, BlockConfig::JOINT, AfProblem::MaxMin)?)
            } else {
                None
            };
            (main, warmup)
        }
    };
    Run { spec, net, params, main, warmup }.execute(alloc0)
}

/// How the DF timeslot fraction is searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonStrategy {
    /// Optimize `(P, p, α)` once at `ε = 0.5`, then scan the grid with the
    /// allocation held fixed, keeping only values whose relay caps still hold.
    FixedAllocation,
    /// Rerun the whole SCA at every grid value and keep the best result
    /// (including the fixed-allocation candidates).
    Rerun,
}

/// `{0.05, 0.10, …, 0.95}`.
pub fn default_epsilon_grid() -> Vec<f64> {
    (1..20).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSearch {
    pub epsilon: f64,
    pub sum_rate: f64,
    pub trace: Trace,
    /// Sum rate per grid value; `None` where the value was infeasible.
    pub grid: Vec<(f64, Option<f64>)>,
}

/// Exhaustive search over the DF timeslot fraction.
pub fn optimize_epsilon_df(
    net: &NetworkInstance,
    params: &SystemParams,
    grid: &[f64],
    spec: &ProblemSpec,
    strategy: EpsilonStrategy,
) -> Result<EpsilonSearch> {
    if grid.is_empty() {
        return Err(Error::Config("epsilon grid is empty".into()));
    }
    if let Some(e) = grid.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return Err(Error::Config(format!("epsilon grid values must lie in (0, 1), got {e}")));
    }
    let spec = ProblemSpec { mode: RelayMode::Df, kind: ProblemKind::SumRate, method: Method::Gp, ..*spec };
    let base_params = params.with_epsilon(0.5)?;
    let base = run_sca(&spec, net, &base_params)?;
    let alloc = &base.allocation;
    let mut scan = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &eps in grid {
        let p = params.with_epsilon(eps)?;
        let feasible = check_feasibility(alloc, net, &p, RelayMode::Df, FEASIBILITY_TOL)?.feasible;
        let value = feasible.then(|| throughput(alloc, net, &p, RelayMode::Df).iter().sum::<f64>());
        if let Some(v) = value {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((eps, v));
            }
        }
        scan.push((eps, value));
    }
    let (eps_a, rate_a) = best.ok_or_else(|| Error::Infeasible {
        iteration: base.n_iterations(),
        detail: "no grid value keeps the optimized relay powers within their caps".into(),
    })?;
    let mut trace = base.clone();
    let p_a = params.with_epsilon(eps_a)?;
    trace.epsilon = Some(eps_a);
    trace.throughput = throughput(&trace.allocation, net, &p_a, RelayMode::Df);
    let mut result = EpsilonSearch { epsilon: eps_a, sum_rate: rate_a, trace, grid: scan };
    if strategy == EpsilonStrategy::Rerun {
        for (k, &eps) in grid.iter().enumerate() {
            let t = run_sca(&spec, net, &params.with_epsilon(eps)?)?;
            let v = t.objective();
            result.grid[k].1 = Some(result.grid[k].1.map_or(v, |a| a.max(v)));
            if v > result.sum_rate {
                result.epsilon = eps;
                result.sum_rate = v;
                result.trace = t;
            }
        }
    }
    Ok(result)
}

/// Which block an individual baseline optimizes; the others are frozen at
/// `P_i = P_max`, `α_i = 0.5` and `p_i` equal to the relay cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Individual {
    BsPower,
    RelayPower,
    Split,
}

impl Individual {
    pub const ALL: [Individual; 3] = [Individual::BsPower, Individual::RelayPower, Individual::Split];

    pub fn label(&self) -> &'static str {
        match self {
            Individual::BsPower => "bs_power_only",
            Individual::RelayPower => "relay_power_only",
            Individual::Split => "split_only",
        }
    }

    pub fn blocks(&self, params: &SystemParams) -> BlockConfig {
        let frozen = BlockConfig { bs: BsBlock::Fixed(params.p_max), relay: RelayBlock::TiedToCap, split: SplitBlock::Fixed(0.5) };
        match self {
            Individual::BsPower => BlockConfig { bs: BsBlock::Free, ..frozen },
            Individual::RelayPower => BlockConfig { relay: RelayBlock::Free, ..frozen },
            Individual::Split => BlockConfig { split: SplitBlock::Free, ..frozen },
        }
    }
}

/// Optimizes a single block with the GP iteration, the other two frozen.
pub fn baseline_individual(which: Individual, spec: &ProblemSpec, net: &NetworkInstance, params: &SystemParams) -> Result<Trace> {
    spec.validate()?;
    if spec.mode != RelayMode::Af || spec.method != Method::Gp {
        return Err(Error::Config("individual baselines run on the AF GP path".into()));
    }
    if spec.kind == ProblemKind::SumPower && which != Individual::BsPower {
        return Err(Error::Config("the sum-power baseline optimizes BS power only".into()));
    }
    let blocks = which.blocks(params);
    let phi = phi_coeffs(net, params.sigma);
    let model = AfGpModel::new(net, params, &phi, blocks, spec.af_problem())?;
    let mut alloc0 = model.conform(&init_allocation(spec.varsigma, params, net)?)?;
    if blocks.relay == RelayBlock::Free {
        let caps = relay_cap_af(&alloc0, net, params);
        alloc0.relay_power = caps.into_iter().map(|c| spec.varsigma * c).collect();
    }
    let warmup = if spec.kind == ProblemKind::SumPower {
        Some(Engine::Gp(AfGpModel::new(net, params, &phi, blocks, AfProblem::MaxMin)?))
    } else {
        None
    };
    Run { spec, net, params, main: Engine::Gp(model), warmup }.execute(alloc0)
}
