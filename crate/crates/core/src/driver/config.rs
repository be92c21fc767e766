use serde::{Deserialize, Serialize};

use super::{dbm_to_watt, default_epsilon_grid, EpsilonStrategy, Method, ProblemKind, ProblemSpec};
use crate::convexcore::SolverOptions;
use crate::error::{Error, Result};
use crate::linkmodel::{RelayMode, SystemParams};
use crate::netgen::{build_grid_topology, generate_instance, FadingSpec, NetworkInstance, TopologySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub n_cells: usize,
    pub cell_size_m: f64,
    /// BS→relay and relay→user distance.
    pub hop_m: f64,
    pub path_loss_exponent: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self { n_cells: 4, cell_size_m: 150.0, hop_m: 35.0 * 2f64.sqrt(), path_loss_exponent: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FadingConfig {
    pub rician_k_db: f64,
}

impl Default for FadingConfig {
    fn default() -> Self {
        Self { rician_k_db: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub eta: f64,
    pub noise_dbm: f64,
    pub p_min_dbm: f64,
    pub p_max_dbm: f64,
    pub block_time_s: f64,
    /// DF timeslot fraction used when it is not searched.
    pub epsilon: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self { eta: 0.5, noise_dbm: -131.0, p_min_dbm: 26.0, p_max_dbm: 46.0, block_time_s: 1.0, epsilon: 0.5 }
    }
}

impl SystemConfig {
    pub fn params(&self) -> Result<SystemParams> {
        SystemParams::new(
            self.eta,
            dbm_to_watt(self.noise_dbm),
            dbm_to_watt(self.p_min_dbm),
            dbm_to_watt(self.p_max_dbm),
            self.block_time_s,
            self.epsilon,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub mode: RelayMode,
    pub method: Method,
    pub tau_min: f64,
    pub varsigma: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub epsilon_grid: Vec<f64>,
    pub epsilon_strategy: EpsilonStrategy,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        let spec = ProblemSpec::default();
        Self {
            kind: spec.kind,
            mode: spec.mode,
            method: spec.method,
            tau_min: 0.05,
            varsigma: spec.varsigma,
            tol: spec.tol,
            max_iter: spec.max_iter,
            epsilon_grid: default_epsilon_grid(),
            epsilon_strategy: EpsilonStrategy::FixedAllocation,
        }
    }
}

/// Seed list and sweep ranges for the experiment suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    /// BS power budgets for the AF-vs-DF comparison.
    pub af_df_p_max_dbm: Vec<f64>,
    /// Also run the per-ε rerun search in the AF-vs-DF sweep.
    pub rerun_epsilon_search: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: (0..10).collect(),
            af_df_p_max_dbm: vec![35.0, 37.0, 39.0, 41.0, 43.0, 45.0],
            rerun_epsilon_search: false,
        }
    }
}

/// Full run configuration, read from JSON. Every section and field is
/// optional and falls back to the default scenario.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub topology: TopologyConfig,
    pub fading: FadingConfig,
    pub system: SystemConfig,
    pub problem: ProblemConfig,
    pub solver: SolverOptions,
    pub experiment: ExperimentConfig,
}

impl Config {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.topology()?;
        FadingSpec::new(self.fading.rician_k_db, 0)?;
        self.spec().validate()?;
        if self.problem.epsilon_grid.is_empty() {
            return Err(Error::Config("epsilon grid is empty".into()));
        }
        if !(self.solver.tol > 0.0) || self.solver.newton_max == 0 || !(self.solver.mu > 1.0) {
            return Err(Error::Config("solver options out of range".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<SystemParams> {
        self.system.params()
    }

    pub fn topology(&self) -> Result<TopologySpec> {
        let t = &self.topology;
        build_grid_topology(t.n_cells, t.cell_size_m, t.hop_m, t.path_loss_exponent)
    }

    pub fn instance(&self, seed: u64) -> Result<NetworkInstance> {
        generate_instance(&self.topology()?, &FadingSpec::new(self.fading.rician_k_db, seed)?)
    }

    pub fn spec(&self) -> ProblemSpec {
        let p = &self.problem;
        ProblemSpec {
            kind: p.kind,
            mode: p.mode,
            method: p.method,
            tau_min: p.tau_min,
            varsigma: p.varsigma,
            tol: p.tol,
            max_iter: p.max_iter,
            solver: self.solver,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_gives_default_scenario() {
        let cfg = Config::from_json("{}").unwrap();
        assert_eq!(cfg, Config::default());
        let p = cfg.params().unwrap();
        assert!((p.sigma - 7.943e-17).abs() < 1e-19);
        assert!((p.p_min - 0.3981).abs() < 1e-4);
    }

    #[test]
    fn partial_sections_and_unknown_fields() {
        let cfg = Config::from_json(r#"{"system": {"p_max_dbm": 40}, "solver": {"tol": 1e-7}}"#).unwrap();
        assert_eq!(cfg.system.p_max_dbm, 40.0);
        assert_eq!(cfg.system.p_min_dbm, 26.0);
        assert_eq!(cfg.solver.tol, 1e-7);
        assert!(Config::from_json(r#"{"system": {"p_max": 40}}"#).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Config::from_json(r#"{"problem": {"varsigma": 1.5}}"#).is_err());
        assert!(Config::from_json(r#"{"problem": {"mode": "df", "method": "dc"}}"#).is_err());
        assert!(Config::from_json(r#"{"system": {"p_min_dbm": 50}}"#).is_err());
        assert!(Config::from_json(r#"{"topology": {"n_cells": 3}}"#).is_err());
    }

    #[test]
    fn round_trip() {
        let mut cfg = Config::default();
        cfg.problem.kind = ProblemKind::MaxMin;
        let back = Config::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
