use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{
    baseline_individual, dbm_to_watt, optimize_epsilon_df, run_sca, Config, EpsilonStrategy, Individual, Method,
    ProblemKind, ProblemSpec,
};
use crate::error::Result;
use crate::linkmodel::RelayMode;

/// What a suite run produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub files: Vec<PathBuf>,
    /// Seed-averaged headline numbers, keyed by a descriptive label.
    pub means: BTreeMap<String, f64>,
    /// Runs that could not be completed, with the reason.
    pub skipped: Vec<String>,
}

#[derive(Serialize)]
struct ConvergenceRow {
    iteration: usize,
    objective: f64,
    max_residual: f64,
    method: &'static str,
    seed: u64,
}

#[derive(Serialize)]
struct BaselineRow {
    problem: &'static str,
    seed: u64,
    joint: f64,
    bs_power_only: Option<f64>,
    relay_power_only: Option<f64>,
    split_only: Option<f64>,
}

#[derive(Serialize)]
struct AfDfRow {
    p_max_dbm: f64,
    seed: u64,
    af_sum_rate: f64,
    df_half_sum_rate: f64,
    df_search_sum_rate: f64,
    df_search_epsilon: f64,
    df_rerun_sum_rate: Option<f64>,
    df_rerun_epsilon: Option<f64>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every experiment for the configured seeds and writes CSVs plus a
/// `manifest.json` into `out_dir`:
///
/// * `convergence_{p1,p2,p3}.csv`: per-iteration objective for GP and DC
/// * `baselines.csv`: joint optimization against each single-block baseline
/// * `af_vs_df.csv`: AF with equal timeslots against DF over the power sweep
pub fn experiment_suite(config: &Config, out_dir: &Path) -> Result<SuiteReport> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let params = config.params()?;
    let seeds = &config.experiment.seeds;
    let base = config.spec();
    let mut report = SuiteReport { files: Vec::new(), means: BTreeMap::new(), skipped: Vec::new() };
    let nets = seeds.iter().map(|&s| config.instance(s)).collect::<Result<Vec<_>>>()?;

    for kind in [ProblemKind::SumRate, ProblemKind::MaxMin, ProblemKind::SumPower] {
        let mut rows = Vec::new();
        for method in [Method::Gp, Method::Dc] {
            let spec = ProblemSpec { kind, method, mode: RelayMode::Af, ..base };
            let mut finals = Vec::new();
            for (net, &seed) in nets.iter().zip(seeds) {
                match run_sca(&spec, net, &params) {
                    Ok(t) => {
                        finals.push(t.objective());
                        rows.extend(t.records.iter().map(|r| ConvergenceRow {
                            iteration: r.iteration,
                            objective: r.objective,
                            max_residual: r.max_residual,
                            method: method.label(),
                            seed,
                        }));
                    }
                    Err(e) => report.skipped.push(format!("{} {} seed {seed}: {e}", kind.label(), method.label())),
                }
            }
            report.means.insert(format!("{}_{}_objective", kind.label(), method.label()), mean(&finals));
        }
        let path = out_dir.join(format!("convergence_{}.csv", kind.label()));
        write_csv(&path, &rows)?;
        report.files.push(path);
    }

    let mut rows = Vec::new();
    for kind in [ProblemKind::SumRate, ProblemKind::MaxMin, ProblemKind::SumPower] {
        let spec = ProblemSpec { kind, method: Method::Gp, mode: RelayMode::Af, ..base };
        for (net, &seed) in nets.iter().zip(seeds) {
            let joint = match run_sca(&spec, net, &params) {
                Ok(t) => t.objective(),
                Err(e) => {
                    report.skipped.push(format!("{} joint seed {seed}: {e}", kind.label()));
                    continue;
                }
            };
            let mut row = BaselineRow { problem: kind.label(), seed, joint, bs_power_only: None, relay_power_only: None, split_only: None };
            for which in Individual::ALL {
                if kind == ProblemKind::SumPower && which != Individual::BsPower {
                    continue;
                }
                let value = match baseline_individual(which, &spec, net, &params) {
                    Ok(t) => Some(t.objective()),
                    Err(e) => {
                        report.skipped.push(format!("{} {} seed {seed}: {e}", kind.label(), which.label()));
                        None
                    }
                };
                match which {
                    Individual::BsPower => row.bs_power_only = value,
                    Individual::RelayPower => row.relay_power_only = value,
                    Individual::Split => row.split_only = value,
                }
            }
            rows.push(row);
        }
    }
    for kind in [ProblemKind::SumRate, ProblemKind::MaxMin] {
        let ratios: Vec<f64> = rows
            .iter()
            .filter(|r| r.problem == kind.label())
            .filter_map(|r| {
                let best = [r.bs_power_only, r.relay_power_only, r.split_only].into_iter().flatten().fold(f64::NEG_INFINITY, f64::max);
                (best > 0.0).then(|| r.joint / best)
            })
            .collect();
        report.means.insert(format!("{}_joint_over_best_individual", kind.label()), mean(&ratios));
    }
    let path = out_dir.join("baselines.csv");
    write_csv(&path, &rows)?;
    report.files.push(path);

    let mut rows = Vec::new();
    for &p_max_dbm in &config.experiment.af_df_p_max_dbm {
        let p = params.with_p_max(dbm_to_watt(p_max_dbm))?;
        let mut ratios = Vec::new();
        for (net, &seed) in nets.iter().zip(seeds) {
            let af_spec = ProblemSpec { kind: ProblemKind::SumRate, method: Method::Gp, mode: RelayMode::Af, ..base };
            let df_spec = ProblemSpec { mode: RelayMode::Df, ..af_spec };
            let run = || -> Result<AfDfRow> {
                let af = run_sca(&af_spec, net, &p)?.objective();
                let search = optimize_epsilon_df(net, &p, &config.problem.epsilon_grid, &df_spec, config.problem.epsilon_strategy)?;
                let half = search.trace.records.last().map_or(f64::NAN, |r| r.objective);
                let rerun = if config.experiment.rerun_epsilon_search && config.problem.epsilon_strategy != EpsilonStrategy::Rerun {
                    Some(optimize_epsilon_df(net, &p, &config.problem.epsilon_grid, &df_spec, EpsilonStrategy::Rerun)?)
                } else {
                    None
                };
                Ok(AfDfRow {
                    p_max_dbm,
                    seed,
                    af_sum_rate: af,
                    df_half_sum_rate: half,
                    df_search_sum_rate: search.sum_rate,
                    df_search_epsilon: search.epsilon,
                    df_rerun_sum_rate: rerun.as_ref().map(|r| r.sum_rate),
                    df_rerun_epsilon: rerun.as_ref().map(|r| r.epsilon),
                })
            };
            match run() {
                Ok(row) => {
                    ratios.push(row.df_search_sum_rate / row.af_sum_rate);
                    rows.push(row);
                }
                Err(e) => report.skipped.push(format!("af/df {p_max_dbm} dBm seed {seed}: {e}")),
            }
        }
        report.means.insert(format!("df_over_af_at_{p_max_dbm}dbm"), mean(&ratios));
    }
    let path = out_dir.join("af_vs_df.csv");
    write_csv(&path, &rows)?;
    report.files.push(path);

    let manifest = run_manifest(config, &report.files)?;
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    report.files.push(path);
    Ok(report)
}

/// Git-style object id (`blob <len>\0<bytes>`, SHA-256) of a byte string.
fn blob_id(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Manifest with the configuration, seed list, per-file object ids and a
/// content hash over the configuration and all files.
pub fn run_manifest(config: &Config, files: &[PathBuf]) -> Result<serde_json::Value> {
    let config_json = config.to_json()?;
    let mut ids = BTreeMap::new();
    for f in files {
        let name = f.file_name().map_or_else(|| f.display().to_string(), |n| n.to_string_lossy().into_owned());
        ids.insert(name, blob_id(&std::fs::read(f)?));
    }
    let mut all = config_json.clone();
    for (name, id) in &ids {
        all.push_str(&format!("\n{id} {name}"));
    }
    Ok(serde_json::json!({
        "generator": concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")),
        "config": config,
        "seeds": config.experiment.seeds,
        "files": ids,
        "content_hash": blob_id(all.as_bytes()),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_id_matches_git_sha256_format() {
        // `git hash-object --object-format=sha256` of an empty file
        assert_eq!(blob_id(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
    }
}
