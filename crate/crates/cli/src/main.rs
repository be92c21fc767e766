use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use swipt_sca::driver::{
    baseline_individual, experiment_suite, run_sca, watt_to_dbm, Config, Individual, Method, ProblemKind,
    Trace,
};
use swipt_sca::linkmodel::RelayMode;

mod selftest;

/// Joint BS power, relay power and power-splitting optimization for
/// multicell networks with energy-harvesting relays.
#[derive(Parser, Debug)]
#[command(name = "swipt-sca", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one problem on one seed and print the iteration trace
    Solve(Common),
    /// Run the full experiment suite (convergence, baselines, AF vs DF) and write CSVs
    Sweep(SweepArgs),
    /// Compare joint optimization against the single-block baselines
    Baselines(Common),
    /// Check monotonicity, feasibility, method agreement and dominance on a few seeds
    Selftest(Common),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ProblemArg {
    /// Sum throughput
    P1,
    /// Minimum throughput
    P2,
    /// Total BS power under a throughput floor
    P3,
}

impl From<ProblemArg> for ProblemKind {
    fn from(p: ProblemArg) -> Self {
        match p {
            ProblemArg::P1 => ProblemKind::SumRate,
            ProblemArg::P2 => ProblemKind::MaxMin,
            ProblemArg::P3 => ProblemKind::SumPower,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Gp,
    Dc,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Af,
    Df,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON configuration; missing sections fall back to the default scenario
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    problem: Option<ProblemArg>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Seed list, e.g. `3`, `0,4,7` or `0..20`
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Outer relative-change tolerance
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Initialization scale in (0, 1)
    #[arg(long)]
    varsigma: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// BS power budgets for the AF/DF comparison, dBm
    #[arg(long, value_delimiter = ',')]
    p_max_dbm: Option<Vec<f64>>,
    /// DF timeslot fractions to search
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    /// Also rerun the full iteration at every timeslot fraction
    #[arg(long)]
    rerun_epsilon: bool,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().with_context(|| format!("bad seed range start in {s:?}"))?;
        let b: u64 = b.trim().parse().with_context(|| format!("bad seed range end in {s:?}"))?;
        if a >= b {
            bail!("empty seed range {s:?}");
        }
        return Ok((a..b).collect());
    }
    let seeds = s
        .split(',')
        .map(|t| t.trim().parse::<u64>().with_context(|| format!("bad seed {t:?}")))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        bail!("no seeds given");
    }
    Ok(seeds)
}

/// Loads the configuration and applies command-line overrides.
fn load_config(c: &Common) -> Result<Config> {
    let mut cfg = match &c.config {
        Some(p) => Config::from_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => Config::default(),
    };
    if let Some(p) = c.problem {
        cfg.problem.kind = p.into();
    }
    if let Some(m) = c.method {
        cfg.problem.method = match m {
            MethodArg::Gp => Method::Gp,
            MethodArg::Dc => Method::Dc,
        };
    }
    if let Some(m) = c.mode {
        cfg.problem.mode = match m {
            ModeArg::Af => RelayMode::Af,
            ModeArg::Df => RelayMode::Df,
        };
    }
    if let Some(s) = &c.seeds {
        cfg.experiment.seeds = parse_seeds(s)?;
    }
    if let Some(t) = c.tol {
        cfg.problem.tol = t;
    }
    if let Some(m) = c.max_iter {
        cfg.problem.max_iter = m;
    }
    if let Some(v) = c.varsigma {
        cfg.problem.varsigma = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_trace(t: &Trace) {
    println!(
        "{:>4} {:>14} {:>10} {:>10} {:>11} {:>10} {:>10} {:>7}",
        "iter", "objective", "sum_rate", "min_rate", "sum_P_dBm", "residual", "kkt", "newton"
    );
    for r in &t.records {
        println!(
            "{:>4}{} {:>14.8} {:>10.5} {:>10.5} {:>11.4} {:>10.2e} {:>10} {:>7}",
            r.iteration,
            if r.warmup { "w" } else { " " },
            r.objective,
            r.sum_rate,
            r.min_rate,
            watt_to_dbm(r.sum_power),
            r.max_residual,
            r.kkt_residual.map_or("-".into(), |k| format!("{k:.2e}")),
            r.newton_steps,
        );
    }
    let tau: Vec<String> = t.throughput.iter().map(|v| format!("{v:.4}")).collect();
    println!("status {:?} after {} iterations, {:.2}s", t.status, t.n_iterations(), t.wall_clock_s);
    if let Some(e) = t.epsilon {
        println!("epsilon {e}");
    }
    println!("throughput [{}] bps/Hz", tau.join(", "));
}

fn write_json(dir: &Path, name: &str, value: &Trace) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value)?)?;
    Ok(path)
}

fn cmd_solve(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let [seed] = cfg.experiment.seeds[..] else {
        bail!("solve takes exactly one seed, got {}", cfg.experiment.seeds.len());
    };
    let params = cfg.params()?;
    let net = cfg.instance(seed)?;
    let spec = cfg.spec();
    let trace = if spec.mode == RelayMode::Df && cfg.problem.epsilon_grid.len() > 1 {
        let search = swipt_sca::driver::optimize_epsilon_df(&net, &params, &cfg.problem.epsilon_grid, &spec, cfg.problem.epsilon_strategy)?;
        search.trace
    } else {
        run_sca(&spec, &net, &params)?
    };
    println!("{} {} {} seed {seed}", spec.kind.label(), format!("{:?}", spec.mode).to_lowercase(), spec.method.label());
    print_trace(&trace);
    if let Some(dir) = &c.out {
        let path = write_json(dir, &format!("trace_{}_{}_seed{seed}.json", spec.kind.label(), spec.method.label()), &trace)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    if let Some(p) = &a.p_max_dbm {
        cfg.experiment.af_df_p_max_dbm = p.clone();
    }
    if let Some(e) = &a.epsilon {
        cfg.problem.epsilon_grid = e.clone();
    }
    if a.rerun_epsilon {
        cfg.experiment.rerun_epsilon_search = true;
    }
    cfg.validate()?;
    let out = a.common.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    let report = experiment_suite(&cfg, &out)?;
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    for (k, v) in &report.means {
        println!("{k:<32} {v:.6}");
    }
    for s in &report.skipped {
        println!("skipped: {s}");
    }
    Ok(())
}

fn cmd_baselines(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let params = cfg.params()?;
    let spec = swipt_sca::driver::ProblemSpec { method: Method::Gp, mode: RelayMode::Af, ..cfg.spec() };
    let which: Vec<Individual> = if spec.kind == ProblemKind::SumPower {
        vec![Individual::BsPower]
    } else {
        Individual::ALL.to_vec()
    };
    let mut header = vec!["seed".to_string(), "joint".to_string()];
    header.extend(which.iter().map(|w| w.label().to_string()));
    println!("{}", header.join(","));
    let mut rows = Vec::new();
    for &seed in &cfg.experiment.seeds {
        let net = cfg.instance(seed)?;
        let mut row = vec![seed.to_string()];
        row.push(match run_sca(&spec, &net, &params) {
            Ok(t) => format!("{:.6}", t.objective()),
            Err(e) => {
                eprintln!("seed {seed} joint: {e}");
                String::new()
            }
        });
        for w in &which {
            row.push(match baseline_individual(*w, &spec, &net, &params) {
                Ok(t) => format!("{:.6}", t.objective()),
                Err(e) => {
                    eprintln!("seed {seed} {}: {e}", w.label());
                    String::new()
                }
            });
        }
        println!("{}", row.join(","));
        rows.push(row);
    }
    if let Some(dir) = &c.out {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("baselines_{}.csv", spec.kind.label()));
        let mut body = header.join(",") + "\n";
        for r in &rows {
            body += &(r.join(",") + "\n");
        }
        std::fs::write(&path, body)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Solve(c) => cmd_solve(c).map(|_| true),
        Command::Sweep(a) => cmd_sweep(a).map(|_| true),
        Command::Baselines(c) => cmd_baselines(c).map(|_| true),
        Command::Selftest(c) => {
            let mut cfg = load_config(c)?;
            if c.seeds.is_none() {
                cfg.experiment.seeds = (0..3).collect();
            }
            selftest::run(&cfg)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists_and_ranges() {
        assert_eq!(parse_seeds("3").unwrap(), vec![3]);
        assert_eq!(parse_seeds("0, 4,7").unwrap(), vec![0, 4, 7]);
        assert_eq!(parse_seeds("2..5").unwrap(), vec![2, 3, 4]);
        assert!(parse_seeds("5..5").is_err());
        assert!(parse_seeds("a").is_err());
    }
}
