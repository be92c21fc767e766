use anyhow::Result;

use swipt_sca::driver::{baseline_individual, run_sca, Config, Individual, Method, ProblemKind, ProblemSpec, Trace};
use swipt_sca::linkmodel::{RelayMode, FEASIBILITY_TOL};

struct Check {
    name: &'static str,
    failures: Vec<String>,
    count: usize,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Self { name, failures: Vec::new(), count: 0 }
    }

    fn expect(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.count += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    fn report(&self) -> bool {
        let pass = self.failures.is_empty();
        println!("{} {} ({} checks)", if pass { "PASS" } else { "FAIL" }, self.name, self.count);
        for f in &self.failures {
            println!("    {f}");
        }
        pass
    }
}

/// Objective never moves the wrong way outside the warm-up phase.
fn monotone(t: &Trace) -> Option<usize> {
    let up = t.spec.kind.maximizes();
    t.records.windows(2).find_map(|w| {
        if w[0].warmup || w[1].warmup {
            return None;
        }
        let slack = 1e-9 * w[0].objective.abs().max(1e-12);
        let bad = if up { w[1].objective < w[0].objective - slack } else { w[1].objective > w[0].objective + slack };
        bad.then_some(w[1].iteration)
    })
}

/// Runs the invariant checks on the configured seeds; true when all pass.
pub fn run(cfg: &Config) -> Result<bool> {
    let params = cfg.params()?;
    let base = ProblemSpec { mode: RelayMode::Af, ..cfg.spec() };
    let mut feasible = Check::new("every iterate feasible");
    let mut mono = Check::new("objective monotone");
    let mut product = Check::new("GP surrogate product non-increasing");
    let mut agree = Check::new("GP and DC agree within 1%");
    let mut dominance = Check::new("joint dominates single-block baselines");
    let mut errors = Check::new("runs complete");

    for &seed in &cfg.experiment.seeds {
        let net = cfg.instance(seed)?;
        for kind in [ProblemKind::SumRate, ProblemKind::MaxMin, ProblemKind::SumPower] {
            let mut finals = Vec::new();
            for method in [Method::Gp, Method::Dc] {
                let spec = ProblemSpec { kind, method, ..base };
                let tag = format!("seed {seed} {} {}", kind.label(), method.label());
                let t = match run_sca(&spec, &net, &params) {
                    Ok(t) => t,
                    Err(swipt_sca::Error::Infeasible { .. }) if kind == ProblemKind::SumPower => {
                        println!("note: {tag}: throughput floor {} unreachable", spec.tau_min);
                        continue;
                    }
                    Err(e) => {
                        errors.expect(false, || format!("{tag}: {e}"));
                        continue;
                    }
                };
                errors.expect(true, String::new);
                feasible.expect(t.max_residual() <= FEASIBILITY_TOL, || format!("{tag}: residual {:.2e}", t.max_residual()));
                let bad = monotone(&t);
                mono.expect(bad.is_none(), || format!("{tag}: iteration {}", bad.unwrap_or_default()));
                if kind == ProblemKind::SumRate && method == Method::Gp {
                    let worse = t.records.windows(2).find(|w| {
                        let (a, b) = (w[0].log_ratio_product.unwrap_or(0.0), w[1].log_ratio_product.unwrap_or(0.0));
                        b > a + 1e-9 * a.abs().max(1.0)
                    });
                    product.expect(worse.is_none(), || format!("{tag}: iteration {}", worse.map_or(0, |w| w[1].iteration)));
                }
                finals.push(t.objective());
            }
            if let [gp, dc] = finals[..] {
                let gap = (gp - dc).abs() / gp.abs().max(dc.abs());
                agree.expect(gap <= 0.01, || format!("seed {seed} {}: gp {gp:.6} dc {dc:.6}", kind.label()));
            }
            if kind != ProblemKind::SumPower {
                let spec = ProblemSpec { kind, method: Method::Gp, ..base };
                let joint = run_sca(&spec, &net, &params)?.objective();
                for which in Individual::ALL {
                    let b = baseline_individual(which, &spec, &net, &params)?.objective();
                    dominance.expect(b <= joint * (1.0 + 1e-6), || {
                        format!("seed {seed} {} {}: joint {joint:.6} < {b:.6}", kind.label(), which.label())
                    });
                }
            }
        }
    }
    let mut all = true;
    for c in [&errors, &feasible, &mono, &product, &agree, &dominance] {
        all &= c.report();
    }
    Ok(all)
}
