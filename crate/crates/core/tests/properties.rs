use proptest::prelude::*;

use swipt_sca::convexcore::{LseProgram, Monomial, Posynomial};
use swipt_sca::driver::{dbm_to_watt, init_allocation, watt_to_dbm, Config};
use swipt_sca::linkmodel::{check_feasibility, phi_coeffs, sinr_af, throughput_af, Allocation, RelayMode, FEASIBILITY_TOL};
use swipt_sca::sca_dc::{eval_ubar_vbar, LogVars};
use swipt_sca::sca_gp::{condense_posynomial, uv_functions, GpLayout};

fn allocation(n: usize) -> impl Strategy<Value = Allocation> {
    (
        prop::collection::vec(26.0..46.0f64, n),
        prop::collection::vec(-8.0..2.0f64, n),
        prop::collection::vec(0.01..0.99f64, n),
    )
        .prop_map(|(p_dbm, p_log, a)| {
            let bs = p_dbm.iter().map(|d| dbm_to_watt(*d)).collect();
            let relay = p_log.iter().map(|l| 10f64.powf(*l)).collect();
            Allocation::new(bs, relay, a).unwrap()
        })
}

fn posynomial(n: usize) -> impl Strategy<Value = Posynomial> {
    prop::collection::vec((-2.0..2.0f64, prop::collection::vec(-2.0..2.0f64, n)), 1..6).prop_map(move |terms| {
        Posynomial::new(n, terms.into_iter().map(|(lc, e)| Monomial::new(10f64.powf(lc), e)).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dbm_round_trip(x in -150.0..60.0f64) {
        prop_assert!((watt_to_dbm(dbm_to_watt(x)) - x).abs() <= 1e-12 * x.abs().max(1.0));
    }

    #[test]
    fn condensation_is_a_global_lower_bound_that_touches(
        f in posynomial(3),
        x0 in prop::collection::vec(-2.0..2.0f64, 3),
        x in prop::collection::vec(-4.0..4.0f64, 3),
    ) {
        let x0: Vec<f64> = x0.iter().map(|v| v.exp()).collect();
        let x: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let m = condense_posynomial(&f, &x0).unwrap();
        prop_assert!(m.eval(&x) <= f.eval(&x) * (1.0 + 1e-9));
        prop_assert!((m.eval(&x0) / f.eval(&x0) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn sinr_routes_agree(alloc in allocation(4), seed in 0u64..50) {
        // direct SINR, GP ratio v/u and DC difference of logs
        let cfg = Config::default();
        let params = cfg.params().unwrap();
        let net = cfg.instance(seed).unwrap();
        let phi = phi_coeffs(&net, params.sigma);
        let gamma = sinr_af(&alloc, &phi);
        let layout = GpLayout::new(4, 0);
        let uv = uv_functions(&phi, &layout);
        let x = layout.point(&alloc, &[]).unwrap();
        let (ubar, vbar) = eval_ubar_vbar(&LogVars::from_allocation(&alloc).to_vec(), &phi);
        let tau = throughput_af(&alloc, &phi);
        for i in 0..4 {
            let ratio = uv.v[i].eval(&x) / uv.u[i].eval(&x);
            prop_assert!((ratio - (1.0 + gamma[i])).abs() <= 1e-9 * ratio);
            prop_assert!((vbar[i] - ubar[i] - (1.0 + gamma[i]).log2()).abs() <= 1e-9 * vbar[i].abs().max(1.0));
            prop_assert!((tau[i] - 0.5 * (1.0 + gamma[i]).log2()).abs() <= 1e-12 * tau[i].max(1.0));
        }
    }

    #[test]
    fn initialization_is_strictly_feasible(varsigma in 0.01..0.99f64, seed in 0u64..50) {
        let cfg = Config::default();
        let params = cfg.params().unwrap();
        let net = cfg.instance(seed).unwrap();
        let a = init_allocation(varsigma, &params, &net).unwrap();
        let rep = check_feasibility(&a, &net, &params, RelayMode::Af, FEASIBILITY_TOL).unwrap();
        prop_assert!(rep.feasible);
        prop_assert!(rep.relay_cap.iter().all(|r| *r < 0.0));
    }

    #[test]
    fn instances_are_reproducible(seed in any::<u64>()) {
        let cfg = Config::default();
        prop_assert_eq!(cfg.instance(seed).unwrap(), cfg.instance(seed).unwrap());
    }
}

#[test]
fn program_json_round_trip_preserves_values() {
    let f = Posynomial::new(2, vec![Monomial::new(0.5, vec![1.0, -1.0]), Monomial::new(2.0, vec![0.0, 1.0])]).unwrap();
    let mut p = LseProgram::new(2);
    p.add_objective_lse(1.0, f.to_lse().unwrap()).unwrap();
    p.add_lse_constraint(f.to_lse().unwrap()).unwrap();
    p.set_bounds(0, -1.0, 1.0).unwrap();
    let q = LseProgram::from_json(&p.to_json().unwrap()).unwrap();
    let y = [0.3, -0.2];
    assert_eq!(p.objective_value(&y), q.objective_value(&y));
    assert_eq!(p.max_violation(&y), q.max_violation(&y));
}
