use mlmc_core::brownian::crossing_probability;
use mlmc_core::validation::{self, BRIDGE_CASES};
use mlmc_core::{
    convergence_table, coupling_statistic, estimate_level, gbm_model, mlmc_run, AsianTreatment,
    GbmParams, MlmcConfig, MlmcProblem, PayoffSpec, Scheme,
};

fn gbm(mu: f64, sigma: f64) -> mlmc_core::ScalarSdeModel {
    gbm_model(GbmParams::new(mu, sigma, 1.0, 1.0).unwrap()).unwrap()
}

fn all_payoffs() -> Vec<PayoffSpec> {
    vec![
        PayoffSpec::european_call(1.0, 1.0),
        PayoffSpec::asian_call(1.0, AsianTreatment::BridgeIntegral),
        PayoffSpec::asian_call(1.0, AsianTreatment::Trapezoidal),
        PayoffSpec::lookback_floating(),
        PayoffSpec::down_and_out_call(1.0, 0.85),
        PayoffSpec::digital(1.0),
    ]
}

#[test]
fn coarse_estimator_matches_previous_fine_estimator() {
    for payoff in all_payoffs() {
        let name = payoff.name();
        let p = MlmcProblem::new(gbm(0.05, 0.2), payoff, Scheme::Milstein).unwrap();
        let table = convergence_table(&p, 0..=5, 200_000, 21).unwrap();
        for w in table.windows(2) {
            let z = coupling_statistic(&w[0], &w[1]);
            assert!(z <= 3.0, "{name} level {}: {z:.2} SE", w[1].level);
        }
    }
}

#[test]
fn telescoping_sum_matches_direct_estimate() {
    for payoff in [PayoffSpec::european_call(1.0, 1.0), PayoffSpec::lookback_floating()] {
        let p = MlmcProblem::new(gbm(0.05, 0.2), payoff, Scheme::Milstein).unwrap();
        let levels = convergence_table(&p, 0..=3, 200_000, 31).unwrap();
        let sum: f64 = levels.iter().map(|e| e.mean_y()).sum();
        let sum_var: f64 = levels.iter().map(|e| e.y.std_error().powi(2)).sum();
        let direct = estimate_level(&p, 3, 200_000, 32).unwrap();
        let se = (sum_var + direct.p.std_error().powi(2)).sqrt();
        assert!((sum - direct.mean_p()).abs() <= 3.0 * se);
    }
}

#[test]
fn zero_volatility_pairs_coincide() {
    let continuous = [
        PayoffSpec::european_call(0.9, 1.0),
        PayoffSpec::asian_call(0.9, AsianTreatment::BridgeIntegral),
        PayoffSpec::asian_call(0.9, AsianTreatment::Trapezoidal),
        PayoffSpec::lookback_floating(),
    ];
    for payoff in continuous {
        for scheme in [Scheme::Milstein, Scheme::Euler] {
            let p = MlmcProblem::new(gbm(0.0, 0.0), payoff.clone(), scheme).unwrap();
            for e in convergence_table(&p, 1..=4, 100, 0).unwrap() {
                assert_eq!(e.y.mean(), 0.0);
                assert_eq!(e.var_y(), 0.0);
            }
        }
    }
    for payoff in [PayoffSpec::down_and_out_call(1.0, 0.85), PayoffSpec::digital(1.0)] {
        let p = MlmcProblem::new(gbm(0.0, 0.0), payoff, Scheme::Milstein).unwrap();
        assert!(estimate_level(&p, 2, 100, 0).is_err());
    }
}

#[test]
fn adaptive_run_is_thread_count_invariant() {
    let p = MlmcProblem::new(gbm(0.05, 0.2), PayoffSpec::digital(1.0), Scheme::Milstein).unwrap();
    let config = MlmcConfig {
        n_warm: 2000,
        seed: 9,
        ..MlmcConfig::for_payoff(&p.payoff)
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mlmc_run(&p, 2e-3, &config).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert!(one.stat_error.powi(2) + one.bias_estimate.powi(2) <= 2e-3 * 2e-3);
}

#[test]
fn validation_suite_passes() {
    let outcomes = validation::run_all(2024, Default::default()).unwrap();
    for o in &outcomes {
        assert!(o.passed, "{o}");
    }
    assert_eq!(outcomes.len(), 14);
}

#[test]
fn broken_crossing_formula_is_caught() {
    // the exponent's sign flipped
    let flipped = |a: f64, b: f64, vol: f64, h: f64, barrier: f64| {
        let p = crossing_probability(a, b, vol, h, barrier)?;
        Ok(if p > 0.0 && p < 1.0 { 1.0 / p } else { p })
    };
    let caught = BRIDGE_CASES.iter().enumerate().any(|(i, case)| {
        !validation::crossing_frequency_check_with(case, 20_000, 7, i as u64, flipped)
            .unwrap()
            .passed
    });
    assert!(caught);

    // a formula missing the factor 2 is also caught
    let halved = |a: f64, b: f64, vol: f64, h: f64, barrier: f64| {
        Ok(crossing_probability(a, b, vol, h, barrier)?.sqrt())
    };
    let caught = BRIDGE_CASES.iter().enumerate().any(|(i, case)| {
        !validation::crossing_frequency_check_with(case, 20_000, 7, i as u64, halved)
            .unwrap()
            .passed
    });
    assert!(caught);
}
