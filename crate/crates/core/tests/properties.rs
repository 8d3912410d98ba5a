mod common;

use std::sync::Arc;

use proptest::prelude::*;
use qnet::lyapunov::{analytic_drift, brute_force_drift, lyapunov_value, CountVector};
use qnet::model::{solve_traffic, NetworkSpec};
use qnet::reduction::{build_reduction, verify_reduction, Slack};
use qnet::simulate::{coupled_run_unchecked, run, NetworkModel, PolicyKind, Simulation};

fn spec_strategy(max_j: usize, max_a: usize, single_rate: bool) -> impl Strategy<Value = NetworkSpec> {
    any::<u64>().prop_map(move |seed| common::random_spec(&mut common::rng(seed), max_j, max_a, single_rate))
}

fn policy_strategy() -> impl Strategy<Value = PolicyKind> {
    prop_oneof![
        Just(PolicyKind::Fifo),
        Just(PolicyKind::Lifo),
        Just(PolicyKind::RandomOrder),
        Just(PolicyKind::StaticPriority(qnet::simulate::PriorityOrder::Global(vec![1, 0, 2]))),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conservation_holds(spec in spec_strategy(8, 4, false)) {
        let sol = solve_traffic(&spec).unwrap();
        prop_assert!(sol.traffic_residual < 1e-10);
        prop_assert!(sol.conservation_residual.iter().all(|r| r.abs() < 1e-9));
    }

    #[test]
    fn traffic_is_linear_in_lambda(spec in spec_strategy(6, 3, false), c in 0.1f64..5.0) {
        let a = solve_traffic(&spec).unwrap();
        let b = solve_traffic(&spec.with_lambda(spec.lambda * c)).unwrap();
        for (ra, rb) in a.arrival_rate.iter().zip(&b.arrival_rate) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!((c * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn drift_identity_on_random_states(spec in spec_strategy(4, 3, true), raw in prop::collection::vec(0u32..4, 12)) {
        let sol = solve_traffic(&spec).unwrap();
        let cells = spec.num_classes * spec.num_servers;
        let rows = raw[..cells].chunks(spec.num_servers).map(<[u32]>::to_vec).collect();
        let x = CountVector::new(rows).unwrap();
        for j in 0..spec.num_servers {
            let a = analytic_drift(&spec, &sol, &x, j).unwrap();
            let b = brute_force_drift(&spec, &sol, &x, j).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lyapunov_is_additive(spec in spec_strategy(4, 3, false), raw in prop::collection::vec(0u32..6, 24)) {
        let sol = solve_traffic(&spec).unwrap();
        let cells = spec.num_classes * spec.num_servers;
        let mk = |v: &[u32]| CountVector::new(v.chunks(spec.num_servers).map(<[u32]>::to_vec).collect()).unwrap();
        let x = mk(&raw[..cells]);
        let y = mk(&raw[12..12 + cells]);
        let sum = x.add(&y).unwrap();
        for j in 0..spec.num_servers {
            let g = &sol.visit_counts;
            let lhs = lyapunov_value(&sum, g, j).unwrap();
            let rhs = lyapunov_value(&x, g, j).unwrap() + lyapunov_value(&y, g, j).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn state_invariants_hold_along_paths(spec in spec_strategy(3, 3, false), policy in policy_strategy(), seed in any::<u64>()) {
        let model = Arc::new(NetworkModel::probabilistic(&spec).unwrap());
        let mut sim = Simulation::new(model, policy.clone(), seed);
        for _ in 0..2000 {
            sim.step();
            prop_assert!(sim.state().check_invariants(&policy).is_ok());
        }
    }

    #[test]
    fn runs_are_reproducible(spec in spec_strategy(3, 2, false), policy in policy_strategy(), seed in any::<u64>()) {
        let a = run(&spec, &policy, 3000, seed, 7).unwrap();
        let b = run(&spec, &policy, 3000, seed, 7).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn reduction_dominates_on_random_networks(spec in spec_strategy(3, 2, false), policy in policy_strategy(), seed in any::<u64>()) {
        let sol = solve_traffic(&spec).unwrap();
        if let Ok(red) = build_reduction(&spec, &sol, &Slack::default_for(&spec, &sol)) {
            prop_assert!(verify_reduction(&red).all_passed());
            let out = coupled_run_unchecked(&red, &policy, None, 5000, seed, 5000).unwrap();
            prop_assert!(out.report.dominance_ok, "{:?}", out.report);
        }
    }
}
