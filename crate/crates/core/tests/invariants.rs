//! Property tests for structural invariants.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::One;
use proptest::prelude::*;

use rwre_lab::ballistic::{gambler_chain_solve, gambler_exit_left};
use rwre_lab::cli::config::{ExperimentConfig, LawConfig, Suite};
use rwre_lab::environment::{build_two_point_law, omega_audit, Quenched};
use rwre_lab::green::{green_recursion_error, KilledChain, SolvePolicy};
use rwre_lab::kalikow::{formula_report, kalikow_environment, random_connected_domain, KalikowMode};
use rwre_lab::renorm::{classify_box_k, common_cover, make_scale_sequence, xi_k, BoxShape, BoxStatus, VerdictMap};
use rwre_lab::KalikowEnvironmentExact;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gambler_is_a_probability_and_matches_the_chain(a in 1i64..30, b in 1i64..30, p in 0.05f64..0.95) {
        let c: f64 = gambler_exit_left(a, b, p).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert!((c - gambler_chain_solve(a, b, p).unwrap()).abs() < 1e-11);
        // a wider left margin makes the left exit less likely
        prop_assert!(gambler_exit_left::<f64>(a + 1, b, p).unwrap() <= c + 1e-15);
    }

    #[test]
    fn two_point_law_hits_lambda_inside_the_band(
        d in 2usize..5,
        eps in 0.01f64..0.9,
        frac in 0.0f64..=1.0,
        noise_frac in 0.0f64..=1.0,
    ) {
        let ceiling = eps / (2.0 * d as f64);
        let noise = noise_frac / (4.0 * d as f64);
        let (law, audit) = build_two_point_law(d, eps, frac * ceiling, noise, 3).unwrap();
        prop_assert!(audit.member);
        prop_assert!((law.lambda() - frac * ceiling).abs() <= 1e-15 * ceiling.max(1.0));
        prop_assert!(omega_audit(&law).min_weight >= 1.0 / (4.0 * d as f64) - 1e-15);
        prop_assert!(build_two_point_law(d, eps, ceiling * 1.01, noise, 3).is_err());
    }

    #[test]
    fn green_rows_satisfy_recursion_and_unit_boundary_mass(size in 1usize..40, seed in 0u64..10_000) {
        let (law, _) = build_two_point_law(2, 0.3, 0.05, 0.03, seed).unwrap();
        let dom = random_connected_domain(2, size, seed).unwrap();
        let policy = SolvePolicy::default();
        let sites = Arc::new(dom.materialize(policy.site_budget).unwrap());
        let chain = KilledChain::<f64>::new(sites.clone(), &Quenched::new(&law, seed)).unwrap();
        let row = chain.factor(&policy).unwrap().green_row(seed as usize % sites.len()).unwrap();
        prop_assert!(green_recursion_error(&chain, &row) < 1e-12);
        prop_assert!((row.boundary_mass() - 1.0).abs() < 1e-12);
        prop_assert!(row.interior().iter().all(|g| *g >= 0.0));
    }

    #[test]
    fn scale_sequences_satisfy_their_identities(eps in 0.3f64..0.95, theta in 1.0f64..3.0, k_max in 0u64..40, k in 1u64..50) {
        let seq = make_scale_sequence(eps, theta, k_max, Some(k)).unwrap();
        prop_assert_eq!(seq.identity_violation(), None);
        prop_assert!(seq.a.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn xi_is_above_half_and_decreasing(k in 0u64..1_000_000) {
        let half = BigRational::new(1.into(), 2.into());
        let (a, b) = (xi_k(k), xi_k(k + 1));
        prop_assert!(b > half && b < a);
        prop_assert!(a <= BigRational::one());
    }

    #[test]
    fn common_cover_contains_every_center(
        m in 2i64..12,
        lateral in 1i64..6,
        pts in prop::collection::vec((-30i64..30, -30i64..30), 1..6),
    ) {
        let shape = BoxShape { m, lateral };
        let pts: Vec<Vec<i64>> = pts.into_iter().map(|(a, b)| vec![a, b]).collect();
        let refs: Vec<&Vec<i64>> = pts.iter().collect();
        if let Some(c) = common_cover(&shape, &refs) {
            // every center lies within one box width of the cover on each axis
            for p in &pts {
                for i in 0..2 {
                    let (lo, hi) = shape.extent(i);
                    prop_assert!((p[i] - c[i]).abs() <= hi - lo);
                }
            }
        }
    }

    #[test]
    fn more_bad_sub_boxes_never_improve_the_verdict(
        bad in prop::collection::btree_set((-6i64..30, -12i64..12), 0..6),
        extra in (-6i64..30, -12i64..12),
    ) {
        let child = BoxShape { m: 4, lateral: 2 };
        let parent = BoxShape { m: 32, lateral: 10 };
        let build = |set: &std::collections::BTreeSet<(i64, i64)>| VerdictMap {
            level: 0,
            shape: child,
            entries: set.iter().map(|(a, b)| (vec![*a, *b], BoxStatus::Bad)).collect::<BTreeMap<_, _>>(),
            default: Some(BoxStatus::Good),
        };
        let before = classify_box_k(&build(&bad), &parent, &[0, 0], 1 << 20).unwrap().verdict;
        let mut more = bad.clone();
        more.insert(extra);
        let after = classify_box_k(&build(&more), &parent, &[0, 0], 1 << 20).unwrap().verdict;
        prop_assert!(!(before == BoxStatus::Bad && after == BoxStatus::Good));
        if bad.is_empty() {
            prop_assert_eq!(before, BoxStatus::Good);
        }
    }

    #[test]
    fn config_round_trips_with_a_stable_hash(seed in any::<u64>(), eps in 0.05f64..0.5, n in 1u64..10_000) {
        let mut cfg = ExperimentConfig::new(Suite::Velocity);
        cfg.master_seed = Some(seed);
        cfg.law = Some(LawConfig::TwoPoint { d: 2, epsilon: eps, lambda: eps * eps / 2.0, transverse_noise: 0.0 });
        cfg.budgets.n_walks = Some(n);
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn kalikow_formula_is_exact_in_rational_arithmetic(size in 1usize..5, seed in 0u64..1000) {
        let (law, _) = build_two_point_law(2, 0.25, 0.03, 0.02, seed).unwrap();
        let dom = random_connected_domain(2, size, seed).unwrap();
        let x = dom.bounds().iter().map(|(lo, _)| *lo).collect::<Vec<_>>();
        let x = if dom.contains(&x) { x } else { dom.materialize(1 << 20).unwrap().point(0).to_vec() };
        let k: KalikowEnvironmentExact = kalikow_environment(&law, &dom, &x, KalikowMode::exact()).unwrap();
        prop_assert_eq!(formula_report(&k).unwrap().max_abs_error, 0.0);
    }
}
