mod common;

use cafs::analysis::confounding_bias;
use cafs::graph::random::{random_admissible_dag, random_binary_net};
use cafs::graph::{NodeClass, PathQuery};
use cafs::optimizer::{optimize, start_points, OptimizeOptions, PriceBox, RobustProblem};
use cafs::regression::{design_matrix, fit};
use cafs::selection::{markov_blanket, select_cf, solve_group_lasso, GroupLassoProblem, SelectionOptions};
use cafs::seed::{derive_seed, rng_from_seed};
use cafs::sem::{generate_network, generate_sem, Dataset, LinearSem, SemConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn sem(m: usize, k: usize, seed: u64) -> LinearSem {
    let cfg = SemConfig {
        products: m,
        features: k,
        seed,
        ..SemConfig::default()
    };
    generate_sem(&generate_network(&cfg).unwrap(), &cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn d_separation_agrees_with_path_enumeration(seed in any::<u64>(), n in 2usize..=6, p in 0.1f64..0.9) {
        let mut rng = rng_from_seed(seed);
        let dag = common::random_dag(&mut rng, n, p);
        for _ in 0..8 {
            let (a, b, s) = common::random_query(&mut rng, n);
            let fast = dag.is_d_separated(&PathQuery::new(&a, &b, &s).unwrap()).unwrap();
            prop_assert_eq!(fast, common::naive_d_separated(&dag, &a, &b, &s));
        }
    }

    #[test]
    fn d_separation_is_symmetric(seed in any::<u64>(), n in 2usize..=6) {
        let mut rng = rng_from_seed(seed);
        let dag = common::random_dag(&mut rng, n, 0.5);
        let (a, b, s) = common::random_query(&mut rng, n);
        let ab = dag.is_d_separated(&PathQuery::new(&a, &b, &s).unwrap()).unwrap();
        let ba = dag.is_d_separated(&PathQuery::new(&b, &a, &s).unwrap()).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn interventional_conditionals_are_distributions(seed in any::<u64>(), n in 3usize..=6) {
        let mut rng = rng_from_seed(seed);
        let dag = random_admissible_dag(&mut rng, n, 0.6);
        let net = random_binary_net(&mut rng, dag);
        let x = net.dag().nodes_of(NodeClass::Decision);
        let y = net.dag().nodes_of(NodeClass::Target);
        for state in 0..net.state_count(&x) {
            let xs: Vec<(usize, usize)> = x.iter().copied().zip(net.decode_state(&x, state)).collect();
            let dist = net.do_conditional(&y, &xs, &[]).unwrap();
            prop_assert!(dist.iter().all(|&p| p >= 0.0));
            prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn group_lasso_trace_is_monotone_and_certified(seed in any::<u64>()) {
        let (t, c, mu) = common::lasso_instance(seed, 6);
        let sol = solve_group_lasso(&GroupLassoProblem::new(t, c, mu)).unwrap();
        for w in sol.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()));
        }
        if sol.converged {
            prop_assert!(sol.kkt.max() <= 1e-8);
        }
    }

    #[test]
    fn blanket_is_permutation_equivariant(seed in any::<u64>()) {
        let data = sem(2, 4, seed).sample(80, derive_seed(seed, &[1])).unwrap();
        let opts = SelectionOptions { mu: 20.0, ..SelectionOptions::default() };
        let u = data.nodes_of(NodeClass::Target);
        let base = markov_blanket(&data, &u, &opts).unwrap();

        // reverse the feature columns and map the blanket back
        let k = data.features();
        let z = data.z();
        let flipped = DMatrix::from_fn(z.nrows(), k, |r, c| z[(r, k - 1 - c)]);
        let other = Dataset::new(data.x().clone(), data.y().clone(), flipped).unwrap();
        let sel = markov_blanket(&other, &u, &opts).unwrap();
        let offset = data.feature_node(0);
        let mut mapped: Vec<usize> = sel
            .blanket
            .iter()
            .map(|&v| if v >= offset { offset + (k - 1 - (v - offset)) } else { v })
            .collect();
        mapped.sort_unstable();
        prop_assert_eq!(mapped, base.blanket);
    }

    #[test]
    fn least_squares_residual_is_orthogonal_to_design(seed in any::<u64>(), d in 12usize..60) {
        let data = sem(2, 3, seed).sample(d, derive_seed(seed, &[2])).unwrap();
        let kappa = vec![0, 2];
        let model = fit(&data, &kappa).unwrap();
        let design = design_matrix(&data, &kappa).unwrap();
        for r in 0..data.targets() {
            let fitted = DVector::from_fn(d, |i, _| {
                let x = data.x().row(i).transpose();
                let z = DVector::from_vec(kappa.iter().map(|&k| data.z()[(i, k)]).collect());
                model.predict(&x, &z).unwrap()[r]
            });
            let resid = data.y().column(r) - fitted;
            let normal = design.transpose() * &resid;
            let scale = 1.0 + design.amax() * data.y().column(r).amax() * d as f64;
            prop_assert!(normal.amax() <= 1e-8 * scale, "normal equations off by {}", normal.amax());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn optimizer_stays_in_box_and_beats_its_starts(seed in any::<u64>(), lambda in prop_oneof![Just(0.0), 0.5f64..10.0]) {
        let data = sem(3, 3, seed).sample(60, derive_seed(seed, &[3])).unwrap();
        let kappa = vec![1];
        let model = fit(&data, &kappa).unwrap();
        let bounds = PriceBox::uniform(3, 0.5, 1.0).unwrap();
        let p = RobustProblem::from_data(model, &data, lambda, bounds.clone()).unwrap();
        let z = DVector::from_element(1, 1.0);
        let opts = OptimizeOptions { seed, ..OptimizeOptions::default() };
        let best = optimize(&p, &z, &opts).unwrap();
        let x = DVector::from_vec(best.x.clone());
        prop_assert!(bounds.contains(&x, 0.0));
        for x0 in start_points(&bounds, opts.starts, opts.seed) {
            prop_assert!(best.objective >= p.objective(&x0, &z).unwrap() - 1e-9 * (1.0 + best.objective.abs()));
        }
    }

    #[test]
    fn regularizer_scales_with_root_of_covariance_scale(seed in any::<u64>(), c in 0.1f64..10.0) {
        let data = sem(2, 2, seed).sample(40, derive_seed(seed, &[4])).unwrap();
        let model = fit(&data, &[0]).unwrap();
        let bounds = PriceBox::uniform(2, 0.5, 1.0).unwrap();
        let base = RobustProblem::from_data(model.clone(), &data, 1.0, bounds.clone()).unwrap();
        let scaled = RobustProblem::new(
            model,
            base.sigma() * c,
            base.sigma_prime().clone(),
            1.0,
            bounds,
        )
        .unwrap();
        let x = DVector::from_vec(vec![0.7, 0.9]);
        let z = DVector::from_element(1, 1.0);
        let (g0, g1) = (base.regularizer(&x, &z).unwrap(), scaled.regularizer(&x, &z).unwrap());
        prop_assert!((g1 - c.sqrt() * g0).abs() <= 1e-9 * g1.abs().max(1.0));
    }
}

/// Feature sets chosen by the extended selection lose their confounding as
/// the sample grows, on networks where the graph-level premise holds.
#[test]
fn cf_confounding_shrinks_with_sample_size() {
    let sizes = [40, 80, 120, 160, 200];
    let mut means = Vec::new();
    for &d in &sizes {
        let (mut total, mut count) = (0.0, 0);
        for seed in 0..50u64 {
            let s = sem(5, 5, derive_seed(31, &[seed]));
            let data = s.sample(d, derive_seed(32, &[seed])).unwrap();
            let kappa = select_cf(&data, &SelectionOptions::default()).unwrap().kappa;
            let kappa_nodes: Vec<usize> = kappa.iter().map(|&k| data.feature_node(k)).collect();
            if !s.dag().check_thm10_premise(&kappa_nodes).unwrap() {
                continue;
            }
            let (x, z) = cafs::analysis::reachable_point(&s, derive_seed(33, &[seed])).unwrap();
            total += confounding_bias(&s, &kappa, &x, &z).unwrap();
            count += 1;
        }
        assert!(count > 0);
        means.push(total / count as f64);
    }
    assert!(means[sizes.len() - 1] < means[0], "no downward trend: {means:?}");
}
