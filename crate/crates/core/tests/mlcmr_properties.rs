mod common;

use common::*;
use mlcm_core::mlcmr::*;
use mlcm_core::{average_predictions, ConsensusConfig, LabelMatrix, PredictionSet};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn figure_two() -> PredictionSet {
    PredictionSet::new(vec![
        LabelMatrix::from_row_slice(2, 3, &[1, 0, 0, 0, 1, 1]).unwrap(),
        LabelMatrix::from_row_slice(2, 3, &[1, 1, 0, 0, 0, 1]).unwrap(),
    ])
    .unwrap()
}

fn full_q(graph: &ConsensusGraph, q: &GroupDistribution, v_full: usize) -> Dense {
    let l = graph.n_labels();
    let mut out = vec![vec![0.0; l]; v_full];
    for (r, &g) in graph.retained_groups().iter().enumerate() {
        for j in 0..l {
            out[g][j] = q.as_matrix()[(r, j)];
        }
    }
    out
}

#[test]
fn figure_two_distributions() {
    let set = figure_two();
    let g = build_graph(&set, 2.0).unwrap();
    let q = solve_group_distributions(&g).unwrap();
    #[rustfmt::skip]
    let expected = DMatrix::from_row_slice(6, 3, &[
        8.0 / 9.0, 1.0 / 9.0, 0.0,
        0.0, 7.0 / 9.0, 2.0 / 9.0,
        0.0, 1.0 / 9.0, 8.0 / 9.0,
        8.0 / 9.0, 1.0 / 9.0, 0.0,
        2.0 / 9.0, 7.0 / 9.0, 0.0,
        0.0, 1.0 / 9.0, 8.0 / 9.0,
    ]);
    assert!((q.as_matrix() - &expected).amax() < 1e-12);

    let series = power_series_oracle(&connection(&set), &to_dense(g.b()), 2.0, 200);
    assert!(max_abs_diff(&series, q.as_matrix()) < 1e-8);

    let it = solve_group_distributions_iterative(&g, 1e-12, DEFAULT_MAX_ITERS).unwrap();
    assert!((it.distribution.as_matrix() - q.as_matrix()).amax() < 1e-10);
}

#[test]
fn figure_two_scores_match_decomposition() {
    let set = figure_two();
    let g = build_graph(&set, 2.0).unwrap();
    let q = solve_group_distributions(&g).unwrap();
    let u = instance_scores(&g, &q).unwrap();
    let oracle = decomposition_oracle(&set, &full_q(&g, &q, 6));
    assert!(max_abs_diff(&oracle, &u) < 1e-12);
}

#[test]
fn transition_matches_triple_loop() {
    let mut r = rng(11);
    for _ in 0..20 {
        let (n, l, m) = random_dims(&mut r);
        let set = random_connected_set(&mut r, n, l, m, 0.4);
        let g = build_graph(&set, 1.0).unwrap();
        let s = transition_matrix(&g).unwrap();
        assert!(max_abs_diff(&transition_oracle(&connection(&set)), &s) < 1e-12);
    }
}

#[test]
fn small_graph_converges_quickly() {
    let mut r = rng(5);
    // 10 instances, 6 group nodes
    let set = random_connected_set(&mut r, 10, 3, 2, 0.5);
    let g = build_graph(&set, 2.0).unwrap();
    let it = solve_group_distributions_iterative(&g, 1e-12, DEFAULT_MAX_ITERS).unwrap();
    assert!(it.iterations < 500, "took {} iterations", it.iterations);
    let closed = solve_group_distributions(&g).unwrap();
    assert!((closed.as_matrix() - it.distribution.as_matrix()).amax() < 1e-10);
}

#[test]
fn identical_single_label_models_pick_that_label() {
    // every assignment of one label to each of 3 instances, 3 labels
    for code in 0..27usize {
        let labels = [code % 3, (code / 3) % 3, code / 9];
        let z = LabelMatrix::from_fn(3, 3, |i, j| labels[i] == j).unwrap();
        for m in 1..=3 {
            let set = PredictionSet::new(vec![z.clone(); m]).unwrap();
            let u = mlcm_r(&set, &ConsensusConfig::default()).unwrap();
            for (i, &want) in labels.iter().enumerate() {
                let row: Vec<f64> = u.row(i).iter().copied().collect();
                let best = (0..3).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
                assert_eq!(best, want);
            }
        }
    }
}

#[test]
fn large_alpha_limits() {
    let mut r = rng(21);
    let cfg = ConsensusConfig { alpha: 1e8, ..Default::default() };
    for _ in 0..10 {
        let (n, l, m) = random_dims(&mut r);
        let set = random_set(&mut r, n, l, m, 0.3);
        let u = mlcm_r(&set, &cfg).unwrap();
        assert!(max_abs_diff(&normalized_votes(&set), &u) <= 1e-5);
        let b = bgcm_binary_relevance(&set, &cfg).unwrap();
        assert!((b.as_matrix() - average_predictions(&set).as_matrix()).amax() <= 1e-5);
    }
}

#[test]
fn bgcm_unanimous_instance_moves_toward_vote_as_alpha_grows() {
    // instance 0: all three models positive; others disagree
    let set = PredictionSet::new(vec![
        LabelMatrix::from_row_slice(4, 1, &[1, 1, 0, 0]).unwrap(),
        LabelMatrix::from_row_slice(4, 1, &[1, 0, 1, 0]).unwrap(),
        LabelMatrix::from_row_slice(4, 1, &[1, 0, 0, 1]).unwrap(),
    ])
    .unwrap();
    let mut prev = 0.0;
    for alpha in [0.1, 0.5, 2.0, 8.0, 32.0, 1e3, 1e8] {
        let cfg = ConsensusConfig { alpha, ..Default::default() };
        let p = bgcm_binary_relevance(&set, &cfg).unwrap()[(0, 0)];
        assert!(p >= prev - 1e-12, "alpha {alpha}: {p} < {prev}");
        assert!(p <= 1.0 + 1e-12);
        prev = p;
    }
    assert!((prev - 1.0).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stochastic_rows(seed in any::<u64>(), alpha in prop::sample::select(vec![0.5, 2.0, 8.0])) {
        let mut r = rng(seed);
        let (n, l, m) = random_dims(&mut r);
        let set = random_set(&mut r, n, l, m, 0.3);
        let g = build_graph(&set, alpha).unwrap();
        if g.a().ncols() > 0 {
            let s = transition_matrix(&g).unwrap();
            for row in s.row_iter() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-10);
                prop_assert!(row.iter().all(|&x| x >= 0.0));
            }
        }
        let q = solve_group_distributions(&g).unwrap();
        for row in q.as_matrix().row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-8);
            prop_assert!(row.iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
        }
        let u = instance_scores(&g, &q).unwrap();
        for row in u.row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-8);
            prop_assert!(row.iter().all(|&x| (0.0..=1.0 + 1e-10).contains(&x)));
        }
    }

    #[test]
    fn decomposition_identity(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n, l, m) = random_dims(&mut r);
        let set = random_set(&mut r, n, l, m, 0.3);
        let g = build_graph(&set, 2.0).unwrap();
        let q = solve_group_distributions(&g).unwrap();
        let u = instance_scores(&g, &q).unwrap();
        let oracle = decomposition_oracle(&set, &full_q(&g, &q, m * l));
        prop_assert!(max_abs_diff(&oracle, &u) < 1e-10);
    }

    #[test]
    fn permutation_equivariance(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n, l, m) = random_dims(&mut r);
        let set = random_set(&mut r, n, l, m, 0.3);
        let cfg = ConsensusConfig::default();
        let base = mlcm_r(&set, &cfg).unwrap();
        let base_br = bgcm_binary_relevance(&set, &cfg).unwrap();

        let rows = permutation(&mut r, n);
        let moved = mlcm_r(&set.select_rows(&rows), &cfg).unwrap();
        prop_assert!((moved.as_matrix() - base.select_rows(&rows)).amax() < 1e-10);
        let moved = bgcm_binary_relevance(&set.select_rows(&rows), &cfg).unwrap();
        prop_assert!((moved.as_matrix() - base_br.select_rows(&rows)).amax() < 1e-10);

        let cols = permutation(&mut r, l);
        let moved = mlcm_r(&set.select_columns(&cols), &cfg).unwrap();
        prop_assert!((moved.as_matrix() - base.select_columns(&cols)).amax() < 1e-10);
        let moved = bgcm_binary_relevance(&set.select_columns(&cols), &cfg).unwrap();
        prop_assert!((moved.as_matrix() - base_br.select_columns(&cols)).amax() < 1e-10);
    }

    #[test]
    fn bgcm_class_probabilities_sum_to_one(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n, l, m) = random_dims(&mut r);
        let set = random_set(&mut r, n, l, m, 0.4);
        for label in 0..l {
            let p = binary_label_probabilities(&set, label, 2.0).unwrap();
            for row in p.row_iter() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-8);
            }
        }
    }
}
