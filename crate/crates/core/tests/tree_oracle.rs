mod common;

use common::{check_tree, fit_cols, oracle_split, random_instance};
use ecgauth::dtree::{best_split, FeatureMatrix, Node, TreeParams};
use ecgauth::rng::{derive_seed, seeded};
use proptest::prelude::*;

#[test]
fn every_node_matches_exhaustive_enumeration() {
    for k in 0..200 {
        let mut rng = seeded(derive_seed(2024, &[k]));
        let (cols, y, params) = random_instance(&mut rng, k as usize);
        let model = fit_cols(&cols, &y, &params);
        if let Err(e) = check_tree(&model, &cols, &y, &params) {
            panic!("instance {k} ({params:?}): {e}");
        }
    }
}

#[test]
fn root_split_sse_matches_oracle_on_1d_instances() {
    for k in 0..50 {
        let mut rng = seeded(derive_seed(7, &[k]));
        let x: Vec<f64> = (0..50).map(|_| rand::Rng::gen_range(&mut rng, 0.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| (6.0 * v).sin() + rand::Rng::gen_range(&mut rng, -0.2..0.2)).collect();
        let cols = vec![x];
        let idx: Vec<usize> = (0..50).collect();
        let got = best_split(&FeatureMatrix::from_columns(cols.clone()).unwrap(), &y, &idx, 4).unwrap();
        let want = oracle_split(&cols, &y, &idx, 4).unwrap();
        assert_eq!(got.feature, want.feature);
        assert!((got.threshold - want.threshold).abs() < 1e-12);
        assert!((got.child_sse - want.sse).abs() < 1e-9, "{} vs {}", got.child_sse, want.sse);
    }
}

/// Greedy growth is not monotone in the leaf-size limit: here the larger
/// limit blocks an early split that looks best locally but strands the
/// later ones, and ends with the lower training error.
#[test]
fn larger_min_leaf_can_end_with_lower_training_error() {
    let x: Vec<f64> = (0..9).map(f64::from).collect();
    let y = vec![1.0, 3.0, 1.0, 3.0, 2.0, 3.0, 2.0, 3.0, 0.0];
    let cols = vec![x];
    for min_leaf in [2, 3] {
        let params = TreeParams { min_leaf, ..TreeParams::default() };
        check_tree(&fit_cols(&cols, &y, &params), &cols, &y, &params).unwrap();
    }
    let (two, three) = (rmse_of(&cols, &y, 2), rmse_of(&cols, &y, 3));
    assert!(two > three + 1e-3, "{two} vs {three}");
}

fn rmse_of(cols: &[Vec<f64>], y: &[f64], min_leaf: usize) -> f64 {
    let params = TreeParams { min_leaf, ..TreeParams::default() };
    fit_cols(cols, y, &params).train_stats().rmse
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(prop_oneof![(0i32..8).prop_map(|v| v as f64), -5.0f64..5.0], n),
            prop::collection::vec(-3.0f64..3.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn min_leaf_one_reaches_the_resolution_floor((x, y) in instance(), k in 2usize..8) {
        // Best achievable training error: spread of y within each distinct x.
        let mut groups: std::collections::BTreeMap<u64, Vec<f64>> = Default::default();
        for (a, b) in x.iter().zip(&y) {
            groups.entry(a.to_bits()).or_default().push(*b);
        }
        let floor_sse: f64 = groups.values().map(|g| {
            let m = g.iter().sum::<f64>() / g.len() as f64;
            g.iter().map(|v| (v - m).powi(2)).sum::<f64>()
        }).sum();
        let floor = (floor_sse / y.len() as f64).sqrt();
        let cols = vec![x];
        let finest = rmse_of(&cols, &y, 1);
        prop_assert!((finest - floor).abs() < 1e-9, "{finest} vs {floor}");
        prop_assert!(finest <= rmse_of(&cols, &y, k) + 1e-12);
    }

    #[test]
    fn fit_beats_the_best_constant((x, y) in instance()) {
        let cols = vec![x];
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
        prop_assert!(rmse_of(&cols, &y, 4) <= sd + 1e-12);
    }

    #[test]
    fn inputs_in_one_leaf_predict_identically((x, y) in instance(), probes in prop::collection::vec(-6.0f64..9.0, 20)) {
        let model = fit_cols(&[x], &y, &TreeParams::default());
        for a in &probes {
            for b in &probes {
                if model.leaf_index(&[*a]) == model.leaf_index(&[*b]) {
                    prop_assert_eq!(model.predict_unchecked(&[*a]), model.predict_unchecked(&[*b]));
                }
            }
        }
        let leaves = model.nodes().iter().filter(|n| matches!(n, Node::Leaf { .. })).count();
        prop_assert_eq!(leaves, model.n_leaves());
    }
}
