mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skewtree::criterion::{best_split, CriterionParams, SampleView};
use skewtree::synthgen::{generate, OutcomeModel, SynthConfig};
use skewtree::trainer::{grow_tree, train_forest, TrainParams};
use skewtree::tree::Forest;

#[test]
fn best_split_matches_oracle() {
    for seed in 0..300 {
        let ds = random_dataset(seed);
        let rows: Vec<usize> = (0..ds.n_rows()).collect();
        let features: Vec<usize> = (0..ds.n_features()).collect();
        let got = best_split(
            SampleView::new(&ds, &rows),
            &features,
            CriterionParams::default(),
        );
        let want = oracle_best_split(&rows_of(&ds), ds.labels(), ds.n_classes());
        match (got, want) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                assert_eq!(g.feature_index, w.feature, "seed {seed}");
                assert!(
                    g.threshold >= w.left_max && g.threshold < w.next_value,
                    "seed {seed}: {} not in [{}, {})",
                    g.threshold,
                    w.left_max,
                    w.next_value
                );
            }
            (g, w) => panic!("seed {seed}: {g:?} vs {w:?}"),
        }
    }
}

#[test]
fn plain_trees_match_oracle() {
    for seed in 0..200 {
        let ds = random_dataset(seed);
        let depth = 1 + (seed as usize % 6);
        let params = TrainParams {
            max_depth: depth,
            bootstrap: false,
            ..TrainParams::default()
        };
        let tree = grow_tree(&ds, &params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let oracle = oracle_tree(&rows_of(&ds), ds.labels(), ds.n_classes(), depth);
        assert_eq!(tree.nodes.len(), oracle.node_count(), "seed {seed}");
        for row in ds.rows() {
            assert_eq!(tree.predict_row(row), oracle.predict(row), "seed {seed}");
        }
        assert_probabilities(&tree);
        assert!(tree.max_depth() <= depth);
    }
}

fn red(seed: u64) -> skewtree::dataset::Dataset {
    generate(&SynthConfig::red(OutcomeModel::S3, 400, seed)).unwrap()
}

#[test]
fn forests_independent_of_thread_count() {
    let data = red(1);
    let params = TrainParams {
        max_depth: 8,
        n_trees: 64,
        max_features: Some(3),
        lambda: 0.02,
        seed: 99,
        ..TrainParams::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train_forest(&data, &params).unwrap().to_json())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(13));
}

#[test]
fn serialization_round_trip_predicts_identically() {
    let data = red(2);
    for lambda in [0.0, 0.05, 0.5] {
        let forest = train_forest(
            &data,
            &TrainParams {
                lambda,
                n_trees: 7,
                max_depth: 15,
                ..TrainParams::default()
            },
        )
        .unwrap();
        assert_forest_probabilities(&forest);
        let back = Forest::from_json(&forest.to_json()).unwrap();
        assert_eq!(back, forest);
        for row in data.rows() {
            assert_eq!(back.predict(row).unwrap(), forest.predict(row).unwrap());
        }
    }
}

#[test]
fn corrupted_forest_is_rejected() {
    let data = red(3);
    let forest = train_forest(&data, &TrainParams::default()).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&forest.to_json()).unwrap();
    value["trees"][0]["nodes"][0]["absolute_probability"] = serde_json::json!(0.5);
    assert!(Forest::from_json(&value.to_string()).is_err());
    let mut value: serde_json::Value = serde_json::from_str(&forest.to_json()).unwrap();
    value["schema_version"] = serde_json::json!(99);
    assert!(Forest::from_json(&value.to_string()).is_err());
}

#[test]
fn wrong_row_length_is_rejected() {
    let data = red(4);
    let forest = train_forest(&data, &TrainParams::default()).unwrap();
    assert!(forest.predict(&[1.0, 2.0]).is_err());
}
