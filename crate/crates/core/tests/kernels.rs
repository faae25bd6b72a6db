//! Compiled kernels against the interpreter. Skipped without a C compiler.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skewtree::bench::{compile_and_time, compile_bundle, run_driver, Toolchain};
use skewtree::codegen::{emit_driver, emit_ifelse, emit_native, EmittedBundle};
use skewtree::dataset::{load_csv, Dataset, LabelColumn};
use skewtree::layout::LayoutStrategy;
use skewtree::synthgen::{generate, Dependence, OutcomeModel, SynthConfig};
use skewtree::trainer::{train_forest, TrainParams};
use skewtree::tree::{prediction_checksum, Forest};
use skewtree::Error;

fn toolchain() -> Option<Toolchain> {
    match Toolchain::discover() {
        Ok(tc) => Some(tc),
        Err(_) => {
            eprintln!("no C compiler found; skipping");
            None
        }
    }
}

fn random_case(seed: u64) -> (Forest, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SynthConfig {
        dependence: Dependence::StronglyDependent,
        model: [OutcomeModel::S1, OutcomeModel::S3, OutcomeModel::S5][rng.random_range(0..3)],
        balance: [0.2, 0.5, 0.7, 0.9][rng.random_range(0..4)],
        delta_mu: [1.0, 3.0, 5.0, 8.0][rng.random_range(0..4)],
        num: 300,
        seed,
    };
    let data = generate(&cfg).unwrap();
    let params = TrainParams {
        max_depth: rng.random_range(1..=20),
        max_features: Some(rng.random_range(1..=10)),
        lambda: [0.0, 0.01, 0.1, 1.0][rng.random_range(0..4)],
        n_trees: rng.random_range(1..=5),
        seed,
        ..TrainParams::default()
    };
    let forest = train_forest(&data, &params).unwrap();
    let test = generate(&SynthConfig {
        seed: seed + 1000,
        ..cfg
    })
    .unwrap();
    (forest, test)
}

fn check(tc: &Toolchain, bundle: EmittedBundle, test: &Dataset, csv: &Path, expected: u64) {
    let bundle = emit_driver(bundle, test, 1).unwrap();
    let run = compile_and_time(tc, &bundle, csv, Some(expected)).unwrap();
    assert_eq!(run.result.rows, test.n_rows() as u64);
    assert_eq!(run.result.reps, 1);
}

#[test]
fn kernels_match_interpreter() {
    let Some(tc) = toolchain() else { return };
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..20 {
        let (forest, test) = random_case(seed);
        let csv = dir.path().join(format!("test_{seed}.csv"));
        test.write_csv(&csv).unwrap();
        let predictions = forest.predict_dataset(&test).unwrap();
        let expected = prediction_checksum(predictions);
        check(
            &tc,
            emit_ifelse(&forest, 64).unwrap(),
            &test,
            &csv,
            expected,
        );
        for strategy in [
            LayoutStrategy::BfsDefault,
            LayoutStrategy::ProbabilityGreedy,
        ] {
            check(
                &tc,
                emit_native(&forest, strategy).unwrap(),
                &test,
                &csv,
                expected,
            );
        }
    }
}

#[test]
fn histogram_matches_interpreter() {
    let Some(tc) = toolchain() else { return };
    let (forest, test) = random_case(77);
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("test.csv");
    test.write_csv(&csv).unwrap();
    let bundle = emit_driver(
        emit_native(&forest, LayoutStrategy::BfsDefault).unwrap(),
        &test,
        3,
    )
    .unwrap();
    let exe = compile_bundle(&tc, &bundle, dir.path()).unwrap();
    let run = run_driver(&exe, &csv).unwrap();
    let mut hist = vec![0u64; forest.n_classes()];
    for p in forest.predict_dataset(&test).unwrap() {
        hist[p] += 1;
    }
    assert_eq!(run.result.histogram, hist);
    assert_eq!(run.result.style, "native");
    assert!(run.result.mean_ns_per_sample >= 0.0);
}

#[test]
fn wrong_checksum_is_reported() {
    let Some(tc) = toolchain() else { return };
    let (forest, test) = random_case(5);
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("test.csv");
    test.write_csv(&csv).unwrap();
    let bundle = emit_driver(emit_ifelse(&forest, 64).unwrap(), &test, 1).unwrap();
    let err = compile_and_time(&tc, &bundle, &csv, Some(0)).unwrap_err();
    assert!(matches!(
        err,
        Error::ChecksumMismatch { interpreter: 0, .. }
    ));
}

#[test]
fn compile_failure_carries_source() {
    let Some(tc) = toolchain() else { return };
    let (forest, test) = random_case(6);
    let mut bundle = emit_driver(emit_ifelse(&forest, 64).unwrap(), &test, 1).unwrap();
    bundle
        .kernel_source
        .push_str("\nint unused_and_broken(void) { return }\n");
    let dir = tempfile::tempdir().unwrap();
    match compile_bundle(&tc, &bundle, dir.path()) {
        Err(Error::CompileFailed { source_text, .. }) => {
            assert!(source_text.contains("unused_and_broken"))
        }
        other => panic!("expected compile failure, got {other:?}"),
    }
}

/// Dumps each parsed value from the C loader as its bit pattern.
const LOADER_PROBE: &str = r#"
#include <stdint.h>
#include <stdio.h>
#include <string.h>
int32_t skt_predict(const double *x)
{
    uint64_t bits;
    int j;
    for (j = 0; j < SKT_N_FEATURES; ++j) {
        memcpy(&bits, &x[j], sizeof bits);
        fprintf(stderr, "%016llx%c", (unsigned long long)bits, j + 1 == SKT_N_FEATURES ? '\n' : ' ');
    }
    return 0;
}
"#;

#[test]
fn c_loader_matches_rust_parser() {
    let Some(tc) = toolchain() else { return };
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("fixture.csv");
    std::fs::write(
        &csv,
        "a,b,c,label\n0.1,-2.5e-3,1e300,x\n3,4.000000000000001,-0,y\n\
         0.30000000000000004,2.2250738585072014e-308,123456789.123456789,x\n",
    )
    .unwrap();
    let data = load_csv(&csv, &LabelColumn::Last).unwrap();
    let (forest, _) = random_case(1);
    let mut bundle = emit_ifelse(&forest, 64).unwrap();
    bundle.n_features = data.n_features();
    bundle.kernel_source = format!(
        "#define SKT_N_FEATURES {}\n{LOADER_PROBE}",
        data.n_features()
    );
    let bundle = emit_driver(bundle, &data, 1).unwrap();
    let exe = compile_bundle(&tc, &bundle, dir.path()).unwrap();
    let out = std::process::Command::new(&exe).arg(&csv).output().unwrap();
    assert!(out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    // the warm-up pass prints every row once before the timed passes
    let lines: Vec<&str> = stderr.lines().take(data.n_rows()).collect();
    assert_eq!(lines.len(), data.n_rows());
    for (r, line) in lines.iter().enumerate() {
        let bits: Vec<u64> = line
            .split(' ')
            .map(|h| u64::from_str_radix(h, 16).unwrap())
            .collect();
        let expected: Vec<u64> = data.row(r).iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, expected, "row {r}");
    }
}

#[test]
fn single_leaf_forest_compiles_strictly() {
    let Some(tc) = toolchain() else { return };
    let data = generate(&SynthConfig::red(OutcomeModel::S3, 200, 2)).unwrap();
    let params = TrainParams {
        lambda: 40.0,
        n_trees: 3,
        ..TrainParams::default()
    };
    let forest = train_forest(&data, &params).unwrap();
    assert!(forest.trees.iter().all(|t| t.nodes.len() == 1));
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("test.csv");
    data.write_csv(&csv).unwrap();
    let expected = prediction_checksum(forest.predict_dataset(&data).unwrap());
    check(
        &tc,
        emit_ifelse(&forest, 64).unwrap(),
        &data,
        &csv,
        expected,
    );
    check(
        &tc,
        emit_native(&forest, LayoutStrategy::ProbabilityGreedy).unwrap(),
        &data,
        &csv,
        expected,
    );
}
