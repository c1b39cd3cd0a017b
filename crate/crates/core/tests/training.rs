mod common;

use common::{load_corpus, quick_config, rng, uniform};
use proptest::prelude::*;
use rand::Rng;
use thermofuse::fusion_models::{FusionVariant, ModelDims, MutationInput};
use thermofuse::training::*;
use thermofuse::Error;

#[test]
fn training_is_bit_reproducible() {
    let (records, corpus) = load_corpus(7);
    let config = quick_config(FusionVariant::MultiplyTransfusion, 4);
    let a = train(&config, &records, &corpus).unwrap();
    let b = train(&config, &records, &corpus).unwrap();
    assert_eq!(a.logs, b.logs);
    assert_eq!(a.epoch_checksums, b.epoch_checksums);
    assert_eq!(a.model, b.model);
    for l in &a.logs {
        assert!(l.train_mse.is_finite() && l.val_mse.is_finite() && l.val_spearman.is_finite() && l.val_r2.is_finite());
    }
}

#[test]
fn validation_targets_never_touch_parameters() {
    let (records, corpus) = load_corpus(7);
    let config = quick_config(FusionVariant::DomainConcat, 4);
    let mut permuted = records.clone();
    let val_idx: Vec<usize> = (0..records.len()).filter(|&i| records[i].split == Some(Split::Val)).collect();
    for (k, &i) in val_idx.iter().enumerate() {
        permuted[i].ddg = records[val_idx[(k + 1) % val_idx.len()]].ddg;
    }
    let a = train(&config, &records, &corpus).unwrap();
    let b = train(&config, &permuted, &corpus).unwrap();
    assert_eq!(a.epoch_checksums, b.epoch_checksums);
    assert_ne!(a.logs[0].val_spearman, b.logs[0].val_spearman);
    for (x, y) in a.logs.iter().zip(&b.logs) {
        assert_eq!(x.train_mse, y.train_mse);
    }
}

#[test]
fn one_epoch_selects_epoch_one() {
    let (records, corpus) = load_corpus(5);
    let config = TrainConfig {
        window: 5,
        ..quick_config(FusionVariant::Baseline, 1)
    };
    let out = train(&config, &records, &corpus).unwrap();
    assert_eq!(out.best_epoch, 1);
    assert_eq!(out.logs.len(), 1);
}

fn linear_examples(n: usize, seed: u64, w: &[f64]) -> Vec<Example> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let row = uniform(&mut r, w.len());
            let target = row.iter().zip(w).map(|(a, b)| a * b).sum();
            Example {
                input: MutationInput {
                    struct_window: vec![row],
                    seq_window: vec![uniform(&mut r, 2)],
                    seq_pooled: uniform(&mut r, 2),
                    features: uniform(&mut r, 3),
                    mutant: 'A',
                },
                target,
            }
        })
        .collect()
}

#[test]
fn linear_target_converges() {
    let w = [1.5, -2.0, 0.7, 0.0, 1.1, -0.4];
    let train_ex = linear_examples(300, 1, &w);
    let val_ex = linear_examples(60, 2, &w);
    let dims = ModelDims {
        d_struct: 6,
        d_seq: 2,
        d_feat: 3,
        d_f: 8,
        d_a: 4,
        hidden: vec![16],
        window: 1,
    };
    let config = TrainConfig {
        variant: FusionVariant::Baseline,
        epochs: 50,
        batch_size: 16,
        lr: 3e-3,
        window: 1,
        seed: 5,
        ..TrainConfig::default()
    };
    let out = train_examples(&config, dims, &train_ex, &val_ex).unwrap();
    let first = out.logs[0].train_mse;
    let last = out.logs.last().unwrap().train_mse;
    assert!(last < 0.1 * first, "epoch 1 {first}, epoch 50 {last}");
}

#[test]
fn unresolvable_rows_are_listed() {
    let (mut records, corpus) = load_corpus(7);
    records[0].position = 10_000;
    records[5].wt_aa = if records[5].wt_aa == 'W' { 'Y' } else { 'W' };
    let err = train(&quick_config(FusionVariant::Baseline, 1), &records, &corpus).unwrap_err();
    let Error::Linkage(msg) = err else { panic!("expected linkage error, got {err}") };
    assert!(msg.contains("2 unresolvable"));
    assert!(msg.contains("row 1 ") && msg.contains("row 6 "));
}

#[test]
fn dedup_fixture_rates() {
    let raw = read_dataset(&common::fixtures().join("dedup.csv")).unwrap();
    assert_eq!(raw.len(), 3061);
    let (kept, report) = dedup(&raw);
    let train = report.removed_fraction(Split::Train);
    let val = report.removed_fraction(Split::Val);
    assert!((train - 0.0052).abs() <= 0.0001, "{train}");
    assert!((val - 0.010).abs() <= 0.0001, "{val}");
    assert_eq!(report.removed.len(), 18);
    let (again, report2) = dedup(&kept);
    assert_eq!(again, kept);
    assert!(report2.removed.is_empty());
}

#[test]
fn missing_split_column_gets_seeded_split() {
    let text = std::fs::read_to_string(common::corpus_dir().join("dataset.csv")).unwrap();
    let stripped: String = text
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
        .collect();
    let raw = parse_dataset(&stripped).unwrap();
    assert!(raw.iter().all(|r| r.split.is_none()));
    let (a, _) = prepare_records(&raw, 4);
    let (b, _) = prepare_records(&raw, 4);
    assert_eq!(a, b);
    let counts = split_counts(&a);
    assert_eq!(counts["train"] + counts["val"], a.len());
    assert_eq!(counts["train"], (a.len() as f64 * 0.87).round() as usize);
}

#[test]
fn grid_single_cell_equals_direct_train() {
    let (records, corpus) = load_corpus(7);
    let config = quick_config(FusionVariant::ConcatAfterAttention, 3);
    let direct = train(&config, &records, &corpus).unwrap();
    let results = grid_search(&Grid::single(config), &records, &corpus, 1).unwrap();
    assert_eq!(results.len(), 1);
    let cell = results[0].outcome.as_ref().unwrap();
    assert_eq!(cell.logs, direct.logs);
    assert_eq!(cell.best_epoch, direct.best_epoch);
}

#[test]
fn grid_ranks_and_isolates_failures() {
    let (records, corpus) = load_corpus(7);
    let mut grid = Grid::single(quick_config(FusionVariant::MultiplyTransfusion, 6));
    grid.lrs = vec![0.0, 1e-2];
    grid.windows = vec![7, 4];
    let serial = grid_search(&grid, &records, &corpus, 1).unwrap();
    assert_eq!(serial.len(), 4);
    assert_eq!((serial[0].config.lr, serial[0].config.window), (1e-2, 7));
    assert!(serial[0].score().unwrap() > serial[1].score().unwrap());
    // even windows are rejected per cell without stopping the sweep
    assert!(serial[2..].iter().all(|r| r.outcome.is_err() && r.config.window == 4));
    let parallel = grid_search(&grid, &records, &corpus, 3).unwrap();
    let key = |rs: &[GridResult]| rs.iter().map(|r| (r.cell, r.score())).collect::<Vec<_>>();
    assert_eq!(key(&serial), key(&parallel));
    let table = grid_report(&serial);
    assert_eq!(table.lines().count(), 5);
}

fn log_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-4i32..5).prop_map(|k| k as f64 / 4.0), 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn best_epoch_is_earliest_argmax(scores in log_strategy()) {
        let logs: Vec<EpochLog> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| EpochLog { epoch: i + 1, train_mse: 1.0, val_mse: 1.0, val_spearman: s, val_r2: 0.0 })
            .collect();
        let best = select_best_epoch(&logs).unwrap();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(scores[best - 1], max);
        prop_assert!(scores[..best - 1].iter().all(|&s| s < max));
    }
}

#[test]
fn random_data_dedup_is_idempotent() {
    let mut r = rng(8);
    let records: Vec<MutationRecord> = (0..500)
        .map(|_| MutationRecord {
            pdb_id: ["1ABC", "1abc", "2XYZ"][r.gen_range(0..3)].into(),
            chain: 'A',
            position: r.gen_range(1..20),
            wt_aa: 'V',
            mut_aa: ['A', 'G'][r.gen_range(0..2)],
            ddg: r.gen_range(-2.0..2.0),
            split: Some(if r.gen_bool(0.8) { Split::Train } else { Split::Val }),
        })
        .collect();
    let (once, _) = dedup(&records);
    let (twice, _) = dedup(&once);
    assert_eq!(once, twice);
}
