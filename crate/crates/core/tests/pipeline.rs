use std::collections::BTreeSet;

use toponym::corpus::Country;
use toponym::pipeline::{self, run_all, run_pair, score_external, PairModels, ScoreTable, TrainConfig};
use toponym::resample::RowOrigin;
use toponym::{report, synth};

fn small_cfg() -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.forest.n_trees = 20;
    cfg
}

#[test]
fn separable_pair_scores_out_of_fold() {
    let corpus = synth::suffix_corpus(300, 120, &[Country::Rome], 11).unwrap();
    let run = run_pair(&corpus, Country::Rome, &small_cfg(), 5).unwrap();
    assert_eq!(run.dataset.len(), 420);
    assert!(run.scores.iter().all(|s| (0.0..=1.0).contains(s)));
    assert!(run.metrics.accuracy >= 0.99, "{:?}", run.metrics);

    // Every row is scored by exactly one fold, never one it trained on.
    let mut seen = vec![0; run.dataset.len()];
    for f in &run.folds {
        let test: BTreeSet<usize> = f.test_rows.iter().copied().collect();
        for &r in &f.test_rows {
            seen[r] += 1;
        }
        for o in &f.train_origins {
            if let RowOrigin::Real(i) = o {
                assert!(!test.contains(i));
            }
        }
        let synthetic = f.train_origins.iter().filter(|o| **o == RowOrigin::Synthetic).count();
        assert!(synthetic <= f.n_synthetic);
    }
    assert!(seen.iter().all(|&k| k == 1));

    let m = &run.metrics;
    assert_eq!(m.tp + m.fn_ + m.tn + m.fp, run.dataset.len());
    assert_eq!(m.accuracy, (m.tp + m.tn) as f64 / run.dataset.len() as f64);
}

#[test]
fn full_run_is_deterministic_and_complete() {
    let others = [Country::Denmark, Country::Wales, Country::Rome];
    let corpus = synth::suffix_corpus(200, 80, &others, 3).unwrap();
    let a = run_all(&corpus, &others, &small_cfg(), 42).unwrap();
    let b = run_all(&corpus, &others, &small_cfg(), 42).unwrap();
    assert_eq!(a.table.to_csv(), b.table.to_csv());

    let eng: Vec<_> = a.table.england().collect();
    assert_eq!(eng.len(), 200);
    for r in &eng {
        let s: Vec<f64> = r.scores.iter().map(|v| v.unwrap()).collect();
        assert!((r.ensemble.unwrap() - s.iter().sum::<f64>() / 3.0).abs() < 1e-15);
    }
    assert_eq!(a.table.rows.len(), 200 + 3 * 80);
    assert!(a.table.ensemble_accuracy(0.5) >= 0.99);

    let c = run_all(&corpus, &others, &small_cfg(), 43).unwrap();
    assert_ne!(a.table.to_csv(), c.table.to_csv());
}

#[test]
fn pair_results_do_not_depend_on_selection() {
    let others = [Country::Denmark, Country::Rome];
    let corpus = synth::suffix_corpus(150, 60, &others, 8).unwrap();
    let both = run_all(&corpus, &others, &small_cfg(), 1).unwrap();
    let rome = run_all(&corpus, &[Country::Rome], &small_cfg(), 1).unwrap();
    assert_eq!(both.table.pairs, others);
    assert_eq!(rome.table.pairs, [Country::Rome]);
    assert_eq!(both.runs[1].scores, rome.runs[0].scores);
}

#[test]
fn reports_from_persisted_table_match() {
    let others = [Country::Sweden, Country::Norway];
    let corpus = synth::suffix_corpus(150, 60, &others, 2).unwrap();
    let out = run_all(&corpus, &others, &small_cfg(), 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.csv");
    out.table.write_csv(&path).unwrap();
    let back = ScoreTable::read_csv(&path).unwrap();
    assert_eq!(back, out.table);

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = report::write_all(&out.table, 10, 10, a.path()).unwrap();
    let fb = report::write_all(&back, 10, 10, b.path()).unwrap();
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let ranked = report::rank_names(&back, 10, 10).unwrap();
    for r in ranked.top.iter().chain(&ranked.bottom) {
        assert!(back.find(&r.name).is_some());
    }
}

#[test]
fn saved_models_score_new_names() {
    let others = [Country::Denmark, Country::Rome];
    let corpus = synth::suffix_corpus(150, 60, &others, 4).unwrap();
    let out = run_all(&corpus, &others, &small_cfg(), 6).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.models().save(dir.path()).unwrap();
    let models = PairModels::load(dir.path()).unwrap();
    assert_eq!(models.pairs(), others);

    let names = ["bexington", "tolaham", "rivola", "mamesia"];
    let scores = score_external(&models, &others, &names).unwrap();
    let direct = score_external(&out.models(), &others, &names).unwrap();
    assert_eq!(scores, direct);
    assert!(scores[0].ensemble > 0.5 && scores[1].ensemble > 0.5);
    assert!(scores[2].ensemble < 0.5 && scores[3].ensemble < 0.5);
    assert!(score_external(&models, &[Country::Wales], &names).is_err());
    assert!(score_external(&models, &others, &[]).unwrap().is_empty());
}

#[test]
fn subsample_keeps_every_country() {
    let others = [Country::Denmark, Country::Rome];
    let corpus = synth::suffix_corpus(100, 50, &others, 4).unwrap();
    let s = pipeline::subsample(&corpus, 0.2, 1).unwrap();
    assert_eq!(s.count(Country::England), 20);
    assert_eq!(s.count(Country::Rome), 10);
    assert_eq!(s, pipeline::subsample(&corpus, 0.2, 1).unwrap());
    assert!(pipeline::subsample(&corpus, 0.0, 1).is_err());
}
