//! Stratified k-fold training of the England-vs-Other classifiers.
//!
//! For every pair the England rows (label 1) and the other country's rows
//! (label 0) are split into stratified folds. Each fold's training rows are
//! SMOTE-ENN balanced, a forest is fitted, and the held-out rows are
//! scored, so every name gets exactly one out-of-fold score per classifier.
//! An England name's ensemble score is the mean of its pair scores.
//!
//! Seeds: pair `c` runs under `derive(seed, [index of c in Country::ALL])`;
//! within it the fold plan uses `derive(pair_seed, [FOLD_PLAN])` and fold
//! `f` resamples with `derive(pair_seed, [f, 0])` and grows trees from
//! `derive(pair_seed, [f, 1])`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CleanCorpus, Country, PlaceName};
use crate::dataset::{self, class_counts, LabeledDataset};
use crate::error::{Error, Result};
use crate::features::SCHEMA_VERSION;
use crate::forest::{fit_forest, ForestConfig, ForestModel};
use crate::resample::{smote_enn_or_fallback, ResampleConfig, RowOrigin};
use crate::seed;

const FOLD_PLAN: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub k_folds: usize,
    pub cutpoint: f64,
    pub resample: ResampleConfig,
    pub forest: ForestConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k_folds: 10,
            cutpoint: 0.5,
            resample: ResampleConfig::default(),
            forest: ForestConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(Error::Config(format!("k_folds must be at least 2, got {}", self.k_folds)));
        }
        if !(0.0..=1.0).contains(&self.cutpoint) {
            return Err(Error::Config(format!("cutpoint {} outside [0, 1]", self.cutpoint)));
        }
        self.resample.validate()?;
        self.forest.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub rng_seed: u64,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin,
/// the second class continuing where the first stopped so fold sizes stay
/// within one row of each other.
pub fn make_folds(labels: &[u8], k: usize, rng_seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let counts = class_counts(labels);
    if counts.iter().any(|&c| c < k) {
        return Err(Error::Config(format!(
            "class sizes {counts:?} too small for {k}-fold cross-validation"
        )));
    }
    let mut assignments = vec![0; labels.len()];
    let mut offset = 0;
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut seed::rng(seed::derive(rng_seed, &[class as u64])));
        for (pos, &i) in members.iter().enumerate() {
            assignments[i] = (pos + offset) % k;
        }
        offset = (offset + members.len()) % k;
    }
    Ok(FoldPlan {
        k,
        assignments,
        rng_seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub pair: Country,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub tp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl PairMetrics {
    /// Confusion at `cutpoint`, England (label 1) positive; a score at or
    /// above the cut point predicts England.
    pub fn from_scores(pair: Country, labels: &[u8], scores: &[f64], cutpoint: f64) -> Self {
        let (mut tp, mut fn_, mut tn, mut fp) = (0, 0, 0, 0);
        for (&l, &s) in labels.iter().zip(scores) {
            match (l == 1, s >= cutpoint) {
                (true, true) => tp += 1,
                (true, false) => fn_ += 1,
                (false, false) => tn += 1,
                (false, true) => fp += 1,
            }
        }
        let ratio = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
        PairMetrics {
            pair,
            accuracy: ratio(tp + tn, tp + fn_ + tn + fp),
            sensitivity: ratio(tp, tp + fn_),
            specificity: ratio(tn, tn + fp),
            tp,
            fn_,
            tn,
            fp,
        }
    }
}

/// What happened inside one training fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    /// Dataset rows scored by this fold's model.
    pub test_rows: Vec<usize>,
    /// Training rows after resampling, as dataset row indices or synthetic.
    pub train_origins: Vec<RowOrigin>,
    pub n_synthetic: usize,
    pub n_enn_removed: usize,
    pub fallback: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PairRun {
    pub pair: Country,
    pub dataset: LabeledDataset,
    pub plan: FoldPlan,
    /// Out-of-fold score per dataset row.
    pub scores: Vec<f64>,
    pub metrics: PairMetrics,
    pub models: Vec<ForestModel>,
    pub folds: Vec<FoldReport>,
    pub elapsed: Duration,
}

pub fn pair_seed(seed: u64, pair: Country) -> u64 {
    let idx = Country::ALL.iter().position(|&c| c == pair).unwrap_or(0);
    seed::derive(seed, &[idx as u64])
}

pub fn run_pair(corpus: &CleanCorpus, pair: Country, cfg: &TrainConfig, seed: u64) -> Result<PairRun> {
    cfg.validate()?;
    let started = Instant::now();
    let data = dataset::extract_batch(corpus, pair)?;
    let pseed = pair_seed(seed, pair);
    let plan = make_folds(&data.labels, cfg.k_folds, seed::derive(pseed, &[FOLD_PLAN]))?;

    let per_fold: Vec<(ForestModel, FoldReport, Vec<f64>)> = (0..cfg.k_folds)
        .into_par_iter()
        .map(|f| -> Result<_> {
            let train = plan.train_rows(f);
            let test = plan.test_rows(f);
            let x_train = data.x.select(&train);
            let y_train: Vec<u8> = train.iter().map(|&i| data.labels[i]).collect();
            let rcfg = ResampleConfig {
                rng_seed: seed::derive(pseed, &[f as u64, 0]),
                ..cfg.resample.clone()
            };
            let (balanced, fallback) = smote_enn_or_fallback(&x_train, &y_train, &rcfg);
            if let Some(why) = &fallback {
                log::warn!("{} fold {f}: {why}", pair.pair_label());
            }
            let fcfg = ForestConfig {
                rng_seed: seed::derive(pseed, &[f as u64, 1]),
                ..cfg.forest.clone()
            };
            let model = fit_forest(&balanced.x, &balanced.labels, &fcfg, SCHEMA_VERSION)?;
            let scores = model.predict_rows(&data.x.select(&test))?;
            let report = FoldReport {
                fold: f,
                train_origins: balanced
                    .origin
                    .iter()
                    .map(|o| match *o {
                        RowOrigin::Real(i) => RowOrigin::Real(train[i]),
                        RowOrigin::Synthetic => RowOrigin::Synthetic,
                    })
                    .collect(),
                test_rows: test,
                n_synthetic: balanced.n_synthetic(),
                n_enn_removed: balanced.removed.len(),
                fallback,
            };
            Ok((model, report, scores))
        })
        .collect::<Result<_>>()?;

    let mut scores = vec![f64::NAN; data.len()];
    let mut models = Vec::with_capacity(cfg.k_folds);
    let mut folds = Vec::with_capacity(cfg.k_folds);
    for (model, report, s) in per_fold {
        for (&row, v) in report.test_rows.iter().zip(s) {
            scores[row] = v;
        }
        models.push(model);
        folds.push(report);
    }
    let metrics = PairMetrics::from_scores(pair, &data.labels, &scores, cfg.cutpoint);
    let elapsed = started.elapsed();
    log::info!(
        "{}: accuracy {:.3} ({} rows, {:.1}s)",
        pair.pair_label(),
        metrics.accuracy,
        data.len(),
        elapsed.as_secs_f64()
    );
    Ok(PairRun {
        pair,
        dataset: data,
        plan,
        scores,
        metrics,
        models,
        folds,
        elapsed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub name: String,
    pub country: Country,
    /// One slot per [`ScoreTable::pairs`] entry.
    pub scores: Vec<Option<f64>>,
    pub ensemble: Option<f64>,
}

/// Out-of-fold scores: every England name with one score per classifier
/// and their mean, every other name with the score from its own classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub pairs: Vec<Country>,
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn from_runs(runs: &[PairRun]) -> Result<ScoreTable> {
        let pairs: Vec<Country> = runs.iter().map(|r| r.pair).collect();
        let mut rows: Vec<ScoreRow> = Vec::new();
        let mut eng_index: BTreeMap<String, usize> = BTreeMap::new();
        for (p, run) in runs.iter().enumerate() {
            for i in 0..run.dataset.len() {
                if run.dataset.labels[i] == 1 {
                    let name = &run.dataset.names[i];
                    let at = *eng_index.entry(name.clone()).or_insert_with(|| {
                        rows.push(ScoreRow {
                            name: name.clone(),
                            country: Country::England,
                            scores: vec![None; pairs.len()],
                            ensemble: None,
                        });
                        rows.len() - 1
                    });
                    rows[at].scores[p] = Some(run.scores[i]);
                }
            }
        }
        for row in &mut rows {
            if row.scores.iter().all(Option::is_some) {
                let sum: f64 = row.scores.iter().flatten().sum();
                row.ensemble = Some(sum / pairs.len() as f64);
            } else {
                return Err(Error::Contract(format!("England name {} missing a pair score", row.name)));
            }
        }
        for (p, run) in runs.iter().enumerate() {
            for i in 0..run.dataset.len() {
                if run.dataset.labels[i] == 0 {
                    let mut scores = vec![None; pairs.len()];
                    scores[p] = Some(run.scores[i]);
                    rows.push(ScoreRow {
                        name: run.dataset.names[i].clone(),
                        country: run.pair,
                        scores,
                        ensemble: None,
                    });
                }
            }
        }
        Ok(ScoreTable { pairs, rows })
    }

    pub fn england(&self) -> impl Iterator<Item = &ScoreRow> {
        self.rows.iter().filter(|r| r.country == Country::England)
    }

    pub fn pair_index(&self, pair: Country) -> Result<usize> {
        self.pairs
            .iter()
            .position(|&c| c == pair)
            .ok_or_else(|| Error::Lookup(format!("no {} classifier in score table", pair.pair_label())))
    }

    /// England scores on one classifier, in row order.
    pub fn england_column(&self, pair: Country) -> Result<Vec<f64>> {
        let p = self.pair_index(pair)?;
        self.england()
            .map(|r| {
                r.scores[p].ok_or_else(|| Error::Contract(format!("{} has no {} score", r.name, pair.pair_label())))
            })
            .collect()
    }

    pub fn find(&self, name: &str) -> Option<&ScoreRow> {
        self.england().find(|r| r.name == name)
    }

    /// Fraction of England names with ensemble score at or above `cutpoint`.
    pub fn ensemble_accuracy(&self, cutpoint: f64) -> f64 {
        let (mut hit, mut n) = (0usize, 0usize);
        for r in self.england() {
            if let Some(e) = r.ensemble {
                n += 1;
                hit += usize::from(e >= cutpoint);
            }
        }
        hit as f64 / n.max(1) as f64
    }

    /// CSV: `name,country,<pair codes>,ensemble`; absent scores are empty.
    /// Scores are written in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,country");
        for p in &self.pairs {
            s.push(',');
            s.push_str(p.code());
        }
        s.push_str(",ensemble\n");
        let cell = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for r in &self.rows {
            s.push_str(&r.name);
            s.push(',');
            s.push_str(r.country.code());
            for v in &r.scores {
                s.push(',');
                s.push_str(&cell(*v));
            }
            s.push(',');
            s.push_str(&cell(r.ensemble));
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<ScoreTable> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Data("empty score table".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[0] != "name" || cols[1] != "country" || cols[cols.len() - 1] != "ensemble" {
            return Err(Error::Data(format!("unexpected score table header `{header}`")));
        }
        let pairs = cols[2..cols.len() - 1]
            .iter()
            .map(|c| c.parse::<Country>())
            .collect::<Result<Vec<_>>>()?;
        let parse = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::Data(format!("bad score `{s}`")))
            }
        };
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols.len() {
                return Err(Error::Data(format!("score table line {}: {} fields, expected {}", n + 2, f.len(), cols.len())));
            }
            rows.push(ScoreRow {
                name: f[0].to_string(),
                country: f[1].parse()?,
                scores: f[2..f.len() - 1].iter().map(|s| parse(s)).collect::<Result<_>>()?,
                ensemble: parse(f[f.len() - 1])?,
            });
        }
        Ok(ScoreTable { pairs, rows })
    }

    pub fn read_csv(path: &Path) -> Result<ScoreTable> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

pub struct RunOutput {
    pub table: ScoreTable,
    pub metrics: Vec<PairMetrics>,
    pub runs: Vec<PairRun>,
}

impl RunOutput {
    pub fn models(&self) -> PairModels {
        PairModels(self.runs.iter().map(|r| (r.pair, r.models.clone())).collect())
    }
}

/// Train and score every requested pair. Pairs run one after another; the
/// folds and trees inside each pair run in parallel.
pub fn run_all(corpus: &CleanCorpus, pairs: &[Country], cfg: &TrainConfig, seed: u64) -> Result<RunOutput> {
    if pairs.is_empty() {
        return Err(Error::Config("no pairs selected".into()));
    }
    let mut runs = Vec::with_capacity(pairs.len());
    for &p in pairs {
        runs.push(run_pair(corpus, p, cfg, seed)?);
    }
    let table = ScoreTable::from_runs(&runs)?;
    let metrics = runs.iter().map(|r| r.metrics).collect();
    Ok(RunOutput { table, metrics, runs })
}

/// Fold models per pair.
#[derive(Debug, Clone, Default)]
pub struct PairModels(pub BTreeMap<Country, Vec<ForestModel>>);

#[derive(Serialize, Deserialize)]
struct ModelIndex {
    schema_version: String,
    pairs: Vec<(Country, usize)>,
}

impl PairModels {
    pub fn pairs(&self) -> Vec<Country> {
        self.0.keys().copied().collect()
    }

    /// Layout: `index.json` plus `ENG-<CODE>/fold<NN>.tprf` per fold model.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut index = ModelIndex {
            schema_version: SCHEMA_VERSION.to_string(),
            pairs: Vec::new(),
        };
        for (pair, models) in &self.0 {
            let sub = dir.join(format!("ENG-{}", pair.code()));
            fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            for (f, m) in models.iter().enumerate() {
                m.save(&sub.join(format!("fold{f:02}.tprf")))?;
            }
            index.pairs.push((*pair, models.len()));
        }
        let path = dir.join("index.json");
        fs::write(&path, serde_json::to_string_pretty(&index)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<PairModels> {
        let path = dir.join("index.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let index: ModelIndex = serde_json::from_str(&text)?;
        let mut out = BTreeMap::new();
        for (pair, n) in index.pairs {
            let sub = dir.join(format!("ENG-{}", pair.code()));
            let models = (0..n)
                .map(|f| ForestModel::load(&sub.join(format!("fold{f:02}.tprf"))))
                .collect::<Result<Vec<_>>>()?;
            out.insert(pair, models);
        }
        Ok(PairModels(out))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScore {
    pub name: String,
    /// Aligned with the `pairs` the scores were requested for.
    pub scores: Vec<f64>,
    pub ensemble: f64,
}

/// Score names that took part in no fold: each pair's score is the mean over
/// its fold models, the ensemble the mean over `pairs`.
pub fn score_external(models: &PairModels, pairs: &[Country], names: &[&str]) -> Result<Vec<ExternalScore>> {
    let mut selected = Vec::with_capacity(pairs.len());
    for p in pairs {
        let m = models
            .0
            .get(p)
            .filter(|m| !m.is_empty())
            .ok_or_else(|| Error::Lookup(format!("no trained models for {}", p.pair_label())))?;
        for model in m {
            model.check_schema(SCHEMA_VERSION)?;
        }
        selected.push(m);
    }
    if names.is_empty() {
        return Ok(Vec::new());
    }
    let x = dataset::feature_matrix(names)?;
    let per_pair = selected
        .iter()
        .map(|fold_models| {
            let mut acc = vec![0.0; names.len()];
            for m in fold_models.iter() {
                for (a, s) in acc.iter_mut().zip(m.predict_rows(&x)?) {
                    *a += s;
                }
            }
            Ok(acc.into_iter().map(|a| a / fold_models.len() as f64).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let scores: Vec<f64> = per_pair.iter().map(|s| s[i]).collect();
            let ensemble = scores.iter().sum::<f64>() / scores.len() as f64;
            ExternalScore {
                name: n.to_string(),
                scores,
                ensemble,
            }
        })
        .collect())
}

/// Keep a stratified `fraction` of every country's names.
pub fn subsample(corpus: &CleanCorpus, fraction: f64, seed: u64) -> Result<CleanCorpus> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("subsample fraction {fraction} outside (0, 1]")));
    }
    let mut names: Vec<PlaceName> = Vec::new();
    let mut counts = BTreeMap::new();
    for (i, &c) in Country::ALL.iter().enumerate() {
        let mut members: Vec<&PlaceName> = corpus.of(c).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut seed::rng(seed::derive(seed, &[i as u64])));
        let keep = ((members.len() as f64 * fraction).round() as usize).max(1);
        let mut kept: Vec<&PlaceName> = members.into_iter().take(keep).collect();
        kept.sort_by(|a, b| a.normalized.cmp(&b.normalized));
        counts.insert(c, kept.len());
        names.extend(kept.into_iter().cloned());
    }
    Ok(CleanCorpus {
        names,
        counts,
        drop_log: Vec::new(),
    })
}
