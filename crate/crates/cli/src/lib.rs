//! Commands behind the `toponym` binary.
//!
//! Every command reads its inputs from files and writes its outputs to
//! files, so each step can be rerun from persisted artifacts alone.
//!
//! Output layout of `run` (under the configured output directory):
//!
//! | file | contents |
//! |---|---|
//! | `corpus.tsv` | cleaned corpus, when built from a manifest |
//! | `drop_log.csv` | names removed during cleaning |
//! | `scores.csv` | out-of-fold score table |
//! | `pair_metrics.csv`, `.json`, `.md` | per-classifier confusion and accuracy |
//! | `models/` | fold models per classifier |
//! | `run.json` | configuration, seeds, checksums and timings |

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use toponym::corpus::{self, build_clean_corpus, DerivationRecipe, Manifest};
use toponym::pipeline::{self, ExternalScore, PairModels, TrainConfig};
use toponym::{report, CleanCorpus, Country, Error, PairMetrics, Result, ScoreTable};

pub const CORPUS_FILE: &str = "corpus.tsv";
pub const DROP_LOG_FILE: &str = "drop_log.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const METRICS_FILE: &str = "pair_metrics.csv";
pub const MODELS_DIR: &str = "models";
pub const RUN_MANIFEST_FILE: &str = "run.json";

/// Declarative run configuration, read from TOML. Relative paths are
/// resolved against the directory holding the configuration file.
///
/// ```toml
/// manifest = "data/manifest.toml"   # or: corpus = "out/corpus.tsv"
/// out = "out"
/// seed = 1
/// k_folds = 10
/// cutpoint = 0.5
/// pairs = ["DEN", "NOR"]            # default: all ten
/// subsample = 0.2                   # optional stratified fraction
///
/// [resample]
/// smote_k = 5
/// enn_k = 3
///
/// [forest]
/// n_trees = 100
/// min_samples_split = 5
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub pairs: Option<Vec<Country>>,
    pub subsample: Option<f64>,
    pub derivations: Option<PathBuf>,
    pub top_n: usize,
    pub bottom_n: usize,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: None,
            corpus: None,
            out: PathBuf::from("out"),
            seed: 1,
            pairs: None,
            subsample: None,
            derivations: None,
            top_n: 10,
            bottom_n: 10,
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.manifest, &mut self.corpus, &mut self.derivations]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.out);
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.manifest.is_none() && self.corpus.is_none() {
            return Err(Error::Config("configuration needs `manifest` or `corpus`".into()));
        }
        for p in [&self.manifest, &self.derivations].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!("file not found: {}", p.display())));
            }
        }
        if let (Some(c), None) = (&self.corpus, &self.manifest) {
            if !c.exists() {
                return Err(Error::Config(format!("corpus file not found: {}", c.display())));
            }
        }
        if let Some(f) = self.subsample {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("subsample {f} outside (0, 1]")));
            }
        }
        if let Some(p) = &self.pairs {
            if p.is_empty() || p.contains(&Country::England) {
                return Err(Error::Config("pairs must list non-England countries".into()));
            }
        }
        Ok(())
    }

    pub fn selected_pairs(&self) -> Vec<Country> {
        let chosen = self.pairs.clone().unwrap_or_else(|| Country::OTHERS.to_vec());
        Country::OTHERS.iter().copied().filter(|c| chosen.contains(c)).collect()
    }
}

/// Parse a comma-separated list of country codes.
pub fn parse_pairs(list: &str) -> Result<Vec<Country>> {
    let pairs = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.to_ascii_uppercase().parse::<Country>())
        .collect::<Result<Vec<_>>>()?;
    if pairs.is_empty() || pairs.contains(&Country::England) {
        return Err(Error::Config(format!("`{list}` does not name any non-England country")));
    }
    Ok(pairs)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Load a corpus manifest, clean it, and write `corpus.tsv` and
/// `drop_log.csv` into `out`.
pub fn cmd_clean(manifest_path: &Path, out: &Path) -> Result<CleanCorpus> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", manifest_path.display())))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let (entries, rejected) = manifest.load(base)?;
    let mut corpus = build_clean_corpus(&entries)?;
    corpus.drop_log.extend(rejected);
    ensure_dir(out)?;
    corpus.write_tsv(&out.join(CORPUS_FILE))?;
    corpus.write_drop_log(&out.join(DROP_LOG_FILE))?;
    log::info!(
        "cleaned {} names into {} ({} dropped)",
        entries.len(),
        corpus.names.len(),
        corpus.drop_log.len()
    );
    Ok(corpus)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairTiming {
    pub pair: Country,
    pub seed: u64,
    pub seconds: f64,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub schema_version: String,
    pub config: RunConfig,
    pub pairs: Vec<PairTiming>,
    pub corpus_sha256: String,
    pub scores_sha256: String,
    pub corpus_counts: Vec<(Country, usize)>,
    pub ensemble_accuracy: f64,
    pub mean_pair_accuracy: f64,
    pub non_english: usize,
    pub fallbacks: Vec<String>,
    pub total_seconds: f64,
}

pub struct RunSummary {
    pub table: ScoreTable,
    pub metrics: Vec<PairMetrics>,
    pub manifest: RunManifest,
}

fn load_corpus(cfg: &RunConfig) -> Result<(CleanCorpus, PathBuf)> {
    match (&cfg.corpus, &cfg.manifest) {
        (Some(path), _) if path.exists() => Ok((CleanCorpus::read_tsv(path)?, path.clone())),
        (_, Some(manifest)) => {
            let corpus = cmd_clean(manifest, &cfg.out)?;
            Ok((corpus, cfg.out.join(CORPUS_FILE)))
        }
        (Some(path), None) => Err(Error::Config(format!("corpus file not found: {}", path.display()))),
        (None, None) => Err(Error::Config("configuration needs `manifest` or `corpus`".into())),
    }
}

/// Train every selected classifier under cross-validation and write the
/// score table, metrics, fold models and run manifest.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let started = Instant::now();
    ensure_dir(&cfg.out)?;
    let (mut corpus, corpus_path) = load_corpus(cfg)?;
    let corpus_sha256 = sha256_file(&corpus_path)?;
    if let Some(f) = cfg.subsample {
        corpus = pipeline::subsample(&corpus, f, cfg.seed)?;
        log::info!("subsampled corpus to {} names", corpus.names.len());
    }
    let pairs = cfg.selected_pairs();
    let output = pipeline::run_all(&corpus, &pairs, &cfg.train, cfg.seed)?;

    let scores_path = cfg.out.join(SCORES_FILE);
    output.table.write_csv(&scores_path)?;
    let ensemble_accuracy = output.table.ensemble_accuracy(cfg.train.cutpoint);
    write(&cfg.out.join(METRICS_FILE), &report::metrics_csv(&output.metrics))?;
    write(
        &cfg.out.join("pair_metrics.json"),
        &serde_json::to_string_pretty(&output.metrics)?,
    )?;
    write(
        &cfg.out.join("pair_metrics.md"),
        &report::metrics_markdown(&output.metrics, Some(ensemble_accuracy)),
    )?;
    output.models().save(&cfg.out.join(MODELS_DIR))?;

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        schema_version: toponym::features::SCHEMA_VERSION.to_string(),
        config: cfg.clone(),
        pairs: output
            .runs
            .iter()
            .map(|r| PairTiming {
                pair: r.pair,
                seed: pipeline::pair_seed(cfg.seed, r.pair),
                seconds: r.elapsed.as_secs_f64(),
            })
            .collect(),
        corpus_sha256,
        scores_sha256: sha256_file(&scores_path)?,
        corpus_counts: corpus.counts.iter().map(|(&c, &n)| (c, n)).collect(),
        ensemble_accuracy,
        mean_pair_accuracy: output.metrics.iter().map(|m| m.accuracy).sum::<f64>() / output.metrics.len() as f64,
        non_english: report::count_non_english(&output.table, cfg.train.cutpoint),
        fallbacks: output
            .runs
            .iter()
            .flat_map(|r| {
                r.folds
                    .iter()
                    .filter_map(move |f| f.fallback.as_ref().map(|w| format!("{} fold {}: {w}", r.pair.pair_label(), f.fold)))
            })
            .collect(),
        total_seconds: started.elapsed().as_secs_f64(),
    };
    write(
        &cfg.out.join(RUN_MANIFEST_FILE),
        &serde_json::to_string_pretty(&manifest)?,
    )?;
    log::info!(
        "run finished in {:.1}s: mean pair accuracy {:.3}, ensemble accuracy {:.3}",
        manifest.total_seconds,
        manifest.mean_pair_accuracy,
        ensemble_accuracy
    );
    Ok(RunSummary {
        table: output.table,
        metrics: output.metrics,
        manifest,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Rankings,
    Similarity,
    Correlations,
    Metrics,
    Breakdown,
    OeOn,
    All,
}

/// Extra inputs some reports need.
#[derive(Debug, Clone, Default)]
pub struct ReportInputs {
    pub metrics: Option<PathBuf>,
    pub names: Vec<String>,
    pub models: Option<PathBuf>,
    pub derivations: Option<PathBuf>,
    pub top_n: usize,
    pub bottom_n: usize,
    pub cutpoint: f64,
}

/// Write the selected report(s) for a persisted score table into `out`.
pub fn cmd_report(scores: &Path, which: ReportKind, inputs: &ReportInputs, out: &Path) -> Result<Vec<PathBuf>> {
    let table = ScoreTable::read_csv(scores)?;
    ensure_dir(out)?;
    let mut written = Vec::new();
    let all = which == ReportKind::All;
    if all || which == ReportKind::Rankings {
        let r = report::rank_names(&table, inputs.top_n, inputs.bottom_n)?;
        let p = out.join("rankings.md");
        let mut md = r.to_markdown();
        md.push_str(&format!(
            "\n{} England names score below {}.\n",
            report::count_non_english(&table, inputs.cutpoint),
            inputs.cutpoint
        ));
        write(&p, &md)?;
        written.push(p);
        let p = out.join("rankings.csv");
        write(&p, &r.to_csv())?;
        written.push(p);
    }
    if all || which == ReportKind::Similarity {
        let s = report::similarity_order(&table)?;
        for (name, text) in [("similarity.md", s.to_markdown()), ("similarity.csv", s.to_csv())] {
            let p = out.join(name);
            write(&p, &text)?;
            written.push(p);
        }
    }
    if (all && table.pairs.len() >= 2) || which == ReportKind::Correlations {
        written.extend(report::write_correlations(&table, out)?);
    }
    if which == ReportKind::Metrics || (all && inputs.metrics.is_some()) {
        let path = inputs
            .metrics
            .as_ref()
            .ok_or_else(|| Error::Config("metrics report needs a pair metrics file".into()))?;
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let metrics = report::read_metrics_csv(&text)?;
        written.extend(report::write_metrics(
            &metrics,
            Some(table.ensemble_accuracy(inputs.cutpoint)),
            out,
        )?);
    }
    if which == ReportKind::Breakdown || (all && !inputs.names.is_empty()) {
        if inputs.names.is_empty() {
            return Err(Error::Config("breakdown report needs at least one name".into()));
        }
        let mut md = String::from("# Per-classifier scores\n");
        for n in &inputs.names {
            let b = report::name_breakdown(&table, n)?;
            md.push('\n');
            md.push_str(&b.to_markdown());
        }
        let p = out.join("breakdown.md");
        write(&p, &md)?;
        written.push(p);
    }
    if which == ReportKind::OeOn || (all && inputs.models.is_some() && inputs.derivations.is_some()) {
        let (models, derivations) = match (&inputs.models, &inputs.derivations) {
            (Some(m), Some(d)) => (m, d),
            _ => return Err(Error::Config("OE/ON report needs a models directory and a derivation file".into())),
        };
        let r = oe_on(models, derivations)?;
        written.extend(report::write_oe_on(&r, out)?);
    }
    Ok(written)
}

/// Score the Old English and Old Norse samples of a derivation extract on
/// every trained classifier and compare them.
pub fn oe_on(models_dir: &Path, derivations: &Path) -> Result<report::OeOnReport> {
    let models = PairModels::load(models_dir)?;
    let pairs = models.pairs();
    let entries = corpus::read_derivations(derivations)?;
    let score = |recipe: DerivationRecipe| -> Result<Vec<ExternalScore>> {
        let sample = corpus::filter_derivation(&entries, &recipe);
        let names: Vec<&str> = sample.names.iter().map(|n| n.normalized.as_str()).collect();
        log::info!("{}: {} names", sample.label, names.len());
        pipeline::score_external(&models, &pairs, &names)
    };
    let oe = score(DerivationRecipe::old_english())?;
    let on = score(DerivationRecipe::old_norse())?;
    report::oe_on_report(&pairs, &oe, &on)
}

/// One input line of `score`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreLine {
    pub input: String,
    pub normalized: Option<String>,
    pub scores: Option<ExternalScore>,
    pub note: Option<String>,
}

/// Score every non-empty line of `names_file` with saved fold models.
pub fn cmd_score(models_dir: &Path, names_file: &Path, pairs: Option<&[Country]>) -> Result<(Vec<Country>, Vec<ScoreLine>)> {
    let models = PairModels::load(models_dir)?;
    let pairs = match pairs {
        Some(p) => p.to_vec(),
        None => models.pairs(),
    };
    let text = fs::read_to_string(names_file).map_err(|e| Error::io(names_file, e))?;
    let mut lines: Vec<ScoreLine> = Vec::new();
    let mut to_score: Vec<(usize, String)> = Vec::new();
    for raw in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        match corpus::normalize(raw) {
            Ok(n) => {
                let note = (n != raw).then(|| format!("normalized from `{raw}`"));
                to_score.push((lines.len(), n.clone()));
                lines.push(ScoreLine {
                    input: raw.to_string(),
                    normalized: Some(n),
                    scores: None,
                    note,
                });
            }
            Err(rej) => lines.push(ScoreLine {
                input: raw.to_string(),
                normalized: None,
                scores: None,
                note: Some(format!(
                    "not scored: {}{}",
                    rej.reason.as_str(),
                    rej.offending.map(|c| format!(" ({c:?})")).unwrap_or_default()
                )),
            }),
        }
    }
    let names: Vec<&str> = to_score.iter().map(|(_, n)| n.as_str()).collect();
    let scored = pipeline::score_external(&models, &pairs, &names)?;
    for ((i, _), s) in to_score.iter().zip(scored) {
        lines[*i].scores = Some(s);
    }
    Ok((pairs, lines))
}

/// Tab-separated listing: input, normalized name, one column per pair,
/// ensemble, note.
pub fn format_score_lines(pairs: &[Country], lines: &[ScoreLine]) -> String {
    if lines.is_empty() {
        return String::new();
    }
    let mut s = String::from("input\tname");
    for p in pairs {
        s.push('\t');
        s.push_str(&p.pair_label());
    }
    s.push_str("\tensemble\tnote\n");
    for l in lines {
        s.push_str(&l.input);
        s.push('\t');
        s.push_str(l.normalized.as_deref().unwrap_or(""));
        match &l.scores {
            Some(sc) => {
                for v in &sc.scores {
                    s.push_str(&format!("\t{v:.3}"));
                }
                s.push_str(&format!("\t{:.3}", sc.ensemble));
            }
            None => s.push_str(&"\t".repeat(pairs.len() + 1)),
        }
        s.push('\t');
        s.push_str(l.note.as_deref().unwrap_or(""));
        s.push('\n');
    }
    s
}
