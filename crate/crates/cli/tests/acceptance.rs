//! Acceptance checks, one PASS / FAIL / BLOCKED line per criterion.
//!
//! Checks that need the published place-name corpus read it from the
//! directory named by `TOPONYM_DATA`, which must hold `manifest.toml` (see
//! the README) and, for the OE/ON comparison, `derivations.csv`. Without it
//! those checks report BLOCKED. `TOPONYM_SUBSAMPLE` runs them on a
//! stratified fraction of the corpus instead.

mod common;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use toponym::dataset::Matrix;
use toponym::features::{FeatureSchema, SlotKind, N_FEATURES};
use toponym::forest::{fit_forest, ForestConfig};
use toponym::pipeline::{self, TrainConfig};
use toponym::resample::{self, nearest, ResampleConfig, ResampledSet, RowOrigin};
use toponym::stats::{self, MannWhitneyMethod};
use toponym::{report, seed, synth, Country, ScoreTable};
use toponym_cli::{cmd_clean, cmd_run, oe_on, sha256_file, RunConfig, RunSummary};

enum Outcome {
    Pass(String),
    Fail(String),
    Blocked(String),
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Pass(s) => write!(f, "PASS     {s}"),
            Outcome::Fail(s) => write!(f, "FAIL     {s}"),
            Outcome::Blocked(s) => write!(f, "BLOCKED  {s}"),
        }
    }
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

const TABLE_1: [(Country, usize); 11] = [
    (Country::England, 18799),
    (Country::Denmark, 5493),
    (Country::Norway, 5056),
    (Country::Sweden, 20794),
    (Country::Ireland, 9928),
    (Country::Scotland, 4203),
    (Country::Wales, 2814),
    (Country::Rome, 1688),
    (Country::Germany, 8699),
    (Country::France, 18175),
    (Country::Netherlands, 7837),
];

fn data_dir() -> Option<PathBuf> {
    let dir = PathBuf::from(std::env::var_os("TOPONYM_DATA")?);
    dir.join("manifest.toml").exists().then_some(dir)
}

const NO_DATA: &str = "published corpus not available (set TOPONYM_DATA)";

fn feature_count() -> Outcome {
    let schema = FeatureSchema::v1();
    let mut groups = [0usize; 8];
    for kind in &schema.slots {
        let g = match kind {
            SlotKind::PosLetter { .. } => 0,
            SlotKind::VowelBinary(_) => 1,
            SlotKind::VowelRate(_) => 2,
            SlotKind::TotalVowelRate => 3,
            SlotKind::ConsonantBinary(_) => 4,
            SlotKind::ConsonantRate(_) => 5,
            SlotKind::Length => 6,
            SlotKind::Entropy => 7,
        };
        groups[g] += 1;
    }
    let v = toponym::features::extract("harlington").unwrap();
    verdict(
        groups == [208, 6, 6, 1, 20, 20, 1, 1] && schema.slots.len() == 263 && v.as_slice().len() == N_FEATURES,
        format!("{} slots = {:?}", schema.slots.len(), groups),
    )
}

fn corpus_counts(data: Option<&Path>) -> Outcome {
    let Some(dir) = data else {
        return Outcome::Blocked(NO_DATA.into());
    };
    let out = tempfile::tempdir().unwrap();
    let t = Instant::now();
    match cmd_clean(&dir.join("manifest.toml"), out.path()) {
        Ok(corpus) => {
            let diffs: Vec<String> = TABLE_1
                .iter()
                .filter(|(c, n)| corpus.count(*c) != *n)
                .map(|(c, n)| format!("{c} {} vs {n}", corpus.count(*c)))
                .collect();
            verdict(
                diffs.is_empty(),
                format!("counts vs published table: {} ({:.1}s)", if diffs.is_empty() { "all equal".into() } else { diffs.join(", ") }, t.elapsed().as_secs_f64()),
            )
        }
        Err(e) => Outcome::Fail(format!("clean failed: {e}")),
    }
}

struct SyntheticRuns {
    first: RunSummary,
    second_sha: String,
    first_sha: String,
    seconds: f64,
}

fn synthetic_runs() -> SyntheticRuns {
    let dir = tempfile::tempdir().unwrap();
    common::write_synthetic_manifest(dir.path(), 1000, 1000, &Country::OTHERS, 2024);
    let cfg = RunConfig::load(&dir.path().join(write_default_config(dir.path()))).unwrap();
    let t = Instant::now();
    let first = cmd_run(&cfg).unwrap();
    let seconds = t.elapsed().as_secs_f64();
    let first_sha = sha256_file(&cfg.out.join("scores.csv")).unwrap();
    let again = RunConfig {
        out: dir.path().join("out2"),
        ..cfg
    };
    cmd_run(&again).unwrap();
    let second_sha = sha256_file(&again.out.join("scores.csv")).unwrap();
    SyntheticRuns {
        first,
        second_sha,
        first_sha,
        seconds,
    }
}

fn write_default_config(dir: &Path) -> &'static str {
    fs::write(dir.join("config.toml"), "manifest = \"manifest.toml\"\nout = \"out\"\nseed = 2024\n").unwrap();
    "config.toml"
}

fn synthetic_separability(runs: &SyntheticRuns) -> Outcome {
    let worst = runs
        .first
        .metrics
        .iter()
        .map(|m| m.accuracy)
        .fold(f64::INFINITY, f64::min);
    let ens = runs.first.manifest.ensemble_accuracy;
    verdict(
        runs.first.metrics.len() == 10 && worst >= 0.99 && ens >= 0.99,
        format!(
            "10 pairs x (1000+1000), min pair accuracy {worst:.4}, ensemble accuracy {ens:.4}, {:.0}s",
            runs.seconds
        ),
    )
}

struct PublishedRun {
    summary: RunSummary,
    out: PathBuf,
    subsample: Option<f64>,
    _dir: tempfile::TempDir,
}

fn published_run(data: &Path) -> Result<PublishedRun, String> {
    let dir = tempfile::tempdir().unwrap();
    let subsample = std::env::var("TOPONYM_SUBSAMPLE").ok().and_then(|s| s.parse::<f64>().ok());
    let cfg = RunConfig {
        manifest: Some(data.join("manifest.toml")),
        out: dir.path().join("out"),
        subsample,
        ..Default::default()
    };
    let summary = cmd_run(&cfg).map_err(|e| e.to_string())?;
    Ok(PublishedRun {
        summary,
        out: cfg.out,
        subsample,
        _dir: dir,
    })
}

fn published_accuracy(run: &PublishedRun) -> Outcome {
    let m = &run.summary.metrics;
    let mean = run.summary.manifest.mean_pair_accuracy;
    let ens = run.summary.manifest.ensemble_accuracy;
    let tol = if run.subsample.is_some() { 0.04 } else { 0.02 };
    let acc = |c: Country| m.iter().find(|x| x.pair == c).map(|x| x.accuracy).unwrap_or(f64::NAN);
    let rome_top = m.iter().all(|x| acc(Country::Rome) >= x.accuracy);
    let scot_bottom = m.iter().all(|x| acc(Country::Scotland) <= x.accuracy);
    let sim = report::similarity_order(&run.summary.table).unwrap();
    let lowest = sim.rows.first().map(|r| r.0);
    let highest = sim.rows.last().map(|r| r.0);
    let ok = (mean - 0.92).abs() <= tol
        && (ens - 0.97).abs() <= tol
        && rome_top
        && scot_bottom
        && lowest == Some(Country::Scotland)
        && highest == Some(Country::Rome);
    verdict(
        ok,
        format!(
            "mean pair accuracy {mean:.3} (0.92±{tol}), ensemble {ens:.3} (0.97±{tol}), Rome top {rome_top}, Scotland bottom {scot_bottom}, mean-score order {:?}..{:?}{}",
            lowest,
            highest,
            run.subsample.map(|f| format!(", subsample {f}")).unwrap_or_default()
        ),
    )
}

fn ranking_sanity(run: &PublishedRun) -> Outcome {
    let all = report::ranking(&run.summary.table).unwrap();
    let n = all.len();
    let rank_of = |name: &str| all.iter().find(|r| r.name == name).map(|r| r.rank);
    let h = rank_of("harlington");
    let a = rank_of("anna");
    verdict(
        h.is_some_and(|r| r <= 20) && a.is_some_and(|r| r + 20 > n),
        format!("harlington rank {h:?}, anna rank {a:?} of {n}"),
    )
}

fn oe_on_validation(run: &PublishedRun, data: &Path) -> Outcome {
    let deriv = data.join("derivations.csv");
    if !deriv.exists() {
        return Outcome::Blocked("derivation extract not available (TOPONYM_DATA/derivations.csv)".into());
    }
    match oe_on(&run.out.join("models"), &deriv) {
        Ok(r) => {
            let ok = r.cells.iter().all(|c| {
                c.oe_mean > c.on_mean && c.t_test.p_value < 0.001 && c.mann_whitney.p_value < 0.001
            });
            let cells: Vec<String> = r
                .cells
                .iter()
                .map(|c| format!("{} {:.3}/{:.3}", c.column.label(), c.oe_mean, c.on_mean))
                .collect();
            verdict(ok, format!("OE n={} ON n={}: {}", r.n_oe, r.n_on, cells.join(", ")))
        }
        Err(e) => Outcome::Fail(format!("OE/ON scoring failed: {e}")),
    }
}

fn correlation_structure(run: &PublishedRun) -> Outcome {
    let m = stats::correlation_matrix(&run.summary.table).unwrap();
    let (a, b, r) = m.max_off_diagonal().unwrap();
    let is_nor_swe = matches!((a, b), (Country::Norway, Country::Sweden) | (Country::Sweden, Country::Norway));
    let means: Vec<(Country, f64)> = m.labels.iter().copied().zip(m.column_means.iter().copied()).collect();
    let top = means.iter().max_by(|x, y| x.1.total_cmp(&y.1)).unwrap();
    let bottom = means.iter().min_by(|x, y| x.1.total_cmp(&y.1)).unwrap();
    let ok = is_nor_swe
        && (r - 0.84).abs() <= 0.03
        && top.0 == Country::Norway
        && (top.1 - 0.55).abs() <= 0.03
        && bottom.0 == Country::Wales
        && (bottom.1 - 0.36).abs() <= 0.03;
    verdict(
        ok,
        format!(
            "max {a}-{b} {r:.3} (NOR-SWE 0.84±0.03); highest mean {} {:.3} (NOR 0.55); lowest {} {:.3} (WAL 0.36)",
            top.0, top.1, bottom.0, bottom.1
        ),
    )
}

fn statistical_oracles() -> Outcome {
    let grid = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/t_cdf.csv");
    let text = fs::read_to_string(&grid).unwrap();
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        worst = worst.max((stats::student_t_cdf(v[0], v[1]) - v[2]).abs());
        n += 1;
    }
    // Exact Mann-Whitney against counts from the recurrence
    // c(m, n, u) = c(m-1, n, u-n) + c(m, n-1, u).
    fn counts(m: usize, n: usize) -> Vec<u64> {
        if m == 0 || n == 0 {
            return vec![1];
        }
        let mut out = vec![0; m * n + 1];
        for (u, c) in counts(m - 1, n).into_iter().enumerate() {
            out[u + n] += c;
        }
        for (u, c) in counts(m, n - 1).into_iter().enumerate() {
            out[u] += c;
        }
        out
    }
    let mut mw_cases = 0;
    let mut mw_bad = 0;
    for total in 2..=8usize {
        for m in 1..total {
            let c = counts(m, total - m);
            let all: u64 = c.iter().sum();
            for mask in 0u32..(1 << total) {
                if mask.count_ones() as usize != m {
                    continue;
                }
                let a: Vec<f64> = (0..total).filter(|i| mask >> i & 1 == 1).map(|i| i as f64).collect();
                let b: Vec<f64> = (0..total).filter(|i| mask >> i & 1 == 0).map(|i| i as f64).collect();
                let r = stats::mann_whitney_with(&a, &b, true, MannWhitneyMethod::Exact).unwrap();
                let u = r.statistic.round() as usize;
                let tail: u64 = if 2 * u >= m * (total - m) { c[u..].iter().sum() } else { c[..=u].iter().sum() };
                let want = (2.0 * tail as f64 / all as f64).min(1.0);
                mw_cases += 1;
                mw_bad += usize::from((r.p_value - want).abs() > 1e-15);
            }
        }
    }
    let benford = stats::benford_probability(1).unwrap();
    verdict(
        worst <= 1e-10 && mw_bad == 0 && (benford - 0.30103).abs() <= 1e-5,
        format!(
            "t cdf max error {worst:.1e} over {n} grid points; exact Mann-Whitney {}/{mw_cases} cases; benford(1) = {benford:.6}",
            mw_cases - mw_bad
        ),
    )
}

fn property_spot_checks() -> Outcome {
    let mut failures: Vec<&str> = Vec::new();
    let mut rng = seed::rng(99);
    use rand::Rng;

    // SMOTE convexity and balance.
    let rows: Vec<[f64; 3]> = (0..60).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let labels: Vec<u8> = (0..60).map(|i| u8::from(i % 4 == 0)).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let s = resample::smote(&x, &labels, &ResampleConfig::default()).unwrap();
    let members: Vec<usize> = (0..60).filter(|&i| labels[i] == 1).collect();
    let convex = (60..s.len()).all(|r| {
        let p = s.x.row(r);
        members.iter().any(|&i| {
            nearest(&x, i, &members, 5).iter().any(|&j| {
                let (a, b) = (x.row(i), x.row(j));
                let lam = (p[0] - a[0]) / (b[0] - a[0]);
                (0.0..1.0).contains(&lam) && (0..3).all(|c| (a[c] + lam * (b[c] - a[c]) - p[c]).abs() < 1e-9)
            })
        })
    });
    if !convex || s.class_counts()[0] != s.class_counts()[1] {
        failures.push("smote");
    }

    // ENN: a row is removed exactly when its 3 neighbours outvote it.
    let set = ResampledSet::identity(&s.x, &s.labels);
    let e = resample::enn_clean(&set, &ResampleConfig::default()).unwrap();
    let all: Vec<usize> = (0..set.len()).collect();
    let expected: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&i| {
            let ones = nearest(&set.x, i, &all, 3).iter().filter(|&&j| set.labels[j] == 1).count();
            u8::from(ones >= 2) != set.labels[i]
        })
        .collect();
    if e.removed != expected {
        failures.push("enn");
    }

    // Folds, out-of-fold completeness and resampling isolation.
    let corpus = synth::suffix_corpus(200, 70, &[Country::Wales], 5).unwrap();
    let mut cfg = TrainConfig::default();
    cfg.forest.n_trees = 10;
    let run = pipeline::run_pair(&corpus, Country::Wales, &cfg, 3).unwrap();
    let mut seen = vec![0; run.dataset.len()];
    let mut isolated = true;
    for f in &run.folds {
        for &r in &f.test_rows {
            seen[r] += 1;
        }
        isolated &= f
            .train_origins
            .iter()
            .all(|o| !matches!(o, RowOrigin::Real(i) if f.test_rows.contains(i)));
    }
    let per_class = |c: u8| -> Vec<usize> {
        (0..10)
            .map(|f| run.plan.test_rows(f).iter().filter(|&&i| run.dataset.labels[i] == c).count())
            .collect()
    };
    let stratified = [0, 1].iter().all(|&c| {
        let v = per_class(c);
        v.iter().max().unwrap() - v.iter().min().unwrap() <= 1
    });
    if !seen.iter().all(|&k| k == 1) || !stratified {
        failures.push("folds");
    }
    if !isolated {
        failures.push("isolation");
    }

    // Forest determinism and prediction range.
    let fc = ForestConfig {
        n_trees: 15,
        rng_seed: 8,
        ..Default::default()
    };
    let a = fit_forest(&s.x, &s.labels, &fc, "v").unwrap();
    let b = fit_forest(&s.x, &s.labels, &fc, "v").unwrap();
    if a.to_bytes() != b.to_bytes() {
        failures.push("determinism");
    }
    let probes = Matrix::from_rows(&[[9.0, -9.0, 0.0], [0.0, 0.0, 0.0], [-1e6, 1e6, 3.0]]).unwrap();
    if !a.predict_rows(&probes).unwrap().iter().chain(&run.scores).all(|p| (0.0..=1.0).contains(p)) {
        failures.push("range");
    }

    // Reports regenerate byte-for-byte from the persisted table.
    let out = pipeline::run_all(&corpus, &[Country::Wales], &cfg, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.table.write_csv(&dir.path().join("s.csv")).unwrap();
    let back = ScoreTable::read_csv(&dir.path().join("s.csv")).unwrap();
    let same = report::rank_names(&out.table, 10, 10).unwrap().to_markdown()
        == report::rank_names(&back, 10, 10).unwrap().to_markdown()
        && report::similarity_order(&out.table).unwrap().to_csv() == report::similarity_order(&back).unwrap().to_csv();
    if !same {
        failures.push("report purity");
    }

    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            "smote convexity, enn rule, folds/oof, resampling isolation, forest determinism, prediction range, report purity".into()
        } else {
            format!("violated: {}", failures.join(", "))
        },
    )
}

fn reproducibility(runs: &SyntheticRuns, data: Option<&Path>, published: Option<&PublishedRun>) -> Outcome {
    if let (Some(dir), Some(first)) = (data, published) {
        let again = published_run(dir);
        return match again {
            Ok(second) => {
                let a = sha256_file(&first.out.join("scores.csv")).unwrap();
                let b = sha256_file(&second.out.join("scores.csv")).unwrap();
                verdict(a == b, format!("published corpus score tables {} / {}", &a[..12], &b[..12]))
            }
            Err(e) => Outcome::Fail(format!("second run failed: {e}")),
        };
    }
    verdict(
        runs.first_sha == runs.second_sha,
        format!(
            "synthetic corpus, default config: score tables {} / {} (published corpus unavailable)",
            &runs.first_sha[..12],
            &runs.second_sha[..12]
        ),
    )
}

#[test]
fn acceptance() {
    let data = data_dir();
    let mut lines: Vec<(u8, &str, Outcome)> = Vec::new();
    lines.push((1, "feature count", feature_count()));
    lines.push((2, "corpus reproduction", corpus_counts(data.as_deref())));
    let synthetic = synthetic_runs();
    lines.push((3, "synthetic separability", synthetic_separability(&synthetic)));

    let published = data.as_deref().map(published_run);
    match (&published, data.as_deref()) {
        (Some(Ok(run)), Some(dir)) => {
            lines.push((4, "published-corpus accuracy", published_accuracy(run)));
            lines.push((5, "ranking sanity", ranking_sanity(run)));
            lines.push((6, "OE/ON validation", oe_on_validation(run, dir)));
            lines.push((7, "correlation structure", correlation_structure(run)));
        }
        (Some(Err(e)), _) => {
            for (n, name) in [(4, "published-corpus accuracy"), (5, "ranking sanity"), (6, "OE/ON validation"), (7, "correlation structure")] {
                lines.push((n, name, Outcome::Fail(format!("run failed: {e}"))));
            }
        }
        _ => {
            for (n, name) in [(4, "published-corpus accuracy"), (5, "ranking sanity"), (6, "OE/ON validation"), (7, "correlation structure")] {
                lines.push((n, name, Outcome::Blocked(NO_DATA.into())));
            }
        }
    }
    lines.push((8, "statistical oracles", statistical_oracles()));
    lines.push((9, "property suites", property_spot_checks()));
    let published_ok = published.as_ref().and_then(|p| p.as_ref().ok());
    lines.push((10, "reproducibility", reproducibility(&synthetic, data.as_deref(), published_ok)));

    // Straight to the handle so the summary shows without --nocapture.
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err);
    for (n, name, outcome) in &lines {
        let _ = writeln!(err, "criterion {n:>2} [{name}]: {outcome}");
    }
    drop(err);
    let failed: Vec<u8> = lines
        .iter()
        .filter(|(_, _, o)| matches!(o, Outcome::Fail(_)))
        .map(|(n, _, _)| *n)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
