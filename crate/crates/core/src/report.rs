//! Tables and rankings built from a [`ScoreTable`].
//!
//! Every report is a pure function of its inputs. Values are sorted and
//! compared at full precision and printed with three decimals.
//!
//! File names written by [`write_all`] and friends:
//!
//! | report | files |
//! |---|---|
//! | ranking | `rankings.md`, `rankings.csv` |
//! | classifier means | `similarity.md`, `similarity.csv` |
//! | correlations | `correlations.md`, `correlations.csv`, `correlations_p.csv` |
//! | pair metrics | `pair_metrics.md`, `pair_metrics.csv` |
//! | OE/ON comparison | `oe_on.md`, `oe_on.csv` |

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Country;
use crate::error::{Error, Result};
use crate::pipeline::{ExternalScore, PairMetrics, ScoreTable};
use crate::stats::{self, CorrelationMatrix, TestResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub rank: usize,
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub n_ranked: usize,
    pub top: Vec<RankingRow>,
    pub bottom: Vec<RankingRow>,
}

fn by_score_desc(a: &(f64, &str), b: &(f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Full ranking of England names by ensemble score, highest first.
pub fn ranking(table: &ScoreTable) -> Result<Vec<RankingRow>> {
    let mut rows = table
        .england()
        .map(|r| {
            r.ensemble
                .map(|e| (e, r.name.as_str()))
                .ok_or_else(|| Error::Contract(format!("{} has no ensemble score", r.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(by_score_desc);
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, (score, name))| RankingRow {
            rank: i + 1,
            name: name.to_string(),
            score,
        })
        .collect())
}

pub fn rank_names(table: &ScoreTable, top_n: usize, bottom_n: usize) -> Result<RankingReport> {
    let all = ranking(table)?;
    let n = all.len();
    Ok(RankingReport {
        n_ranked: n,
        top: all[..top_n.min(n)].to_vec(),
        bottom: all[n - bottom_n.min(n)..].to_vec(),
    })
}

impl RankingReport {
    pub fn to_markdown(&self) -> String {
        let mut s = format!("# England names by ensemble score\n\n{} names ranked.\n", self.n_ranked);
        for (title, rows) in [("Highest", &self.top), ("Lowest", &self.bottom)] {
            let _ = write!(s, "\n## {title}\n\n| Rank | Name | Score |\n|---:|---|---:|\n");
            for r in rows {
                let _ = writeln!(s, "| {} | {} | {:.3} |", r.rank, r.name, r.score);
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("section,rank,name,score\n");
        for (section, rows) in [("top", &self.top), ("bottom", &self.bottom)] {
            for r in rows {
                let _ = writeln!(s, "{section},{},{},{:.3}", r.rank, r.name, r.score);
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NameBreakdown {
    pub name: String,
    pub scores: Vec<(Country, f64)>,
    pub ensemble: f64,
}

pub fn name_breakdown(table: &ScoreTable, name: &str) -> Result<NameBreakdown> {
    let row = table
        .find(name)
        .ok_or_else(|| Error::Lookup(format!("`{name}` is not an England name in the score table")))?;
    let scores = table
        .pairs
        .iter()
        .zip(&row.scores)
        .map(|(&c, s)| {
            s.map(|v| (c, v))
                .ok_or_else(|| Error::Contract(format!("{name} has no {} score", c.pair_label())))
        })
        .collect::<Result<Vec<_>>>()?;
    let ensemble = row
        .ensemble
        .ok_or_else(|| Error::Contract(format!("{name} has no ensemble score")))?;
    Ok(NameBreakdown {
        name: row.name.clone(),
        scores,
        ensemble,
    })
}

impl NameBreakdown {
    /// Classifier with the lowest score.
    pub fn lowest(&self) -> Option<(Country, f64)> {
        self.scores.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!("| Classifier | {} |\n|---|---:|\n", self.name);
        for (c, v) in &self.scores {
            let _ = writeln!(s, "| {} | {v:.3} |", c.pair_label());
        }
        let _ = writeln!(s, "| Ensemble | {:.3} |", self.ensemble);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    /// Mean England score per classifier, ascending.
    pub rows: Vec<(Country, f64)>,
}

pub fn similarity_order(table: &ScoreTable) -> Result<SimilarityReport> {
    let mut rows = table
        .pairs
        .iter()
        .map(|&c| {
            let col = table.england_column(c)?;
            Ok((c, col.iter().sum::<f64>() / col.len().max(1) as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    Ok(SimilarityReport { rows })
}

impl SimilarityReport {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("# Mean England score per classifier\n\n| Classifier | Mean |\n|---|---:|\n");
        for (c, m) in &self.rows {
            let _ = writeln!(s, "| {} | {m:.3} |", c.pair_label());
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("pair,mean\n");
        for (c, m) in &self.rows {
            let _ = writeln!(s, "{},{m:.3}", c.code());
        }
        s
    }
}

/// England names whose ensemble score falls below `cutpoint`.
pub fn count_non_english(table: &ScoreTable, cutpoint: f64) -> usize {
    table
        .england()
        .filter(|r| r.ensemble.is_some_and(|e| e < cutpoint))
        .count()
}

pub fn metrics_markdown(metrics: &[PairMetrics], ensemble_accuracy: Option<f64>) -> String {
    let mut s = String::from(
        "# Classifier accuracy\n\n| Classifier | Accuracy | Sensitivity | Specificity |\n|---|---:|---:|---:|\n",
    );
    for m in metrics {
        let _ = writeln!(
            s,
            "| {} | {:.3} | {:.3} | {:.3} |",
            m.pair.pair_label(),
            m.accuracy,
            m.sensitivity,
            m.specificity
        );
    }
    if !metrics.is_empty() {
        let n = metrics.len() as f64;
        let avg = |f: fn(&PairMetrics) -> f64| metrics.iter().map(f).sum::<f64>() / n;
        let _ = writeln!(
            s,
            "| Average | {:.3} | {:.3} | {:.3} |",
            avg(|m| m.accuracy),
            avg(|m| m.sensitivity),
            avg(|m| m.specificity)
        );
    }
    if let Some(a) = ensemble_accuracy {
        let _ = writeln!(s, "\nEnsemble accuracy on England names: {a:.3}");
    }
    s
}

pub fn metrics_csv(metrics: &[PairMetrics]) -> String {
    let mut s = String::from("pair,accuracy,sensitivity,specificity,tp,fn,tn,fp\n");
    for m in metrics {
        let _ = writeln!(
            s,
            "{},{:?},{:?},{:?},{},{},{},{}",
            m.pair.code(),
            m.accuracy,
            m.sensitivity,
            m.specificity,
            m.tp,
            m.fn_,
            m.tn,
            m.fp
        );
    }
    s
}

pub fn read_metrics_csv(text: &str) -> Result<Vec<PairMetrics>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::Data(format!("metrics line {}: expected 8 fields", n + 1)));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Data(format!("bad number `{s}`")));
        let int = |s: &str| s.parse::<usize>().map_err(|_| Error::Data(format!("bad count `{s}`")));
        out.push(PairMetrics {
            pair: f[0].parse()?,
            accuracy: num(f[1])?,
            sensitivity: num(f[2])?,
            specificity: num(f[3])?,
            tp: int(f[4])?,
            fn_: int(f[5])?,
            tn: int(f[6])?,
            fp: int(f[7])?,
        });
    }
    Ok(out)
}

fn lower_triangle(m: &CorrelationMatrix, values: &[Vec<f64>], with_mean: bool) -> String {
    let mut s = String::from("|");
    for c in &m.labels {
        let _ = write!(s, " {} |", c.code());
    }
    s.insert_str(0, "| ");
    s.push('\n');
    s.push_str("|---|");
    s.push_str(&"---:|".repeat(m.labels.len()));
    s.push('\n');
    for (i, ci) in m.labels.iter().enumerate() {
        let _ = write!(s, "| {} |", ci.code());
        for j in 0..m.labels.len() {
            if j < i {
                let _ = write!(s, " {:.3} |", values[i][j]);
            } else if j == i {
                s.push_str(" 1 |");
            } else {
                s.push_str("  |");
            }
        }
        s.push('\n');
    }
    if with_mean {
        s.push_str("| Mean |");
        for v in &m.column_means {
            let _ = write!(s, " {v:.3} |");
        }
        s.push('\n');
    }
    s
}

pub fn correlation_markdown(m: &CorrelationMatrix) -> String {
    let mut s = String::from("# Correlations between classifier scores on England names\n\n");
    s.push_str(&lower_triangle(m, &m.r, true));
    if let Some((a, b, r)) = m.max_off_diagonal() {
        let _ = writeln!(s, "\nLargest: {}-{} {r:.3}", a.code(), b.code());
    }
    s
}

fn matrix_csv(labels: &[Country], values: &[Vec<f64>], extra: Option<(&str, &[f64])>, p_values: bool) -> String {
    let mut s = String::from("pair");
    for c in labels {
        s.push(',');
        s.push_str(c.code());
    }
    s.push('\n');
    let cell = |v: f64| if p_values { format!("{v:.3e}") } else { format!("{v:.3}") };
    for (i, c) in labels.iter().enumerate() {
        s.push_str(c.code());
        for v in &values[i] {
            s.push(',');
            s.push_str(&cell(*v));
        }
        s.push('\n');
    }
    if let Some((label, row)) = extra {
        s.push_str(label);
        for v in row {
            s.push(',');
            s.push_str(&cell(*v));
        }
        s.push('\n');
    }
    s
}

pub fn correlation_csv(m: &CorrelationMatrix) -> String {
    matrix_csv(&m.labels, &m.r, Some(("mean", &m.column_means)), false)
}

pub fn correlation_p_csv(m: &CorrelationMatrix) -> String {
    matrix_csv(&m.labels, &m.p, None, true)
}

/// Columns of the OE/ON comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OeOnColumn {
    Pair(Country),
    ScandinavianMean,
    Ensemble,
}

impl OeOnColumn {
    pub fn label(self) -> String {
        match self {
            OeOnColumn::Pair(c) => c.pair_label(),
            OeOnColumn::ScandinavianMean => "Ave Scand".into(),
            OeOnColumn::Ensemble => "Eng-Other".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OeOnCell {
    pub column: OeOnColumn,
    pub oe_mean: f64,
    pub on_mean: f64,
    /// Welch for the Scandinavian columns, pooled variance for the ensemble.
    pub t_test: TestResult,
    pub mann_whitney: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OeOnReport {
    pub n_oe: usize,
    pub n_on: usize,
    pub cells: Vec<OeOnCell>,
}

pub const SCANDINAVIAN: [Country; 3] = [Country::Denmark, Country::Sweden, Country::Norway];

/// Compare Old English and Old Norse derived names on the Scandinavian
/// classifiers, their mean and the ensemble. `pairs` gives the order of the
/// per-classifier scores in each [`ExternalScore`].
pub fn oe_on_report(pairs: &[Country], oe: &[ExternalScore], on: &[ExternalScore]) -> Result<OeOnReport> {
    if oe.len() < 2 || on.len() < 2 {
        return Err(Error::Data(format!(
            "OE/ON comparison needs at least two names per sample, got {} and {}",
            oe.len(),
            on.len()
        )));
    }
    let idx = SCANDINAVIAN
        .iter()
        .map(|c| {
            pairs
                .iter()
                .position(|p| p == c)
                .ok_or_else(|| Error::Lookup(format!("no {} scores", c.pair_label())))
        })
        .collect::<Result<Vec<_>>>()?;
    let column = |sample: &[ExternalScore], col: OeOnColumn| -> Vec<f64> {
        sample
            .iter()
            .map(|s| match col {
                OeOnColumn::Pair(c) => s.scores[idx[SCANDINAVIAN.iter().position(|&x| x == c).unwrap_or(0)]],
                OeOnColumn::ScandinavianMean => idx.iter().map(|&i| s.scores[i]).sum::<f64>() / idx.len() as f64,
                OeOnColumn::Ensemble => s.ensemble,
            })
            .collect()
    };
    let columns = SCANDINAVIAN
        .iter()
        .map(|&c| OeOnColumn::Pair(c))
        .chain([OeOnColumn::ScandinavianMean, OeOnColumn::Ensemble]);
    let mut cells = Vec::new();
    for col in columns {
        let a = column(oe, col);
        let b = column(on, col);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let t_test = if col == OeOnColumn::Ensemble {
            stats::pooled_t(&a, &b, true)?
        } else {
            stats::welch_t(&a, &b, true)?
        };
        cells.push(OeOnCell {
            column: col,
            oe_mean: mean(&a),
            on_mean: mean(&b),
            t_test,
            mann_whitney: stats::mann_whitney(&a, &b, true)?,
        });
    }
    Ok(OeOnReport {
        n_oe: oe.len(),
        n_on: on.len(),
        cells,
    })
}

fn p_text(p: f64) -> String {
    if p < 0.001 {
        "<.001".into()
    } else {
        format!("{p:.3}")
    }
}

impl OeOnReport {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("# OE and ON name scores\n\n|  |");
        for c in &self.cells {
            let _ = write!(s, " {} |", c.column.label());
        }
        s.push_str("\n|---|");
        s.push_str(&"---:|".repeat(self.cells.len()));
        s.push('\n');
        let row = |s: &mut String, label: String, f: &dyn Fn(&OeOnCell) -> String| {
            let _ = write!(s, "| {label} |");
            for c in &self.cells {
                let _ = write!(s, " {} |", f(c));
            }
            s.push('\n');
        };
        row(&mut s, format!("OE Av (n={})", self.n_oe), &|c| format!("{:.3}", c.oe_mean));
        row(&mut s, format!("ON Av (n={})", self.n_on), &|c| format!("{:.3}", c.on_mean));
        row(&mut s, "T-test".into(), &|c| p_text(c.t_test.p_value));
        row(&mut s, "Mann-Whitney".into(), &|c| p_text(c.mann_whitney.p_value));
        s.push_str("\nT-tests are two-tailed: Welch for the Scandinavian columns, pooled variance for Eng-Other.\n");
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("column,n_oe,n_on,oe_mean,on_mean,t_method,t,t_p,mw_u,mw_p\n");
        for c in &self.cells {
            let method = match c.column {
                OeOnColumn::Ensemble => "pooled",
                _ => "welch",
            };
            let _ = writeln!(
                s,
                "{},{},{},{:.3},{:.3},{method},{:.3},{:.3e},{:.3},{:.3e}",
                c.column.label(),
                self.n_oe,
                self.n_on,
                c.oe_mean,
                c.on_mean,
                c.t_test.statistic,
                c.t_test.p_value,
                c.mann_whitney.statistic,
                c.mann_whitney.p_value
            );
        }
        s
    }
}

fn write_file(dir: &Path, name: &str, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Ranking, classifier means and correlations from a score table.
pub fn write_all(table: &ScoreTable, top_n: usize, bottom_n: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let rank = rank_names(table, top_n, bottom_n)?;
    write_file(dir, "rankings.md", &rank.to_markdown(), &mut written)?;
    write_file(dir, "rankings.csv", &rank.to_csv(), &mut written)?;
    let sim = similarity_order(table)?;
    write_file(dir, "similarity.md", &sim.to_markdown(), &mut written)?;
    write_file(dir, "similarity.csv", &sim.to_csv(), &mut written)?;
    if table.pairs.len() >= 2 {
        written.extend(write_correlations(table, dir)?);
    }
    Ok(written)
}

pub fn write_correlations(table: &ScoreTable, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let m = stats::correlation_matrix(table)?;
    write_file(dir, "correlations.md", &correlation_markdown(&m), &mut written)?;
    write_file(dir, "correlations.csv", &correlation_csv(&m), &mut written)?;
    write_file(dir, "correlations_p.csv", &correlation_p_csv(&m), &mut written)?;
    Ok(written)
}

pub fn write_metrics(metrics: &[PairMetrics], ensemble_accuracy: Option<f64>, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    write_file(dir, "pair_metrics.md", &metrics_markdown(metrics, ensemble_accuracy), &mut written)?;
    write_file(dir, "pair_metrics.csv", &metrics_csv(metrics), &mut written)?;
    Ok(written)
}

pub fn write_oe_on(report: &OeOnReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    write_file(dir, "oe_on.md", &report.to_markdown(), &mut written)?;
    write_file(dir, "oe_on.csv", &report.to_csv(), &mut written)?;
    Ok(written)
}
