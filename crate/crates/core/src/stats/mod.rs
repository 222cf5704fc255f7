//! Two-sample tests, correlation and small diagnostics.
//!
//! One-tailed p-values are taken in the direction of the observed effect,
//! so the two-tailed value is always `min(1, 2 * one-tailed)`.

pub mod dist;

use serde::{Deserialize, Serialize};

use crate::corpus::Country;
use crate::error::{Error, Result};
use crate::features::Position;
use crate::pipeline::ScoreTable;

pub use dist::{normal_cdf, student_t_cdf, student_t_sf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    WelchT,
    PooledT,
    MannWhitney,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// t for the t-tests, U of the first sample for Mann-Whitney.
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    pub n1: usize,
    pub n2: usize,
    pub two_tailed: bool,
    /// Degrees of freedom for the t-tests.
    pub df: Option<f64>,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1.0))
}

fn tails(p_one: f64, two_tailed: bool) -> f64 {
    let p = if two_tailed { 2.0 * p_one } else { p_one };
    p.clamp(0.0, 1.0)
}

fn t_result(method: TestMethod, diff: f64, se2: f64, df: f64, n1: usize, n2: usize, two_tailed: bool) -> TestResult {
    let (statistic, p_one) = if se2 == 0.0 {
        if diff == 0.0 {
            (0.0, 0.5)
        } else {
            log::warn!("{method:?}: both samples constant with different means");
            (diff.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = diff / se2.sqrt();
        (t, student_t_sf(t.abs(), df))
    };
    let p_value = if se2 == 0.0 && diff == 0.0 { 1.0 } else { tails(p_one, two_tailed) };
    TestResult {
        statistic,
        p_value,
        method,
        n1,
        n2,
        two_tailed,
        df: Some(df),
    }
}

fn check_t_samples(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Contract(format!(
            "t-test needs at least 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of freedom.
pub fn welch_t(a: &[f64], b: &[f64], two_tailed: bool) -> Result<TestResult> {
    check_t_samples(a, b)?;
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (m1, v1) = mean_var(a);
    let (m2, v2) = mean_var(b);
    let (s1, s2) = (v1 / n1, v2 / n2);
    let se2 = s1 + s2;
    let df = if se2 == 0.0 {
        n1 + n2 - 2.0
    } else {
        se2 * se2 / (s1 * s1 / (n1 - 1.0) + s2 * s2 / (n2 - 1.0))
    };
    Ok(t_result(TestMethod::WelchT, m1 - m2, se2, df, a.len(), b.len(), two_tailed))
}

/// Student's t-test with pooled variance, `df = n1 + n2 - 2`.
pub fn pooled_t(a: &[f64], b: &[f64], two_tailed: bool) -> Result<TestResult> {
    check_t_samples(a, b)?;
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (m1, v1) = mean_var(a);
    let (m2, v2) = mean_var(b);
    let df = n1 + n2 - 2.0;
    let sp2 = ((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / df;
    let se2 = sp2 * (1.0 / n1 + 1.0 / n2);
    Ok(t_result(TestMethod::PooledT, m1 - m2, se2, df, a.len(), b.len(), two_tailed))
}

/// Midranks (1-based) of `values`, ties sharing the average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MannWhitneyMethod {
    /// Exact when `n1 + n2 <= 12`, normal approximation otherwise.
    #[default]
    Auto,
    Exact,
    Asymptotic,
}

pub const EXACT_MAX_N: usize = 12;

pub fn mann_whitney(a: &[f64], b: &[f64], two_tailed: bool) -> Result<TestResult> {
    mann_whitney_with(a, b, two_tailed, MannWhitneyMethod::Auto)
}

pub fn mann_whitney_with(a: &[f64], b: &[f64], two_tailed: bool, method: MannWhitneyMethod) -> Result<TestResult> {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::Contract("Mann-Whitney needs non-empty samples".into()));
    }
    let n = n1 + n2;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let base = (n1 * (n1 + 1)) as f64 / 2.0;
    let u = ranks[..n1].iter().sum::<f64>() - base;
    let mu = (n1 * n2) as f64 / 2.0;

    let exact = match method {
        MannWhitneyMethod::Auto => n <= EXACT_MAX_N,
        MannWhitneyMethod::Exact => {
            if n > 20 {
                return Err(Error::Contract(format!("exact Mann-Whitney limited to n1+n2 <= 20, got {n}")));
            }
            true
        }
        MannWhitneyMethod::Asymptotic => false,
    };

    let all_equal = pooled.iter().all(|&v| v == pooled[0]);
    let p_one = if all_equal {
        0.5
    } else if exact {
        // Every assignment of the pooled midranks to sample one.
        let (mut hits, mut total) = (0u64, 0u64);
        let upper = u >= mu;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != n1 {
                continue;
            }
            let s: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            let uu = s - base;
            total += 1;
            let hit = if upper { uu >= u - 1e-9 } else { uu <= u + 1e-9 };
            hits += u64::from(hit);
        }
        hits as f64 / total as f64
    } else {
        let nf = n as f64;
        let mut ties = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            ties += t * t * t - t;
            i = j + 1;
        }
        let var = (n1 * n2) as f64 / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
        let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
        normal_cdf(-z)
    };
    let p_value = if all_equal { 1.0 } else { tails(p_one, two_tailed) };
    Ok(TestResult {
        statistic: u,
        p_value,
        method: TestMethod::MannWhitney,
        n1,
        n2,
        two_tailed,
        df: None,
    })
}

/// Sample correlation and its two-tailed p-value (t-transform, `n - 2` df).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::Contract(format!("pearson on lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Contract("pearson needs at least 3 pairs".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Data("correlation undefined for a constant series".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * ((n - 2.0) / (1.0 - r * r)).sqrt();
        tails(student_t_sf(t.abs(), n - 2.0), true)
    };
    Ok((r, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<Country>,
    pub r: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    /// Mean of each column's off-diagonal entries.
    pub column_means: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: Country, b: Country) -> Option<f64> {
        let i = self.labels.iter().position(|&c| c == a)?;
        let j = self.labels.iter().position(|&c| c == b)?;
        Some(self.r[i][j])
    }

    pub fn column_mean(&self, c: Country) -> Option<f64> {
        let i = self.labels.iter().position(|&l| l == c)?;
        Some(self.column_means[i])
    }

    /// Largest off-diagonal correlation and the pair that attains it.
    pub fn max_off_diagonal(&self) -> Option<(Country, Country, f64)> {
        let mut best: Option<(Country, Country, f64)> = None;
        for i in 0..self.labels.len() {
            for j in i + 1..self.labels.len() {
                if best.is_none_or(|b| self.r[i][j] > b.2) {
                    best = Some((self.labels[i], self.labels[j], self.r[i][j]));
                }
            }
        }
        best
    }
}

pub fn correlation_matrix_of(labels: &[Country], columns: &[Vec<f64>]) -> Result<CorrelationMatrix> {
    let k = labels.len();
    if columns.len() != k {
        return Err(Error::Contract(format!("{} labels for {} columns", k, columns.len())));
    }
    let mut r = vec![vec![1.0; k]; k];
    let mut p = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let (rij, pij) = pearson(&columns[i], &columns[j])?;
            r[i][j] = rij;
            r[j][i] = rij;
            p[i][j] = pij;
            p[j][i] = pij;
        }
    }
    let column_means = (0..k)
        .map(|j| {
            if k < 2 {
                return f64::NAN;
            }
            (0..k).filter(|&i| i != j).map(|i| r[i][j]).sum::<f64>() / (k - 1) as f64
        })
        .collect();
    Ok(CorrelationMatrix {
        labels: labels.to_vec(),
        r,
        p,
        column_means,
    })
}

/// Pairwise correlations between classifier score columns over England names.
pub fn correlation_matrix(table: &ScoreTable) -> Result<CorrelationMatrix> {
    let columns = table
        .pairs
        .iter()
        .map(|&c| table.england_column(c))
        .collect::<Result<Vec<_>>>()?;
    correlation_matrix_of(&table.pairs, &columns)
}

/// Benford's leading-digit probability `log10(1 + 1/d)`.
pub fn benford_probability(d: u32) -> Result<f64> {
    if !(1..=9).contains(&d) {
        return Err(Error::Contract(format!("Benford digit must be 1..=9, got {d}")));
    }
    Ok((1.0 + 1.0 / d as f64).log10())
}

/// Relative frequency of each letter at `position`, most common first (ties
/// alphabetical). Names too short to have the position are skipped.
pub fn letter_position_frequencies<'a>(
    names: impl IntoIterator<Item = &'a str>,
    position: Position,
) -> Vec<(char, f64)> {
    let mut counts = [0usize; 26];
    let mut total = 0usize;
    for name in names {
        if let Some(c) = position.letter_in(name.as_bytes()) {
            if c.is_ascii_lowercase() {
                counts[(c - b'a') as usize] += 1;
                total += 1;
            }
        }
    }
    if total == 0 {
        return Vec::new();
    }
    let mut out: Vec<(char, f64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(i, &k)| ((b'a' + i as u8) as char, k as f64 / total as f64))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}
