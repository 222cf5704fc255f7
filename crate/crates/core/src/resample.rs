//! SMOTE oversampling followed by Edited Nearest Neighbour cleaning.
//!
//! SMOTE grows the minority class to the majority count with points on the
//! segments between a minority row and one of its `smote_k` nearest
//! same-class neighbours. ENN then makes one pass over the combined set and
//! removes, from both classes, every row whose label disagrees with the
//! majority label of its `enn_k` nearest neighbours. Neighbour searches are
//! exact on squared Euclidean distance; ties go to the lower row index.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_counts, Matrix};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResampleConfig {
    pub smote_k: usize,
    pub enn_k: usize,
    pub rng_seed: u64,
    pub distance: Distance,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        ResampleConfig {
            smote_k: 5,
            enn_k: 3,
            rng_seed: 0,
            distance: Distance::Euclidean,
        }
    }
}

impl ResampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.smote_k < 1 {
            return Err(Error::Config("smote_k must be at least 1".into()));
        }
        if self.enn_k % 2 == 0 {
            return Err(Error::Config(format!("enn_k must be odd, got {}", self.enn_k)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowOrigin {
    /// Index of the row in the original (pre-resampling) data.
    Real(usize),
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResampledSet {
    pub x: Matrix,
    pub labels: Vec<u8>,
    pub origin: Vec<RowOrigin>,
    /// Rows dropped by ENN, as indices into the set ENN was given.
    pub removed: Vec<usize>,
}

impl ResampledSet {
    pub fn identity(x: &Matrix, labels: &[u8]) -> Self {
        ResampledSet {
            x: x.clone(),
            labels: labels.to_vec(),
            origin: (0..labels.len()).map(RowOrigin::Real).collect(),
            removed: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_synthetic(&self) -> usize {
        self.origin.iter().filter(|o| **o == RowOrigin::Synthetic).count()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        class_counts(&self.labels)
    }
}

/// Squared distance, or `None` once the running sum exceeds `bound`.
#[inline]
fn sq_dist_bounded(a: &[f64], b: &[f64], bound: f64) -> Option<f64> {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(32);
    let mut cb = b.chunks_exact(32);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for (qa, qb) in xa.chunks_exact(4).zip(xb.chunks_exact(4)) {
            for l in 0..4 {
                let d = qa[l] - qb[l];
                acc[l] += d * d;
            }
        }
        if (acc[0] + acc[1]) + (acc[2] + acc[3]) > bound {
            return None;
        }
    }
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let d = x - y;
        acc[0] += d * d;
    }
    let s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    (s <= bound).then_some(s)
}

/// The `k` candidates nearest to `query` (excluding itself), nearest first.
/// `candidates` must be sorted ascending so that equal distances resolve to
/// the lower index.
pub fn nearest(x: &Matrix, query: usize, candidates: &[usize], k: usize) -> Vec<usize> {
    let q = x.row(query);
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for &c in candidates {
        if c == query {
            continue;
        }
        let worst = if best.len() == k { best[k - 1].0 } else { f64::INFINITY };
        let Some(d) = sq_dist_bounded(q, x.row(c), worst) else {
            continue;
        };
        if best.len() == k && d >= worst {
            continue;
        }
        let at = best.partition_point(|&(bd, _)| bd <= d);
        best.insert(at, (d, c));
        best.truncate(k);
    }
    best.into_iter().map(|(_, i)| i).collect()
}

/// Column-wise sparse index over a fixed candidate set for exact k-nearest
/// neighbour queries.
///
/// Distances are first estimated as `|q|^2 + |c|^2 - 2 q.c`, with the dot
/// products accumulated over each column's non-zero entries only. Every
/// candidate within rounding slack of the k-th smallest estimate is then
/// measured with the same exact distance as [`nearest`], so both return the
/// same neighbours in the same order.
pub struct NeighbourIndex<'a> {
    x: &'a Matrix,
    candidates: Vec<usize>,
    norms: Vec<f64>,
    columns: Vec<Vec<(u32, f64)>>,
    max_norm: f64,
}

impl<'a> NeighbourIndex<'a> {
    pub fn new(x: &'a Matrix, candidates: &[usize]) -> Self {
        let mut candidates = candidates.to_vec();
        candidates.sort_unstable();
        let mut columns = vec![Vec::new(); x.n_cols()];
        let mut norms = Vec::with_capacity(candidates.len());
        for (p, &c) in candidates.iter().enumerate() {
            let mut norm = 0.0;
            for (j, &v) in x.row(c).iter().enumerate() {
                if v != 0.0 {
                    columns[j].push((p as u32, v));
                    norm += v * v;
                }
            }
            norms.push(norm);
        }
        let max_norm = norms.iter().copied().fold(0.0, f64::max);
        NeighbourIndex {
            x,
            candidates,
            norms,
            columns,
            max_norm,
        }
    }

    /// The `k` candidates nearest to row `query` of the indexed matrix,
    /// excluding the row itself, nearest first. `scratch` is reusable
    /// working memory.
    pub fn query(&self, query: usize, k: usize, scratch: &mut Vec<f64>) -> Vec<usize> {
        if k == 0 {
            return Vec::new();
        }
        let n = self.candidates.len();
        scratch.clear();
        scratch.resize(n, 0.0);
        let q = self.x.row(query);
        let mut qn = 0.0;
        for (j, &v) in q.iter().enumerate() {
            if v != 0.0 {
                qn += v * v;
                for &(p, w) in &self.columns[j] {
                    scratch[p as usize] += v * w;
                }
            }
        }
        let mut smallest = vec![f64::INFINITY; k];
        for p in 0..n {
            let est = qn + self.norms[p] - 2.0 * scratch[p];
            scratch[p] = est;
            if self.candidates[p] != query && est < smallest[k - 1] {
                let at = smallest.partition_point(|&s| s <= est);
                smallest.insert(at, est);
                smallest.truncate(k);
            }
        }
        let slack = 1e-9 * (1.0 + qn + self.max_norm);
        let limit = smallest[k - 1] + 2.0 * slack;
        let mut close: Vec<(f64, usize)> = (0..n)
            .filter(|&p| scratch[p] <= limit && self.candidates[p] != query)
            .map(|p| {
                let c = self.candidates[p];
                (sq_dist_bounded(q, self.x.row(c), f64::INFINITY).unwrap_or(f64::INFINITY), c)
            })
            .collect();
        close.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        close.truncate(k);
        close.into_iter().map(|(_, c)| c).collect()
    }
}

pub fn smote(x: &Matrix, labels: &[u8], cfg: &ResampleConfig) -> Result<ResampledSet> {
    cfg.validate()?;
    let mut out = ResampledSet::identity(x, labels);
    let [n0, n1] = class_counts(labels);
    if n0 == n1 {
        return Ok(out);
    }
    let (minority, m, big) = if n1 < n0 { (1u8, n1, n0) } else { (0u8, n0, n1) };
    if m < 2 {
        return Err(Error::Resample(format!("minority class has {m} rows, SMOTE needs at least 2")));
    }
    let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == minority).collect();
    let k = cfg.smote_k.min(m - 1);
    let index = NeighbourIndex::new(x, &members);
    let neighbours: Vec<Vec<usize>> = members
        .par_iter()
        .map_init(Vec::new, |scratch, &i| index.query(i, k, scratch))
        .collect();

    let mut rng = seed::rng(cfg.rng_seed);
    let mut row = vec![0.0; x.n_cols()];
    for _ in 0..big - m {
        let pick = rng.gen_range(0..m);
        let base = x.row(members[pick]);
        let nb = &neighbours[pick];
        let other = x.row(nb[rng.gen_range(0..nb.len())]);
        let gap: f64 = rng.gen();
        for (r, (a, b)) in row.iter_mut().zip(base.iter().zip(other)) {
            *r = a + gap * (b - a);
        }
        out.x.push_row(&row)?;
        out.labels.push(minority);
        out.origin.push(RowOrigin::Synthetic);
    }
    Ok(out)
}

/// Single-pass ENN over all rows of `data`.
pub fn enn_clean(data: &ResampledSet, cfg: &ResampleConfig) -> Result<ResampledSet> {
    cfg.validate()?;
    let n = data.len();
    if n < cfg.enn_k + 1 {
        return Err(Error::Resample(format!("ENN with k={} needs at least {} rows, got {n}", cfg.enn_k, cfg.enn_k + 1)));
    }
    let all: Vec<usize> = (0..n).collect();
    let index = NeighbourIndex::new(&data.x, &all);
    let keep: Vec<bool> = (0..n)
        .into_par_iter()
        .map_init(Vec::new, |scratch, i| {
            let nb = index.query(i, cfg.enn_k, scratch);
            let ones = nb.iter().filter(|&&j| data.labels[j] == 1).count();
            let majority = u8::from(2 * ones > nb.len());
            majority == data.labels[i]
        })
        .collect();

    let kept: Vec<usize> = all.iter().copied().filter(|&i| keep[i]).collect();
    let removed: Vec<usize> = all.iter().copied().filter(|&i| !keep[i]).collect();
    let out = ResampledSet {
        x: data.x.select(&kept),
        labels: kept.iter().map(|&i| data.labels[i]).collect(),
        origin: kept.iter().map(|&i| data.origin[i]).collect(),
        removed,
    };
    let [c0, c1] = out.class_counts();
    if c0 == 0 || c1 == 0 {
        return Err(Error::Resample("ENN removed every row of one class".into()));
    }
    Ok(out)
}

pub fn smote_enn(x: &Matrix, labels: &[u8], cfg: &ResampleConfig) -> Result<ResampledSet> {
    let s = smote(x, labels, cfg)?;
    enn_clean(&s, cfg)
}

/// SMOTE-ENN with the fallbacks used during training: no resampling when
/// SMOTE cannot run, SMOTE output alone when ENN would empty a class.
pub fn smote_enn_or_fallback(x: &Matrix, labels: &[u8], cfg: &ResampleConfig) -> (ResampledSet, Option<String>) {
    let s = match smote(x, labels, cfg) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("{e}; training without resampling");
            return (ResampledSet::identity(x, labels), Some(e.to_string()));
        }
    };
    match enn_clean(&s, cfg) {
        Ok(r) => (r, None),
        Err(e) => {
            log::warn!("{e}; using SMOTE output without ENN");
            (s, Some(e.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn cfg(seed: u64) -> ResampleConfig {
        ResampleConfig {
            rng_seed: seed,
            ..Default::default()
        }
    }

    #[test]
    fn single_synthetic_point_on_segment() {
        let x = m(&[[0.0, 0.0], [1.0, 1.0], [5.0, 5.0], [6.0, 5.0], [5.0, 6.0]]);
        let s = smote(&x, &[0, 0, 1, 1, 1], &cfg(3)).unwrap();
        assert_eq!(s.n_synthetic(), 1);
        let p = s.x.row(5);
        assert_eq!(s.labels[5], 0);
        assert!(p[0] >= 0.0 && p[0] <= 1.0);
        assert!((p[0] - p[1]).abs() < 1e-15);
    }

    #[test]
    fn balanced_input_is_untouched() {
        let x = m(&[[0.0, 0.0], [1.0, 1.0], [5.0, 5.0], [6.0, 5.0]]);
        let s = smote(&x, &[0, 0, 1, 1], &cfg(1)).unwrap();
        assert_eq!(s.n_synthetic(), 0);
        assert_eq!(s.x, x);
    }

    #[test]
    fn smote_needs_two_minority_rows() {
        let x = m(&[[0.0, 0.0], [5.0, 5.0], [6.0, 5.0]]);
        assert!(matches!(smote(&x, &[0, 1, 1], &cfg(1)), Err(Error::Resample(_))));
    }

    #[test]
    fn isolated_point_removed() {
        let x = m(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.1, 0.1], [9.0, 9.0], [9.5, 9.0], [9.0, 9.5], [9.5, 9.5]]);
        let set = ResampledSet::identity(&x, &[1, 1, 1, 1, 0, 0, 0, 0, 0]);
        let out = enn_clean(&set, &cfg(0)).unwrap();
        assert_eq!(out.removed, [4]);
    }

    #[test]
    fn separated_clusters_keep_everything() {
        let x = m(&[[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [0.1, 0.1], [5.0, 5.0], [5.1, 5.0], [5.0, 5.1], [5.1, 5.1]]);
        let set = ResampledSet::identity(&x, &[0, 0, 0, 0, 1, 1, 1, 1]);
        let out = enn_clean(&set, &cfg(0)).unwrap();
        assert!(out.removed.is_empty());
        assert_eq!(out.len(), 8);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let x = m(&[[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]);
        assert_eq!(nearest(&x, 0, &[0, 1, 2, 3, 4], 3), [1, 2, 3]);
    }

    #[test]
    fn bounded_distance_matches_plain_sum() {
        let a: Vec<f64> = (0..70).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..70).map(|i| (i as f64 * 0.11).cos()).collect();
        let plain: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        let d = sq_dist_bounded(&a, &b, f64::INFINITY).unwrap();
        assert!((d - plain).abs() < 1e-12);
        assert!(sq_dist_bounded(&a, &b, plain * 0.5).is_none());
    }

    #[test]
    fn enn_rejects_tiny_input_and_even_k() {
        let x = m(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        let set = ResampledSet::identity(&x, &[0, 1, 1]);
        assert!(enn_clean(&set, &cfg(0)).is_err());
        let bad = ResampleConfig {
            enn_k: 2,
            ..cfg(0)
        };
        assert!(matches!(enn_clean(&set, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn fallback_when_smote_impossible() {
        let x = m(&[[0.0, 0.0], [5.0, 5.0], [6.0, 5.0], [5.0, 6.0]]);
        let (r, warn) = smote_enn_or_fallback(&x, &[0, 1, 1, 1], &cfg(0));
        assert!(warn.is_some());
        assert_eq!(r.len(), 4);
    }
}
