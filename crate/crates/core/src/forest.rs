//! CART classification trees and a bagged random forest.
//!
//! Trees split on `x <= threshold`, thresholds being midpoints between
//! consecutive distinct values. Each node examines a random subset of
//! features (at least one non-constant one, as long as any remain) and
//! takes the split with the lowest weighted child Gini impurity; equal
//! impurities resolve to the lowest feature index, then the lowest
//! threshold. Leaves keep their class counts and a forest's probability is
//! the mean over trees of the leaf's class-1 frequency.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_counts, Matrix};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRule {
    /// `floor(sqrt(n_features))`
    #[default]
    SqrtTotal,
    All,
    Fixed(usize),
}

impl FeatureRule {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            FeatureRule::SqrtTotal => (n_features as f64).sqrt().floor() as usize,
            FeatureRule::All => n_features,
            FeatureRule::Fixed(k) => k,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub features_per_split: FeatureRule,
    pub bootstrap: bool,
    pub rng_seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 5,
            features_per_split: FeatureRule::SqrtTotal,
            bootstrap: true,
            rng_seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::Config("min_samples_split must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        counts: [u32; 2],
    },
}

/// Nodes in an arena; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(&self, x: &[f64]) -> [u32; 2] {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { counts } => return counts,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature as usize] <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let [c0, c1] = self.leaf(x);
        c1 as f64 / (c0 + c1) as f64
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, left as usize).max(go(t, right as usize)),
            }
        }
        go(self, 0)
    }
}

/// Gini impurity `1 - sum(p_i^2)` of a two-class count pair.
pub fn gini(counts: [u64; 2]) -> Result<f64> {
    let n = counts[0] + counts[1];
    if n == 0 {
        return Err(Error::Contract("gini of an empty node".into()));
    }
    let n = n as f64;
    let (p0, p1) = (counts[0] as f64 / n, counts[1] as f64 / n);
    Ok(1.0 - (p0 * p0 + p1 * p1))
}

/// `(l0² + l1²)/nl + (r0² + r1²)/nr` as an exact fraction. Weighted child
/// Gini equals `1 - score/n`, so a larger score is a better split.
#[derive(Debug, Clone, Copy)]
struct SplitScore {
    num: u128,
    den: u128,
}

impl SplitScore {
    fn new(left: [u64; 2], right: [u64; 2]) -> Self {
        let sq = |c: [u64; 2]| (c[0] as u128).pow(2) + (c[1] as u128).pow(2);
        let nl = (left[0] + left[1]) as u128;
        let nr = (right[0] + right[1]) as u128;
        SplitScore {
            num: sq(left) * nr + sq(right) * nl,
            den: nl * nr,
        }
    }

    fn cmp(&self, other: &SplitScore) -> std::cmp::Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: SplitScore,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        use std::cmp::Ordering::*;
        match self.score.cmp(&other.score) {
            Greater => true,
            Less => false,
            Equal => (self.feature, self.threshold) < (other.feature, other.threshold),
        }
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let t = a + (b - a) / 2.0;
    if t >= b {
        a
    } else {
        t
    }
}

struct Grower<'a> {
    x: &'a Matrix,
    labels: &'a [u8],
    cfg: &'a ForestConfig,
    mtry: usize,
    buf: Vec<(f64, u8)>,
    features: Vec<usize>,
}

impl Grower<'_> {
    /// Best threshold on one feature, `None` if constant over `samples`.
    fn scan_feature(&mut self, samples: &[usize], feature: usize, total: [u64; 2]) -> Option<Candidate> {
        self.buf.clear();
        self.buf.extend(samples.iter().map(|&i| (self.x.get(i, feature), self.labels[i])));
        self.buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        if self.buf[0].0 >= self.buf[self.buf.len() - 1].0 {
            return None;
        }
        let mut left = [0u64; 2];
        let mut best: Option<Candidate> = None;
        for w in 0..self.buf.len() - 1 {
            left[self.buf[w].1 as usize] += 1;
            let (a, b) = (self.buf[w].0, self.buf[w + 1].0);
            if a >= b {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let cand = Candidate {
                score: SplitScore::new(left, right),
                feature,
                threshold: midpoint(a, b),
            };
            if best.as_ref().is_none_or(|b| cand.beats(b)) {
                best = Some(cand);
            }
        }
        best
    }

    fn best_split(&mut self, samples: &[usize], total: [u64; 2], rng: &mut ChaCha8Rng) -> Option<Candidate> {
        let n_features = self.features.len();
        let mut best: Option<Candidate> = None;
        let mut visited = 0;
        let mut informative = 0;
        // Partial Fisher-Yates: features[..visited] is the random draw so far.
        while visited < n_features && (visited < self.mtry || informative == 0) {
            let j = rng.gen_range(visited..n_features);
            self.features.swap(visited, j);
            let f = self.features[visited];
            visited += 1;
            if let Some(c) = self.scan_feature(samples, f, total) {
                informative += 1;
                if best.as_ref().is_none_or(|b| c.beats(b)) {
                    best = Some(c);
                }
            }
        }
        best
    }
}

/// Grow one tree on the rows listed in `samples` (repeats allowed).
pub fn fit_tree(x: &Matrix, labels: &[u8], samples: &[usize], cfg: &ForestConfig, rng: &mut ChaCha8Rng) -> Tree {
    let mut g = Grower {
        x,
        labels,
        cfg,
        mtry: cfg.features_per_split.resolve(x.n_cols()),
        buf: Vec::with_capacity(samples.len()),
        features: (0..x.n_cols()).collect(),
    };
    let mut nodes = vec![TreeNode::Leaf { counts: [0, 0] }];
    let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, samples.to_vec(), 0)];
    while let Some((id, idx, depth)) = stack.pop() {
        let mut total = [0u64; 2];
        for &i in &idx {
            total[labels[i] as usize] += 1;
        }
        let leaf = TreeNode::Leaf {
            counts: [total[0] as u32, total[1] as u32],
        };
        let stop = total[0] == 0
            || total[1] == 0
            || idx.len() < g.cfg.min_samples_split
            || g.cfg.max_depth.is_some_and(|d| depth >= d);
        let split = if stop { None } else { g.best_split(&idx, total, rng) };
        let Some(c) = split else {
            nodes[id] = leaf;
            continue;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x.get(i, c.feature) <= c.threshold);
        let (li, ri) = (nodes.len(), nodes.len() + 1);
        nodes.push(leaf);
        nodes.push(leaf);
        nodes[id] = TreeNode::Split {
            feature: c.feature as u32,
            threshold: c.threshold,
            left: li as u32,
            right: ri as u32,
        };
        stack.push((ri, r, depth + 1));
        stack.push((li, l, depth + 1));
    }
    Tree { nodes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub config: ForestConfig,
    pub schema_version: String,
    pub n_features: usize,
}

pub fn fit_forest(x: &Matrix, labels: &[u8], cfg: &ForestConfig, schema_version: &str) -> Result<ForestModel> {
    cfg.validate()?;
    let n = labels.len();
    if n != x.n_rows() {
        return Err(Error::Contract(format!("{} labels for {} rows", n, x.n_rows())));
    }
    if n < 2 {
        return Err(Error::Training(format!("need at least 2 rows, got {n}")));
    }
    let [c0, c1] = class_counts(labels);
    if c0 == 0 || c1 == 0 {
        return Err(Error::Training("training data has a single class".into()));
    }
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::derive(cfg.rng_seed, &[t as u64]));
            let samples: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_tree(x, labels, &samples, cfg, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        config: cfg.clone(),
        schema_version: schema_version.to_string(),
        n_features: x.n_cols(),
    })
}

const MAGIC: &[u8; 4] = b"TPRF";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ForestConfig,
    schema_version: String,
    n_features: usize,
    n_trees: usize,
}

impl ForestModel {
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::Contract(format!(
                "model expects {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        Ok(self.trees.iter().map(|t| t.predict_proba(x)).sum::<f64>() / self.trees.len() as f64)
    }

    pub fn predict_rows(&self, x: &Matrix) -> Result<Vec<f64>> {
        (0..x.n_rows()).into_par_iter().map(|i| self.predict_proba(x.row(i))).collect()
    }

    pub fn check_schema(&self, version: &str) -> Result<()> {
        if self.schema_version != version {
            return Err(Error::Contract(format!(
                "model trained on feature schema `{}`, input uses `{version}`",
                self.schema_version
            )));
        }
        Ok(())
    }

    /// Binary encoding: magic `TPRF`, format version, a length-prefixed JSON
    /// header (config, schema version, feature count, tree count), then per
    /// tree a node count followed by fixed-width little-endian nodes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            schema_version: self.schema_version.clone(),
            n_features: self.n_features,
            n_trees: self.trees.len(),
        })
        .expect("header serialises");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.trees {
            out.extend_from_slice(&(t.nodes.len() as u32).to_le_bytes());
            for n in &t.nodes {
                match *n {
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        out.push(0);
                        out.extend_from_slice(&feature.to_le_bytes());
                        out.extend_from_slice(&threshold.to_bits().to_le_bytes());
                        out.extend_from_slice(&left.to_le_bytes());
                        out.extend_from_slice(&right.to_le_bytes());
                    }
                    TreeNode::Leaf { counts } => {
                        out.push(1);
                        out.extend_from_slice(&counts[0].to_le_bytes());
                        out.extend_from_slice(&counts[1].to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        fn take<const N: usize>(b: &mut &[u8]) -> Result<[u8; N]> {
            let mut buf = [0u8; N];
            b.read_exact(&mut buf)
                .map_err(|_| Error::Data("truncated model file".into()))?;
            Ok(buf)
        }
        let u32_ = |b: &mut &[u8]| take::<4>(b).map(u32::from_le_bytes);
        if &take::<4>(&mut bytes)? != MAGIC {
            return Err(Error::Data("not a forest model file".into()));
        }
        let version = u32_(&mut bytes)?;
        if version != FORMAT_VERSION {
            return Err(Error::Data(format!("unsupported model format version {version}")));
        }
        let hlen = u32_(&mut bytes)? as usize;
        if bytes.len() < hlen {
            return Err(Error::Data("truncated model header".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[..hlen])?;
        bytes = &bytes[hlen..];
        let mut trees = Vec::with_capacity(header.n_trees);
        for _ in 0..header.n_trees {
            let n = u32_(&mut bytes)? as usize;
            let mut nodes = Vec::with_capacity(n);
            for _ in 0..n {
                let node = match take::<1>(&mut bytes)?[0] {
                    0 => TreeNode::Split {
                        feature: u32_(&mut bytes)?,
                        threshold: f64::from_bits(u64::from_le_bytes(take::<8>(&mut bytes)?)),
                        left: u32_(&mut bytes)?,
                        right: u32_(&mut bytes)?,
                    },
                    1 => TreeNode::Leaf {
                        counts: [u32_(&mut bytes)?, u32_(&mut bytes)?],
                    },
                    t => return Err(Error::Data(format!("bad node tag {t}"))),
                };
                nodes.push(node);
            }
            for node in &nodes {
                if let TreeNode::Split { feature, left, right, .. } = *node {
                    if feature as usize >= header.n_features || left as usize >= n || right as usize >= n {
                        return Err(Error::Data("model node index out of range".into()));
                    }
                }
            }
            trees.push(Tree { nodes });
        }
        if !bytes.is_empty() {
            return Err(Error::Data("trailing bytes after model".into()));
        }
        Ok(ForestModel {
            trees,
            config: header.config,
            schema_version: header.schema_version,
            n_features: header.n_features,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(min_split: usize) -> ForestConfig {
        ForestConfig {
            n_trees: 1,
            min_samples_split: min_split,
            features_per_split: FeatureRule::All,
            bootstrap: false,
            ..Default::default()
        }
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini([5, 5]).unwrap(), 0.5);
        assert_eq!(gini([10, 0]).unwrap(), 0.0);
        assert_eq!(gini([3, 1]).unwrap(), 0.375);
        assert!(gini([0, 0]).is_err());
    }

    #[test]
    fn pure_node_is_a_leaf() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        let t = fit_tree(&x, &[1, 1, 1], &[0, 1, 2], &full(2), &mut seed::rng(0));
        assert_eq!(t.nodes, [TreeNode::Leaf { counts: [0, 3] }]);
    }

    #[test]
    fn small_node_is_a_leaf() {
        let x = Matrix::from_rows(&[[0.0], [0.1], [0.9], [1.0]]).unwrap();
        let t = fit_tree(&x, &[0, 0, 1, 1], &[0, 1, 2, 3], &full(5), &mut seed::rng(0));
        assert_eq!(t.nodes, [TreeNode::Leaf { counts: [2, 2] }]);
    }

    #[test]
    fn leaf_probability() {
        let t = Tree {
            nodes: vec![TreeNode::Leaf { counts: [3, 1] }],
        };
        assert_eq!(t.predict_proba(&[0.0]), 0.25);
    }

    #[test]
    fn forest_averages_trees() {
        let one = Tree {
            nodes: vec![TreeNode::Leaf { counts: [0, 4] }],
        };
        let zero = Tree {
            nodes: vec![TreeNode::Leaf { counts: [4, 0] }],
        };
        let model = |trees| ForestModel {
            trees,
            config: ForestConfig::default(),
            schema_version: "t".into(),
            n_features: 1,
        };
        assert_eq!(model(vec![one.clone(), one.clone()]).predict_proba(&[0.0]).unwrap(), 1.0);
        assert_eq!(model(vec![one, zero]).predict_proba(&[0.0]).unwrap(), 0.5);
    }

    #[test]
    fn midpoint_never_reaches_upper_value() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let t = midpoint(a, b);
        assert!(a <= t && t < b);
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(matches!(
            fit_forest(&x, &[1, 1], &ForestConfig::default(), "t"),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn schema_mismatch() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let m = fit_forest(&x, &[0, 1], &full(2), "a").unwrap();
        assert!(m.check_schema("a").is_ok());
        assert!(matches!(m.check_schema("b"), Err(Error::Contract(_))));
        assert!(m.predict_proba(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn corrupt_model_bytes() {
        assert!(ForestModel::from_bytes(b"nope").is_err());
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let bytes = fit_forest(&x, &[0, 1], &full(2), "a").unwrap().to_bytes();
        assert!(ForestModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
