use rayon::prelude::*;

use crate::corpus::{CleanCorpus, Country};
use crate::error::{Error, Result};
use crate::features::{self, N_FEATURES};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    n_cols: usize,
}

impl Matrix {
    pub fn new(n_cols: usize) -> Self {
        Matrix {
            data: Vec::new(),
            n_cols,
        }
    }

    pub fn from_flat(data: Vec<f64>, n_cols: usize) -> Result<Self> {
        if n_cols == 0 || data.len() % n_cols != 0 {
            return Err(Error::Contract(format!(
                "{} values do not fill rows of width {n_cols}",
                data.len()
            )));
        }
        Ok(Matrix { data, n_cols })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Matrix::new(n_cols);
        for r in rows {
            m.push_row(r.as_ref())?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_cols {
            return Err(Error::Contract(format!(
                "row of width {} pushed into matrix of width {}",
                row.len(),
                self.n_cols
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        if self.n_cols == 0 {
            0
        } else {
            self.data.len() / self.n_cols
        }
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1))
    }

    /// New matrix holding the given rows in the given order.
    pub fn select(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            data,
            n_cols: self.n_cols,
        }
    }
}

/// Feature rows with binary labels (1 = England) and the name behind each row.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub x: Matrix,
    pub labels: Vec<u8>,
    pub names: Vec<String>,
    pub countries: Vec<Country>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        class_counts(&self.labels)
    }
}

pub fn class_counts(labels: &[u8]) -> [usize; 2] {
    let ones = labels.iter().filter(|&&l| l == 1).count();
    [labels.len() - ones, ones]
}

pub fn feature_matrix(names: &[&str]) -> Result<Matrix> {
    let mut data = vec![0.0; names.len() * N_FEATURES];
    data.par_chunks_mut(N_FEATURES)
        .zip(names.par_iter())
        .try_for_each(|(row, name)| features::extract_into(name, row))?;
    Matrix::from_flat(data, N_FEATURES)
}

/// England rows (label 1) followed by `other` rows (label 0).
pub fn extract_batch(corpus: &CleanCorpus, other: Country) -> Result<LabeledDataset> {
    if other == Country::England {
        return Err(Error::Config("England cannot be paired with itself".into()));
    }
    for c in [Country::England, other] {
        if corpus.count(c) == 0 {
            return Err(Error::Config(format!("corpus has no names for {c}")));
        }
    }
    let rows: Vec<_> = corpus.of(Country::England).chain(corpus.of(other)).collect();
    let names: Vec<&str> = rows.iter().map(|n| n.normalized.as_str()).collect();
    let x = feature_matrix(&names)?;
    Ok(LabeledDataset {
        x,
        labels: rows.iter().map(|n| u8::from(n.country == Country::England)).collect(),
        names: names.iter().map(|s| s.to_string()).collect(),
        countries: rows.iter().map(|n| n.country).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_clean_corpus, RawEntry};

    fn corpus() -> CleanCorpus {
        let mk = |c, t: &str| RawEntry {
            text: t.into(),
            country: c,
            source_line: 1,
        };
        build_clean_corpus(&[
            mk(Country::England, "York"),
            mk(Country::Rome, "Roma"),
            mk(Country::England, "Leeds"),
            mk(Country::Rome, "Ostia"),
            mk(Country::England, "Bath"),
            mk(Country::Wales, "Conwy"),
        ])
        .unwrap()
    }

    #[test]
    fn eng_rows_first() {
        let d = extract_batch(&corpus(), Country::Rome).unwrap();
        assert_eq!(d.labels, [1, 1, 1, 0, 0]);
        assert_eq!(d.names, ["york", "leeds", "bath", "roma", "ostia"]);
        for (i, n) in d.names.iter().enumerate() {
            assert_eq!(d.x.row(i), features::extract(n).unwrap().as_slice());
        }
    }

    #[test]
    fn bad_pairs() {
        assert!(extract_batch(&corpus(), Country::England).is_err());
        assert!(matches!(extract_batch(&corpus(), Country::France), Err(Error::Config(_))));
    }
}
