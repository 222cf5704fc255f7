//! Constructed corpora with a known answer.
//!
//! England names end in one suffix family and every other country's names in
//! a disjoint one, so a working pipeline separates them almost perfectly.

use std::collections::BTreeSet;

use rand::Rng;

use crate::corpus::{build_clean_corpus, CleanCorpus, Country, RawEntry};
use crate::error::Result;
use crate::seed;

const ONSETS: &[&str] = &["b", "c", "d", "f", "g", "h", "k", "l", "m", "p", "r", "s", "t", "v", "w"];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u"];
pub const ENGLAND_SUFFIXES: &[&str] = &["ington", "ham", "ley", "don"];
pub const OTHER_SUFFIXES: &[&str] = &["ia", "ola", "ese", "ica"];

fn stem(rng: &mut impl Rng) -> String {
    let mut s = String::new();
    for _ in 0..rng.gen_range(1..=3) {
        s.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
        s.push_str(NUCLEI[rng.gen_range(0..NUCLEI.len())]);
    }
    s
}

/// `n_england` England names and `n_other` names for each of `others`.
pub fn suffix_entries(n_england: usize, n_other: usize, others: &[Country], rng_seed: u64) -> Vec<RawEntry> {
    let mut rng = seed::rng(rng_seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let groups = std::iter::once((Country::England, n_england, ENGLAND_SUFFIXES))
        .chain(others.iter().map(|&c| (c, n_other, OTHER_SUFFIXES)));
    for (country, n, suffixes) in groups {
        let mut made = 0;
        while made < n {
            let name = format!("{}{}", stem(&mut rng), suffixes[rng.gen_range(0..suffixes.len())]);
            if seen.insert(name.clone()) {
                made += 1;
                out.push(RawEntry {
                    text: name,
                    country,
                    source_line: made,
                });
            }
        }
    }
    out
}

pub fn suffix_corpus(n_england: usize, n_other: usize, others: &[Country], rng_seed: u64) -> Result<CleanCorpus> {
    build_clean_corpus(&suffix_entries(n_england, n_other, others, rng_seed))
}
