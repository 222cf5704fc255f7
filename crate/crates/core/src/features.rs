//! The 263-slot letter-placement feature vector.
//!
//! Slot layout (schema `letter-placement-v1`):
//!
//! | range     | slots                                                   |
//! |-----------|---------------------------------------------------------|
//! | 0..208    | letter at 1st..4th and last..4th-last position, 8 × 26  |
//! | 208..214  | vowel present anywhere (a e i o u y)                    |
//! | 214..220  | vowel present ÷ length                                  |
//! | 220       | vowel occurrences ÷ length                              |
//! | 221..241  | consonant present anywhere (20 consonants)              |
//! | 241..261  | consonant present ÷ length                              |
//! | 261       | length                                                  |
//! | 262       | Shannon entropy of the letter distribution, bits/letter |
//!
//! For names shorter than eight letters the prefix and suffix windows may
//! address the same characters; both are filled independently.

use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: &str = "letter-placement-v1";
pub const N_FEATURES: usize = 263;

pub const VOWELS: [u8; 6] = *b"aeiouy";
pub const CONSONANTS: [u8; 20] = *b"bcdfghjklmnpqrstvwxz";

const N_POSITIONS: usize = 8;
const POS_BASE: usize = 0;
const VBIN_BASE: usize = POS_BASE + N_POSITIONS * 26;
const VRATE_BASE: usize = VBIN_BASE + 6;
const TOTAL_VRATE: usize = VRATE_BASE + 6;
const CBIN_BASE: usize = TOTAL_VRATE + 1;
const CRATE_BASE: usize = CBIN_BASE + 20;
const LENGTH: usize = CRATE_BASE + 20;
const ENTROPY: usize = LENGTH + 1;

const _: () = assert!(ENTROPY + 1 == N_FEATURES);

/// A letter position counted from the start (`from_end == false`) or the
/// end of the name, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Position {
    pub from_end: bool,
    pub offset: u8,
}

impl Position {
    /// The eight positions in slot order: 1st-4th, then last-4th-last.
    pub const ALL: [Position; N_POSITIONS] = [
        Position::start(1),
        Position::start(2),
        Position::start(3),
        Position::start(4),
        Position::end(1),
        Position::end(2),
        Position::end(3),
        Position::end(4),
    ];

    pub const fn start(offset: u8) -> Self {
        Position {
            from_end: false,
            offset,
        }
    }

    pub const fn end(offset: u8) -> Self {
        Position {
            from_end: true,
            offset,
        }
    }

    /// The letter of `name` at this position, if the name is long enough.
    pub fn letter_in(self, name: &[u8]) -> Option<u8> {
        let k = self.offset as usize;
        if k == 0 || k > name.len() {
            return None;
        }
        Some(if self.from_end { name[name.len() - k] } else { name[k - 1] })
    }

    fn prefix(self) -> String {
        match (self.from_end, self.offset) {
            (false, k) => format!("pos{k}"),
            (true, 1) => "last".to_string(),
            (true, k) => format!("last{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    PosLetter { position: Position, letter: u8 },
    VowelBinary(u8),
    VowelRate(u8),
    TotalVowelRate,
    ConsonantBinary(u8),
    ConsonantRate(u8),
    Length,
    Entropy,
}

impl fmt::Display for SlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SlotKind::PosLetter { position, letter } => {
                write!(f, "{}_{}", position.prefix(), letter as char)
            }
            SlotKind::VowelBinary(c) => write!(f, "vbin_{}", c as char),
            SlotKind::VowelRate(c) => write!(f, "vrate_{}", c as char),
            SlotKind::TotalVowelRate => f.write_str("total_vrate"),
            SlotKind::ConsonantBinary(c) => write!(f, "cbin_{}", c as char),
            SlotKind::ConsonantRate(c) => write!(f, "crate_{}", c as char),
            SlotKind::Length => f.write_str("length"),
            SlotKind::Entropy => f.write_str("entropy"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeatureSchema {
    pub version: &'static str,
    pub slots: Vec<SlotKind>,
}

impl FeatureSchema {
    pub fn v1() -> Self {
        let mut slots = Vec::with_capacity(N_FEATURES);
        for position in Position::ALL {
            for letter in b'a'..=b'z' {
                slots.push(SlotKind::PosLetter { position, letter });
            }
        }
        slots.extend(VOWELS.iter().map(|&v| SlotKind::VowelBinary(v)));
        slots.extend(VOWELS.iter().map(|&v| SlotKind::VowelRate(v)));
        slots.push(SlotKind::TotalVowelRate);
        slots.extend(CONSONANTS.iter().map(|&c| SlotKind::ConsonantBinary(c)));
        slots.extend(CONSONANTS.iter().map(|&c| SlotKind::ConsonantRate(c)));
        slots.push(SlotKind::Length);
        slots.push(SlotKind::Entropy);
        debug_assert_eq!(slots.len(), N_FEATURES);
        FeatureSchema {
            version: SCHEMA_VERSION,
            slots,
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.slots.iter().map(ToString::to_string).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.to_string() == name)
    }

    pub fn count(&self, pred: impl Fn(&SlotKind) -> bool) -> usize {
        self.slots.iter().filter(|s| pred(s)).count()
    }
}

#[derive(Clone, PartialEq)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl fmt::Debug for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nz: Vec<_> = self.0.iter().enumerate().filter(|(_, v)| **v != 0.0).collect();
        f.debug_struct("FeatureVector").field("nonzero", &nz).finish()
    }
}

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, slot: SlotKind) -> f64 {
        self.0[slot_index(slot)]
    }
}

pub fn slot_index(slot: SlotKind) -> usize {
    let letter_idx = |c: u8| (c - b'a') as usize;
    let vowel_idx = |c: u8| VOWELS.iter().position(|&v| v == c).expect("not a vowel");
    let cons_idx = |c: u8| CONSONANTS.iter().position(|&v| v == c).expect("not a consonant");
    match slot {
        SlotKind::PosLetter { position, letter } => {
            let p = Position::ALL.iter().position(|&q| q == position).expect("unknown position");
            POS_BASE + p * 26 + letter_idx(letter)
        }
        SlotKind::VowelBinary(c) => VBIN_BASE + vowel_idx(c),
        SlotKind::VowelRate(c) => VRATE_BASE + vowel_idx(c),
        SlotKind::TotalVowelRate => TOTAL_VRATE,
        SlotKind::ConsonantBinary(c) => CBIN_BASE + cons_idx(c),
        SlotKind::ConsonantRate(c) => CRATE_BASE + cons_idx(c),
        SlotKind::Length => LENGTH,
        SlotKind::Entropy => ENTROPY,
    }
}

pub fn is_vowel(c: u8) -> bool {
    VOWELS.contains(&c)
}

/// Shannon entropy (base 2) of the character distribution of `name`.
pub fn entropy_bits(name: &[u8]) -> f64 {
    let mut counts = [0usize; 26];
    for &c in name {
        counts[(c - b'a') as usize] += 1;
    }
    let n = name.len() as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&k| k > 0)
        .map(|&k| {
            let p = k as f64 / n;
            -p * p.log2()
        })
        .sum();
    // -0.0 for single-letter distributions
    h.max(0.0)
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || !name.bytes().all(|b| b.is_ascii_lowercase()) {
        return Err(Error::Contract(format!("`{name}` is not a normalised a-z name")));
    }
    Ok(())
}

/// Write the feature vector for `name` into `out` (length [`N_FEATURES`]).
pub fn extract_into(name: &str, out: &mut [f64]) -> Result<()> {
    check_name(name)?;
    if out.len() != N_FEATURES {
        return Err(Error::Contract(format!("output buffer has {} slots, expected {N_FEATURES}", out.len())));
    }
    out.fill(0.0);
    let bytes = name.as_bytes();
    let len = bytes.len() as f64;

    for (p, position) in Position::ALL.iter().enumerate() {
        if let Some(c) = position.letter_in(bytes) {
            out[POS_BASE + p * 26 + (c - b'a') as usize] = 1.0;
        }
    }

    let mut present = [false; 26];
    let mut vowel_count = 0usize;
    for &c in bytes {
        present[(c - b'a') as usize] = true;
        if is_vowel(c) {
            vowel_count += 1;
        }
    }
    for (i, &v) in VOWELS.iter().enumerate() {
        if present[(v - b'a') as usize] {
            out[VBIN_BASE + i] = 1.0;
            out[VRATE_BASE + i] = 1.0 / len;
        }
    }
    out[TOTAL_VRATE] = vowel_count as f64 / len;
    for (i, &c) in CONSONANTS.iter().enumerate() {
        if present[(c - b'a') as usize] {
            out[CBIN_BASE + i] = 1.0;
            out[CRATE_BASE + i] = 1.0 / len;
        }
    }
    out[LENGTH] = len;
    out[ENTROPY] = entropy_bits(bytes);
    Ok(())
}

pub fn extract(name: &str) -> Result<FeatureVector> {
    let mut v = [0.0; N_FEATURES];
    extract_into(name, &mut v)?;
    Ok(FeatureVector(v))
}

/// Feature matrix export: header `name,<263 slot names>`, one row per name.
pub fn write_csv<'a>(path: &Path, names: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let schema = FeatureSchema::v1();
    writeln!(w, "name,{}", schema.names().join(",")).map_err(io)?;
    for name in names {
        let v = extract(name)?;
        write!(w, "{name}").map_err(io)?;
        for x in v.0 {
            write!(w, ",{x}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}
