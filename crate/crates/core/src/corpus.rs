//! Loading, normalising and de-duplicating per-country place-name lists.
//!
//! Every accepted name is reduced to lowercase `a`-`z`. Multi-word and
//! hyphenated names are rejected outright. Duplicates are removed within a
//! country first (first occurrence kept) and then across countries, where a
//! name shared by two or more countries is removed from all of them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub const TRANSLIT_TABLE_VERSION: &str = "1";
const TRANSLIT_TABLE: &str = include_str!("../data/translit_v1.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Country {
    #[serde(rename = "ENG")]
    England,
    #[serde(rename = "DEN")]
    Denmark,
    #[serde(rename = "NOR")]
    Norway,
    #[serde(rename = "SWE")]
    Sweden,
    #[serde(rename = "IRE")]
    Ireland,
    #[serde(rename = "SCO")]
    Scotland,
    #[serde(rename = "WAL")]
    Wales,
    #[serde(rename = "ROM")]
    Rome,
    #[serde(rename = "GER")]
    Germany,
    #[serde(rename = "FRA")]
    France,
    #[serde(rename = "NET")]
    Netherlands,
}

impl Country {
    pub const ALL: [Country; 11] = [
        Country::England,
        Country::Denmark,
        Country::Norway,
        Country::Sweden,
        Country::Ireland,
        Country::Scotland,
        Country::Wales,
        Country::Rome,
        Country::Germany,
        Country::France,
        Country::Netherlands,
    ];

    /// The ten countries paired against England, in canonical column order.
    pub const OTHERS: [Country; 10] = [
        Country::Denmark,
        Country::Norway,
        Country::Sweden,
        Country::Ireland,
        Country::Scotland,
        Country::Wales,
        Country::Rome,
        Country::Germany,
        Country::France,
        Country::Netherlands,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Country::England => "ENG",
            Country::Denmark => "DEN",
            Country::Norway => "NOR",
            Country::Sweden => "SWE",
            Country::Ireland => "IRE",
            Country::Scotland => "SCO",
            Country::Wales => "WAL",
            Country::Rome => "ROM",
            Country::Germany => "GER",
            Country::France => "FRA",
            Country::Netherlands => "NET",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Country::England => "England",
            Country::Denmark => "Denmark",
            Country::Norway => "Norway",
            Country::Sweden => "Sweden",
            Country::Ireland => "Ireland",
            Country::Scotland => "Scotland",
            Country::Wales => "Wales",
            Country::Rome => "Rome",
            Country::Germany => "Germany",
            Country::France => "France",
            Country::Netherlands => "Netherlands",
        }
    }

    /// Column label for the England-vs-`self` classifier, e.g. `Eng-Den`.
    pub fn pair_label(self) -> String {
        let name = self.display_name();
        format!("Eng-{}", &name[..3])
    }
}

impl fmt::Display for Country {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Country {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        Country::ALL
            .iter()
            .copied()
            .find(|c| c.code() == up)
            .ok_or_else(|| Error::Config(format!("unknown country code `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEntry {
    pub text: String,
    pub country: Country,
    pub source_line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceName {
    pub raw: String,
    pub normalized: String,
    pub country: Country,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    MultiWord,
    Hyphenated,
    DuplicateWithin,
    DuplicateCross,
    EmptyAfterNormalize,
    InvalidUtf8,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::MultiWord => "multi_word",
            DropReason::Hyphenated => "hyphenated",
            DropReason::DuplicateWithin => "duplicate_within",
            DropReason::DuplicateCross => "duplicate_cross",
            DropReason::EmptyAfterNormalize => "empty_after_normalize",
            DropReason::InvalidUtf8 => "invalid_utf8",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropRecord {
    pub raw: String,
    pub country: Country,
    pub source_line: usize,
    pub reason: DropReason,
    /// Offending character for `EmptyAfterNormalize` rejections.
    pub detail: Option<String>,
}

/// Why [`normalize`] refused a name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rejection {
    pub reason: DropReason,
    pub offending: Option<char>,
}

impl Rejection {
    fn new(reason: DropReason) -> Self {
        Rejection {
            reason,
            offending: None,
        }
    }
}

fn translit_table() -> &'static HashMap<char, &'static str> {
    static TABLE: OnceLock<HashMap<char, &'static str>> = OnceLock::new();
    TABLE.get_or_init(|| {
        TRANSLIT_TABLE
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .filter_map(|l| {
                let (from, to) = l.split_once('\t')?;
                let mut chars = from.chars();
                let c = chars.next()?;
                Some((c, to.trim()))
            })
            .collect()
    })
}

fn is_hyphen(c: char) -> bool {
    matches!(c, '-' | '\u{2010}'..='\u{2015}' | '\u{2212}' | '\u{FE63}' | '\u{FF0D}')
}

fn is_stripped(c: char) -> bool {
    matches!(c, '\'' | '.' | '`' | '\u{2018}' | '\u{2019}' | '\u{02BC}' | '\u{00B4}')
}

/// Reduce a name to lowercase `a`-`z`.
///
/// Whitespace inside the trimmed text rejects as multi-word and any dash
/// rejects as hyphenated, both checked before transliteration. Apostrophes
/// and periods are dropped. Everything else goes through lowercasing, NFKD
/// decomposition with combining marks removed, and the bundled override
/// table; a character with no mapping rejects the whole name.
pub fn normalize(text: &str) -> std::result::Result<String, Rejection> {
    let text = text.trim();
    if text.chars().any(char::is_whitespace) {
        return Err(Rejection::new(DropReason::MultiWord));
    }
    if text.chars().any(is_hyphen) {
        return Err(Rejection::new(DropReason::Hyphenated));
    }
    let table = translit_table();
    let mut out = String::with_capacity(text.len());
    let lowered = text.to_lowercase();
    for c in lowered.chars().filter(|&c| !is_stripped(c)).nfkd() {
        if is_combining_mark(c) {
            continue;
        }
        if c.is_ascii_lowercase() {
            out.push(c);
        } else if let Some(rep) = table.get(&c) {
            out.push_str(rep);
        } else {
            return Err(Rejection {
                reason: DropReason::EmptyAfterNormalize,
                offending: Some(c),
            });
        }
    }
    if out.is_empty() {
        return Err(Rejection::new(DropReason::EmptyAfterNormalize));
    }
    Ok(out)
}

/// Restricts loading to rows whose type column holds one of `values`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeFilter {
    pub column: usize,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    /// Single-byte field delimiter; `None` reads one name per line.
    pub delimiter: Option<char>,
    pub name_column: usize,
    pub has_header: bool,
    pub type_filter: Option<TypeFilter>,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedFile {
    pub entries: Vec<RawEntry>,
    /// Lines that could not be decoded as UTF-8.
    pub rejected: Vec<DropRecord>,
}

pub fn load_country_file(path: &Path, country: Country, opts: &LoadOptions) -> Result<LoadedFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut out = LoadedFile::default();
    let push = |field: &[u8], line: usize, out: &mut LoadedFile| match std::str::from_utf8(field) {
        Ok(s) => {
            let t = s.trim();
            if !t.is_empty() {
                out.entries.push(RawEntry {
                    text: t.to_string(),
                    country,
                    source_line: line,
                });
            }
        }
        Err(_) => out.rejected.push(DropRecord {
            raw: String::from_utf8_lossy(field).trim().to_string(),
            country,
            source_line: line,
            reason: DropReason::InvalidUtf8,
            detail: None,
        }),
    };

    match opts.delimiter {
        None => {
            let skip = usize::from(opts.has_header);
            for (i, line) in bytes.split(|&b| b == b'\n').enumerate().skip(skip) {
                let line = line.strip_suffix(b"\r").unwrap_or(line);
                push(line, i + 1, &mut out);
            }
        }
        Some(d) => {
            if !d.is_ascii() {
                return Err(Error::Config(format!("delimiter `{d}` must be a single ASCII character")));
            }
            let mut rdr = csv::ReaderBuilder::new()
                .delimiter(d as u8)
                .has_headers(opts.has_header)
                .flexible(true)
                .from_reader(bytes.as_slice());
            for rec in rdr.byte_records() {
                let rec = rec?;
                let line = rec.position().map_or(0, |p| p.line() as usize);
                if let Some(tf) = &opts.type_filter {
                    let keep = rec
                        .get(tf.column)
                        .and_then(|f| std::str::from_utf8(f).ok())
                        .map(|f| tf.values.iter().any(|v| v.eq_ignore_ascii_case(f.trim())))
                        .unwrap_or(false);
                    if !keep {
                        continue;
                    }
                }
                if let Some(field) = rec.get(opts.name_column) {
                    push(field, line, &mut out);
                }
            }
        }
    }
    Ok(out)
}

/// One country's source file in a corpus manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub country: Country,
    pub path: PathBuf,
    #[serde(flatten)]
    pub options: LoadOptions,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub countries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Load every file, resolving relative paths against `base`.
    pub fn load(&self, base: &Path) -> Result<(Vec<RawEntry>, Vec<DropRecord>)> {
        let mut entries = Vec::new();
        let mut rejected = Vec::new();
        for m in &self.countries {
            let path = if m.path.is_absolute() {
                m.path.clone()
            } else {
                base.join(&m.path)
            };
            if !path.exists() {
                return Err(Error::Config(format!(
                    "{} file not found: {}",
                    m.country,
                    path.display()
                )));
            }
            let loaded = load_country_file(&path, m.country, &m.options)?;
            entries.extend(loaded.entries);
            rejected.extend(loaded.rejected);
        }
        Ok((entries, rejected))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CleanCorpus {
    /// Grouped by country in [`Country::ALL`] order, file order within a country.
    pub names: Vec<PlaceName>,
    pub counts: BTreeMap<Country, usize>,
    pub drop_log: Vec<DropRecord>,
}

pub fn build_clean_corpus(entries: &[RawEntry]) -> Result<CleanCorpus> {
    let mut drop_log = Vec::new();
    let mut per_country: BTreeMap<Country, Vec<(PlaceName, usize)>> = BTreeMap::new();
    let mut seen: HashSet<(Country, String)> = HashSet::new();

    for e in entries {
        per_country.entry(e.country).or_default();
        let drop = |reason, detail: Option<String>| DropRecord {
            raw: e.text.clone(),
            country: e.country,
            source_line: e.source_line,
            reason,
            detail,
        };
        match normalize(&e.text) {
            Err(rej) => {
                if let Some(c) = rej.offending {
                    log::debug!("{} line {}: no mapping for {:?} in {:?}", e.country, e.source_line, c, e.text);
                }
                drop_log.push(drop(rej.reason, rej.offending.map(String::from)));
            }
            Ok(norm) => {
                if seen.insert((e.country, norm.clone())) {
                    per_country.get_mut(&e.country).unwrap().push((
                        PlaceName {
                            raw: e.text.clone(),
                            normalized: norm,
                            country: e.country,
                        },
                        e.source_line,
                    ));
                } else {
                    drop_log.push(drop(DropReason::DuplicateWithin, None));
                }
            }
        }
    }

    let mut owners: HashMap<&str, usize> = HashMap::new();
    for names in per_country.values() {
        for (n, _) in names {
            *owners.entry(n.normalized.as_str()).or_default() += 1;
        }
    }
    let shared: HashSet<String> = owners
        .into_iter()
        .filter(|&(_, k)| k > 1)
        .map(|(n, _)| n.to_string())
        .collect();

    let mut names = Vec::new();
    let mut counts = BTreeMap::new();
    for (country, list) in per_country {
        let mut kept = 0;
        for (n, line) in list {
            if shared.contains(&n.normalized) {
                drop_log.push(DropRecord {
                    raw: n.raw,
                    country,
                    source_line: line,
                    reason: DropReason::DuplicateCross,
                    detail: None,
                });
            } else {
                names.push(n);
                kept += 1;
            }
        }
        if kept == 0 {
            return Err(Error::Config(format!("country {country} has no names left after cleaning")));
        }
        counts.insert(country, kept);
    }

    Ok(CleanCorpus {
        names,
        counts,
        drop_log,
    })
}

impl CleanCorpus {
    pub fn of(&self, country: Country) -> impl Iterator<Item = &PlaceName> {
        self.names.iter().filter(move |n| n.country == country)
    }

    pub fn count(&self, country: Country) -> usize {
        self.counts.get(&country).copied().unwrap_or(0)
    }

    /// The kept names re-expressed as raw entries (normalised text).
    pub fn as_entries(&self) -> Vec<RawEntry> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| RawEntry {
                text: n.normalized.clone(),
                country: n.country,
                source_line: i + 1,
            })
            .collect()
    }

    /// Canonical corpus file: `CODE<TAB>name` per line.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut buf = String::new();
        for n in &self.names {
            buf.push_str(n.country.code());
            buf.push('\t');
            buf.push_str(&n.normalized);
            buf.push('\n');
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_tsv(path: &Path) -> Result<CleanCorpus> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut names = Vec::new();
        let mut counts = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (code, name) = line.split_once('\t').ok_or_else(|| {
                Error::Data(format!("{}:{}: expected CODE<TAB>name", path.display(), i + 1))
            })?;
            let country: Country = code.parse()?;
            if name.is_empty() || !name.bytes().all(|b| b.is_ascii_lowercase()) {
                return Err(Error::Data(format!(
                    "{}:{}: `{name}` is not a normalised name",
                    path.display(),
                    i + 1
                )));
            }
            *counts.entry(country).or_insert(0) += 1;
            names.push(PlaceName {
                raw: name.to_string(),
                normalized: name.to_string(),
                country,
            });
        }
        names.sort_by_key(|n| n.country);
        Ok(CleanCorpus {
            names,
            counts,
            drop_log: Vec::new(),
        })
    }

    /// Drop log as CSV with columns `raw,country,reason`.
    pub fn write_drop_log(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["raw", "country", "reason"])?;
        for d in &self.drop_log {
            w.write_record([d.raw.as_str(), d.country.code(), d.reason.as_str()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Per-country counts as an aligned two-column table.
    pub fn counts_table(&self) -> String {
        let mut s = String::new();
        s.push_str("Country       Sample Size\n");
        for (c, n) in &self.counts {
            s.push_str(&format!("{:<13} {:>11}\n", c.display_name(), n));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationEntry {
    pub name: String,
    pub languages: String,
    pub derivation: String,
}

/// Read a derivation extract: CSV with `name`, `languages` and `derivation`
/// header columns (case-insensitive; `language` is accepted too).
pub fn read_derivations(path: &Path) -> Result<Vec<DerivationEntry>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            k => Error::Data(format!("{k:?}")),
        })?;
    let headers = rdr.headers()?.clone();
    let col = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
            .ok_or_else(|| Error::Data(format!("{}: missing `{}` column", path.display(), names[0])))
    };
    let (ni, li, di) = (col(&["name"])?, col(&["languages", "language"])?, col(&["derivation"])?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let name = rec.get(ni).unwrap_or("").trim();
        if name.is_empty() {
            continue;
        }
        out.push(DerivationEntry {
            name: name.to_string(),
            languages: rec.get(li).unwrap_or("").to_string(),
            derivation: rec.get(di).unwrap_or("").to_string(),
        });
    }
    Ok(out)
}

/// Selection rules for a historical-derivation sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationRecipe {
    pub label: String,
    pub include_langs: Vec<String>,
    pub require_in_derivation: Vec<String>,
    pub exclude_in_derivation: Vec<String>,
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl DerivationRecipe {
    pub fn old_english() -> Self {
        DerivationRecipe {
            label: "OE".into(),
            include_langs: strings(&[
                "Old English",
                "Anglian",
                "Kentish",
                "Mercian",
                "Northumbrian",
                "West-Saxon",
            ]),
            require_in_derivation: strings(&["Old English"]),
            exclude_in_derivation: strings(&["Norse", "Scand"]),
        }
    }

    pub fn old_norse() -> Self {
        DerivationRecipe {
            label: "ON".into(),
            include_langs: strings(&[
                "Old Norse",
                "Old Danish",
                "Old East Scandinavian",
                "Old Norwegian",
                "Old West Scandinavian",
            ]),
            require_in_derivation: Vec::new(),
            exclude_in_derivation: strings(&[
                "English",
                "Saxon",
                "Mercian",
                "Northumbrian",
                "Kentish",
                "Anglian",
            ]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalName {
    pub raw: String,
    pub normalized: String,
}

/// Names drawn from outside the training corpus, under a free-form label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalSample {
    pub label: String,
    pub names: Vec<ExternalName>,
}

fn contains_ci(haystack: &str, needle: &str) -> bool {
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

pub fn filter_derivation(entries: &[DerivationEntry], recipe: &DerivationRecipe) -> ExternalSample {
    let mut seen = HashSet::new();
    let names: Vec<ExternalName> = entries
        .iter()
        .filter(|e| recipe.include_langs.iter().any(|l| contains_ci(&e.languages, l)))
        .filter(|e| recipe.require_in_derivation.iter().all(|r| contains_ci(&e.derivation, r)))
        .filter(|e| !recipe.exclude_in_derivation.iter().any(|x| contains_ci(&e.derivation, x)))
        .filter(|e| {
            let n = e.name.trim();
            !n.contains('/') && !n.chars().any(|c| c.is_whitespace() || is_hyphen(c))
        })
        .filter_map(|e| {
            let norm = normalize(&e.name).ok()?;
            seen.insert(norm.clone()).then(|| ExternalName {
                raw: e.name.trim().to_string(),
                normalized: norm,
            })
        })
        .collect();
    if names.is_empty() {
        log::warn!("derivation recipe {} selected no names", recipe.label);
    }
    ExternalSample {
        label: recipe.label.clone(),
        names,
    }
}
