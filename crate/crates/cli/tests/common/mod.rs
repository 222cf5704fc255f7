#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use toponym::synth;
use toponym::Country;

/// Per-country name files plus a manifest for a suffix-grammar corpus.
pub fn write_synthetic_manifest(dir: &Path, n_england: usize, n_other: usize, others: &[Country], seed: u64) -> PathBuf {
    let entries = synth::suffix_entries(n_england, n_other, others, seed);
    let mut manifest = String::new();
    for c in std::iter::once(Country::England).chain(others.iter().copied()) {
        let file = format!("{}.txt", c.code().to_lowercase());
        let names: Vec<&str> = entries.iter().filter(|e| e.country == c).map(|e| e.text.as_str()).collect();
        fs::write(dir.join(&file), names.join("\n") + "\n").unwrap();
        manifest.push_str(&format!("[[countries]]\ncountry = \"{}\"\npath = \"{file}\"\n\n", c.code()));
    }
    let path = dir.join("manifest.toml");
    fs::write(&path, manifest).unwrap();
    path
}

/// Config running `n_trees` trees per forest over the manifest in `dir`.
pub fn write_config(dir: &Path, n_trees: usize, extra: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(
        &path,
        format!("manifest = \"manifest.toml\"\nout = \"out\"\nseed = 7\n{extra}\n[forest]\nn_trees = {n_trees}\n"),
    )
    .unwrap();
    path
}

pub fn toponym(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toponym"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}
