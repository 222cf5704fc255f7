use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use toponym::{Country, Error, Result};
use toponym_cli::{
    cmd_clean, cmd_report, cmd_run, cmd_score, format_score_lines, parse_pairs, ReportInputs, ReportKind,
    RunConfig, METRICS_FILE, MODELS_DIR, SCORES_FILE,
};

/// Score place names by how English they look, using England-vs-Other
/// random forests over letter-placement features.
#[derive(Parser)]
#[command(name = "toponym", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize and deduplicate the per-country name files of a manifest.
    Clean {
        /// Corpus manifest (TOML). Taken from --config when omitted.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate every England-vs-Other classifier.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated country codes, e.g. `DEN,ROM`.
        #[arg(long)]
        pairs: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build tables from a saved score table.
    Report {
        /// Score table; defaults to `scores.csv` in the config's output directory.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        which: Which,
        /// Name for the per-classifier breakdown (repeatable).
        #[arg(long = "name")]
        names: Vec<String>,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
        /// Derivation extract (CSV with name, languages, derivation columns).
        #[arg(long)]
        derivations: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, default_value_t = 10)]
        bottom: usize,
        #[arg(long, default_value_t = 0.5)]
        cutpoint: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score names from a file (one per line) with saved fold models.
    Score {
        #[arg(long)]
        models: PathBuf,
        names: PathBuf,
        #[arg(long)]
        pairs: Option<String>,
        /// Write the listing here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Rankings,
    Similarity,
    Correlations,
    Metrics,
    Breakdown,
    OeOn,
    All,
}

impl From<Which> for ReportKind {
    fn from(w: Which) -> Self {
        match w {
            Which::Rankings => ReportKind::Rankings,
            Which::Similarity => ReportKind::Similarity,
            Which::Correlations => ReportKind::Correlations,
            Which::Metrics => ReportKind::Metrics,
            Which::Breakdown => ReportKind::Breakdown,
            Which::OeOn => ReportKind::OeOn,
            Which::All => ReportKind::All,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("cannot set up {n} workers: {e}")))?;
    }
    match cli.command {
        Command::Clean { manifest, config, out } => {
            let cfg = config.as_deref().map(RunConfig::load).transpose()?;
            let manifest = manifest
                .or_else(|| cfg.as_ref().and_then(|c| c.manifest.clone()))
                .ok_or_else(|| Error::Config("clean needs --manifest or a config with `manifest`".into()))?;
            let out = out
                .or_else(|| cfg.as_ref().map(|c| c.out.clone()))
                .unwrap_or_else(|| PathBuf::from("out"));
            let corpus = cmd_clean(&manifest, &out)?;
            print!("{}", corpus.counts_table());
        }
        Command::Run { config, seed, pairs, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(p) = pairs {
                cfg.pairs = Some(parse_pairs(&p)?);
            }
            if let Some(o) = out {
                cfg.out = o;
            }
            let summary = cmd_run(&cfg)?;
            eprint!("{}", toponym::report::metrics_markdown(&summary.metrics, Some(summary.manifest.ensemble_accuracy)));
        }
        Command::Report {
            scores,
            config,
            which,
            names,
            metrics,
            models,
            derivations,
            top,
            bottom,
            cutpoint,
            out,
        } => {
            let cfg = config.as_deref().map(RunConfig::load).transpose()?;
            let base = cfg.as_ref().map(|c| c.out.clone());
            let from_base = |file: &str| base.as_ref().map(|b| b.join(file)).filter(|p| p.exists());
            let scores = scores
                .or_else(|| from_base(SCORES_FILE))
                .ok_or_else(|| Error::Config("report needs --scores or a config whose run produced one".into()))?;
            let inputs = ReportInputs {
                metrics: metrics.or_else(|| from_base(METRICS_FILE)),
                names,
                models: models.or_else(|| from_base(MODELS_DIR)),
                derivations: derivations.or_else(|| cfg.as_ref().and_then(|c| c.derivations.clone())),
                top_n: top,
                bottom_n: bottom,
                cutpoint,
            };
            let out = out
                .or_else(|| base.map(|b| b.join("reports")))
                .unwrap_or_else(|| PathBuf::from("reports"));
            for p in cmd_report(&scores, which.into(), &inputs, &out)? {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Score { models, names, pairs, out } => {
            let pairs: Option<Vec<Country>> = pairs.as_deref().map(parse_pairs).transpose()?;
            let (pairs, lines) = cmd_score(&models, &names, pairs.as_deref())?;
            let text = format_score_lines(&pairs, &lines);
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
