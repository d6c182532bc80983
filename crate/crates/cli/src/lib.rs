//! Batch front end for the `hierperc` estimators.

pub mod config;
pub mod run;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use hierperc::config::KeyValues;

use config::RunConfig;

/// Hierarchical long-range percolation estimators.
///
/// Every flag mirrors a config-file key of the same name; flags override the file.
#[derive(Debug, Parser)]
#[command(name = "hierperc", version)]
pub struct Cli {
    /// sample, two-point, susceptibility, typical-max, tail, delta-fit,
    /// triangle, phi, betac-scan or oracle-check.
    pub command: Option<String>,
    #[arg(long)]
    pub d: Option<String>,
    #[arg(long = "L")]
    pub side: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    /// Level range `a..b`.
    #[arg(long)]
    pub levels: Option<String>,
    #[arg(long)]
    pub replicates: Option<String>,
    /// Drawn at random and recorded in the manifest when absent.
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub workers: Option<String>,
    /// Cluster-size cap for the explorer.
    #[arg(long)]
    pub cap: Option<String>,
    /// Embedding depth for unrestricted two-point estimates.
    #[arg(long = "delta-embed")]
    pub delta_embed: Option<String>,
    /// `lo,hi`.
    #[arg(long)]
    pub bracket: Option<String>,
    /// `lo,hi`.
    #[arg(long)]
    pub window: Option<String>,
    /// direct, recursive or explorer (sample only).
    #[arg(long)]
    pub sampler: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// csv or jsonl.
    #[arg(long)]
    pub format: Option<String>,
    /// Flat `key=value` file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug)]
pub enum Failure {
    /// Bad input: exit status 1.
    Invalid(String),
    /// `oracle-check` found a deviation: exit status 2.
    CheckFailed(String),
}

impl Cli {
    /// Config file entries overridden by flags.
    pub fn key_values(&self) -> Result<KeyValues, String> {
        let mut kv = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                KeyValues::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?
            }
            None => KeyValues::default(),
        };
        let flags = [
            ("command", &self.command),
            ("d", &self.d),
            ("L", &self.side),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("n", &self.n),
            ("levels", &self.levels),
            ("replicates", &self.replicates),
            ("seed", &self.seed),
            ("workers", &self.workers),
            ("cap", &self.cap),
            ("delta-embed", &self.delta_embed),
            ("bracket", &self.bracket),
            ("window", &self.window),
            ("sampler", &self.sampler),
            ("format", &self.format),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                kv.insert(key, v);
            }
        }
        if let Some(out) = &self.out {
            kv.insert("out", out.display());
        }
        if !kv.contains("seed") {
            let seed: u64 = rand::random();
            log::warn!("no seed given, using {seed}");
            kv.insert("seed", seed);
        }
        Ok(kv)
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Runs one invocation; returns the text for stdout when there is no `--out`.
pub fn run(cli: &Cli) -> Result<Option<String>, Failure> {
    let kv = cli.key_values().map_err(Failure::Invalid)?;
    let cfg = RunConfig::from_key_values(&kv).map_err(|e| Failure::Invalid(e.to_string()))?;
    let start = Instant::now();
    let outcome = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Failure::Invalid(e.to_string()))?
            .install(|| run::execute(&cfg)),
        None => run::execute(&cfg),
    }
    .map_err(|e| Failure::Invalid(e.to_string()))?;
    let wall = start.elapsed().as_secs_f64();
    if let Some(s) = &outcome.summary {
        eprintln!("{s}");
    }
    let stdout = match &cfg.out {
        Some(path) => {
            let write = |p: &Path, text: &str| {
                std::fs::write(p, text).map_err(|e| Failure::Invalid(format!("{}: {e}", p.display())))
            };
            write(path, &outcome.body)?;
            write(&manifest_path(path), &cfg.manifest(wall, outcome.total_replicates))?;
            None
        }
        None => Some(outcome.body),
    };
    if outcome.check_failed {
        return Err(Failure::CheckFailed(outcome.summary.unwrap_or_default()));
    }
    Ok(stdout)
}
