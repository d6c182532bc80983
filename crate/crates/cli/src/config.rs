//! Run configuration: flat `key=value` text, shared by config files, flags
//! and manifests.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use hierperc::config::KeyValues;
use hierperc::{Error, ModelParams, Result, SamplerKind};

const MODEL_KEYS: &[&str] = &["d", "L", "n", "alpha", "beta", "kernel", "c", "C", "table"];
const RUN_KEYS: &[&str] = &[
    "command",
    "levels",
    "replicates",
    "seed",
    "workers",
    "cap",
    "delta-embed",
    "bracket",
    "window",
    "sampler",
    "out",
    "format",
];
/// Written to manifests, ignored on input.
pub const INFO_KEYS: &[&str] = &["version", "wall_time", "total_replicates"];

pub const DEFAULT_REPLICATES: u64 = 10_000;
pub const DEFAULT_LEVEL: u32 = 4;
pub const DEFAULT_CAP: u64 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Sample,
    TwoPoint,
    Susceptibility,
    TypicalMax,
    Tail,
    DeltaFit,
    Triangle,
    Phi,
    BetacScan,
    OracleCheck,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::Sample,
        Command::TwoPoint,
        Command::Susceptibility,
        Command::TypicalMax,
        Command::Tail,
        Command::DeltaFit,
        Command::Triangle,
        Command::Phi,
        Command::BetacScan,
        Command::OracleCheck,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::TwoPoint => "two-point",
            Command::Susceptibility => "susceptibility",
            Command::TypicalMax => "typical-max",
            Command::Tail => "tail",
            Command::DeltaFit => "delta-fit",
            Command::Triangle => "triangle",
            Command::Phi => "phi",
            Command::BetacScan => "betac-scan",
            Command::OracleCheck => "oracle-check",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command {s:?}"))
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            _ => Err(format!("format must be csv or jsonl, got {s:?}")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        })
    }
}

fn parse_sampler(s: &str) -> std::result::Result<SamplerKind, String> {
    SamplerKind::ALL
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| format!("sampler must be direct, recursive or explorer, got {s:?}"))
}

/// Everything a run depends on. Absent optional fields take per-command defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    /// The lattice level is `n` when given, 0 otherwise.
    pub params: ModelParams,
    pub n: Option<u32>,
    pub levels: Option<(u32, u32)>,
    pub replicates: u64,
    pub seed: u64,
    pub workers: Option<usize>,
    pub cap: Option<u64>,
    pub delta_embed: Option<u32>,
    pub bracket: Option<(f64, f64)>,
    pub window: Option<(u64, u64)>,
    pub sampler: Option<SamplerKind>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

fn invalid(kv: &KeyValues, key: &str, reason: impl fmt::Display) -> Error {
    Error::Config {
        line: kv.line_of(key),
        reason: format!("{key}: {reason}"),
    }
}

fn parse_with<T>(
    kv: &KeyValues,
    key: &str,
    f: impl Fn(&str) -> std::result::Result<T, String>,
) -> Result<Option<T>> {
    kv.get(key).map(|v| f(v).map_err(|e| invalid(kv, key, e))).transpose()
}

fn pair<T: FromStr>(s: &str, sep: &str) -> std::result::Result<(T, T), String> {
    let (a, b) = s
        .split_once(sep)
        .ok_or_else(|| format!("expected two values separated by {sep:?}, got {s:?}"))?;
    let parse = |t: &str| t.trim().parse::<T>().map_err(|_| format!("cannot parse {t:?}"));
    Ok((parse(a)?, parse(b)?))
}

impl RunConfig {
    /// Reads a configuration; `d, L, alpha` default to `1, 2, 0.5` and `beta` to 0.
    /// Without a seed none is invented here: the caller supplies one.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let info: Vec<&str> = INFO_KEYS.to_vec();
        let allowed: Vec<&str> = MODEL_KEYS.iter().chain(RUN_KEYS).chain(&info).copied().collect();
        kv.check_keys(&allowed, &["J_"])?;

        let mut model = kv.clone();
        for key in RUN_KEYS.iter().chain(INFO_KEYS) {
            model.remove(key);
        }
        for (key, default) in [("d", "1"), ("L", "2"), ("alpha", "0.5")] {
            if !model.contains(key) {
                model.insert(key, default);
            }
        }
        let params = ModelParams::from_key_values(&model)?;
        let n: Option<u32> = kv.parse_opt("n")?;

        let command = parse_with(kv, "command", |s| s.parse())?
            .ok_or_else(|| invalid(kv, "command", "missing"))?;
        let levels = parse_with(kv, "levels", |s| pair::<u32>(s, ".."))?;
        if let Some((a, b)) = levels {
            if a > b {
                return Err(invalid(kv, "levels", format!("empty range {a}..{b}")));
            }
        }
        let replicates = kv.parse_opt::<u64>("replicates")?.unwrap_or(DEFAULT_REPLICATES);
        if replicates == 0 {
            return Err(invalid(kv, "replicates", "must be at least 1"));
        }
        let seed = kv.parse_opt::<u64>("seed")?.ok_or_else(|| invalid(kv, "seed", "missing"))?;
        let workers = kv.parse_opt::<usize>("workers")?;
        if workers == Some(0) {
            return Err(invalid(kv, "workers", "must be at least 1"));
        }
        let cap = kv.parse_opt::<u64>("cap")?;
        if cap == Some(0) {
            return Err(invalid(kv, "cap", "must be at least 1"));
        }
        let bracket = parse_with(kv, "bracket", |s| pair::<f64>(s, ","))?;
        if let Some((lo, hi)) = bracket {
            if !(0.0 <= lo && lo < hi && hi.is_finite()) {
                return Err(invalid(kv, "bracket", format!("need 0 <= lo < hi, got {lo},{hi}")));
            }
        }
        let window = parse_with(kv, "window", |s| pair::<u64>(s, ","))?;
        if let Some((lo, hi)) = window {
            if !(1 <= lo && lo < hi) {
                return Err(invalid(kv, "window", format!("need 1 <= lo < hi, got {lo},{hi}")));
            }
        }
        Ok(Self {
            command,
            params,
            n,
            levels,
            replicates,
            seed,
            workers,
            cap,
            delta_embed: kv.parse_opt("delta-embed")?,
            bracket,
            window,
            sampler: parse_with(kv, "sampler", parse_sampler)?,
            out: kv.get("out").map(PathBuf::from),
            format: parse_with(kv, "format", |s| s.parse())?.unwrap_or_default(),
        })
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::parse(&self.params.to_config_string()).expect("own output parses");
        if self.n.is_none() {
            kv.remove("n");
        }
        kv.insert("command", self.command);
        if let Some((a, b)) = self.levels {
            kv.insert("levels", format!("{a}..{b}"));
        }
        kv.insert("replicates", self.replicates);
        kv.insert("seed", self.seed);
        if let Some(w) = self.workers {
            kv.insert("workers", w);
        }
        if let Some(c) = self.cap {
            kv.insert("cap", c);
        }
        if let Some(d) = self.delta_embed {
            kv.insert("delta-embed", d);
        }
        if let Some((lo, hi)) = self.bracket {
            kv.insert("bracket", format!("{lo},{hi}"));
        }
        if let Some((lo, hi)) = self.window {
            kv.insert("window", format!("{lo},{hi}"));
        }
        if let Some(s) = self.sampler {
            kv.insert("sampler", s.name());
        }
        if let Some(out) = &self.out {
            kv.insert("out", out.display());
        }
        kv.insert("format", self.format);
        kv
    }

    /// Manifest text: the configuration followed by run facts.
    pub fn manifest(&self, wall_time: f64, total_replicates: u64) -> String {
        let mut kv = self.to_key_values();
        kv.insert("version", env!("CARGO_PKG_VERSION"));
        kv.insert("wall_time", format!("{wall_time:.3}"));
        kv.insert("total_replicates", total_replicates);
        let order: Vec<String> = MODEL_KEYS
            .iter()
            .map(|k| k.to_string())
            .chain(kv.keys().filter(|k| k.starts_with("J_")).map(String::from))
            .chain(RUN_KEYS.iter().chain(INFO_KEYS).map(|k| k.to_string()))
            .collect();
        kv.render(&order)
    }

    /// The level for single-level commands.
    pub fn level(&self) -> u32 {
        self.n.unwrap_or(match self.command {
            Command::OracleCheck => 2,
            _ => DEFAULT_LEVEL,
        })
    }

    /// The level range for multi-level commands.
    pub fn level_range(&self) -> (u32, u32) {
        self.levels.unwrap_or(match self.command {
            Command::BetacScan => (4, 8),
            _ => (self.level(), self.level()),
        })
    }
}
