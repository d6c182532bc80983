//! Subcommand execution.

use hierperc::estimators::{
    betac_lower_bound, compute_phi, default_window, estimate_betac, estimate_radial_two_point,
    estimate_susceptibility_levels, estimate_tail, fit_delta, scan_levels, triangle_sum, BetacOptions, CsvTable,
    TwoPointMode, TypicalMax, DEFAULT_EMBEDDING,
};
use hierperc::oracle::{enumerate_exact, sampler_deviations};
use hierperc::parallel::{try_map_reduce, Merge};
use hierperc::rng::tags;
use hierperc::samplers::{observe, ExplorerConfig, Observation, Restriction, SamplerKind};
use hierperc::{Error, EstimateRecord, Result, StreamKey};

use crate::config::{Command, Format, RunConfig, DEFAULT_CAP};

/// Deviation in standard errors above which `oracle-check` fails.
pub const ORACLE_SIGMA: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub body: String,
    pub total_replicates: u64,
    /// Set by `oracle-check` when a deviation exceeds [`ORACLE_SIGMA`].
    pub check_failed: bool,
    /// One-line human summary for stderr.
    pub summary: Option<String>,
}

enum Output {
    Table(CsvTable),
    Observations(Vec<(u64, Observation)>),
}

fn render(output: &Output, format: Format) -> String {
    match (output, format) {
        (Output::Table(t), Format::Csv) => t.render(),
        (Output::Table(t), Format::Jsonl) => t
            .rows()
            .iter()
            .map(|r| serde_json::to_string(r).expect("rows serialize") + "\n")
            .collect(),
        (Output::Observations(obs), Format::Jsonl) => obs
            .iter()
            .map(|(r, o)| serde_json::json!({ "replicate": r, "observation": o }).to_string() + "\n")
            .collect(),
        (Output::Observations(_), Format::Csv) => unreachable!("sample emits a table for csv"),
    }
}

struct SampleAcc {
    kroot: EstimateRecord,
    kmax: EstimateRecord,
    clusters: EstimateRecord,
    open_edges: EstimateRecord,
    raw: Vec<(u64, Observation)>,
}

impl Merge for SampleAcc {
    fn merge(&mut self, other: Self) {
        self.kroot.combine(&other.kroot);
        self.kmax.combine(&other.kmax);
        self.clusters.combine(&other.clusters);
        self.open_edges.combine(&other.open_edges);
        self.raw.merge(other.raw);
    }
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let params = &cfg.params;
    let beta = params.beta();
    let seed = cfg.seed;
    let key = StreamKey::new(seed);
    let reps = cfg.replicates;
    let mut table = CsvTable::new();
    let mut total = reps;
    let mut check_failed = false;
    let mut summary = None;

    match cfg.command {
        Command::Sample => {
            let n = cfg.level();
            let kind = cfg.sampler.unwrap_or(SamplerKind::Recursive);
            let keep = cfg.format == Format::Jsonl;
            let init = || SampleAcc {
                kroot: EstimateRecord::new(),
                kmax: EstimateRecord::new(),
                clusters: EstimateRecord::new(),
                open_edges: EstimateRecord::new(),
                raw: Vec::new(),
            };
            let acc = try_map_reduce(reps, &key.child(tags::SAMPLE), init, |acc, r, rng| {
                let obs = observe(kind, params, n, &[], rng)?;
                acc.kroot.push(obs.kroot as f64);
                if let Some(m) = obs.kmax {
                    acc.kmax.push(m as f64);
                }
                if let Some(c) = &obs.census {
                    acc.clusters.push(c.iter().map(|&(_, count)| count).sum::<u64>() as f64);
                }
                if let Some(e) = obs.open_edges {
                    acc.open_edges.push(e as f64);
                }
                if keep {
                    acc.raw.push((r, obs));
                }
                Ok::<(), Error>(())
            })?;
            if keep {
                return Ok(Outcome {
                    body: render(&Output::Observations(acc.raw), cfg.format),
                    total_replicates: reps,
                    check_failed,
                    summary,
                });
            }
            for (name, rec) in [
                ("mean_kroot", acc.kroot),
                ("mean_kmax", acc.kmax),
                ("mean_clusters", acc.clusters),
                ("mean_open_edges", acc.open_edges),
            ] {
                if rec.count() > 0 {
                    table.row(n, beta, &format!("{}:{name}", kind.name()), rec.mean(), rec.stderr(), rec.count(), seed);
                }
            }
        }
        Command::TwoPoint => {
            let mode = match cfg.delta_embed {
                Some(delta) => TwoPointMode::Unrestricted { delta },
                None => TwoPointMode::Restricted,
            };
            let tau = estimate_radial_two_point(params, cfg.level(), reps, mode, &key)?;
            table = tau.to_csv(seed);
        }
        Command::Susceptibility => {
            let (a, b) = cfg.level_range();
            for est in estimate_susceptibility_levels(params, a, b, reps, &key)? {
                for (name, rec) in [
                    ("mean_cluster_root", est.root),
                    ("mean_cluster", est.census),
                    ("difference", est.difference),
                ] {
                    table.row(est.n, beta, name, rec.mean(), rec.stderr(), rec.count(), seed);
                }
            }
        }
        Command::TypicalMax => {
            let (a, b) = cfg.level_range();
            let key = key.child(tags::TYPICAL_MAX);
            for st in scan_levels(params, a, b, reps, &key)? {
                let t = TypicalMax::from_stats(&st, &key.child(tags::BOOTSTRAP).child(st.n as u64));
                table.row(st.n, beta, "typical_max", t.estimate as f64, 0.0, reps, seed);
                table.row(st.n, beta, "typical_max_lo", t.interval.0 as f64, 0.0, reps, seed);
                table.row(st.n, beta, "typical_max_hi", t.interval.1 as f64, 0.0, reps, seed);
            }
        }
        Command::Tail | Command::DeltaFit => {
            let cap = cfg.cap.unwrap_or(DEFAULT_CAP);
            let restriction = cfg.n.map_or(Restriction::Infinite, Restriction::Ball);
            let curve = estimate_tail(params, ExplorerConfig::new(restriction, cap), reps, &key)?;
            let level = cfg.n.unwrap_or(0);
            table = curve.to_csv(beta, level, seed);
            if cfg.command == Command::DeltaFit {
                let window = cfg.window.unwrap_or_else(|| default_window(cap));
                let fit = fit_delta(&curve, window, &key.child(tags::BOOTSTRAP))?;
                table.row(level, beta, "delta", fit.delta, fit.stderr, reps, seed);
                table.row(level, beta, "delta_lo", fit.interval.0, 0.0, reps, seed);
                table.row(level, beta, "delta_hi", fit.interval.1, 0.0, reps, seed);
                table.row(level, beta, "slope", fit.slope, 0.0, reps, seed);
                summary = Some(format!(
                    "delta = {:.4} +/- {:.4} on window [{}, {}]",
                    fit.delta, fit.stderr, window.0, window.1
                ));
            }
        }
        Command::Triangle => {
            let n = cfg.level();
            let delta = cfg.delta_embed.unwrap_or(DEFAULT_EMBEDDING);
            let tau = estimate_radial_two_point(params, n, reps, TwoPointMode::Unrestricted { delta }, &key)?;
            let tri = triangle_sum(&tau, n, params)?;
            table = tau.to_csv(seed);
            for (m, &v) in tri.partial.iter().enumerate() {
                table.row(m as u32, beta, "triangle", v, 0.0, reps, seed);
            }
            for (i, &v) in tri.increments.iter().enumerate() {
                table.row(i as u32 + 1, beta, "triangle_increment", v, 0.0, reps, seed);
            }
        }
        Command::Phi => {
            let (a, b) = cfg.level_range();
            table.row(a, beta, "betac_lower_bound", betac_lower_bound(params), 0.0, 0, seed);
            for est in estimate_susceptibility_levels(params, a, b, reps, &key)? {
                let phi = compute_phi(params, est.n, &est.census);
                table.row(est.n, beta, "phi", phi.value, phi.stderr, reps, seed);
            }
        }
        Command::BetacScan => {
            let levels = cfg.level_range();
            let lb = betac_lower_bound(params);
            let bracket = cfg.bracket.unwrap_or((lb, 4.0 * lb));
            let options = BetacOptions {
                replicates: reps,
                ..BetacOptions::default()
            };
            let est = estimate_betac(params, levels, bracket, options, &key)?;
            let probes: u64 = est.report.crossings.iter().map(|c| c.probes as u64 + 2).sum();
            total = reps * (probes + 2);
            let (a, _) = levels;
            table.row(a, est.estimate, "betac", est.estimate, 0.0, reps, seed);
            table.row(a, est.estimate, "betac_lo", est.interval.0, 0.0, reps, seed);
            table.row(a, est.estimate, "betac_hi", est.interval.1, 0.0, reps, seed);
            table.row(a, est.estimate, "betac_lower_bound", lb, 0.0, 0, seed);
            table.extend(&est.report.to_csv(seed));
            summary = Some(format!(
                "beta_c ~ {:.6} in [{:.6}, {:.6}]",
                est.estimate, est.interval.0, est.interval.1
            ));
        }
        Command::OracleCheck => {
            let n = cfg.level();
            let law = enumerate_exact(params, n)?;
            let key = key.child(tags::ORACLE);
            let mut worst: Option<(f64, String)> = None;
            for (i, kind) in SamplerKind::ALL.into_iter().enumerate() {
                for d in sampler_deviations(params, &law, kind, reps, &key.child(i as u64))? {
                    let name = format!("{}:{}", kind.name(), d.observable);
                    table.row(n, beta, &name, d.observed, d.stderr, reps, seed);
                    table.row(n, beta, &format!("{name}:exact"), d.exact, 0.0, 0, seed);
                    table.row(n, beta, &format!("{name}:sigma"), d.sigma, 0.0, reps, seed);
                    if worst.as_ref().is_none_or(|(s, _)| d.sigma > *s) {
                        worst = Some((d.sigma, name));
                    }
                }
            }
            total = reps * SamplerKind::ALL.len() as u64;
            let (sigma, name) = worst.expect("at least one observable");
            check_failed = sigma > ORACLE_SIGMA;
            summary = Some(format!(
                "oracle-check {}: largest deviation {sigma:.2} sigma ({name})",
                if check_failed { "FAILED" } else { "passed" }
            ));
        }
    }
    Ok(Outcome {
        body: render(&Output::Table(table), cfg.format),
        total_replicates: total,
        check_failed,
        summary,
    })
}
