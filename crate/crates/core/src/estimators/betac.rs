//! `φ_β(Λ_n)`, the lower bound on `β_c`, and the crossing estimate of `β_c`
//! from `R_n(β) = L^{-αn} E_β|K_n|`.

use crate::error::{Error, Result};
use crate::kernel::ModelParams;
use crate::parallel::try_map_reduce;
use crate::real::Real;
use crate::rng::{tags, StreamKey};
use crate::samplers::RecursiveSampler;

use super::record::EstimateRecord;
use super::report::CsvTable;
use super::scan::{scan_levels, LevelStats};
use super::susceptibility::SusceptibilityEstimate;
use super::typical_max::TypicalMax;

/// `(L^α - 1) / C`.
pub fn betac_lower_bound<R: Real>(params: &ModelParams<R>) -> R {
    let l = R::from_count(params.lattice().side() as u64);
    (l.powf(params.alpha()) - R::one()) / params.upper_constant()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiEstimate<R> {
    pub value: R,
    pub stderr: R,
}

/// `φ̂ = Ê|K_n| · T_n(β)`.
pub fn compute_phi<R: Real>(params: &ModelParams<R>, n: u32, susceptibility: &EstimateRecord<R>) -> PhiEstimate<R> {
    let tail = params.tail_sum(n).value;
    PhiEstimate {
        value: susceptibility.mean() * tail,
        stderr: susceptibility.stderr() * tail,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetacOptions {
    /// Replicates per bisection probe.
    pub replicates: u64,
    pub max_probes: u32,
    /// Bisection stops once the bracket is narrower than this fraction of its midpoint.
    pub tolerance: f64,
    /// Bisection stops once `|R_{n+1} - R_n|` is below this many standard errors.
    pub stop_sigma: f64,
}

impl Default for BetacOptions {
    fn default() -> Self {
        Self {
            replicates: 20_000,
            max_probes: 24,
            tolerance: 1e-3,
            stop_sigma: 2.0,
        }
    }
}

/// Crossing of `R_n` and `R_{n+1}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossing {
    pub lower: u32,
    pub beta: f64,
    pub probes: u32,
    /// `R_{n+1} - R_n` at the returned `β`.
    pub difference: f64,
    pub difference_stderr: f64,
}

/// One row of the scaling report: level `n` at one `β`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow<R> {
    pub n: u32,
    pub beta: R,
    pub stats: LevelStats<R>,
    pub typical_max: TypicalMax,
    /// `L^{-αn} Ê|K_n|`.
    pub r: EstimateRecord<R>,
    /// `M̂_n^2 L^{-(d+α)n}`.
    pub s: R,
    /// `|A_{n+1}| t_{n+1} / (β L^{-αn} Ê|K_n|^2)`, where `t_{n+1}` is the
    /// connection probability to the annulus inside `Λ_{n+1}`.
    pub annulus_constant: Option<R>,
}

impl<R: Real> ScalingRow<R> {
    pub fn susceptibility(&self) -> SusceptibilityEstimate<R> {
        SusceptibilityEstimate::from_stats(&self.stats)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingReport<R> {
    pub betas: Vec<R>,
    pub rows: Vec<ScalingRow<R>>,
    pub crossings: Vec<Crossing>,
}

impl<R: Real> ScalingReport<R> {
    pub fn rows_at(&self, beta: R) -> impl Iterator<Item = &ScalingRow<R>> {
        self.rows.iter().filter(move |r| r.beta == beta)
    }

    pub fn to_csv(&self, seed: u64) -> CsvTable {
        let mut t = CsvTable::new();
        for c in &self.crossings {
            t.row(c.lower, c.beta, "crossing", c.beta, 0.0, c.probes as u64, seed);
        }
        for row in &self.rows {
            let beta = row.beta.to_f64_lossy();
            let reps = row.stats.replicates();
            let f = |x: R| x.to_f64_lossy();
            t.row(row.n, beta, "mean_cluster", f(row.stats.census.mean()), f(row.stats.census.stderr()), reps, seed);
            t.row(row.n, beta, "mean_cluster_root", f(row.stats.root.mean()), f(row.stats.root.stderr()), reps, seed);
            t.row(row.n, beta, "typical_max", row.typical_max.estimate as f64, 0.0, reps, seed);
            t.row(row.n, beta, "typical_max_lo", row.typical_max.interval.0 as f64, 0.0, reps, seed);
            t.row(row.n, beta, "typical_max_hi", row.typical_max.interval.1 as f64, 0.0, reps, seed);
            t.row(row.n, beta, "r", f(row.r.mean()), f(row.r.stderr()), reps, seed);
            t.row(row.n, beta, "s", f(row.s), 0.0, reps, seed);
            if let Some(a) = row.annulus_constant {
                t.row(row.n, beta, "annulus_constant", f(a), 0.0, reps, seed);
            }
        }
        t
    }
}

/// Level statistics, typical maxima and scaling ratios at each `β`.
pub fn scaling_report<R: Real>(
    params: &ModelParams<R>,
    betas: &[R],
    from: u32,
    to: u32,
    replicates: u64,
    key: &StreamKey,
) -> Result<ScalingReport<R>> {
    let key = key.child(tags::REPORT);
    let l = R::from_count(params.lattice().side() as u64);
    let d = R::from_count(params.lattice().dim() as u64);
    let alpha = params.alpha();
    let mut rows = Vec::new();
    for (i, &beta) in betas.iter().enumerate() {
        let p = params.with_beta(beta)?;
        let beta_key = key.child(i as u64);
        let stats = scan_levels(&p, from, to, replicates, &beta_key)?;
        for (j, st) in stats.iter().enumerate() {
            let n = st.n;
            let nf = R::from_count(n as u64);
            let typical_max = TypicalMax::from_stats(st, &beta_key.child(tags::BOOTSTRAP).child(n as u64));
            let m = R::from_count(typical_max.estimate);
            let annulus_constant = stats.get(j + 1).and_then(|next| {
                let chi = st.census.mean();
                let denom = beta * l.powf(-alpha * nf) * chi * chi;
                let a = R::from_u128(p.lattice().annulus_size(n as i64 + 1).ok()?)?;
                (denom > R::zero()).then(|| a * next.top_connection.mean() / denom)
            });
            rows.push(ScalingRow {
                n,
                beta,
                stats: st.clone(),
                r: st.census.scaled(l.powf(-alpha * nf)),
                s: m * m * l.powf(-(d + alpha) * nf),
                typical_max,
                annulus_constant,
            });
        }
    }
    Ok(ScalingReport {
        betas: betas.to_vec(),
        rows,
        crossings: Vec::new(),
    })
}

/// Paired estimate of `R_{n+1}(β) - R_n(β)` with census estimators.
fn crossing_difference<R: Real>(
    params: &ModelParams<R>,
    n: u32,
    replicates: u64,
    key: &StreamKey,
) -> Result<EstimateRecord<f64>> {
    let sampler = RecursiveSampler::new(params, n + 1)?;
    let lat = params.lattice().with_level(n + 1);
    let l = lat.side() as f64;
    let alpha = params.alpha().to_f64_lossy();
    let (v0, v1) = (lat.with_level(n).volume()? as f64, lat.volume()? as f64);
    let (w0, w1) = (l.powf(-alpha * n as f64), l.powf(-alpha * (n + 1) as f64));
    try_map_reduce(replicates, key, EstimateRecord::new, |acc, _, rng| {
        let levels = sampler.nested(n, n + 1, &[], rng)?;
        let r0 = levels[0].sum_of_squares() as f64 / v0 * w0;
        let r1 = levels[1].sum_of_squares() as f64 / v1 * w1;
        acc.push(r1 - r0);
        Ok::<(), Error>(())
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BetacEstimate<R> {
    /// Median of the pairwise crossings.
    pub estimate: f64,
    /// Smallest and largest crossing.
    pub interval: (f64, f64),
    pub report: ScalingReport<R>,
}

impl<R> BetacEstimate<R> {
    pub fn width(&self) -> f64 {
        self.interval.1 - self.interval.0
    }
}

/// Crossing estimate of `β_c` from consecutive levels in `levels`, by
/// bisection inside `bracket`. Every probe of one level pair reuses the same
/// random streams, so the estimated difference is a smooth function of `β`.
pub fn estimate_betac<R: Real>(
    params: &ModelParams<R>,
    levels: (u32, u32),
    bracket: (f64, f64),
    options: BetacOptions,
    key: &StreamKey,
) -> Result<BetacEstimate<R>> {
    let (n_min, n_max) = levels;
    if n_min >= n_max {
        return Err(Error::Estimator(format!("need at least two levels, got {n_min}..{n_max}")));
    }
    if !(bracket.0 < bracket.1) || bracket.0 < 0.0 {
        return Err(Error::Estimator(format!("invalid bracket [{}, {}]", bracket.0, bracket.1)));
    }
    let key = key.child(tags::BETAC);
    let at = |beta: f64| params.with_beta(R::lit(beta));

    // R_{n_max} must exceed R_{n_min} at the top of the bracket.
    let top = scan_levels(&at(bracket.1)?, n_min, n_max, options.replicates, &key.child(u64::MAX))?;
    let l = params.lattice().side() as f64;
    let alpha = params.alpha().to_f64_lossy();
    let r = |s: &LevelStats<R>| s.census.mean().to_f64_lossy() * l.powf(-alpha * s.n as f64);
    if r(top.last().expect("levels")) <= r(&top[0]) {
        return Err(Error::NoSignChange {
            lower: n_min,
            upper: n_max,
            lo: bracket.0,
            hi: bracket.1,
        });
    }

    let mut crossings = Vec::new();
    for n in n_min..n_max {
        let pair_key = key.child(n as u64);
        let diff = |beta: f64| crossing_difference(&at(beta)?, n, options.replicates, &pair_key);
        let (f_lo, f_hi) = (diff(bracket.0)?, diff(bracket.1)?);
        if !(f_lo.mean() < 0.0 && f_hi.mean() > 0.0) {
            return Err(Error::NoSignChange {
                lower: n,
                upper: n + 1,
                lo: bracket.0,
                hi: bracket.1,
            });
        }
        let (mut a, mut b) = bracket;
        let mut probes = 2;
        let mut last = f_lo;
        let mut found = None;
        while probes < options.max_probes + 2 {
            let mid = 0.5 * (a + b);
            let f = diff(mid)?;
            probes += 1;
            last = f;
            if f.mean().abs() < options.stop_sigma * f.stderr() {
                found = Some(mid);
                break;
            }
            if f.mean() < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
            if b - a < options.tolerance * 0.5 * (a + b) {
                break;
            }
        }
        let beta = found.unwrap_or(0.5 * (a + b));
        log::info!("crossing of levels {n} and {}: beta = {beta}", n + 1);
        crossings.push(Crossing {
            lower: n,
            beta,
            probes: probes - 2,
            difference: last.mean(),
            difference_stderr: last.stderr(),
        });
    }
    let mut betas: Vec<f64> = crossings.iter().map(|c| c.beta).collect();
    betas.sort_by(f64::total_cmp);
    let k = betas.len();
    let estimate = if k % 2 == 1 {
        betas[k / 2]
    } else {
        0.5 * (betas[k / 2 - 1] + betas[k / 2])
    };
    let interval = (betas[0], betas[k - 1]);
    let mut report = scaling_report(params, &[R::lit(estimate)], n_min, n_max, options.replicates, &key)?;
    report.crossings = crossings;
    Ok(BetacEstimate {
        estimate,
        interval,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::estimate_susceptibility;
    use crate::lattice::LatticeParams;
    use crate::oracle::exact_phi;
    use approx::assert_relative_eq;

    fn params(d: u32, l: u32, alpha: f64, beta: f64) -> ModelParams<f64> {
        ModelParams::power_law(LatticeParams::new(d, l, 0).unwrap(), alpha, beta).unwrap()
    }

    #[test]
    fn lower_bound_values() {
        assert_relative_eq!(betac_lower_bound(&params(1, 2, 0.5, 0.0)), 0.414_213_562_373_095_05, max_relative = 1e-15);
        assert_relative_eq!(betac_lower_bound(&params(2, 4, 1.0, 0.0)), 3.0, max_relative = 1e-15);
        let lat = LatticeParams::new(1, 2, 0).unwrap();
        let mut last = f64::INFINITY;
        for c in [1.0, 10.0, 1e3, 1e6] {
            let p = ModelParams::level_table(lat, 0.5, 0.0, &[0.5 * 2f64.powf(-1.5)], 0.1, c).unwrap();
            let b = betac_lower_bound(&p);
            assert!(b < last);
            last = b;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn phi_against_oracle() {
        let p = params(1, 2, 0.5, 0.4);
        let chi = estimate_susceptibility(&p, 1, 200_000, &StreamKey::new(2)).unwrap();
        let phi = compute_phi(&p, 1, &chi.census);
        let exact = exact_phi(&p, 1).unwrap();
        assert!((phi.value - exact).abs() < 3.0 * phi.stderr, "{phi:?} {exact}");
        let zero = params(1, 2, 0.5, 0.0);
        let chi0 = estimate_susceptibility(&zero, 3, 10, &StreamKey::new(2)).unwrap();
        assert_eq!(compute_phi(&zero, 3, &chi0.census).value, 0.0);
        let mut last = -1.0;
        for i in 1..8 {
            let p = params(1, 2, 0.5, 0.15 * i as f64);
            let chi = estimate_susceptibility(&p, 4, 2_000, &StreamKey::new(2)).unwrap();
            let phi = compute_phi(&p, 4, &chi.census).value;
            assert!(phi > last);
            last = phi;
        }
    }

    #[test]
    fn crossing_on_small_levels() {
        let p = params(1, 2, 0.5, 0.0);
        let opts = BetacOptions {
            replicates: 2_000,
            max_probes: 12,
            ..BetacOptions::default()
        };
        let est = estimate_betac(&p, (2, 4), (0.05, 4.0), opts, &StreamKey::new(1)).unwrap();
        assert_eq!(est.report.crossings.len(), 2);
        assert!(est.interval.0 <= est.estimate && est.estimate <= est.interval.1);
        assert!(est.estimate > 0.05 && est.estimate < 4.0);
        assert_eq!(est.report.rows.len(), 3);
        assert!(est.report.rows.iter().all(|r| r.r.mean() > 0.0 && r.s > 0.0));
        assert!(matches!(
            estimate_betac(&p, (2, 4), (0.01, 0.02), opts, &StreamKey::new(1)),
            Err(Error::NoSignChange { .. })
        ));
    }
}
