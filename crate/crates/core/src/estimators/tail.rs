//! Survival curve `P(|K| ≥ m)` of the origin's cluster and the power-law fit
//! `P(|K| ≥ m) ≈ m^{-1/δ}`.

use crate::error::{Error, Result};
use crate::kernel::ModelParams;
use crate::parallel::{map_reduce, Merge};
use crate::real::Real;
use crate::rng::{tags, StreamKey};
use crate::samplers::{ClusterSize, Explorer, ExplorerConfig};

use super::report::CsvTable;
use super::{percentile, resample_histogram};

pub const MIN_FIT_POINTS: usize = 4;
pub const DELTA_RESAMPLES: u64 = 200;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailPoint {
    pub m: u64,
    pub survival: f64,
    pub stderr: f64,
}

/// Survival at dyadic sizes `1, 2, 4, ... ≤ cap`.
#[derive(Clone, Debug, PartialEq)]
pub struct TailCurve {
    pub cap: u64,
    pub replicates: u64,
    /// `histogram[s]` = uncensored replicates with `min(|K|, cap) = s`.
    pub histogram: Vec<u64>,
    /// Replicates stopped at the cap with unexplored vertices left.
    pub censored: u64,
    pub points: Vec<TailPoint>,
}

fn dyadic_up_to(cap: u64) -> impl Iterator<Item = u64> {
    (0..64).map(|b| 1u64 << b).take_while(move |&m| m <= cap)
}

impl TailCurve {
    pub fn from_histogram(cap: u64, histogram: Vec<u64>, censored: u64) -> Self {
        let replicates = histogram.iter().sum::<u64>() + censored;
        let r = replicates as f64;
        let points = dyadic_up_to(cap)
            .map(|m| {
                let hits = histogram[m as usize..].iter().sum::<u64>() + censored;
                let p = hits as f64 / r;
                TailPoint {
                    m,
                    survival: p,
                    stderr: (p * (1.0 - p) / r).sqrt(),
                }
            })
            .collect();
        Self {
            cap,
            replicates,
            histogram,
            censored,
            points,
        }
    }

    /// A curve given by its values alone, without replicate data.
    pub fn from_survival(cap: u64, points: &[(u64, f64)]) -> Self {
        Self {
            cap,
            replicates: 0,
            histogram: Vec::new(),
            censored: 0,
            points: points
                .iter()
                .map(|&(m, survival)| TailPoint {
                    m,
                    survival,
                    stderr: 0.0,
                })
                .collect(),
        }
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.replicates == 0 {
            0.0
        } else {
            self.censored as f64 / self.replicates as f64
        }
    }

    pub fn survival_at(&self, m: u64) -> Option<&TailPoint> {
        self.points.iter().find(|p| p.m == m)
    }

    pub fn to_csv(&self, beta: f64, level: u32, seed: u64) -> CsvTable {
        let mut t = CsvTable::new();
        for p in &self.points {
            t.row(level, beta, &format!("survival_{}", p.m), p.survival, p.stderr, self.replicates, seed);
        }
        let c = self.censored_fraction();
        let se = (c * (1.0 - c) / self.replicates.max(1) as f64).sqrt();
        t.row(level, beta, "censored", c, se, self.replicates, seed);
        t
    }
}

struct TailAcc<'a, R: Real> {
    explorer: Explorer<'a, R>,
    histogram: Vec<u64>,
    censored: u64,
    completed_size: u64,
}

impl<R: Real> Merge for TailAcc<'_, R> {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.histogram.iter_mut().zip(&other.histogram) {
            *a += b;
        }
        self.censored += other.censored;
        self.completed_size += other.completed_size;
    }
}

/// Explores `replicates` origin clusters and tabulates `min(|K|, cap)`.
pub fn estimate_tail<R: Real>(
    params: &ModelParams<R>,
    config: ExplorerConfig,
    replicates: u64,
    key: &StreamKey,
) -> Result<TailCurve> {
    if replicates == 0 {
        return Err(Error::Estimator("replicates must be at least 1".into()));
    }
    Explorer::new(params, config)?;
    let cap = config.cap;
    let init = || TailAcc {
        explorer: Explorer::new(params, config).expect("validated"),
        histogram: vec![0; cap as usize + 1],
        censored: 0,
        completed_size: 0,
    };
    let acc = map_reduce(replicates, &key.child(tags::TAIL), init, |acc, _, rng| {
        match acc.explorer.explore(rng).size {
            ClusterSize::Exact(s) => {
                acc.histogram[s.min(cap) as usize] += 1;
                acc.completed_size += s;
            }
            ClusterSize::AtLeast(_) => acc.censored += 1,
        }
    });
    let completed = replicates - acc.censored;
    if completed > 0 && acc.completed_size as f64 / completed as f64 > cap as f64 / 10.0 {
        log::warn!(
            "mean completed cluster size {:.1} exceeds cap/10; beta may be supercritical",
            acc.completed_size as f64 / completed as f64
        );
    }
    Ok(TailCurve::from_histogram(cap, acc.histogram, acc.censored))
}

/// Default fit window: dyadic points in `[cap^{1/3}, cap/4]`.
pub fn default_window(cap: u64) -> (u64, u64) {
    let lo = (cap as f64).cbrt().ceil() as u64;
    let lo = lo.max(1).next_power_of_two();
    let hi = (cap / 4).max(1);
    let hi = if hi.is_power_of_two() { hi } else { hi.next_power_of_two() / 2 };
    (lo, hi)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaFit {
    pub delta: f64,
    /// Bootstrap standard error over replicates; zero for curves without replicate data.
    pub stderr: f64,
    pub slope: f64,
    /// 2.5% and 97.5% bootstrap percentiles of `δ`.
    pub interval: (f64, f64),
    pub points: usize,
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn fit_points(points: &[TailPoint], window: (u64, u64)) -> Result<(f64, usize)> {
    let used: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.m >= window.0 && p.m <= window.1)
        .map(|p| ((p.m as f64).ln(), p.survival))
        .collect();
    if used.len() < MIN_FIT_POINTS {
        return Err(Error::Estimator(format!(
            "window [{}, {}] holds {} dyadic points, need {MIN_FIT_POINTS}",
            window.0,
            window.1,
            used.len()
        )));
    }
    if used.iter().any(|p| p.1 <= 0.0) {
        return Err(Error::Estimator("survival vanishes inside the fit window".into()));
    }
    let logs: Vec<(f64, f64)> = used.iter().map(|&(x, p)| (x, p.ln())).collect();
    let slope = least_squares_slope(&logs);
    if !(slope < 0.0) {
        return Err(Error::Estimator(format!("fitted slope {slope} is not negative")));
    }
    Ok((slope, used.len()))
}

/// Least-squares slope of `ln P` against `ln m` on the window; `δ = -1/slope`.
pub fn fit_delta(curve: &TailCurve, window: (u64, u64), key: &StreamKey) -> Result<DeltaFit> {
    if window.0 > window.1 {
        return Err(Error::Estimator(format!("empty window [{}, {}]", window.0, window.1)));
    }
    if window.1 >= curve.cap {
        return Err(Error::Estimator(format!(
            "window end {} reaches the censored region at cap {}",
            window.1, curve.cap
        )));
    }
    let (slope, points) = fit_points(&curve.points, window)?;
    let delta = -1.0 / slope;
    if curve.histogram.is_empty() {
        return Ok(DeltaFit {
            delta,
            stderr: 0.0,
            slope,
            interval: (delta, delta),
            points,
        });
    }
    let key = key.child(tags::BOOTSTRAP);
    let mut bins = curve.histogram.clone();
    bins.push(curve.censored);
    let mut deltas: Vec<f64> = (0..DELTA_RESAMPLES)
        .filter_map(|b| {
            let mut rng = key.stream(b);
            let mut re = resample_histogram(&bins, &mut rng);
            let censored = re.pop().expect("censored bin");
            let boot = TailCurve::from_histogram(curve.cap, re, censored);
            fit_points(&boot.points, window).ok().map(|(s, _)| -1.0 / s)
        })
        .collect();
    let stderr = if deltas.len() >= 2 {
        let m = deltas.iter().sum::<f64>() / deltas.len() as f64;
        (deltas.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (deltas.len() - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    deltas.sort_by(f64::total_cmp);
    let interval = if deltas.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (percentile(&deltas, 0.025), percentile(&deltas, 0.975))
    };
    Ok(DeltaFit {
        delta,
        stderr,
        slope,
        interval,
        points,
    })
}
