//! Plug-in estimate of the typical maximum `M_n`, the smallest `m` with
//! `P(|K_n^max| ≥ m) ≤ 1/e`.

use crate::error::{Error, Result};
use crate::kernel::ModelParams;
use crate::real::Real;
use crate::rng::{tags, StreamKey};

use super::scan::{scan_levels, LevelStats};
use super::{percentile, resample_histogram};

pub const BOOTSTRAP_RESAMPLES: u64 = 200;
pub const MIN_REPLICATES: u64 = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct TypicalMax {
    pub n: u32,
    pub estimate: u64,
    /// 2.5% and 97.5% bootstrap percentiles.
    pub interval: (u64, u64),
    /// `histogram[s]` = replicates with `|K_n^max| = s`.
    pub histogram: Vec<u64>,
}

/// Smallest `m ≥ 1` whose empirical tail is at most `1/e`; ties go to the smaller `m`.
pub fn typical_max_from_histogram(hist: &[u64]) -> u64 {
    let total: u64 = hist.iter().sum();
    let threshold = total as f64 / std::f64::consts::E;
    let mut tail = total;
    for (m, &count) in hist.iter().enumerate().skip(1) {
        if tail as f64 <= threshold {
            return m as u64;
        }
        tail -= count;
    }
    hist.len().max(1) as u64
}

impl TypicalMax {
    pub fn from_stats<R: Real>(stats: &LevelStats<R>, key: &StreamKey) -> Self {
        let estimate = typical_max_from_histogram(&stats.kmax);
        let mut boot: Vec<u64> = (0..BOOTSTRAP_RESAMPLES)
            .map(|b| typical_max_from_histogram(&resample_histogram(&stats.kmax, &mut key.stream(b))))
            .collect();
        boot.sort_unstable();
        Self {
            n: stats.n,
            estimate,
            interval: (percentile(&boot, 0.025), percentile(&boot, 0.975)),
            histogram: stats.kmax.clone(),
        }
    }
}

pub fn estimate_typical_max<R: Real>(
    params: &ModelParams<R>,
    n: u32,
    replicates: u64,
    key: &StreamKey,
) -> Result<TypicalMax> {
    if replicates < MIN_REPLICATES {
        return Err(Error::Estimator(format!(
            "typical maximum needs at least {MIN_REPLICATES} replicates, got {replicates}"
        )));
    }
    let key = key.child(tags::TYPICAL_MAX);
    let stats = scan_levels(params, n, n, replicates, &key)?;
    Ok(TypicalMax::from_stats(&stats[0], &key.child(tags::BOOTSTRAP)))
}
