//! Per-level statistics from nested recursive samples.
//!
//! One replicate samples `Λ_to` once and reads the origin's block at every
//! level `from..=to`, so neighbouring levels are positively correlated and
//! their differences have small variance.

use crate::error::{Error, Result};
use crate::kernel::ModelParams;
use crate::lattice::Point;
use crate::parallel::{try_map_reduce, Merge};
use crate::real::Real;
use crate::rng::{tags, StreamKey};
use crate::samplers::RecursiveSampler;

use super::record::EstimateRecord;

/// Statistics of `Λ_n` for one level of a scan.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelStats<R> {
    pub n: u32,
    /// `|K_n(0)|`.
    pub root: EstimateRecord<R>,
    /// `Σ_C |C|^2 / |Λ_n|`.
    pub census: EstimateRecord<R>,
    /// Per-replicate `root - census`.
    pub difference: EstimateRecord<R>,
    /// `kmax[s]` = replicates with `|K_n^max| = s`.
    pub kmax: Vec<u64>,
    /// `1{0 ↔ x_n in Λ_n}` with `x_n = annulus_representative(n)`; undefined for `n = 0`.
    pub top_connection: EstimateRecord<R>,
}

impl<R: Real> LevelStats<R> {
    fn new(n: u32, volume: usize) -> Self {
        Self {
            n,
            root: EstimateRecord::new(),
            census: EstimateRecord::new(),
            difference: EstimateRecord::new(),
            kmax: vec![0; volume + 1],
            top_connection: EstimateRecord::new(),
        }
    }

    pub fn replicates(&self) -> u64 {
        self.root.count()
    }

    /// Empirical `P(|K_n^max| ≥ m)`.
    pub fn kmax_tail(&self, m: u64) -> f64 {
        let hits: u64 = self.kmax.iter().skip(m as usize).sum();
        hits as f64 / self.replicates() as f64
    }

    /// Empirical `P(|K_n^max| < x)`.
    pub fn kmax_below(&self, x: f64) -> f64 {
        let hits: u64 = self
            .kmax
            .iter()
            .enumerate()
            .filter(|&(s, _)| (s as f64) < x)
            .map(|(_, &c)| c)
            .sum();
        hits as f64 / self.replicates() as f64
    }
}

struct Scan<R>(Vec<LevelStats<R>>);

impl<R: Real> Merge for Scan<R> {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            a.root.combine(&b.root);
            a.census.combine(&b.census);
            a.difference.combine(&b.difference);
            a.top_connection.combine(&b.top_connection);
            for (x, y) in a.kmax.iter_mut().zip(&b.kmax) {
                *x += y;
            }
        }
    }
}

/// Level statistics for `Λ_from, ..., Λ_to`.
pub fn scan_levels<R: Real>(
    params: &ModelParams<R>,
    from: u32,
    to: u32,
    replicates: u64,
    key: &StreamKey,
) -> Result<Vec<LevelStats<R>>> {
    if replicates == 0 {
        return Err(Error::Estimator("replicates must be at least 1".into()));
    }
    if from > to {
        return Err(Error::Estimator(format!("empty level range {from}..{to}")));
    }
    let lat = params.lattice().with_level(to);
    let volumes: Vec<usize> = (from..=to)
        .map(|n| lat.with_level(n).volume())
        .collect::<Result<_>>()?;
    let sampler = RecursiveSampler::new(params, to)?;
    let mut marks = vec![Point::zero()];
    marks.extend((1..=to).map(|k| lat.annulus_representative(k)));
    let key = key.child(tags::RECURSIVE);
    let init = || {
        Scan(
            (from..=to)
                .zip(&volumes)
                .map(|(n, &v)| LevelStats::new(n, v))
                .collect(),
        )
    };
    let scan = try_map_reduce(replicates, &key, init, |acc: &mut Scan<R>, _, rng| {
        let levels = sampler.nested(from, to, &marks, rng)?;
        for ((stats, ms), &volume) in acc.0.iter_mut().zip(&levels).zip(&volumes) {
            let root = R::from_count(ms.mark_size(0).expect("origin is marked"));
            let census = R::from_u128(ms.sum_of_squares()).expect("finite") / R::from_count(volume as u64);
            stats.root.push(root);
            stats.census.push(census);
            stats.difference.push(root - census);
            stats.kmax[ms.max_size() as usize] += 1;
            if stats.n >= 1 {
                let linked = ms.connected(0, stats.n as usize);
                stats.top_connection.push(if linked { R::one() } else { R::zero() });
            }
        }
        Ok::<(), Error>(())
    })?;
    Ok(scan.0)
}
