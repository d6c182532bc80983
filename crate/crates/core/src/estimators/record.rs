use serde::Serialize;

use crate::parallel::Merge;
use crate::real::Real;

/// Streaming mean and variance (Welford), mergeable across shards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimateRecord<R> {
    count: u64,
    mean: R,
    /// Sum of squared deviations from the mean.
    m2: R,
}

impl<R: Real> Default for EstimateRecord<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> EstimateRecord<R> {
    pub fn new() -> Self {
        Self {
            count: 0,
            mean: R::zero(),
            m2: R::zero(),
        }
    }

    /// A known value, carried as one observation with zero spread.
    pub fn constant(value: R) -> Self {
        Self {
            count: 1,
            mean: value,
            m2: R::zero(),
        }
    }

    pub fn from_values<I: IntoIterator<Item = R>>(values: I) -> Self {
        let mut r = Self::new();
        for v in values {
            r.push(v);
        }
        r
    }

    pub fn push(&mut self, x: R) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / R::from_count(self.count);
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn combine(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (R::from_count(self.count), R::from_count(other.count));
        let n = na + nb;
        let delta = other.mean - self.mean;
        self.mean += delta * nb / n;
        self.m2 += other.m2 + delta * delta * na * nb / n;
        self.count += other.count;
    }

    /// The record of `factor · x`.
    pub fn scaled(&self, factor: R) -> Self {
        Self {
            count: self.count,
            mean: self.mean * factor,
            m2: self.m2 * factor * factor,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> R {
        self.mean
    }

    /// Unbiased sample variance; zero below two observations.
    pub fn variance(&self) -> R {
        if self.count < 2 {
            R::zero()
        } else {
            self.m2 / R::from_count(self.count - 1)
        }
    }

    /// `sqrt(variance / count)`.
    pub fn stderr(&self) -> R {
        if self.count == 0 {
            R::zero()
        } else {
            (self.variance() / R::from_count(self.count)).sqrt()
        }
    }

    /// Distance from `value` in standard errors; infinite if the record has
    /// no spread but disagrees.
    pub fn z_score(&self, value: R) -> R {
        let diff = (self.mean - value).abs();
        let se = self.stderr();
        if se > R::zero() {
            diff / se
        } else if diff == R::zero() {
            R::zero()
        } else {
            R::infinity()
        }
    }
}

impl<R: Real> Merge for EstimateRecord<R> {
    fn merge(&mut self, other: Self) {
        self.combine(&other);
    }
}
