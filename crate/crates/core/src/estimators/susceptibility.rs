//! `E|K_n|` by two estimators with the same expectation: the root cluster
//! size, and `Σ_C |C|^2 / |Λ_n|` over the whole census.

use crate::error::Result;
use crate::kernel::ModelParams;
use crate::real::Real;
use crate::rng::{tags, StreamKey};

use super::record::EstimateRecord;
use super::scan::{scan_levels, LevelStats};

/// Disagreement, in paired standard errors, above which a warning is logged.
pub const DISAGREEMENT_SIGMA: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SusceptibilityEstimate<R> {
    pub n: u32,
    pub root: EstimateRecord<R>,
    pub census: EstimateRecord<R>,
    /// Paired per-replicate difference `root - census`.
    pub difference: EstimateRecord<R>,
}

impl<R: Real> SusceptibilityEstimate<R> {
    pub fn from_stats(stats: &LevelStats<R>) -> Self {
        Self {
            n: stats.n,
            root: stats.root,
            census: stats.census,
            difference: stats.difference,
        }
    }

    /// `|root - census|` in units of the paired standard error.
    pub fn disagreement_sigma(&self) -> R {
        self.difference.z_score(R::zero())
    }

    pub fn disagrees(&self) -> bool {
        self.disagreement_sigma() > R::lit(DISAGREEMENT_SIGMA)
    }

    /// The census estimator, which has the smaller variance.
    pub fn best(&self) -> EstimateRecord<R> {
        self.census
    }
}

pub fn estimate_susceptibility<R: Real>(
    params: &ModelParams<R>,
    n: u32,
    replicates: u64,
    key: &StreamKey,
) -> Result<SusceptibilityEstimate<R>> {
    Ok(estimate_susceptibility_levels(params, n, n, replicates, key)?
        .pop()
        .expect("one level"))
}

/// Estimates for `Λ_from ..= Λ_to` from nested samples of `Λ_to`.
pub fn estimate_susceptibility_levels<R: Real>(
    params: &ModelParams<R>,
    from: u32,
    to: u32,
    replicates: u64,
    key: &StreamKey,
) -> Result<Vec<SusceptibilityEstimate<R>>> {
    let stats = scan_levels(params, from, to, replicates, &key.child(tags::SUSCEPTIBILITY))?;
    let out: Vec<_> = stats.iter().map(SusceptibilityEstimate::from_stats).collect();
    for e in out.iter().filter(|e| e.disagrees()) {
        log::warn!(
            "n={}: root and census estimates differ by {:.2} standard errors",
            e.n,
            e.disagreement_sigma()
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeParams;
    use crate::oracle::enumerate_exact;

    #[test]
    fn zero_beta_is_exactly_one() {
        let p = ModelParams::power_law(LatticeParams::new(1, 2, 5).unwrap(), 0.5, 0.0).unwrap();
        let e = estimate_susceptibility(&p, 5, 100, &StreamKey::new(3)).unwrap();
        assert_eq!(e.root.mean(), 1.0);
        assert_eq!(e.census.mean(), 1.0);
        assert!(!e.disagrees());
    }

    #[test]
    fn matches_oracle_and_estimators_agree() {
        let p = ModelParams::power_law(LatticeParams::new(1, 2, 2).unwrap(), 0.5, 0.4).unwrap();
        let exact = enumerate_exact(&p, 2).unwrap().mean_root;
        let e = estimate_susceptibility(&p, 2, 200_000, &StreamKey::new(8)).unwrap();
        assert!(e.root.z_score(exact) < 3.0, "{}", e.root.z_score(exact));
        assert!(e.census.z_score(exact) < 3.0);
        assert!(e.census.stderr() < e.root.stderr());
        for beta in [0.3, 0.8, 1.5] {
            let p = p.with_beta(beta).unwrap();
            for e in estimate_susceptibility_levels(&p, 0, 6, 20_000, &StreamKey::new(4)).unwrap() {
                assert!(!e.disagrees(), "beta={beta} n={}", e.n);
            }
        }
    }
}
