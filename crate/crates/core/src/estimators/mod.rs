//! Monte Carlo and closed-form estimators.

pub mod betac;
pub mod record;
pub mod report;
pub mod scan;
pub mod susceptibility;
pub mod tail;
pub mod two_point;
pub mod typical_max;

pub use betac::{
    betac_lower_bound, compute_phi, estimate_betac, scaling_report, BetacEstimate, BetacOptions,
    PhiEstimate, ScalingReport, ScalingRow,
};
pub use record::EstimateRecord;
pub use report::{float, CsvTable, Row, CSV_HEADER};
pub use scan::{scan_levels, LevelStats};
pub use susceptibility::{estimate_susceptibility, estimate_susceptibility_levels, SusceptibilityEstimate};
pub use tail::{default_window, estimate_tail, fit_delta, DeltaFit, TailCurve, TailPoint};
pub use two_point::{
    estimate_radial_two_point, estimate_radial_two_point_at, triangle_sum, RadialTwoPoint, TriangleSum,
    TwoPointMode, DEFAULT_EMBEDDING,
};
pub use typical_max::{estimate_typical_max, typical_max_from_histogram, TypicalMax};

use rand::Rng;
use rand_distr::{Binomial, Distribution};

/// Multinomial resample of a histogram with the same total.
pub(crate) fn resample_histogram<G: Rng + ?Sized>(hist: &[u64], rng: &mut G) -> Vec<u64> {
    let mut remaining: u64 = hist.iter().sum();
    let mut mass_left = remaining as f64;
    hist.iter()
        .map(|&c| {
            if remaining == 0 || c == 0 {
                return 0;
            }
            let p = (c as f64 / mass_left).min(1.0);
            mass_left -= c as f64;
            let draw = if p >= 1.0 {
                remaining
            } else {
                Binomial::new(remaining, p).expect("valid binomial").sample(rng)
            };
            remaining -= draw;
            draw
        })
        .collect()
}

/// Percentile by nearest rank on sorted data.
pub(crate) fn percentile<T: Copy>(sorted: &[T], q: f64) -> T {
    let idx = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}
