//! Binomial draws parameterised by the closed-edge rate: each trial succeeds
//! with probability `1 - e^{-rate}`. Counts above `2^53` are handled by
//! geometric skipping in floating point.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1};

const EXACT_LIMIT: f64 = 9_007_199_254_740_992.0;
/// Below this mean the skipping loop beats a fresh `Binomial` setup.
const SKIP_MEAN: f64 = 8.0;

fn success_probability(rate: f64) -> f64 {
    -(-rate).exp_m1()
}

/// `Binomial(trials, 1 - e^{-rate})`.
pub fn binomial<G: Rng + ?Sized>(rng: &mut G, trials: f64, rate: f64) -> u64 {
    if trials < 1.0 || rate <= 0.0 {
        return 0;
    }
    let p = success_probability(rate);
    if p >= 1.0 {
        return trials as u64;
    }
    if trials > EXACT_LIMIT || trials * p < SKIP_MEAN {
        skip_count(rng, trials, rate, 0.0)
    } else {
        Binomial::new(trials as u64, p)
            .expect("valid binomial parameters")
            .sample(rng)
    }
}

/// Number of successes after position `start` (exclusive of earlier trials),
/// found by jumping over geometric runs of failures.
fn skip_count<G: Rng + ?Sized>(rng: &mut G, trials: f64, rate: f64, start: f64) -> u64 {
    let mut pos = start;
    let mut count = 0;
    loop {
        let e: f64 = Exp1.sample(rng);
        pos += (e / rate).floor();
        if pos >= trials {
            return count;
        }
        count += 1;
        pos += 1.0;
    }
}

/// `Binomial(trials, 1 - e^{-rate})` conditioned on being at least one.
pub fn binomial_at_least_one<G: Rng + ?Sized>(rng: &mut G, trials: f64, rate: f64) -> u64 {
    debug_assert!(trials >= 1.0 && rate > 0.0);
    // First success position: truncated geometric on [0, trials).
    let mass = -(-rate * trials).exp_m1();
    let u: f64 = rng.random();
    let first = ((-(-u * mass).ln_1p()) / rate).floor().min(trials - 1.0);
    1 + binomial(rng, trials - first - 1.0, rate)
}

/// Probability that `Binomial(trials, 1 - e^{-rate})` is zero.
pub fn none_probability(trials: f64, rate: f64) -> f64 {
    (-rate * trials).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn check_law(draw: impl Fn(&mut ChaCha8Rng) -> u64, trials: u64, p: f64, conditioned: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reps = 200_000;
        let mut hist = vec![0u64; trials as usize + 1];
        for _ in 0..reps {
            hist[draw(&mut rng) as usize] += 1;
        }
        let q0 = (1.0 - p).powi(trials as i32);
        for (k, &c) in hist.iter().enumerate() {
            let mut exact = binom(trials, k as u64) * p.powi(k as i32) * (1.0 - p).powi((trials - k as u64) as i32);
            if conditioned {
                exact = if k == 0 { 0.0 } else { exact / (1.0 - q0) };
            }
            let sigma = (exact * (1.0 - exact) / reps as f64).sqrt().max(1e-9);
            let emp = c as f64 / reps as f64;
            assert!((emp - exact).abs() < 4.5 * sigma, "k={k} emp={emp} exact={exact}");
        }
    }

    fn binom(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn small_mean_law() {
        let rate = 0.05;
        let p = success_probability(rate);
        check_law(|r| binomial(r, 12.0, rate), 12, p, false);
        check_law(|r| binomial_at_least_one(r, 12.0, rate), 12, p, true);
    }

    #[test]
    fn large_mean_law() {
        let rate = 0.7;
        let p = success_probability(rate);
        check_law(|r| binomial(r, 30.0, rate), 30, p, false);
        check_law(|r| binomial_at_least_one(r, 30.0, rate), 30, p, true);
    }

    #[test]
    fn huge_trial_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trials = 2f64.powi(80);
        let rate = 0.5 / trials;
        let reps = 100_000;
        let mean = (0..reps).map(|_| binomial(&mut rng, trials, rate)).sum::<u64>() as f64 / reps as f64;
        assert!((mean - 0.5).abs() < 4.0 * (0.5f64 / reps as f64).sqrt());
        assert_eq!(binomial(&mut rng, 0.0, 1.0), 0);
        assert_eq!(binomial(&mut rng, 10.0, 0.0), 0);
    }
}
