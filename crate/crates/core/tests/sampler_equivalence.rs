//! The three samplers draw from one law on balls of up to 64 points.

use std::collections::HashMap;
use std::hash::Hash;

use hierperc::parallel::{map_reduce, Merge};
use hierperc::samplers::observe;
use hierperc::{LatticeParams, ModelParams, SamplerKind, StreamKey};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const REPLICATES: u64 = 1_000_000;
const MIN_P: f64 = 1e-3;

#[derive(Default)]
struct Laws {
    kroot: HashMap<u64, u64>,
    kmax: HashMap<u64, u64>,
    multiset: HashMap<Vec<(u64, u64)>, u64>,
}

impl Merge for Laws {
    fn merge(&mut self, other: Self) {
        for (k, c) in other.kroot {
            *self.kroot.entry(k).or_default() += c;
        }
        for (k, c) in other.kmax {
            *self.kmax.entry(k).or_default() += c;
        }
        for (k, c) in other.multiset {
            *self.multiset.entry(k).or_default() += c;
        }
    }
}

fn laws(kind: SamplerKind, params: &ModelParams, n: u32, key: &StreamKey) -> Laws {
    map_reduce(REPLICATES, key, Laws::default, |acc, _, rng| {
        let obs = observe(kind, params, n, &[], rng).unwrap();
        *acc.kroot.entry(obs.kroot).or_default() += 1;
        if let Some(m) = obs.kmax {
            *acc.kmax.entry(m).or_default() += 1;
        }
        if let Some(mut census) = obs.census {
            census.sort_unstable();
            *acc.multiset.entry(census).or_default() += 1;
        }
    })
}

/// p-value of the two-sample chi-square homogeneity test for equal sample
/// sizes. Cells with fewer than 10 joint counts are pooled.
fn homogeneity_p<K: Eq + Hash + Clone>(a: &HashMap<K, u64>, b: &HashMap<K, u64>) -> f64 {
    let mut cells: Vec<(u64, u64)> = a.iter().map(|(k, &x)| (x, b.get(k).copied().unwrap_or(0))).collect();
    cells.extend(b.iter().filter(|(k, _)| !a.contains_key(k)).map(|(_, &y)| (0, y)));
    let (mut pooled, mut kept) = ((0u64, 0u64), Vec::new());
    for (x, y) in cells {
        if x + y < 10 {
            pooled.0 += x;
            pooled.1 += y;
        } else {
            kept.push((x, y));
        }
    }
    if pooled.0 + pooled.1 > 0 {
        kept.push(pooled);
    }
    if kept.len() < 2 {
        return 1.0;
    }
    let stat: f64 = kept
        .iter()
        .map(|&(x, y)| {
            let d = x as f64 - y as f64;
            d * d / (x + y) as f64
        })
        .sum();
    let chi = ChiSquared::new((kept.len() - 1) as f64).unwrap();
    1.0 - chi.cdf(stat)
}

fn check(d: u32, side: u32, n: u32, alpha: f64, beta: f64, seed: u64) {
    let params = ModelParams::power_law(LatticeParams::new(d, side, n).unwrap(), alpha, beta).unwrap();
    let key = StreamKey::new(seed);
    let [direct, recursive, explorer] =
        SamplerKind::ALL.map(|kind| laws(kind, &params, n, &key.child(kind as u64)));
    let label = format!("d={d} L={side} n={n} alpha={alpha} beta={beta}");
    let tests = [
        ("kroot direct/recursive", homogeneity_p(&direct.kroot, &recursive.kroot)),
        ("kroot direct/explorer", homogeneity_p(&direct.kroot, &explorer.kroot)),
        ("kroot recursive/explorer", homogeneity_p(&recursive.kroot, &explorer.kroot)),
        ("kmax direct/recursive", homogeneity_p(&direct.kmax, &recursive.kmax)),
        ("multiset direct/recursive", homogeneity_p(&direct.multiset, &recursive.multiset)),
    ];
    for (what, p) in tests {
        assert!(p > MIN_P, "{label}: {what} p = {p:e}");
    }
    // The law is not degenerate, so the test has something to see.
    assert!(direct.kroot.len() > 2, "{label}");
}

#[test]
fn binary_line_six_levels() {
    check(1, 2, 6, 0.5, 1.2, 1);
}

#[test]
fn ternary_line() {
    check(1, 3, 3, 0.4, 0.8, 2);
}

#[test]
fn quaternary_line_near_dense() {
    check(1, 4, 3, 0.7, 2.0, 3);
}

#[test]
fn plane() {
    check(2, 2, 3, 1.0, 1.5, 4);
}

#[test]
fn three_dimensions() {
    check(3, 2, 2, 1.5, 1.0, 5);
}

#[test]
fn wide_torus_single_level() {
    check(2, 8, 1, 1.2, 3.0, 6);
}
