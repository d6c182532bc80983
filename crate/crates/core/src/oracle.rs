//! Exact laws for tiny balls by enumerating every edge configuration.
//!
//! The `2^E` configurations are walked in Gray-code order, one edge toggled
//! per step. Each configuration is reduced to its vertex partition and its
//! number of open edges per level; a configuration's probability depends only
//! on those counts, so the walk tallies integer multiplicities and the
//! probabilities are formed once per class from per-level power tables.

use std::collections::HashMap;
use std::fmt::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::ModelParams;
use crate::lattice::{LatticeParams, Point};
use crate::parallel::{try_map_reduce, Merge};
use crate::real::{CompensatedSum, Real};
use crate::rng::StreamKey;
use crate::samplers::{observe, SamplerKind};

/// Largest number of vertex pairs accepted by [`enumerate_exact`].
pub const MAX_PAIRS: usize = 30;

/// Configurations per parallel chunk.
const CHUNK_BITS: u32 = 16;

/// Exact law of the cluster observables on `Λ_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactLaw<R> {
    pub n: u32,
    pub volume: usize,
    /// Component sizes in decreasing order, with probability; sorted by key.
    pub multiset: Vec<(Vec<u64>, R)>,
    /// `root[s] = P(|K_n(0)| = s)`, index 0 unused.
    pub root: Vec<R>,
    /// `max[s] = P(|K_n^max| = s)`, index 0 unused.
    pub max: Vec<R>,
    /// `connection[i][j] = P(i ↔ j)` over packed indices.
    pub connection: Vec<Vec<R>>,
    pub mean_root: R,
    /// `E Σ_C |C|^2`.
    pub mean_sum_squares: R,
    pub total_mass: R,
}

impl<R: Real> ExactLaw<R> {
    pub fn root_probability(&self, size: u64) -> R {
        self.root.get(size as usize).copied().unwrap_or_else(R::zero)
    }

    pub fn max_probability(&self, size: u64) -> R {
        self.max.get(size as usize).copied().unwrap_or_else(R::zero)
    }

    pub fn multiset_probability(&self, sizes_desc: &[u64]) -> R {
        self.multiset
            .iter()
            .find(|(k, _)| k.as_slice() == sizes_desc)
            .map_or_else(R::zero, |(_, p)| *p)
    }

    /// `P(0 ↔ x)` for `x` given by packed index.
    pub fn root_connection(&self, x: usize) -> R {
        self.connection[0][x]
    }

    /// Smallest `m ≥ 1` with `P(|K_n^max| ≥ m) ≤ 1/e`.
    pub fn typical_max(&self) -> u64 {
        let threshold = R::one() / R::E();
        let mut tail = self.total_mass;
        for m in 1..=self.volume as u64 + 1 {
            if tail <= threshold {
                return m;
            }
            tail -= self.max_probability(m);
        }
        self.volume as u64 + 1
    }

    /// CSV with columns `observable,value,probability`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("observable,value,probability\n");
        let mut row = |obs: &str, value: &str, p: R| {
            let _ = writeln!(out, "{obs},{value},{:.16e}", p.to_f64_lossy());
        };
        for (sizes, p) in &self.multiset {
            let key: Vec<String> = sizes.iter().map(u64::to_string).collect();
            row("multiset", &key.join("+"), *p);
        }
        for (s, p) in self.root.iter().enumerate().skip(1) {
            row("kroot", &s.to_string(), *p);
        }
        for (s, p) in self.max.iter().enumerate().skip(1) {
            row("kmax", &s.to_string(), *p);
        }
        for i in 0..self.volume {
            for j in (i + 1)..self.volume {
                row("connected", &format!("{i}-{j}"), self.connection[i][j]);
            }
        }
        row("mean_kroot", "", self.mean_root);
        row("mean_sum_squares", "", self.mean_sum_squares);
        row("total", "", self.total_mass);
        out
    }
}

/// Partition (restricted growth string, 4 bits per vertex) and open-edge
/// counts per level (8 bits per level) of one configuration.
type ClassKey = (u32, u64);

fn partition_key(adj: &[u32], volume: usize) -> u32 {
    let mut labels = [u32::MAX; 8];
    let mut next = 0;
    for v in 0..volume {
        if labels[v] != u32::MAX {
            continue;
        }
        let mut comp = 1u32 << v;
        let mut frontier = comp;
        while frontier != 0 {
            let mut reach = 0;
            let mut f = frontier;
            while f != 0 {
                reach |= adj[f.trailing_zeros() as usize];
                f &= f - 1;
            }
            frontier = reach & !comp;
            comp |= frontier;
        }
        let mut c = comp;
        while c != 0 {
            labels[c.trailing_zeros() as usize] = next;
            c &= c - 1;
        }
        next += 1;
    }
    labels[..volume]
        .iter()
        .enumerate()
        .fold(0, |key, (v, &l)| key | (l << (4 * v)))
}

fn tally_chunk(
    edges: &[(usize, usize, u32)],
    volume: usize,
    start: u64,
    len: u64,
) -> HashMap<ClassKey, u64> {
    let gray = |i: u64| i ^ (i >> 1);
    let mut adj = vec![0u32; volume];
    let mut counts = 0u64;
    let first = gray(start);
    for (e, &(a, b, k)) in edges.iter().enumerate() {
        if first >> e & 1 == 1 {
            adj[a] |= 1 << b;
            adj[b] |= 1 << a;
            counts += 1 << (8 * (k - 1));
        }
    }
    let mut tally = HashMap::new();
    *tally.entry((partition_key(&adj, volume), counts)).or_insert(0) += 1;
    for i in (start + 1)..(start + len) {
        let e = i.trailing_zeros() as usize;
        let (a, b, k) = edges[e];
        let unit = 1u64 << (8 * (k - 1));
        if gray(i) >> e & 1 == 1 {
            adj[a] |= 1 << b;
            adj[b] |= 1 << a;
            counts += unit;
        } else {
            adj[a] &= !(1 << b);
            adj[b] &= !(1 << a);
            counts -= unit;
        }
        *tally.entry((partition_key(&adj, volume), counts)).or_insert(0) += 1;
    }
    tally
}

/// Exact law on `Λ_n` by enumerating all `2^E` edge subsets, `E ≤ 30`.
pub fn enumerate_exact<R: Real>(params: &ModelParams<R>, n: u32) -> Result<ExactLaw<R>> {
    let lat: LatticeParams = params.lattice().with_level(n);
    let volume = lat.ball_volume(n)?;
    let pairs = volume.saturating_mul(volume.saturating_sub(1)) / 2;
    if pairs > MAX_PAIRS as u128 {
        return Err(Error::EnumerationTooLarge {
            edges: usize::try_from(pairs).unwrap_or(usize::MAX),
            limit: MAX_PAIRS,
        });
    }
    let volume = volume as usize;
    let points: Vec<Point> = lat.ball_points()?.collect();
    let mut edges = Vec::with_capacity(pairs as usize);
    for a in 0..volume {
        for b in (a + 1)..volume {
            edges.push((a, b, lat.distance_level(&points[a], &points[b])));
        }
    }

    let total: u64 = 1 << edges.len();
    let chunk = 1u64 << CHUNK_BITS.min(edges.len() as u32);
    let tallies: Vec<HashMap<ClassKey, u64>> = (0..total / chunk)
        .into_par_iter()
        .map(|c| tally_chunk(&edges, volume, c * chunk, chunk))
        .collect();
    let mut classes: HashMap<ClassKey, u64> = HashMap::new();
    for t in tallies {
        for (key, c) in t {
            *classes.entry(key).or_insert(0) += c;
        }
    }
    let mut classes: Vec<(ClassKey, u64)> = classes.into_iter().collect();
    classes.sort_unstable();

    // p_k^o (1 - p_k)^(P_k - o) for every level and open count.
    let mut per_level = vec![0usize; n as usize + 1];
    for &(_, _, k) in &edges {
        per_level[k as usize] += 1;
    }
    let weight_tables: Vec<Vec<R>> = (0..=n)
        .map(|k| {
            let total_k = per_level[k as usize];
            if k == 0 {
                return vec![R::one()];
            }
            let p = params.p_level(k);
            let q = R::one() - p;
            (0..=total_k)
                .map(|o| p.powi(o as i32) * q.powi((total_k - o) as i32))
                .collect()
        })
        .collect();

    let mut by_partition: Vec<(u32, CompensatedSum<R>)> = Vec::new();
    for ((part, counts), mult) in classes {
        let mut w = R::from_count(mult);
        for k in 1..=n {
            let o = (counts >> (8 * (k - 1)) & 0xff) as usize;
            w *= weight_tables[k as usize][o];
        }
        match by_partition.last_mut() {
            Some((p, sum)) if *p == part => sum.add(w),
            _ => {
                let mut sum = CompensatedSum::new();
                sum.add(w);
                by_partition.push((part, sum));
            }
        }
    }

    let mut root = vec![CompensatedSum::new(); volume + 1];
    let mut max = vec![CompensatedSum::new(); volume + 1];
    let mut connection = vec![vec![CompensatedSum::new(); volume]; volume];
    let mut multiset: Vec<(Vec<u64>, CompensatedSum<R>)> = Vec::new();
    let mut mean_root = CompensatedSum::new();
    let mut sum_squares = CompensatedSum::new();
    let mut total_mass = CompensatedSum::new();
    for (part, sum) in &by_partition {
        let p = sum.value();
        let labels: Vec<u32> = (0..volume).map(|v| part >> (4 * v) & 0xf).collect();
        let mut sizes = vec![0u64; volume];
        for &l in &labels {
            sizes[l as usize] += 1;
        }
        sizes.retain(|&s| s > 0);
        let kroot = sizes[labels[0] as usize];
        let kmax = *sizes.iter().max().expect("nonempty ball");
        root[kroot as usize].add(p);
        max[kmax as usize].add(p);
        mean_root.add(p * R::from_count(kroot));
        sum_squares.add(p * R::from_count(sizes.iter().map(|s| s * s).sum()));
        total_mass.add(p);
        for i in 0..volume {
            for j in 0..volume {
                if labels[i] == labels[j] {
                    connection[i][j].add(p);
                }
            }
        }
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        match multiset.iter_mut().find(|(k, _)| *k == sizes) {
            Some((_, acc)) => acc.add(p),
            None => {
                let mut acc = CompensatedSum::new();
                acc.add(p);
                multiset.push((sizes, acc));
            }
        }
    }
    multiset.sort_by(|a, b| a.0.cmp(&b.0));

    let value = |v: &Vec<CompensatedSum<R>>| v.iter().map(CompensatedSum::value).collect::<Vec<R>>();
    let mut root = value(&root);
    let mut max = value(&max);
    root[0] = R::zero();
    max[0] = R::zero();
    Ok(ExactLaw {
        n,
        volume,
        multiset: multiset.into_iter().map(|(k, s)| (k, s.value())).collect(),
        root,
        max,
        connection: connection.iter().map(value).collect(),
        mean_root: mean_root.value(),
        mean_sum_squares: sum_squares.value(),
        total_mass: total_mass.value(),
    })
}

/// `φ_β(Λ_n) = E|K_n(0)| · T_n(β)`: for `y` outside the ball `‖y - x‖ = ‖y‖`,
/// so every vertex of the ball sees the same outside weight.
pub fn exact_phi<R: Real>(params: &ModelParams<R>, n: u32) -> Result<R> {
    let law = enumerate_exact(params, n)?;
    Ok(law.mean_root * params.tail_sum(n).value)
}

/// One sampled probability against its exact value.
#[derive(Clone, Debug, PartialEq)]
pub struct Deviation {
    pub sampler: SamplerKind,
    /// `kroot=s`, `kmax=s` or `connected=i-j` over packed indices.
    pub observable: String,
    pub exact: f64,
    pub observed: f64,
    /// Binomial standard error at the exact probability.
    pub stderr: f64,
    /// `|observed - exact| / stderr`; infinite for an impossible event seen.
    pub sigma: f64,
}

#[derive(Clone, Debug, Default)]
struct Tally {
    root: Vec<u64>,
    max: Vec<u64>,
    pairs: Vec<u64>,
}

impl Tally {
    fn new(volume: usize) -> Self {
        Self {
            root: vec![0; volume + 1],
            max: vec![0; volume + 1],
            pairs: vec![0; volume * volume.saturating_sub(1) / 2],
        }
    }
}

impl Merge for Tally {
    fn merge(&mut self, other: Self) {
        for (a, b) in [(&mut self.root, other.root), (&mut self.max, other.max), (&mut self.pairs, other.pairs)] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Samples `replicates` configurations of `Λ_n` with `kind` and compares the
/// laws of `|K_n(0)|`, `|K_n^max|` and every connection indicator with `law`.
/// The explorer reports only the origin's cluster, so it is compared on
/// `|K_n(0)|` and the pairs through the origin.
pub fn sampler_deviations<R: Real>(
    params: &ModelParams<R>,
    law: &ExactLaw<R>,
    kind: SamplerKind,
    replicates: u64,
    key: &StreamKey,
) -> Result<Vec<Deviation>> {
    let n = law.n;
    let volume = law.volume;
    let points: Vec<Point> = params.lattice().with_level(n).ball_points()?.collect();
    let marks = &points[1..];
    let pair_index = |i: usize, j: usize| i * (2 * volume - i - 1) / 2 + (j - i - 1);
    let tally = try_map_reduce(replicates, key, || Tally::new(volume), |acc, _, rng| {
        let obs = observe(kind, params, n, marks, rng)?;
        acc.root[obs.kroot as usize] += 1;
        if let Some(m) = obs.kmax {
            acc.max[m as usize] += 1;
        }
        for (j, &c) in obs.root_connected.iter().enumerate() {
            acc.pairs[pair_index(0, j + 1)] += c as u64;
        }
        if let Some(groups) = &obs.mark_groups {
            for i in 0..groups.len() {
                for j in (i + 1)..groups.len() {
                    acc.pairs[pair_index(i + 1, j + 1)] += (groups[i] == groups[j]) as u64;
                }
            }
        }
        Ok::<(), Error>(())
    })?;

    let total = replicates as f64;
    let deviation = |observable: String, exact: R, count: u64| {
        let exact = exact.to_f64_lossy();
        let observed = count as f64 / total;
        let stderr = (exact * (1.0 - exact) / total).sqrt();
        let diff = (observed - exact).abs();
        let sigma = if stderr > 0.0 {
            diff / stderr
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Deviation {
            sampler: kind,
            observable,
            exact,
            observed,
            stderr,
            sigma,
        }
    };
    let mut out = Vec::new();
    for s in 1..=volume {
        out.push(deviation(format!("kroot={s}"), law.root[s], tally.root[s]));
    }
    if kind != SamplerKind::Explorer {
        for s in 1..=volume {
            out.push(deviation(format!("kmax={s}"), law.max[s], tally.max[s]));
        }
    }
    for i in 0..volume {
        if i > 0 && kind == SamplerKind::Explorer {
            break;
        }
        for j in (i + 1)..volume {
            out.push(deviation(format!("connected={i}-{j}"), law.connection[i][j], tally.pairs[pair_index(i, j)]));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(beta: f64) -> ModelParams<f64> {
        ModelParams::power_law(LatticeParams::new(1, 2, 2).unwrap(), 0.5, beta).unwrap()
    }

    /// Plain product over all 64 subsets with a depth-first component search.
    fn brute_force(p: &ModelParams<f64>) -> (Vec<f64>, Vec<f64>) {
        let lat = p.lattice().with_level(2);
        let pts: Vec<Point> = lat.ball_points().unwrap().collect();
        let mut pairs = Vec::new();
        for a in 0..4 {
            for b in (a + 1)..4 {
                pairs.push((a, b, p.p_level(lat.distance_level(&pts[a], &pts[b]))));
            }
        }
        let mut root = vec![0.0; 5];
        let mut link = vec![0.0; 4];
        for mask in 0u32..64 {
            let mut prob = 1.0;
            for (e, &(_, _, pe)) in pairs.iter().enumerate() {
                prob *= if mask >> e & 1 == 1 { pe } else { 1.0 - pe };
            }
            let mut seen = [false; 4];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(v) = stack.pop() {
                for (e, &(a, b, _)) in pairs.iter().enumerate() {
                    if mask >> e & 1 == 0 {
                        continue;
                    }
                    let w = if a == v { b } else if b == v { a } else { continue };
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            root[seen.iter().filter(|&&s| s).count()] += prob;
            for x in 0..4 {
                if seen[x] {
                    link[x] += prob;
                }
            }
        }
        (root, link)
    }

    #[test]
    fn matches_brute_force() {
        for beta in [0.2, 0.4, 0.8, 3.0] {
            let p = params(beta);
            let law = enumerate_exact(&p, 2).unwrap();
            let (root, link) = brute_force(&p);
            for (exact, brute) in law.root.iter().zip(&root).skip(1) {
                assert_relative_eq!(*exact, *brute, max_relative = 1e-13);
            }
            for (x, brute) in link.iter().enumerate() {
                assert_relative_eq!(law.root_connection(x), *brute, max_relative = 1e-13);
            }
        }
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn frozen_values() {
        // Independent high-precision enumeration.
        let law = enumerate_exact(&params(0.4), 2).unwrap();
        let root = [0.785_510_576_867_317_5, 0.174_486_667_027_907_98, 0.034_439_780_370_625_057, 0.005_562_975_734_149_453_7];
        let kmax = [0.617_026_866_370_425_9, 0.331_490_450_734_591_2, 0.045_919_707_160_833_41, 0.005_562_975_734_149_453_7];
        for s in 0..4 {
            assert_relative_eq!(law.root[s + 1], root[s], max_relative = 1e-13);
            assert_relative_eq!(law.max[s + 1], kmax[s], max_relative = 1e-13);
        }
        assert_relative_eq!(law.mean_root, 1.260_055_154_971_606_5, max_relative = 1e-13);
        assert_relative_eq!(law.multiset_probability(&[2, 1, 1]), 0.314_007_567_413_366_46, max_relative = 1e-13);
        assert_relative_eq!(law.multiset_probability(&[2, 2]), 0.017_482_883_321_224_753, max_relative = 1e-12);
        assert_relative_eq!(law.connection[0][1], 0.136_494_220_179_987_28, max_relative = 1e-13);
        assert_relative_eq!(law.connection[2][3], 0.136_494_220_179_987_28, max_relative = 1e-13);
        assert_relative_eq!(law.connection[1][2], 0.061_780_467_395_809_586, max_relative = 1e-13);
        assert_relative_eq!(law.total_mass, 1.0, epsilon = 1e-12);

        let law = enumerate_exact(&params(0.2), 2).unwrap();
        assert_relative_eq!(law.mean_root, 1.125_667_362_443_745_1, max_relative = 1e-13);
        let law = enumerate_exact(&params(0.8), 2).unwrap();
        assert_relative_eq!(law.mean_root, 1.546_330_309_266_838_8, max_relative = 1e-13);
        assert_relative_eq!(law.multiset_probability(&[3, 1]), 0.127_064_793_996_134_42, max_relative = 1e-13);
    }

    #[test]
    fn single_edge() {
        let p = params(0.4);
        let law = enumerate_exact(&p, 1).unwrap();
        assert_relative_eq!(law.connection[0][1], p.p_level(1), max_relative = 1e-15);
        assert_relative_eq!(law.mean_root, 1.0 + p.p_level(1), max_relative = 1e-15);
        assert_eq!(law.typical_max(), if p.p_level(1) > 1.0 / std::f64::consts::E { 3 } else { 2 });
    }

    #[test]
    fn cluster_average_identity_and_mass() {
        for (d, l, n) in [(1, 2, 2), (1, 3, 1), (2, 2, 1), (1, 2, 3)] {
            let lat = LatticeParams::new(d, l, n).unwrap();
            let p = ModelParams::power_law(lat, 0.5, 1.3).unwrap();
            let law = enumerate_exact(&p, n).unwrap();
            assert_relative_eq!(law.total_mass, 1.0, epsilon = 1e-12);
            assert_relative_eq!(law.mean_root, law.mean_sum_squares / law.volume as f64, max_relative = 1e-12);
            let row: f64 = law.connection[0].iter().sum();
            assert_relative_eq!(law.mean_root, row, max_relative = 1e-12);
            assert!(law.root.iter().chain(&law.max).all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn monotone_in_beta() {
        let mut last = [0.0; 4];
        for i in 0..20 {
            let law = enumerate_exact(&params(0.15 * i as f64), 2).unwrap();
            for (prev, &now) in last.iter_mut().zip(&law.connection[0]) {
                assert!(now >= *prev - 1e-15);
                *prev = now;
            }
        }
    }

    #[test]
    fn phi_values() {
        let p = params(0.4);
        assert_relative_eq!(exact_phi(&p, 0).unwrap(), p.tail_sum(0).value, max_relative = 1e-15);
        assert_eq!(exact_phi(&params(0.0), 2).unwrap(), 0.0);
        let expected = (1.0 + p.p_level(1)) * p.tail_sum(1).value;
        assert_relative_eq!(exact_phi(&p, 1).unwrap(), expected, max_relative = 1e-14);
        assert_relative_eq!(exact_phi(&p, 1).unwrap(), 0.382_725_038_120_056_6, max_relative = 1e-13);
        assert_relative_eq!(exact_phi(&p, 2).unwrap(), 0.303_159_247_922_796_74, max_relative = 1e-13);
    }

    #[test]
    fn rejects_large_balls_and_emits_csv() {
        let p = ModelParams::power_law(LatticeParams::new(1, 2, 4).unwrap(), 0.5, 0.4).unwrap();
        assert!(matches!(enumerate_exact(&p, 4), Err(Error::EnumerationTooLarge { .. })));
        let csv = enumerate_exact(&params(0.4), 2).unwrap().to_csv();
        assert!(csv.starts_with("observable,value,probability\n"));
        assert!(csv.contains("kroot,4,"));
        assert!(csv.contains("multiset,2+1+1,"));
    }

    #[test]
    fn single_precision() {
        let lat = LatticeParams::new(1, 2, 2).unwrap();
        let p = ModelParams::<f32>::power_law(lat, 0.5, 0.4).unwrap();
        let law = enumerate_exact(&p, 2).unwrap();
        assert!((law.mean_root - 1.260_055_2).abs() < 1e-5);
    }

    #[test]
    fn samplers_track_the_exact_law() {
        let p = params(0.8);
        let law = enumerate_exact(&p, 2).unwrap();
        for kind in SamplerKind::ALL {
            let devs = sampler_deviations(&p, &law, kind, 20_000, &StreamKey::new(3)).unwrap();
            let expected = if kind == SamplerKind::Explorer { 4 + 3 } else { 4 + 4 + 6 };
            assert_eq!(devs.len(), expected, "{}", kind.name());
            for d in &devs {
                assert!(d.sigma < 5.0, "{d:?}");
            }
        }
        let zero = params(0.0);
        let law = enumerate_exact(&zero, 2).unwrap();
        let devs = sampler_deviations(&zero, &law, SamplerKind::Direct, 100, &StreamKey::new(3)).unwrap();
        assert!(devs.iter().all(|d| d.sigma == 0.0));
    }
}
