//! Breadth-first revelation of the origin's cluster.
//!
//! When a vertex `v` is processed, every pair `{v, w}` with `w` not yet
//! processed is queried exactly once: per level `k` the number of open edges
//! into the unprocessed part of `v`'s annulus is binomial, and the targets
//! are a uniform subset of those candidates. In infinite volume the levels
//! above everything seen so far are handled together: the highest level
//! carrying an edge is drawn from `P(none above K) = exp(-β Σ_{k>K} |A_k| J_k)`.

use rand::seq::index;
use rand::Rng;
use std::collections::VecDeque;

use super::binomial::{binomial, binomial_at_least_one};
use crate::error::{Error, Result};
use crate::kernel::ModelParams;
use crate::lattice::{LatticeParams, Point};
use crate::real::Real;

/// Annuli up to this size are enumerated when most of them is already processed.
const ENUMERATE_LIMIT: f64 = 4096.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Restriction {
    /// Only vertices and edges inside `Λ_n`.
    Ball(u32),
    Infinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClusterSize {
    Exact(u64),
    /// Exploration stopped at the cap with vertices still unexplored.
    AtLeast(u64),
}

impl ClusterSize {
    pub fn value(&self) -> u64 {
        match *self {
            ClusterSize::Exact(n) | ClusterSize::AtLeast(n) => n,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, ClusterSize::AtLeast(_))
    }
}

#[derive(Clone, Debug)]
pub struct ExplorationResult {
    pub size: ClusterSize,
    /// Every vertex reached, origin first.
    pub visited: Vec<Point>,
    /// Open edges revealed; each unordered pair is queried at most once.
    pub edge_queries: u64,
    /// Highest level of any revealed edge.
    pub highest_level: u32,
}

#[derive(Clone, Copy, Debug)]
pub struct ExplorerConfig {
    pub restriction: Restriction,
    /// Exploration halts once this many vertices are reached.
    pub cap: u64,
    /// Largest β accepted for infinite-volume exploration.
    pub divergence_guard: f64,
}

impl ExplorerConfig {
    pub fn new(restriction: Restriction, cap: u64) -> Self {
        Self {
            restriction,
            cap,
            divergence_guard: f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Node {
    processed: u64,
    visited: bool,
    children: Vec<(u32, u32)>,
}

/// Digit trie rooted at the block of level `root_level` around the origin;
/// a node at level `l` is one level-`l` block and counts its processed vertices.
#[derive(Debug, Default)]
struct BlockTrie {
    nodes: Vec<Node>,
    root: u32,
    root_level: u32,
}

impl BlockTrie {
    fn reset(&mut self, root_level: u32) {
        self.nodes.clear();
        self.nodes.push(Node::default());
        self.root = 0;
        self.root_level = root_level;
    }

    fn grow_to(&mut self, level: u32) {
        while self.root_level < level {
            let old = self.root;
            let processed = self.nodes[old as usize].processed;
            self.nodes.push(Node {
                processed,
                visited: false,
                children: vec![(0, old)],
            });
            self.root = self.nodes.len() as u32 - 1;
            self.root_level += 1;
        }
    }

    fn child(&self, node: u32, digit: u32) -> Option<u32> {
        self.nodes[node as usize]
            .children
            .iter()
            .find(|(d, _)| *d == digit)
            .map(|&(_, c)| c)
    }

    fn child_or_insert(&mut self, node: u32, digit: u32) -> u32 {
        if let Some(c) = self.child(node, digit) {
            return c;
        }
        self.nodes.push(Node::default());
        let c = self.nodes.len() as u32 - 1;
        self.nodes[node as usize].children.push((digit, c));
        c
    }

    /// Marks `p` visited; returns whether it was new.
    fn visit(&mut self, p: &Point) -> bool {
        self.grow_to(p.top_level());
        let mut node = self.root;
        for level in (1..=self.root_level).rev() {
            node = self.child_or_insert(node, p.digit(level));
        }
        let leaf = &mut self.nodes[node as usize];
        !std::mem::replace(&mut leaf.visited, true)
    }

    fn leaf(&self, p: &Point) -> Option<u32> {
        if p.top_level() > self.root_level {
            return None;
        }
        let mut node = self.root;
        for level in (1..=self.root_level).rev() {
            node = self.child(node, p.digit(level))?;
        }
        Some(node)
    }

    fn is_processed(&self, p: &Point) -> bool {
        self.leaf(p)
            .is_some_and(|n| self.nodes[n as usize].processed > 0)
    }

    fn mark_processed(&mut self, p: &Point) {
        let mut node = self.root;
        self.nodes[node as usize].processed += 1;
        for level in (1..=self.root_level).rev() {
            node = self.child(node, p.digit(level)).expect("processed vertex was visited");
            self.nodes[node as usize].processed += 1;
        }
    }

    /// Processed counts of `p`'s blocks, index = level, `0..=root_level`.
    fn path_counts(&self, p: &Point, out: &mut Vec<u64>) {
        out.clear();
        out.resize(self.root_level as usize + 1, 0);
        let mut node = Some(self.root);
        for level in (0..=self.root_level).rev() {
            match node {
                Some(n) => {
                    out[level as usize] = self.nodes[n as usize].processed;
                    node = if level > 0 { self.child(n, p.digit(level)) } else { None };
                }
                None => break,
            }
        }
    }
}

/// Explorer bound to one parameter set; reusable across replicates.
pub struct Explorer<'a, R: Real> {
    params: &'a ModelParams<R>,
    lattice: LatticeParams,
    config: ExplorerConfig,
    rates: Vec<f64>,
    trie: BlockTrie,
    counts: Vec<u64>,
}

impl<'a, R: Real> Explorer<'a, R> {
    pub fn new(params: &'a ModelParams<R>, config: ExplorerConfig) -> Result<Self> {
        if !params.kernel().is_radial() {
            return Err(Error::NonRadialKernel(params.kernel().name().into()));
        }
        if config.cap < 1 {
            return Err(Error::InvalidParams("cap must be at least 1".into()));
        }
        let beta = params.beta().to_f64_lossy();
        if config.restriction == Restriction::Infinite && beta > config.divergence_guard {
            return Err(Error::DivergenceGuard {
                beta,
                guard: config.divergence_guard,
            });
        }
        let lattice = match config.restriction {
            Restriction::Ball(n) => params.lattice().with_level(n),
            Restriction::Infinite => *params.lattice(),
        };
        Ok(Self {
            params,
            lattice,
            config,
            rates: Vec::new(),
            trie: BlockTrie::default(),
            counts: Vec::new(),
        })
    }

    fn rate(&mut self, k: u32) -> f64 {
        while self.rates.len() <= k as usize {
            let t = self.rates.len() as u32;
            self.rates
                .push(if t == 0 { 0.0 } else { self.params.edge_rate(t).to_f64_lossy() });
        }
        self.rates[k as usize]
    }

    /// `β Σ_{k > level} |A_k| J_k`.
    fn hazard_above(&self, level: u32) -> f64 {
        (self.params.beta() * self.params.linear_tail(level)).to_f64_lossy()
    }

    /// `m` distinct uniform targets among the unprocessed points of `v`'s annulus `k`.
    fn choose_targets<G: Rng + ?Sized>(
        &self,
        v: &Point,
        k: u32,
        m: u64,
        processed_in_annulus: u64,
        rng: &mut G,
        out: &mut Vec<Point>,
    ) {
        let annulus = self.lattice.annulus_size_f64(k);
        let remaining = annulus - processed_in_annulus as f64;
        let start = out.len();
        if processed_in_annulus > 0 && annulus <= ENUMERATE_LIMIT && remaining < annulus / 2.0 {
            let q = self.lattice.torus_size() as u64;
            let lo = q.pow(k - 1);
            let candidates: Vec<Point> = (lo..lo * q)
                .map(|z| self.lattice.add(v, &self.lattice.unpack(z)))
                .filter(|w| !self.trie.is_processed(w))
                .collect();
            for i in index::sample(rng, candidates.len(), m as usize) {
                out.push(candidates[i].clone());
            }
            return;
        }
        while ((out.len() - start) as u64) < m {
            let w = self
                .lattice
                .add(v, &self.lattice.sample_uniform_annulus(k, rng));
            if processed_in_annulus > 0 && self.trie.is_processed(&w) {
                continue;
            }
            if out[start..].contains(&w) {
                continue;
            }
            out.push(w);
        }
    }

    /// Explores the cluster of the origin.
    pub fn explore<G: Rng + ?Sized>(&mut self, rng: &mut G) -> ExplorationResult {
        let origin = Point::zero();
        let ball_level = match self.config.restriction {
            Restriction::Ball(n) => Some(n),
            Restriction::Infinite => None,
        };
        self.trie.reset(ball_level.unwrap_or(0));
        self.trie.visit(&origin);
        let mut frontier = VecDeque::from([origin.clone()]);
        let mut visited = vec![origin];
        let mut edge_queries = 0;
        let mut highest_level = 0;
        let mut targets = Vec::new();
        let mut counts = std::mem::take(&mut self.counts);

        while let Some(v) = frontier.pop_front() {
            let top = self.trie.root_level;
            self.trie.path_counts(&v, &mut counts);
            self.trie.mark_processed(&v);
            targets.clear();
            for k in 1..=top {
                let processed = counts[k as usize] - counts[k as usize - 1];
                let remaining = self.lattice.annulus_size_f64(k) - processed as f64;
                let rate = self.rate(k);
                let m = binomial(rng, remaining, rate);
                if m > 0 {
                    highest_level = highest_level.max(k);
                    self.choose_targets(&v, k, m, processed, rng, &mut targets);
                }
            }
            if ball_level.is_none() {
                self.explore_fresh_levels(&v, top, rng, &mut targets, &mut highest_level);
            }
            for w in targets.drain(..) {
                edge_queries += 1;
                if self.trie.visit(&w) {
                    visited.push(w.clone());
                    frontier.push_back(w);
                }
            }
            if !frontier.is_empty() && visited.len() as u64 >= self.config.cap {
                self.counts = counts;
                return ExplorationResult {
                    size: ClusterSize::AtLeast(visited.len() as u64),
                    visited,
                    edge_queries,
                    highest_level,
                };
            }
        }
        self.counts = counts;
        ExplorationResult {
            size: ClusterSize::Exact(visited.len() as u64),
            visited,
            edge_queries,
            highest_level,
        }
    }

    /// Levels above `top` contain no visited vertex around `v`; sample the
    /// highest one carrying an edge, then the levels in between.
    fn explore_fresh_levels<G: Rng + ?Sized>(
        &mut self,
        v: &Point,
        top: u32,
        rng: &mut G,
        targets: &mut Vec<Point>,
        highest_level: &mut u32,
    ) {
        let beta = self.params.beta().to_f64_lossy();
        if beta <= 0.0 {
            return;
        }
        let u: f64 = rng.random();
        // P(no edge above K) = exp(-hazard_above(K)); find the smallest K with that above u.
        let threshold = -u.ln();
        if self.hazard_above(top) <= threshold {
            return;
        }
        let mut highest = top + 1;
        while self.hazard_above(highest) > threshold {
            highest += 1;
        }
        *highest_level = (*highest_level).max(highest);
        for k in (top + 1)..=highest {
            let annulus = self.lattice.annulus_size_f64(k);
            let rate = self.rate(k);
            let m = if k == highest {
                binomial_at_least_one(rng, annulus, rate)
            } else {
                binomial(rng, annulus, rate)
            };
            if m > 0 {
                self.choose_targets(v, k, m, 0, rng, targets);
            }
        }
    }
}

/// One exploration of the origin's cluster.
pub fn explore_root_cluster<R: Real, G: Rng + ?Sized>(
    params: &ModelParams<R>,
    config: ExplorerConfig,
    rng: &mut G,
) -> Result<ExplorationResult> {
    Ok(Explorer::new(params, config)?.explore(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(beta: f64) -> ModelParams<f64> {
        ModelParams::power_law(LatticeParams::new(1, 2, 0).unwrap(), 0.5, beta).unwrap()
    }

    #[test]
    fn zero_beta_is_a_singleton() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for restriction in [Restriction::Ball(4), Restriction::Infinite] {
            let r = explore_root_cluster(&params(0.0), ExplorerConfig::new(restriction, 100), &mut rng).unwrap();
            assert_eq!(r.size, ClusterSize::Exact(1));
            assert_eq!(r.edge_queries, 0);
            assert_eq!(r.visited, vec![Point::zero()]);
        }
    }

    #[test]
    fn single_candidate_edge() {
        let p = params(0.4);
        let mut ex = Explorer::new(&p, ExplorerConfig::new(Restriction::Ball(1), 100)).unwrap();
        let reps = 200_000u64;
        let pairs = (0..reps)
            .filter(|&r| ex.explore(&mut ChaCha8Rng::seed_from_u64(r)).size.value() == 2)
            .count();
        let exact = p.p_level(1);
        let emp = pairs as f64 / reps as f64;
        assert!((emp - exact).abs() < 4.0 * (exact * (1.0 - exact) / reps as f64).sqrt());
    }

    #[test]
    fn cap_censors_and_guard_trips() {
        let p = params(30.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = explore_root_cluster(&p, ExplorerConfig::new(Restriction::Ball(10), 5), &mut rng).unwrap();
        assert!(r.size.is_censored());
        assert!(r.size.value() >= 5);
        assert_eq!(r.visited.len() as u64, r.size.value());
        let mut cfg = ExplorerConfig::new(Restriction::Infinite, 5);
        cfg.divergence_guard = 1.0;
        assert!(matches!(Explorer::new(&p, cfg), Err(Error::DivergenceGuard { .. })));
        assert!(Explorer::new(&p, ExplorerConfig::new(Restriction::Ball(2), 0)).is_err());
    }

    #[test]
    fn visited_points_are_distinct_and_inside_ball() {
        let p = params(2.0);
        let mut ex = Explorer::new(&p, ExplorerConfig::new(Restriction::Ball(6), 1000)).unwrap();
        for seed in 0..300 {
            let r = ex.explore(&mut ChaCha8Rng::seed_from_u64(seed));
            let set: std::collections::HashSet<_> = r.visited.iter().collect();
            assert_eq!(set.len(), r.visited.len());
            assert!(r.visited.iter().all(|x| x.top_level() <= 6));
            assert_eq!(r.visited[0], Point::zero());
            assert!(r.highest_level <= 6);
            assert_eq!(r.size, ClusterSize::Exact(r.visited.len() as u64));
        }
    }

    #[test]
    fn infinite_volume_reaches_far_levels() {
        let p = params(0.5);
        let mut ex = Explorer::new(&p, ExplorerConfig::new(Restriction::Infinite, 200)).unwrap();
        let far = (0..2000)
            .map(|s| ex.explore(&mut ChaCha8Rng::seed_from_u64(s)).highest_level)
            .max()
            .unwrap();
        assert!(far > 6);
    }

    #[test]
    fn trie_counts() {
        let mut t = BlockTrie::default();
        t.reset(0);
        let a = Point::from_digits(vec![1]);
        let b = Point::from_digits(vec![0, 1]);
        assert!(t.visit(&Point::zero()));
        assert!(t.visit(&a));
        assert!(!t.visit(&a));
        assert!(t.visit(&b));
        assert_eq!(t.root_level, 2);
        t.mark_processed(&Point::zero());
        t.mark_processed(&a);
        let mut counts = Vec::new();
        t.path_counts(&b, &mut counts);
        assert_eq!(counts, vec![0, 0, 2]);
        t.path_counts(&a, &mut counts);
        assert_eq!(counts, vec![1, 2, 2]);
        assert!(t.is_processed(&a));
        assert!(!t.is_processed(&b));
    }
}
