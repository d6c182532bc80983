//! Block-recursive sampling of the cluster census.
//!
//! A level-`t+1` block is `L^d` independent level-`t` blocks plus the edges
//! between them. All of those edges have length `L^{t+1}`, so two clusters
//! `C_i`, `C_j` in different sub-blocks stay unlinked with probability
//! `exp(-β J_{t+1} |C_i| |C_j|)`. Only cluster sizes and the clusters that
//! carry marks are kept, never memberships.

use rand::seq::index;
use rand::Rng;

use super::binomial::binomial;
use super::partition::label_by_first_appearance;
use crate::error::{Error, Result};
use crate::kernel::ModelParams;
use crate::lattice::Point;
use crate::real::Real;

/// A cluster that contains at least one mark.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarkedCluster {
    pub size: u64,
    /// Indices into the mark list passed to the sampler.
    pub marks: Vec<usize>,
}

/// Size census of the clusters of one block, with its marked clusters.
///
/// Marked clusters are also counted in the census.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterMultiset {
    level: u32,
    /// `(size, multiplicity)` with strictly increasing sizes.
    census: Vec<(u64, u64)>,
    marked: Vec<MarkedCluster>,
}

impl ClusterMultiset {
    fn singleton(mark_ids: Vec<usize>) -> Self {
        let marked = if mark_ids.is_empty() {
            Vec::new()
        } else {
            vec![MarkedCluster {
                size: 1,
                marks: mark_ids,
            }]
        };
        Self {
            level: 0,
            census: vec![(1, 1)],
            marked,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn census(&self) -> &[(u64, u64)] {
        &self.census
    }

    pub fn marked(&self) -> &[MarkedCluster] {
        &self.marked
    }

    /// `Σ size · multiplicity`.
    pub fn vertex_count(&self) -> u64 {
        self.census.iter().map(|&(s, c)| s * c).sum()
    }

    pub fn cluster_count(&self) -> u64 {
        self.census.iter().map(|&(_, c)| c).sum()
    }

    pub fn max_size(&self) -> u64 {
        self.census.last().map_or(0, |&(s, _)| s)
    }

    /// `Σ_C |C|^2`.
    pub fn sum_of_squares(&self) -> u128 {
        self.census
            .iter()
            .map(|&(s, c)| s as u128 * s as u128 * c as u128)
            .sum()
    }

    /// Size of the cluster carrying mark `mark`.
    pub fn mark_size(&self, mark: usize) -> Option<u64> {
        self.marked
            .iter()
            .find(|c| c.marks.contains(&mark))
            .map(|c| c.size)
    }

    pub fn connected(&self, a: usize, b: usize) -> bool {
        self.marked
            .iter()
            .any(|c| c.marks.contains(&a) && c.marks.contains(&b))
    }

    /// Cluster label of each of the first `count` marks, numbered by first appearance.
    pub fn mark_groups(&self, count: usize) -> Vec<usize> {
        let owner: Vec<usize> = (0..count)
            .map(|m| {
                self.marked
                    .iter()
                    .position(|c| c.marks.contains(&m))
                    .unwrap_or(usize::MAX)
            })
            .collect();
        label_by_first_appearance(&owner)
    }

    fn check(&self) -> bool {
        self.census.windows(2).all(|w| w[0].0 < w[1].0)
            && self.marked.iter().all(|m| {
                let available = self.census.iter().find(|&&(s, _)| s == m.size).map_or(0, |&(_, c)| c);
                let used = self.marked.iter().filter(|o| o.size == m.size).count() as u64;
                used <= available
            })
    }
}

/// Weighted union-find over the clusters taking part in one merge step.
struct Forest {
    parent: Vec<u32>,
    weight: Vec<u64>,
}

impl Forest {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let g = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = g;
            x = g;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.weight[ra as usize] < self.weight[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.weight[ra as usize] += self.weight[rb as usize];
    }
}

/// One size class of one block: `count` clusters of `size`, with global ids
/// `offset..offset + count`. Marked clusters of that size take the lowest ids.
struct Group {
    size: u64,
    count: u64,
    offset: u64,
}

/// Merges sibling blocks with cross-block edge rate `rate = β J_{t+1}`.
fn merge_blocks<G: Rng + ?Sized>(blocks: Vec<ClusterMultiset>, rate: f64, rng: &mut G) -> ClusterMultiset {
    let level = blocks[0].level + 1;
    let mut groups: Vec<Vec<Group>> = Vec::with_capacity(blocks.len());
    let mut total = 0u64;
    for b in &blocks {
        let g = b
            .census
            .iter()
            .map(|&(size, count)| {
                let grp = Group {
                    size,
                    count,
                    offset: total,
                };
                total += count;
                grp
            })
            .collect();
        groups.push(g);
    }
    let mut forest = Forest {
        parent: (0..total as u32).collect(),
        weight: Vec::with_capacity(total as usize),
    };
    for g in groups.iter().flatten() {
        forest
            .weight
            .extend(std::iter::repeat_n(g.size, g.count as usize));
    }

    if rate > 0.0 {
        for a in 0..groups.len() {
            for b in (a + 1)..groups.len() {
                for ga in &groups[a] {
                    for gb in &groups[b] {
                        let pairs = ga.count * gb.count;
                        let pair_rate = rate * (ga.size * gb.size) as f64;
                        let open = binomial(rng, pairs as f64, pair_rate);
                        if open == 0 {
                            continue;
                        }
                        for idx in index::sample(rng, pairs as usize, open as usize) {
                            let idx = idx as u64;
                            let i = ga.offset + idx / gb.count;
                            let j = gb.offset + idx % gb.count;
                            forest.union(i as u32, j as u32);
                        }
                    }
                }
            }
        }
    }

    // Marked clusters keep their ids: the k-th marked cluster of a given size
    // in a block is the k-th cluster of that size class.
    let mut marked_ids: Vec<(u32, Vec<usize>)> = Vec::new();
    for (b, block) in blocks.iter().enumerate() {
        let mut used: Vec<(u64, u64)> = Vec::new();
        for m in &block.marked {
            let slot = match used.iter_mut().find(|(s, _)| *s == m.size) {
                Some((_, n)) => {
                    *n += 1;
                    *n - 1
                }
                None => {
                    used.push((m.size, 1));
                    0
                }
            };
            let grp = groups[b]
                .iter()
                .find(|g| g.size == m.size)
                .expect("marked cluster present in census");
            marked_ids.push(((grp.offset + slot) as u32, m.marks.clone()));
        }
    }

    let mut sizes: Vec<u64> = Vec::new();
    for id in 0..total as u32 {
        if forest.find(id) == id {
            sizes.push(forest.weight[id as usize]);
        }
    }
    sizes.sort_unstable();
    let mut census: Vec<(u64, u64)> = Vec::new();
    for s in sizes {
        match census.last_mut() {
            Some((last, c)) if *last == s => *c += 1,
            _ => census.push((s, 1)),
        }
    }

    let mut marked: Vec<(u32, MarkedCluster)> = Vec::new();
    for (id, marks) in marked_ids {
        let root = forest.find(id);
        match marked.iter_mut().find(|(r, _)| *r == root) {
            Some((_, mc)) => mc.marks.extend(marks),
            None => marked.push((
                root,
                MarkedCluster {
                    size: forest.weight[root as usize],
                    marks,
                },
            )),
        }
    }
    let mut marked: Vec<MarkedCluster> = marked.into_iter().map(|(_, m)| m).collect();
    for m in &mut marked {
        m.marks.sort_unstable();
    }
    marked.sort_by(|a, b| a.marks.cmp(&b.marks));

    ClusterMultiset {
        level,
        census,
        marked,
    }
}

/// Recursive sampler bound to one parameter set.
pub struct RecursiveSampler<'a, R: Real> {
    params: &'a ModelParams<R>,
    torus: u32,
    /// `β J_t` per level, index `t`.
    rates: Vec<f64>,
}

impl<'a, R: Real> RecursiveSampler<'a, R> {
    pub fn new(params: &'a ModelParams<R>, max_level: u32) -> Result<Self> {
        if !params.kernel().is_radial() {
            return Err(Error::NonRadialKernel(params.kernel().name().into()));
        }
        let rates = (0..=max_level)
            .map(|t| if t == 0 { 0.0 } else { params.edge_rate(t).to_f64_lossy() })
            .collect();
        Ok(Self {
            params,
            torus: params.lattice().torus_size(),
            rates,
        })
    }

    fn rate(&self, level: u32) -> f64 {
        self.rates
            .get(level as usize)
            .copied()
            .unwrap_or_else(|| self.params.edge_rate(level).to_f64_lossy())
    }

    /// Samples a level-`level` block; `marks` carry `(mark id, point)` with
    /// points given relative to the block.
    fn block<G: Rng + ?Sized>(&self, level: u32, marks: &[(usize, &Point)], rng: &mut G) -> ClusterMultiset {
        if level == 0 {
            return ClusterMultiset::singleton(marks.iter().map(|&(id, _)| id).collect());
        }
        let blocks = (0..self.torus)
            .map(|sub| {
                let inside: Vec<(usize, &Point)> = marks
                    .iter()
                    .filter(|(_, p)| p.digit(level) == sub)
                    .copied()
                    .collect();
                self.block(level - 1, &inside, rng)
            })
            .collect();
        merge_blocks(blocks, self.rate(level), rng)
    }

    /// Census of `Λ_n` with the given marks.
    pub fn sample<G: Rng + ?Sized>(&self, n: u32, marks: &[Point], rng: &mut G) -> Result<ClusterMultiset> {
        Ok(self.nested(n, n, marks, rng)?.pop().expect("one level"))
    }

    /// Census of the origin's block at every level `from..=to`, all from one
    /// sample of `Λ_to`. A mark enters at the first level whose block holds
    /// it, so connections reported at level `t` are restricted to `Λ_t`.
    pub fn nested<G: Rng + ?Sized>(
        &self,
        from: u32,
        to: u32,
        marks: &[Point],
        rng: &mut G,
    ) -> Result<Vec<ClusterMultiset>> {
        if from > to {
            return Err(Error::InvalidParams(format!("empty level range {from}..={to}")));
        }
        let lat = self.params.lattice().with_level(to);
        for m in marks {
            lat.validate(m)?;
            if m.top_level() > to {
                return Err(Error::OutsideBall(m.to_string()));
            }
        }
        let tagged: Vec<(usize, &Point)> = marks.iter().enumerate().collect();
        let entering = |level: u32, sub: u32| -> Vec<(usize, &Point)> {
            tagged
                .iter()
                .filter(|(_, p)| p.top_level() == level && p.digit(level) == sub)
                .copied()
                .collect()
        };
        let base: Vec<(usize, &Point)> = tagged
            .iter()
            .filter(|(_, p)| p.top_level() <= from)
            .copied()
            .collect();
        let mut current = self.block(from, &base, rng);
        let mut out = Vec::with_capacity((to - from + 1) as usize);
        for level in (from + 1)..=to {
            let mut blocks = Vec::with_capacity(self.torus as usize);
            blocks.push(current.clone());
            out.push(current);
            for sub in 1..self.torus {
                blocks.push(self.block(level - 1, &entering(level, sub), rng));
            }
            current = merge_blocks(blocks, self.rate(level), rng);
        }
        debug_assert!(current.check());
        out.push(current);
        Ok(out)
    }
}

/// Census of `Λ_n` by block recursion; equal in law to the direct sampler.
pub fn recursive_cluster_sample<R: Real, G: Rng + ?Sized>(
    params: &ModelParams<R>,
    n: u32,
    marks: &[Point],
    rng: &mut G,
) -> Result<ClusterMultiset> {
    RecursiveSampler::new(params, n)?.sample(n, marks, rng)
}
