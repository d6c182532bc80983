use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use super::partition::ClusterPartition;
use crate::error::{Error, Result};
use crate::kernel::ModelParams;
use crate::lattice::{PackedBall, Point};
use crate::real::Real;

pub const DEFAULT_EDGE_BUDGET: u64 = 1 << 27;

/// Samples every open edge of `Λ_n` level by level: the number of open
/// pairs at distance `L^k` is binomial, and the pairs themselves are drawn
/// uniformly without replacement.
#[derive(Clone, Copy, Debug)]
pub struct DirectSampler {
    /// Largest expected number of open edges accepted before sampling.
    pub edge_budget: u64,
}

impl Default for DirectSampler {
    fn default() -> Self {
        Self {
            edge_budget: DEFAULT_EDGE_BUDGET,
        }
    }
}

/// Direct sample on `Λ_n` with the default budget and no marks.
pub fn direct_sample<R: Real, G: Rng + ?Sized>(
    params: &ModelParams<R>,
    n: u32,
    rng: &mut G,
) -> Result<ClusterPartition> {
    DirectSampler::default().sample(params, n, &[], rng)
}

/// Unordered pairs at distance `L^k` inside `Λ_n`: `|Λ_n| |Λ_k \ Λ_{k-1}| / 2`.
pub fn pair_count(volume: u64, annulus: u128) -> Result<u64> {
    u64::try_from(volume as u128 * annulus / 2)
        .map_err(|_| Error::Overflow("pair count at one level".into()))
}

impl DirectSampler {
    /// Expected number of open edges in `Λ_n`.
    pub fn expected_open_edges<R: Real>(params: &ModelParams<R>, n: u32) -> Result<f64> {
        let lat = params.lattice().with_level(n);
        let volume = lat.ball_volume(n)? as f64;
        Ok((1..=n)
            .map(|k| volume * lat.annulus_size_f64(k) / 2.0 * params.p_level(k).to_f64_lossy())
            .sum())
    }

    pub fn sample<R: Real, G: Rng + ?Sized>(
        &self,
        params: &ModelParams<R>,
        n: u32,
        marks: &[Point],
        rng: &mut G,
    ) -> Result<ClusterPartition> {
        if !params.kernel().is_radial() {
            return Err(Error::NonRadialKernel(params.kernel().name().into()));
        }
        let lat = params.lattice().with_level(n);
        let volume = lat.volume()?;
        if volume > u32::MAX as usize {
            return Err(Error::Overflow(format!("|Λ_{n}| exceeds the addressable range")));
        }
        let expected = Self::expected_open_edges(params, n)?;
        if expected > self.edge_budget as f64 {
            return Err(Error::EdgeBudget {
                expected,
                budget: self.edge_budget,
            });
        }
        let packed_marks = marks.iter().map(|m| lat.pack(m)).collect::<Result<Vec<_>>>()?;
        let ball = PackedBall::new(&lat);
        let mut part = ClusterPartition::new(ball, volume, packed_marks);
        let n_u64 = volume as u64;
        let mut seen: HashSet<u64> = HashSet::new();

        for k in 1..=n {
            let pairs = pair_count(n_u64, lat.annulus_size(k as i64)?)?;
            let p = params.p_level(k).to_f64_lossy();
            if p <= 0.0 || pairs == 0 {
                continue;
            }
            let open = if p >= 1.0 {
                pairs
            } else {
                Binomial::new(pairs, p)
                    .expect("valid binomial parameters")
                    .sample(rng)
            };
            if open == 0 {
                continue;
            }
            if 2 * open <= pairs {
                // Sparse: uniform point plus uniform annulus offset, redrawing duplicates.
                seen.clear();
                seen.reserve(open as usize);
                let mut placed = 0;
                while placed < open {
                    let x = rng.random_range(0..n_u64);
                    let y = ball.add(&lat, x, ball.sample_annulus_offset(k, rng));
                    let key = x.min(y) * n_u64 + x.max(y);
                    if seen.insert(key) {
                        part.union(x, y);
                        placed += 1;
                    }
                }
            } else {
                // Dense: pick the open pairs by index among all pairs at this level.
                for idx in index::sample(rng, pairs as usize, open as usize) {
                    let (x, y) = decode_pair(&ball, lat.torus_size() as u64, k, idx as u64);
                    part.union(x, y);
                }
            }
        }
        Ok(part)
    }
}

/// Maps `idx` in `[0, pairs at level k)` to an unordered pair at distance `L^k`.
fn decode_pair(ball: &PackedBall, torus: u64, k: u32, idx: u64) -> (u64, u64) {
    let block = ball.block(k);
    let sub = ball.block(k - 1);
    let sub_sq = sub * sub;
    let per_block = torus * (torus - 1) / 2 * sub_sq;
    let (b, r) = (idx / per_block, idx % per_block);
    let (mut pair, within) = (r / sub_sq, r % sub_sq);
    let mut i = 0;
    while pair >= torus - 1 - i {
        pair -= torus - 1 - i;
        i += 1;
    }
    let j = i + 1 + pair;
    let (u, v) = (within / sub, within % sub);
    (b * block + i * sub + u, b * block + j * sub + v)
}
