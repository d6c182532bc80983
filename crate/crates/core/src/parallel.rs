//! Replicate sharding with a fixed merge order.
//!
//! Replicates are grouped into fixed-size shards; shards run on the rayon
//! pool and their accumulators are merged in shard order. The result is
//! therefore independent of the worker count.

use rayon::prelude::*;

use crate::rng::{StreamKey, StreamRng};

pub const SHARD_SIZE: u64 = 1024;

/// Accumulator state that can absorb another shard.
pub trait Merge {
    fn merge(&mut self, other: Self);
}

/// Runs `step(acc, replicate, rng)` for every replicate in `0..replicates`,
/// each with the stream `key.stream(replicate)`.
pub fn map_reduce<A, I, F>(replicates: u64, key: &StreamKey, init: I, step: F) -> A
where
    A: Merge + Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, u64, &mut StreamRng) + Sync + Send,
{
    let shards = replicates.div_ceil(SHARD_SIZE);
    let parts: Vec<A> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut acc = init();
            let start = shard * SHARD_SIZE;
            let end = (start + SHARD_SIZE).min(replicates);
            for r in start..end {
                let mut rng = key.stream(r);
                step(&mut acc, r, &mut rng);
            }
            acc
        })
        .collect();
    let mut total = init();
    for part in parts {
        total.merge(part);
    }
    total
}

/// Like [`map_reduce`] but the step may fail; the first error by replicate order wins.
pub fn try_map_reduce<A, I, F, E>(replicates: u64, key: &StreamKey, init: I, step: F) -> Result<A, E>
where
    A: Merge + Send,
    E: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, u64, &mut StreamRng) -> Result<(), E> + Sync + Send,
{
    let shards = replicates.div_ceil(SHARD_SIZE);
    let parts: Vec<Result<A, E>> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut acc = init();
            let start = shard * SHARD_SIZE;
            let end = (start + SHARD_SIZE).min(replicates);
            for r in start..end {
                let mut rng = key.stream(r);
                step(&mut acc, r, &mut rng)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = init();
    for part in parts {
        total.merge(part?);
    }
    Ok(total)
}

impl<T> Merge for Vec<T> {
    fn merge(&mut self, mut other: Self) {
        self.append(&mut other);
    }
}
