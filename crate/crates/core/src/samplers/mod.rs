//! Exact samplers of the cluster structure.
//!
//! * [`direct`]: every open edge of `Λ_n`, unioned in a disjoint-set forest.
//! * [`recursive`]: block recursion over the size census only.
//! * [`explorer`]: breadth-first revelation of the origin's cluster, in a ball
//!   or in infinite volume.

pub mod binomial;
pub mod direct;
pub mod explorer;
pub mod partition;
pub mod recursive;

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::kernel::ModelParams;
use crate::lattice::Point;
use crate::real::Real;

pub use direct::{direct_sample, DirectSampler};
pub use explorer::{
    explore_root_cluster, ClusterSize, ExplorationResult, Explorer, ExplorerConfig, Restriction,
};
pub use partition::ClusterPartition;
pub use recursive::{recursive_cluster_sample, ClusterMultiset, MarkedCluster, RecursiveSampler};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    Direct,
    Recursive,
    Explorer,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 3] = [SamplerKind::Direct, SamplerKind::Recursive, SamplerKind::Explorer];

    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Direct => "direct",
            SamplerKind::Recursive => "recursive",
            SamplerKind::Explorer => "explorer",
        }
    }
}

/// What one replicate on `Λ_n` reveals. The explorer sees only the origin's
/// cluster, so it leaves the whole-ball fields empty.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Observation {
    pub kroot: u64,
    pub kmax: Option<u64>,
    pub census: Option<Vec<(u64, u64)>>,
    /// Whether each mark lies in the origin's cluster.
    pub root_connected: Vec<bool>,
    /// Cluster label of each mark, numbered by first appearance.
    pub mark_groups: Option<Vec<usize>>,
    pub open_edges: Option<u64>,
}

/// One replicate of `kind` on `Λ_n`.
pub fn observe<R: Real, G: Rng + ?Sized>(
    kind: SamplerKind,
    params: &ModelParams<R>,
    n: u32,
    marks: &[Point],
    rng: &mut G,
) -> Result<Observation> {
    let mut with_root = Vec::with_capacity(marks.len() + 1);
    with_root.push(Point::zero());
    with_root.extend_from_slice(marks);
    match kind {
        SamplerKind::Direct => {
            let mut part = DirectSampler::default().sample(params, n, &with_root, rng)?;
            let groups = part.mark_groups();
            Ok(Observation {
                kroot: part.cluster_size(0),
                kmax: Some(part.max_cluster_size()),
                census: Some(part.census()),
                root_connected: groups[1..].iter().map(|&g| g == groups[0]).collect(),
                mark_groups: Some(partition::label_by_first_appearance(&groups[1..])),
                open_edges: Some(part.total_open_edges()),
            })
        }
        SamplerKind::Recursive => {
            let ms = recursive_cluster_sample(params, n, &with_root, rng)?;
            let groups = ms.mark_groups(with_root.len());
            Ok(Observation {
                kroot: ms.mark_size(0).expect("origin is marked"),
                kmax: Some(ms.max_size()),
                census: Some(ms.census().to_vec()),
                root_connected: groups[1..].iter().map(|&g| g == groups[0]).collect(),
                mark_groups: Some(partition::label_by_first_appearance(&groups[1..])),
                open_edges: None,
            })
        }
        SamplerKind::Explorer => {
            let lat = params.lattice().with_level(n);
            for m in marks {
                lat.validate(m)?;
            }
            let cap = lat.volume()? as u64 + 1;
            let res = explore_root_cluster(params, ExplorerConfig::new(Restriction::Ball(n), cap), rng)?;
            Ok(Observation {
                kroot: res.size.value(),
                kmax: None,
                census: None,
                root_connected: marks.iter().map(|m| res.visited.contains(m)).collect(),
                mark_groups: None,
                open_edges: Some(res.edge_queries),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn observations_are_consistent() {
        let p = ModelParams::power_law(LatticeParams::new(1, 2, 3).unwrap(), 0.5, 1.0).unwrap();
        let lat = p.lattice().with_level(3);
        let marks: Vec<Point> = lat.ball_points().unwrap().collect();
        for kind in SamplerKind::ALL {
            for seed in 0..100 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let obs = observe(kind, &p, 3, &marks, &mut rng).unwrap();
                assert!(obs.root_connected[0]);
                let linked = obs.root_connected.iter().filter(|&&c| c).count() as u64;
                assert_eq!(linked, obs.kroot, "{}", kind.name());
                if let Some(groups) = &obs.mark_groups {
                    assert_eq!(groups[0], 0);
                    for (g, &c) in groups.iter().zip(&obs.root_connected) {
                        assert_eq!(*g == 0, c);
                    }
                }
                if let Some(kmax) = obs.kmax {
                    assert!(kmax >= obs.kroot);
                }
            }
        }
    }
}
