use crate::lattice::PackedBall;

/// Disjoint-set forest over the packed points of a ball, with per-level
/// open-edge counts and a list of marked vertices.
#[derive(Clone, Debug)]
pub struct ClusterPartition {
    parent: Vec<u32>,
    size: Vec<u32>,
    open_edges: Vec<u64>,
    marks: Vec<u64>,
    components: usize,
    max_size: u32,
    ball: PackedBall,
}

impl ClusterPartition {
    pub fn new(ball: PackedBall, volume: usize, marks: Vec<u64>) -> Self {
        Self {
            parent: (0..volume as u32).collect(),
            size: vec![1; volume],
            open_edges: vec![0; ball.level() as usize],
            marks,
            components: volume,
            max_size: u32::from(volume > 0),
            ball,
        }
    }

    pub fn volume(&self) -> usize {
        self.parent.len()
    }

    pub fn level(&self) -> u32 {
        self.ball.level()
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    /// Adds the open edge `{a, b}`; returns whether two components merged.
    pub fn union(&mut self, a: u64, b: u64) -> bool {
        let level = self.ball.distance_level(a, b);
        if level > 0 {
            self.open_edges[level as usize - 1] += 1;
        }
        let (mut ra, mut rb) = (self.find(a as u32), self.find(b as u32));
        if ra == rb {
            return false;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        self.max_size = self.max_size.max(self.size[ra as usize]);
        self.components -= 1;
        true
    }

    pub fn connected(&mut self, a: u64, b: u64) -> bool {
        self.find(a as u32) == self.find(b as u32)
    }

    pub fn cluster_size(&mut self, x: u64) -> u64 {
        let r = self.find(x as u32);
        self.size[r as usize] as u64
    }

    pub fn component_count(&self) -> usize {
        self.components
    }

    pub fn max_cluster_size(&self) -> u64 {
        self.max_size as u64
    }

    /// Open edges found at distance `L^k`, `k >= 1`.
    pub fn open_edges_at(&self, k: u32) -> u64 {
        self.open_edges[k as usize - 1]
    }

    pub fn total_open_edges(&self) -> u64 {
        self.open_edges.iter().sum()
    }

    pub fn marks(&self) -> &[u64] {
        &self.marks
    }

    /// Sizes of all components, one entry per component.
    pub fn component_sizes(&self) -> Vec<u64> {
        self.parent
            .iter()
            .enumerate()
            .filter(|&(i, &p)| i as u32 == p)
            .map(|(i, _)| self.size[i] as u64)
            .collect()
    }

    /// `(size, multiplicity)` pairs in increasing size.
    pub fn census(&self) -> Vec<(u64, u64)> {
        let mut sizes = self.component_sizes();
        sizes.sort_unstable();
        let mut out: Vec<(u64, u64)> = Vec::new();
        for s in sizes {
            match out.last_mut() {
                Some((last, c)) if *last == s => *c += 1,
                _ => out.push((s, 1)),
            }
        }
        out
    }

    /// Component label of each mark, numbered by first appearance.
    pub fn mark_groups(&mut self) -> Vec<usize> {
        let roots: Vec<u32> = self
            .marks
            .clone()
            .into_iter()
            .map(|m| self.find(m as u32))
            .collect();
        label_by_first_appearance(&roots)
    }
}

pub(crate) fn label_by_first_appearance<T: PartialEq + Copy>(keys: &[T]) -> Vec<usize> {
    let mut seen: Vec<T> = Vec::new();
    keys.iter()
        .map(|k| match seen.iter().position(|s| s == k) {
            Some(i) => i,
            None => {
                seen.push(*k);
                seen.len() - 1
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeParams;

    #[test]
    fn union_bookkeeping() {
        let lat = LatticeParams::new(1, 2, 3).unwrap();
        let ball = PackedBall::new(&lat);
        let mut part = ClusterPartition::new(ball, 8, vec![0, 5]);
        assert_eq!(part.component_count(), 8);
        assert!(part.union(0, 1));
        assert!(part.union(1, 5));
        assert!(!part.union(0, 5));
        assert_eq!(part.open_edges_at(1), 1);
        assert_eq!(part.open_edges_at(3), 2);
        assert_eq!(part.cluster_size(5), 3);
        assert_eq!(part.max_cluster_size(), 3);
        assert_eq!(part.component_sizes().iter().sum::<u64>(), 8);
        assert_eq!(part.census(), vec![(1, 5), (3, 1)]);
        assert_eq!(part.mark_groups(), vec![0, 0]);
        let r = part.find(5);
        assert_eq!(part.find(r), r);
    }
}
