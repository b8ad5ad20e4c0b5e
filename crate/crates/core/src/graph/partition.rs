use std::collections::VecDeque;

use rand::seq::SliceRandom;

use super::Graph;
use crate::dense::RngState;
use crate::error::{Error, Result};

/// Disjoint cover of the node set by non-empty clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Partition {
    /// Builds a partition from a node → cluster map.
    pub fn from_assignment(assignment: Vec<usize>, num_clusters: usize) -> Result<Self> {
        let mut members = vec![Vec::new(); num_clusters];
        for (v, &c) in assignment.iter().enumerate() {
            if c >= num_clusters {
                return Err(Error::IndexOutOfRange {
                    what: "cluster",
                    index: c,
                    limit: num_clusters,
                });
            }
            members[c].push(v);
        }
        if let Some(c) = members.iter().position(|m| m.is_empty()) {
            return Err(Error::InvalidArgument(format!("cluster {c} is empty")));
        }
        Ok(Self {
            assignment,
            members,
        })
    }

    /// Single cluster holding every node.
    pub fn whole(num_nodes: usize) -> Self {
        Self {
            assignment: vec![0; num_nodes],
            members: vec![(0..num_nodes).collect()],
        }
    }

    pub fn num_clusters(&self) -> usize {
        self.members.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_of(&self, v: usize) -> usize {
        self.assignment[v]
    }

    /// Sorted member list of cluster `c`.
    pub fn members(&self, c: usize) -> &[usize] {
        &self.members[c]
    }
}

/// Greedy BFS partitioner.
///
/// Cluster `c` receives `⌈remaining / clusters_left⌉` nodes, grown by BFS
/// from roots taken in a seeded random order; when a BFS runs out of
/// reachable unassigned nodes the next root continues the same cluster.
/// Cluster sizes therefore differ by at most one.
pub fn partition_greedy_bfs(g: &Graph, num_clusters: usize, seed: u64) -> Result<Partition> {
    let n = g.num_nodes();
    if num_clusters == 0 || num_clusters > n {
        return Err(Error::InvalidArgument(format!(
            "num_clusters must be in 1..={n}, got {num_clusters}"
        )));
    }
    let mut roots: Vec<usize> = (0..n).collect();
    roots.shuffle(&mut RngState::new(seed));

    const UNASSIGNED: usize = usize::MAX;
    let mut assignment = vec![UNASSIGNED; n];
    let mut queued = vec![false; n];
    let mut next_root = 0;
    let mut remaining = n;
    for c in 0..num_clusters {
        let target = remaining.div_ceil(num_clusters - c);
        let mut size = 0;
        let mut queue = VecDeque::new();
        let mut touched = Vec::new();
        while size < target {
            if queue.is_empty() {
                while assignment[roots[next_root]] != UNASSIGNED {
                    next_root += 1;
                }
                let r = roots[next_root];
                queued[r] = true;
                touched.push(r);
                queue.push_back(r);
            }
            let v = queue.pop_front().expect("queue refilled above");
            assignment[v] = c;
            size += 1;
            for &u in g.neighbors(v) {
                if assignment[u] == UNASSIGNED && !queued[u] {
                    queued[u] = true;
                    touched.push(u);
                    queue.push_back(u);
                }
            }
        }
        for v in touched {
            queued[v] = false;
        }
        remaining -= size;
    }
    debug_assert_eq!(remaining, 0);
    Partition::from_assignment(assignment, num_clusters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_triangles() -> Graph {
        Graph::from_edges(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)], true).unwrap()
    }

    #[test]
    fn single_cluster() {
        let p = partition_greedy_bfs(&two_triangles(), 1, 3).unwrap();
        assert_eq!(p.members(0), &[0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn singletons() {
        let p = partition_greedy_bfs(&two_triangles(), 6, 3).unwrap();
        assert!((0..6).all(|c| p.members(c).len() == 1));
    }

    #[test]
    fn disjoint_triangles_split_cleanly() {
        // every seed must recover the two components
        for seed in 0..50 {
            let p = partition_greedy_bfs(&two_triangles(), 2, seed).unwrap();
            let mut clusters: Vec<Vec<usize>> = (0..2).map(|c| p.members(c).to_vec()).collect();
            clusters.sort();
            assert_eq!(clusters, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        }
    }

    #[test]
    fn out_of_range() {
        assert!(partition_greedy_bfs(&two_triangles(), 0, 0).is_err());
        assert!(partition_greedy_bfs(&two_triangles(), 7, 0).is_err());
    }

    proptest! {
        #[test]
        fn disjoint_balanced_cover(
            n in 1usize..60,
            raw in proptest::collection::vec((0usize..60, 0usize..60), 0..150),
            k_frac in 0.0f64..1.0,
            seed in any::<u64>(),
        ) {
            let edges: Vec<_> = raw.into_iter().map(|(a, b)| (a % n, b % n)).collect();
            let g = Graph::from_edges(n, &edges, true).unwrap();
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let p = partition_greedy_bfs(&g, k, seed).unwrap();
            let mut seen = vec![false; n];
            for c in 0..k {
                prop_assert!(!p.members(c).is_empty());
                for &v in p.members(c) {
                    prop_assert!(!seen[v]);
                    seen[v] = true;
                    prop_assert_eq!(p.cluster_of(v), c);
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
            let sizes: Vec<usize> = (0..k).map(|c| p.members(c).len()).collect();
            let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
            prop_assert!(spread <= n.div_ceil(k));
            prop_assert_eq!(p.clone(), partition_greedy_bfs(&g, k, seed).unwrap());
        }
    }
}
