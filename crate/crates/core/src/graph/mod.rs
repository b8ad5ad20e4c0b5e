//! Immutable CSR graph, node data, dataset I/O, synthetic generation,
//! neighbor sampling and cluster partitioning.

mod io;
mod partition;
mod sampling;
mod sbm;

pub use io::{
    load_edge_list, load_features_csv, load_labels_csv, load_splits_csv, parse_edge_list,
    write_edge_list, write_features_csv, write_labels_csv, write_splits_csv,
};
pub use partition::{partition_greedy_bfs, Partition};
pub use sampling::sample_neighbors;
pub use sbm::{generate_sbm, SbmSpec};

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Compressed sparse row adjacency. Neighbor lists are sorted, unique and
/// never contain the node itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    undirected: bool,
}

impl Graph {
    /// Builds a graph from an edge list. Self-loops are dropped and
    /// duplicates merged; undirected graphs get both directions.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)], undirected: bool) -> Result<Self> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(u, v) in edges {
            for id in [u, v] {
                if id >= num_nodes {
                    return Err(Error::IndexOutOfRange {
                        what: "node",
                        index: id,
                        limit: num_nodes,
                    });
                }
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            if undirected {
                adj[v].push(u);
            }
        }
        Ok(Self::from_adjacency(adj, undirected))
    }

    fn from_adjacency(mut adj: Vec<Vec<usize>>, undirected: bool) -> Self {
        let mut row_offsets = Vec::with_capacity(adj.len() + 1);
        let mut col_indices = Vec::new();
        row_offsets.push(0);
        for list in adj.iter_mut() {
            list.sort_unstable();
            list.dedup();
            col_indices.extend_from_slice(list);
            row_offsets.push(col_indices.len());
        }
        Self {
            num_nodes: adj.len(),
            row_offsets,
            col_indices,
            undirected,
        }
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of stored directed arcs.
    pub fn num_arcs(&self) -> usize {
        self.col_indices.len()
    }

    pub fn is_undirected(&self) -> bool {
        self.undirected
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[v]..self.row_offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.row_offsets[v + 1] - self.row_offsets[v]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    /// Relabels nodes: node `v` becomes `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_nodes {
            return Err(Error::dims("Graph::permute", self.num_nodes, perm.len()));
        }
        let mut adj = vec![Vec::new(); self.num_nodes];
        for v in 0..self.num_nodes {
            adj[perm[v]] = self.neighbors(v).iter().map(|&u| perm[u]).collect();
        }
        Ok(Self::from_adjacency(adj, self.undirected))
    }

    /// Full scan of the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.row_offsets.len() != self.num_nodes + 1
            || self.row_offsets[0] != 0
            || self.row_offsets[self.num_nodes] != self.col_indices.len()
        {
            return bad("row offsets do not bracket the column array".into());
        }
        for v in 0..self.num_nodes {
            if self.row_offsets[v] > self.row_offsets[v + 1] {
                return bad(format!("row offsets decrease at {v}"));
            }
            let nb = self.neighbors(v);
            for w in nb.windows(2) {
                if w[0] >= w[1] {
                    return bad(format!("neighbors of {v} not strictly increasing"));
                }
            }
            for &u in nb {
                if u >= self.num_nodes {
                    return bad(format!("neighbor {u} of {v} out of range"));
                }
                if u == v {
                    return bad(format!("self-loop stored at {v}"));
                }
                if self.undirected && !self.has_edge(u, v) {
                    return bad(format!("asymmetric edge {v}->{u}"));
                }
            }
        }
        Ok(())
    }
}

/// Dataset split a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

/// Node features, class labels and split assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeData<T> {
    pub features: Matrix<T>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Vec<Split>,
}

impl<T: Scalar> NodeData<T> {
    pub fn new(
        features: Matrix<T>,
        labels: Vec<usize>,
        num_classes: usize,
        split: Vec<Split>,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n || split.len() != n {
            return Err(Error::dims(
                "NodeData::new",
                format!("{n} labels and splits"),
                format!("{} labels, {} splits", labels.len(), split.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} >= num_classes {num_classes}"
            )));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            split,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn nodes_in(&self, split: Split) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&v| self.split[v] == split).collect()
    }

    pub fn train_mask(&self) -> Vec<bool> {
        self.split.iter().map(|&s| s == Split::Train).collect()
    }

    /// Relabels nodes consistently with [`Graph::permute`].
    pub fn permute(&self, perm: &[usize]) -> Self {
        let n = self.num_nodes();
        let mut inv = vec![0; n];
        for (v, &p) in perm.iter().enumerate() {
            inv[p] = v;
        }
        Self {
            features: self.features.select_rows(&inv),
            labels: inv.iter().map(|&v| self.labels[v]).collect(),
            num_classes: self.num_classes,
            split: inv.iter().map(|&v| self.split[v]).collect(),
        }
    }
}
