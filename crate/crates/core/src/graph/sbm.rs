use rand::seq::SliceRandom;
use rand::Rng;

use super::{Graph, NodeData, Split};
use crate::dense::{Matrix, RngState};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Stochastic block model parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbmSpec {
    pub blocks: usize,
    pub block_size: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
}

/// Half-width of the uniform noise added to the one-hot features.
pub const SBM_FEATURE_NOISE: f64 = 0.1;

/// Samples an undirected SBM. Labels are block ids, features are
/// `one_hot(block) + U[-0.1, 0.1]` per coordinate, and nodes are split
/// 50/25/25 into train/val/test by a seeded shuffle.
pub fn generate_sbm<T: Scalar>(spec: &SbmSpec, seed: u64) -> Result<(Graph, NodeData<T>)> {
    let SbmSpec {
        blocks,
        block_size,
        p_in,
        p_out,
        feature_dim,
    } = *spec;
    if blocks == 0 || block_size == 0 || feature_dim == 0 {
        return Err(Error::InvalidArgument("SBM sizes must be positive".into()));
    }
    let n = blocks * block_size;
    if n < 2 {
        return Err(Error::InvalidArgument("SBM needs at least 2 nodes".into()));
    }
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) || p_out > p_in {
        return Err(Error::InvalidArgument(format!(
            "SBM probabilities need 0 <= p_out <= p_in <= 1 (got p_in={p_in}, p_out={p_out})"
        )));
    }
    if feature_dim < blocks {
        return Err(Error::InvalidArgument(format!(
            "feature_dim {feature_dim} cannot hold a one-hot over {blocks} blocks"
        )));
    }

    let block_of = |v: usize| v / block_size;
    let mut edge_rng = RngState::stream(seed, 0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if block_of(u) == block_of(v) { p_in } else { p_out };
            if edge_rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let graph = Graph::from_edges(n, &edges, true)?;

    let mut feat_rng = RngState::stream(seed, 1);
    let features = Matrix::from_fn(n, feature_dim, |v, j| {
        let base = if j == block_of(v) { 1.0 } else { 0.0 };
        T::lit(base + feat_rng.random_range(-SBM_FEATURE_NOISE..=SBM_FEATURE_NOISE))
    });
    let labels: Vec<usize> = (0..n).map(block_of).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut RngState::stream(seed, 2));
    let n_train = n / 2;
    let n_val = n / 4;
    let mut split = vec![Split::Test; n];
    for (rank, &v) in order.iter().enumerate() {
        split[v] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    let data = NodeData::new(features, labels, blocks, split)?;
    Ok((graph, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(blocks: usize, block_size: usize, p_in: f64, p_out: f64) -> SbmSpec {
        SbmSpec {
            blocks,
            block_size,
            p_in,
            p_out,
            feature_dim: blocks,
        }
    }

    #[test]
    fn degenerate_probabilities_give_cliques() {
        let (g, d) = generate_sbm::<f64>(&spec(2, 3, 1.0, 0.0), 1).unwrap();
        assert_eq!(d.labels, vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(g.neighbors(0), &[1, 2]);
        assert_eq!(g.neighbors(4), &[3, 5]);
        assert_eq!(g.num_arcs(), 12);
    }

    #[test]
    fn deterministic_for_seed() {
        let s = spec(3, 10, 0.4, 0.05);
        let a = generate_sbm::<f64>(&s, 9).unwrap();
        let b = generate_sbm::<f64>(&s, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_sbm::<f64>(&s, 10).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn features_are_noisy_one_hots_and_split_is_50_25_25() {
        let (_, d) = generate_sbm::<f64>(&spec(2, 50, 0.2, 0.02), 4).unwrap();
        for v in 0..100 {
            for j in 0..2 {
                let base = if j == d.labels[v] { 1.0 } else { 0.0 };
                assert!((d.features[(v, j)] - base).abs() <= SBM_FEATURE_NOISE);
            }
        }
        assert_eq!(d.nodes_in(Split::Train).len(), 50);
        assert_eq!(d.nodes_in(Split::Val).len(), 25);
        assert_eq!(d.nodes_in(Split::Test).len(), 25);
    }

    #[test]
    fn within_block_edge_count_matches_binomial() {
        // Binomial(2·C(50,2), 0.2): mean 490, sd sqrt(2450·0.2·0.8)
        let trials = 2.0 * 1225.0;
        let mean = trials * 0.2;
        let sd = (trials * 0.2 * 0.8f64).sqrt();
        let seeds = 20;
        let mut total = 0.0;
        for seed in 0..seeds {
            let (g, d) = generate_sbm::<f64>(&spec(2, 50, 0.2, 0.02), seed).unwrap();
            let within = (0..100)
                .flat_map(|v| g.neighbors(v).iter().map(move |&u| (v, u)))
                .filter(|&(v, u)| v < u && d.labels[v] == d.labels[u])
                .count();
            total += within as f64;
        }
        let avg = total / seeds as f64;
        assert!(
            (avg - mean).abs() <= 3.0 * sd / (seeds as f64).sqrt(),
            "mean within-block edges {avg} vs {mean}"
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(generate_sbm::<f64>(&spec(2, 3, 0.1, 0.5), 0).is_err());
        assert!(generate_sbm::<f64>(&spec(2, 3, 1.5, 0.0), 0).is_err());
        assert!(generate_sbm::<f64>(&spec(0, 3, 0.5, 0.0), 0).is_err());
        assert!(generate_sbm::<f64>(&spec(1, 1, 0.5, 0.0), 0).is_err());
    }
}
