use rand::seq::index;

use super::Graph;
use crate::dense::RngState;

/// Uniform sample without replacement of `min(b, deg(v))` neighbors of `v`,
/// returned in ascending order. Isolated nodes yield an empty set.
pub fn sample_neighbors(g: &Graph, v: usize, b: usize, rng: &mut RngState) -> Vec<usize> {
    let nb = g.neighbors(v);
    if b >= nb.len() {
        return nb.to_vec();
    }
    let mut picked: Vec<usize> = index::sample(rng, nb.len(), b)
        .into_iter()
        .map(|i| nb[i])
        .collect();
    picked.sort_unstable();
    picked
}
