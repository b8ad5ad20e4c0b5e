//! Neighborhood aggregation weights.
//!
//! Every aggregate in the engine is a weighted sum of source rows, so each
//! scheme is expressed as a list of [`Term`]s. The same term lists drive the
//! forward combination and the backward scatter.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;

/// How a layer combines a node with its neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    /// Mean over `𝒩_v ∪ {v}`.
    MeanSage,
    /// Symmetric-normalized sum with self-loop, `1/√((d_v+1)(d_u+1))`.
    Gcn,
    /// `[h_v ; mean(𝒩_v)]`, doubling the input width.
    ConcatSage,
}

impl LayerKind {
    /// Width of the aggregate fed to the weight matrix.
    pub fn aggregate_dim(self, d_in: usize) -> usize {
        match self {
            LayerKind::ConcatSage => 2 * d_in,
            _ => d_in,
        }
    }

    pub fn code(self) -> u64 {
        match self {
            LayerKind::MeanSage => 0,
            LayerKind::Gcn => 1,
            LayerKind::ConcatSage => 2,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(LayerKind::MeanSage),
            1 => Some(LayerKind::Gcn),
            2 => Some(LayerKind::ConcatSage),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::MeanSage => "mean_sage",
            LayerKind::Gcn => "gcn",
            LayerKind::ConcatSage => "concat_sage",
        }
    }
}

impl std::str::FromStr for LayerKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mean_sage" => Ok(LayerKind::MeanSage),
            "gcn" => Ok(LayerKind::Gcn),
            "concat_sage" => Ok(LayerKind::ConcatSage),
            other => Err(format!(
                "unknown layer kind '{other}' (mean_sage|gcn|concat_sage)"
            )),
        }
    }
}

/// One weighted source row. `block` selects the slot of the aggregate the
/// row lands in (always 0 except for the neighbor half of `ConcatSage`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term<T> {
    pub node: usize,
    pub weight: T,
    pub block: usize,
}

impl<T> Term<T> {
    fn new(node: usize, weight: T, block: usize) -> Self {
        Self {
            node,
            weight,
            block,
        }
    }
}

#[inline]
fn gcn_weight<T: Scalar>(g: &Graph, v: usize, u: usize) -> T {
    let dv = T::from_count(g.degree(v) + 1);
    let du = T::from_count(g.degree(u) + 1);
    T::one() / (dv * du).sqrt()
}

/// Exact aggregate over the full neighborhood of `v`.
pub fn full_terms<T: Scalar>(g: &Graph, kind: LayerKind, v: usize) -> Vec<Term<T>> {
    let nb = g.neighbors(v);
    match kind {
        LayerKind::MeanSage => {
            let w = T::one() / T::from_count(nb.len() + 1);
            std::iter::once(v)
                .chain(nb.iter().copied())
                .map(|u| Term::new(u, w, 0))
                .collect()
        }
        LayerKind::Gcn => std::iter::once(v)
            .chain(nb.iter().copied())
            .map(|u| Term::new(u, gcn_weight(g, v, u), 0))
            .collect(),
        LayerKind::ConcatSage => {
            let mut terms = vec![Term::new(v, T::one(), 0)];
            if !nb.is_empty() {
                let w = T::one() / T::from_count(nb.len());
                terms.extend(nb.iter().map(|&u| Term::new(u, w, 1)));
            }
            terms
        }
    }
}

/// Unbiased estimate of the full aggregate from a sampled subset
/// `sampled ⊆ 𝒩_v`: the self term keeps its exact weight and the sampled
/// neighbors are reweighted by `|𝒩_v| / |ℬ_v|`.
pub fn sampled_terms<T: Scalar>(
    g: &Graph,
    kind: LayerKind,
    v: usize,
    sampled: &[usize],
) -> Result<Vec<Term<T>>> {
    let nb = g.neighbors(v);
    if let Some(&u) = sampled.iter().find(|&&u| nb.binary_search(&u).is_err()) {
        return Err(Error::InvalidArgument(format!(
            "sampled node {u} is not a neighbor of {v}"
        )));
    }
    if sampled.is_empty() && !nb.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "empty sample for node {v} with degree {}",
            nb.len()
        )));
    }
    let deg = T::from_count(nb.len());
    let b = T::from_count(sampled.len().max(1));
    Ok(match kind {
        LayerKind::MeanSage => {
            let total = T::from_count(nb.len() + 1);
            let mut terms = vec![Term::new(v, T::one() / total, 0)];
            let w = deg / total / b;
            terms.extend(sampled.iter().map(|&u| Term::new(u, w, 0)));
            terms
        }
        LayerKind::Gcn => {
            let mut terms = vec![Term::new(v, gcn_weight(g, v, v), 0)];
            let scale = deg / b;
            terms.extend(
                sampled
                    .iter()
                    .map(|&u| Term::new(u, scale * gcn_weight::<T>(g, v, u), 0)),
            );
            terms
        }
        LayerKind::ConcatSage => {
            let mut terms = vec![Term::new(v, T::one(), 0)];
            let w = T::one() / b;
            terms.extend(sampled.iter().map(|&u| Term::new(u, w, 1)));
            terms
        }
    })
}

/// Aggregate restricted to `subset ⊆ 𝒩_v ∪ {v}`, renormalized so the
/// weights sum to the same total as the full aggregate. For the mean
/// aggregator this is the plain mean over `subset`.
pub fn partial_terms<T: Scalar>(
    g: &Graph,
    kind: LayerKind,
    v: usize,
    subset: &[usize],
) -> Result<Vec<Term<T>>> {
    if subset.is_empty() {
        return Err(Error::InvalidArgument(format!("empty subset for node {v}")));
    }
    match kind {
        LayerKind::MeanSage => {
            let w = T::one() / T::from_count(subset.len());
            Ok(subset.iter().map(|&u| Term::new(u, w, 0)).collect())
        }
        LayerKind::Gcn => {
            let total: T = std::iter::once(v)
                .chain(g.neighbors(v).iter().copied())
                .map(|u| gcn_weight::<T>(g, v, u))
                .sum();
            let part: T = subset.iter().map(|&u| gcn_weight::<T>(g, v, u)).sum();
            let scale = total / part;
            Ok(subset
                .iter()
                .map(|&u| Term::new(u, scale * gcn_weight::<T>(g, v, u), 0))
                .collect())
        }
        LayerKind::ConcatSage => Err(Error::InvalidArgument(
            "partial aggregation is not defined for concat_sage".into(),
        )),
    }
}

/// `Σ weight · row(node)` placed into `block`, for rows of width `d_in`.
pub fn combine<'a, T: Scalar>(
    terms: &[Term<T>],
    d_in: usize,
    blocks: usize,
    mut row: impl FnMut(usize) -> &'a [T],
) -> Vec<T> {
    let mut out = vec![T::zero(); d_in * blocks];
    for t in terms {
        let src = row(t.node);
        let dst = &mut out[t.block * d_in..(t.block + 1) * d_in];
        for (o, &x) in dst.iter_mut().zip(src) {
            *o += t.weight * x;
        }
    }
    out
}

/// Arithmetic mean of `h` over `𝒩_v ∪ {v}`.
pub fn mean_aggregate<T: Scalar>(g: &Graph, h: &crate::dense::Matrix<T>, v: usize) -> Vec<T> {
    let terms = full_terms(g, LayerKind::MeanSage, v);
    combine(&terms, h.cols(), 1, |u| h.row(u))
}

/// Sub-sampled mean estimate `(1/(|𝒩_v|+1))ĥ_v + (|𝒩_v|/(|𝒩_v|+1))·mean(ĥ_u : u ∈ ℬ_v)`.
pub fn estimate_aggregate<T: Scalar>(
    g: &Graph,
    h_hat: &crate::dense::Matrix<T>,
    v: usize,
    sampled: &[usize],
) -> Result<Vec<T>> {
    let terms = sampled_terms(g, LayerKind::MeanSage, v, sampled)?;
    Ok(combine(&terms, h_hat.cols(), 1, |u| h_hat.row(u)))
}
