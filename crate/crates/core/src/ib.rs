//! In-batch feature momentum: node-wise neighbor-sampled minibatches where
//! each sampled node's aggregated input is a moving average of unbiased
//! sub-sampled estimates.
//!
//! History layer `k−1` holds `h̃ᵏ`, the momentum aggregate that feeds layer
//! `k`, so its width is the layer's aggregate width.

use rand::seq::SliceRandom;

use crate::adam::AdamState;
use crate::dense::{Matrix, RngState};
use crate::error::{Error, Result};
use crate::graph::{sample_neighbors, Graph, NodeData, Split};
use crate::history::HistoryTable;
use crate::layers::{combine, sampled_terms, softmax_xent, ForwardTape, Model, Term};
use crate::scalar::Scalar;
use crate::train::{tape_reals, EpochAccumulator, EpochMetrics};

const EPOCH_STREAM: u64 = 0x1b;

#[derive(Debug, Clone, PartialEq)]
pub struct IBConfig {
    /// `b_k` for layers `1..K`.
    pub neighbor_sizes: Vec<usize>,
    pub batch_size: usize,
    /// `β₀,ₖ` for layers `1..K`, each in `(0, 1]`.
    pub beta0: Vec<f64>,
    pub epochs: usize,
    pub seed: u64,
}

impl IBConfig {
    pub fn validate(&self, num_layers: usize) -> Result<()> {
        if self.neighbor_sizes.len() != num_layers || self.beta0.len() != num_layers {
            return Err(Error::Config(format!(
                "neighbor_sizes ({}) and beta0 ({}) need one entry per layer ({num_layers})",
                self.neighbor_sizes.len(),
                self.beta0.len()
            )));
        }
        if self.neighbor_sizes.contains(&0) {
            return Err(Error::Config("neighbor sizes must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if let Some(b) = self.beta0.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
            return Err(Error::Config(format!("beta0 must lie in (0, 1], got {b}")));
        }
        Ok(())
    }
}

/// Node sets `𝒟_0..𝒟_K` (sorted) and, for each layer `k ≥ 1`, the sampled
/// neighborhood of every node of `𝒟_k` (aligned with `nodes[k]`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IBBatch {
    pub nodes: Vec<Vec<usize>>,
    pub sampled: Vec<Vec<Vec<usize>>>,
}

impl IBBatch {
    pub fn num_layers(&self) -> usize {
        self.sampled.len()
    }

    pub fn targets(&self) -> &[usize] {
        self.nodes.last().expect("batch has K+1 node sets")
    }
}

/// Top-down construction: `𝒟_K = targets`, `𝒟_{k−1} = ∪_{v∈𝒟_k} ℬ_v ∪ {v}`.
pub fn build_batch(
    g: &Graph,
    targets: &[usize],
    neighbor_sizes: &[usize],
    rng: &mut RngState,
) -> Result<IBBatch> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("build_batch: empty targets".into()));
    }
    if let Some(&v) = targets.iter().find(|&&v| v >= g.num_nodes()) {
        return Err(Error::IndexOutOfRange {
            what: "target node",
            index: v,
            limit: g.num_nodes(),
        });
    }
    let k_layers = neighbor_sizes.len();
    let mut top: Vec<usize> = targets.to_vec();
    top.sort_unstable();
    top.dedup();
    let mut nodes = vec![Vec::new(); k_layers + 1];
    let mut sampled = vec![Vec::new(); k_layers];
    nodes[k_layers] = top;
    for k in (1..=k_layers).rev() {
        let mut below = Vec::new();
        let mut per_node = Vec::with_capacity(nodes[k].len());
        for &v in &nodes[k] {
            let s = sample_neighbors(g, v, neighbor_sizes[k - 1], rng);
            below.push(v);
            below.extend_from_slice(&s);
            per_node.push(s);
        }
        below.sort_unstable();
        below.dedup();
        nodes[k - 1] = below;
        sampled[k - 1] = per_node;
    }
    Ok(IBBatch { nodes, sampled })
}

/// History table shaped for `model`: layer `k−1` has the aggregate width of
/// layer `k`.
pub fn ib_history<T: Scalar>(num_nodes: usize, model: &Model<T>) -> HistoryTable<T> {
    let dims: Vec<usize> = model
        .layers
        .iter()
        .map(|l| l.kind.aggregate_dim(l.input_dim()))
        .collect();
    HistoryTable::new(num_nodes, &dims)
}

/// Forward pass over one batch. For each layer and each `v ∈ 𝒟_k` the
/// sub-sampled estimate is folded into the history with `β₀,ₖ`, and the
/// layer is applied to the updated history row. Only the `β₀,ₖ·Â` part of
/// each row carries gradient.
pub fn ib_forward<T: Scalar>(
    g: &Graph,
    model: &Model<T>,
    history: &mut HistoryTable<T>,
    batch: &IBBatch,
    beta0: &[f64],
    features: &Matrix<T>,
) -> Result<ForwardTape<T>> {
    let k_layers = model.num_layers();
    if batch.num_layers() != k_layers || beta0.len() != k_layers {
        return Err(Error::dims("ib_forward layers", k_layers, batch.num_layers()));
    }
    if history.num_layers() != k_layers {
        return Err(Error::dims("ib_forward history layers", k_layers, history.num_layers()));
    }
    let mut tape = ForwardTape { layers: Vec::with_capacity(k_layers) };
    let first_input = features.select_rows(&batch.nodes[0]);
    for k in 1..=k_layers {
        let layer = &model.layers[k - 1];
        let agg_dim = layer.kind.aggregate_dim(layer.input_dim());
        if history.dim(k - 1) != agg_dim {
            return Err(Error::dims("ib_forward history width", agg_dim, history.dim(k - 1)));
        }
        let input = if k == 1 { &first_input } else { &tape.layers[k - 2].output };
        if input.cols() != layer.input_dim() {
            return Err(Error::dims("ib_forward input width", layer.input_dim(), input.cols()));
        }
        let below = &batch.nodes[k - 1];
        let local = |u: usize| below.binary_search(&u).expect("sampled node lies in the layer below");
        let beta = T::lit(beta0[k - 1]);
        let rows = &batch.nodes[k];
        let mut agg = Matrix::zeros(rows.len(), agg_dim);
        let mut plan = Vec::with_capacity(rows.len());
        for (r, &v) in rows.iter().enumerate() {
            let terms: Vec<Term<T>> = sampled_terms(g, layer.kind, v, &batch.sampled[k - 1][r])?
                .into_iter()
                .map(|t| Term { node: local(t.node), ..t })
                .collect();
            let estimate = combine(&terms, input.cols(), layer.blocks(), |i| input.row(i));
            history.momentum_write(k - 1, v, &estimate, beta)?;
            agg.row_mut(r).copy_from_slice(history.row(k - 1, v)?);
            plan.push(terms.into_iter().map(|t| Term { weight: t.weight * beta, ..t }).collect());
        }
        tape.layers.push(model.layer_step(k - 1, agg, plan)?);
    }
    Ok(tape)
}

/// Owns everything mutable during in-batch momentum training.
#[derive(Debug, Clone)]
pub struct IBTrainer<T> {
    pub config: IBConfig,
    pub model: Model<T>,
    pub history: HistoryTable<T>,
    pub adam: AdamState<T>,
    pub epoch: usize,
    /// Minibatch counter; one iteration is one minibatch.
    pub t: i64,
}

impl<T: Scalar> IBTrainer<T> {
    pub fn new(config: IBConfig, model: Model<T>, adam: AdamState<T>, num_nodes: usize) -> Result<Self> {
        config.validate(model.num_layers())?;
        let history = ib_history(num_nodes, &model);
        Ok(Self {
            config,
            model,
            history,
            adam,
            epoch: 0,
            t: 0,
        })
    }

    /// Advances the clock, runs the forward pass on `batch` and leaves the
    /// minibatch-mean gradient in the model. Returns the loss and the tape.
    pub fn batch_gradient(
        &mut self,
        g: &Graph,
        data: &NodeData<T>,
        batch: &IBBatch,
    ) -> Result<(T, ForwardTape<T>)> {
        self.t += 1;
        self.history.set_iter(self.t)?;
        let tape = ib_forward(g, &self.model, &mut self.history, batch, &self.config.beta0, &data.features)?;
        let labels: Vec<usize> = batch.targets().iter().map(|&v| data.labels[v]).collect();
        let rows: Vec<usize> = (0..labels.len()).collect();
        let (loss, grad) = softmax_xent(tape.output(), &labels, &rows)?;
        self.model.zero_grads();
        self.model.backward(&tape, &grad)?;
        Ok((loss, tape))
    }

    pub fn apply_gradient(&mut self) -> Result<()> {
        let mut params = self.model.flat_params();
        self.adam.step(&mut params, &self.model.flat_grads())?;
        self.model.set_flat_params(&params)
    }

    pub fn train_epoch(&mut self, g: &Graph, data: &NodeData<T>) -> Result<EpochMetrics> {
        let mut train = data.nodes_in(Split::Train);
        if train.is_empty() {
            return Err(Error::InvalidArgument("training split is empty".into()));
        }
        let mut rng = RngState::stream(self.config.seed, EPOCH_STREAM).split(self.epoch as u64);
        train.shuffle(&mut rng);
        let mut acc = EpochAccumulator::default();
        for targets in train.chunks(self.config.batch_size) {
            let batch = build_batch(g, targets, &self.config.neighbor_sizes, &mut rng)?;
            let (loss, tape) = self.batch_gradient(g, data, &batch)?;
            self.apply_gradient()?;
            acc.add_batch(loss.as_f64(), targets.len(), tape_reals(&tape));
        }
        self.epoch += 1;
        acc.finish(self.epoch, g, data, &self.model, self.history.stored_reals(), self.adam.t)
    }
}
