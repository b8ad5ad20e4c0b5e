//! Out-of-batch feature momentum on cluster minibatches.
//!
//! Every in-batch node aggregates over its full neighborhood, reading fresh
//! values for in-batch neighbors and historical embeddings for the rest.
//! In `GraphFmOb` mode, before each layer's in-batch pass, frontier nodes
//! (out-of-batch 1-hop neighbors) receive a momentum update computed from
//! their in-batch neighbors only. `GnnAutoScale` skips those pushes.
//!
//! The history table has `K+1` layers: layer 0 stores inputs, layer `k`
//! stores outputs of layer `k`.

use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::adam::AdamState;
use crate::dense::{l2_row_normalize, Matrix, RngState};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeData, Partition, Split};
use crate::history::{HistoryTable, StalenessReport};
use crate::layers::{
    combine, full_batch_forward, full_terms, partial_terms, softmax_xent, ForwardTape, LayerKind,
    Model, Term, NORMALIZE_EPS,
};
use crate::scalar::Scalar;
use crate::train::{tape_reals, EpochAccumulator, EpochMetrics};

const EPOCH_STREAM: u64 = 0x2c;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OBMode {
    GraphFmOb,
    GnnAutoScale,
}

impl OBMode {
    pub fn name(self) -> &'static str {
        match self {
            OBMode::GraphFmOb => "graphfm_ob",
            OBMode::GnnAutoScale => "gnn_autoscale",
        }
    }
}

impl FromStr for OBMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "graphfm_ob" => Ok(OBMode::GraphFmOb),
            "gnn_autoscale" => Ok(OBMode::GnnAutoScale),
            other => Err(format!("unknown mode '{other}' (graphfm_ob|gnn_autoscale)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OBConfig {
    pub clusters_per_batch: usize,
    /// `β₀,ₖ` for layers `1..K`, each in `[0, 1]`; 0 disables pushes.
    pub beta0: Vec<f64>,
    /// A frontier node is pushed only if more than this many of its
    /// neighbors are in the batch.
    pub push_threshold: usize,
    pub mode: OBMode,
    /// Fold in-batch values into history with `β₀,ₖ` instead of
    /// overwriting.
    pub momentum_in_batch: bool,
    pub epochs: usize,
    pub seed: u64,
}

impl OBConfig {
    pub fn validate(&self, num_layers: usize, num_clusters: usize) -> Result<()> {
        if self.beta0.len() != num_layers {
            return Err(Error::Config(format!(
                "beta0 has {} entries, need one per layer ({num_layers})",
                self.beta0.len()
            )));
        }
        if let Some(b) = self.beta0.iter().find(|b| !(**b >= 0.0 && **b <= 1.0)) {
            return Err(Error::Config(format!("beta0 must lie in [0, 1], got {b}")));
        }
        if self.clusters_per_batch == 0 || self.clusters_per_batch > num_clusters {
            return Err(Error::Config(format!(
                "clusters_per_batch must be in 1..={num_clusters}, got {}",
                self.clusters_per_batch
            )));
        }
        Ok(())
    }

    fn pushes(&self, k: usize) -> bool {
        self.mode == OBMode::GraphFmOb && self.beta0[k - 1] > 0.0
    }
}

/// The in-batch set and its neighborhood split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSets {
    /// `𝒟_t`, sorted.
    pub nodes: Vec<usize>,
    /// `𝒮ᵗ_v = 𝒩̄_v ∩ 𝒟_t`, aligned with `nodes`.
    pub inside: Vec<Vec<usize>>,
    /// `𝒪ᵗ_v = 𝒩̄_v \ 𝒮ᵗ_v`, aligned with `nodes`.
    pub outside: Vec<Vec<usize>>,
    /// Out-of-batch nodes with more than `push_threshold` in-batch
    /// neighbors, sorted.
    pub frontier: Vec<usize>,
    /// In-batch neighbors of each frontier node, aligned with `frontier`.
    pub frontier_inside: Vec<Vec<usize>>,
}

impl BatchSets {
    pub fn contains(&self, v: usize) -> bool {
        self.nodes.binary_search(&v).is_ok()
    }

    fn local(&self, v: usize) -> Option<usize> {
        self.nodes.binary_search(&v).ok()
    }
}

pub fn build_ob_batch(
    g: &Graph,
    partition: &Partition,
    cluster_ids: &[usize],
    push_threshold: usize,
) -> Result<BatchSets> {
    let mut nodes = Vec::new();
    for &c in cluster_ids {
        if c >= partition.num_clusters() {
            return Err(Error::IndexOutOfRange {
                what: "cluster",
                index: c,
                limit: partition.num_clusters(),
            });
        }
        nodes.extend_from_slice(partition.members(c));
    }
    nodes.sort_unstable();
    nodes.dedup();
    if nodes.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let in_batch = |u: usize| nodes.binary_search(&u).is_ok();
    let mut inside = Vec::with_capacity(nodes.len());
    let mut outside = Vec::with_capacity(nodes.len());
    let mut touching = Vec::new();
    for &v in &nodes {
        let mut s = vec![v];
        let mut o = Vec::new();
        for &u in g.neighbors(v) {
            if in_batch(u) {
                s.push(u);
            } else {
                o.push(u);
                touching.push(u);
            }
        }
        s.sort_unstable();
        inside.push(s);
        outside.push(o);
    }
    touching.sort_unstable();
    touching.dedup();
    let mut frontier = Vec::new();
    let mut frontier_inside = Vec::new();
    for u in touching {
        let s: Vec<usize> = g.neighbors(u).iter().copied().filter(|&w| in_batch(w)).collect();
        if s.len() > push_threshold {
            frontier.push(u);
            frontier_inside.push(s);
        }
    }
    Ok(BatchSets {
        nodes,
        inside,
        outside,
        frontier,
        frontier_inside,
    })
}

/// History table shaped for `model`: widths `d_0..d_K`.
pub fn ob_history<T: Scalar>(num_nodes: usize, model: &Model<T>) -> HistoryTable<T> {
    HistoryTable::new(num_nodes, &model.dims())
}

/// Forward pass over one cluster batch, updating histories as it goes.
/// The tape covers the in-batch rows only; fetched histories and pushed
/// values are constants for backpropagation.
pub fn ob_forward<T: Scalar>(
    g: &Graph,
    model: &Model<T>,
    history: &mut HistoryTable<T>,
    batch: &BatchSets,
    cfg: &OBConfig,
    features: &Matrix<T>,
) -> Result<ForwardTape<T>> {
    let k_layers = model.num_layers();
    if history.num_layers() != k_layers + 1 || history.dims() != model.dims() {
        return Err(Error::dims(
            "ob_forward history",
            format!("{:?}", model.dims()),
            format!("{:?}", history.dims()),
        ));
    }
    if cfg.beta0.len() != k_layers {
        return Err(Error::dims("ob_forward beta0", k_layers, cfg.beta0.len()));
    }
    let fresh_input = features.select_rows(&batch.nodes);
    for (r, &v) in batch.nodes.iter().enumerate() {
        history.overwrite(0, v, fresh_input.row(r))?;
    }
    let eps = T::lit(NORMALIZE_EPS);
    let mut tape = ForwardTape { layers: Vec::with_capacity(k_layers) };
    for k in 1..=k_layers {
        let layer = &model.layers[k - 1];
        if layer.kind == LayerKind::ConcatSage {
            return Err(Error::InvalidArgument(
                "out-of-batch training does not support concat_sage".into(),
            ));
        }
        let input = if k == 1 { &fresh_input } else { &tape.layers[k - 2].output };
        let d_in = input.cols();
        let beta = T::lit(cfg.beta0[k - 1]);

        if cfg.pushes(k) && !batch.frontier.is_empty() {
            let mut agg = Matrix::zeros(batch.frontier.len(), d_in);
            for (r, (&u, s)) in batch.frontier.iter().zip(&batch.frontier_inside).enumerate() {
                let terms: Vec<Term<T>> = partial_terms(g, layer.kind, u, s)?
                    .into_iter()
                    .map(|t| Term { node: batch.local(t.node).expect("in-batch neighbor"), ..t })
                    .collect();
                agg.row_mut(r).copy_from_slice(&combine(&terms, d_in, 1, |i| input.row(i)));
            }
            let (mut pushed, _) = layer.forward(&agg)?;
            if model.normalizes(k - 1) {
                pushed = l2_row_normalize(&pushed, eps);
            }
            for (r, &u) in batch.frontier.iter().enumerate() {
                history.momentum_write(k, u, pushed.row(r), beta)?;
            }
        }

        let mut agg = Matrix::zeros(batch.nodes.len(), d_in);
        let mut plan = Vec::with_capacity(batch.nodes.len());
        for (r, &v) in batch.nodes.iter().enumerate() {
            let mut fresh = Vec::new();
            let row = agg.row_mut(r);
            for t in full_terms::<T>(g, layer.kind, v) {
                let src = match batch.local(t.node) {
                    Some(i) => {
                        fresh.push(Term { node: i, ..t });
                        input.row(i)
                    }
                    None => history.row(k - 1, t.node)?,
                };
                for (a, &h) in row.iter_mut().zip(src) {
                    *a += t.weight * h;
                }
            }
            plan.push(fresh);
        }
        let rec = model.layer_step(k - 1, agg, plan)?;
        for (r, &v) in batch.nodes.iter().enumerate() {
            if cfg.momentum_in_batch && cfg.beta0[k - 1] > 0.0 {
                history.momentum_write(k, v, rec.output.row(r), beta)?;
            } else {
                history.overwrite(k, v, rec.output.row(r))?;
            }
        }
        tape.layers.push(rec);
    }
    Ok(tape)
}

/// Mean loss over a batch's training nodes and their count.
pub type BatchLoss<T> = (T, usize);

/// Owns everything mutable during cluster-batch training.
#[derive(Debug, Clone)]
pub struct OBTrainer<T> {
    pub config: OBConfig,
    pub partition: Partition,
    pub model: Model<T>,
    pub history: HistoryTable<T>,
    pub adam: AdamState<T>,
    pub epoch: usize,
    pub t: i64,
}

impl<T: Scalar> OBTrainer<T> {
    pub fn new(
        config: OBConfig,
        partition: Partition,
        model: Model<T>,
        adam: AdamState<T>,
    ) -> Result<Self> {
        config.validate(model.num_layers(), partition.num_clusters())?;
        let history = ob_history(partition.assignment().len(), &model);
        Ok(Self {
            config,
            partition,
            model,
            history,
            adam,
            epoch: 0,
            t: 0,
        })
    }

    /// Forward pass on one batch and, when the batch holds training nodes,
    /// the mean loss gradient over them. Returns `None` for the loss when
    /// there were no training nodes.
    pub fn batch_gradient(
        &mut self,
        g: &Graph,
        data: &NodeData<T>,
        batch: &BatchSets,
    ) -> Result<(Option<BatchLoss<T>>, ForwardTape<T>)> {
        self.t += 1;
        self.history.set_iter(self.t)?;
        let tape = ob_forward(g, &self.model, &mut self.history, batch, &self.config, &data.features)?;
        let mask: Vec<usize> = batch
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, &v)| data.split[v] == Split::Train)
            .map(|(r, _)| r)
            .collect();
        if mask.is_empty() {
            return Ok((None, tape));
        }
        let labels: Vec<usize> = batch.nodes.iter().map(|&v| data.labels[v]).collect();
        let (loss, grad) = softmax_xent(tape.output(), &labels, &mask)?;
        self.model.zero_grads();
        self.model.backward(&tape, &grad)?;
        Ok((Some((loss, mask.len())), tape))
    }

    pub fn apply_gradient(&mut self) -> Result<()> {
        let mut params = self.model.flat_params();
        self.adam.step(&mut params, &self.model.flat_grads())?;
        self.model.set_flat_params(&params)
    }

    /// Cluster batches for one epoch in seeded shuffled order.
    pub fn epoch_batches(&self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.partition.num_clusters()).collect();
        let mut rng = RngState::stream(self.config.seed, EPOCH_STREAM).split(self.epoch as u64);
        order.shuffle(&mut rng);
        order.chunks(self.config.clusters_per_batch).map(<[usize]>::to_vec).collect()
    }

    pub fn train_epoch(&mut self, g: &Graph, data: &NodeData<T>) -> Result<EpochMetrics> {
        let mut acc = EpochAccumulator::default();
        for clusters in self.epoch_batches() {
            let batch = build_ob_batch(g, &self.partition, &clusters, self.config.push_threshold)?;
            let (loss, tape) = self.batch_gradient(g, data, &batch)?;
            if let Some((loss, count)) = loss {
                self.apply_gradient()?;
                acc.add_batch(loss.as_f64(), count, tape_reals(&tape));
            }
        }
        self.epoch += 1;
        acc.finish(self.epoch, g, data, &self.model, self.history.stored_reals(), self.adam.t)
    }

    /// Staleness of history layers `1..K` against the full-neighborhood
    /// forward pass of `model`.
    pub fn staleness(&self, g: &Graph, data: &NodeData<T>, model: &Model<T>) -> Result<StalenessReport> {
        staleness_against(g, data, model, &self.history)
    }
}

/// Staleness of layers `1..K` of an out-of-batch history table.
pub fn staleness_against<T: Scalar>(
    g: &Graph,
    data: &NodeData<T>,
    model: &Model<T>,
    history: &HistoryTable<T>,
) -> Result<StalenessReport> {
    let mut oracle = vec![data.features.clone()];
    oracle.extend(full_batch_forward(g, model, &data.features)?);
    let mut report = history.staleness(&oracle)?;
    report.per_node.remove(0);
    report.layer_mean.remove(0);
    Ok(report)
}

/// Result of training to the best validation epoch.
#[derive(Debug, Clone)]
pub struct BestSnapshot<T> {
    pub epoch: usize,
    pub val_acc: f64,
    pub val_loss: f64,
    pub model: Model<T>,
    pub history: HistoryTable<T>,
}

/// Trains for `config.epochs` epochs, keeping the weights and histories of
/// the first epoch with the highest validation accuracy.
pub fn train_to_best<T: Scalar>(
    trainer: &mut OBTrainer<T>,
    g: &Graph,
    data: &NodeData<T>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<BestSnapshot<T>> {
    let mut best: Option<BestSnapshot<T>> = None;
    for _ in 0..trainer.config.epochs {
        let m = trainer.train_epoch(g, data)?;
        on_epoch(&m);
        if best.as_ref().is_none_or(|b| m.val_acc > b.val_acc) {
            best = Some(BestSnapshot {
                epoch: m.epoch,
                val_acc: m.val_acc,
                val_loss: m.val_loss,
                model: trainer.model.clone(),
                history: trainer.history.clone(),
            });
        }
    }
    best.ok_or_else(|| Error::Config("epochs must be at least 1".into()))
}

/// Staleness of a fresh feature-momentum run and a fresh baseline run with
/// otherwise identical settings, each measured at its best validation
/// epoch.
#[derive(Debug, Clone)]
pub struct StalenessComparison {
    pub fm: StalenessReport,
    pub baseline: StalenessReport,
    pub fm_best_epoch: usize,
    pub baseline_best_epoch: usize,
}

pub fn staleness_experiment<T: Scalar>(
    g: &Graph,
    data: &NodeData<T>,
    partition: &Partition,
    model: &Model<T>,
    adam: &AdamState<T>,
    config: &OBConfig,
) -> Result<StalenessComparison> {
    let run = |mode: OBMode| -> Result<(StalenessReport, usize)> {
        let cfg = OBConfig { mode, ..config.clone() };
        let mut trainer = OBTrainer::new(cfg, partition.clone(), model.clone(), adam.clone())?;
        let best = train_to_best(&mut trainer, g, data, |_| {})?;
        Ok((staleness_against(g, data, &best.model, &best.history)?, best.epoch))
    };
    let (fm, fm_best_epoch) = run(OBMode::GraphFmOb)?;
    let (baseline, baseline_best_epoch) = run(OBMode::GnnAutoScale)?;
    Ok(StalenessComparison {
        fm,
        baseline,
        fm_best_epoch,
        baseline_best_epoch,
    })
}
