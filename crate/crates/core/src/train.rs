//! Pieces shared by the trainers: per-epoch metrics, whole-graph evaluation
//! and the exact full-batch reference trainer.

use crate::adam::AdamState;
use crate::dense::Matrix;
use crate::error::Result;
use crate::graph::{Graph, NodeData, Split};
use crate::layers::{evaluate_logits, full_batch_forward, full_batch_tape, softmax_xent, ForwardTape, Model};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean training loss over the epoch's minibatches, weighted by the
    /// number of loss nodes in each.
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub val_micro_f1: f64,
    /// Cross-entropy on the validation split under full-neighborhood
    /// inference (NaN when the split is empty).
    pub val_loss: f64,
    /// Reals held in history tables plus the peak number of reals held in
    /// one minibatch's forward tape.
    pub memory_proxy: usize,
    /// Optimizer steps taken so far.
    pub steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitAccuracy {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub val_loss: f64,
}

/// Accuracy on each split under full-neighborhood inference. Empty splits
/// report 0.
pub fn split_accuracy<T: Scalar>(g: &Graph, data: &NodeData<T>, model: &Model<T>) -> Result<SplitAccuracy> {
    let outs = full_batch_forward(g, model, &data.features)?;
    let logits = outs.last().expect("K >= 1");
    let acc = |s: Split| {
        let nodes = data.nodes_in(s);
        if nodes.is_empty() {
            0.0
        } else {
            evaluate_logits(logits, &data.labels, &nodes).accuracy
        }
    };
    let val_nodes = data.nodes_in(Split::Val);
    let val_loss = if val_nodes.is_empty() {
        f64::NAN
    } else {
        softmax_xent(logits, &data.labels, &val_nodes)?.0.as_f64()
    };
    Ok(SplitAccuracy {
        train: acc(Split::Train),
        val: acc(Split::Val),
        test: acc(Split::Test),
        val_loss,
    })
}

pub(crate) fn tape_reals<T: Scalar>(tape: &ForwardTape<T>) -> usize {
    let size = |m: &Matrix<T>| m.rows() * m.cols();
    tape.layers
        .iter()
        .map(|l| size(&l.tape.aggregates) + size(&l.tape.pre_activation) + size(&l.activated) + size(&l.output))
        .sum()
}

/// Accumulates weighted loss and then fills an [`EpochMetrics`].
#[derive(Debug, Default)]
pub(crate) struct EpochAccumulator {
    loss_sum: f64,
    count: usize,
    peak_tape: usize,
}

impl EpochAccumulator {
    pub fn add_batch(&mut self, loss: f64, count: usize, tape_reals: usize) {
        self.loss_sum += loss * count as f64;
        self.count += count;
        self.peak_tape = self.peak_tape.max(tape_reals);
    }

    pub fn finish<T: Scalar>(
        self,
        epoch: usize,
        g: &Graph,
        data: &NodeData<T>,
        model: &Model<T>,
        history_reals: usize,
        steps: u64,
    ) -> Result<EpochMetrics> {
        let acc = split_accuracy(g, data, model)?;
        Ok(EpochMetrics {
            epoch,
            loss: if self.count == 0 { f64::NAN } else { self.loss_sum / self.count as f64 },
            train_acc: acc.train,
            val_acc: acc.val,
            test_acc: acc.test,
            val_micro_f1: acc.val,
            val_loss: acc.val_loss,
            memory_proxy: history_reals + self.peak_tape,
            steps,
        })
    }
}

/// Exact gradient descent on the whole training split, one step per epoch.
#[derive(Debug, Clone)]
pub struct FullBatchTrainer<T> {
    pub model: Model<T>,
    pub adam: AdamState<T>,
    pub epoch: usize,
}

impl<T: Scalar> FullBatchTrainer<T> {
    pub fn new(model: Model<T>, adam: AdamState<T>) -> Self {
        Self { model, adam, epoch: 0 }
    }

    /// One exact gradient step; returns the loss before the step and the
    /// size of the forward tape.
    pub fn step(&mut self, g: &Graph, data: &NodeData<T>) -> Result<(T, usize)> {
        let train = data.nodes_in(Split::Train);
        let tape = full_batch_tape(g, &self.model, &data.features)?;
        let (loss, grad) = softmax_xent(tape.output(), &data.labels, &train)?;
        self.model.zero_grads();
        self.model.backward(&tape, &grad)?;
        let mut params = self.model.flat_params();
        self.adam.step(&mut params, &self.model.flat_grads())?;
        self.model.set_flat_params(&params)?;
        Ok((loss, tape_reals(&tape)))
    }

    pub fn train_epoch(&mut self, g: &Graph, data: &NodeData<T>) -> Result<EpochMetrics> {
        let (loss, tape_size) = self.step(g, data)?;
        self.epoch += 1;
        let n_train = data.nodes_in(Split::Train).len();
        let mut acc = EpochAccumulator::default();
        acc.add_batch(loss.as_f64(), n_train, tape_size);
        acc.finish(self.epoch, g, data, &self.model, 0, self.adam.t)
    }
}
