use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeData, Split};
use crate::scalar::Scalar;

use super::model::{full_batch_forward, full_batch_tape, Model};

/// Mean softmax cross-entropy over the rows listed in `mask`, where
/// `labels[r]` is the class of row `r`. Returns the loss and its gradient
/// with respect to `logits` (zero outside the mask).
pub fn softmax_xent<T: Scalar>(
    logits: &Matrix<T>,
    labels: &[usize],
    mask: &[usize],
) -> Result<(T, Matrix<T>)> {
    if mask.is_empty() {
        return Err(Error::InvalidArgument("softmax_xent: empty mask".into()));
    }
    if labels.len() != logits.rows() {
        return Err(Error::dims("softmax_xent labels", logits.rows(), labels.len()));
    }
    let c = logits.cols();
    let scale = T::one() / T::from_count(mask.len());
    let mut grad = Matrix::zeros(logits.rows(), c);
    let mut loss = T::zero();
    for &r in mask {
        if r >= logits.rows() {
            return Err(Error::IndexOutOfRange {
                what: "mask row",
                index: r,
                limit: logits.rows(),
            });
        }
        let y = labels[r];
        if y >= c {
            return Err(Error::IndexOutOfRange {
                what: "label",
                index: y,
                limit: c,
            });
        }
        let z = logits.row(r);
        let m = z.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = z.iter().map(|&x| (x - m).exp()).collect();
        let total: T = exps.iter().copied().sum();
        loss += total.ln() - (z[y] - m);
        let g = grad.row_mut(r);
        for j in 0..c {
            g[j] = exps[j] / total * scale;
        }
        g[y] -= scale;
    }
    let loss = loss * scale;
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross-entropy loss".into()));
    }
    Ok((loss, grad))
}

/// Row-wise argmax; ties resolve to the lowest class index.
pub fn argmax_rows<T: Scalar>(logits: &Matrix<T>) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (j, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Fraction of positions where `preds` and `labels` agree.
pub fn accuracy(preds: &[usize], labels: &[usize]) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / preds.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub accuracy: f64,
    /// For single-label multiclass prediction, micro-averaged F1 equals
    /// accuracy.
    pub micro_f1: f64,
}

/// Accuracy of full-neighborhood inference on the nodes of `split`.
pub fn evaluate<T: Scalar>(
    g: &Graph,
    data: &NodeData<T>,
    model: &Model<T>,
    split: Split,
) -> Result<EvalResult> {
    let nodes = data.nodes_in(split);
    if nodes.is_empty() {
        return Err(Error::InvalidArgument(format!("split '{}' is empty", split.name())));
    }
    let outs = full_batch_forward(g, model, &data.features)?;
    Ok(evaluate_logits(outs.last().expect("K >= 1"), &data.labels, &nodes))
}

/// Accuracy of precomputed whole-graph logits on `nodes`.
pub fn evaluate_logits<T: Scalar>(logits: &Matrix<T>, labels: &[usize], nodes: &[usize]) -> EvalResult {
    let preds = argmax_rows(&logits.select_rows(nodes));
    let truth: Vec<usize> = nodes.iter().map(|&v| labels[v]).collect();
    let acc = accuracy(&preds, &truth);
    EvalResult {
        accuracy: acc,
        micro_f1: acc,
    }
}

/// Exact full-batch loss over `mask` nodes and its gradient, left in each
/// layer's `grad` (which is zeroed first).
pub fn full_batch_loss_and_grad<T: Scalar>(
    g: &Graph,
    model: &mut Model<T>,
    features: &Matrix<T>,
    labels: &[usize],
    mask: &[usize],
) -> Result<T> {
    let tape = full_batch_tape(g, model, features)?;
    let (loss, grad) = softmax_xent(tape.output(), labels, mask)?;
    model.zero_grads();
    model.backward(&tape, &grad)?;
    Ok(loss)
}
