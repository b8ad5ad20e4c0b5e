//! Aggregators, dense layers with explicit backward passes, and the
//! full-neighborhood reference forward pass.

mod aggregate;
mod loss;
mod model;

pub use aggregate::{
    combine, estimate_aggregate, full_terms, mean_aggregate, partial_terms, sampled_terms,
    LayerKind, Term,
};
pub use loss::{accuracy, argmax_rows, evaluate, evaluate_logits, full_batch_loss_and_grad, softmax_xent,
    EvalResult,
};
pub use model::{
    full_batch_forward, full_batch_tape, ForwardTape, LayerParams, LayerTape, Model, TapeLayer,
    NORMALIZE_EPS,
};
