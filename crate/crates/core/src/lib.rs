//! Minibatch GNN training with feature momentum on historical embeddings,
//! plus a synthetic multi-level compositional optimization testbed.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`, which every trainer and test
//! uses by default.

pub mod adam;
pub mod compopt;
pub mod dense;
pub mod error;
pub mod graph;
pub mod harness;
pub mod history;
pub mod ib;
pub mod ob;
pub mod layers;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = dense::Matrix<f64>;
pub type Matrix32 = dense::Matrix<f32>;
pub type History64 = history::HistoryTable<f64>;
pub type Model64 = layers::Model<f64>;
pub type NodeData64 = graph::NodeData<f64>;
pub type AdamState64 = adam::AdamState<f64>;
