use std::fs;
use std::path::Path;

use rand::Rng;

use super::aggregate::{combine, full_terms, LayerKind, Term};
use crate::dense::{l2_row_normalize, l2_row_normalize_backward, Activation, Matrix, RngState};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::history::Reader;
use crate::scalar::Scalar;

/// Guard used by row normalization.
pub const NORMALIZE_EPS: f64 = 1e-12;

/// Weights of one layer and their accumulated gradient. The layer maps an
/// aggregate row `a` to `σ(a · W)`; there is no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub weight: Matrix<T>,
    pub grad: Matrix<T>,
    pub kind: LayerKind,
    pub activation: Activation,
}

/// What [`LayerParams::forward`] needs to remember for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTape<T> {
    pub aggregates: Matrix<T>,
    pub pre_activation: Matrix<T>,
}

impl<T: Scalar> LayerParams<T> {
    /// Glorot-uniform initialization.
    pub fn init(
        kind: LayerKind,
        activation: Activation,
        d_in: usize,
        d_out: usize,
        rng: &mut RngState,
    ) -> Self {
        let rows = kind.aggregate_dim(d_in);
        let limit = (6.0 / (rows + d_out) as f64).sqrt();
        let weight = Matrix::from_fn(rows, d_out, |_, _| T::lit(rng.random_range(-limit..limit)));
        Self::from_weight(kind, activation, weight)
    }

    pub fn from_weight(kind: LayerKind, activation: Activation, weight: Matrix<T>) -> Self {
        let grad = Matrix::zeros(weight.rows(), weight.cols());
        Self {
            weight,
            grad,
            kind,
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self.kind {
            LayerKind::ConcatSage => self.weight.rows() / 2,
            _ => self.weight.rows(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn blocks(&self) -> usize {
        self.kind.aggregate_dim(1)
    }

    /// `σ(aggregates · W)`.
    pub fn forward(&self, aggregates: &Matrix<T>) -> Result<(Matrix<T>, LayerTape<T>)> {
        let pre = aggregates.matmul(&self.weight)?;
        let out = self.activation.apply(&pre);
        Ok((
            out,
            LayerTape {
                aggregates: aggregates.clone(),
                pre_activation: pre,
            },
        ))
    }

    /// Accumulates `∂loss/∂W` and returns `∂loss/∂aggregates`, given the
    /// gradient on the activated output.
    pub fn backward(&mut self, tape: &LayerTape<T>, upstream: &Matrix<T>) -> Result<Matrix<T>> {
        if upstream.shape() != tape.pre_activation.shape() {
            return Err(Error::dims(
                "layer_backward",
                format!("{:?}", tape.pre_activation.shape()),
                format!("{:?}", upstream.shape()),
            ));
        }
        if tape.aggregates.cols() != self.weight.rows() {
            return Err(Error::dims("layer_backward", self.weight.rows(), tape.aggregates.cols()));
        }
        let act = self.activation;
        let grad_pre = upstream.zip_map(&tape.pre_activation, |g, z| g * act.derivative(z))?;
        let grad_w = tape.aggregates.tr_matmul(&grad_pre)?;
        self.grad.add_assign(&grad_w)?;
        grad_pre.matmul_tr(&self.weight)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

/// One layer of a recorded forward computation.
///
/// `plan[r]` lists the fresh source rows (indices into the previous layer's
/// output, or into the input rows for the first layer) that row `r`'s
/// aggregate depends on. Contributions not in the plan (historical rows,
/// carried momentum) are constants for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TapeLayer<T> {
    pub plan: Vec<Vec<Term<T>>>,
    pub tape: LayerTape<T>,
    pub activated: Matrix<T>,
    pub output: Matrix<T>,
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForwardTape<T> {
    pub layers: Vec<TapeLayer<T>>,
}

impl<T: Scalar> ForwardTape<T> {
    pub fn output(&self) -> &Matrix<T> {
        &self.layers.last().expect("non-empty tape").output
    }
}

/// A stack of layers. Hidden layers use the configured activation and,
/// when `normalize` is set, L2 row normalization after it; the output layer
/// produces raw logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub layers: Vec<LayerParams<T>>,
    pub normalize: bool,
}

impl<T: Scalar> Model<T> {
    /// `dims = [d_0, d_1, .., d_K]`.
    pub fn init(
        kind: LayerKind,
        hidden_activation: Activation,
        dims: &[usize],
        normalize: bool,
        rng: &mut RngState,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "model needs at least two positive dims, got {dims:?}"
            )));
        }
        let k = dims.len() - 1;
        let layers = (0..k)
            .map(|i| {
                let act = if i + 1 == k {
                    Activation::Identity
                } else {
                    hidden_activation
                };
                LayerParams::init(kind, act, dims[i], dims[i + 1], rng)
            })
            .collect();
        Ok(Self { layers, normalize })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// `[d_0, .., d_K]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].input_dim()];
        d.extend(self.layers.iter().map(|l| l.output_dim()));
        d
    }

    /// Whether layer `k` (0-based) normalizes its output.
    pub fn normalizes(&self, k: usize) -> bool {
        self.normalize && k + 1 < self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.rows() * l.weight.cols()).sum()
    }

    pub fn flat_params(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.as_slice().iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.grad.as_slice().iter().copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::dims("set_flat_params", self.num_params(), params.len()));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.weight.rows() * l.weight.cols();
            l.weight.as_mut_slice().copy_from_slice(&params[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.layers.iter_mut().for_each(LayerParams::zero_grad);
    }

    /// Runs layer `k` on precomputed aggregates and records it.
    pub fn layer_step(
        &self,
        k: usize,
        aggregates: Matrix<T>,
        plan: Vec<Vec<Term<T>>>,
    ) -> Result<TapeLayer<T>> {
        let layer = &self.layers[k];
        if aggregates.cols() != layer.weight.rows() {
            return Err(Error::dims("layer_forward", layer.weight.rows(), aggregates.cols()));
        }
        let (activated, tape) = layer.forward(&aggregates)?;
        let normalized = self.normalizes(k);
        let output = if normalized {
            l2_row_normalize(&activated, T::lit(NORMALIZE_EPS))
        } else {
            activated.clone()
        };
        if !output.is_finite() {
            return Err(Error::NonFinite(format!("layer {} output", k + 1)));
        }
        Ok(TapeLayer {
            plan,
            tape,
            activated,
            output,
            normalized,
        })
    }

    /// Backpropagates `grad_output` (gradient on the last layer's output)
    /// through the tape, accumulating into every layer's `grad`.
    pub fn backward(&mut self, tape: &ForwardTape<T>, grad_output: &Matrix<T>) -> Result<()> {
        if tape.layers.len() != self.layers.len() {
            return Err(Error::dims("backward", self.layers.len(), tape.layers.len()));
        }
        let eps = T::lit(NORMALIZE_EPS);
        let mut upstream = grad_output.clone();
        for k in (0..self.layers.len()).rev() {
            let rec = &tape.layers[k];
            if upstream.shape() != rec.output.shape() {
                return Err(Error::dims(
                    "backward",
                    format!("{:?}", rec.output.shape()),
                    format!("{:?}", upstream.shape()),
                ));
            }
            let grad_act = if rec.normalized {
                l2_row_normalize_backward(&rec.activated, &upstream, eps)
            } else {
                upstream
            };
            let grad_agg = self.layers[k].backward(&rec.tape, &grad_act)?;
            if k == 0 {
                break;
            }
            let prev_rows = tape.layers[k - 1].output.rows();
            let d_in = self.layers[k].input_dim();
            let mut grad_prev = Matrix::zeros(prev_rows, d_in);
            for (r, terms) in rec.plan.iter().enumerate() {
                let g = grad_agg.row(r);
                for t in terms {
                    let src = &g[t.block * d_in..(t.block + 1) * d_in];
                    let dst = grad_prev.row_mut(t.node);
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += t.weight * s;
                    }
                }
            }
            upstream = grad_prev;
        }
        for l in &self.layers {
            if !l.grad.is_finite() {
                return Err(Error::NonFinite("parameter gradient".into()));
            }
        }
        Ok(())
    }

    /// Little-endian checkpoint: `K`, `d_0..d_K`, then `(kind, activation)`
    /// codes per layer, all u64, then `normalize` as u64, then each
    /// weight matrix row-major as f64.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let put = |out: &mut Vec<u8>, x: u64| out.extend_from_slice(&x.to_le_bytes());
        put(&mut out, self.layers.len() as u64);
        for d in self.dims() {
            put(&mut out, d as u64);
        }
        for l in &self.layers {
            put(&mut out, l.kind.code());
            put(&mut out, l.activation.code());
        }
        put(&mut out, self.normalize as u64);
        for l in &self.layers {
            for &x in l.weight.as_slice() {
                out.extend_from_slice(&x.as_f64().to_le_bytes());
            }
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("bad checkpoint: {m}"));
        let mut r = Reader { bytes, pos: 0 };
        let k = r.u64()? as usize;
        if k == 0 {
            return Err(bad("zero layers"));
        }
        let dims: Vec<usize> = (0..=k).map(|_| r.u64().map(|d| d as usize)).collect::<Result<_>>()?;
        let mut codes = Vec::with_capacity(k);
        for _ in 0..k {
            let kind = LayerKind::from_code(r.u64()?).ok_or_else(|| bad("layer kind"))?;
            let act = Activation::from_code(r.u64()?).ok_or_else(|| bad("activation"))?;
            codes.push((kind, act));
        }
        let normalize = r.u64()? != 0;
        let mut layers = Vec::with_capacity(k);
        for (i, (kind, act)) in codes.into_iter().enumerate() {
            let rows = kind.aggregate_dim(dims[i]);
            let cols = dims[i + 1];
            let data = (0..rows * cols)
                .map(|_| r.f64().map(T::lit))
                .collect::<Result<Vec<T>>>()?;
            layers.push(LayerParams::from_weight(kind, act, Matrix::from_vec(rows, cols, data)?));
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { layers, normalize })
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}

/// Exact K-layer propagation over every node with full neighborhoods,
/// recorded for backpropagation.
pub fn full_batch_tape<T: Scalar>(
    g: &Graph,
    model: &Model<T>,
    features: &Matrix<T>,
) -> Result<ForwardTape<T>> {
    let n = g.num_nodes();
    if features.rows() != n {
        return Err(Error::dims("full_batch_forward", n, features.rows()));
    }
    let mut tape = ForwardTape { layers: Vec::new() };
    for k in 0..model.num_layers() {
        let layer = &model.layers[k];
        let input = match k {
            0 => features,
            _ => &tape.layers[k - 1].output,
        };
        if input.cols() != layer.input_dim() {
            return Err(Error::dims("full_batch_forward", layer.input_dim(), input.cols()));
        }
        let d_in = input.cols();
        let plan: Vec<Vec<Term<T>>> = (0..n).map(|v| full_terms(g, layer.kind, v)).collect();
        let mut agg = Matrix::zeros(n, layer.kind.aggregate_dim(d_in));
        for (v, terms) in plan.iter().enumerate() {
            let row = combine(terms, d_in, layer.blocks(), |u| input.row(u));
            agg.row_mut(v).copy_from_slice(&row);
        }
        let rec = model.layer_step(k, agg, plan)?;
        tape.layers.push(rec);
    }
    Ok(tape)
}

/// Per-layer outputs `h̄¹..h̄ᴷ` of the exact full-neighborhood forward pass.
pub fn full_batch_forward<T: Scalar>(
    g: &Graph,
    model: &Model<T>,
    features: &Matrix<T>,
) -> Result<Vec<Matrix<T>>> {
    Ok(full_batch_tape(g, model, features)?
        .layers
        .into_iter()
        .map(|l| l.output)
        .collect())
}
