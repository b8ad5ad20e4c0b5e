//! Per-layer historical embeddings with momentum writes and staleness
//! bookkeeping.

use std::fs;
use std::path::Path;

use crate::dense::{norm2, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense `n × d_k` tables of stored embeddings, one per layer, plus the
/// iteration at which each `(layer, node)` row was last written (`-1` if
/// never). Rows start at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryTable<T> {
    tables: Vec<Matrix<T>>,
    last_write: Vec<Vec<i64>>,
    current_iter: i64,
}

/// Per-layer staleness scores `‖h̄ᵏ_v − h̃ᵏ_v‖₂` and their node averages.
#[derive(Debug, Clone, PartialEq)]
pub struct StalenessReport {
    pub per_node: Vec<Vec<f64>>,
    pub layer_mean: Vec<f64>,
}

impl<T: Scalar> HistoryTable<T> {
    pub fn new(num_nodes: usize, dims: &[usize]) -> Self {
        Self {
            tables: dims.iter().map(|&d| Matrix::zeros(num_nodes, d)).collect(),
            last_write: vec![vec![-1; num_nodes]; dims.len()],
            current_iter: 0,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.tables.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.tables.first().map_or(0, |t| t.rows())
    }

    pub fn dim(&self, layer: usize) -> usize {
        self.tables[layer].cols()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.tables.iter().map(|t| t.cols()).collect()
    }

    pub fn current_iter(&self) -> i64 {
        self.current_iter
    }

    /// Moves the write clock forward; it never goes backwards.
    pub fn set_iter(&mut self, t: i64) -> Result<()> {
        if t < self.current_iter {
            return Err(Error::InvalidArgument(format!(
                "iteration {t} precedes current iteration {}",
                self.current_iter
            )));
        }
        self.current_iter = t;
        Ok(())
    }

    pub fn last_write(&self, layer: usize, v: usize) -> i64 {
        self.last_write[layer][v]
    }

    pub fn layer(&self, layer: usize) -> &Matrix<T> {
        &self.tables[layer]
    }

    fn check(&self, layer: usize, v: usize) -> Result<()> {
        if layer >= self.tables.len() {
            return Err(Error::IndexOutOfRange {
                what: "history layer",
                index: layer,
                limit: self.tables.len(),
            });
        }
        if v >= self.num_nodes() {
            return Err(Error::IndexOutOfRange {
                what: "node",
                index: v,
                limit: self.num_nodes(),
            });
        }
        Ok(())
    }

    /// Stored row of one node. Does not touch the write clock.
    pub fn row(&self, layer: usize, v: usize) -> Result<&[T]> {
        self.check(layer, v)?;
        Ok(self.tables[layer].row(v))
    }

    /// Stored rows for `nodes`, in the given order.
    pub fn fetch(&self, layer: usize, nodes: &[usize]) -> Result<Matrix<T>> {
        for &v in nodes {
            self.check(layer, v)?;
        }
        Ok(self.tables[layer].select_rows(nodes))
    }

    /// `row ← (1 − β₀)·row + β₀·estimate`, stamping the row with the
    /// current iteration.
    pub fn momentum_write(&mut self, layer: usize, v: usize, estimate: &[T], beta0: T) -> Result<()> {
        self.check(layer, v)?;
        if !(beta0 > T::zero() && beta0 <= T::one()) {
            return Err(Error::InvalidArgument(format!(
                "momentum weight must lie in (0, 1], got {beta0}"
            )));
        }
        let d = self.tables[layer].cols();
        if estimate.len() != d {
            return Err(Error::dims("momentum_write", d, estimate.len()));
        }
        let keep = T::one() - beta0;
        let row = self.tables[layer].row_mut(v);
        if beta0 == T::one() {
            row.copy_from_slice(estimate);
        } else {
            for (r, &e) in row.iter_mut().zip(estimate) {
                *r = keep * *r + beta0 * e;
            }
        }
        self.last_write[layer][v] = self.current_iter;
        Ok(())
    }

    /// `row ← value`, stamping the row with the current iteration.
    pub fn overwrite(&mut self, layer: usize, v: usize, value: &[T]) -> Result<()> {
        self.momentum_write(layer, v, value, T::one())
    }

    /// Distances to per-layer oracle embeddings of matching shape.
    pub fn staleness(&self, oracle: &[Matrix<T>]) -> Result<StalenessReport> {
        if oracle.len() != self.tables.len() {
            return Err(Error::dims("staleness", self.tables.len(), oracle.len()));
        }
        let mut per_node = Vec::with_capacity(oracle.len());
        let mut layer_mean = Vec::with_capacity(oracle.len());
        for (stored, exact) in self.tables.iter().zip(oracle) {
            if stored.shape() != exact.shape() {
                return Err(Error::dims(
                    "staleness",
                    format!("{:?}", stored.shape()),
                    format!("{:?}", exact.shape()),
                ));
            }
            let scores: Vec<f64> = (0..stored.rows())
                .map(|v| {
                    let diff: Vec<T> = exact
                        .row(v)
                        .iter()
                        .zip(stored.row(v))
                        .map(|(&a, &b)| a - b)
                        .collect();
                    norm2(&diff).as_f64()
                })
                .collect();
            let mean = if scores.is_empty() {
                0.0
            } else {
                scores.iter().sum::<f64>() / scores.len() as f64
            };
            per_node.push(scores);
            layer_mean.push(mean);
        }
        Ok(StalenessReport {
            per_node,
            layer_mean,
        })
    }

    /// Number of stored reals, the memory proxy reported in metrics.
    pub fn stored_reals(&self) -> usize {
        self.tables.iter().map(|t| t.rows() * t.cols()).sum()
    }

    /// Little-endian snapshot: `K, n, d_1..d_K` as u64, `t` as i64, then each
    /// layer's rows as f64.
    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * (3 + self.tables.len() + self.stored_reals()));
        out.extend_from_slice(&(self.tables.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.num_nodes() as u64).to_le_bytes());
        for t in &self.tables {
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.current_iter.to_le_bytes());
        for t in &self.tables {
            for &x in t.as_slice() {
                out.extend_from_slice(&x.as_f64().to_le_bytes());
            }
        }
        out
    }

    /// Inverse of [`to_snapshot_bytes`](Self::to_snapshot_bytes). Write
    /// stamps are not part of the snapshot and come back as `-1`.
    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let k = r.u64()? as usize;
        let n = r.u64()? as usize;
        let dims: Vec<usize> = (0..k).map(|_| r.u64().map(|d| d as usize)).collect::<Result<_>>()?;
        let t = r.u64()? as i64;
        let mut table = Self::new(n, &dims);
        table.current_iter = t;
        for layer in table.tables.iter_mut() {
            for x in layer.as_mut_slice() {
                *x = T::lit(r.f64()?);
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::InvalidArgument("trailing bytes in history snapshot".into()));
        }
        Ok(table)
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_snapshot_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_snapshot_bytes(&bytes)
    }
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl Reader<'_> {
    fn take8(&mut self) -> Result<[u8; 8]> {
        let end = self.pos + 8;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::InvalidArgument("truncated binary file".into()))?;
        self.pos = end;
        Ok(chunk.try_into().expect("slice of length 8"))
    }

    pub fn u64(&mut self) -> Result<u64> {
        self.take8().map(u64::from_le_bytes)
    }

    pub fn f64(&mut self) -> Result<f64> {
        self.take8().map(f64::from_le_bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::RngState;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn unwritten_rows_are_zero() {
        let h = HistoryTable::<f64>::new(4, &[3, 2]);
        assert_eq!(h.fetch(1, &[2]).unwrap().as_slice(), &[0.0, 0.0]);
        assert_eq!(h.last_write(0, 3), -1);
    }

    #[test]
    fn rows_persist_between_writes() {
        let mut h = HistoryTable::<f64>::new(3, &[2]);
        h.set_iter(3).unwrap();
        h.overwrite(0, 1, &[1.5, -2.0]).unwrap();
        h.set_iter(7).unwrap();
        assert_eq!(h.fetch(0, &[1]).unwrap().as_slice(), &[1.5, -2.0]);
        assert_eq!(h.last_write(0, 1), 3);
    }

    #[test]
    fn momentum_write_examples() {
        let mut h = HistoryTable::<f64>::new(1, &[2]);
        h.overwrite(0, 0, &[1.0, 1.0]).unwrap();
        h.momentum_write(0, 0, &[0.0, 0.0], 0.3).unwrap();
        let r = h.row(0, 0).unwrap();
        assert!((r[0] - 0.7).abs() < 1e-15 && (r[1] - 0.7).abs() < 1e-15);

        h.momentum_write(0, 0, &[4.0, -3.0], 1.0).unwrap();
        assert_eq!(h.row(0, 0).unwrap(), &[4.0, -3.0]);

        let mut h = HistoryTable::<f64>::new(1, &[2]);
        let (e1, e2) = ([2.0, -4.0], [8.0, 1.0]);
        h.momentum_write(0, 0, &e1, 0.5).unwrap();
        h.momentum_write(0, 0, &e2, 0.5).unwrap();
        let r = h.row(0, 0).unwrap();
        for j in 0..2 {
            assert!((r[j] - (0.25 * e1[j] + 0.5 * e2[j])).abs() < 1e-15);
        }
    }

    #[test]
    fn overwrite_equals_unit_momentum() {
        let mut a = HistoryTable::<f64>::new(2, &[3]);
        let mut b = a.clone();
        a.momentum_write(0, 1, &[0.1, 0.2, 0.3], 0.4).unwrap();
        b.momentum_write(0, 1, &[0.1, 0.2, 0.3], 0.4).unwrap();
        a.set_iter(5).unwrap();
        b.set_iter(5).unwrap();
        a.overwrite(0, 1, &[7.0, 8.0, 9.0]).unwrap();
        b.momentum_write(0, 1, &[7.0, 8.0, 9.0], 1.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.last_write(0, 1), 5);
    }

    #[test]
    fn errors() {
        let mut h = HistoryTable::<f64>::new(2, &[2]);
        assert!(h.momentum_write(0, 0, &[1.0], 0.5).is_err());
        assert!(h.momentum_write(0, 0, &[1.0, 2.0], 0.0).is_err());
        assert!(h.overwrite(1, 0, &[1.0, 2.0]).is_err());
        assert!(h.fetch(0, &[2]).is_err());
        assert!(h.set_iter(-1).is_err());
        assert!(h.staleness(&[Matrix::zeros(2, 3)]).is_err());
    }

    #[test]
    fn staleness_examples() {
        let mut h = HistoryTable::<f64>::new(2, &[2]);
        h.overwrite(0, 0, &[1.0, 2.0]).unwrap();
        let same = h.layer(0).clone();
        let rep = h.staleness(&[same]).unwrap();
        assert_eq!(rep.layer_mean, vec![0.0]);

        let h = HistoryTable::<f64>::new(2, &[2]);
        let oracle = Matrix::from_rows(&[[3.0, 4.0], [0.0, 3.0]]).unwrap();
        let rep = h.staleness(&[oracle]).unwrap();
        assert_eq!(rep.per_node[0], vec![5.0, 3.0]);
        assert_eq!(rep.layer_mean[0], 4.0);

        let h = HistoryTable::<f64>::new(2, &[1]);
        let oracle = Matrix::from_rows(&[[1.0], [-3.0]]).unwrap();
        assert_eq!(h.staleness(&[oracle]).unwrap().layer_mean[0], 2.0);
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut rng = RngState::new(1);
        let mut h = HistoryTable::<f64>::new(5, &[3, 2]);
        h.set_iter(12).unwrap();
        for v in 0..5 {
            let r: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            h.overwrite(0, v, &r).unwrap();
        }
        let bytes = h.to_snapshot_bytes();
        assert_eq!(&bytes[0..8], &2u64.to_le_bytes());
        assert_eq!(&bytes[8..16], &5u64.to_le_bytes());
        assert_eq!(&bytes[32..40], &12i64.to_le_bytes());
        assert_eq!(bytes.len(), 8 * (5 + 5 * 5));
        let back = HistoryTable::<f64>::from_snapshot_bytes(&bytes).unwrap();
        assert_eq!(back.layer(0), h.layer(0));
        assert_eq!(back.layer(1), h.layer(1));
        assert_eq!(back.current_iter(), 12);
        assert!(HistoryTable::<f64>::from_snapshot_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[derive(Debug, Clone)]
    enum Op {
        Fetch(usize),
        Write(usize, f64, f64),
        Tick,
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0usize..4).prop_map(Op::Fetch),
            (0usize..4, -5.0f64..5.0, 0.01f64..=1.0).prop_map(|(v, x, b)| Op::Write(v, x, b)),
            Just(Op::Tick),
        ]
    }

    proptest! {
        #[test]
        fn fetches_are_stable_and_stamps_monotone(ops in proptest::collection::vec(op(), 1..80)) {
            let mut h = HistoryTable::<f64>::new(4, &[2]);
            let mut expected = [[0.0f64; 2]; 4];
            let mut stamps = [-1i64; 4];
            for op in ops {
                match op {
                    Op::Fetch(v) => {
                        let got = h.fetch(0, &[v]).unwrap();
                        prop_assert_eq!(got.as_slice(), &expected[v][..]);
                    }
                    Op::Write(v, x, beta) => {
                        let est = [x, -x];
                        let old = expected[v];
                        h.momentum_write(0, v, &est, beta).unwrap();
                        let new = h.row(0, v).unwrap().to_vec();
                        // new lies on the segment, at (1−β) of the old distance
                        let d_old = ((old[0]-est[0]).powi(2) + (old[1]-est[1]).powi(2)).sqrt();
                        let d_new = ((new[0]-est[0]).powi(2) + (new[1]-est[1]).powi(2)).sqrt();
                        prop_assert!((d_new - (1.0 - beta) * d_old).abs() <= 1e-12 * (1.0 + d_old));
                        prop_assert!(h.last_write(0, v) >= stamps[v]);
                        stamps[v] = h.last_write(0, v);
                        expected[v] = [new[0], new[1]];
                    }
                    Op::Tick => {
                        let t = h.current_iter() + 1;
                        h.set_iter(t).unwrap();
                    }
                }
                prop_assert!((0..4).all(|v| h.last_write(0, v) <= h.current_iter()));
            }
            let snapshot = h.layer(0).clone();
            prop_assert!(h.staleness(&[snapshot]).unwrap().layer_mean[0] == 0.0);
        }
    }
}
