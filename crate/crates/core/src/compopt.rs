//! Synthetic multi-level stochastic compositional problem
//! `F(w) = f_{K+1}(f_K(…f_1(w)))` with block-structured levels, and the
//! block-sampled moving-average tracker method that mirrors in-batch
//! feature momentum.
//!
//! Level `k` maps `ℝ^{D_{k−1}} → ℝ^{n·d_k}` (`D_0 = d_0`, `D_k = n·d_k`);
//! block `i` is `f_{k,i}(y) = A_{k,i} y + c_{k,i} + α·tanh(B_{k,i} y)`. The
//! top level is `½‖y − y*‖²` with `y*` the image of a hidden `w*`, so
//! `F(w*) = 0` is the minimum.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::dense::{dot, norm2, Matrix, RngState};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    /// Block count per level.
    pub blocks: usize,
    /// `d_0, d_1, .., d_K`; `K = dims.len() − 1`.
    pub dims: Vec<usize>,
    pub sigma_f: f64,
    pub sigma_g: f64,
    pub alpha: f64,
    /// Frobenius norm of each level's stacked `A`.
    pub a_norm: f64,
    /// Frobenius norm of each level's stacked `B`.
    pub b_norm: f64,
    pub seed: u64,
}

impl ProblemSpec {
    pub fn new(blocks: usize, dims: Vec<usize>, sigma_f: f64, sigma_g: f64, seed: u64) -> Self {
        Self {
            blocks,
            dims,
            sigma_f,
            sigma_g,
            alpha: 0.1,
            a_norm: 2.0,
            b_norm: 1.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompProblem<T> {
    pub spec: ProblemSpec,
    /// Per level `k = 1..K` (index `k−1`): stacked `(n·d_k) × D_{k−1}`.
    pub a: Vec<Matrix<T>>,
    pub b: Vec<Matrix<T>>,
    pub c: Vec<Vec<T>>,
    pub y_star: Vec<T>,
    pub w_star: Vec<T>,
}

fn gaussian<T: Scalar>(rng: &mut RngState) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

fn random_unit<T: Scalar>(len: usize, rng: &mut RngState) -> Vec<T> {
    loop {
        let v: Vec<T> = (0..len).map(|_| gaussian(rng)).collect();
        let n = norm2(&v);
        if n > T::zero() {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn rademacher<T: Scalar>(rng: &mut RngState) -> T {
    if rng.random::<bool>() {
        T::one()
    } else {
        -T::one()
    }
}

pub fn make_problem<T: Scalar>(spec: &ProblemSpec) -> Result<CompProblem<T>> {
    if spec.dims.len() < 2 || spec.dims.contains(&0) || spec.blocks == 0 {
        return Err(Error::InvalidArgument(format!(
            "need at least one level with positive dims and blocks, got dims {:?}, blocks {}",
            spec.dims, spec.blocks
        )));
    }
    let finite_nonneg = |x: f64| x >= 0.0 && x.is_finite();
    if ![spec.sigma_f, spec.sigma_g, spec.alpha, spec.a_norm, spec.b_norm]
        .into_iter()
        .all(finite_nonneg)
    {
        return Err(Error::InvalidArgument("noise levels and norms must be finite and >= 0".into()));
    }
    let mut rng = RngState::stream(spec.seed, 0);
    let levels = spec.dims.len() - 1;
    let mut a = Vec::with_capacity(levels);
    let mut b = Vec::with_capacity(levels);
    let mut c = Vec::with_capacity(levels);
    let scaled = |rng: &mut RngState, rows: usize, cols: usize, target: f64| -> Matrix<T> {
        let m: Matrix<T> = Matrix::from_fn(rows, cols, |_, _| gaussian(rng));
        let f = m.frobenius_norm();
        m.map(|x| x * T::lit(target) / f)
    };
    for k in 1..=levels {
        let rows = spec.blocks * spec.dims[k];
        let cols = if k == 1 { spec.dims[0] } else { spec.blocks * spec.dims[k - 1] };
        a.push(scaled(&mut rng, rows, cols, spec.a_norm));
        b.push(scaled(&mut rng, rows, cols, spec.b_norm));
        c.push((0..rows).map(|_| T::lit(0.1) * gaussian::<T>(&mut rng)).collect());
    }
    let w_star: Vec<T> = (0..spec.dims[0]).map(|_| gaussian(&mut rng)).collect();
    let mut p = CompProblem {
        spec: spec.clone(),
        a,
        b,
        c,
        y_star: Vec::new(),
        w_star,
    };
    p.y_star = p.forward(&p.w_star).pop().expect("K >= 1");
    Ok(p)
}

impl<T: Scalar> CompProblem<T> {
    pub fn levels(&self) -> usize {
        self.a.len()
    }

    pub fn blocks(&self) -> usize {
        self.spec.blocks
    }

    /// Width of level `k`'s input (`k = 1..K`).
    pub fn input_dim(&self, k: usize) -> usize {
        self.a[k - 1].cols()
    }

    /// Width of one block of level `k`.
    pub fn block_dim(&self, k: usize) -> usize {
        self.spec.dims[k]
    }

    /// Certified bound on every level's Jacobian norm.
    pub fn lipschitz_f(&self) -> f64 {
        self.spec.a_norm + self.spec.alpha * self.spec.b_norm
    }

    /// Certified Lipschitz constant of every level's Jacobian
    /// (`max |tanh''| = 4/(3√3)`).
    pub fn lipschitz_g(&self) -> f64 {
        self.spec.alpha * 4.0 / (3.0 * 3f64.sqrt()) * self.spec.b_norm * self.spec.b_norm
    }

    fn rows(&self, k: usize, i: usize) -> std::ops::Range<usize> {
        let d = self.block_dim(k);
        i * d..(i + 1) * d
    }

    /// `f_{k,i}(y)` and the `tanh` argument `B_{k,i} y`.
    fn block_parts(&self, k: usize, i: usize, y: &[T]) -> (Vec<T>, Vec<T>) {
        let (a, b, c) = (&self.a[k - 1], &self.b[k - 1], &self.c[k - 1]);
        let alpha = T::lit(self.spec.alpha);
        let mut value = Vec::with_capacity(self.block_dim(k));
        let mut pre = Vec::with_capacity(self.block_dim(k));
        for r in self.rows(k, i) {
            let z = dot(b.row(r), y);
            value.push(dot(a.row(r), y) + c[r] + alpha * z.tanh());
            pre.push(z);
        }
        (value, pre)
    }

    pub fn eval_block(&self, k: usize, i: usize, y: &[T]) -> Vec<T> {
        self.block_parts(k, i, y).0
    }

    /// `f_k(y)`, all blocks concatenated.
    pub fn eval_level(&self, k: usize, y: &[T]) -> Vec<T> {
        (0..self.blocks()).flat_map(|i| self.eval_block(k, i, y)).collect()
    }

    /// `J_{k,i}(y)ᵀ z` for a block-sized `z`.
    pub fn vjp_block(&self, k: usize, i: usize, y: &[T], z: &[T]) -> Vec<T> {
        let (_, pre) = self.block_parts(k, i, y);
        let (a, b) = (&self.a[k - 1], &self.b[k - 1]);
        let alpha = T::lit(self.spec.alpha);
        let mut out = vec![T::zero(); self.input_dim(k)];
        for (j, r) in self.rows(k, i).enumerate() {
            let sech2 = T::one() - pre[j].tanh().powi(2);
            let zb = z[j] * alpha * sech2;
            for ((o, &ar), &br) in out.iter_mut().zip(a.row(r)).zip(b.row(r)) {
                *o += z[j] * ar + zb * br;
            }
        }
        out
    }

    /// `y_1, .., y_K` along the exact chain.
    pub fn forward(&self, w: &[T]) -> Vec<Vec<T>> {
        let mut ys: Vec<Vec<T>> = Vec::with_capacity(self.levels());
        for k in 1..=self.levels() {
            let y = self.eval_level(k, ys.last().map_or(w, |v| v.as_slice()));
            ys.push(y);
        }
        ys
    }

    pub fn objective(&self, w: &[T]) -> T {
        let top = self.forward(w).pop().expect("K >= 1");
        top.iter().zip(&self.y_star).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>() * T::lit(0.5)
    }

    /// `f̂_{k,i}(y)`: the exact block plus Gaussian noise with total
    /// variance `σ_f²`.
    pub fn noisy_block(&self, k: usize, i: usize, y: &[T], rng: &mut RngState) -> Vec<T> {
        let mut v = self.eval_block(k, i, y);
        if self.spec.sigma_f > 0.0 {
            let s = T::lit(self.spec.sigma_f / (self.block_dim(k) as f64).sqrt());
            for x in &mut v {
                *x += s * gaussian(rng);
            }
        }
        v
    }

    /// `Ĵ_{k,i}(y)ᵀ z` with `Ĵ = J + σ_g·ξ·a bᵀ` for a random sign `ξ` and
    /// random unit vectors `a`, `b`.
    pub fn noisy_vjp_block(&self, k: usize, i: usize, y: &[T], z: &[T], rng: &mut RngState) -> Vec<T> {
        let mut out = self.vjp_block(k, i, y, z);
        if self.spec.sigma_g > 0.0 {
            let xi = rademacher::<T>(rng);
            let a = random_unit::<T>(self.block_dim(k), rng);
            let b = random_unit::<T>(self.input_dim(k), rng);
            let coef = T::lit(self.spec.sigma_g) * xi * dot(&a, z);
            for (o, &bj) in out.iter_mut().zip(&b) {
                *o += coef * bj;
            }
        }
        out
    }

    /// `∇̂f_{K+1}(y) = y − y* + σ_g·ξ·b`.
    pub fn noisy_top_gradient(&self, y: &[T], rng: &mut RngState) -> Vec<T> {
        let mut g: Vec<T> = y.iter().zip(&self.y_star).map(|(&a, &b)| a - b).collect();
        if self.spec.sigma_g > 0.0 {
            let xi = rademacher::<T>(rng);
            let b = random_unit::<T>(g.len(), rng);
            for (x, &bj) in g.iter_mut().zip(&b) {
                *x += T::lit(self.spec.sigma_g) * xi * bj;
            }
        }
        g
    }

    /// `ĝ_kᵀ z` restricted to `blocks`, scaled by `n/|blocks|`. With `rng`
    /// absent the exact Jacobian is used.
    pub fn sampled_vjp(
        &self,
        k: usize,
        y: &[T],
        z: &[T],
        blocks: &[usize],
        mut rng: Option<&mut RngState>,
    ) -> Vec<T> {
        let scale = T::from_count(self.blocks()) / T::from_count(blocks.len());
        let mut out = vec![T::zero(); self.input_dim(k)];
        for &i in blocks {
            let zi = &z[self.rows(k, i)];
            let part = match rng.as_deref_mut() {
                Some(r) => self.noisy_vjp_block(k, i, y, zi, r),
                None => self.vjp_block(k, i, y, zi),
            };
            for (o, p) in out.iter_mut().zip(part) {
                *o += scale * p;
            }
        }
        out
    }

    /// Equivalent problem with the blocks of level `k` reordered: new block
    /// `perm[i]` is old block `i`.
    pub fn permute_blocks(&self, k: usize, perm: &[usize]) -> Result<Self> {
        let n = self.blocks();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument("not a permutation of the blocks".into()));
        }
        let d = self.block_dim(k);
        let move_rows = |m: &Matrix<T>| {
            let mut out = m.clone();
            for (i, &pi) in perm.iter().enumerate() {
                for j in 0..d {
                    out.row_mut(pi * d + j).copy_from_slice(m.row(i * d + j));
                }
            }
            out
        };
        let move_vec = |v: &[T]| {
            let mut out = v.to_vec();
            for (i, &pi) in perm.iter().enumerate() {
                out[pi * d..(pi + 1) * d].copy_from_slice(&v[i * d..(i + 1) * d]);
            }
            out
        };
        let move_cols = |m: &Matrix<T>| move_rows(&m.transpose()).transpose();
        let mut p = self.clone();
        p.a[k - 1] = move_rows(&self.a[k - 1]);
        p.b[k - 1] = move_rows(&self.b[k - 1]);
        p.c[k - 1] = move_vec(&self.c[k - 1]);
        if k < self.levels() {
            p.a[k] = move_cols(&self.a[k]);
            p.b[k] = move_cols(&self.b[k]);
        } else {
            p.y_star = move_vec(&self.y_star);
        }
        Ok(p)
    }
}

/// Exact `F(w)` and `∇F(w)` by the chain rule.
pub fn full_gradient_oracle<T: Scalar>(p: &CompProblem<T>, w: &[T]) -> (T, Vec<T>) {
    let ys = p.forward(w);
    let top = ys.last().expect("K >= 1");
    let mut z: Vec<T> = top.iter().zip(&p.y_star).map(|(&a, &b)| a - b).collect();
    let value = z.iter().map(|&x| x * x).sum::<T>() * T::lit(0.5);
    for k in (1..=p.levels()).rev() {
        let input = if k == 1 { w } else { &ys[k - 2] };
        let all: Vec<usize> = (0..p.blocks()).collect();
        z = p.sampled_vjp(k, input, &z, &all, None);
    }
    (value, z)
}

/// Where trackers evaluate the level below.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackerEval {
    /// `u_k` reads `u_{k−1}` already updated in the same iteration
    /// (`u_0 = w` at the current iterate).
    Current,
    /// `u_k` reads the previous iteration's `u_{k−1}`.
    Lagged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepConfig {
    /// Blocks sampled per level, `1..=n`.
    pub batch: usize,
    /// `β₀,ₖ` for levels `1..K`, each in `(0, 1]`.
    pub beta0: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eta: f64,
    pub eps0: f64,
    pub tracker_eval: TrackerEval,
}

impl StepConfig {
    pub fn validate(&self, levels: usize, blocks: usize) -> Result<()> {
        let unit = |b: f64| b > 0.0 && b <= 1.0;
        if self.batch == 0 || self.batch > blocks {
            return Err(Error::Config(format!("batch must be in 1..={blocks}, got {}", self.batch)));
        }
        if self.beta0.len() != levels || !self.beta0.iter().all(|&b| unit(b)) {
            return Err(Error::Config(format!(
                "beta0 needs {levels} entries in (0, 1], got {:?}",
                self.beta0
            )));
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();
        let nonneg = |x: f64| x >= 0.0 && x.is_finite();
        if !unit(self.beta1) || !unit(self.beta2) || !positive(self.eta) || !nonneg(self.eps0) {
            return Err(Error::Config("invalid beta1/beta2/eta/eps0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompState<T> {
    pub w: Vec<T>,
    /// Trackers `u_1..u_K` (index `k−1`), each `n·d_k` long.
    pub u: Vec<Vec<T>>,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Scalar> CompState<T> {
    /// Zero trackers and moments at `w0`.
    pub fn new(p: &CompProblem<T>, w0: Vec<T>) -> Result<Self> {
        if w0.len() != p.spec.dims[0] {
            return Err(Error::dims("comp_state", p.spec.dims[0], w0.len()));
        }
        let d = w0.len();
        Ok(Self {
            u: (1..=p.levels()).map(|k| vec![T::zero(); p.blocks() * p.block_dim(k)]).collect(),
            m: vec![T::zero(); d],
            v: vec![T::zero(); d],
            w: w0,
            t: 0,
        })
    }

    /// `w0` drawn from a standard normal with `seed`.
    pub fn random(p: &CompProblem<T>, seed: u64) -> Self {
        let mut rng = RngState::stream(seed, 7);
        let w0 = (0..p.spec.dims[0]).map(|_| gaussian(&mut rng)).collect();
        Self::new(p, w0).expect("dims match")
    }

    fn is_finite(&self) -> bool {
        let ok = |v: &[T]| v.iter().all(|x| x.is_finite());
        ok(&self.w) && ok(&self.m) && ok(&self.v) && self.u.iter().all(|u| ok(u))
    }
}

/// Updates trackers and moments at the current `w` and returns the
/// stochastic gradient estimate used for the moments. `w` is unchanged.
pub fn fm_comp_estimate<T: Scalar>(
    p: &CompProblem<T>,
    s: &mut CompState<T>,
    cfg: &StepConfig,
    rng: &mut RngState,
) -> Result<Vec<T>> {
    let levels = p.levels();
    let lagged = match cfg.tracker_eval {
        TrackerEval::Lagged => Some(s.u.clone()),
        TrackerEval::Current => None,
    };
    s.t += 1;
    let mut chosen = Vec::with_capacity(levels);
    for k in 1..=levels {
        let mut blocks = sample(rng, p.blocks(), cfg.batch).into_vec();
        blocks.sort_unstable();
        let beta = T::lit(cfg.beta0[k - 1]);
        let d = p.block_dim(k);
        for &i in &blocks {
            let est = {
                let input: &[T] = match (&lagged, k) {
                    (_, 1) => &s.w,
                    (Some(old), _) => &old[k - 2],
                    (None, _) => &s.u[k - 2],
                };
                p.noisy_block(k, i, input, rng)
            };
            for (u, e) in s.u[k - 1][i * d..(i + 1) * d].iter_mut().zip(est) {
                *u = (T::one() - beta) * *u + beta * e;
            }
        }
        chosen.push(blocks);
    }
    let mut z = p.noisy_top_gradient(&s.u[levels - 1], rng);
    for k in (1..=levels).rev() {
        let input: &[T] = if k == 1 { &s.w } else { &s.u[k - 2] };
        z = p.sampled_vjp(k, input, &z, &chosen[k - 1], Some(rng));
    }
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    for ((m, v), &g) in s.m.iter_mut().zip(s.v.iter_mut()).zip(&z) {
        *m = (T::one() - b1) * *m + b1 * g;
        *v = (T::one() - b2) * *v + b2 * g * g;
    }
    if !s.is_finite() {
        return Err(Error::Diverged {
            iteration: s.t,
            what: "tracker or moment state".into(),
        });
    }
    Ok(z)
}

/// `w ← w − η·m/(√v + ε₀)`.
pub fn fm_comp_apply<T: Scalar>(s: &mut CompState<T>, cfg: &StepConfig) -> Result<()> {
    let (eta, eps0) = (T::lit(cfg.eta), T::lit(cfg.eps0));
    for ((w, &m), &v) in s.w.iter_mut().zip(&s.m).zip(&s.v) {
        if m != T::zero() {
            *w -= eta * (m / (v.sqrt() + eps0));
        }
    }
    if s.w.iter().any(|x| !x.is_finite()) {
        return Err(Error::Diverged {
            iteration: s.t,
            what: "parameters".into(),
        });
    }
    Ok(())
}

/// One full iteration: trackers, moments, then parameters.
pub fn fm_comp_step<T: Scalar>(
    p: &CompProblem<T>,
    s: &mut CompState<T>,
    cfg: &StepConfig,
    rng: &mut RngState,
) -> Result<()> {
    fm_comp_estimate(p, s, cfg, rng)?;
    fm_comp_apply(s, cfg)
}

/// `Υᵏ = ‖f_k(u_{k−1}) − u_k‖²` per level, with `u_0 = w`.
pub fn tracker_errors<T: Scalar>(p: &CompProblem<T>, s: &CompState<T>) -> Vec<f64> {
    (1..=p.levels())
        .map(|k| {
            let input: &[T] = if k == 1 { &s.w } else { &s.u[k - 2] };
            p.eval_level(k, input)
                .iter()
                .zip(&s.u[k - 1])
                .map(|(&a, &b)| ((a - b) * (a - b)).as_f64())
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub step: StepConfig,
    pub iterations: u64,
    /// Diagnostics are recorded every `log_every` iterations.
    pub log_every: u64,
    /// Length of the trailing window for the mean gradient norm.
    pub trailing_window: u64,
}

impl Schedule {
    /// Exponent shape of the stationarity schedule for target `eps`:
    /// `η = c_η·εᴷ`, `β₁ = εᴷ`, `β₀,ₖ = ε^{K−k}`.
    pub fn stationarity(eps: f64, levels: usize, batch: usize, eta_scale: f64, iterations: u64) -> Self {
        let k = levels as i32;
        Self {
            step: StepConfig {
                batch,
                beta0: (1..=levels).map(|l| eps.powi(k - l as i32)).collect(),
                beta1: eps.powi(k),
                beta2: eps.powi(k),
                eta: eta_scale * eps.powi(k),
                eps0: 1e-8,
                tracker_eval: TrackerEval::Current,
            },
            iterations,
            log_every: 1000,
            trailing_window: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRecord {
    pub t: u64,
    pub grad_norm: f64,
    pub phi: f64,
    pub upsilon: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub records: Vec<ConvergenceRecord>,
    pub min_grad_norm: f64,
    /// Mean oracle gradient norm over the last `trailing_window` iterations.
    pub trailing_mean_grad_norm: f64,
    /// Mean `Φᵗ` over the last quarter of the run.
    pub last_quarter_mean_phi: f64,
    pub final_objective: f64,
}

impl ConvergenceReport {
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Runs `schedule.iterations` steps from `state`, computing oracle
/// diagnostics at log points and throughout the trailing windows.
pub fn run_convergence<T: Scalar>(
    p: &CompProblem<T>,
    mut state: CompState<T>,
    schedule: &Schedule,
    seed: u64,
) -> Result<(ConvergenceReport, CompState<T>)> {
    let total = schedule.iterations;
    if total == 0 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    schedule.step.validate(p.levels(), p.blocks())?;
    let mut rng = RngState::stream(seed, 3);
    let window_start = total.saturating_sub(schedule.trailing_window.max(1));
    let quarter_start = total - total.div_ceil(4);
    let tail_start = window_start.min(quarter_start);
    let log_every = schedule.log_every.max(1);
    let mut records = Vec::new();
    let (mut min_grad, mut window_sum, mut window_n) = (f64::INFINITY, 0.0, 0u64);
    let (mut phi_sum, mut phi_n) = (0.0, 0u64);
    for it in 0..total {
        fm_comp_estimate(p, &mut state, &schedule.step, &mut rng)?;
        let t = state.t;
        let logged = t.is_multiple_of(log_every) || it + 1 == total;
        if logged || it >= tail_start {
            let (_, grad) = full_gradient_oracle(p, &state.w);
            let grad_norm = norm2(&grad).as_f64();
            let phi: f64 = grad.iter().zip(&state.m).map(|(&g, &m)| ((g - m) * (g - m)).as_f64()).sum();
            min_grad = min_grad.min(grad_norm);
            if it >= window_start {
                window_sum += grad_norm;
                window_n += 1;
            }
            if it >= quarter_start {
                phi_sum += phi;
                phi_n += 1;
            }
            if logged {
                records.push(ConvergenceRecord {
                    t,
                    grad_norm,
                    phi,
                    upsilon: tracker_errors(p, &state),
                });
            }
        }
        fm_comp_apply(&mut state, &schedule.step)?;
    }
    let report = ConvergenceReport {
        records,
        min_grad_norm: min_grad,
        trailing_mean_grad_norm: window_sum / window_n as f64,
        last_quarter_mean_phi: phi_sum / phi_n as f64,
        final_objective: p.objective(&state.w).as_f64(),
    };
    Ok((report, state))
}
