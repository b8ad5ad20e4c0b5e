//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line straight to stderr (visible without `--nocapture`) and then asserts.

use std::io::Write;
use std::path::Path;
use std::process::Command;

use featmom::adam::{AdamConfig, AdamState};
use featmom::compopt::{make_problem, run_convergence, CompProblem, CompState, ProblemSpec, Schedule};
use featmom::dense::{fd_gradient_check, Activation, Matrix, RngState};
use featmom::graph::{generate_sbm, partition_greedy_bfs, Graph, NodeData, Partition, SbmSpec, Split};
use featmom::ib::{build_batch, ib_forward, ib_history, IBConfig, IBTrainer};
use featmom::layers::{estimate_aggregate, full_batch_forward, full_batch_loss_and_grad, mean_aggregate, LayerKind, Model};
use featmom::ob::{build_ob_batch, ob_forward, ob_history, staleness_experiment, OBConfig, OBMode, OBTrainer};
use featmom::train::FullBatchTrainer;
use itertools::Itertools;
use rand::Rng;

fn report(n: u32, name: &str, pass: bool, detail: String) {
    let status = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {n} ({name}): {status} - {detail}");
    assert!(pass, "criterion {n} failed: {detail}");
}

fn sbm(block_size: usize, p_in: f64, p_out: f64, feature_dim: usize, seed: u64) -> (Graph, NodeData<f64>) {
    let spec = SbmSpec { blocks: 2, block_size, p_in, p_out, feature_dim };
    generate_sbm(&spec, seed).unwrap()
}

/// Random graph whose degrees never exceed `max_deg`.
fn bounded_degree_graph(n: usize, max_deg: usize, attempts: usize, rng: &mut RngState) -> Graph {
    let mut deg = vec![0; n];
    let mut edges = Vec::new();
    for _ in 0..attempts {
        let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
        if u == v || deg[u] >= max_deg || deg[v] >= max_deg || edges.contains(&(u.min(v), u.max(v))) {
            continue;
        }
        deg[u] += 1;
        deg[v] += 1;
        edges.push((u.min(v), u.max(v)));
    }
    Graph::from_edges(n, &edges, true).unwrap()
}

#[test]
fn criterion_1_sampled_aggregate_is_unbiased() {
    let mut rng = RngState::new(1);
    let (mut worst, mut cases) = (0.0f64, 0usize);
    for _ in 0..20 {
        let g = bounded_degree_graph(25, 6, 120, &mut rng);
        assert!(g.max_degree() <= 6);
        let h = Matrix::from_fn(25, 3, |_, _| rng.random_range(-2.0..2.0));
        for v in 0..g.num_nodes() {
            let exact = mean_aggregate(&g, &h, v);
            let nb = g.neighbors(v);
            for b in 1..=nb.len() {
                let subsets: Vec<Vec<usize>> = nb.iter().copied().combinations(b).collect();
                let mut mean = [0.0; 3];
                for s in &subsets {
                    for (m, x) in mean.iter_mut().zip(estimate_aggregate(&g, &h, v, s).unwrap()) {
                        *m += x / subsets.len() as f64;
                    }
                }
                for (m, e) in mean.iter().zip(&exact) {
                    worst = worst.max((m - e).abs());
                }
                cases += 1;
            }
        }
    }
    report(1, "estimator unbiasedness", worst <= 1e-12, format!("{cases} (node, b) cases, max error {worst:.2e}"));
}

fn max_param_diff(a: &Model<f64>, b: &Model<f64>) -> f64 {
    a.flat_params().iter().zip(b.flat_params()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn criterion_2_degenerate_settings_match_full_batch() {
    let mut worst = 0.0f64;
    for (block_size, seed) in [(10, 1u64), (40, 2), (100, 3)] {
        let (g, data) = sbm(block_size, 0.1, 0.02, 4, seed);
        let n = g.num_nodes();
        let mut rng = RngState::new(seed + 10);
        let model = Model::<f64>::init(LayerKind::MeanSage, Activation::Relu, &[4, 8, 2], true, &mut rng).unwrap();
        let exact = full_batch_forward(&g, &model, &data.features).unwrap();
        let full_b = g.max_degree().max(1);
        let all: Vec<usize> = (0..n).collect();

        let batch = build_batch(&g, &all, &[full_b, full_b], &mut rng).unwrap();
        let mut h = ib_history(n, &model);
        let tape = ib_forward(&g, &model, &mut h, &batch, &[1.0, 1.0], &data.features).unwrap();
        for (rec, want) in tape.layers.iter().zip(&exact) {
            worst = worst.max(rec.output.max_abs_diff(want));
        }
        let whole = Partition::whole(n);
        let ob_batch = build_ob_batch(&g, &whole, &[0], 0).unwrap();
        let mut h = ob_history(n, &model);
        let ob_cfg = OBConfig {
            clusters_per_batch: 1,
            beta0: vec![0.5, 0.5],
            push_threshold: 0,
            mode: OBMode::GraphFmOb,
            momentum_in_batch: false,
            epochs: 3,
            seed,
        };
        let tape = ob_forward(&g, &model, &mut h, &ob_batch, &ob_cfg, &data.features).unwrap();
        for (rec, want) in tape.layers.iter().zip(&exact) {
            worst = worst.max(rec.output.max_abs_diff(want));
        }

        let adam = AdamState::new(model.num_params(), AdamConfig::default());
        let n_train = data.nodes_in(Split::Train).len();
        let ib_cfg = IBConfig {
            neighbor_sizes: vec![full_b, full_b],
            batch_size: n_train,
            beta0: vec![1.0, 1.0],
            epochs: 3,
            seed,
        };
        let mut ib = IBTrainer::new(ib_cfg, model.clone(), adam.clone(), n).unwrap();
        let mut ob = OBTrainer::new(ob_cfg, whole, model.clone(), adam.clone()).unwrap();
        let mut full = FullBatchTrainer::new(model, adam);
        for _ in 0..3 {
            let a = ib.train_epoch(&g, &data).unwrap();
            let b = ob.train_epoch(&g, &data).unwrap();
            let c = full.train_epoch(&g, &data).unwrap();
            worst = worst.max((a.loss - c.loss).abs()).max((b.loss - c.loss).abs());
            worst = worst.max(max_param_diff(&ib.model, &full.model));
            worst = worst.max(max_param_diff(&ob.model, &full.model));
        }
    }
    report(2, "degenerate oracle equivalence", worst <= 1e-10, format!("n up to 200, max deviation {worst:.2e}"));
}

#[test]
fn criterion_3_zero_momentum_matches_baseline_bitwise() {
    let (g, data) = sbm(50, 0.2, 0.02, 8, 5);
    let part = partition_greedy_bfs(&g, 4, 5).unwrap();
    let model = Model::<f64>::init(LayerKind::MeanSage, Activation::Relu, &[8, 16, 2], true, &mut RngState::new(6)).unwrap();
    let adam = AdamState::new(model.num_params(), AdamConfig::default());
    let cfg = |mode| OBConfig {
        clusters_per_batch: 1,
        beta0: vec![0.0, 0.0],
        push_threshold: 0,
        mode,
        momentum_in_batch: false,
        epochs: 20,
        seed: 5,
    };
    let mut fm = OBTrainer::new(cfg(OBMode::GraphFmOb), part.clone(), model.clone(), adam.clone()).unwrap();
    let mut base = OBTrainer::new(cfg(OBMode::GnnAutoScale), part, model, adam).unwrap();
    let mut identical = true;
    for _ in 0..20 {
        let a = fm.train_epoch(&g, &data).unwrap();
        let b = base.train_epoch(&g, &data).unwrap();
        identical &= a == b && fm.model == base.model && fm.history == base.history && fm.adam == base.adam;
    }
    report(3, "mode reduction", identical, "20 epochs, weights/histories/metrics compared with ==".into());
}

#[test]
fn criterion_4_layer_gradients_match_finite_differences() {
    let edges = [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (0, 4), (2, 6), (1, 7)];
    let g = Graph::from_edges(8, &edges, true).unwrap();
    let mut rng = RngState::new(3);
    let x = Matrix::from_fn(8, 3, |_, _| rng.random_range(-1.0..1.0));
    let labels = vec![0, 1, 2, 0, 1, 2, 0, 1];
    let mask: Vec<usize> = (0..8).collect();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for kind in [LayerKind::MeanSage, LayerKind::Gcn] {
        for dims in [vec![3, 4, 3], vec![3, 5, 4, 3]] {
            for act in [Activation::Relu, Activation::Sigmoid] {
                let mut model = Model::<f64>::init(kind, act, &dims, true, &mut rng).unwrap();
                full_batch_loss_and_grad(&g, &mut model, &x, &labels, &mask).unwrap();
                let params = model.flat_params();
                let grads = model.flat_grads();
                let mut offset = 0;
                for k in 0..model.num_layers() {
                    let len = model.layers[k].weight.rows() * model.layers[k].weight.cols();
                    let range = offset..offset + len;
                    let mut probe = model.clone();
                    let rel = fd_gradient_check(
                        |w: &[f64]| {
                            let mut p = params.clone();
                            p[range.clone()].copy_from_slice(w);
                            probe.set_flat_params(&p).unwrap();
                            full_batch_loss_and_grad(&g, &mut probe, &x, &labels, &mask).unwrap()
                        },
                        &params[range.clone()],
                        &grads[range.clone()],
                        1e-4,
                    )
                    .unwrap();
                    worst = worst.max(rel);
                    checked += 1;
                    offset += len;
                }
            }
        }
    }
    report(4, "gradient correctness", worst <= 1e-5, format!("{checked} layer weights, max relative error {worst:.2e}"));
}

#[test]
fn criterion_5_adam_step_fidelity() {
    let cfg = AdamConfig { eta: 0.02, beta1: 0.1, beta2: 0.01, eps0: 1e-8, bias_correction: false };
    let mut state = AdamState::<f64>::new(3, cfg);
    let mut w = vec![0.5, -1.0, 2.0];
    let grads = [[1.0, -2.0, 0.5], [0.3, 4.0, -1.5], [-2.5, 0.1, 1.0]];
    let mut rw = w.clone();
    let (mut v1, mut v2) = (vec![0.0; 3], vec![0.0; 3]);
    let mut worst = 0.0f64;
    for g in &grads {
        state.step(&mut w, g).unwrap();
        for i in 0..3 {
            v1[i] = 0.9 * v1[i] + 0.1 * g[i];
            v2[i] = 0.99 * v2[i] + 0.01 * g[i] * g[i];
            rw[i] -= 0.02 * v1[i] / (v2[i].sqrt() + 1e-8);
            worst = worst.max((w[i] - rw[i]).abs());
        }
    }
    let sign_cfg = AdamConfig { eta: 0.05, beta1: 1.0, beta2: 1.0, eps0: 0.0, bias_correction: false };
    let mut s = AdamState::<f64>::new(4, sign_cfg);
    let mut ws = vec![0.0; 4];
    let g = [1e-6, -3.0, 700.0, -0.25];
    s.step(&mut ws, &g).unwrap();
    let sign_exact = ws.iter().zip(g).all(|(wi, gi)| *wi == -0.05 * gi.signum());
    report(
        5,
        "Adam-step fidelity",
        worst <= 1e-14 && sign_exact,
        format!("3-step max deviation {worst:.2e}, sign step exact: {sign_exact}"),
    );
}

fn ib_run(sizes: [usize; 2], beta0: f64, seed: u64) -> f64 {
    let (g, data) = sbm(50, 0.2, 0.02, 8, seed);
    let model = Model::<f64>::init(LayerKind::MeanSage, Activation::Relu, &[8, 16, 2], true, &mut RngState::new(seed + 100)).unwrap();
    let adam = AdamState::new(model.num_params(), AdamConfig::default());
    let cfg = IBConfig { neighbor_sizes: sizes.to_vec(), batch_size: 10, beta0: vec![beta0; 2], epochs: 100, seed };
    let mut tr = IBTrainer::new(cfg, model, adam, g.num_nodes()).unwrap();
    let mut val = 0.0;
    for _ in 0..100 {
        val = tr.train_epoch(&g, &data).unwrap().val_acc;
    }
    val
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn criterion_6_one_sampled_neighbor_matches_eight() {
    let one = median((0..5).map(|s| ib_run([1, 1], 0.4, s)).collect());
    let eight = median((0..5).map(|s| ib_run([8, 8], 0.4, s)).collect());
    report(
        6,
        "neighbor-size-1 parity",
        (one - eight).abs() <= 0.02,
        format!("median final val accuracy: b=1 {one:.3}, b=8 {eight:.3}"),
    );
}

#[test]
fn criterion_7_momentum_reduces_staleness() {
    let mut wins = 0;
    let mut detail = String::new();
    for seed in 0..5u64 {
        let (g, data) = sbm(50, 0.2, 0.02, 8, seed);
        let part = partition_greedy_bfs(&g, 4, seed).unwrap();
        let model = Model::<f64>::init(LayerKind::MeanSage, Activation::Relu, &[8, 16, 2], true, &mut RngState::new(seed + 100)).unwrap();
        let adam = AdamState::new(model.num_params(), AdamConfig::default());
        let cfg = OBConfig {
            clusters_per_batch: 1,
            beta0: vec![0.3, 0.3],
            push_threshold: 2,
            mode: OBMode::GraphFmOb,
            momentum_in_batch: false,
            epochs: 100,
            seed,
        };
        let c = staleness_experiment(&g, &data, &part, &model, &adam, &cfg).unwrap();
        for k in 0..2 {
            if c.fm.layer_mean[k] <= c.baseline.layer_mean[k] {
                wins += 1;
            }
        }
        detail += &format!(
            " s{seed}[{:.3},{:.3} vs {:.3},{:.3}]",
            c.fm.layer_mean[0], c.fm.layer_mean[1], c.baseline.layer_mean[0], c.baseline.layer_mean[1]
        );
    }
    report(7, "staleness improvement", wins > 5, format!("{wins}/10 (layer, seed) pairs;{detail}"));
}

fn comp_instance(seed: u64) -> CompProblem<f64> {
    make_problem(&ProblemSpec::new(8, vec![4, 2, 2], 0.1, 0.1, seed)).unwrap()
}

#[test]
fn criterion_8_compositional_convergence() {
    let p = comp_instance(0);
    let schedule = Schedule::stationarity(0.3, 2, 2, 0.01, 200_000);
    let (r, _) = run_convergence(&p, CompState::random(&p, 0), &schedule, 0).unwrap();
    let converged = r.trailing_mean_grad_norm <= 0.3;
    let mut wins = 0;
    for seed in 0..5u64 {
        let p = comp_instance(seed);
        let phi = |b: f64| {
            let mut s = Schedule::stationarity(0.3, 2, 2, 0.01, 50_000);
            s.step.beta0 = vec![b, b];
            run_convergence(&p, CompState::random(&p, seed), &s, seed).unwrap().0.last_quarter_mean_phi
        };
        if phi(0.1) < phi(1.0) {
            wins += 1;
        }
    }
    report(
        8,
        "compositional convergence",
        converged && wins >= 4,
        format!("trailing-1000 mean grad norm {:.4} (<= 0.3), lower phi with momentum in {wins}/5 seeds", r.trailing_mean_grad_norm),
    );
}

fn run_cli(args: &[&str], out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_featmom"))
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .unwrap();
    assert!(status.success(), "{args:?}");
}

#[test]
fn criterion_9_repeated_cli_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 5] = [
        &["train-full", "sbm_block_size=20", "epochs=30"],
        &["train-ib", "sbm_block_size=20", "epochs=10"],
        &["train-ob", "sbm_block_size=20", "epochs=10", "ob_mode=gnn_autoscale"],
        &["staleness", "sbm_block_size=20", "epochs=10"],
        &["compopt", "iterations=3000", "log_every=100"],
    ];
    let mut same = true;
    for (i, args) in runs.iter().enumerate() {
        let a = dir.path().join(format!("{i}a"));
        let b = dir.path().join(format!("{i}b"));
        run_cli(args, &a);
        run_cli(args, &b);
        for f in ["metrics.jsonl", "config.txt"] {
            same &= std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
        }
    }
    report(9, "determinism", same, format!("{} commands run twice, metrics and config echo compared byte for byte", runs.len()));
}
