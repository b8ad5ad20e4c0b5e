//! Experiment runner behind the `featmom` binary: dataset generation and
//! loading, the three trainers, the staleness comparison, the compositional
//! testbed, and JSON Lines metrics.

mod config;
mod metrics;

pub use config::{
    parse_config, parse_pairs, resolve, valid_keys, Command, CompSpec, DataSource, ModelSpec, RawConfig,
    RunConfig, KEYS,
};
pub use metrics::{MetricsRecord, MetricsWriter, METRICS_FILE, TIMING_FILE};

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::adam::AdamState;
use crate::compopt::{make_problem, run_convergence, CompProblem, CompState, ProblemSpec, Schedule};
use crate::dense::RngState;
use crate::error::{Error, Result};
use crate::graph::{
    generate_sbm, load_edge_list, load_features_csv, load_labels_csv, load_splits_csv, partition_greedy_bfs,
    write_edge_list, write_features_csv, write_labels_csv, write_splits_csv, Graph, NodeData, SbmSpec,
};
use crate::ib::{IBConfig, IBTrainer};
use crate::layers::Model;
use crate::ob::{train_to_best, OBConfig, OBMode, OBTrainer};
use crate::train::{EpochMetrics, FullBatchTrainer};

pub const CONFIG_ECHO_FILE: &str = "config.txt";
pub const MODEL_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.snap";
pub const COMPOPT_FILE: &str = "compopt.jsonl";

const MODEL_INIT_STREAM: u64 = 0x4d;

pub fn load_dataset(cfg: &RunConfig) -> Result<(Graph, NodeData<f64>)> {
    match &cfg.data {
        DataSource::Sbm { blocks, block_size, p_in, p_out, feature_dim } => generate_sbm(
            &SbmSpec {
                blocks: *blocks,
                block_size: *block_size,
                p_in: *p_in,
                p_out: *p_out,
                feature_dim: *feature_dim,
            },
            cfg.seed,
        ),
        DataSource::Files(dir) => {
            let features = load_features_csv::<f64>(dir.join("features.csv"))?;
            let n = features.rows();
            let g = load_edge_list(dir.join("edges.txt"), n, true)?;
            let (labels, classes) = load_labels_csv(dir.join("labels.csv"), n)?;
            let split = load_splits_csv(dir.join("splits.csv"), n)?;
            Ok((g, NodeData::new(features, labels, classes, split)?))
        }
    }
}

pub fn init_model(cfg: &RunConfig, data: &NodeData<f64>) -> Result<Model<f64>> {
    let mut dims = vec![data.features.cols()];
    dims.extend(&cfg.model.hidden_dims);
    dims.push(data.num_classes);
    let mut rng = RngState::stream(cfg.seed, MODEL_INIT_STREAM);
    Model::init(cfg.model.kind, cfg.model.activation, &dims, cfg.model.normalize, &mut rng)
}

fn ib_config(cfg: &RunConfig) -> IBConfig {
    IBConfig {
        neighbor_sizes: cfg.neighbor_sizes.clone(),
        batch_size: cfg.batch_size,
        beta0: cfg.beta0.clone(),
        epochs: cfg.epochs,
        seed: cfg.seed,
    }
}

fn ob_config(cfg: &RunConfig, mode: OBMode) -> OBConfig {
    OBConfig {
        clusters_per_batch: cfg.clusters_per_batch,
        beta0: cfg.beta0.clone(),
        push_threshold: cfg.push_threshold,
        mode,
        momentum_in_batch: cfg.momentum_in_batch,
        epochs: cfg.epochs,
        seed: cfg.seed,
    }
}

pub fn comp_problem(c: &CompSpec, seed: u64) -> Result<CompProblem<f64>> {
    make_problem(&ProblemSpec {
        blocks: c.blocks,
        dims: c.dims.clone(),
        sigma_f: c.sigma_f,
        sigma_g: c.sigma_g,
        alpha: c.alpha,
        a_norm: c.a_norm,
        b_norm: c.b_norm,
        seed,
    })
}

pub fn comp_schedule(c: &CompSpec) -> Schedule {
    let levels = c.dims.len().saturating_sub(1);
    let mut s = Schedule::stationarity(c.eps, levels, c.batch, c.eta_scale, c.iterations);
    if let Some(b) = &c.beta0 {
        s.step.beta0 = b.clone();
    }
    s.step.tracker_eval = c.tracker;
    s.log_every = c.log_every;
    s.trailing_window = c.trailing_window;
    s
}

fn epoch_record(cmd: Command, seed: u64, mode: Option<OBMode>, m: &EpochMetrics) -> MetricsRecord {
    MetricsRecord {
        mode: mode.map(|m| m.name().to_string()),
        epoch: Some(m.epoch as u64),
        step: Some(m.steps),
        loss: Some(m.loss),
        train_acc: Some(m.train_acc),
        val_acc: Some(m.val_acc),
        test_acc: Some(m.test_acc),
        val_micro_f1: Some(m.val_micro_f1),
        val_loss: Some(m.val_loss),
        memory_proxy: Some(m.memory_proxy as u64),
        ..MetricsRecord::new("epoch", cmd, seed)
    }
}

/// Runs one command for one seed, writing everything under `out`.
fn run_single(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let echo = out.join(CONFIG_ECHO_FILE);
    fs::write(&echo, cfg.to_text(cmd)).map_err(|e| Error::io(&echo, e))?;
    let seed = cfg.seed;
    if cmd == Command::GenData {
        let (g, data) = load_dataset(cfg)?;
        write_edge_list(out.join("edges.txt"), &g)?;
        write_features_csv(out.join("features.csv"), &data.features)?;
        write_labels_csv(out.join("labels.csv"), &data.labels)?;
        return write_splits_csv(out.join("splits.csv"), &data.split);
    }
    let mut w = MetricsWriter::create(out)?;
    let started = Instant::now();
    match cmd {
        Command::GenData => unreachable!(),
        Command::TrainFull => {
            let (g, data) = load_dataset(cfg)?;
            let model = init_model(cfg, &data)?;
            let adam = AdamState::new(model.num_params(), cfg.adam);
            let mut tr = FullBatchTrainer::new(model, adam);
            for _ in 0..cfg.epochs {
                let t0 = Instant::now();
                let m = tr.train_epoch(&g, &data)?;
                w.record(&epoch_record(cmd, seed, None, &m))?;
                w.timing(Some(m.epoch as u64), t0)?;
            }
            tr.model.save_checkpoint(out.join(MODEL_FILE))?;
        }
        Command::TrainIb => {
            let (g, data) = load_dataset(cfg)?;
            let model = init_model(cfg, &data)?;
            let adam = AdamState::new(model.num_params(), cfg.adam);
            let mut tr = IBTrainer::new(ib_config(cfg), model, adam, g.num_nodes())?;
            for _ in 0..cfg.epochs {
                let t0 = Instant::now();
                let m = tr.train_epoch(&g, &data)?;
                w.record(&epoch_record(cmd, seed, None, &m))?;
                w.timing(Some(m.epoch as u64), t0)?;
            }
            tr.model.save_checkpoint(out.join(MODEL_FILE))?;
            tr.history.save_snapshot(out.join(HISTORY_FILE))?;
        }
        Command::TrainOb => {
            let (g, data) = load_dataset(cfg)?;
            let model = init_model(cfg, &data)?;
            let adam = AdamState::new(model.num_params(), cfg.adam);
            let partition = partition_greedy_bfs(&g, cfg.num_clusters, seed)?;
            let mode = cfg.ob_mode;
            let mut tr = OBTrainer::new(ob_config(cfg, mode), partition, model, adam)?;
            for _ in 0..cfg.epochs {
                let t0 = Instant::now();
                let m = tr.train_epoch(&g, &data)?;
                let stale = tr.staleness(&g, &data, &tr.model)?;
                w.record(&MetricsRecord {
                    staleness: Some(stale.layer_mean),
                    ..epoch_record(cmd, seed, Some(mode), &m)
                })?;
                w.timing(Some(m.epoch as u64), t0)?;
            }
            tr.model.save_checkpoint(out.join(MODEL_FILE))?;
            tr.history.save_snapshot(out.join(HISTORY_FILE))?;
        }
        Command::Staleness => {
            let (g, data) = load_dataset(cfg)?;
            let model = init_model(cfg, &data)?;
            let adam = AdamState::new(model.num_params(), cfg.adam);
            let partition = partition_greedy_bfs(&g, cfg.num_clusters, seed)?;
            for mode in [OBMode::GraphFmOb, OBMode::GnnAutoScale] {
                let mut tr = OBTrainer::new(ob_config(cfg, mode), partition.clone(), model.clone(), adam.clone())?;
                let mut io: Result<()> = Ok(());
                let best = train_to_best(&mut tr, &g, &data, |m| {
                    if io.is_ok() {
                        io = w.record(&epoch_record(cmd, seed, Some(mode), m));
                    }
                })?;
                io?;
                let stale = crate::ob::staleness_against(&g, &data, &best.model, &best.history)?;
                w.record(&MetricsRecord {
                    mode: Some(mode.name().to_string()),
                    epoch: Some(best.epoch as u64),
                    val_acc: Some(best.val_acc),
                    val_loss: Some(best.val_loss),
                    staleness: Some(stale.layer_mean),
                    ..MetricsRecord::new("best", cmd, seed)
                })?;
                best.model.save_checkpoint(out.join(format!("model_{}.ckpt", mode.name())))?;
                best.history.save_snapshot(out.join(format!("history_{}.snap", mode.name())))?;
            }
        }
        Command::Compopt => {
            let c = &cfg.comp;
            let p = comp_problem(c, seed)?;
            let schedule = comp_schedule(c);
            let (report, _) = run_convergence(&p, CompState::random(&p, seed), &schedule, seed)?;
            for r in &report.records {
                w.record(&MetricsRecord {
                    step: Some(r.t),
                    grad_norm: Some(r.grad_norm),
                    phi: Some(r.phi),
                    upsilon: Some(r.upsilon.clone()),
                    ..MetricsRecord::new("log", cmd, seed)
                })?;
            }
            w.record(&MetricsRecord {
                step: Some(schedule.iterations),
                min_grad_norm: Some(report.min_grad_norm),
                trailing_mean_grad_norm: Some(report.trailing_mean_grad_norm),
                last_quarter_mean_phi: Some(report.last_quarter_mean_phi),
                objective: Some(report.final_objective),
                ..MetricsRecord::new("summary", cmd, seed)
            })?;
            report.write_jsonl(out.join(COMPOPT_FILE))?;
        }
    }
    w.timing(None, started)?;
    w.finish()
}

/// Output directory of one seed in a sweep.
pub fn seed_dir(out: &Path, cfg: &RunConfig, seed: u64) -> PathBuf {
    if cfg.sweep_seeds > 1 {
        out.join(format!("seed_{seed}"))
    } else {
        out.to_path_buf()
    }
}

/// Runs `cmd` for every seed of the sweep, sequentially.
pub fn run(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<()> {
    for s in cfg.seed..cfg.seed + cfg.sweep_seeds {
        run_single(cmd, &cfg.with_seed(s), &seed_dir(out, cfg, s))?;
    }
    Ok(())
}

/// Exit code for an error: 2 for configuration and parse problems, 1
/// otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse { .. } => 2,
        _ => 1,
    }
}

/// Parses, runs and reports. On failure an error record is appended to the
/// metrics file (when the output directory is usable) and printed to
/// stderr; the returned exit code is nonzero.
pub fn main_entry(cmd: Command, config: Option<&Path>, out: &Path, overrides: &[String]) -> i32 {
    let result = parse_config(config, overrides).and_then(|cfg| run(cmd, &cfg, out));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let rec = MetricsRecord {
                error_kind: Some(e.kind().to_string()),
                message: Some(e.to_string()),
                ..MetricsRecord::new("error", cmd, 0)
            };
            let line = rec.to_json_line();
            eprint!("{line}");
            if fs::create_dir_all(out).is_ok() {
                let _ = metrics::append_line(&out.join(METRICS_FILE), &line);
            }
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests;
