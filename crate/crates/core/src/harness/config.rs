//! `key = value` run configuration with `#` comments and `key=value`
//! command-line overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dense::Activation;
use crate::error::{Error, Result};
use crate::layers::LayerKind;
use crate::ob::OBMode;
use crate::compopt::TrackerEval;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GenData,
    TrainIb,
    TrainOb,
    TrainFull,
    Staleness,
    Compopt,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::GenData,
        Command::TrainIb,
        Command::TrainOb,
        Command::TrainFull,
        Command::Staleness,
        Command::Compopt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::TrainIb => "train-ib",
            Command::TrainOb => "train-ob",
            Command::TrainFull => "train-full",
            Command::Staleness => "staleness",
            Command::Compopt => "compopt",
        }
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command '{s}'")))
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Every accepted key with its default (empty means unset) and a short
/// description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "master seed for data, init, batching and noise"),
    ("sweep_seeds", "1", "run seeds seed..seed+N-1, each in out/seed_<s>/"),
    ("dataset", "sbm", "sbm | files"),
    ("data_dir", "", "directory with edges.txt, features.csv, labels.csv, splits.csv"),
    ("sbm_blocks", "2", "SBM block count"),
    ("sbm_block_size", "50", "nodes per SBM block"),
    ("p_in", "0.2", "SBM within-block edge probability"),
    ("p_out", "0.02", "SBM cross-block edge probability"),
    ("feature_dim", "8", "SBM feature width (>= sbm_blocks)"),
    ("layer_kind", "mean_sage", "mean_sage | gcn | concat_sage"),
    ("activation", "relu", "hidden activation: relu | sigmoid | identity"),
    ("hidden_dims", "16", "comma list of hidden widths; K = entries + 1"),
    ("normalize", "true", "L2-normalize hidden layer outputs"),
    ("epochs", "100", "training epochs"),
    ("eta", "0.01", "Adam step size"),
    ("beta1", "0.1", "first-moment weight"),
    ("beta2", "0.01", "second-moment weight"),
    ("eps0", "1e-8", "denominator offset"),
    ("bias_correction", "false", "Adam bias correction"),
    ("beta0", "0.3", "feature momentum per layer (one value broadcasts)"),
    ("neighbor_sizes", "2", "IB sampled neighbors per layer (one value broadcasts)"),
    ("batch_size", "10", "IB target nodes per minibatch"),
    ("num_clusters", "4", "OB partition size"),
    ("clusters_per_batch", "1", "OB clusters per minibatch"),
    ("push_threshold", "2", "OB frontier nodes need more in-batch neighbors than this"),
    ("ob_mode", "graphfm_ob", "graphfm_ob | gnn_autoscale"),
    ("momentum_in_batch", "false", "OB folds in-batch values with beta0 instead of overwriting"),
    ("comp_blocks", "8", "compopt blocks per level"),
    ("comp_dims", "4,2,2", "compopt d_0..d_K"),
    ("comp_batch", "2", "compopt sampled blocks per level"),
    ("sigma_f", "0.1", "compopt value noise"),
    ("sigma_g", "0.1", "compopt Jacobian noise"),
    ("comp_alpha", "0.1", "compopt tanh weight"),
    ("comp_a_norm", "2", "compopt Frobenius norm of each level's A"),
    ("comp_b_norm", "1", "compopt Frobenius norm of each level's B"),
    ("comp_eps", "0.3", "compopt target accuracy shaping the schedule"),
    ("comp_eta_scale", "0.01", "compopt eta = scale * eps^K"),
    ("comp_beta0", "", "compopt tracker weights per level (empty: eps^(K-k))"),
    ("comp_tracker", "current", "current | lagged"),
    ("iterations", "200000", "compopt iterations"),
    ("log_every", "1000", "compopt diagnostics interval"),
    ("trailing_window", "1000", "compopt trailing mean window"),
];

pub fn valid_keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter().map(|k| k.0)
}

fn nearest_key(key: &str) -> &'static str {
    valid_keys()
        .min_by_key(|k| strsim::damerau_levenshtein(key, k))
        .expect("key table is non-empty")
}

fn unknown_key(key: &str) -> Error {
    Error::Config(format!(
        "unknown key '{key}' (did you mean '{}'?); valid keys: {}",
        nearest_key(key),
        valid_keys().collect::<Vec<_>>().join(", ")
    ))
}

/// Splits `key = value` text into pairs, skipping blank lines and `#`
/// comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected 'key = value', got '{line}'"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Resolved raw values: defaults, then the file, then overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|&(k, d, _)| (k, d.to_string())).collect(),
        }
    }
}

impl RawConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = valid_keys().find(|k| *k == key).ok_or_else(|| unknown_key(key))?;
        self.values.insert(k, value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        &self.values[key]
    }

    /// Echo in key-table order; parses back to the same config.
    pub fn to_text(&self, command: Command) -> String {
        let mut s = format!("# featmom {command}\n");
        for (k, _, _) in KEYS {
            s += &format!("{k} = {}\n", self.values[k]);
        }
        s
    }
}

/// Defaults overlaid with `file` (if given) and `overrides` (`key=value`).
pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<RawConfig> {
    let mut raw = RawConfig::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (k, v) in parse_pairs(&text)? {
            raw.set(&k, &v)?;
        }
    }
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{o}' is not key=value")))?;
        raw.set(k.trim(), v.trim())?;
    }
    Ok(raw)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Sbm {
        blocks: usize,
        block_size: usize,
        p_in: f64,
        p_out: f64,
        feature_dim: usize,
    },
    Files(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: LayerKind,
    pub activation: Activation,
    pub hidden_dims: Vec<usize>,
    pub normalize: bool,
}

impl ModelSpec {
    pub fn num_layers(&self) -> usize {
        self.hidden_dims.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompSpec {
    pub blocks: usize,
    pub dims: Vec<usize>,
    pub batch: usize,
    pub sigma_f: f64,
    pub sigma_g: f64,
    pub alpha: f64,
    pub a_norm: f64,
    pub b_norm: f64,
    pub eps: f64,
    pub eta_scale: f64,
    pub beta0: Option<Vec<f64>>,
    pub tracker: TrackerEval,
    pub iterations: u64,
    pub log_every: u64,
    pub trailing_window: u64,
}

/// Fully typed configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub seed: u64,
    pub sweep_seeds: u64,
    pub data: DataSource,
    pub model: ModelSpec,
    pub epochs: usize,
    pub adam: crate::adam::AdamConfig,
    pub beta0: Vec<f64>,
    pub neighbor_sizes: Vec<usize>,
    pub batch_size: usize,
    pub num_clusters: usize,
    pub clusters_per_batch: usize,
    pub push_threshold: usize,
    pub ob_mode: OBMode,
    pub momentum_in_batch: bool,
    pub comp: CompSpec,
}

fn typed<T: FromStr>(raw: &RawConfig, key: &str, what: &str) -> Result<T> {
    let v = raw.get(key);
    if v.is_empty() {
        return Err(Error::Config(format!("missing required value for key '{key}'")));
    }
    v.parse()
        .map_err(|_| Error::Config(format!("key '{key}': expected {what}, got '{v}'")))
}

fn list<T: FromStr>(raw: &RawConfig, key: &str, what: &str) -> Result<Vec<T>> {
    let v = raw.get(key);
    if v.is_empty() {
        return Err(Error::Config(format!("missing required value for key '{key}'")));
    }
    v.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Config(format!("key '{key}': expected a list of {what}, got '{v}'")))
        })
        .collect()
}

fn broadcast<T: Clone>(key: &str, v: Vec<T>, len: usize) -> Result<Vec<T>> {
    match v.len() {
        1 => Ok(vec![v[0].clone(); len]),
        n if n == len => Ok(v),
        n => Err(Error::Config(format!("key '{key}': expected 1 or {len} entries, got {n}"))),
    }
}

const NUM: &str = "a number";
const COUNT: &str = "a non-negative integer";

impl RunConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let r = &raw;
        let data = match r.get("dataset") {
            "sbm" => DataSource::Sbm {
                blocks: typed(r, "sbm_blocks", COUNT)?,
                block_size: typed(r, "sbm_block_size", COUNT)?,
                p_in: typed(r, "p_in", NUM)?,
                p_out: typed(r, "p_out", NUM)?,
                feature_dim: typed(r, "feature_dim", COUNT)?,
            },
            "files" => DataSource::Files(typed::<PathBuf>(r, "data_dir", "a path")?),
            other => return Err(Error::Config(format!("key 'dataset': expected sbm or files, got '{other}'"))),
        };
        let parse_with = |key: &str, what: &str| -> Result<String> {
            typed::<String>(r, key, what)
        };
        let model = ModelSpec {
            kind: parse_with("layer_kind", "a layer kind")?.parse().map_err(Error::Config)?,
            activation: parse_with("activation", "an activation")?.parse().map_err(Error::Config)?,
            hidden_dims: match r.get("hidden_dims") {
                "" | "none" => Vec::new(),
                _ => list(r, "hidden_dims", "widths")?,
            },
            normalize: typed(r, "normalize", "true or false")?,
        };
        let k = model.num_layers();
        let comp_dims: Vec<usize> = list(r, "comp_dims", "widths")?;
        let comp_levels = comp_dims.len().saturating_sub(1);
        let comp = CompSpec {
            blocks: typed(r, "comp_blocks", COUNT)?,
            dims: comp_dims,
            batch: typed(r, "comp_batch", COUNT)?,
            sigma_f: typed(r, "sigma_f", NUM)?,
            sigma_g: typed(r, "sigma_g", NUM)?,
            alpha: typed(r, "comp_alpha", NUM)?,
            a_norm: typed(r, "comp_a_norm", NUM)?,
            b_norm: typed(r, "comp_b_norm", NUM)?,
            eps: typed(r, "comp_eps", NUM)?,
            eta_scale: typed(r, "comp_eta_scale", NUM)?,
            beta0: match r.get("comp_beta0") {
                "" => None,
                _ => Some(broadcast("comp_beta0", list(r, "comp_beta0", "numbers")?, comp_levels)?),
            },
            tracker: match r.get("comp_tracker") {
                "current" => TrackerEval::Current,
                "lagged" => TrackerEval::Lagged,
                other => {
                    return Err(Error::Config(format!(
                        "key 'comp_tracker': expected current or lagged, got '{other}'"
                    )))
                }
            },
            iterations: typed(r, "iterations", COUNT)?,
            log_every: typed(r, "log_every", COUNT)?,
            trailing_window: typed(r, "trailing_window", COUNT)?,
        };
        let cfg = Self {
            seed: typed(r, "seed", COUNT)?,
            sweep_seeds: typed(r, "sweep_seeds", COUNT)?,
            data,
            epochs: typed(r, "epochs", COUNT)?,
            adam: crate::adam::AdamConfig {
                eta: typed(r, "eta", NUM)?,
                beta1: typed(r, "beta1", NUM)?,
                beta2: typed(r, "beta2", NUM)?,
                eps0: typed(r, "eps0", NUM)?,
                bias_correction: typed(r, "bias_correction", "true or false")?,
            },
            beta0: broadcast("beta0", list(r, "beta0", "numbers")?, k)?,
            neighbor_sizes: broadcast("neighbor_sizes", list(r, "neighbor_sizes", "counts")?, k)?,
            batch_size: typed(r, "batch_size", COUNT)?,
            num_clusters: typed(r, "num_clusters", COUNT)?,
            clusters_per_batch: typed(r, "clusters_per_batch", COUNT)?,
            push_threshold: typed(r, "push_threshold", COUNT)?,
            ob_mode: parse_with("ob_mode", "an OB mode")?.parse().map_err(Error::Config)?,
            momentum_in_batch: typed(r, "momentum_in_batch", "true or false")?,
            comp,
            model,
            raw,
        };
        cfg.check_ranges()?;
        Ok(cfg)
    }

    fn check_ranges(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.sweep_seeds == 0 {
            return bad("sweep_seeds must be at least 1");
        }
        if let DataSource::Sbm { blocks, block_size, p_in, p_out, feature_dim } = &self.data {
            if *blocks == 0 || *block_size == 0 || feature_dim < blocks {
                return bad("SBM needs blocks, block_size >= 1 and feature_dim >= sbm_blocks");
            }
            if !(0.0..=1.0).contains(p_in) || !(0.0..=1.0).contains(p_out) {
                return bad("p_in and p_out must be in [0, 1]");
            }
        }
        if let DataSource::Files(dir) = &self.data {
            if !dir.is_dir() {
                return Err(Error::Config(format!("data_dir '{}' is not a directory", dir.display())));
            }
        }
        if self.model.hidden_dims.contains(&0) {
            return bad("hidden_dims entries must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        self.adam.validate()
    }

    pub fn to_text(&self, command: Command) -> String {
        self.raw.to_text(command)
    }

    /// Same configuration with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c.raw.values.insert("seed", seed.to_string());
        c
    }
}

/// Defaults, file and overrides resolved and type-checked.
pub fn parse_config(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    RunConfig::from_raw(resolve(file, overrides)?)
}
