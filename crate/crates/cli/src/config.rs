//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lqnet::data::{SplitSpec, PRESETS};
use lqnet::dynamics::Solver;
use lqnet::model::{ModelKind, ModelSpec};
use lqnet::optim::{QuantumGrad, TrainConfig};
use lqnet::{Error, Result};

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "LQNET_DATA_DIR";

const KEYS: &[&str] = &[
    "dataset",
    "model",
    "solver",
    "seed",
    "split_seed",
    "epochs",
    "batch_size",
    "lr",
    "beta1",
    "beta2",
    "adam_eps",
    "eval_every",
    "threads",
    "grad_budget",
    "encoder_hidden",
    "n_data_qubits",
    "n_block_layers",
    "qnn_depth",
    "tau",
    "dt",
    "n_steps",
    "n_train",
    "n_val",
    "n_test",
    "class_a",
    "class_b",
    "data_dir",
    "images",
    "labels",
    "csv",
    "batches",
    "features",
    "output_dir",
];

/// Everything one run needs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: String,
    pub spec: ModelSpec,
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub data_dir: PathBuf,
    /// Dataset file keys (`images`, `labels`, `csv`, `batches`, `features`)
    /// that were set explicitly.
    pub paths: BTreeMap<String, String>,
    pub output_dir: PathBuf,
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(at) => &raw[..at],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(Error::Config(format!("line {}: unknown key `{k}`", i + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: key `{k}` set twice", i + 1)));
        }
    }
    Ok(out)
}

fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("`{key}` = `{v}` is not a valid value"))),
    }
}

fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("data"), PathBuf::from)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let map = parse_pairs(text)?;
        let dataset = map
            .get("dataset")
            .ok_or_else(|| Error::Config("missing required key `dataset`".into()))?
            .clone();
        if !PRESETS.contains(&dataset.as_str()) {
            return Err(Error::Config(format!(
                "unknown dataset `{dataset}` (expected one of {})",
                PRESETS.join(", ")
            )));
        }
        let kind: ModelKind = map
            .get("model")
            .ok_or_else(|| Error::Config("missing required key `model`".into()))?
            .parse()?;
        let seed = get(&map, "seed", 42u64)?;

        let mut spec = ModelSpec::new(kind, 1);
        spec.encoder_hidden = get(&map, "encoder_hidden", spec.encoder_hidden)?;
        spec.n_data_qubits = get(&map, "n_data_qubits", spec.n_data_qubits)?;
        spec.n_block_layers = get(&map, "n_block_layers", spec.n_block_layers)?;
        spec.qnn_depth = get(&map, "qnn_depth", spec.qnn_depth)?;
        let d = &mut spec.dynamics;
        if let Some(s) = map.get("solver") {
            d.solver = s.parse::<Solver>()?;
        }
        d.tau = get(&map, "tau", d.tau)?;
        d.dt = get(&map, "dt", d.dt)?;
        d.n_steps = get(&map, "n_steps", d.n_steps)?;
        spec.input_dim = input_dim_of(&dataset);
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;

        let defaults = TrainConfig::default();
        let train = TrainConfig {
            epochs: get(&map, "epochs", defaults.epochs)?,
            batch_size: get(&map, "batch_size", defaults.batch_size)?,
            lr: get(&map, "lr", defaults.lr)?,
            beta1: get(&map, "beta1", defaults.beta1)?,
            beta2: get(&map, "beta2", defaults.beta2)?,
            eps: get(&map, "adam_eps", defaults.eps)?,
            eval_every: get(&map, "eval_every", defaults.eval_every)?,
            seed,
            threads: get(&map, "threads", defaults.threads)?,
            quantum_grad: QuantumGrad::Auto {
                budget: get(&map, "grad_budget", 4096usize)?,
            },
        };
        train.validate()?;

        let preset = SplitSpec::preset(&dataset, get(&map, "split_seed", seed)?)?;
        let split = SplitSpec {
            n_train: get(&map, "n_train", preset.n_train)?,
            n_val: get(&map, "n_val", preset.n_val)?,
            n_test: get(&map, "n_test", preset.n_test)?,
            class_pair: (
                get(&map, "class_a", preset.class_pair.0)?,
                get(&map, "class_b", preset.class_pair.1)?,
            ),
            seed: preset.seed,
        };
        if split.n_train == 0 || split.n_val == 0 || split.n_test == 0 {
            return Err(Error::Config("n_train, n_val and n_test must all be positive".into()));
        }

        let paths = ["images", "labels", "csv", "batches", "features"]
            .iter()
            .filter_map(|k| map.get(*k).map(|v| (k.to_string(), v.clone())))
            .collect();
        Ok(RunConfig {
            dataset,
            spec,
            train,
            split,
            data_dir: map.get("data_dir").map_or_else(default_data_dir, PathBuf::from),
            paths,
            output_dir: PathBuf::from(map.get("output_dir").map_or("runs/out", String::as_str)),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// Serializes every key, so the text parses back to an equal config.
    pub fn to_text(&self) -> String {
        let s = &self.spec;
        let t = &self.train;
        let budget = match t.quantum_grad {
            QuantumGrad::Auto { budget } => budget,
            _ => 4096,
        };
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("dataset", self.dataset.clone());
        kv("model", s.kind.name().into());
        kv("solver", s.dynamics.solver.name().into());
        kv("seed", t.seed.to_string());
        kv("split_seed", self.split.seed.to_string());
        kv("epochs", t.epochs.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("lr", t.lr.to_string());
        kv("beta1", t.beta1.to_string());
        kv("beta2", t.beta2.to_string());
        kv("adam_eps", t.eps.to_string());
        kv("eval_every", t.eval_every.to_string());
        kv("threads", t.threads.to_string());
        kv("grad_budget", budget.to_string());
        kv("encoder_hidden", s.encoder_hidden.to_string());
        kv("n_data_qubits", s.n_data_qubits.to_string());
        kv("n_block_layers", s.n_block_layers.to_string());
        kv("qnn_depth", s.qnn_depth.to_string());
        kv("tau", s.dynamics.tau.to_string());
        kv("dt", s.dynamics.dt.to_string());
        kv("n_steps", s.dynamics.n_steps.to_string());
        kv("n_train", self.split.n_train.to_string());
        kv("n_val", self.split.n_val.to_string());
        kv("n_test", self.split.n_test.to_string());
        kv("class_a", self.split.class_pair.0.to_string());
        kv("class_b", self.split.class_pair.1.to_string());
        kv("data_dir", self.data_dir.display().to_string());
        for (k, v) in &self.paths {
            kv(k, v.clone());
        }
        kv("output_dir", self.output_dir.display().to_string());
        out
    }

    /// Resolves a dataset file key against `data_dir`, checking that it exists.
    pub fn dataset_path(&self, key: &str, default: &str) -> Result<PathBuf> {
        let rel = self.paths.get(key).map_or(default, String::as_str);
        let p = Path::new(rel);
        let full = if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_dir.join(p)
        };
        if !full.exists() {
            return Err(Error::Config(format!(
                "dataset path `{key}` = {} does not exist",
                full.display()
            )));
        }
        Ok(full)
    }
}

fn input_dim_of(dataset: &str) -> usize {
    match dataset {
        "mnist" | "fmnist" => 784,
        "wdbc" => lqnet::data::WDBC_FEATURES,
        "cifar" => lqnet::data::CIFAR_PIXELS,
        // fixed once the feature file is read
        _ => 1,
    }
}

/// Shipped preset configurations.
pub fn preset_text(name: &str) -> Result<&'static str> {
    Ok(match name {
        "mnist" => include_str!("../configs/mnist.conf"),
        "fmnist" => include_str!("../configs/fmnist.conf"),
        "wdbc" => include_str!("../configs/wdbc.conf"),
        "cifar" => include_str!("../configs/cifar.conf"),
        "cifar-feat" => include_str!("../configs/cifar-feat.conf"),
        _ => {
            return Err(Error::Validation(format!(
                "unknown suite `{name}` (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    })
}
