//! Command-line harness: train, evaluate, benchmark and gradient checks.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lqnet::checkpoint;
use lqnet::data::{self, Dataset};
use lqnet::metrics::{evaluate_scores, ConfusionMatrix, MetricsReport};
use lqnet::model::{param_count, ModelKind, ModelSpec, ParamStore};
use lqnet::optim::{fd_grad_oracle, train, Batch, CurveLog, GradEngine, QuantumGrad};
use lqnet::{Error, Result};

pub use config::{preset_text, RunConfig, DATA_DIR_ENV};

#[derive(Parser, Debug)]
#[command(name = "lqnet", version, about = "Liquid and continuous-time quantum classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model from a config file.
    Train { config: PathBuf },
    /// Score a checkpoint on the test split of a config.
    Eval { checkpoint: PathBuf, config: PathBuf },
    /// Train all three model kinds on a preset and print a comparison table.
    Bench {
        suite: String,
        /// Output directory (default runs/bench-<suite>).
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Compare analytic gradients with finite differences on a small model.
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Perturb the analytic gradient; the check must then fail.
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Parses arguments and runs one command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Train { config } => cmd_train(&config),
        Command::Eval { checkpoint, config } => cmd_eval(&checkpoint, &config),
        Command::Bench { suite, output, threads } => cmd_bench(&suite, output, threads),
        Command::Gradcheck { seed, corrupt_gradient } => cmd_gradcheck(seed, corrupt_gradient),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DOMAIN
        }
    }
}

/// Train, validation and test sets ready for the model.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Loads the configured dataset, splits it and returns the `ModelSpec` with its input
/// width fixed to the data.
pub fn load_splits(cfg: &RunConfig) -> Result<(Splits, ModelSpec)> {
    let raw = match cfg.dataset.as_str() {
        "mnist" => data::load_idx(
            &cfg.dataset_path("images", "mnist/train-images-idx3-ubyte")?,
            &cfg.dataset_path("labels", "mnist/train-labels-idx1-ubyte")?,
        )?,
        "fmnist" => data::load_idx(
            &cfg.dataset_path("images", "fmnist/images-idx3-ubyte")?,
            &cfg.dataset_path("labels", "fmnist/labels-idx1-ubyte")?,
        )?,
        "wdbc" => data::load_wdbc_csv(&cfg.dataset_path("csv", "wdbc/wdbc.data")?)?,
        "cifar" => {
            let list =
                cfg.paths.get("batches").cloned().unwrap_or_else(|| {
                    "cifar-10-batches-bin/data_batch_1.bin,cifar-10-batches-bin/test_batch.bin".into()
                });
            let mut files = Vec::new();
            for part in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let mut c = cfg.clone();
                c.paths.insert("batches".into(), part.into());
                files.push(c.dataset_path("batches", part)?);
            }
            data::load_cifar_bin(&files)?
        }
        "cifar-feat" => data::load_features(&cfg.dataset_path("features", "cifar-features.bin")?)?,
        other => return Err(Error::Config(format!("unknown dataset `{other}`"))),
    };
    let (train, val, test) = data::filter_and_split(&raw, &cfg.split)?;
    let (train, val, test) = if cfg.dataset == "wdbc" {
        data::standardize_splits(&train, &val, &test)?
    } else {
        (train, val, test)
    };
    let mut spec = cfg.spec.clone();
    spec.input_dim = raw.dim();
    Ok((Splits { train, val, test }, spec))
}

/// Result of a completed training run.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub spec: ModelSpec,
    pub best: ParamStore,
    pub best_step: Option<usize>,
    pub log: CurveLog,
    pub confusion: ConfusionMatrix,
    pub report: MetricsReport,
    pub test_scores: Vec<f64>,
    pub param_count: usize,
    pub seconds: f64,
}

fn score(spec: &ModelSpec, params: &ParamStore, ds: &Dataset, threads: usize) -> Result<Vec<f64>> {
    Ok(GradEngine::new(QuantumGrad::default(), threads)?
        .evaluate(spec, params, ds)?
        .probabilities)
}

/// Trains on already loaded splits and scores the best checkpoint on the test set.
pub fn train_on(cfg: &RunConfig, spec: &ModelSpec, splits: &Splits) -> Result<RunSummary> {
    let start = Instant::now();
    let out = train(spec, &cfg.train, &splits.train, &splits.val)?;
    let scores = score(spec, &out.best, &splits.test, cfg.train.threads)?;
    let (cm, report) = evaluate_scores(&scores, splits.test.labels())?;
    Ok(RunSummary {
        spec: spec.clone(),
        best: out.best,
        best_step: out.best_step,
        log: out.log,
        confusion: cm,
        report,
        test_scores: scores,
        param_count: param_count(spec)?,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, contents).map_err(|e| Error::Io { path: p, source: e })
}

fn roc_csv(scores: &[f64], labels: &[u8]) -> Result<String> {
    Ok(lqnet::metrics::roc_curve(scores, labels)?.0.to_csv())
}

fn class_counts(ds: &Dataset) -> String {
    let c = ds.class_counts();
    format!(
        "{} class 0 / {} class 1",
        c.first().copied().unwrap_or(0),
        c.get(1).copied().unwrap_or(0)
    )
}

/// Full training run with all outputs written under `cfg.output_dir`.
pub fn run_and_write(cfg: &RunConfig) -> Result<RunSummary> {
    let (splits, spec) = load_splits(cfg)?;
    eprintln!(
        "{} / {}: train {} ({}), val {} ({}), test {} ({})",
        cfg.dataset,
        spec.kind.label(),
        splits.train.len(),
        class_counts(&splits.train),
        splits.val.len(),
        class_counts(&splits.val),
        splits.test.len(),
        class_counts(&splits.test)
    );
    let summary = train_on(cfg, &spec, &splits)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    write(dir, "curves.csv", summary.log.to_csv())?;
    checkpoint::save(&dir.join("checkpoint.bin"), &spec, &summary.best)?;
    write(dir, "metrics.csv", summary.report.to_csv())?;
    write(dir, "confusion.csv", summary.confusion.to_csv())?;
    write(dir, "roc.csv", roc_csv(&summary.test_scores, splits.test.labels())?)?;
    let mut manifest = String::new();
    let _ = writeln!(manifest, "# parameters: {}", summary.param_count);
    let _ = writeln!(manifest, "# wall time: {:.1} s", summary.seconds);
    let _ = writeln!(
        manifest,
        "# best step: {}",
        summary.best_step.map_or_else(|| "none".into(), |s| s.to_string())
    );
    manifest.push_str(&cfg.to_text());
    write(dir, "manifest.conf", manifest)?;
    Ok(summary)
}

fn cmd_train(path: &Path) -> Result<i32> {
    let cfg = RunConfig::load(path)?;
    let s = run_and_write(&cfg)?;
    println!(
        "{} on {} ({} parameters, {:.1} s)",
        s.spec.kind.label(),
        cfg.dataset,
        s.param_count,
        s.seconds
    );
    print!("{}", s.report);
    println!("outputs in {}", cfg.output_dir.display());
    Ok(EXIT_OK)
}

/// Scores a saved checkpoint on the config's test split.
pub fn evaluate_checkpoint(ckpt: &Path, cfg: &RunConfig) -> Result<(ConfusionMatrix, MetricsReport, Vec<f64>, Splits)> {
    let (ck_spec, params) = checkpoint::load(ckpt)?;
    let (splits, spec) = load_splits(cfg)?;
    if ck_spec != spec {
        return Err(Error::Shape(format!(
            "checkpoint holds {} with input_dim {}, config describes {} with input_dim {}",
            ck_spec.kind.label(),
            ck_spec.input_dim,
            spec.kind.label(),
            spec.input_dim
        )));
    }
    let scores = score(&spec, &params, &splits.test, cfg.train.threads)?;
    let (cm, report) = evaluate_scores(&scores, splits.test.labels())?;
    Ok((cm, report, scores, splits))
}

fn cmd_eval(ckpt: &Path, config: &Path) -> Result<i32> {
    let cfg = RunConfig::load(config)?;
    let (cm, report, scores, splits) = evaluate_checkpoint(ckpt, &cfg)?;
    let dir = cfg.output_dir.join("eval");
    fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    write(&dir, "metrics.csv", report.to_csv())?;
    write(&dir, "confusion.csv", cm.to_csv())?;
    write(&dir, "roc.csv", roc_csv(&scores, splits.test.labels())?)?;
    print!("{report}");
    println!("tp {} fp {} tn {} fn {}", cm.tp, cm.fp, cm.tn, cm.fn_);
    Ok(EXIT_OK)
}

/// Preset config switched to `kind` with that kind's solver.
pub fn preset_for(suite: &str, kind: ModelKind) -> Result<RunConfig> {
    let mut cfg = RunConfig::parse(preset_text(suite)?)?;
    cfg.spec.kind = kind;
    cfg.spec.dynamics.solver = kind.default_solver();
    Ok(cfg)
}

/// Required accuracy margin of the dynamic models over the QNN on CIFAR.
pub const CIFAR_GAP: f64 = 0.10;

/// Table rows in column order: model, accuracy, F1, precision 1/0, recall 1/0 (percent).
pub fn format_table(title: &str, rows: &[(ModelKind, MetricsReport)]) -> String {
    let mut out = format!("Performance metrics on {title}\n");
    let _ = writeln!(
        out,
        "{:<8} {:>12} {:>9} {:>18} {:>18} {:>15} {:>15}",
        "Model",
        "Accuracy (%)",
        "F1 Score",
        "Precision Class 1",
        "Precision Class 0",
        "Recall Class 1",
        "Recall Class 0"
    );
    for (kind, r) in rows {
        let _ = writeln!(
            out,
            "{:<8} {:>12.2} {:>9.2} {:>18.2} {:>18.2} {:>15.2} {:>15.2}",
            kind.name().to_ascii_uppercase(),
            100.0 * r.accuracy,
            100.0 * r.f1,
            100.0 * r.precision_class1,
            100.0 * r.precision_class0,
            100.0 * r.recall_class1,
            100.0 * r.recall_class0
        );
    }
    out
}

fn cmd_bench(suite: &str, output: Option<PathBuf>, threads: Option<usize>) -> Result<i32> {
    preset_text(suite)?;
    let base = output.unwrap_or_else(|| PathBuf::from(format!("runs/bench-{suite}")));
    let mut rows = Vec::new();
    for kind in ModelKind::ALL {
        let mut cfg = preset_for(suite, kind)?;
        cfg.output_dir = base.join(kind.name());
        if let Some(t) = threads {
            cfg.train.threads = t;
        }
        let s = run_and_write(&cfg)?;
        eprintln!(
            "{}: accuracy {:.4} in {:.1} s",
            kind.label(),
            s.report.accuracy,
            s.seconds
        );
        rows.push((kind, s.report));
    }
    let table = format_table(suite, &rows);
    print!("{table}");
    fs::create_dir_all(&base).map_err(|e| Error::Io {
        path: base.clone(),
        source: e,
    })?;
    write(&base, "table.txt", &table)?;
    if suite == "cifar" {
        let acc = |k: ModelKind| {
            rows.iter()
                .find(|(r, _)| *r == k)
                .map(|(_, m)| m.accuracy)
                .unwrap_or(0.0)
        };
        let qnn = acc(ModelKind::Qnn);
        let mut ok = true;
        for k in [ModelKind::Lqnet, ModelKind::Ctrqnet] {
            let gap = acc(k) - qnn;
            let pass = gap >= CIFAR_GAP;
            ok &= pass;
            println!(
                "{} − QNN = {:+.2} points: {}",
                k.label(),
                100.0 * gap,
                if pass { "ok" } else { "below 10" }
            );
        }
        if !ok {
            return Ok(EXIT_DOMAIN);
        }
    }
    Ok(EXIT_OK)
}

/// Largest accepted gradient mismatch.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Entry-wise mismatch: absolute below `1e-8`, otherwise relative to the larger magnitude.
pub fn max_relative_error(analytic: &[f64], reference: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(reference)
        .map(|(&g, &f)| {
            let d = (g - f).abs();
            if d <= 1e-8 {
                0.0
            } else {
                d / g.abs().max(f.abs())
            }
        })
        .fold(0.0, f64::max)
}

/// Desk-scale model: 4 inputs, 4 hidden units, 2 qubits, 2 steps (QNN depth 2).
pub fn desk_spec(kind: ModelKind) -> ModelSpec {
    let mut spec = ModelSpec::new(kind, 4);
    spec.encoder_hidden = 4;
    spec.n_data_qubits = 2;
    spec.qnn_depth = 2;
    spec.dynamics.n_steps = 2;
    spec
}

/// Maximum relative gradient error per model kind at desk scale.
pub fn gradcheck(seed: u64, corrupt: bool) -> Result<Vec<(ModelKind, f64)>> {
    let mut out = Vec::new();
    for kind in ModelKind::ALL {
        let spec = desk_spec(kind);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::init(&spec, &mut rng)?;
        // spread the block angles and give the head weight so every path carries signal
        let mut flat = params.to_flat();
        let n = flat.len();
        let n_block = lqnet::qblock::BlockParams::count(spec.n_data_qubits, spec.n_block_layers);
        let tail = n - (n_block + spec.n_data_qubits + 1);
        for v in &mut flat[tail..] {
            *v = rng.gen_range(-1.5..1.5);
        }
        params.assign_flat(&flat)?;
        let xs: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let ys: Vec<u8> = (0..6).map(|i| (i % 2) as u8).collect();
        let batch = Batch::new(xs.iter().map(Vec::as_slice).collect(), ys)?;
        let (g, _) = GradEngine::new(QuantumGrad::default(), 1)?.grad_batch(&spec, &params, &batch)?;
        let mut analytic = g.to_flat();
        if corrupt {
            analytic[0] += 1e-3 * (1.0 + analytic[0].abs());
        }
        let reference = fd_grad_oracle(&spec, &params, &batch, 1e-5)?.to_flat();
        out.push((kind, max_relative_error(&analytic, &reference)));
    }
    Ok(out)
}

fn cmd_gradcheck(seed: u64, corrupt: bool) -> Result<i32> {
    let results = gradcheck(seed, corrupt)?;
    let mut worst: f64 = 0.0;
    for (kind, err) in &results {
        println!("{:<8} max relative error {err:.3e}", kind.label());
        worst = worst.max(*err);
    }
    println!("max relative error {worst:.3e} (tolerance {GRADCHECK_TOLERANCE:e})");
    Ok(if worst <= GRADCHECK_TOLERANCE {
        EXIT_OK
    } else {
        EXIT_DOMAIN
    })
}
