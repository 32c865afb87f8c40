//! `nio` command line: init, metrics, train, oracle, diag.
//!
//! Settings come from built-in defaults, then an optional `--config` file of
//! `key = value` lines, then flags. Config keys are the long flag names with
//! dashes or underscores, plus a few that have no flag (model and data shape,
//! optimizer constants).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use super::{diagnostics, load_checkpoint, read_config, save_checkpoint, train, write_atomic, TrainConfig};
use crate::data::{gen_blobs, load_cifar10_bin, load_idx, BatchIterator, Dataset};
use crate::error::{Error, Result};
use crate::gradmetrics::{metric_report, split_batch};
use crate::nio::{default_gamma, default_iterations, nio_run, NIOConfig};
use crate::nn::{build_params, parse_layers, InitScheme, ModelSpec, ParamSet};
use crate::oracle::{sweep, write_sweep_csv};
use crate::tensor::DType;

#[derive(Debug, Parser)]
#[command(name = "nio", version, about = "Gradient-cosine initialization optimizer and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize per-tensor scales of a fresh initialization and save it.
    Init(Opts),
    /// Print the gradient report (JSON) for one batch.
    Metrics(Opts),
    /// Train a model from a checkpoint or a fresh initialization.
    Train(Opts),
    /// Check the bounds on random synthetic landscapes.
    Oracle(Opts),
    /// Per-layer and per-batch gradient diagnostics (CSV).
    Diag(Opts),
}

#[derive(Debug, Args, Default)]
struct Opts {
    /// mlp3, cnn4 or custom (custom reads `layers` from the config)
    #[arg(long)]
    model: Option<String>,
    /// blobs, mnist or cifar10
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    sub_batches: Option<usize>,
    #[arg(long)]
    overlap: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    alpha_lb: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// f32 or f64
    #[arg(long)]
    dtype: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// kaiming, xavier, orthogonal or trunc_normal
    #[arg(long)]
    init: Option<String>,
    /// Parameters to start from instead of a fresh initialization
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Landscapes checked by `oracle`
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Batches sampled by `diag`
    #[arg(long)]
    num_batches: Option<usize>,
}

const CONFIG_KEYS: &[&str] = &[
    "model", "dataset", "data_dir", "batch_size", "sub_batches", "overlap", "gamma", "tau", "iters", "alpha_lb",
    "seed", "dtype", "out", "init", "checkpoint", "trials", "epochs", "lr", "num_batches", "layers",
    "classes", "cnn_channels", "blob_classes", "blob_per_class", "blob_dim", "blob_spread", "blob_seed",
    "momentum", "weight_decay", "clip", "snapshot_every", "finite_diff", "train_limit",
];

/// Defaults for the synthetic data set.
pub const BLOB_CLASSES: usize = 10;
pub const BLOB_PER_CLASS: usize = 100;
pub const BLOB_DIM: usize = 784;
pub const BLOB_SPREAD: f64 = 0.05;
pub const BLOB_SEED: u64 = 1;

struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    fn from_opts(opts: &Opts) -> Result<Self> {
        let mut values = BTreeMap::new();
        if let Some(path) = &opts.config {
            for (k, v) in read_config(path)? {
                let key = k.replace('-', "_");
                if !CONFIG_KEYS.contains(&key.as_str()) {
                    return Err(Error::Config(format!("unknown key '{k}' in {}", path.display())));
                }
                values.insert(key, v);
            }
        }
        let mut set = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                values.insert(k.to_string(), v);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        set("model", opts.model.clone());
        set("dataset", opts.dataset.clone());
        set("data_dir", path(&opts.data_dir));
        set("batch_size", opts.batch_size.map(|v| v.to_string()));
        set("sub_batches", opts.sub_batches.map(|v| v.to_string()));
        set("overlap", opts.overlap.map(|v| v.to_string()));
        set("gamma", opts.gamma.map(|v| v.to_string()));
        set("tau", opts.tau.map(|v| v.to_string()));
        set("iters", opts.iters.map(|v| v.to_string()));
        set("alpha_lb", opts.alpha_lb.map(|v| v.to_string()));
        set("seed", opts.seed.map(|v| v.to_string()));
        set("dtype", opts.dtype.clone());
        set("out", path(&opts.out));
        set("init", opts.init.clone());
        set("checkpoint", path(&opts.checkpoint));
        set("trials", opts.trials.map(|v| v.to_string()));
        set("epochs", opts.epochs.map(|v| v.to_string()));
        set("lr", opts.lr.map(|v| v.to_string()));
        set("num_batches", opts.num_batches.map(|v| v.to_string()));
        Ok(Settings { values })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Config(format!("bad value '{v}' for {key}"))),
        }
    }

    fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| v.parse().map_err(|_| Error::Config(format!("bad value '{v}' for {key}"))))
            .transpose()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(PathBuf::from)
    }

    fn dtype(&self) -> Result<DType> {
        self.raw("dtype").unwrap_or("f64").parse().map_err(Error::Config)
    }
}

/// Train and test splits for the configured data set.
fn load_data(s: &Settings) -> Result<(Dataset, Dataset)> {
    let limit = |d: Dataset| -> Result<Dataset> {
        match s.opt::<usize>("train_limit")? {
            Some(n) => d.take(n),
            None => Ok(d),
        }
    };
    match s.raw("dataset").unwrap_or("blobs") {
        "blobs" => {
            let classes = s.get("blob_classes", BLOB_CLASSES)?;
            let per_class = s.get("blob_per_class", BLOB_PER_CLASS)?;
            let dim = s.get("blob_dim", BLOB_DIM)?;
            let spread = s.get("blob_spread", BLOB_SPREAD)?;
            let seed = s.get("blob_seed", BLOB_SEED)?;
            let train = gen_blobs(classes, per_class, dim, spread, seed)?;
            let test = gen_blobs(classes, per_class, dim, spread, seed.wrapping_add(1_000_003))?;
            Ok((train, test))
        }
        "mnist" => {
            let dir = s.path("data_dir").unwrap_or_else(|| PathBuf::from("data/mnist-subset"));
            let find = |stem: &str| -> PathBuf {
                let gz = dir.join(format!("{stem}.gz"));
                if gz.exists() { gz } else { dir.join(stem) }
            };
            let train = load_idx(&find("train-images-idx3-ubyte"), &find("train-labels-idx1-ubyte"))?;
            let test = load_idx(&find("t10k-images-idx3-ubyte"), &find("t10k-labels-idx1-ubyte"))?;
            Ok((limit(train)?, test))
        }
        "cifar10" => {
            let dir = s
                .path("data_dir")
                .ok_or_else(|| Error::Config("cifar10 needs --data-dir".into()))?;
            let train: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
            let train = load_cifar10_bin(&train, true)?;
            let test = load_cifar10_bin(&[dir.join("test_batch.bin")], true)?;
            Ok((limit(train)?, test))
        }
        other => Err(Error::Config(format!("unknown dataset '{other}'"))),
    }
}

fn model_spec(s: &Settings, data: &Dataset) -> Result<ModelSpec> {
    let shape = data.sample_shape().to_vec();
    let classes = s.get("classes", data.num_classes)?;
    match s.raw("model").unwrap_or("mlp3") {
        "mlp3" => ModelSpec::mlp3(&shape, classes),
        "cnn4" => {
            let ch: Vec<usize> = s
                .raw("cnn_channels")
                .unwrap_or("4,8")
                .split(',')
                .map(|c| c.trim().parse().map_err(|_| Error::Config(format!("bad cnn_channels '{c}'"))))
                .collect::<Result<_>>()?;
            let [a, b] = ch[..] else {
                return Err(Error::Config("cnn_channels needs two values".into()));
            };
            ModelSpec::cnn4(&shape, [a, b], classes)
        }
        "custom" => {
            let layers = s.raw("layers").ok_or_else(|| Error::Config("custom model needs `layers`".into()))?;
            ModelSpec::new(shape, parse_layers(layers)?, classes)
        }
        other => Err(Error::Config(format!("unknown model '{other}'"))),
    }
}

fn starting_params(s: &Settings, spec: &ModelSpec) -> Result<ParamSet> {
    let params = match s.path("checkpoint") {
        Some(path) => {
            let p = load_checkpoint(&path)?;
            // shapes are checked by forward; names must line up with the model
            let expected: Vec<String> = spec.param_specs()?.into_iter().map(|p| p.name).collect();
            let found: Vec<&str> = p.names().collect();
            if expected.iter().map(String::as_str).ne(found.iter().copied()) {
                return Err(Error::InvalidArgument(format!(
                    "checkpoint tensors {found:?} do not match model {expected:?}"
                )));
            }
            p
        }
        None => {
            let init: InitScheme = s.raw("init").unwrap_or("kaiming").parse()?;
            build_params(spec, init, s.get("seed", 0)?)?
        }
    };
    Ok(params.cast(s.dtype()?))
}

fn nio_config(s: &Settings, data: &Dataset) -> Result<NIOConfig> {
    let batch_size = s.get("batch_size", 64)?;
    Ok(NIOConfig {
        tau: s.get("tau", 0.05)?,
        gamma: s.get("gamma", default_gamma(data.num_classes))?,
        alpha_lb: s.get("alpha_lb", 0.01)?,
        iterations: s.get("iters", default_iterations(data.len(), batch_size))?,
        batch_size,
        parts: s.get("sub_batches", 2)?,
        overlap: s.get("overlap", 0.6)?,
        seed: s.get("seed", 0)?,
        dtype: s.dtype()?,
        finite_diff: s.get("finite_diff", false)?,
        snapshot_every: s.get("snapshot_every", 10)?,
    })
}

/// `out.nioc` → `out.<suffix>`
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

fn emit(s: &Settings, stdout: &mut dyn Write, bytes: &[u8]) -> Result<()> {
    match s.path("out") {
        Some(p) => write_atomic(&p, bytes),
        None => Ok(stdout.write_all(bytes)?),
    }
}

fn cmd_init(s: &Settings, stdout: &mut dyn Write) -> Result<()> {
    let (data, _) = load_data(s)?;
    let spec = model_spec(s, &data)?;
    let params = starting_params(s, &spec)?;
    let cfg = nio_config(s, &data)?;
    let mut source = BatchIterator::new(&data, cfg.batch_size, cfg.seed)?;
    let outcome = nio_run(&spec, &params, &mut source, &cfg)?;
    let out = s.path("out").unwrap_or_else(|| PathBuf::from("init.nioc"));
    save_checkpoint(&outcome.params, &out)?;
    let mut trace = Vec::new();
    outcome.trace.write_csv(&mut trace)?;
    let trace_path = sibling(&out, "trace.csv");
    write_atomic(&trace_path, &trace)?;
    let last = outcome.trace.records.last().expect("at least one iteration");
    writeln!(
        stdout,
        "wrote {} and {} ({} iterations, final gc {:.6}, gn {:.6}, g_max {:.6})",
        out.display(),
        trace_path.display(),
        outcome.trace.len(),
        last.gc,
        last.gn,
        last.g_max
    )?;
    let scales: Vec<String> = outcome.scales.coeffs.iter().map(|c| format!("{c:.6}")).collect();
    writeln!(stdout, "scales {}", scales.join(","))?;
    Ok(())
}

fn cmd_metrics(s: &Settings, stdout: &mut dyn Write) -> Result<()> {
    let (data, _) = load_data(s)?;
    let spec = model_spec(s, &data)?;
    let params = starting_params(s, &spec)?;
    let b = s.get("batch_size", 64)?;
    let plan = split_batch(b, s.get("sub_batches", 2)?, s.get("overlap", 0.6)?)?;
    let mut it = BatchIterator::new(&data, b, s.get("seed", 0)?)?;
    let idx = it.next_indices().to_vec();
    let batch = data.cast(s.dtype()?).batch(&idx)?;
    let report = metric_report(&spec, &params, &batch, &plan)?;
    let mut json = report.to_json()?;
    json.push('\n');
    emit(s, stdout, json.as_bytes())
}

fn cmd_train(s: &Settings, stdout: &mut dyn Write) -> Result<()> {
    let (data, test) = load_data(s)?;
    let spec = model_spec(s, &data)?;
    let params = starting_params(s, &spec)?;
    let defaults = TrainConfig::default();
    let clip: f64 = s.get("clip", defaults.clip.unwrap_or(0.0))?;
    let cfg = TrainConfig {
        epochs: s.get("epochs", defaults.epochs)?,
        batch_size: s.get("batch_size", defaults.batch_size)?,
        lr: s.get("lr", defaults.lr)?,
        momentum: s.get("momentum", defaults.momentum)?,
        weight_decay: s.get("weight_decay", defaults.weight_decay)?,
        clip: (clip > 0.0).then_some(clip),
        seed: s.get("seed", defaults.seed)?,
        dtype: s.dtype()?,
    };
    let outcome = train(&spec, &params, &data, Some(&test), &cfg)?;
    let mut text = String::from("epoch,loss\n");
    for (e, l) in outcome.epoch_loss.iter().enumerate() {
        text.push_str(&format!("{},{}\n", e + 1, l));
    }
    text.push_str(&format!(
        "# train_accuracy {}\n# test_accuracy {}\n",
        outcome.train_accuracy,
        outcome.test_accuracy.unwrap_or(f64::NAN)
    ));
    match s.path("out") {
        Some(p) => {
            save_checkpoint(&outcome.params, &p)?;
            write_atomic(&sibling(&p, "loss.csv"), text.as_bytes())?;
            writeln!(stdout, "wrote {}; test accuracy {:.4}", p.display(), outcome.test_accuracy.unwrap_or(f64::NAN))?;
        }
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_oracle(s: &Settings, stdout: &mut dyn Write) -> Result<bool> {
    let rows = sweep(s.get("trials", 500)?, 8, 16, (0.1, 10.0), s.get("seed", 0)?)?;
    let mut csv = Vec::new();
    write_sweep_csv(&rows, &mut csv)?;
    emit(s, stdout, &csv)?;
    let failed = rows.iter().filter(|r| !r.holds).count();
    if failed > 0 {
        eprintln!("error: bound violated on {failed} of {} landscapes", rows.len());
    } else if s.path("out").is_some() {
        writeln!(stdout, "bound held on all {} landscapes", rows.len())?;
    }
    Ok(failed == 0)
}

fn cmd_diag(s: &Settings, stdout: &mut dyn Write) -> Result<()> {
    let (data, _) = load_data(s)?;
    let spec = model_spec(s, &data)?;
    let params = starting_params(s, &spec)?;
    let plan = split_batch(s.get("batch_size", 64)?, s.get("sub_batches", 2)?, s.get("overlap", 0.6)?)?;
    let report = diagnostics(&spec, &params, &data, &plan, s.get("num_batches", 20)?, s.get("seed", 0)?)?;
    let mut layers = Vec::new();
    report.write_layers_csv(&mut layers)?;
    let mut batches = Vec::new();
    report.write_batches_csv(&mut batches)?;
    match s.path("out") {
        Some(p) => {
            write_atomic(&p, &layers)?;
            write_atomic(&sibling(&p, "batches.csv"), &batches)?;
        }
        None => {
            stdout.write_all(&layers)?;
            stdout.write_all(b"\n")?;
            stdout.write_all(&batches)?;
        }
    }
    Ok(())
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = (|| -> Result<bool> {
        match &cli.command {
            Command::Init(o) => cmd_init(&Settings::from_opts(o)?, stdout).map(|_| true),
            Command::Metrics(o) => cmd_metrics(&Settings::from_opts(o)?, stdout).map(|_| true),
            Command::Train(o) => cmd_train(&Settings::from_opts(o)?, stdout).map(|_| true),
            Command::Oracle(o) => cmd_oracle(&Settings::from_opts(o)?, stdout),
            Command::Diag(o) => cmd_diag(&Settings::from_opts(o)?, stdout).map(|_| true),
        }
    })();
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
