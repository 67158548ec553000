//! Command-line front end. The `s3fnet` binary only forwards to
//! [`main_with_args`].
//!
//! Exit status: 0 on success, 1 on a runtime failure, 2 on a usage or
//! configuration error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::analysis::{contribution_report, count_params_flops, receptive_field, CostReport, PoolRf, RfReport};
use crate::config::{
    idx_file_names, load_data_split, DataManifest, ManifestFile, RunConfig, MANIFEST_FILE,
};
use crate::data::{generate_synthetic, split, write_idx, SynthTask, SynthTaskSpec};
use crate::error::{Error, Result};
use crate::models::{Model, ModelFamily, NetworkSpec};
use crate::train::{evaluate, train_loop, MetricsReport, SelectionMetric};

#[derive(Debug, Parser)]
#[command(name = "s3fnet", version, about = "Spatial/spectral fusion image classifier")]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset as IDX train/test pairs plus a manifest.
    SynthData(SynthDataArgs),
    /// Train a model from a JSON run config.
    Train(TrainArgs),
    /// Evaluate a checkpoint on an IDX split.
    Eval(DataArgs),
    /// Receptive fields and parameter/MAC counts of a network, untrained.
    Analyze(AnalyzeArgs),
    /// Per-branch contribution scores of a fused checkpoint.
    Explain(DataArgs),
}

#[derive(Debug, Args)]
pub struct SynthDataArgs {
    /// shape, texture or conjunction.
    #[arg(long)]
    pub task: String,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    /// Must match the task (2, 2 or 4).
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    pub noise: f64,
    #[arg(long, default_value_t = 400)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub low_freq: Option<f64>,
    #[arg(long)]
    pub high_freq: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `train.epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory holding `<split>-images.idx` and `<split>-labels.idx`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    /// Output directory; reports go to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PoolArg {
    StrideOnly,
    Window,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// A run config or a network spec.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value_t = PoolArg::StrideOnly)]
    pub pool_rf: PoolArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Contents of `metrics.json` after training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub family: ModelFamily,
    pub spec_name: String,
    pub spec_hash: String,
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub selection: SelectionMetric,
    pub best_val_score: f64,
    pub val: MetricsReport,
    pub test_loss: f64,
    pub test: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub spec_name: String,
    pub spec_hash: String,
    pub split: String,
    pub samples: usize,
    pub loss: f64,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub spec_name: String,
    pub spec_hash: String,
    pub receptive_fields: Vec<RfReport>,
    pub cost: CostReport,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Errors are printed to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::SynthData(a) => synth_data(&a, seed.unwrap_or(0)),
        Command::Train(a) => train(&a, seed),
        Command::Eval(a) => eval(&a),
        Command::Analyze(a) => analyze(&a, seed),
        Command::Explain(a) => explain(&a),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn synth_data(a: &SynthDataArgs, seed: u64) -> Result<()> {
    let task: SynthTask = a.task.parse()?;
    if let Some(k) = a.classes {
        if k != task.n_classes() {
            return Err(Error::Config(format!(
                "task {task} has {} classes, --classes {k} given",
                task.n_classes()
            )));
        }
    }
    if !(a.test_fraction > 0.0 && a.test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "--test-fraction must be in (0, 1), got {}",
            a.test_fraction
        )));
    }
    let d = SynthTaskSpec::default();
    let spec = SynthTaskSpec {
        task,
        size: a.size,
        per_class: a.per_class,
        noise: a.noise,
        seed,
        amplitude: a.amplitude.unwrap_or(d.amplitude),
        low_freq: a.low_freq.unwrap_or(d.low_freq),
        high_freq: a.high_freq.unwrap_or(d.high_freq),
        ..d
    };
    spec.validate()?;
    let data = generate_synthetic(&spec)?;
    let parts = split(&data, &[1.0 - a.test_fraction, a.test_fraction], seed)?;
    create_dir(&a.out)?;
    let mut files = Vec::new();
    for (part, name) in parts.iter().zip(["train", "test"]) {
        let (img, lbl) = idx_file_names(name);
        write_idx(part, a.out.join(&img), a.out.join(&lbl))?;
        for f in [img, lbl] {
            let path = a.out.join(&f);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            files.push(ManifestFile {
                name: f,
                split: name.into(),
                count: part.len(),
                sha256: sha256_hex(&bytes),
            });
        }
    }
    let manifest = DataManifest {
        generator: spec,
        class_names: data.class_names().to_vec(),
        test_fraction: a.test_fraction,
        files,
    };
    write_json(&a.out.join(MANIFEST_FILE), &manifest)?;
    println!(
        "wrote {task} data to {}: {} train, {} test",
        a.out.display(),
        parts[0].len(),
        parts[1].len()
    );
    Ok(())
}

fn train(a: &TrainArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(o) = &a.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    create_dir(&out)?;

    let data = cfg.load_data()?;
    let spec = cfg.network_spec(data.train.image_shape(), data.train.n_classes())?;
    let mut model = Model::new(spec)?;
    log::info!(
        "training {} ({} parameters) on {} train / {} val / {} test samples",
        model.spec().name,
        model.param_count(""),
        data.train.len(),
        data.val.len(),
        data.test.len()
    );
    write_json(&out.join("config.resolved.json"), &cfg)?;
    let tcfg = cfg.train_config();
    let log_path = out.join("epochs.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
    let report = train_loop(&mut model, &data.train, &data.val, &tcfg, Some(&mut log))?;
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    model.save(out.join("checkpoint.s3f"))?;

    let uniform = vec![1.0; model.n_classes()];
    let (test_loss, test) = evaluate(&model, &data.test, &uniform, tcfg.eval_batch)?;
    let summary = TrainSummary {
        family: cfg.family,
        spec_name: model.spec().name.clone(),
        spec_hash: model.spec().hash(),
        seed: cfg.seed,
        epochs_run: report.history.len(),
        best_epoch: report.best_epoch,
        selection: tcfg.selection,
        best_val_score: report.best_score,
        val: report.best_metrics,
        test_loss,
        test,
    };
    write_json(&out.join("metrics.json"), &summary)?;
    println!(
        "best epoch {}: test accuracy {:.4}, weighted F1 {:.4}, MCC {:.4}",
        summary.best_epoch, summary.test.accuracy, summary.test.weighted_f1, summary.test.mcc
    );
    Ok(())
}

fn eval(a: &DataArgs) -> Result<()> {
    let model = Model::load(&a.checkpoint)?;
    let data = load_data_split(&a.data, &a.split, Some(model.n_classes()))?;
    if data.n_classes() != model.n_classes() {
        return Err(Error::Config(format!(
            "checkpoint has {} classes, data has {}",
            model.n_classes(),
            data.n_classes()
        )));
    }
    let (loss, metrics) = evaluate(&model, &data, &vec![1.0; model.n_classes()], a.batch)?;
    let report = EvalReport {
        spec_name: model.spec().name.clone(),
        spec_hash: model.spec().hash(),
        split: a.split.clone(),
        samples: data.len(),
        loss,
        metrics,
    };
    match &a.out {
        Some(dir) => {
            create_dir(dir)?;
            write_json(&dir.join("eval.json"), &report)?;
            println!(
                "{} samples: accuracy {:.4}, weighted F1 {:.4}, MCC {:.4}",
                report.samples, report.metrics.accuracy, report.metrics.weighted_f1, report.metrics.mcc
            );
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

/// Network from either a run config (has `family`) or a bare network spec.
fn load_network(path: &Path, seed: Option<u64>) -> Result<NetworkSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Error::Schema(vec![format!("<root>: {e}")]))?;
    let mut spec = if value.get("family").is_some() {
        let mut cfg = RunConfig::from_value(&value)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        let (shape, k) = cfg.data_shape()?;
        cfg.network_spec(shape, k)?
    } else {
        serde_json::from_value::<NetworkSpec>(value)
            .map_err(|e| Error::Schema(vec![format!("network spec: {e}")]))?
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate()?;
    Ok(spec)
}

fn analyze(a: &AnalyzeArgs, seed: Option<u64>) -> Result<()> {
    let spec = load_network(&a.config, seed)?;
    let pool = match a.pool_rf {
        PoolArg::StrideOnly => PoolRf::StrideOnly,
        PoolArg::Window => PoolRf::Window,
    };
    let report = AnalysisReport {
        spec_name: spec.name.clone(),
        spec_hash: spec.hash(),
        receptive_fields: receptive_field(&spec, pool)?,
        cost: count_params_flops(&spec)?,
    };
    for rf in &report.receptive_fields {
        let [h, w] = rf.final_rf();
        println!(
            "{} tower: block receptive fields {:?}, final {h}x{w}{}",
            rf.tower,
            rf.block_rfs(),
            if rf.layers.last().is_some_and(|l| l.global) { " (global)" } else { "" }
        );
    }
    println!(
        "parameters {}, buffers {}, MACs {:.4e}",
        report.cost.total_params, report.cost.total_buffers, report.cost.total_macs
    );
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_json(&dir.join("analysis.json"), &report)?;
        let path = dir.join("cost.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["tower", "index", "kind", "input_shape", "output_shape", "params", "buffers", "macs"])?;
        for l in &report.cost.layers {
            let dims = |s: &[usize]| s.iter().map(usize::to_string).collect::<Vec<_>>().join("x");
            w.write_record([
                l.tower.clone(),
                l.index.to_string(),
                l.kind.clone(),
                dims(&l.input_shape),
                dims(&l.output_shape),
                l.params.to_string(),
                l.buffers.to_string(),
                l.macs.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn explain(a: &DataArgs) -> Result<()> {
    let model = Model::load(&a.checkpoint)?;
    let data = load_data_split(&a.data, &a.split, Some(model.n_classes()))?;
    let report = contribution_report(&model, &data, a.batch)?;
    match &a.out {
        Some(dir) => {
            create_dir(dir)?;
            report.save(dir.join("contribution.json"), dir.join("contribution.csv"))?;
            println!(
                "mean share: spatial {:.4}, spectral {:.4}",
                report.overall.mean_share_spatial, report.overall.mean_share_spectral
            );
            for c in &report.per_class {
                println!(
                    "  {:<16} spatial {:.4}  spectral {:.4}",
                    c.name, c.summary.mean_share_spatial, c.summary.mean_share_spectral
                );
            }
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}
