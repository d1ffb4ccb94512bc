//! Command-line interface.
//!
//! Exit status is 0 on success, 2 for usage errors (bad flags, missing or
//! nonexistent input paths) and 1 for failures while running.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use structprobe_core::{write_conllu, Edge, Kernel, OptimizerKind, RbfMode};

use crate::align::align;
use crate::checkpoint::read_checkpoint;
use crate::container::{read_container, write_container};
use crate::report::{evaluate, EvalReport};
use crate::run::{
    prepare_output_dir, prepare_output_file, read_treebank, train_and_evaluate, write_json,
    write_run_dir, Dataset, RunConfig,
};
use crate::sweep::{
    layer_sweep, rank_sweep, read_sweep_csv, sweep_series, validate_ranks, DEFAULT_RANKS,
};
use crate::synth::{planted_corpus, SynthOptions};
use crate::viz::{
    render_arcs, render_line_chart, ArcDiagramSpec, ArcStyle, LineChartSpec, PredictedArc,
};

pub const THREADS_ENV: &str = "STRUCTPROBE_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "structprobe",
    version,
    about = "Train and evaluate structural probes over word embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a probe and write a run directory.
    Train(TrainArgs),
    /// Score a saved probe on a treebank.
    Eval(EvalArgs),
    /// Render arc diagrams or sweep charts.
    #[command(subcommand)]
    Viz(VizCommand),
    /// Train one probe per layer or per rank.
    Sweep(SweepArgs),
    /// Write a planted-solution demo corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Linear,
    Poly,
    Rbf,
    Sigmoid,
    BilinearRef,
}

impl From<KernelArg> for Kernel {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Linear => Kernel::Linear,
            KernelArg::Poly => Kernel::Polynomial,
            KernelArg::Rbf => Kernel::Rbf,
            KernelArg::Sigmoid => Kernel::Sigmoid,
            KernelArg::BilinearRef => Kernel::BilinearReference,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RbfModeArg {
    Elementwise,
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Layers,
    Ranks,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long, value_name = "CONLLU")]
    pub treebank_train: Option<PathBuf>,
    #[arg(long, value_name = "CONLLU")]
    pub treebank_dev: Option<PathBuf>,
    #[arg(long, value_name = "CONLLU")]
    pub treebank_test: Option<PathBuf>,
    /// Embedding container (.spb).
    #[arg(long, value_name = "SPB")]
    pub embeddings: Option<PathBuf>,
}

/// Settings that override the `--config` file, which overrides defaults.
#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// JSON run configuration.
    #[arg(long, value_name = "JSON")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub kernel: Option<KernelArg>,
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub rbf_mode: Option<RbfModeArg>,
    /// Leave punctuation edges out of UUAS [default: true].
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub exclude_punct: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub plateau_threshold: Option<f64>,
    #[arg(long)]
    pub early_stop_after: Option<usize>,
    #[arg(long)]
    pub poly_shift: Option<f64>,
    #[arg(long)]
    pub poly_degree: Option<u32>,
    #[arg(long)]
    pub rbf_sigma: Option<f64>,
    #[arg(long)]
    pub sigmoid_scale: Option<f64>,
    #[arg(long)]
    pub sigmoid_offset: Option<f64>,
    /// Learn the sigmoid's scale and offset along with B.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub train_sigmoid_affine: Option<bool>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub probe: ProbeArgs,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "SPP")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "CONLLU")]
    pub treebank: PathBuf,
    #[arg(long, value_name = "SPB")]
    pub embeddings: PathBuf,
    /// Defaults to the layer the probe was trained on.
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", default_value = "true", value_name = "BOOL")]
    pub exclude_punct: bool,
    /// Report file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Subcommand)]
pub enum VizCommand {
    /// Gold-versus-predicted arc diagrams from an evaluation report.
    Arcs(ArcsArgs),
    /// Line chart from one or more sweep CSVs.
    Chart(ChartArgs),
}

#[derive(Debug, Args)]
pub struct ArcsArgs {
    /// Evaluation report (eval_dev.json, eval_test.json or `eval` output).
    #[arg(long, value_name = "JSON")]
    pub report: PathBuf,
    #[arg(long = "sent-id", required = true, value_name = "ID")]
    pub sent_ids: Vec<String>,
    /// Output directory; one `<sent_id>.svg` per sentence.
    #[arg(long)]
    pub out: PathBuf,
    /// Upper clamp for the strength color scale.
    #[arg(long, default_value_t = 2.0)]
    pub strength_max: f64,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct ChartArgs {
    #[arg(long = "csv", required = true, value_name = "CSV")]
    pub csvs: Vec<PathBuf>,
    /// Output SVG file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "UUAS sweep")]
    pub title: String,
    #[arg(long, default_value = "sweep key")]
    pub x_label: String,
    /// Log-scale the x axis (rank sweeps).
    #[arg(long)]
    pub log_x: bool,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub probe: ProbeArgs,
    #[arg(long)]
    pub mode: ModeArg,
    /// Ranks for `--mode ranks` [default: 1,2,4,8,16,32,64,128,256].
    #[arg(long, value_delimiter = ',')]
    pub ranks: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 400)]
    pub train: usize,
    #[arg(long, default_value_t = 60)]
    pub dev: usize,
    #[arg(long, default_value_t = 60)]
    pub test: usize,
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    #[arg(long, default_value_t = 2)]
    pub planted_layer: usize,
    #[arg(long, default_value_t = 8)]
    pub noise_dims: usize,
    /// Longest sentence; the planted subspace has `max_len - 1` dimensions.
    #[arg(long, default_value_t = 9)]
    pub max_len: usize,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn existing<'a>(path: Option<&'a PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    let path = path.ok_or_else(|| {
        usage(format!(
            "missing required {flag} (give it as a flag or in --config)"
        ))
    })?;
    if !path.exists() {
        return Err(usage(format!("{flag}: {} does not exist", path.display())));
    }
    Ok(path)
}

fn check_exists(path: &Path, flag: &str) -> Result<(), CliError> {
    existing(Some(&path.to_path_buf()), flag).map(|_| ())
}

/// Defaults, then the `--config` file, then flags.
pub fn effective_config(data: &DataArgs, probe: &ProbeArgs) -> Result<RunConfig, CliError> {
    let mut c = match &probe.config {
        Some(path) => {
            check_exists(path, "--config")?;
            RunConfig::from_json_file(path).map_err(|e| usage(format!("--config: {e:#}")))?
        }
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($src:expr => $dst:expr) => {
            if let Some(v) = $src.clone() {
                $dst = v.into();
            }
        };
    }
    set!(data.treebank_train => c.treebank_train);
    set!(data.treebank_dev => c.treebank_dev);
    set!(data.treebank_test => c.treebank_test);
    set!(data.embeddings => c.embeddings);
    set!(probe.exclude_punct => c.exclude_punct);
    let t = &mut c.train;
    set!(probe.kernel => t.kernel);
    set!(probe.layer => t.layer);
    set!(probe.rank => t.rank);
    set!(probe.seed => t.seed);
    set!(probe.epochs => t.max_epochs);
    set!(probe.lr => t.initial_lr);
    set!(probe.batch_size => t.batch_size);
    set!(probe.lr_decay => t.lr_decay_factor);
    set!(probe.patience => t.plateau_patience);
    set!(probe.plateau_threshold => t.plateau_threshold);
    set!(probe.early_stop_after => t.early_stop_after);
    set!(probe.poly_shift => t.poly_shift);
    set!(probe.poly_degree => t.poly_degree);
    set!(probe.rbf_sigma => t.rbf_sigma);
    set!(probe.sigmoid_scale => t.sigmoid_scale);
    set!(probe.sigmoid_offset => t.sigmoid_offset);
    set!(probe.train_sigmoid_affine => t.train_sigmoid_affine);
    if let Some(m) = probe.rbf_mode {
        t.rbf_mode = match m {
            RbfModeArg::Elementwise => RbfMode::Elementwise,
            RbfModeArg::Scalar => RbfMode::Scalar,
        };
    }
    if let Some(o) = probe.optimizer {
        t.optimizer = match o {
            OptimizerArg::Adam => OptimizerKind::Adam,
            OptimizerArg::Sgd => OptimizerKind::Sgd,
        };
    }
    t.validate().map_err(|e| usage(e.to_string()))?;
    Ok(c)
}

fn load_dataset(config: &RunConfig) -> Result<Dataset, CliError> {
    let train = existing(config.treebank_train.as_ref(), "--treebank-train")?;
    let dev = existing(config.treebank_dev.as_ref(), "--treebank-dev")?;
    let test = match &config.treebank_test {
        Some(p) => Some(existing(Some(p), "--treebank-test")?),
        None => None,
    };
    let embeddings = existing(config.embeddings.as_ref(), "--embeddings")?;
    let data = Dataset::load(train, dev, test, embeddings)?;
    if config.train.layer >= data.embeddings.num_layers {
        return Err(usage(format!(
            "--layer {} out of range: the container has {} layers",
            config.train.layer, data.embeddings.num_layers
        )));
    }
    Ok(data)
}

fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .map(Some)
            .ok_or_else(|| {
                usage(format!(
                    "{THREADS_ENV} must be a positive integer, got {v:?}"
                ))
            }),
        Err(_) => Ok(None),
    }
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let config = effective_config(&args.data, &args.probe)?;
    let data = load_dataset(&config)?;
    prepare_output_dir(&args.out, args.overwrite)?;
    let outcome = train_and_evaluate(&config.train, config.exclude_punct, &data)
        .map_err(anyhow::Error::from)?;
    write_run_dir(&args.out, &config, &outcome, &data.embeddings)?;
    let mut line = format!(
        "best epoch {} of {}: dev loss {:.6}, dev UUAS {:.2}",
        outcome.report.best_epoch,
        outcome.report.epochs.len(),
        outcome.report.best_dev_loss,
        outcome.dev_eval.uuas
    );
    if let Some(t) = &outcome.test_eval {
        line.push_str(&format!(", test UUAS {:.2}", t.uuas));
    }
    println!("{line}");
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    check_exists(&args.checkpoint, "--checkpoint")?;
    check_exists(&args.treebank, "--treebank")?;
    check_exists(&args.embeddings, "--embeddings")?;
    let checkpoint = read_checkpoint(&args.checkpoint).map_err(anyhow::Error::from)?;
    let treebank = read_treebank(&args.treebank)?;
    let set = read_container(&args.embeddings)
        .with_context(|| format!("reading embeddings {}", args.embeddings.display()))?;
    let layer = args.layer.unwrap_or(checkpoint.meta.layer);
    if layer >= set.num_layers {
        return Err(usage(format!(
            "--layer {layer} out of range: the container has {} layers",
            set.num_layers
        )));
    }
    if set.dim != checkpoint.params.dim() {
        return Err(anyhow::anyhow!(
            "probe expects {}-dimensional embeddings, container has {}",
            checkpoint.params.dim(),
            set.dim
        )
        .into());
    }
    prepare_output_file(&args.out, args.overwrite)?;
    let alignment = align(&set, &treebank).map_err(anyhow::Error::from)?;
    for m in &alignment.missing {
        log::warn!(
            "{} has no embeddings{}",
            m.sent_id,
            m.reason
                .as_deref()
                .map(|r| format!(": {r}"))
                .unwrap_or_default()
        );
    }
    let report = evaluate(&checkpoint.params, &alignment, layer, args.exclude_punct)
        .map_err(anyhow::Error::from)?;
    write_json(&args.out, &report)?;
    println!(
        "UUAS {:.2} ({} of {} gold edges)",
        report.uuas, report.counts.correct, report.counts.gold
    );
    Ok(())
}

/// File-name-safe version of a sentence id.
fn file_stem(sent_id: &str) -> String {
    sent_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_viz_arcs(args: &ArcsArgs) -> Result<(), CliError> {
    check_exists(&args.report, "--report")?;
    if !(args.strength_max > 0.0 && args.strength_max.is_finite()) {
        return Err(usage("--strength-max must be positive"));
    }
    let text = fs::read_to_string(&args.report)
        .with_context(|| format!("reading {}", args.report.display()))?;
    let report: EvalReport = serde_json::from_str(&text)
        .with_context(|| format!("parsing report {}", args.report.display()))?;
    let records = args
        .sent_ids
        .iter()
        .map(|id| {
            report
                .sentence(id)
                .ok_or_else(|| usage(format!("--sent-id {id}: not in {}", args.report.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    prepare_output_dir(&args.out, args.overwrite)?;
    for rec in records {
        let spec = ArcDiagramSpec {
            title: Some(format!(
                "{}: {} probe, layer {}, rank {}",
                rec.sent_id, report.config.kernel, report.config.layer, report.config.rank
            )),
            tokens: rec.tokens.clone(),
            gold_edges: rec.gold_edges.iter().map(|e| Edge(e[0], e[1])).collect(),
            predicted_edges: rec
                .predicted_edges
                .iter()
                .map(|e| PredictedArc {
                    edge: Edge(e.i, e.j),
                    strength: e.strength,
                })
                .collect(),
            style: ArcStyle {
                strength_max: args.strength_max,
                ..ArcStyle::default()
            },
        };
        let svg = render_arcs(&spec).map_err(anyhow::Error::from)?;
        let path = args.out.join(format!("{}.svg", file_stem(&rec.sent_id)));
        fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_viz_chart(args: &ChartArgs) -> Result<(), CliError> {
    for csv in &args.csvs {
        check_exists(csv, "--csv")?;
    }
    let mut series = Vec::new();
    for csv in &args.csvs {
        let rows = read_sweep_csv(csv)?;
        if rows.is_empty() {
            return Err(anyhow::anyhow!("{} has no rows", csv.display()).into());
        }
        let prefix = if args.csvs.len() == 1 {
            String::new()
        } else {
            csv.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        };
        series.extend(sweep_series(&prefix, &rows));
    }
    let spec = LineChartSpec {
        title: args.title.clone(),
        x_label: args.x_label.clone(),
        y_label: "UUAS (%)".into(),
        series,
        log_x: args.log_x,
    };
    let svg = render_line_chart(&spec).map_err(anyhow::Error::from)?;
    prepare_output_file(&args.out, args.overwrite)?;
    fs::write(&args.out, svg).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn cmd_sweep(args: &SweepArgs, threads: Option<usize>) -> Result<(), CliError> {
    let config = effective_config(&args.data, &args.probe)?;
    let ranks = if args.ranks.is_empty() {
        DEFAULT_RANKS.to_vec()
    } else {
        args.ranks.clone()
    };
    if args.mode == ModeArg::Ranks {
        validate_ranks(&ranks).map_err(|e| usage(format!("--ranks: {e}")))?;
    } else if !args.ranks.is_empty() {
        return Err(usage("--ranks only applies to --mode ranks"));
    }
    let data = load_dataset(&config)?;
    let rows = match args.mode {
        ModeArg::Layers => layer_sweep(&config, &data, &args.out, args.overwrite, threads)?,
        ModeArg::Ranks => rank_sweep(&config, &ranks, &data, &args.out, args.overwrite, threads)?,
    };
    for r in rows {
        let test = r
            .uuas_test
            .map(|u| format!("{u:.2}"))
            .unwrap_or_else(|| "-".into());
        println!("{}\t{:.2}\t{}", r.sweep_key, r.uuas_dev, test);
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    if args.planted_layer >= args.layers {
        return Err(usage("--planted-layer must be below --layers"));
    }
    if args.max_len < 2 {
        return Err(usage("--max-len must be at least 2"));
    }
    let opts = SynthOptions {
        seed: args.seed,
        train: args.train,
        dev: args.dev,
        test: args.test,
        num_layers: args.layers,
        planted_layer: args.planted_layer,
        noise_dims: args.noise_dims,
        lengths: 2..args.max_len + 1,
    };
    prepare_output_dir(&args.out, args.overwrite)?;
    let corpus = planted_corpus(&opts);
    for (name, split) in [
        ("train", &corpus.train),
        ("dev", &corpus.dev),
        ("test", &corpus.test),
    ] {
        let path = args.out.join(format!("{name}.conllu"));
        fs::write(&path, write_conllu(split))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    write_container(&corpus.embeddings, &args.out.join("embeddings.spb"))
        .map_err(anyhow::Error::from)?;
    println!(
        "{} sentences, {} layers × {} dims, planted at layer {}",
        corpus.embeddings.sentences.len(),
        corpus.embeddings.num_layers,
        corpus.embeddings.dim,
        args.planted_layer
    );
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    // checked for every command so a typo never goes unnoticed
    let threads = threads_from_env()?;
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Viz(VizCommand::Arcs(a)) => cmd_viz_arcs(a),
        Command::Viz(VizCommand::Chart(a)) => cmd_viz_chart(a),
        Command::Sweep(a) => cmd_sweep(a, threads),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Usage(msg) => eprintln!("error: {msg}"),
                CliError::Runtime(err) => eprintln!("error: {err:#}"),
            }
            e.exit_code()
        }
    }
}
