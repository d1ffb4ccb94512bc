//! Training runs: dataset loading, train-then-evaluate, and the run
//! directory layout.
//!
//! A run directory holds
//!
//! ```text
//! config.json      effective configuration after merging file and flags
//! metrics.csv      epoch,train_loss,dev_loss,lr
//! checkpoint.spp   best probe by dev loss
//! report.json      training summary, plateau settings, wall-clock, UUAS
//! eval_dev.json    full dev evaluation report
//! eval_test.json   full test evaluation report, when a test treebank is given
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use structprobe_core::{
    parse_conllu, trainer, OptimizerKind, ProbeParams, Sentence, TrainConfig, TrainReport,
};

use crate::align::{align, AlignError, MissingSentence};
use crate::checkpoint::{write_checkpoint, Checkpoint, TrainingMeta};
use crate::container::{read_container, EmbeddingSet};
use crate::report::{evaluate, EvalReport, EvaluateError};

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.spp";
pub const REPORT_FILE: &str = "report.json";
pub const DEV_EVAL_FILE: &str = "eval_dev.json";
pub const TEST_EVAL_FILE: &str = "eval_test.json";

/// Everything a training run or sweep needs besides the output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub treebank_train: Option<PathBuf>,
    pub treebank_dev: Option<PathBuf>,
    pub treebank_test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub exclude_punct: bool,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            treebank_train: None,
            treebank_dev: None,
            treebank_test: None,
            embeddings: None,
            exclude_punct: true,
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

pub fn read_treebank(path: &Path) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_conllu(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Parsed treebanks and the embedding container they align against.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub embeddings: EmbeddingSet,
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Option<Vec<Sentence>>,
}

impl Dataset {
    pub fn load(train: &Path, dev: &Path, test: Option<&Path>, embeddings: &Path) -> Result<Self> {
        let embeddings = read_container(embeddings)
            .with_context(|| format!("reading embeddings {}", embeddings.display()))?;
        Ok(Self {
            embeddings,
            train: read_treebank(train)?,
            dev: read_treebank(dev)?,
            test: test.map(read_treebank).transpose()?,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{split}: {source}")]
    Align {
        split: &'static str,
        source: AlignError,
    },
    #[error(transparent)]
    Train(#[from] structprobe_core::TrainError),
    #[error("{split} evaluation: {source}")]
    Evaluate {
        split: &'static str,
        source: EvaluateError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissingBySplit {
    pub train: Vec<MissingSentence>,
    pub dev: Vec<MissingSentence>,
    pub test: Vec<MissingSentence>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub params: ProbeParams,
    pub report: TrainReport,
    pub dev_eval: EvalReport,
    pub test_eval: Option<EvalReport>,
    pub missing: MissingBySplit,
    pub wall_clock_seconds: f64,
}

fn warn_missing(split: &str, missing: &[MissingSentence]) {
    if missing.is_empty() {
        return;
    }
    log::warn!("{split}: {} sentence(s) have no embeddings", missing.len());
    for m in missing {
        match &m.reason {
            Some(reason) => log::warn!("  {} skipped by extractor: {reason}", m.sent_id),
            None => log::warn!("  {} not in container", m.sent_id),
        }
    }
}

/// Trains on the train split, keeps the best probe by dev loss, and scores
/// it on dev and (if present) test.
pub fn train_and_evaluate(
    config: &TrainConfig,
    exclude_punct: bool,
    data: &Dataset,
) -> Result<RunOutcome, RunError> {
    let started = Instant::now();
    let set = &data.embeddings;
    let train_al = align(set, &data.train).map_err(|source| RunError::Align {
        split: "train",
        source,
    })?;
    let dev_al = align(set, &data.dev).map_err(|source| RunError::Align {
        split: "dev",
        source,
    })?;
    let test_al = data
        .test
        .as_deref()
        .map(|t| align(set, t))
        .transpose()
        .map_err(|source| RunError::Align {
            split: "test",
            source,
        })?;
    warn_missing("train", &train_al.missing);
    warn_missing("dev", &dev_al.missing);
    if let Some(t) = &test_al {
        warn_missing("test", &t.missing);
    }

    let layer = config.layer;
    let train_samples = train_al.samples(layer).map_err(|source| RunError::Align {
        split: "train",
        source,
    })?;
    let dev_samples = dev_al.samples(layer).map_err(|source| RunError::Align {
        split: "dev",
        source,
    })?;
    let (params, report) = trainer::train_with(config, &train_samples, &dev_samples, |r| {
        log::debug!(
            "epoch {:>3}  train {:.6}  dev {:.6}  lr {:.2e}",
            r.epoch,
            r.train_loss,
            r.dev_loss,
            r.lr
        );
    })?;

    let dev_eval =
        evaluate(&params, &dev_al, layer, exclude_punct).map_err(|source| RunError::Evaluate {
            split: "dev",
            source,
        })?;
    let test_eval = test_al
        .as_ref()
        .map(|t| evaluate(&params, t, layer, exclude_punct))
        .transpose()
        .map_err(|source| RunError::Evaluate {
            split: "test",
            source,
        })?;

    Ok(RunOutcome {
        params,
        report,
        dev_eval,
        test_eval,
        missing: MissingBySplit {
            train: train_al.missing,
            dev: dev_al.missing,
            test: test_al.map(|t| t.missing).unwrap_or_default(),
        },
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

pub fn checkpoint_for(
    config: &TrainConfig,
    outcome: &RunOutcome,
    set: &EmbeddingSet,
) -> Checkpoint {
    let r = &outcome.report;
    Checkpoint {
        params: outcome.params.clone(),
        meta: TrainingMeta {
            seed: config.seed,
            layer: config.layer,
            optimizer: config.optimizer,
            initial_lr: config.initial_lr,
            batch_size: config.batch_size,
            epochs_run: r.epochs.len(),
            best_epoch: r.best_epoch,
            best_dev_loss: r.best_dev_loss,
            lr_decays: r.lr_decays,
            stopped_early: r.stopped_early,
            model_name: set.model_name.clone(),
            contextual: set.contextual,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSettings {
    pub threshold: f64,
    pub patience: usize,
    pub decay_factor: f64,
    pub early_stop_after: usize,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary<'a> {
    pub training: &'a TrainReport,
    pub wall_clock_seconds: f64,
    pub checkpoint: &'static str,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub plateau: PlateauSettings,
    pub uuas_dev: f64,
    pub uuas_test: Option<f64>,
    pub missing: &'a MissingBySplit,
}

#[derive(Debug, thiserror::Error)]
#[error("{} exists and is not empty; pass --overwrite to replace its contents", .0.display())]
pub struct ClobberError(pub PathBuf);

/// Creates `dir`, refusing to reuse a non-empty directory unless
/// `overwrite` is set. Existing files are overwritten in place, never
/// deleted.
pub fn prepare_output_dir(dir: &Path, overwrite: bool) -> Result<()> {
    match fs::read_dir(dir) {
        Ok(mut entries) => {
            if entries.next().is_some() && !overwrite {
                return Err(ClobberError(dir.to_path_buf()).into());
            }
            Ok(())
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
        }
        Err(e) => Err(e).with_context(|| format!("opening output directory {}", dir.display())),
    }
}

/// Refuses to replace an existing file unless `overwrite` is set.
pub fn prepare_output_file(path: &Path, overwrite: bool) -> Result<()> {
    if path.exists() && !overwrite {
        return Err(ClobberError(path.to_path_buf()).into());
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_metrics(path: &Path, report: &TrainReport) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["epoch", "train_loss", "dev_loss", "lr"])?;
    for e in &report.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.dev_loss.to_string(),
            e.lr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every run artifact into an already prepared `dir`.
pub fn write_run_dir(
    dir: &Path,
    config: &RunConfig,
    outcome: &RunOutcome,
    set: &EmbeddingSet,
) -> Result<()> {
    let t = &config.train;
    write_json(&dir.join(CONFIG_FILE), config)?;
    write_metrics(&dir.join(METRICS_FILE), &outcome.report)?;
    write_checkpoint(&checkpoint_for(t, outcome, set), &dir.join(CHECKPOINT_FILE))?;
    let summary = RunSummary {
        training: &outcome.report,
        wall_clock_seconds: outcome.wall_clock_seconds,
        checkpoint: CHECKPOINT_FILE,
        optimizer: t.optimizer,
        batch_size: t.batch_size,
        plateau: PlateauSettings {
            threshold: t.plateau_threshold,
            patience: t.plateau_patience,
            decay_factor: t.lr_decay_factor,
            early_stop_after: t.early_stop_after,
        },
        uuas_dev: outcome.dev_eval.uuas,
        uuas_test: outcome.test_eval.as_ref().map(|e| e.uuas),
        missing: &outcome.missing,
    };
    write_json(&dir.join(REPORT_FILE), &summary)?;
    write_json(&dir.join(DEV_EVAL_FILE), &outcome.dev_eval)?;
    if let Some(test) = &outcome.test_eval {
        write_json(&dir.join(TEST_EVAL_FILE), test)?;
    }
    Ok(())
}
