//! Layer and rank sweeps: one training run per key, a CSV table and a chart.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::run::{prepare_output_dir, train_and_evaluate, write_run_dir, Dataset, RunConfig};
use crate::viz::{render_line_chart, LineChartSpec, Series};

pub const DEFAULT_RANKS: [usize; 9] = [1, 2, 4, 8, 16, 32, 64, 128, 256];
pub const CSV_FILE: &str = "sweep.csv";
pub const CHART_FILE: &str = "sweep.svg";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    Layers,
    Ranks,
}

impl SweepMode {
    fn key_name(self) -> &'static str {
        match self {
            SweepMode::Layers => "layer",
            SweepMode::Ranks => "rank",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SweepError {
    #[error("rank list is empty")]
    NoRanks,
    #[error("rank must be >= 1")]
    ZeroRank,
    #[error("rank {0} listed more than once")]
    DuplicateRank(usize),
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_key: usize,
    pub uuas_dev: f64,
    pub uuas_test: Option<f64>,
}

pub fn validate_ranks(ranks: &[usize]) -> Result<(), SweepError> {
    if ranks.is_empty() {
        return Err(SweepError::NoRanks);
    }
    let mut seen = BTreeSet::new();
    for &r in ranks {
        if r == 0 {
            return Err(SweepError::ZeroRank);
        }
        if !seen.insert(r) {
            return Err(SweepError::DuplicateRank(r));
        }
    }
    Ok(())
}

/// Thread pool for sweep runs, capped at `threads` when given.
fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    builder.build().context("building sweep thread pool")
}

fn sweep(
    mode: SweepMode,
    keys: &[usize],
    base: &RunConfig,
    data: &Dataset,
    out: &Path,
    threads: Option<usize>,
) -> Result<Vec<SweepRow>> {
    let width = keys.iter().max().map_or(1, |k| k.to_string().len());
    let rows = pool(threads)?.install(|| {
        keys.par_iter()
            .map(|&key| {
                let mut config = base.clone();
                match mode {
                    SweepMode::Layers => config.train.layer = key,
                    SweepMode::Ranks => config.train.rank = key,
                }
                let dir = out.join(format!("{}-{key:0width$}", mode.key_name()));
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                let outcome = train_and_evaluate(&config.train, config.exclude_punct, data)
                    .with_context(|| format!("{} {key}", mode.key_name()))?;
                write_run_dir(&dir, &config, &outcome, &data.embeddings)?;
                log::info!(
                    "{} {key}: dev UUAS {:.2}{}",
                    mode.key_name(),
                    outcome.dev_eval.uuas,
                    outcome
                        .test_eval
                        .as_ref()
                        .map(|t| format!(", test UUAS {:.2}", t.uuas))
                        .unwrap_or_default()
                );
                Ok(SweepRow {
                    sweep_key: key,
                    uuas_dev: outcome.dev_eval.uuas,
                    uuas_test: outcome.test_eval.map(|t| t.uuas),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    write_sweep_csv(&out.join(CSV_FILE), &rows)?;
    let chart = sweep_chart(
        mode,
        &rows,
        &format!("{} sweep ({})", mode.key_name(), base.train.kernel),
    );
    fs::write(out.join(CHART_FILE), render_line_chart(&chart)?).context("writing sweep chart")?;
    Ok(rows)
}

/// Trains one probe per layer of the container with otherwise identical
/// settings. Writes per-layer run directories, `sweep.csv` and `sweep.svg`
/// under `out`.
pub fn layer_sweep(
    base: &RunConfig,
    data: &Dataset,
    out: &Path,
    overwrite: bool,
    threads: Option<usize>,
) -> Result<Vec<SweepRow>> {
    prepare_output_dir(out, overwrite)?;
    let layers: Vec<usize> = (0..data.embeddings.num_layers).collect();
    sweep(SweepMode::Layers, &layers, base, data, out, threads)
}

/// Trains one probe per rank at the configured layer.
pub fn rank_sweep(
    base: &RunConfig,
    ranks: &[usize],
    data: &Dataset,
    out: &Path,
    overwrite: bool,
    threads: Option<usize>,
) -> Result<Vec<SweepRow>> {
    validate_ranks(ranks)?;
    prepare_output_dir(out, overwrite)?;
    sweep(SweepMode::Ranks, ranks, base, data, out, threads)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["sweep_key", "uuas_dev", "uuas_test"] {
        anyhow::bail!(
            "{}: expected header sweep_key,uuas_dev,uuas_test",
            path.display()
        );
    }
    r.deserialize()
        .collect::<Result<Vec<SweepRow>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

/// Dev and test series for a set of sweep rows, labelled with `prefix`.
pub fn sweep_series(prefix: &str, rows: &[SweepRow]) -> Vec<Series> {
    let mut rows = rows.to_vec();
    rows.sort_by_key(|r| r.sweep_key);
    let label = |split: &str| {
        if prefix.is_empty() {
            split.to_string()
        } else {
            format!("{prefix} {split}")
        }
    };
    let mut series = vec![Series {
        name: label("dev"),
        points: rows
            .iter()
            .map(|r| (r.sweep_key as f64, r.uuas_dev))
            .collect(),
    }];
    let test: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.uuas_test.map(|u| (r.sweep_key as f64, u)))
        .collect();
    if !test.is_empty() {
        series.push(Series {
            name: label("test"),
            points: test,
        });
    }
    series
}

pub fn sweep_chart(mode: SweepMode, rows: &[SweepRow], title: &str) -> LineChartSpec {
    LineChartSpec {
        title: title.to_string(),
        x_label: mode.key_name().to_string(),
        y_label: "UUAS (%)".to_string(),
        series: sweep_series("", rows),
        log_x: mode == SweepMode::Ranks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_validation() {
        assert_eq!(validate_ranks(&[]), Err(SweepError::NoRanks));
        assert_eq!(validate_ranks(&[1, 0]), Err(SweepError::ZeroRank));
        assert_eq!(
            validate_ranks(&[4, 2, 4]),
            Err(SweepError::DuplicateRank(4))
        );
        assert!(validate_ranks(&DEFAULT_RANKS).is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let rows = vec![
            SweepRow {
                sweep_key: 0,
                uuas_dev: 50.0,
                uuas_test: Some(48.5),
            },
            SweepRow {
                sweep_key: 1,
                uuas_dev: 61.25,
                uuas_test: None,
            },
        ];
        write_sweep_csv(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("sweep_key,uuas_dev,uuas_test\n"), "{text}");
        assert_eq!(read_sweep_csv(&path).unwrap(), rows);
    }
}
