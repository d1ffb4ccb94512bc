mod common;

use std::fs;

use structprobe::run::{Dataset, RunConfig};
use structprobe::sweep::{layer_sweep, rank_sweep, read_sweep_csv, SweepError, DEFAULT_RANKS};
use structprobe::synth::{planted_corpus, SynthOptions};
use structprobe_core::TrainConfig;

fn planted(num_layers: usize, planted_layer: usize, lengths: std::ops::Range<usize>) -> Dataset {
    let corpus = planted_corpus(&SynthOptions {
        seed: 3,
        train: 200,
        dev: 40,
        test: 40,
        num_layers,
        planted_layer,
        noise_dims: 4,
        lengths,
    });
    Dataset {
        embeddings: corpus.embeddings,
        train: corpus.train,
        dev: corpus.dev,
        test: Some(corpus.test),
    }
}

fn config(rank: usize, epochs: usize) -> RunConfig {
    RunConfig {
        exclude_punct: false,
        train: TrainConfig {
            rank,
            max_epochs: epochs,
            initial_lr: 0.01,
            seed: 1,
            ..TrainConfig::default()
        },
        ..RunConfig::default()
    }
}

#[test]
fn planted_layer_wins_the_layer_sweep() {
    let data = planted(4, 2, 2..8);
    let out = tempfile::tempdir().unwrap();
    let rows = layer_sweep(&config(6, 15), &data, out.path(), false, Some(2)).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(
        rows.iter().map(|r| r.sweep_key).collect::<Vec<_>>(),
        vec![0, 1, 2, 3]
    );
    let best = rows
        .iter()
        .max_by(|a, b| a.uuas_dev.total_cmp(&b.uuas_dev))
        .unwrap();
    assert_eq!(best.sweep_key, 2, "{rows:?}");
    for r in &rows {
        if r.sweep_key != 2 {
            assert!(r.uuas_dev < best.uuas_dev);
        }
    }

    assert_eq!(read_sweep_csv(&out.path().join("sweep.csv")).unwrap(), rows);
    let svg = fs::read_to_string(out.path().join("sweep.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    for l in 0..4 {
        assert!(out
            .path()
            .join(format!("layer-{l}/checkpoint.spp"))
            .exists());
    }
}

#[test]
fn single_layer_container_gives_one_row() {
    let data = planted(1, 0, 2..6);
    let out = tempfile::tempdir().unwrap();
    let rows = layer_sweep(&config(4, 2), &data, out.path(), false, Some(1)).unwrap();
    assert_eq!(rows.len(), 1);
}

#[test]
fn rank_one_trails_the_intrinsic_rank() {
    // lengths up to 5 tokens need 4 planted dimensions
    let data = planted(1, 0, 2..6);
    let out = tempfile::tempdir().unwrap();
    let rows = rank_sweep(&config(1, 30), &[1, 4], &data, out.path(), false, None).unwrap();
    assert_eq!(rows[0].sweep_key, 1);
    assert_eq!(rows[1].sweep_key, 4);
    assert!(rows[0].uuas_dev < rows[1].uuas_dev, "{rows:?}");
    assert!(out.path().join("rank-1/report.json").exists());
    assert!(out.path().join("rank-4/report.json").exists());
}

#[test]
fn rank_list_validation() {
    let data = planted(1, 0, 2..4);
    let out = tempfile::tempdir().unwrap();
    let err = rank_sweep(&config(1, 1), &[2, 8, 2], &data, out.path(), false, None).unwrap_err();
    assert_eq!(
        err.downcast_ref::<SweepError>(),
        Some(&SweepError::DuplicateRank(2))
    );
    assert_eq!(DEFAULT_RANKS, [1, 2, 4, 8, 16, 32, 64, 128, 256]);
}

#[test]
fn sweep_refuses_non_empty_output() {
    let data = planted(1, 0, 2..4);
    let out = tempfile::tempdir().unwrap();
    fs::write(out.path().join("keep.txt"), "x").unwrap();
    assert!(layer_sweep(&config(2, 1), &data, out.path(), false, None).is_err());
    layer_sweep(&config(2, 1), &data, out.path(), true, None).unwrap();
    assert!(out.path().join("keep.txt").exists());
}
