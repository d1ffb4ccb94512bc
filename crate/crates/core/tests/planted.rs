//! End-to-end training on planted-solution corpora.

use structprobe_core::eval::{predict_tree, uuas};
use structprobe_core::synthetic::{PlantedSentence, PlantedTask};
use structprobe_core::{train, Kernel, ProbeParams, Sample, TrainConfig};

fn corpus_uuas(params: &ProbeParams, sentences: &[PlantedSentence], samples: &[Sample<'_>]) -> f64 {
    let trees: Vec<_> = samples
        .iter()
        .map(|s| predict_tree(&params.distance_matrix(s.vectors).unwrap(), &s.gold).unwrap())
        .collect();
    let gold: Vec<_> = sentences.iter().map(|p| p.sentence.clone()).collect();
    uuas(&trees, &gold, true).unwrap()
}

#[test]
fn linear_probe_recovers_planted_trees() {
    let task = PlantedTask::generate(7, 1500, 100, 8, 2..10);
    let config = TrainConfig {
        rank: 16,
        max_epochs: 50,
        seed: 1,
        ..TrainConfig::default()
    };
    let (params, report) = train(&config, &task.train_samples(), &task.dev_samples()).unwrap();
    assert!(
        report.best_dev_loss < 1e-3,
        "dev loss {}",
        report.best_dev_loss
    );
    assert_eq!(corpus_uuas(&params, &task.dev, &task.dev_samples()), 100.0);
}

#[test]
fn planted_loss_decreases_early() {
    let task = PlantedTask::generate(8, 300, 60, 8, 2..10);
    let config = TrainConfig {
        rank: 16,
        max_epochs: 10,
        seed: 2,
        ..TrainConfig::default()
    };
    let (_, report) = train(&config, &task.train_samples(), &task.dev_samples()).unwrap();
    let rises = report
        .epochs
        .windows(2)
        .filter(|w| w[1].dev_loss > w[0].dev_loss)
        .count();
    assert!(rises <= 1, "{rises} non-monotone epochs");
    assert_eq!(report.epochs.len(), 10);
}

#[test]
fn rank_one_probe_cannot_fit_rank_four_trees() {
    // lengths up to 5 tokens: four planted directions
    let task = PlantedTask::generate(9, 600, 100, 4, 2..6);
    assert_eq!(task.intrinsic_rank, 4);
    let mut scores = Vec::new();
    for rank in [1, 4] {
        let config = TrainConfig {
            rank,
            max_epochs: 50,
            seed: 3,
            ..TrainConfig::default()
        };
        let (params, _) = train(&config, &task.train_samples(), &task.dev_samples()).unwrap();
        scores.push(corpus_uuas(&params, &task.dev, &task.dev_samples()));
    }
    assert!(
        scores[0] < scores[1],
        "rank 1: {}, rank 4: {}",
        scores[0],
        scores[1]
    );
}

#[test]
fn checkpointed_dev_loss_is_the_minimum() {
    let task = PlantedTask::generate(10, 200, 40, 8, 2..10);
    let config = TrainConfig {
        kernel: Kernel::Sigmoid,
        rank: 8,
        max_epochs: 15,
        seed: 4,
        ..TrainConfig::default()
    };
    let (params, report) = train(&config, &task.train_samples(), &task.dev_samples()).unwrap();
    let min = report
        .epochs
        .iter()
        .map(|e| e.dev_loss)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(report.best_dev_loss, min);
    let recomputed = structprobe_core::trainer::mean_loss(&params, &task.dev_samples()).unwrap();
    assert!((recomputed - min).abs() < 1e-12);
    assert!(report.best_dev_loss <= report.epochs[0].dev_loss);
}
