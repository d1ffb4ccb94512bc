//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use structprobe::run::{read_treebank, Dataset};
use structprobe::{EmbeddingSet, SentenceEmbeddings};
use structprobe_core::synthetic::{noise_vectors, PlantedEmbedding};
use structprobe_core::Sentence;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn fixture_treebanks() -> (Vec<Sentence>, Vec<Sentence>, Vec<Sentence>) {
    (
        read_treebank(&fixture("train.conllu")).unwrap(),
        read_treebank(&fixture("dev.conllu")).unwrap(),
        read_treebank(&fixture("test.conllu")).unwrap(),
    )
}

/// Container for every fixture sentence: `planted_layer` encodes each tree
/// under a known linear map, the other layers are uniform noise.
pub fn fixture_embeddings(num_layers: usize, planted_layer: usize, seed: u64) -> EmbeddingSet {
    let (train, dev, test) = fixture_treebanks();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let longest = train
        .iter()
        .chain(&dev)
        .chain(&test)
        .map(Sentence::len)
        .max()
        .unwrap();
    let embedder = PlantedEmbedding::new(longest - 1, 3, &mut rng);
    let dim = embedder.dim();
    let mut set = EmbeddingSet::new("fixture", num_layers, dim, true);
    for s in train.iter().chain(&dev).chain(&test) {
        let mut vectors = Vec::new();
        for layer in 0..num_layers {
            if layer == planted_layer {
                vectors.extend(embedder.embed(s, &mut rng));
            } else {
                vectors.extend(noise_vectors(s.len(), dim, 1.0, &mut rng));
            }
        }
        set.sentences.push(SentenceEmbeddings {
            sent_id: s.sent_id.clone(),
            token_count: s.len(),
            vectors,
        });
    }
    set
}

pub fn fixture_dataset(num_layers: usize, planted_layer: usize) -> Dataset {
    let (train, dev, test) = fixture_treebanks();
    Dataset {
        embeddings: fixture_embeddings(num_layers, planted_layer, 5),
        train,
        dev,
        test: Some(test),
    }
}
