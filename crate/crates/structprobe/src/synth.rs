//! Planted-solution demo corpora: random treebanks plus a container in which
//! one layer encodes the trees exactly under a known linear map and every
//! other layer is noise.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use structprobe_core::synthetic::{noise_vectors, random_tree, PlantedEmbedding};
use structprobe_core::Sentence;

use crate::container::{EmbeddingSet, SentenceEmbeddings};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub seed: u64,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub num_layers: usize,
    pub planted_layer: usize,
    pub noise_dims: usize,
    pub lengths: Range<usize>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            train: 400,
            dev: 60,
            test: 60,
            num_layers: 4,
            planted_layer: 2,
            noise_dims: 8,
            lengths: 2..10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
    pub embeddings: EmbeddingSet,
}

pub fn planted_corpus(opts: &SynthOptions) -> SynthCorpus {
    assert!(
        opts.planted_layer < opts.num_layers,
        "planted layer out of range"
    );
    assert!(
        opts.lengths.start >= 1 && opts.lengths.end > opts.lengths.start,
        "empty length range"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let rank = (opts.lengths.end - 2).max(1);
    let embedder = PlantedEmbedding::new(rank, opts.noise_dims, &mut rng);
    let dim = embedder.dim();
    let mut set = EmbeddingSet::new("planted", opts.num_layers, dim, true);

    let mut split = |name: &str, count: usize| -> Vec<Sentence> {
        (0..count)
            .map(|i| {
                let len = rand::Rng::gen_range(&mut rng, opts.lengths.clone());
                let sentence = random_tree(&format!("{name}-{i:04}"), len, &mut rng);
                let mut vectors = Vec::with_capacity(opts.num_layers * len * dim);
                for layer in 0..opts.num_layers {
                    if layer == opts.planted_layer {
                        vectors.extend(embedder.embed(&sentence, &mut rng));
                    } else {
                        vectors.extend(noise_vectors(len, dim, 1.0, &mut rng));
                    }
                }
                set.sentences.push(SentenceEmbeddings {
                    sent_id: sentence.sent_id.clone(),
                    token_count: len,
                    vectors,
                });
                sentence
            })
            .collect()
    };
    let train = split("train", opts.train);
    let dev = split("dev", opts.dev);
    let test = split("test", opts.test);
    SynthCorpus {
        train,
        dev,
        test,
        embeddings: set,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let opts = SynthOptions {
            train: 5,
            dev: 2,
            test: 2,
            ..Default::default()
        };
        let a = planted_corpus(&opts);
        assert_eq!(a.embeddings.sentences.len(), 9);
        a.embeddings.validate().unwrap();
        for (s, e) in a
            .train
            .iter()
            .chain(&a.dev)
            .chain(&a.test)
            .zip(&a.embeddings.sentences)
        {
            assert_eq!(s.sent_id, e.sent_id);
            assert_eq!(s.len(), e.token_count);
        }
        let b = planted_corpus(&opts);
        assert_eq!(a.embeddings, b.embeddings);
    }
}
