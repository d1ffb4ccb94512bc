//! Planted-solution corpora for testing probes end to end.
//!
//! Every tree metric is a squared Euclidean distance: give each non-root
//! token its own orthogonal unit direction and place token `i` at the sum of
//! the directions along the root-to-`i` path. Then `‖x_i − x_j‖²` is the
//! number of edges between `i` and `j`. The corpus hides these coordinates
//! inside a random rotation of a wider space padded with noise, so a known
//! linear map `B*` (the first rows of the inverse rotation) reproduces the
//! gold distances exactly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{Matrix, Vectors};
use crate::trainer::Sample;
use crate::treebank::{tree_distances, Sentence};

#[derive(Debug, Clone)]
pub struct PlantedSentence {
    pub sentence: Sentence,
    /// Row-major `tokens × dim` vectors.
    pub vectors: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct PlantedTask {
    pub dim: usize,
    /// Number of planted coordinates (longest sentence minus one).
    pub intrinsic_rank: usize,
    /// `B*`, `intrinsic_rank × dim`.
    pub planted: Matrix,
    pub train: Vec<PlantedSentence>,
    pub dev: Vec<PlantedSentence>,
    pub test: Vec<PlantedSentence>,
}

impl PlantedTask {
    /// Draws `n_train` training and `n_eval` dev and test sentences with
    /// lengths in `lengths`, embedded in `intrinsic_rank + noise_dims`
    /// dimensions.
    pub fn generate(
        seed: u64,
        n_train: usize,
        n_eval: usize,
        noise_dims: usize,
        lengths: Range<usize>,
    ) -> Self {
        assert!(
            lengths.start >= 1 && lengths.end > lengths.start,
            "empty length range"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rank = (lengths.end - 2).max(1);
        let embedder = PlantedEmbedding::new(rank, noise_dims, &mut rng);

        let mut split = |name: &str, count: usize| -> Vec<PlantedSentence> {
            (0..count)
                .map(|i| {
                    let len = rng.gen_range(lengths.clone());
                    let sentence = random_tree(&format!("{name}-{i:04}"), len, &mut rng);
                    let vectors = embedder.embed(&sentence, &mut rng);
                    PlantedSentence { sentence, vectors }
                })
                .collect()
        };
        let train = split("train", n_train);
        let dev = split("dev", n_eval);
        let test = split("test", n_eval);

        Self {
            dim: embedder.dim(),
            intrinsic_rank: rank,
            planted: embedder.planted_map(),
            train,
            dev,
            test,
        }
    }

    pub fn train_samples(&self) -> Vec<Sample<'_>> {
        samples(&self.train, self.dim)
    }

    pub fn dev_samples(&self) -> Vec<Sample<'_>> {
        samples(&self.dev, self.dim)
    }

    pub fn test_samples(&self) -> Vec<Sample<'_>> {
        samples(&self.test, self.dim)
    }
}

pub fn samples(sentences: &[PlantedSentence], dim: usize) -> Vec<Sample<'_>> {
    sentences
        .iter()
        .map(|p| Sample {
            sent_id: &p.sentence.sent_id,
            vectors: Vectors::new(&p.vectors, dim),
            gold: tree_distances(&p.sentence),
        })
        .collect()
}

/// Uniformly labelled random recursive tree over `len` tokens.
pub fn random_tree<R: Rng + ?Sized>(sent_id: &str, len: usize, rng: &mut R) -> Sentence {
    let mut order: Vec<usize> = (1..=len).collect();
    order.shuffle(rng);
    let mut heads = vec![0; len];
    for k in 1..len {
        let parent = order[rng.gen_range(0..k)];
        heads[order[k] - 1] = parent;
    }
    Sentence::from_heads(sent_id, &heads).expect("generated heads form a tree")
}

/// A random rotation of `rank` planted coordinates plus `noise_dims`
/// noise coordinates.
#[derive(Debug, Clone)]
pub struct PlantedEmbedding {
    rank: usize,
    rotation: Matrix,
}

impl PlantedEmbedding {
    pub fn new<R: Rng + ?Sized>(rank: usize, noise_dims: usize, rng: &mut R) -> Self {
        assert!(rank >= 1, "planted rank must be >= 1");
        Self {
            rank,
            rotation: random_orthogonal(rank + noise_dims, rng),
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.rotation.rows()
    }

    /// `B*`, the first `rank` rows of the inverse rotation; maps embedded
    /// vectors back to their path-indicator coordinates.
    pub fn planted_map(&self) -> Matrix {
        let dim = self.dim();
        let mut planted = Matrix::zeros(self.rank, dim);
        for r in 0..self.rank {
            for c in 0..dim {
                planted[(r, c)] = self.rotation[(c, r)];
            }
        }
        planted
    }

    /// Row-major `tokens × dim` vectors for a sentence of at most
    /// `rank + 1` tokens. The planted coordinates are the path indicators of
    /// the sentence's tree; the rest are uniform noise in `[−1, 1]`.
    pub fn embed<R: Rng + ?Sized>(&self, sentence: &Sentence, rng: &mut R) -> Vec<f32> {
        let n = sentence.len();
        let dim = self.dim();
        assert!(
            n <= self.rank + 1,
            "sentence of {n} tokens exceeds planted rank {}",
            self.rank
        );

        // one coordinate per non-root token
        let mut coord = vec![usize::MAX; n + 1];
        let mut next = 0;
        for t in &sentence.tokens {
            if t.head != 0 {
                coord[t.index] = next;
                next += 1;
            }
        }

        let mut out = Vec::with_capacity(n * dim);
        let mut latent = vec![0.0f64; dim];
        for t in &sentence.tokens {
            latent.iter_mut().for_each(|v| *v = 0.0);
            let mut cur = t.index;
            while cur != 0 {
                if coord[cur] != usize::MAX {
                    latent[coord[cur]] = 1.0;
                }
                cur = sentence.tokens[cur - 1].head;
            }
            for v in latent.iter_mut().skip(self.rank) {
                *v = rng.gen_range(-1.0..=1.0);
            }
            for r in 0..dim {
                let x: f64 = self
                    .rotation
                    .row(r)
                    .iter()
                    .zip(&latent)
                    .map(|(a, b)| a * b)
                    .sum();
                out.push(x as f32);
            }
        }
        out
    }
}

/// Random orthogonal matrix by Gram–Schmidt on uniform entries.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    loop {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut degenerate = false;
        for _ in 0..n {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            for q in &cols {
                let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
            }
            let norm = libm::sqrt(v.iter().map(|a| a * a).sum());
            if norm < 1e-6 {
                degenerate = true;
                break;
            }
            v.iter_mut().for_each(|a| *a /= norm);
            cols.push(v);
        }
        if degenerate {
            continue;
        }
        let mut m = Matrix::zeros(n, n);
        for (c, col) in cols.iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        return m;
    }
}

/// Uniform noise vectors in `[−scale, scale]` for `tokens × dim`.
pub fn noise_vectors<R: Rng + ?Sized>(
    tokens: usize,
    dim: usize,
    scale: f32,
    rng: &mut R,
) -> Vec<f32> {
    (0..tokens * dim)
        .map(|_| rng.gen_range(-scale..=scale))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::{Kernel, ProbeParams};

    #[test]
    fn planted_map_reproduces_tree_distances() {
        let task = PlantedTask::generate(1, 20, 5, 6, 2..9);
        let probe = ProbeParams::new(Kernel::Linear, task.planted.clone());
        for s in task.train_samples() {
            let loss = probe.sentence_loss(s.vectors, &s.gold).unwrap();
            assert!(loss < 1e-5, "{}: {loss}", s.sent_id);
        }
    }

    #[test]
    fn rotation_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = random_orthogonal(5, &mut rng);
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = (0..5).map(|r| q[(r, i)] * q[(r, j)]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12);
            }
        }
    }
}
