//! Pairing treebank sentences with their embeddings by `sent_id`.

use std::collections::HashMap;

use structprobe_core::{tree_distances, Sample, Sentence};

use crate::container::{EmbeddingSet, SentenceEmbeddings};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AlignError {
    #[error("sentence {sent_id}: treebank has {treebank} tokens, embeddings have {embeddings}")]
    TokenCount {
        sent_id: String,
        treebank: usize,
        embeddings: usize,
    },
    #[error("layer {layer} requested but the container has {num_layers} layers")]
    Layer { layer: usize, num_layers: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct AlignedSentence<'a> {
    pub sentence: &'a Sentence,
    pub embeddings: &'a SentenceEmbeddings,
}

/// A treebank sentence without embeddings. `reason` comes from the
/// container's skip log when the extractor recorded one.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct MissingSentence {
    pub sent_id: String,
    pub reason: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Alignment<'a> {
    pub set: &'a EmbeddingSet,
    pub sentences: Vec<AlignedSentence<'a>>,
    pub missing: Vec<MissingSentence>,
}

/// Aligns `treebank` against `set` in treebank order.
pub fn align<'a>(
    set: &'a EmbeddingSet,
    treebank: &'a [Sentence],
) -> Result<Alignment<'a>, AlignError> {
    let by_id: HashMap<&str, &SentenceEmbeddings> = set
        .sentences
        .iter()
        .map(|s| (s.sent_id.as_str(), s))
        .collect();
    let skipped: HashMap<&str, &str> = set
        .skipped
        .iter()
        .map(|s| (s.sent_id.as_str(), s.reason.as_str()))
        .collect();

    let mut sentences = Vec::with_capacity(treebank.len());
    let mut missing = Vec::new();
    for sentence in treebank {
        match by_id.get(sentence.sent_id.as_str()) {
            Some(&embeddings) => {
                if embeddings.token_count != sentence.len() {
                    return Err(AlignError::TokenCount {
                        sent_id: sentence.sent_id.clone(),
                        treebank: sentence.len(),
                        embeddings: embeddings.token_count,
                    });
                }
                sentences.push(AlignedSentence {
                    sentence,
                    embeddings,
                });
            }
            None => missing.push(MissingSentence {
                sent_id: sentence.sent_id.clone(),
                reason: skipped
                    .get(sentence.sent_id.as_str())
                    .map(|r| r.to_string()),
            }),
        }
    }
    Ok(Alignment {
        set,
        sentences,
        missing,
    })
}

impl<'a> Alignment<'a> {
    pub fn check_layer(&self, layer: usize) -> Result<(), AlignError> {
        if layer >= self.set.num_layers {
            return Err(AlignError::Layer {
                layer,
                num_layers: self.set.num_layers,
            });
        }
        Ok(())
    }

    /// Training samples at `layer`.
    pub fn samples(&self, layer: usize) -> Result<Vec<Sample<'a>>, AlignError> {
        self.check_layer(layer)?;
        Ok(self
            .sentences
            .iter()
            .map(|a| Sample {
                sent_id: &a.sentence.sent_id,
                vectors: self.set.layer(a.embeddings, layer),
                gold: tree_distances(a.sentence),
            })
            .collect())
    }
}
