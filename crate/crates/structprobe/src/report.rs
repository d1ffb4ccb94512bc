//! Corpus evaluation and the JSON evaluation report.

use serde::{Deserialize, Serialize};
use structprobe_core::eval::{edge_counts, predict_tree, uuas_from_counts, EdgeCounts};
use structprobe_core::{
    gold_edges, tree_distances, EvalError, Kernel, ProbeError, ProbeParams, RbfMode,
};

use crate::align::{AlignError, Alignment, MissingSentence};

#[derive(Debug, thiserror::Error)]
pub enum EvaluateError {
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error("sentence {sent_id}: {source}")]
    Probe { sent_id: String, source: ProbeError },
    #[error("sentence {sent_id}: {source}")]
    Tree { sent_id: String, source: EvalError },
    #[error(transparent)]
    Uuas(EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub kernel: Kernel,
    pub layer: usize,
    pub rank: usize,
    pub exclude_punct: bool,
    pub rbf_mode: RbfMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    /// 1-based token indices, smaller first.
    pub i: usize,
    pub j: usize,
    /// Squared predicted distance.
    pub weight: f64,
    /// Predicted distance over gold tree distance.
    pub strength: f64,
    pub correct: bool,
    /// Left out of the score because it touches punctuation.
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub sent_id: String,
    pub tokens: Vec<String>,
    pub gold_edges: Vec<[usize; 2]>,
    pub predicted_edges: Vec<EdgeRecord>,
    pub counts: EdgeCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingRecord {
    pub sent_id: String,
    pub reason: Option<String>,
}

impl From<&MissingSentence> for MissingRecord {
    fn from(m: &MissingSentence) -> Self {
        Self {
            sent_id: m.sent_id.clone(),
            reason: m.reason.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Micro-averaged UUAS in percent.
    pub uuas: f64,
    pub counts: EdgeCounts,
    pub config: ReportConfig,
    pub sentences: Vec<SentenceRecord>,
    /// Treebank sentences without embeddings.
    pub missing: Vec<MissingRecord>,
    /// Single-token sentences, which have no edges to score.
    pub skipped_short: Vec<String>,
}

impl EvalReport {
    pub fn sentence(&self, sent_id: &str) -> Option<&SentenceRecord> {
        self.sentences.iter().find(|s| s.sent_id == sent_id)
    }
}

/// Predicts a tree for every aligned sentence at `layer` and scores it.
pub fn evaluate(
    params: &ProbeParams,
    alignment: &Alignment<'_>,
    layer: usize,
    exclude_punct: bool,
) -> Result<EvalReport, EvaluateError> {
    alignment.check_layer(layer)?;
    let mut total = EdgeCounts::default();
    let mut sentences = Vec::with_capacity(alignment.sentences.len());
    let mut skipped_short = Vec::new();

    for aligned in &alignment.sentences {
        let sentence = aligned.sentence;
        if sentence.len() < 2 {
            skipped_short.push(sentence.sent_id.clone());
            continue;
        }
        let vectors = alignment.set.layer(aligned.embeddings, layer);
        let gold = tree_distances(sentence);
        let dm = params
            .distance_matrix(vectors)
            .map_err(|source| EvaluateError::Probe {
                sent_id: sentence.sent_id.clone(),
                source,
            })?;
        let tree = predict_tree(&dm, &gold).map_err(|source| EvaluateError::Tree {
            sent_id: sentence.sent_id.clone(),
            source,
        })?;

        let gold_all = gold_edges(sentence, false);
        let counts = edge_counts(&tree, sentence, exclude_punct);
        total += counts;

        let predicted_edges = tree
            .edges
            .iter()
            .map(|e| {
                let excluded = exclude_punct
                    && (sentence.tokens[e.edge.0 - 1].is_punct()
                        || sentence.tokens[e.edge.1 - 1].is_punct());
                EdgeRecord {
                    i: e.edge.0,
                    j: e.edge.1,
                    weight: e.weight,
                    strength: e.strength.expect("predicted trees carry strengths"),
                    correct: gold_all.contains(&e.edge),
                    excluded,
                }
            })
            .collect();
        sentences.push(SentenceRecord {
            sent_id: sentence.sent_id.clone(),
            tokens: sentence.tokens.iter().map(|t| t.form.clone()).collect(),
            gold_edges: gold_all.iter().map(|e| [e.0, e.1]).collect(),
            predicted_edges,
            counts,
        });
    }

    let uuas = uuas_from_counts(total).map_err(EvaluateError::Uuas)?;
    Ok(EvalReport {
        uuas,
        counts: total,
        config: ReportConfig {
            kernel: params.kernel,
            layer,
            rank: params.rank(),
            exclude_punct,
            rbf_mode: params.rbf_mode,
        },
        sentences,
        missing: alignment.missing.iter().map(MissingRecord::from).collect(),
        skipped_short,
    })
}
