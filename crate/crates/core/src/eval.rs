//! Tree extraction from predicted distances, UUAS and edge strength.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::probe::DistanceMatrix;
use crate::treebank::{edge_touches_punct, gold_edges, Edge, Sentence, TreeDistances};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("need at least two tokens to extract a tree, got {0}")]
    TooFewTokens(usize),
    #[error("non-finite weight between positions {0} and {1}")]
    NonFinite(usize, usize),
    #[error("{predicted} predicted trees for {gold} gold sentences")]
    LengthMismatch { predicted: usize, gold: usize },
    #[error("UUAS is undefined for a corpus without gold edges")]
    NoGoldEdges,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedEdge {
    pub edge: Edge,
    /// Squared predicted distance `d_B²`.
    pub weight: f64,
    /// `d_B / d_T`, filled in by [`PredictedTree::annotate_strengths`].
    pub strength: Option<f64>,
}

/// Spanning tree predicted from a distance matrix. Edges carry 1-based
/// token indices and are sorted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictedTree {
    pub edges: Vec<PredictedEdge>,
}

impl PredictedTree {
    pub fn edge_set(&self) -> BTreeSet<Edge> {
        self.edges.iter().map(|e| e.edge).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    /// Sets each edge's strength from the gold tree distance between its
    /// endpoints.
    pub fn annotate_strengths(&mut self, gold: &TreeDistances) {
        for e in &mut self.edges {
            let d_t = gold.get(e.edge.0 - 1, e.edge.1 - 1);
            e.strength = Some(strength(libm::sqrt(e.weight), d_t));
        }
    }
}

/// Minimum spanning tree of the complete graph weighted by `dm`.
///
/// Kruskal's algorithm over edges sorted by `(weight, i, j)`, so among equal
/// weights the lexicographically smaller pair wins.
pub fn extract_mst(dm: &DistanceMatrix) -> Result<PredictedTree, EvalError> {
    let n = dm.n();
    if n < 2 {
        return Err(EvalError::TooFewTokens(n));
    }
    let mut candidates = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let w = dm.get(i, j);
            if !w.is_finite() {
                return Err(EvalError::NonFinite(i, j));
            }
            candidates.push((w, i, j));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut components = DisjointSet::new(n);
    let mut edges = Vec::with_capacity(n - 1);
    for (w, i, j) in candidates {
        if components.union(i, j) {
            edges.push(PredictedEdge {
                edge: Edge(i + 1, j + 1),
                weight: w,
                strength: None,
            });
            if edges.len() == n - 1 {
                break;
            }
        }
    }
    edges.sort_by_key(|e| e.edge);
    Ok(PredictedTree { edges })
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: alloc::vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            core::cmp::Ordering::Less => self.parent[ra] = rb,
            core::cmp::Ordering::Greater => self.parent[rb] = ra,
            core::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// `d_B / d_T` for a word pair. `d_t` must be at least 1.
pub fn strength(d_b: f64, d_t: u32) -> f64 {
    debug_assert!(d_t >= 1, "tree distance must be positive");
    d_b / f64::from(d_t)
}

/// Correct and total gold edge counts for one sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EdgeCounts {
    pub correct: usize,
    pub gold: usize,
}

impl core::ops::AddAssign for EdgeCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.correct += rhs.correct;
        self.gold += rhs.gold;
    }
}

/// Gold edges recovered by `predicted`, after dropping punctuation edges
/// from both sides when `exclude_punct` is set.
pub fn edge_counts(predicted: &PredictedTree, gold: &Sentence, exclude_punct: bool) -> EdgeCounts {
    let gold_set = gold_edges(gold, exclude_punct);
    let correct = predicted
        .edges
        .iter()
        .filter(|e| !exclude_punct || !edge_touches_punct(gold, e.edge))
        .filter(|e| gold_set.contains(&e.edge))
        .count();
    EdgeCounts {
        correct,
        gold: gold_set.len(),
    }
}

/// Corpus UUAS in percent, micro-averaged over all gold edges.
pub fn uuas(
    predicted: &[PredictedTree],
    gold: &[Sentence],
    exclude_punct: bool,
) -> Result<f64, EvalError> {
    if predicted.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            predicted: predicted.len(),
            gold: gold.len(),
        });
    }
    let mut total = EdgeCounts::default();
    for (p, g) in predicted.iter().zip(gold) {
        total += edge_counts(p, g, exclude_punct);
    }
    uuas_from_counts(total)
}

pub fn uuas_from_counts(counts: EdgeCounts) -> Result<f64, EvalError> {
    if counts.gold == 0 {
        return Err(EvalError::NoGoldEdges);
    }
    Ok(100.0 * counts.correct as f64 / counts.gold as f64)
}

/// Predicted tree for a sentence, with strengths. Single-token sentences
/// yield an empty tree.
pub fn predict_tree(dm: &DistanceMatrix, gold: &TreeDistances) -> Result<PredictedTree, EvalError> {
    if dm.n() < 2 {
        return Ok(PredictedTree::default());
    }
    let mut tree = extract_mst(dm)?;
    tree.annotate_strengths(gold);
    Ok(tree)
}
