//! Structural probes over contextual word embeddings.
//!
//! This crate holds the allocation-only core: CoNLL-U parsing and tree
//! distances, linear and kernelized probe distances with analytic gradients,
//! the Adam/SGD training loop with plateau decay, and minimum-spanning-tree
//! evaluation (UUAS and edge strength). It performs no IO and builds without
//! `std`; file formats, rendering and the command-line tool live in the
//! `structprobe` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod eval;
pub mod linalg;
pub mod optim;
pub mod probe;
pub mod synthetic;
pub mod trainer;
pub mod treebank;

pub use eval::{extract_mst, strength, uuas, EvalError, PredictedEdge, PredictedTree};
pub use linalg::{Matrix, Vectors};
pub use optim::{AdamState, Optimizer, OptimizerKind, PlateauSchedule};
pub use probe::{DistanceMatrix, Gradient, Kernel, ProbeError, ProbeParams, RbfMode};
pub use trainer::{train, EpochRecord, Sample, TrainConfig, TrainError, TrainReport};
pub use treebank::{
    gold_edges, parse_conllu, tree_distances, write_conllu, Edge, ParseError, Sentence, Token,
    TreeDistances,
};
