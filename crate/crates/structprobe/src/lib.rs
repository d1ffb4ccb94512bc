//! File formats, evaluation reports, SVG rendering, sweeps and the
//! `structprobe` command-line tool, built on `structprobe-core`.

pub mod align;
pub mod checkpoint;
pub mod cli;
pub mod container;
pub mod report;
pub mod run;
pub mod sweep;
pub mod synth;
pub mod viz;

pub use align::{align, AlignError, AlignedSentence, Alignment, MissingSentence};
pub use checkpoint::{
    read_checkpoint, write_checkpoint, Checkpoint, CheckpointError, TrainingMeta,
};
pub use container::{
    read_container, write_container, ContainerError, EmbeddingSet, SentenceEmbeddings,
};
pub use report::{evaluate, EvalReport};
pub use viz::{render_arcs, render_line_chart, ArcDiagramSpec, LineChartSpec};
