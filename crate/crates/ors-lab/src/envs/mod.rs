//! Enumerable deterministic gridworld mazes, a continuous 2D point maze, and
//! offline dataset generation under controllable behavioral policies.

mod assumptions;
mod dataset;
mod maze;
mod point_maze;
mod policy;

pub use assumptions::{check_assumptions, check_instance, AssumptionReport, CheckOutcome};
pub use dataset::{
    generate_dataset, read_jsonl, write_jsonl, EmbeddedDataset, EmbeddedTuple, TabularDataset,
    TabularTuple,
};
pub use maze::{compute_layers, DeterministicMdp, GridMaze, LayerDecomposition, ACTION_NAMES, N_ACTIONS};
pub use point_maze::{generate_point_maze_dataset, ContinuousDataset, PointMaze2d, Segment};
pub use policy::{PolicySpec, PolicyTable};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("maze parse error at line {line}: {msg}")]
    MazeParse { line: usize, msg: String },
    #[error("invalid state {0}")]
    InvalidState(usize),
    #[error("horizon must be at least 1, got {0}")]
    BadHorizon(usize),
    #[error("invalid policy spec: {0}")]
    BadPolicy(String),
    #[error("dataset row {row}: {msg}")]
    BadDatasetRow { row: usize, msg: String },
    #[error("no state at coordinates ({0}, {1})")]
    NoStateAt(f64, f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
