//! Verification harness: synthetic scenes with planted instances, brute-force
//! oracles for the solvers, and a mask AP evaluator.

pub mod eval;
pub mod io;
pub mod oracle;
pub mod random;
pub mod scene;
pub mod stages;

pub use eval::{evaluate, EvalResult, ImageGroundTruth, ImagePredictions, ScoredMask};
pub use oracle::{brute_force_mincut, dense_second_eigvec};
pub use scene::{generate_corpus, generate_scene, SceneParams, SyntheticScene, Template};

use pseudomask::tensorio::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("instances do not fit on the patch grid")]
    OverlapInfeasible,
    #[error("invalid scene parameters: {0}")]
    InvalidParams(String),
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("oracle limited to {max} nodes, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("need at least two nodes, got {0}")]
    TooSmall(usize),
    #[error("image ids do not line up: {0}")]
    IdMismatch(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
