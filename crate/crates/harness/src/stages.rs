//! Pipeline stages run by hand on a scene, for inspecting intermediate results.

use pseudomask::affinity::{binarize, cosine_affinity, sharpen, spatial_importance};
use pseudomask::confidence::{confidence_sweep, SweepOutcome};
use pseudomask::localcut::LocalCutConfig;
use pseudomask::ncut::{bipartition, solve_second_eigvec, SolverOptions};
use pseudomask::{AffinityMatrix, Bipartition, EigenSolution, PipelineConfig};

use crate::scene::SyntheticScene;

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Affinity(#[from] pseudomask::affinity::AffinityError),
    #[error(transparent)]
    Ncut(#[from] pseudomask::ncut::NcutError),
    #[error(transparent)]
    Confidence(#[from] pseudomask::confidence::ConfidenceError),
}

/// Cosine affinity, optional sharpening and binarization, as configured.
pub fn semantic_graph(
    scene: &SyntheticScene,
    cfg: &PipelineConfig,
) -> Result<AffinityMatrix<f64>, StageError> {
    let mut w = cosine_affinity(&scene.features)?;
    if cfg.sharpening {
        let importance = spatial_importance(&scene.depth, cfg.sigma_gauss, cfg.beta);
        w = sharpen(w, &importance, cfg.exponent_combine);
    }
    Ok(binarize(w, cfg.tau_ncut))
}

/// The first NCut bipartition of the scene and its eigenvector.
pub fn first_cut(
    scene: &SyntheticScene,
    cfg: &PipelineConfig,
) -> Result<(Bipartition, EigenSolution<f64>), StageError> {
    let w = semantic_graph(scene, cfg)?;
    let nodes: Vec<usize> = (0..w.n()).collect();
    let opts = SolverOptions {
        tol: cfg.eigen_tol,
        max_iterations: cfg.eigen_max_iterations,
        ..SolverOptions::default()
    };
    let e = solve_second_eigvec(&w, &nodes, &opts)?;
    Ok((bipartition(&e)?, e))
}

/// Unclamped confidence sweep around the first cut.
pub fn first_sweep(
    scene: &SyntheticScene,
    cfg: &PipelineConfig,
) -> Result<SweepOutcome<f64>, StageError> {
    let (b, e) = first_cut(scene, cfg)?;
    let lc = LocalCutConfig {
        k: cfg.k,
        tau_knn: cfg.tau_knn,
        z_bg: cfg.z_bg,
        capacity: cfg.capacity_fn,
    };
    Ok(confidence_sweep(
        &b,
        &e,
        &scene.depth,
        cfg.t_steps,
        cfg.tau_knn_min,
        cfg.tau_knn,
        &lc,
    )?)
}
