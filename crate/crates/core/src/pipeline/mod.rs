//! Per-image extraction and batch orchestration.

mod batch;
mod config;

pub use batch::{
    overlay, read_manifest, run_batch, BatchSummary, FailureRecord, ManifestEntry,
    ANNOTATIONS_FILE, RESOLVED_CONFIG_FILE, SUMMARY_FILE,
};
pub use config::{ConfigError, PipelineConfig};

use std::path::PathBuf;

use crate::affinity::{
    binarize, cosine_affinity, sharpen, spatial_importance, AffinityError, FeatureMap,
};
use crate::augment::{PseudoAnnotationSet, PseudoInstance};
use crate::confidence::{
    clamp_confidence, confidence_sweep, expand_mask, mean_confidence, ConfidenceError,
    SpatialConfidenceMap,
};
use crate::grid::{Grid, ImageRgb, Mask};
use crate::localcut::{local_cut, resize_depth, LocalCutConfig};
use crate::ncut::{cut_loop, CutLoopOptions, SolverOptions, StopReason};
use crate::refine::{crf_refine, upsample_mask, CrfKernel};
use crate::scalar::Scalar;
use crate::tensorio::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Affinity(#[from] AffinityError),
    #[error(transparent)]
    Confidence(#[from] ConfidenceError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("image {image:?} is not an integer multiple of the {grid:?} patch grid")]
    ImageGridMismatch {
        image: (usize, usize),
        grid: (usize, usize),
    },
    #[error("depth must be finite and within [0, 1]")]
    DepthOutOfRange,
    #[error("manifest not found: {0}")]
    ManifestMissing(PathBuf),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("failed to start worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Runs the full extraction on one image.
///
/// `depth` may be given at any resolution; it is resampled to the patch grid.
/// `image` must tile the patch grid exactly.
pub fn process_image<T: Scalar>(
    image_id: &str,
    features: &FeatureMap<T>,
    depth: &Grid<T>,
    image: &ImageRgb<T>,
    cfg: &PipelineConfig,
) -> Result<PseudoAnnotationSet<T>, PipelineError> {
    cfg.validate()?;
    let grid = (features.height(), features.width());
    let (ih, iw) = image.dims();
    if ih < grid.0 || iw < grid.1 || ih % grid.0 != 0 || iw % grid.1 != 0 {
        return Err(PipelineError::ImageGridMismatch {
            image: (ih, iw),
            grid,
        });
    }
    let in_range = |v: &T| v.is_finite() && *v >= -T::lit(1e-6) && *v <= T::one() + T::lit(1e-6);
    if !depth.as_slice().iter().all(in_range) {
        return Err(PipelineError::DepthOutOfRange);
    }
    let depth = resize_depth(depth, grid.0, grid.1);

    let mut w = cosine_affinity(features)?;
    if cfg.sharpening {
        let importance = spatial_importance(&depth, T::lit(cfg.sigma_gauss), T::lit(cfg.beta));
        w = sharpen(w, &importance, cfg.exponent_combine);
    }
    let w = binarize(w, T::lit(cfg.tau_ncut));

    let lc = LocalCutConfig {
        k: cfg.k,
        tau_knn: T::lit(cfg.tau_knn),
        z_bg: T::lit(cfg.z_bg),
        capacity: cfg.capacity_fn,
    };
    let opts = CutLoopOptions {
        n_iters: cfg.n_iters,
        rest_fraction: cfg.rest_fraction,
        min_active: cfg.min_active_nodes,
        solver: SolverOptions {
            tol: T::lit(cfg.eigen_tol).max(T::epsilon().sqrt()),
            max_iterations: cfg.eigen_max_iterations,
            ..SolverOptions::default()
        },
    };

    let mut found: Vec<(Mask, SpatialConfidenceMap<T>)> = Vec::new();
    let mut sweep_error = None;
    let outcome = cut_loop(&w, &opts, |_, b, e| {
        let (mask, sc) = if !cfg.localcut {
            (
                b.foreground.clone(),
                SpatialConfidenceMap::certain(&b.foreground),
            )
        } else if cfg.confidence {
            match confidence_sweep(
                b,
                e,
                &depth,
                cfg.t_steps,
                T::lit(cfg.tau_knn_min),
                T::lit(cfg.tau_knn),
                &lc,
            ) {
                Ok(s) => (s.mask, clamp_confidence(&s.confidence, T::lit(cfg.sc_min))),
                Err(err) => {
                    sweep_error.get_or_insert(err);
                    (
                        b.foreground.clone(),
                        SpatialConfidenceMap::certain(&b.foreground),
                    )
                }
            }
        } else {
            let m = local_cut(b, e, &depth, &lc).mask;
            let sc = SpatialConfidenceMap::certain(&m);
            (m, sc)
        };
        found.push((mask.clone(), sc));
        mask
    });
    if let Some(err) = sweep_error {
        return Err(err.into());
    }
    if let StopReason::Failed { iteration, error } = &outcome.stop {
        log::warn!("{image_id}: cut loop stopped at iteration {iteration}: {error}");
    }

    let kernel = (cfg.crf && !found.is_empty()).then(|| CrfKernel::new(image, &cfg.crf_params()));
    let mut instances = Vec::with_capacity(found.len());
    for (k, ((proposed, sc), removed)) in found.into_iter().zip(&outcome.removed).enumerate() {
        // the loop substitutes the whole foreground for an empty proposal
        let mask = removed.clone();
        let sc = if proposed == mask {
            sc
        } else {
            SpatialConfidenceMap::certain(&mask)
        };
        let pixel_mask = match &kernel {
            Some(kernel) => {
                let refined = crf_refine(kernel, &upsample_mask::<T>(&mask, ih, iw)).mask;
                if refined.any() {
                    refined
                } else {
                    expand_mask(&mask, ih, iw)
                }
            }
            None => expand_mask(&mask, ih, iw),
        };
        let mean = mean_confidence(&sc, &mask)?;
        instances.push(PseudoInstance {
            instance_index: k as u32,
            bbox: pixel_mask.bbox(),
            mask,
            pixel_mask,
            confidence: sc,
            mean_confidence: mean,
        });
    }
    Ok(PseudoAnnotationSet {
        image_id: image_id.to_string(),
        instances,
    })
}
