//! Agreement of LocalCut masks across a sweep of neighbour thresholds.

use rayon::prelude::*;

use crate::grid::{bilinear_taps, Grid, Mask};
use crate::localcut::{LocalCutConfig, LocalCutter, SeedConflict};
use crate::ncut::{Bipartition, EigenSolution};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfidenceError {
    #[error("mean confidence of an empty mask is undefined")]
    EmptyMask,
    #[error("confidence grid {confidence:?} does not match mask grid {mask:?}")]
    ShapeMismatch {
        confidence: (usize, usize),
        mask: (usize, usize),
    },
    #[error("sweep needs at least two steps and tau_min < tau_max")]
    InvalidSweep,
}

/// Per-patch confidence defined on `region`; values outside the region are stored as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialConfidenceMap<T> {
    values: Grid<T>,
    region: Mask,
}

impl<T: Scalar> SpatialConfidenceMap<T> {
    /// Zeroes every value outside `region`.
    pub fn new(mut values: Grid<T>, region: Mask) -> Option<Self> {
        if values.dims() != region.dims() {
            return None;
        }
        for (v, &r) in values.as_mut_slice().iter_mut().zip(region.as_slice()) {
            if !r {
                *v = T::zero();
            }
        }
        Some(Self { values, region })
    }

    /// Full confidence on `region`.
    pub fn certain(region: &Mask) -> Self {
        Self {
            values: region.to_grid(),
            region: region.clone(),
        }
    }

    pub fn values(&self) -> &Grid<T> {
        &self.values
    }

    pub fn region(&self) -> &Mask {
        &self.region
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    /// Confidence as a blending weight: the stored value inside the region, 0 outside.
    pub fn blend_weight(&self, node: usize) -> T {
        self.values.as_slice()[node]
    }

    /// Confidence as a loss weight: the stored value inside the region, 1 outside.
    pub fn loss_weight(&self, node: usize) -> T {
        if self.region.contains(node) {
            self.values.as_slice()[node]
        } else {
            T::one()
        }
    }

    /// Resamples to `height × width`.
    ///
    /// The region is expanded by nearest cell; values are bilinear over region cells only,
    /// renormalized by the in-region tap weight, so a constant map stays exactly constant.
    pub fn resize(&self, height: usize, width: usize) -> Self {
        let region = expand_mask(&self.region, height, width);
        let (h, w) = self.values.dims();
        let sy = T::from_usize_lossy(h) / T::from_usize_lossy(height);
        let sx = T::from_usize_lossy(w) / T::from_usize_lossy(width);
        let half = T::lit(0.5);
        let values = Grid::from_fn(height, width, |r, c| {
            if !region.get(r, c) {
                return T::zero();
            }
            let (y0, y1, fy) = bilinear_taps((T::from_usize_lossy(r) + half) * sy - half, h);
            let (x0, x1, fx) = bilinear_taps((T::from_usize_lossy(c) + half) * sx - half, w);
            let taps = [
                (y0, x0, (T::one() - fy) * (T::one() - fx)),
                (y0, x1, (T::one() - fy) * fx),
                (y1, x0, fy * (T::one() - fx)),
                (y1, x1, fy * fx),
            ];
            let (mut num, mut den) = (T::zero(), T::zero());
            for (y, x, wt) in taps {
                if self.region.get(y, x) {
                    num += wt * self.values.get(y, x);
                    den += wt;
                }
            }
            if den > T::zero() {
                num / den
            } else {
                // the nearest cell is in the region by construction
                self.values.get((r * h) / height, (c * w) / width)
            }
        });
        Self { values, region }
    }
}

/// Nearest-cell expansion of a mask to a finer (or coarser) grid.
pub fn expand_mask(m: &Mask, height: usize, width: usize) -> Mask {
    let (h, w) = m.dims();
    Mask::from_fn(height, width, |r, c| {
        m.get((r * h) / height, (c * w) / width)
    })
}

/// `T` thresholds spaced linearly over `[tau_min, tau_max]`, with both ends exact.
pub fn sweep_thresholds<T: Scalar>(steps: usize, tau_min: T, tau_max: T) -> Vec<T> {
    let last = T::from_usize_lossy(steps - 1);
    let mut taus: Vec<T> = (0..steps)
        .map(|i| tau_min + (tau_max - tau_min) * T::from_usize_lossy(i) / last)
        .collect();
    taus[steps - 1] = tau_max;
    taus
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome<T> {
    /// The cut at `tau_max`.
    pub mask: Mask,
    /// Unclamped confidence on the union of all cuts.
    pub confidence: SpatialConfidenceMap<T>,
    /// Number of cuts containing each patch.
    pub counts: Vec<u32>,
    pub steps: usize,
    pub conflict: Option<SeedConflict>,
}

/// Runs LocalCut at `steps` thresholds and averages the binary cuts.
///
/// On a seed conflict the semantic foreground is returned with confidence 1.
pub fn confidence_sweep<T: Scalar>(
    b: &Bipartition,
    e: &EigenSolution<T>,
    depth: &Grid<T>,
    steps: usize,
    tau_min: T,
    tau_max: T,
    cfg: &LocalCutConfig<T>,
) -> Result<SweepOutcome<T>, ConfidenceError> {
    if steps < 2 || !(tau_min < tau_max) {
        return Err(ConfidenceError::InvalidSweep);
    }
    let cutter = LocalCutter::prepare(b, e, depth, cfg);
    if let Some(conflict) = cutter.conflict() {
        let mask = b.foreground.clone();
        let counts = mask
            .as_slice()
            .iter()
            .map(|&m| if m { steps as u32 } else { 0 })
            .collect();
        return Ok(SweepOutcome {
            confidence: SpatialConfidenceMap::certain(&mask),
            mask,
            counts,
            steps,
            conflict: Some(conflict),
        });
    }

    let taus = sweep_thresholds(steps, tau_min, tau_max);
    let cuts: Vec<Mask> = taus
        .par_iter()
        .map(|&tau| cutter.cut_at(tau).mask)
        .collect();
    let (h, w) = b.foreground.dims();
    let mut counts = vec![0u32; h * w];
    for cut in &cuts {
        for node in cut.nodes() {
            counts[node] += 1;
        }
    }
    let region =
        Mask::from_vec(h, w, counts.iter().map(|&c| c > 0).collect()).expect("one count per node");
    let denom = T::from_usize_lossy(steps);
    let values = Grid::from_vec(
        h,
        w,
        counts
            .iter()
            .map(|&c| T::from_usize_lossy(c as usize) / denom)
            .collect(),
    )
    .expect("one count per node");
    let mask = cuts.into_iter().last().expect("at least two steps");
    Ok(SweepOutcome {
        mask,
        confidence: SpatialConfidenceMap::new(values, region).expect("same dims"),
        counts,
        steps,
        conflict: None,
    })
}

/// Raises every in-region value to at least `sc_min`.
pub fn clamp_confidence<T: Scalar>(
    sc: &SpatialConfidenceMap<T>,
    sc_min: T,
) -> SpatialConfidenceMap<T> {
    let mut values = sc.values.clone();
    for (v, &r) in values.as_mut_slice().iter_mut().zip(sc.region.as_slice()) {
        if r && *v < sc_min {
            *v = sc_min;
        }
    }
    SpatialConfidenceMap {
        values,
        region: sc.region.clone(),
    }
}

/// Arithmetic mean of the confidence over the mask support.
pub fn mean_confidence<T: Scalar>(
    sc: &SpatialConfidenceMap<T>,
    m: &Mask,
) -> Result<T, ConfidenceError> {
    if sc.dims() != m.dims() {
        return Err(ConfidenceError::ShapeMismatch {
            confidence: sc.dims(),
            mask: m.dims(),
        });
    }
    let count = m.count();
    if count == 0 {
        return Err(ConfidenceError::EmptyMask);
    }
    let sum: T = m.nodes().map(|i| sc.values.as_slice()[i]).sum();
    Ok(sum / T::from_usize_lossy(count))
}
