//! Confidence-aware copy-paste selection, alpha blending and the weighted BCE loss.

use crate::confidence::{expand_mask, SpatialConfidenceMap};
use crate::grid::{Grid, ImageRgb, Mask};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AugmentError {
    #[error("pasted instance is empty at scale {scale}")]
    DegenerateScale { scale: f64 },
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
}

/// One extracted instance with its confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoInstance<T> {
    pub instance_index: u32,
    /// Patch-resolution mask.
    pub mask: Mask,
    /// Image-resolution mask (after optional refinement).
    pub pixel_mask: Mask,
    /// Clamped confidence at patch resolution.
    pub confidence: SpatialConfidenceMap<T>,
    pub mean_confidence: T,
    /// `[x, y, w, h]` of `pixel_mask`.
    pub bbox: [u32; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoAnnotationSet<T> {
    pub image_id: String,
    pub instances: Vec<PseudoInstance<T>>,
}

/// The `count` most confident instances; ties go to the larger mask, then the lower index.
pub fn select_confident<T: Scalar>(
    set: &PseudoAnnotationSet<T>,
    count: usize,
) -> Vec<&PseudoInstance<T>> {
    let mut order: Vec<&PseudoInstance<T>> = set.instances.iter().collect();
    order.sort_by(|a, b| {
        b.mean_confidence
            .partial_cmp(&a.mean_confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.mask.count().cmp(&a.mask.count()))
            .then(a.instance_index.cmp(&b.instance_index))
    });
    order.truncate(count);
    order
}

/// Where a pasted instance landed.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub source: Option<(String, u32)>,
    pub scale: f64,
    /// `(dx, dy)` in destination pixels.
    pub offset: (i64, i64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeImage<T> {
    pub image: ImageRgb<T>,
    pub provenance: Vec<Placement>,
}

impl<T> CompositeImage<T> {
    /// Labels the most recent placement with its source instance.
    pub fn with_source(mut self, image_id: impl Into<String>, instance_index: u32) -> Self {
        if let Some(last) = self.provenance.last_mut() {
            last.source = Some((image_id.into(), instance_index));
        }
        self
    }
}

/// Pastes the instance of `src` onto `dst`, blending each pixel by its confidence.
///
/// The source is scaled about its origin and shifted by `offset`; destination pixel `(y, x)`
/// reads source pixel `floor((y - dy + 0.5) / scale)`, `floor((x - dx + 0.5) / scale)`.
/// The patch mask and confidence are brought to source resolution first: the mask by nearest
/// cell, the confidence by region-normalized bilinear interpolation.
pub fn alpha_blend_paste<T: Scalar>(
    src: &ImageRgb<T>,
    dst: &ImageRgb<T>,
    mask: &Mask,
    sc: &SpatialConfidenceMap<T>,
    scale: T,
    offset: (i64, i64),
) -> Result<CompositeImage<T>, AugmentError> {
    if sc.dims() != mask.dims() {
        return Err(AugmentError::ShapeMismatch {
            expected: mask.dims(),
            actual: sc.dims(),
        });
    }
    let (sh, sw) = src.dims();
    let alpha = source_alpha(mask, sc, sh, sw);
    let mut out = dst.clone();
    let mut pasted = 0usize;
    let half = T::lit(0.5);
    let (dh, dw) = dst.dims();
    for y in 0..dh {
        let sy = ((T::from_usize_lossy(y) - T::lit(offset.1 as f64) + half) / scale).floor();
        if sy < T::zero() || sy >= T::from_usize_lossy(sh) {
            continue;
        }
        let sy = sy.to_usize().expect("checked range");
        for x in 0..dw {
            let sx = ((T::from_usize_lossy(x) - T::lit(offset.0 as f64) + half) / scale).floor();
            if sx < T::zero() || sx >= T::from_usize_lossy(sw) {
                continue;
            }
            let sx = sx.to_usize().expect("checked range");
            let Some(a) = alpha.get(sy, sx) else { continue };
            pasted += 1;
            let s = src.get(sy, sx);
            let d = dst.get(y, x);
            out.set(y, x, std::array::from_fn(|ch| blend(a, s[ch], d[ch])));
        }
    }
    if pasted == 0 {
        return Err(AugmentError::DegenerateScale {
            scale: scale.to_f64_lossy(),
        });
    }
    Ok(CompositeImage {
        image: out,
        provenance: vec![Placement {
            source: None,
            scale: scale.to_f64_lossy(),
            offset,
        }],
    })
}

/// `a·s + (1 - a)·d`, written so rounding never leaves `[min(s, d), max(s, d)]`.
#[inline]
fn blend<T: Scalar>(a: T, s: T, d: T) -> T {
    if a >= T::one() {
        s
    } else if a <= T::zero() {
        d
    } else {
        d + a * (s - d)
    }
}

/// Blend weight per source pixel; `None` outside the instance.
fn source_alpha<T: Scalar>(
    mask: &Mask,
    sc: &SpatialConfidenceMap<T>,
    h: usize,
    w: usize,
) -> Grid<Option<T>> {
    let pixel_mask = expand_mask(mask, h, w);
    let up = sc.resize(h, w);
    Grid::from_fn(h, w, |r, c| {
        pixel_mask.get(r, c).then(|| up.values().get(r, c))
    })
}

/// Binary cross-entropy weighted by confidence; returns the loss and its gradient w.r.t. `pred`.
///
/// Predictions are clamped to `[1e-7, 1 - 1e-7]`. Pixels outside the confidence region weigh 1.
pub fn soft_target_bce<T: Scalar>(
    pred: &Grid<T>,
    target: &Mask,
    sc: &SpatialConfidenceMap<T>,
) -> Result<(T, Grid<T>), AugmentError> {
    if target.dims() != pred.dims() {
        return Err(AugmentError::ShapeMismatch {
            expected: pred.dims(),
            actual: target.dims(),
        });
    }
    if sc.dims() != pred.dims() {
        return Err(AugmentError::ShapeMismatch {
            expected: pred.dims(),
            actual: sc.dims(),
        });
    }
    let eps = T::lit(1e-7);
    let mut loss = T::zero();
    let grad: Vec<T> = pred
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let p = p.clamp_to(eps, T::one() - eps);
            let t = if target.as_slice()[i] {
                T::one()
            } else {
                T::zero()
            };
            let w = sc.loss_weight(i);
            loss += w * bce(p, t);
            w * (p - t) / (p * (T::one() - p))
        })
        .collect();
    let (h, w) = pred.dims();
    Ok((
        loss,
        Grid::from_vec(h, w, grad).expect("one gradient per pixel"),
    ))
}

#[inline]
fn bce<T: Scalar>(p: T, t: T) -> T {
    -(t * p.ln() + (T::one() - t) * (T::one() - p).ln())
}
