//! Class-agnostic mask AP with 101-point interpolation.

use std::collections::BTreeMap;

use pseudomask::{Mask, PseudoAnnotationSet, Scalar};
use serde::{Deserialize, Serialize};

use crate::scene::SyntheticScene;
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredMask {
    pub mask: Mask,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImagePredictions {
    pub image_id: String,
    pub instances: Vec<ScoredMask>,
}

impl<T: Scalar> From<&PseudoAnnotationSet<T>> for ImagePredictions {
    fn from(set: &PseudoAnnotationSet<T>) -> Self {
        Self {
            image_id: set.image_id.clone(),
            instances: set
                .instances
                .iter()
                .map(|i| ScoredMask {
                    mask: i.pixel_mask.clone(),
                    score: i.mean_confidence.to_f64_lossy(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageGroundTruth {
    pub image_id: String,
    pub masks: Vec<Mask>,
}

impl From<&SyntheticScene> for ImageGroundTruth {
    fn from(s: &SyntheticScene) -> Self {
        Self {
            image_id: s.id.clone(),
            masks: s.gt_masks.clone(),
        }
    }
}

/// Match outcome of one prediction at IoU 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionMatch {
    pub prediction: usize,
    pub score: f64,
    pub gt: Option<usize>,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMatches {
    pub image_id: String,
    pub gt_count: usize,
    pub matches: Vec<PredictionMatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub ap50: f64,
    /// Mean over IoU thresholds 0.50, 0.55, ..., 0.95.
    pub ap_mean: f64,
    /// `(threshold, ap)` for each of the ten thresholds.
    pub per_threshold: Vec<(f64, f64)>,
    pub per_image: Vec<ImageMatches>,
}

pub fn iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Evaluates predictions against ground truth.
///
/// Every prediction image id must appear in `gts`; images without predictions
/// count as all-missed. With no ground-truth instances at all, AP is 0.
pub fn evaluate(
    preds: &[ImagePredictions],
    gts: &[ImageGroundTruth],
) -> Result<EvalResult, HarnessError> {
    let mut gt_by_id: BTreeMap<&str, &ImageGroundTruth> = BTreeMap::new();
    for g in gts {
        if gt_by_id.insert(&g.image_id, g).is_some() {
            return Err(HarnessError::IdMismatch(format!(
                "duplicate ground-truth image {}",
                g.image_id
            )));
        }
    }
    let mut pred_by_id: BTreeMap<&str, Vec<&ScoredMask>> = BTreeMap::new();
    for p in preds {
        if !gt_by_id.contains_key(p.image_id.as_str()) {
            return Err(HarnessError::IdMismatch(format!(
                "no ground truth for image {}",
                p.image_id
            )));
        }
        pred_by_id
            .entry(&p.image_id)
            .or_default()
            .extend(&p.instances);
    }
    for (id, g) in &gt_by_id {
        for (k, m) in g.masks.iter().enumerate() {
            if let Some(p) = pred_by_id
                .get(id)
                .and_then(|ps| ps.iter().find(|p| p.mask.dims() != m.dims()))
            {
                return Err(HarnessError::IdMismatch(format!(
                    "{id}: prediction {:?} vs ground truth {k} {:?}",
                    p.mask.dims(),
                    m.dims()
                )));
            }
        }
    }

    // canonical order inside each image so the result does not depend on input order
    let images: Vec<(&str, Vec<&ScoredMask>, &ImageGroundTruth)> = gt_by_id
        .iter()
        .map(|(id, g)| {
            let mut ps = pred_by_id.get(id).cloned().unwrap_or_default();
            ps.sort_by(|a, b| canonical(a, b));
            (*id, ps, *g)
        })
        .collect();
    let ious: Vec<Vec<Vec<f64>>> = images
        .iter()
        .map(|(_, ps, g)| {
            ps.iter()
                .map(|p| g.masks.iter().map(|m| p.mask.iou(m)).collect())
                .collect()
        })
        .collect();
    let total_gt: usize = gts.iter().map(|g| g.masks.len()).sum();

    let mut per_threshold = Vec::new();
    let mut per_image = Vec::new();
    for t in iou_thresholds() {
        let mut scored: Vec<(f64, usize, usize, bool)> = Vec::new();
        for (img, (id, ps, g)) in images.iter().enumerate() {
            let assigned = greedy_match(&ious[img], g.masks.len(), t);
            if t == 0.5 {
                per_image.push(ImageMatches {
                    image_id: id.to_string(),
                    gt_count: g.masks.len(),
                    matches: assigned
                        .iter()
                        .enumerate()
                        .map(|(k, gt)| PredictionMatch {
                            prediction: k,
                            score: ps[k].score,
                            gt: *gt,
                            iou: gt.map_or(0.0, |j| ious[img][k][j]),
                        })
                        .collect(),
                });
            }
            scored.extend(
                assigned
                    .iter()
                    .enumerate()
                    .map(|(k, gt)| (ps[k].score, img, k, gt.is_some())),
            );
        }
        per_threshold.push((t, average_precision(&mut scored, total_gt)));
    }
    let ap50 = per_threshold[0].1;
    let ap_mean = per_threshold.iter().map(|(_, ap)| ap).sum::<f64>() / per_threshold.len() as f64;
    Ok(EvalResult {
        ap50,
        ap_mean,
        per_threshold,
        per_image,
    })
}

/// Descending score, then larger area, then mask bits.
fn canonical(a: &ScoredMask, b: &ScoredMask) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.mask.count().cmp(&a.mask.count()))
        .then_with(|| a.mask.as_slice().cmp(b.mask.as_slice()))
}

/// Each prediction (already in score order) takes the unmatched ground truth with the highest IoU ≥ `t`.
fn greedy_match(ious: &[Vec<f64>], gt_count: usize, t: f64) -> Vec<Option<usize>> {
    let mut taken = vec![false; gt_count];
    ious.iter()
        .map(|row| {
            let mut best: Option<(usize, f64)> = None;
            for (j, &iou) in row.iter().enumerate() {
                if taken[j] || iou < t {
                    continue;
                }
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((j, iou));
                }
            }
            best.map(|(j, _)| {
                taken[j] = true;
                j
            })
        })
        .collect()
}

/// 101-point interpolated AP from `(score, image, index, is_tp)` rows.
fn average_precision(rows: &mut [(f64, usize, usize, bool)], total_gt: usize) -> f64 {
    if total_gt == 0 {
        return 0.0;
    }
    rows.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(rows.len());
    let mut recall = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        tp += row.3 as usize;
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / total_gt as f64);
    }
    // precision envelope: best precision at any higher recall
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let idx = recall.partition_point(|&x| x < r);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    sum / 101.0
}
