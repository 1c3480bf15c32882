//! Corpus directories on disk and evaluation of a pipeline output directory.
//!
//! A corpus directory holds `images/`, `features/`, `depth/`, a pipeline
//! manifest and one ground-truth line per scene.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use pseudomask::pipeline::{ManifestEntry, ANNOTATIONS_FILE};
use pseudomask::tensorio::{
    decode_rle, encode_rle, read_jsonl, write_jsonl, write_png, write_tensor, AnnotationRecord,
};
use pseudomask::{RleMask, TensorFile};
use serde::{Deserialize, Serialize};

use crate::eval::{evaluate, EvalResult, ImageGroundTruth, ImagePredictions, ScoredMask};
use crate::scene::SyntheticScene;
use crate::HarnessError;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const GROUND_TRUTH_FILE: &str = "gt.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub image_id: String,
    pub template: String,
    pub seed: u64,
    pub masks: Vec<RleMask>,
}

/// Writes every scene and returns the manifest path.
pub fn write_corpus(dir: &Path, scenes: &[SyntheticScene]) -> Result<PathBuf, HarnessError> {
    for sub in ["images", "features", "depth"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let mut manifest = Vec::with_capacity(scenes.len());
    let mut truth = Vec::with_capacity(scenes.len());
    for s in scenes {
        let entry = ManifestEntry {
            image: format!("images/{}.png", s.id),
            features: format!("features/{}.npy", s.id),
            depth: format!("depth/{}.npy", s.id),
            image_id: Some(s.id.clone()),
        };
        write_png(&s.image, dir.join(&entry.image))?;
        write_tensor(
            &TensorFile::from_features(&s.features),
            dir.join(&entry.features),
        )?;
        write_tensor(&TensorFile::from_grid(&s.depth), dir.join(&entry.depth))?;
        manifest.push(entry);
        truth.push(GroundTruthRecord {
            image_id: s.id.clone(),
            template: s.template.to_string(),
            seed: s.seed,
            masks: s
                .gt_masks
                .iter()
                .map(encode_rle)
                .collect::<Result<_, _>>()?,
        });
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    write_jsonl(&manifest_path, &manifest)?;
    write_jsonl(dir.join(GROUND_TRUTH_FILE), &truth)?;
    Ok(manifest_path)
}

pub fn read_ground_truth(dir: &Path) -> Result<Vec<ImageGroundTruth>, HarnessError> {
    let rows: Vec<GroundTruthRecord> = read_jsonl(dir.join(GROUND_TRUTH_FILE))?;
    rows.into_iter()
        .map(|r| {
            let masks = r.masks.iter().map(decode_rle).collect::<Result<_, _>>()?;
            Ok(ImageGroundTruth {
                image_id: r.image_id,
                masks,
            })
        })
        .collect()
}

/// Groups the annotation lines of a pipeline output directory by image.
pub fn read_predictions(dir: &Path) -> Result<Vec<ImagePredictions>, HarnessError> {
    let rows: Vec<AnnotationRecord> = read_jsonl(dir.join(ANNOTATIONS_FILE))?;
    let mut by_id: BTreeMap<String, Vec<ScoredMask>> = BTreeMap::new();
    for r in rows {
        let mask = decode_rle(&r.mask)?;
        by_id.entry(r.image_id).or_default().push(ScoredMask {
            mask,
            score: r.mean_confidence,
        });
    }
    Ok(by_id
        .into_iter()
        .map(|(image_id, instances)| ImagePredictions {
            image_id,
            instances,
        })
        .collect())
}

pub fn evaluate_dirs(pred_dir: &Path, gt_dir: &Path) -> Result<EvalResult, HarnessError> {
    evaluate(&read_predictions(pred_dir)?, &read_ground_truth(gt_dir)?)
}
