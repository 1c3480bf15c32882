use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{process_image, PipelineConfig, PipelineError};
use crate::augment::PseudoAnnotationSet;
use crate::grid::ImageRgb;
use crate::tensorio::{
    encode_rle, read_png, read_tensor, write_jsonl, write_png, write_tensor, AnnotationRecord,
    TensorFile,
};

/// One manifest line. Paths are relative to the manifest's directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: String,
    pub features: String,
    pub depth: String,
    /// Defaults to the image file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_id: Option<String>,
}

impl ManifestEntry {
    pub fn resolved_id(&self) -> String {
        self.image_id.clone().unwrap_or_else(|| {
            Path::new(&self.image)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub image_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub images: usize,
    pub processed: usize,
    pub masks: usize,
    pub failures: Vec<FailureRecord>,
    pub wall_time_s: f64,
    pub config: PipelineConfig,
}

pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RESOLVED_CONFIG_FILE: &str = "config.txt";

/// Processes every manifest entry and writes annotations, confidence tensors, optional overlays and a summary.
///
/// Output files other than the summary's wall time do not depend on `worker_count`.
pub fn run_batch(
    manifest: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<BatchSummary, PipelineError> {
    cfg.validate()?;
    let start = Instant::now();
    if !manifest.is_file() {
        return Err(PipelineError::ManifestMissing(manifest.to_path_buf()));
    }
    let entries = read_manifest(manifest)?;
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    fs::create_dir_all(out_dir.join("confidence"))?;
    if cfg.overlays {
        fs::create_dir_all(out_dir.join("overlays"))?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.worker_count)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    let results: Vec<(String, Result<Vec<AnnotationRecord>, PipelineError>)> = pool.install(|| {
        entries
            .par_iter()
            .map(|entry| {
                let id = entry.resolved_id();
                let res = extract_one(entry, &id, &base, out_dir, cfg);
                if let Err(e) = &res {
                    log::error!("{id}: {e}");
                }
                (id, res)
            })
            .collect()
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (id, res) in results {
        match res {
            Ok(r) => records.extend(r),
            Err(e) => failures.push(FailureRecord {
                image_id: id,
                error: e.to_string(),
            }),
        }
    }
    records.sort_by(|a, b| {
        a.image_id
            .cmp(&b.image_id)
            .then(a.instance_index.cmp(&b.instance_index))
    });
    failures.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    write_jsonl(out_dir.join(ANNOTATIONS_FILE), &records)?;

    let summary = BatchSummary {
        images: entries.len(),
        processed: entries.len() - failures.len(),
        masks: records.len(),
        failures,
        wall_time_s: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };
    fs::write(
        out_dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary)?,
    )?;
    fs::write(out_dir.join(RESOLVED_CONFIG_FILE), cfg.to_kv_string())?;
    Ok(summary)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, PipelineError> {
    let text = fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry =
            serde_json::from_str(line).map_err(|e| PipelineError::Manifest {
                line: i + 1,
                message: e.to_string(),
            })?;
        entries.push(entry);
    }
    Ok(entries)
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn extract_one(
    entry: &ManifestEntry,
    id: &str,
    base: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<Vec<AnnotationRecord>, PipelineError> {
    let features = read_tensor(resolve(base, &entry.features))?.to_features::<f64>()?;
    let depth = read_tensor(resolve(base, &entry.depth))?.to_grid::<f64>()?;
    let image = read_png::<f64>(resolve(base, &entry.image))?;
    let set = process_image(id, &features, &depth, &image, cfg)?;

    let mut records = Vec::with_capacity(set.instances.len());
    for inst in &set.instances {
        let rel = format!("confidence/{id}_{}.npy", inst.instance_index);
        write_tensor(
            &TensorFile::from_grid(inst.confidence.values()),
            out_dir.join(&rel),
        )?;
        records.push(AnnotationRecord {
            image_id: id.to_string(),
            instance_index: inst.instance_index,
            mask: encode_rle(&inst.pixel_mask)?,
            bbox: inst.bbox,
            mean_confidence: inst.mean_confidence,
            confidence_map_path: rel,
        });
    }
    if cfg.overlays {
        write_png(
            &overlay(&image, &set),
            out_dir.join("overlays").join(format!("{id}.png")),
        )?;
    }
    Ok(records)
}

const PALETTE: [[f64; 3]; 6] = [
    [0.9, 0.1, 0.1],
    [0.1, 0.7, 0.2],
    [0.1, 0.3, 0.9],
    [0.9, 0.8, 0.1],
    [0.8, 0.2, 0.8],
    [0.1, 0.8, 0.8],
];

/// Instance masks tinted over the image.
pub fn overlay(image: &ImageRgb<f64>, set: &PseudoAnnotationSet<f64>) -> ImageRgb<f64> {
    let mut out = image.clone();
    for inst in &set.instances {
        let color = PALETTE[inst.instance_index as usize % PALETTE.len()];
        for node in inst.pixel_mask.nodes() {
            let (r, c) = (node / out.width(), node % out.width());
            let p = out.get(r, c);
            out.set(
                r,
                c,
                std::array::from_fn(|ch| 0.5 * p[ch] + 0.5 * color[ch]),
            );
        }
    }
    out
}
