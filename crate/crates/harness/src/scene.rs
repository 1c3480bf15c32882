//! Synthetic scenes with planted instances.
//!
//! Every instance is an axis-aligned rectangle of patches. Patch features are a
//! prototype vector plus iid Gaussian noise, depth is a plane per instance (with
//! an optional stepped ramp on one side) and the RGB image is a flat colour per
//! region with a little pixel noise.

use std::fmt;
use std::str::FromStr;

use pseudomask::confidence::expand_mask;
use pseudomask::{FeatureMap, Grid, ImageRgb, Mask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Template {
    /// Two same-prototype rectangles sharing an edge, one at depth 0.3 and one at 0.7.
    AdjacentTwins,
    /// One rectangle on the background.
    SingleBlob,
    /// One rectangle whose last few columns step away in depth.
    RampBlob,
    /// Constant features, depth and colour.
    Blank,
}

impl Template {
    pub const ALL: [Template; 4] = [
        Template::AdjacentTwins,
        Template::SingleBlob,
        Template::RampBlob,
        Template::Blank,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::AdjacentTwins => "adjacent-twins",
            Template::SingleBlob => "single-blob",
            Template::RampBlob => "ramp-blob",
            Template::Blank => "blank",
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Template::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| HarnessError::UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub grid_height: usize,
    pub grid_width: usize,
    /// Pixels per patch side.
    pub stride: usize,
    pub channels: usize,
    pub feature_noise: f64,
    /// Cosine between the background and object prototypes.
    pub prototype_cosine: f64,
    pub pixel_noise: f64,
    pub background_depth: f64,
    /// Patches kept free between instances and the border.
    pub margin: usize,
    pub ramp_columns: usize,
    pub ramp_step: f64,
    /// Render every instance in one colour instead of one colour each.
    pub shared_instance_color: bool,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            grid_height: 32,
            grid_width: 32,
            stride: 8,
            channels: 32,
            feature_noise: 0.05,
            prototype_cosine: -0.25,
            pixel_noise: 0.02,
            background_depth: 0.95,
            margin: 2,
            ramp_columns: 3,
            ramp_step: 0.06,
            shared_instance_color: false,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidParams(m.to_string()));
        if self.grid_height < 2 || self.grid_width < 2 || self.stride == 0 {
            return bad("grid must be at least 2x2 with a positive stride");
        }
        if self.channels < 2 {
            return bad("need at least two feature channels");
        }
        if !(self.feature_noise >= 0.0 && self.pixel_noise >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        if !(self.prototype_cosine > -1.0 && self.prototype_cosine < 1.0) {
            return bad("prototype cosine must lie in (-1, 1)");
        }
        if !(0.0..=1.0).contains(&self.background_depth) {
            return bad("background depth must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl PatchRect {
    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.row && r < self.row + self.height && c >= self.col && c < self.col + self.width
    }

    pub fn to_mask(&self, grid_height: usize, grid_width: usize) -> Mask {
        Mask::from_fn(grid_height, grid_width, |r, c| self.contains(r, c))
    }
}

/// Depth steps of `step` per column over the last `columns` columns of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRamp {
    pub columns: usize,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedInstance {
    pub rect: PatchRect,
    pub prototype: Vec<f64>,
    pub noise_sigma: f64,
    pub depth: f64,
    pub ramp: Option<DepthRamp>,
    pub color: [f64; 3],
}

impl PlantedInstance {
    fn depth_at(&self, col: usize) -> f64 {
        match self.ramp {
            Some(ramp) => {
                let first = self.rect.col + self.rect.width - ramp.columns;
                if col >= first {
                    self.depth + ramp.step * (col - first + 1) as f64
                } else {
                    self.depth
                }
            }
            None => self.depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub id: String,
    pub template: Template,
    pub seed: u64,
    pub image: ImageRgb<f64>,
    pub features: FeatureMap<f64>,
    /// Patch-resolution depth in `[0, 1]`.
    pub depth: Grid<f64>,
    /// Pixel-resolution ground truth, pairwise disjoint.
    pub gt_masks: Vec<Mask>,
    pub gt_patch_masks: Vec<Mask>,
    pub planted: Vec<PlantedInstance>,
}

impl SyntheticScene {
    pub fn grid_dims(&self) -> (usize, usize) {
        (self.depth.height(), self.depth.width())
    }
}

/// Generates one scene; the same `(seed, template, params)` always yields the same scene.
pub fn generate_scene(
    seed: u64,
    template: Template,
    params: &SceneParams,
) -> Result<SyntheticScene, HarnessError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (gh, gw) = (params.grid_height, params.grid_width);
    let (background_proto, object_proto) =
        prototypes(&mut rng, params.channels, params.prototype_cosine);
    let background_color = random_color(&mut rng, None);
    let first_color = random_color(&mut rng, Some(background_color));
    let second_color = if params.shared_instance_color {
        first_color
    } else {
        loop {
            let c = random_color(&mut rng, Some(background_color));
            if l1(c, first_color) >= 0.6 {
                break c;
            }
        }
    };
    let object_colors = [first_color, second_color];

    let object = |k: usize, rect: PatchRect, depth: f64, ramp: Option<DepthRamp>| PlantedInstance {
        rect,
        prototype: object_proto.clone(),
        noise_sigma: params.feature_noise,
        depth,
        ramp,
        color: object_colors[k],
    };
    let planted = match template {
        Template::AdjacentTwins => {
            let h = pick(&mut rng, gh / 4, gh * 7 / 16)?;
            let wa = pick(&mut rng, gw * 3 / 16, gw * 5 / 16)?;
            let wb = pick(&mut rng, gw * 3 / 16, gw * 5 / 16)?;
            let vertical = rng.random_bool(0.5);
            // stacking vertically swaps the roles of the two axes
            let (along, across) = if vertical { (gh, gw) } else { (gw, gh) };
            let off_along = place(&mut rng, along, wa + wb, params.margin)?;
            let off_across = place(&mut rng, across, h, params.margin)?;
            let rect = |start: usize, len: usize| {
                if vertical {
                    PatchRect {
                        row: off_along + start,
                        col: off_across,
                        height: len,
                        width: h,
                    }
                } else {
                    PatchRect {
                        row: off_across,
                        col: off_along + start,
                        height: h,
                        width: len,
                    }
                }
            };
            let (da, db) = if rng.random_bool(0.5) {
                (0.3, 0.7)
            } else {
                (0.7, 0.3)
            };
            vec![
                object(0, rect(0, wa), da, None),
                object(1, rect(wa, wb), db, None),
            ]
        }
        Template::SingleBlob => {
            let h = pick(&mut rng, gh / 4, gh * 7 / 16)?;
            let w = pick(&mut rng, gw / 4, gw * 7 / 16)?;
            let row = place(&mut rng, gh, h, params.margin)?;
            let col = place(&mut rng, gw, w, params.margin)?;
            let depth = rng.random_range(0.3..=0.6);
            vec![object(
                0,
                PatchRect {
                    row,
                    col,
                    height: h,
                    width: w,
                },
                depth,
                None,
            )]
        }
        Template::RampBlob => {
            let h = pick(&mut rng, gh / 4, gh * 3 / 8)?;
            let core = pick(&mut rng, gw * 3 / 16, gw * 9 / 32)?;
            let w = core + params.ramp_columns;
            let row = place(&mut rng, gh, h, params.margin)?;
            let col = place(&mut rng, gw, w, params.margin)?;
            let ramp = DepthRamp {
                columns: params.ramp_columns,
                step: params.ramp_step,
            };
            let far = 0.3 + ramp.step * ramp.columns as f64;
            if far > params.background_depth {
                return Err(HarnessError::InvalidParams(
                    "ramp reaches behind the background".into(),
                ));
            }
            vec![object(
                0,
                PatchRect {
                    row,
                    col,
                    height: h,
                    width: w,
                },
                0.3,
                Some(ramp),
            )]
        }
        Template::Blank => Vec::new(),
    };

    let labels = Grid::from_fn(gh, gw, |r, c| {
        planted.iter().position(|s| s.rect.contains(r, c))
    });
    let noise = if template == Template::Blank {
        0.0
    } else {
        params.feature_noise
    };
    let patches: Vec<Vec<f64>> = labels
        .as_slice()
        .iter()
        .map(|label| {
            let proto = label.map_or(&background_proto, |i| &planted[i].prototype);
            proto
                .iter()
                .map(|&p| p + noise * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let features = FeatureMap::from_patches(gh, gw, &patches).expect("one vector per patch");
    let depth = Grid::from_fn(gh, gw, |r, c| match labels.get(r, c) {
        Some(i) => planted[i].depth_at(c),
        None if template == Template::Blank => 0.5,
        None => params.background_depth,
    });

    let (ih, iw) = (gh * params.stride, gw * params.stride);
    let pixel = Normal::new(0.0, params.pixel_noise.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let pixel_noise = if template == Template::Blank {
        0.0
    } else {
        params.pixel_noise
    };
    let image = ImageRgb::from_fn(ih, iw, |y, x| {
        let base = labels
            .get(y / params.stride, x / params.stride)
            .map_or(background_color, |i| planted[i].color);
        std::array::from_fn(|ch| {
            let n = if pixel_noise > 0.0 {
                pixel.sample(&mut rng)
            } else {
                0.0
            };
            (base[ch] + n).clamp(0.0, 1.0)
        })
    });

    let gt_patch_masks: Vec<Mask> = planted.iter().map(|s| s.rect.to_mask(gh, gw)).collect();
    let gt_masks = gt_patch_masks
        .iter()
        .map(|m| expand_mask(m, ih, iw))
        .collect();
    Ok(SyntheticScene {
        id: format!("{template}_{seed}"),
        template,
        seed,
        image,
        features,
        depth,
        gt_masks,
        gt_patch_masks,
        planted,
    })
}

/// `count` scenes seeded `seed, seed + 1, ...`, generated in parallel.
pub fn generate_corpus(
    seed: u64,
    count: usize,
    template: Template,
    params: &SceneParams,
) -> Result<Vec<SyntheticScene>, HarnessError> {
    use rayon::prelude::*;
    (0..count as u64)
        .into_par_iter()
        .map(|i| generate_scene(seed.wrapping_add(i), template, params))
        .collect()
}

/// Two unit vectors with the requested cosine, in a random orientation.
fn prototypes(rng: &mut ChaCha8Rng, channels: usize, cosine: f64) -> (Vec<f64>, Vec<f64>) {
    let mut gaussian =
        || -> Vec<f64> { (0..channels).map(|_| rng.sample(StandardNormal)).collect() };
    let q0 = normalized(gaussian());
    let mut q1 = gaussian();
    let d = dot(&q0, &q1);
    q1.iter_mut().zip(&q0).for_each(|(v, u)| *v -= d * u);
    let q1 = normalized(q1);
    let s = (1.0 - cosine * cosine).sqrt();
    let p1 = q0
        .iter()
        .zip(&q1)
        .map(|(a, b)| cosine * a + s * b)
        .collect();
    (q0, p1)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn random_color(rng: &mut ChaCha8Rng, avoid: Option<[f64; 3]>) -> [f64; 3] {
    loop {
        let c: [f64; 3] = match avoid {
            None => std::array::from_fn(|_| rng.random_range(0.35..0.65)),
            Some(_) => std::array::from_fn(|_| rng.random_range(0.0..1.0)),
        };
        match avoid {
            Some(a) if l1(c, a) < 0.6 => continue,
            _ => return c,
        }
    }
}

fn l1(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum()
}

fn pick(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Result<usize, HarnessError> {
    let lo = lo.max(1);
    if hi < lo {
        return Err(HarnessError::OverlapInfeasible);
    }
    Ok(rng.random_range(lo..=hi))
}

/// Start offset for a run of `len` patches inside `extent`, keeping `margin` free on both ends.
fn place(
    rng: &mut ChaCha8Rng,
    extent: usize,
    len: usize,
    margin: usize,
) -> Result<usize, HarnessError> {
    if len + 2 * margin > extent {
        return Err(HarnessError::OverlapInfeasible);
    }
    Ok(rng.random_range(margin..=extent - len - margin))
}
