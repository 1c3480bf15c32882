//! Two-label dense CRF refinement of a soft mask at a reduced working resolution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{Grid, ImageRgb, Mask};
use crate::scalar::Scalar;

/// Bilinear upsampling of a patch mask to pixel resolution.
pub fn upsample_mask<T: Scalar>(m: &Mask, height: usize, width: usize) -> Grid<T> {
    m.to_grid::<T>().resize_bilinear(height, width)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrfParams {
    pub iterations: usize,
    /// Longer side of the working grid; images smaller than this are used as is.
    pub max_side: usize,
    pub gaussian_sxy: f64,
    pub gaussian_weight: f64,
    pub bilateral_sxy: f64,
    /// Colour bandwidth on the 0..255 scale.
    pub bilateral_srgb: f64,
    pub bilateral_weight: f64,
    pub prob_clamp: f64,
}

impl Default for CrfParams {
    fn default() -> Self {
        Self {
            iterations: 10,
            max_side: 64,
            gaussian_sxy: 3.0,
            gaussian_weight: 3.0,
            bilateral_sxy: 30.0,
            bilateral_srgb: 13.0,
            bilateral_weight: 10.0,
            prob_clamp: 1e-3,
        }
    }
}

/// Working-grid side lengths for an image, never upscaling.
pub fn working_dims(height: usize, width: usize, max_side: usize) -> (usize, usize) {
    let long = height.max(width);
    if long <= max_side {
        return (height, width);
    }
    let scale = max_side as f64 / long as f64;
    (
        ((height as f64 * scale).round() as usize).max(1),
        ((width as f64 * scale).round() as usize).max(1),
    )
}

/// Above this many working pixels the pairwise kernel is evaluated on the fly instead of stored.
const DENSE_LIMIT: usize = 4096;

/// Symmetrically normalized pairwise kernel for one image, reusable across masks.
#[derive(Debug, Clone)]
pub struct CrfKernel {
    params: CrfParams,
    full: (usize, usize),
    work: (usize, usize),
    /// Working-resolution RGB on the 0..255 scale.
    rgb: Vec<[f32; 3]>,
    /// Spatial factors of both kernels indexed by `|dy| * width + |dx|`.
    spatial_g: Vec<f32>,
    spatial_b: Vec<f32>,
    norm_g: Vec<f32>,
    norm_b: Vec<f32>,
    /// `Σ_j K_ij` of the combined kernel.
    row_sums: Vec<f32>,
    /// Combined `w_g k̃_g + w_b k̃_b`, row-major, when small enough to store.
    dense: Option<Vec<f32>>,
}

impl CrfKernel {
    pub fn new<T: Scalar>(img: &ImageRgb<T>, params: &CrfParams) -> Self {
        let full = img.dims();
        let work = working_dims(full.0, full.1, params.max_side.max(1));
        let small = if work == full {
            img.clone()
        } else {
            img.resize_bilinear(work.0, work.1)
        };
        let rgb: Vec<[f32; 3]> = small
            .pixels()
            .iter()
            .map(|p| p.map(|v| (v.to_f64_lossy() * 255.0) as f32))
            .collect();
        let (h, w) = work;
        let table = |sigma: f64, weight: f64| -> Vec<f32> {
            let s = sigma as f32;
            (0..h * w)
                .map(|k| {
                    let (dy, dx) = ((k / w) as f32, (k % w) as f32);
                    if weight != 0.0 {
                        (-(dy * dy + dx * dx) / (2.0 * s * s)).exp()
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        let mut k = Self {
            params: *params,
            full,
            work,
            rgb,
            spatial_g: table(params.gaussian_sxy, params.gaussian_weight),
            spatial_b: table(params.bilateral_sxy, params.bilateral_weight),
            norm_g: Vec::new(),
            norm_b: Vec::new(),
            row_sums: Vec::new(),
            dense: None,
        };
        let n = h * w;
        let inv = |s: f32| if s > 0.0 { 1.0 / s.sqrt() } else { 0.0 };

        if n <= DENSE_LIMIT {
            // raw bilateral values first, normalized in place once the row sums are known
            let mut dense = vec![0.0f32; n * n];
            let two_sr2 = 2.0 * (params.bilateral_srgb as f32).powi(2);
            // upper triangle, then mirrored: the kernel is symmetric
            dense.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                let (ri, ci) = (i / w, i % w);
                let a = k.rgb[i];
                for rj in ri..h {
                    let base = (rj - ri) * w;
                    for cj in if rj == ri { ci + 1 } else { 0 }..w {
                        let spatial = k.spatial_b[base + ci.abs_diff(cj)];
                        if spatial > 0.0 {
                            let c = k.rgb[rj * w + cj];
                            let dc = (a[0] - c[0]).powi(2)
                                + (a[1] - c[1]).powi(2)
                                + (a[2] - c[2]).powi(2);
                            row[rj * w + cj] = spatial * (-dc / two_sr2).exp();
                        }
                    }
                }
            });
            // blocked so both sides of the copy stay in cache
            const TILE: usize = 64;
            for i0 in (0..n).step_by(TILE) {
                for j0 in (0..=i0).step_by(TILE) {
                    for i in i0..(i0 + TILE).min(n) {
                        for j in j0..(j0 + TILE).min(i) {
                            dense[i * n + j] = dense[j * n + i];
                        }
                    }
                }
            }
            let sums: Vec<(f32, f32)> = dense
                .par_chunks(n)
                .enumerate()
                .map(|(i, row)| {
                    let (ri, ci) = (i / w, i % w);
                    let sg: f32 = (0..h)
                        .map(|rj| {
                            let base = ri.abs_diff(rj) * w;
                            (0..w)
                                .map(|cj| k.spatial_g[base + ci.abs_diff(cj)])
                                .sum::<f32>()
                        })
                        .sum();
                    (sg - k.spatial_g[0], row.iter().sum())
                })
                .collect();
            k.norm_g = sums.iter().map(|s| inv(s.0)).collect();
            k.norm_b = sums.iter().map(|s| inv(s.1)).collect();
            let (wg, wb) = (
                params.gaussian_weight as f32,
                params.bilateral_weight as f32,
            );
            let kr = &k;
            k.row_sums = dense
                .par_chunks_mut(n)
                .enumerate()
                .map(|(i, row)| {
                    let (ri, ci) = (i / w, i % w);
                    let (gi, bi) = (wg * kr.norm_g[i], wb * kr.norm_b[i]);
                    for (rj, cells) in row.chunks_mut(w).enumerate() {
                        let base = ri.abs_diff(rj) * w;
                        for (cj, v) in cells.iter_mut().enumerate() {
                            let j = rj * w + cj;
                            let g = kr.spatial_g[base + ci.abs_diff(cj)];
                            *v = gi * g * kr.norm_g[j] + bi * *v * kr.norm_b[j];
                        }
                    }
                    row[i] = 0.0;
                    row.iter().sum()
                })
                .collect();
            k.dense = Some(dense);
        } else {
            let sums: Vec<(f32, f32)> = (0..n)
                .into_par_iter()
                .map(|i| {
                    (0..n)
                        .filter(|&j| j != i)
                        .map(|j| k.raw(i, j))
                        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
                })
                .collect();
            k.norm_g = sums.iter().map(|s| inv(s.0)).collect();
            k.norm_b = sums.iter().map(|s| inv(s.1)).collect();
            k.row_sums = k.message(&vec![1.0; n]);
        }
        k
    }

    pub fn working_dims(&self) -> (usize, usize) {
        self.work
    }

    pub fn image_dims(&self) -> (usize, usize) {
        self.full
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        let w = self.work.1;
        (i / w).abs_diff(j / w) * w + (i % w).abs_diff(j % w)
    }

    /// Unnormalized spatial and bilateral kernel values between working pixels.
    #[inline]
    fn raw(&self, i: usize, j: usize) -> (f32, f32) {
        let o = self.offset(i, j);
        let g = self.spatial_g[o];
        let sb = self.spatial_b[o];
        let b = if sb > 0.0 {
            let (a, c) = (self.rgb[i], self.rgb[j]);
            let dc = (a[0] - c[0]).powi(2) + (a[1] - c[1]).powi(2) + (a[2] - c[2]).powi(2);
            let sr = self.params.bilateral_srgb as f32;
            sb * (-dc / (2.0 * sr * sr)).exp()
        } else {
            0.0
        };
        (g, b)
    }

    fn combined(&self, i: usize, j: usize) -> f32 {
        let (g, b) = self.raw(i, j);
        let p = &self.params;
        p.gaussian_weight as f32 * g * self.norm_g[i] * self.norm_g[j]
            + p.bilateral_weight as f32 * b * self.norm_b[i] * self.norm_b[j]
    }

    /// `out_i = Σ_j K_ij q_j` over the combined normalized kernel.
    fn message(&self, q: &[f32]) -> Vec<f32> {
        let n = q.len();
        match &self.dense {
            Some(k) => k.par_chunks(n).map(|row| dot(row, q)).collect(),
            None => (0..n)
                .into_par_iter()
                .map(|i| {
                    (0..n)
                        .filter(|&j| j != i)
                        .map(|j| self.combined(i, j) * q[j])
                        .sum()
                })
                .collect(),
        }
    }
}

/// Dot product with eight independent partial sums so it vectorizes; the order is fixed.
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f32>() + tail
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfOutput<T> {
    /// Refined mask at image resolution.
    pub mask: Mask,
    /// Foreground marginal at working resolution.
    pub marginal: Grid<T>,
    /// Largest `|q_fg + q_bg - 1|` seen over all iterations.
    pub max_normalization_error: f64,
}

/// Mean-field inference with Potts compatibility; unaries are `-log` of the clamped soft mask.
pub fn crf_refine<T: Scalar>(kernel: &CrfKernel, soft: &Grid<T>) -> CrfOutput<T> {
    assert_eq!(soft.dims(), kernel.full, "soft mask must match the image");
    let (wh, ww) = kernel.work;
    let p = &kernel.params;
    let small = if kernel.work == kernel.full {
        soft.clone()
    } else {
        soft.resize_bilinear(wh, ww)
    };
    let eps = p.prob_clamp as f32;
    let prob: Vec<f32> = small
        .as_slice()
        .iter()
        .map(|v| (v.to_f64_lossy() as f32).clamp(eps, 1.0 - eps))
        .collect();
    let u_fg: Vec<f32> = prob.iter().map(|&q| -q.ln()).collect();
    let u_bg: Vec<f32> = prob.iter().map(|&q| -(1.0 - q).ln()).collect();

    let mut q_fg = prob.clone();
    let mut max_err = 0.0f64;
    let pairwise = p.gaussian_weight != 0.0 || p.bilateral_weight != 0.0;
    if pairwise {
        for _ in 0..p.iterations {
            // q_bg = 1 - q_fg, so its message is the row sum minus the foreground message
            let m_fg = kernel.message(&q_fg);
            let mut err = 0.0f32;
            for i in 0..q_fg.len() {
                // Potts: a label pays for the mass its neighbours put on the other label
                let e_fg = u_fg[i] + (kernel.row_sums[i] - m_fg[i]);
                let e_bg = u_bg[i] + m_fg[i];
                let lo = e_fg.min(e_bg);
                let a = (lo - e_fg).exp();
                let b = (lo - e_bg).exp();
                let (fg, bg) = (a / (a + b), b / (a + b));
                err = err.max((fg + bg - 1.0).abs());
                q_fg[i] = fg;
            }
            max_err = max_err.max(err as f64);
        }
    }

    let marginal = Grid::from_vec(wh, ww, q_fg.iter().map(|&v| T::lit(v as f64)).collect())
        .expect("working grid");
    let (fh, fw) = kernel.full;
    let full = if kernel.work == kernel.full {
        marginal.clone()
    } else {
        marginal.resize_bilinear(fh, fw)
    };
    CrfOutput {
        mask: full.threshold(T::lit(0.5)),
        marginal,
        max_normalization_error: max_err,
    }
}
