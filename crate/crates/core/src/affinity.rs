//! Semantic affinity graph over feature patches and its depth-driven sharpening.
//!
//! The pipeline order is fixed: cosine affinity, then sharpening with the
//! spatial-importance map, then binarization at the cut threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::scalar::Scalar;

/// Floor applied to affinities before exponentiation and used as the "off" weight after binarization.
pub const AFFINITY_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AffinityError {
    #[error("patch {index} has an all-zero feature vector")]
    ZeroVectorPatch { index: usize },
    #[error("patch {index} has a non-finite feature value")]
    NonFinitePatch { index: usize },
    #[error(
        "feature map needs at least one channel and two patches, got {channels}x{height}x{width}"
    )]
    TooSmall {
        channels: usize,
        height: usize,
        width: usize,
    },
}

/// `C × H × W` patch features in channel-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == channels * height * width).then_some(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Builds from per-patch vectors given in row-major patch order.
    pub fn from_patches(height: usize, width: usize, patches: &[Vec<T>]) -> Option<Self> {
        let channels = patches.first()?.len();
        if patches.len() != height * width || patches.iter().any(|p| p.len() != channels) {
            return None;
        }
        let n = height * width;
        let mut data = vec![T::zero(); channels * n];
        for (i, p) in patches.iter().enumerate() {
            for (c, &v) in p.iter().enumerate() {
                data[c * n + i] = v;
            }
        }
        Some(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_patches(&self) -> usize {
        self.height * self.width
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn patch(&self, index: usize) -> Vec<T> {
        let n = self.num_patches();
        (0..self.channels)
            .map(|c| self.data[c * n + index])
            .collect()
    }

    pub fn patch_mut(&mut self, index: usize, values: &[T]) {
        let n = self.num_patches();
        for (c, &v) in values.iter().enumerate().take(self.channels) {
            self.data[c * n + index] = v;
        }
    }
}

/// Dense symmetric `n × n` affinity over the patches of an `H × W` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> AffinityMatrix<T> {
    /// Wraps a row-major `n × n` buffer; returns `None` on a size mismatch.
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Option<Self> {
        let n = height * width;
        (data.len() == n * n).then_some(Self {
            height,
            width,
            data,
        })
    }

    /// Matrix over `n` nodes laid out as a `1 × n` grid.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let data = (0..n * n).map(|k| f(k / n, k % n)).collect();
        Self {
            height: 1,
            width: n,
            data,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn grid_dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n() + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        let n = self.n();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Node index to `(row, col)` in the patch grid.
    #[inline]
    pub fn node_position(&self, node: usize) -> (usize, usize) {
        (node / self.width, node % self.width)
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (i + 1..n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Sets every entry in the rows and columns of `nodes` to `value`.
    pub fn isolate_nodes(&mut self, nodes: &[usize], value: T) {
        let n = self.n();
        for &i in nodes {
            for j in 0..n {
                self.data[i * n + j] = value;
                self.data[j * n + i] = value;
            }
        }
    }
}

/// Pairwise cosine similarity between patch feature vectors; the diagonal is exactly 1.
pub fn cosine_affinity<T: Scalar>(f: &FeatureMap<T>) -> Result<AffinityMatrix<T>, AffinityError> {
    let (c, h, w) = (f.channels, f.height, f.width);
    let n = h * w;
    if c == 0 || n < 2 {
        return Err(AffinityError::TooSmall {
            channels: c,
            height: h,
            width: w,
        });
    }

    // patch-major, unit-normalized
    let mut units = vec![T::zero(); n * c];
    for i in 0..n {
        let mut sq = T::zero();
        for ch in 0..c {
            let v = f.data[ch * n + i];
            if !v.is_finite() {
                return Err(AffinityError::NonFinitePatch { index: i });
            }
            sq += v * v;
        }
        if sq == T::zero() {
            return Err(AffinityError::ZeroVectorPatch { index: i });
        }
        let inv = T::one() / sq.sqrt();
        for ch in 0..c {
            units[i * c + ch] = f.data[ch * n + i] * inv;
        }
    }

    let mut data = vec![T::zero(); n * n];
    data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let ui = &units[i * c..(i + 1) * c];
        for (j, out) in row.iter_mut().enumerate() {
            *out = if i == j {
                T::one()
            } else {
                let uj = &units[j * c..(j + 1) * c];
                let dot: T = ui.iter().zip(uj).map(|(&a, &b)| a * b).sum();
                dot.clamp_to(-T::one(), T::one())
            };
        }
    });
    Ok(AffinityMatrix {
        height: h,
        width: w,
        data,
    })
}

/// Per-patch spatial importance normalized into `[beta, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialImportanceMap<T> {
    values: Grid<T>,
    beta: T,
}

impl<T: Scalar> SpatialImportanceMap<T> {
    pub fn values(&self) -> &Grid<T> {
        &self.values
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// Map with the same value everywhere (used when sharpening is driven externally).
    pub fn uniform(height: usize, width: usize, value: T) -> Self {
        Self {
            values: Grid::filled(height, width, value),
            beta: value,
        }
    }
}

/// Normalized Gaussian taps for offsets `-radius..=radius`, radius = ceil(4 sigma).
pub fn gaussian_kernel<T: Scalar>(sigma: T) -> Vec<T> {
    let radius = (sigma * T::lit(4.0)).ceil().to_usize().unwrap_or(0).max(1);
    let two_s2 = T::lit(2.0) * sigma * sigma;
    let taps: Vec<T> = (0..=2 * radius)
        .map(|k| {
            let d = T::from_usize_lossy(k) - T::from_usize_lossy(radius);
            (-(d * d) / two_s2).exp()
        })
        .collect();
    let total: T = taps.iter().copied().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Symmetric (half-sample) reflection of an out-of-range index into `0..len`.
#[inline]
pub fn reflect_index(i: isize, len: usize) -> usize {
    let period = 2 * len as isize;
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Separable Gaussian blur with reflected borders.
pub fn gaussian_blur<T: Scalar>(g: &Grid<T>, sigma: T) -> Grid<T> {
    let taps = gaussian_kernel(sigma);
    let radius = (taps.len() / 2) as isize;
    let (h, w) = g.dims();
    let horiz = Grid::from_fn(h, w, |r, c| {
        taps.iter()
            .enumerate()
            .map(|(k, &t)| t * g.get(r, reflect_index(c as isize + k as isize - radius, w)))
            .sum()
    });
    Grid::from_fn(h, w, |r, c| {
        taps.iter()
            .enumerate()
            .map(|(k, &t)| t * horiz.get(reflect_index(r as isize + k as isize - radius, h), c))
            .sum()
    })
}

/// `|G_sigma * D - D|`, affinely rescaled to `[beta, 1]`.
///
/// A response that is the same everywhere cannot be rescaled: a zero response (constant
/// depth) maps to `beta`, a uniform non-zero one to 1, so any non-constant depth map
/// reaches 1 somewhere.
pub fn spatial_importance<T: Scalar>(
    depth: &Grid<T>,
    sigma: T,
    beta: T,
) -> SpatialImportanceMap<T> {
    let blurred = gaussian_blur(depth, sigma);
    let raw = Grid::from_fn(depth.height(), depth.width(), |r, c| {
        (blurred.get(r, c) - depth.get(r, c)).abs()
    });
    let (lo, hi) = raw.min_max();
    let (dlo, dhi) = depth.min_max();
    let noise = T::lit(64.0) * T::epsilon() * T::one().max(dlo.abs()).max(dhi.abs());
    let values = if !(hi - lo > noise) {
        // rounding of a constant map's blur stays below the noise level
        let level = if hi > noise { T::one() } else { beta };
        Grid::filled(depth.height(), depth.width(), level)
    } else {
        let span = hi - lo;
        raw.map(|v| ((T::one() - beta) * (v - lo) / span + beta).clamp_to(beta, T::one()))
    };
    SpatialImportanceMap { values, beta }
}

/// How two node importances combine into the exponent of one edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExponentCombine {
    #[default]
    Max,
    Mean,
    GeometricMean,
}

impl ExponentCombine {
    #[inline]
    pub fn combine<T: Scalar>(self, a: T, b: T) -> T {
        match self {
            ExponentCombine::Max => a.max(b),
            ExponentCombine::Mean => (a + b) * T::lit(0.5),
            ExponentCombine::GeometricMean => (a * b).sqrt(),
        }
    }
}

/// `W'_ij = clamp(W_ij, floor, 1)^(1 - E_ij)` with `E_ij` combined from the two node importances.
pub fn sharpen<T: Scalar>(
    mut w: AffinityMatrix<T>,
    importance: &SpatialImportanceMap<T>,
    combine: ExponentCombine,
) -> AffinityMatrix<T> {
    assert_eq!(
        importance.values.dims(),
        w.grid_dims(),
        "importance map must match the patch grid"
    );
    let n = w.n();
    let floor = T::lit(AFFINITY_FLOOR);
    let imp = importance.values.as_slice();
    w.data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            let e = combine.combine(imp[i], imp[j]);
            *v = v.clamp_to(floor, T::one()).powf(T::one() - e);
        }
    });
    w
}

/// Entries `>= tau` become 1, all others the positive floor.
pub fn binarize<T: Scalar>(mut w: AffinityMatrix<T>, tau: T) -> AffinityMatrix<T> {
    let floor = T::lit(AFFINITY_FLOOR);
    w.data
        .par_iter_mut()
        .for_each(|v| *v = if *v >= tau { T::one() } else { floor });
    w
}
