//! Row-major 2D containers: scalar grids, binary masks and RGB images.
//!
//! Node `i` of a patch graph corresponds to grid cell `(i / width, i % width)`.

use crate::scalar::Scalar;

/// Dense row-major `height × width` field of scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Wraps `data`; returns `None` when the length does not match the shape.
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == height * width).then_some(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().copied().map(f).collect(),
        }
    }
}

impl<T: Scalar> Grid<T> {
    pub fn min_max(&self) -> (T, T) {
        self.data
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Bilinear sample at continuous source coordinates, clamped to the grid.
    pub fn sample_bilinear(&self, y: T, x: T) -> T {
        let (y0, y1, fy) = bilinear_taps(y, self.height);
        let (x0, x1, fx) = bilinear_taps(x, self.width);
        let top = self.get(y0, x0) * (T::one() - fx) + self.get(y0, x1) * fx;
        let bottom = self.get(y1, x0) * (T::one() - fx) + self.get(y1, x1) * fx;
        top * (T::one() - fy) + bottom * fy
    }

    /// Half-pixel-center bilinear resize; outputs stay within the input range.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Grid<T> {
        let sy = T::from_usize_lossy(self.height) / T::from_usize_lossy(height);
        let sx = T::from_usize_lossy(self.width) / T::from_usize_lossy(width);
        let half = T::lit(0.5);
        Grid::from_fn(height, width, |r, c| {
            let y = (T::from_usize_lossy(r) + half) * sy - half;
            let x = (T::from_usize_lossy(c) + half) * sx - half;
            self.sample_bilinear(y, x)
        })
    }
}

/// Integer taps and fractional weight for one axis of a bilinear lookup.
#[inline]
pub(crate) fn bilinear_taps<T: Scalar>(coord: T, len: usize) -> (usize, usize, T) {
    let max = T::from_usize_lossy(len - 1);
    let c = coord.clamp_to(T::zero(), max);
    let lo = c.floor();
    let i0 = lo.to_usize().unwrap_or(0).min(len - 1);
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, c - lo)
}

/// Binary `height × width` mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![true; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, bits: Vec<bool>) -> Option<Self> {
        (bits.len() == height * width).then_some(Self {
            height,
            width,
            bits,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            bits,
        }
    }

    /// Mask with exactly the listed node indices set.
    pub fn from_nodes(height: usize, width: usize, nodes: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::empty(height, width);
        for i in nodes {
            m.bits[i] = true;
        }
        m
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    #[inline]
    pub fn contains(&self, node: usize) -> bool {
        self.bits[node]
    }

    #[inline]
    pub fn insert(&mut self, node: usize) {
        self.bits[node] = true;
    }

    #[inline]
    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn intersection(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn union(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn difference(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn complement(&self) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn is_disjoint(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !(a && b))
    }

    /// Intersection over union; two empty masks have IoU 0.
    pub fn iou(&self, other: &Mask) -> f64 {
        let (mut inter, mut uni) = (0usize, 0usize);
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += (a && b) as usize;
            uni += (a || b) as usize;
        }
        if uni == 0 {
            0.0
        } else {
            inter as f64 / uni as f64
        }
    }

    /// Tight box `[x, y, w, h]`; all zeros for an empty mask.
    pub fn bbox(&self) -> [u32; 4] {
        let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    r0 = r0.min(r);
                    r1 = r1.max(r);
                    c0 = c0.min(c);
                    c1 = c1.max(c);
                }
            }
        }
        if r0 == usize::MAX {
            return [0; 4];
        }
        [
            c0 as u32,
            r0 as u32,
            (c1 - c0 + 1) as u32,
            (r1 - r0 + 1) as u32,
        ]
    }

    /// Number of set cells with at least one unset (or out-of-bounds) 4-neighbor.
    pub fn boundary_len(&self) -> usize {
        let mut n = 0;
        for r in 0..self.height {
            for c in 0..self.width {
                if !self.get(r, c) {
                    continue;
                }
                let edge = r == 0
                    || c == 0
                    || r + 1 == self.height
                    || c + 1 == self.width
                    || !self.get(r - 1, c)
                    || !self.get(r + 1, c)
                    || !self.get(r, c - 1)
                    || !self.get(r, c + 1);
                n += edge as usize;
            }
        }
        n
    }

    pub fn to_grid<T: Scalar>(&self) -> Grid<T> {
        Grid::from_fn(self.height, self.width, |r, c| {
            if self.get(r, c) {
                T::one()
            } else {
                T::zero()
            }
        })
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Mask {
        assert_eq!(self.dims(), other.dims(), "mask shape mismatch");
        Mask {
            height: self.height,
            width: self.width,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

impl<T: Scalar> Grid<T> {
    /// Cells with value `>= threshold`.
    pub fn threshold(&self, threshold: T) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            bits: self.data.iter().map(|&v| v >= threshold).collect(),
        }
    }
}

/// RGB image with channel values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb<T> {
    height: usize,
    width: usize,
    pixels: Vec<[T; 3]>,
}

impl<T: Scalar> ImageRgb<T> {
    pub fn filled(height: usize, width: usize, rgb: [T; 3]) -> Self {
        Self {
            height,
            width,
            pixels: vec![rgb; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, pixels: Vec<[T; 3]>) -> Option<Self> {
        (pixels.len() == height * width).then_some(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [T; 3]) -> Self {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            pixels,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [T; 3] {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, rgb: [T; 3]) {
        self.pixels[row * self.width + col] = rgb;
    }

    #[inline]
    pub fn pixels(&self) -> &[[T; 3]] {
        &self.pixels
    }

    /// One channel as a scalar grid.
    pub fn channel(&self, ch: usize) -> Grid<T> {
        Grid::from_fn(self.height, self.width, |r, c| self.get(r, c)[ch])
    }

    pub fn from_channels(r: &Grid<T>, g: &Grid<T>, b: &Grid<T>) -> Self {
        Self::from_fn(r.height(), r.width(), |y, x| {
            [r.get(y, x), g.get(y, x), b.get(y, x)]
        })
    }

    pub fn resize_bilinear(&self, height: usize, width: usize) -> Self {
        let chans: Vec<Grid<T>> = (0..3)
            .map(|ch| self.channel(ch).resize_bilinear(height, width))
            .collect();
        Self::from_channels(&chans[0], &chans[1], &chans[2])
    }

    pub fn cast<U: Scalar>(&self) -> ImageRgb<U> {
        ImageRgb {
            height: self.height,
            width: self.width,
            pixels: self
                .pixels
                .iter()
                .map(|p| {
                    [
                        U::lit(p[0].to_f64_lossy()),
                        U::lit(p[1].to_f64_lossy()),
                        U::lit(p[2].to_f64_lossy()),
                    ]
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bbox_is_tight() {
        let m = Mask::from_fn(5, 6, |r, c| (1..=3).contains(&r) && (2..=4).contains(&c));
        assert_eq!(m.bbox(), [2, 1, 3, 3]);
        assert_eq!(Mask::empty(3, 3).bbox(), [0; 4]);
    }

    #[test]
    fn iou_of_halves() {
        let a = Mask::from_fn(2, 2, |_, c| c == 0);
        let b = Mask::full(2, 2);
        assert_eq!(a.iou(&b), 0.5);
        assert_eq!(Mask::empty(2, 2).iou(&Mask::empty(2, 2)), 0.0);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let g = Grid::filled(7, 5, 0.3f64);
        let r = g.resize_bilinear(3, 11);
        assert!(r.as_slice().iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn resize_downscale_ramp_is_ramp() {
        // 2x downscale of x -> x samples at source 2c + 0.5
        let g = Grid::from_fn(4, 8, |_, c| c as f64);
        let r = g.resize_bilinear(2, 4);
        for c in 0..4 {
            assert!((r.get(0, c) - (2.0 * c as f64 + 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_of_block() {
        let m = Mask::from_fn(5, 5, |r, c| (1..4).contains(&r) && (1..4).contains(&c));
        assert_eq!(m.boundary_len(), 8);
    }
}
