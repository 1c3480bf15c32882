//! Depth-aware refinement of a semantic foreground by an s-t min-cut over a 3D neighbour graph.

mod dinic;
mod knn;

pub use dinic::{dinic_mincut, Capacity, CutResult, SpatialGraph};
pub use knn::{knn_graph, CapacityFn, KnnEdge, KnnGraph};

use crate::grid::{Grid, Mask};
use crate::ncut::{Bipartition, EigenSolution};
use crate::scalar::Scalar;

/// One 3D point per patch, row-major over an `H × W` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T> {
    height: usize,
    width: usize,
    points: Vec<[T; 3]>,
}

impl<T: Scalar> PointCloud<T> {
    pub fn from_points(height: usize, width: usize, points: Vec<[T; 3]>) -> Option<Self> {
        (points.len() == height * width).then_some(Self {
            height,
            width,
            points,
        })
    }

    pub fn points(&self) -> &[[T; 3]] {
        &self.points
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Point of grid cell `(row, col)`.
    pub fn at(&self, row: usize, col: usize) -> [T; 3] {
        self.points[row * self.width + col]
    }

    /// Adds `dz` to every depth coordinate.
    pub fn shift_depth(&self, dz: T) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| [p[0], p[1], p[2] + dz])
            .collect();
        Self { points, ..*self }
    }
}

/// Bilinear resampling of a depth map to the patch grid.
pub fn resize_depth<T: Scalar>(depth: &Grid<T>, height: usize, width: usize) -> Grid<T> {
    if depth.dims() == (height, width) {
        return depth.clone();
    }
    depth.resize_bilinear(height, width)
}

/// Orthographic unprojection; both planar axes are divided by the longer side so the aspect ratio survives.
pub fn unproject<T: Scalar>(depth: &Grid<T>) -> PointCloud<T> {
    let (h, w) = depth.dims();
    let scale = T::from_usize_lossy(h.max(w));
    let half = T::lit(0.5);
    let points = (0..h * w)
        .map(|i| {
            let (r, c) = (i / w, i % w);
            [
                (T::from_usize_lossy(c) + half) / scale,
                (T::from_usize_lossy(r) + half) / scale,
                depth.as_slice()[i],
            ]
        })
        .collect();
    PointCloud {
        height: h,
        width: w,
        points,
    }
}

/// Pushes every point outside `foreground` to depth `z_bg`.
pub fn flatten_background<T: Scalar>(
    p: &PointCloud<T>,
    foreground: &Mask,
    z_bg: T,
) -> PointCloud<T> {
    assert_eq!(
        foreground.dims(),
        p.dims(),
        "mask must match the point grid"
    );
    let points = p
        .points
        .iter()
        .enumerate()
        .map(|(i, pt)| {
            if foreground.contains(i) {
                *pt
            } else {
                [pt[0], pt[1], z_bg]
            }
        })
        .collect();
    PointCloud { points, ..*p }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalCutConfig<T> {
    pub k: usize,
    pub tau_knn: T,
    pub z_bg: T,
    pub capacity: CapacityFn,
}

impl<T: Scalar> Default for LocalCutConfig<T> {
    fn default() -> Self {
        Self {
            k: 8,
            tau_knn: T::lit(0.115),
            z_bg: T::lit(2.0),
            capacity: CapacityFn::Gaussian,
        }
    }
}

/// Why the min-cut could not be seeded; the semantic foreground is returned as is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedConflict {
    EmptyForeground,
    /// The foreground covers every node, so no sink lies outside it.
    FullForeground,
    SourceOutsideForeground,
    SameSeed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalCutOutcome {
    /// Min-cut source side intersected with the semantic foreground.
    pub mask: Mask,
    pub conflict: Option<SeedConflict>,
    pub cut_value: f64,
    pub flow_value: f64,
}

/// Seeded graph state for one bipartition; cheap to cut at several thresholds.
#[derive(Debug, Clone)]
pub struct LocalCutter<T> {
    foreground: Mask,
    graph: Option<KnnGraph<T>>,
    source: usize,
    sink: usize,
    conflict: Option<SeedConflict>,
    capacity: CapacityFn,
}

impl<T: Scalar> LocalCutter<T> {
    /// Resizes and unprojects `depth`, flattens the background and builds the unthresholded neighbour graph.
    ///
    /// The source is the largest-`|x|` node; the sink the smallest-`|x|` node, re-picked outside the
    /// foreground when it falls inside.
    pub fn prepare(
        b: &Bipartition,
        e: &EigenSolution<T>,
        depth: &Grid<T>,
        cfg: &LocalCutConfig<T>,
    ) -> Self {
        let fg = b.foreground.clone();
        let (h, w) = fg.dims();
        let n = h * w;
        let conflict = |c| Self {
            foreground: fg.clone(),
            graph: None,
            source: 0,
            sink: 0,
            conflict: Some(c),
            capacity: cfg.capacity,
        };

        let count = fg.count();
        if count == 0 {
            return conflict(SeedConflict::EmptyForeground);
        }
        if count == n {
            return conflict(SeedConflict::FullForeground);
        }
        let source = b.seed_max;
        if !fg.contains(source) {
            return conflict(SeedConflict::SourceOutsideForeground);
        }
        let mut sink = b.seed_min;
        if fg.contains(sink) {
            let x = e.grid_values();
            sink = (0..n)
                .filter(|&i| !fg.contains(i))
                .min_by(|&a, &c| {
                    x[a].abs()
                        .partial_cmp(&x[c].abs())
                        .expect("finite eigenvector")
                        .then(a.cmp(&c))
                })
                .expect("foreground is not full");
        }
        if sink == source {
            return conflict(SeedConflict::SameSeed);
        }

        let depth = resize_depth(depth, h, w);
        let cloud = flatten_background(&unproject(&depth), &fg, cfg.z_bg);
        let graph = KnnGraph::build(&cloud, cfg.k);
        Self {
            foreground: fg,
            graph: Some(graph),
            source,
            sink,
            conflict: None,
            capacity: cfg.capacity,
        }
    }

    pub fn conflict(&self) -> Option<SeedConflict> {
        self.conflict
    }

    pub fn terminals(&self) -> Option<(usize, usize)> {
        self.graph.as_ref().map(|_| (self.source, self.sink))
    }

    /// Min-cut after removing edges longer than `tau`.
    pub fn cut_at(&self, tau: T) -> LocalCutOutcome {
        let Some(graph) = &self.graph else {
            return LocalCutOutcome {
                mask: self.foreground.clone(),
                conflict: self.conflict,
                cut_value: 0.0,
                flow_value: 0.0,
            };
        };
        let flow_graph =
            graph
                .threshold(tau)
                .to_flow_graph(self.capacity, tau, self.source, self.sink);
        let cut = dinic_mincut(&flow_graph);
        let (cut_value, flow_value) = (cut.cut_value.to_f64_lossy(), cut.flow_value.to_f64_lossy());
        if (cut_value - flow_value).abs() > 1e-9 * cut_value.abs().max(1.0) {
            log::warn!("min-cut duality gap: cut {cut_value} vs flow {flow_value}");
        }
        let (h, w) = self.foreground.dims();
        let side = Mask::from_vec(h, w, cut.source_side).expect("one flag per node");
        LocalCutOutcome {
            mask: side.intersection(&self.foreground),
            conflict: None,
            cut_value,
            flow_value,
        }
    }
}

/// Cuts the instance containing the strongest eigenvector entry out of the semantic foreground.
pub fn local_cut<T: Scalar>(
    b: &Bipartition,
    e: &EigenSolution<T>,
    depth: &Grid<T>,
    cfg: &LocalCutConfig<T>,
) -> LocalCutOutcome {
    LocalCutter::prepare(b, e, depth, cfg).cut_at(cfg.tau_knn)
}
