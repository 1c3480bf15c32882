use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dinic::SpatialGraph;
use super::PointCloud;
use crate::scalar::Scalar;

/// Maps an edge length to a min-cut capacity. All variants decrease with distance,
/// so cuts prefer long edges, i.e. depth discontinuities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapacityFn {
    /// `exp(-(d / tau)^2)`
    #[default]
    Gaussian,
    /// `1 / (1 + d / tau)`
    Inverse,
    /// `1 - d / tau`
    LinearComplement,
}

impl CapacityFn {
    pub fn eval<T: Scalar>(self, dist: T, tau: T) -> T {
        let r = dist / tau;
        match self {
            CapacityFn::Gaussian => (-(r * r)).exp(),
            CapacityFn::Inverse => T::one() / (T::one() + r),
            CapacityFn::LinearComplement => (T::one() - r).max(T::zero()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnEdge<T> {
    pub u: usize,
    pub v: usize,
    pub dist: T,
}

/// Undirected edge list with `u < v`, sorted by `(u, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph<T> {
    n: usize,
    edges: Vec<KnnEdge<T>>,
}

impl<T: Scalar> KnnGraph<T> {
    /// Symmetrized `k`-nearest-neighbour graph without any distance threshold.
    ///
    /// Distance ties are broken by the lower point index, so the edge set is fully deterministic.
    pub fn build(p: &PointCloud<T>, k: usize) -> Self {
        let pts = p.points();
        let n = pts.len();
        let k = k.min(n.saturating_sub(1));
        let mut directed: Vec<(usize, usize)> = pts
            .par_iter()
            .enumerate()
            .flat_map_iter(|(u, pu)| {
                let mut cand: Vec<(T, usize)> = pts
                    .iter()
                    .enumerate()
                    .filter(|&(v, _)| v != u)
                    .map(|(v, pv)| (dist(pu, pv), v))
                    .collect();
                let by = |a: &(T, usize), b: &(T, usize)| {
                    a.0.partial_cmp(&b.0)
                        .expect("finite distance")
                        .then(a.1.cmp(&b.1))
                };
                if k < cand.len() {
                    cand.select_nth_unstable_by(k, by);
                    cand.truncate(k);
                }
                cand.into_iter().map(move |(_, v)| (u.min(v), u.max(v)))
            })
            .collect();
        directed.sort_unstable();
        directed.dedup();
        let edges = directed
            .into_iter()
            .map(|(u, v)| KnnEdge {
                u,
                v,
                dist: dist(&pts[u], &pts[v]),
            })
            .collect();
        Self { n, edges }
    }

    /// Drops every edge longer than `tau`.
    pub fn threshold(&self, tau: T) -> Self {
        Self {
            n: self.n,
            edges: self
                .edges
                .iter()
                .copied()
                .filter(|e| e.dist <= tau)
                .collect(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[KnnEdge<T>] {
        &self.edges
    }

    /// Flow network with one arc pair per edge.
    pub fn to_flow_graph(
        &self,
        capacity: CapacityFn,
        tau: T,
        source: usize,
        sink: usize,
    ) -> SpatialGraph<T> {
        let mut g = SpatialGraph::new(self.n, source, sink);
        for e in &self.edges {
            g.add_edge(e.u, e.v, capacity.eval(e.dist, tau));
        }
        g
    }
}

/// `k`-NN graph with edges longer than `tau` removed.
pub fn knn_graph<T: Scalar>(p: &PointCloud<T>, k: usize, tau: T) -> KnnGraph<T> {
    KnnGraph::build(p, k).threshold(tau)
}

#[inline]
fn dist<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}
