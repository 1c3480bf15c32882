//! Slow, obviously-correct reference implementations.

use pseudomask::affinity::{reflect_index, AffinityMatrix};
use pseudomask::localcut::{Capacity, CutResult, SpatialGraph};
use pseudomask::{EigenSolution, Grid, Mask};

use crate::HarnessError;

pub const MAX_MINCUT_NODES: usize = 12;
pub const MAX_EIGEN_NODES: usize = 512;
pub const MAX_NCUT_NODES: usize = 16;

/// Minimum s-t cut by enumerating every partition with `s` on the source side and `t` on the sink side.
///
/// Among equal-capacity cuts the one with the smallest source side (then lowest bitmask) wins.
pub fn brute_force_mincut<C: Capacity>(g: &SpatialGraph<C>) -> Result<CutResult<C>, HarnessError> {
    let n = g.num_nodes();
    if n > MAX_MINCUT_NODES {
        return Err(HarnessError::TooLarge {
            n,
            max: MAX_MINCUT_NODES,
        });
    }
    let (s, t) = (g.source(), g.sink());
    let mut best: Option<(C, u32, Vec<bool>)> = None;
    for bits in 0u32..(1 << n) {
        if bits & (1 << s) == 0 || bits & (1 << t) != 0 {
            continue;
        }
        let side: Vec<bool> = (0..n).map(|i| bits & (1 << i) != 0).collect();
        let value = g.cut_capacity(&side);
        let better = match &best {
            None => true,
            Some((v, b, _)) => value < *v || (value == *v && bits.count_ones() < b.count_ones()),
        };
        if better {
            best = Some((value, bits.count_ones(), side));
        }
    }
    let (cut_value, _, source_side) = best.expect("s != t leaves at least one partition");
    let saturated_arcs = g
        .arcs()
        .filter(|&(u, v, _)| source_side[u] && !source_side[v])
        .map(|(u, v, _)| (u, v))
        .collect();
    Ok(CutResult {
        source_side,
        cut_value,
        flow_value: cut_value,
        saturated_arcs,
    })
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// `a` is row-major `n × n`. Returns eigenvalues in descending order and the
/// matching eigenvectors as rows.
pub fn jacobi_eigen(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>), HarnessError> {
    if n > MAX_EIGEN_NODES {
        return Err(HarnessError::TooLarge {
            n,
            max: MAX_EIGEN_NODES,
        });
    }
    assert_eq!(a.len(), n * n, "matrix must be n x n");
    let mut m = a.to_vec();
    // v holds eigenvectors as rows so rotations touch contiguous memory
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j].powi(2))
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (m[p * n + p], m[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // rows p and q, then columns p and q
                for k in 0..n {
                    let (x, y) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * x - s * y;
                    m[q * n + k] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * x - s * y;
                    m[k * n + q] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (v[p * n + k], v[q * n + k]);
                    v[p * n + k] = c * x - s * y;
                    v[q * n + k] = s * x + c * y;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| v[i * n..(i + 1) * n].to_vec())
        .collect();
    Ok((values, vectors))
}

/// Second-smallest generalized eigenpair of `(Z - W) x = λ Z x` over all nodes, via a full dense decomposition.
pub fn dense_second_eigvec(w: &AffinityMatrix<f64>) -> Result<EigenSolution<f64>, HarnessError> {
    let n = w.n();
    if n > MAX_EIGEN_NODES {
        return Err(HarnessError::TooLarge {
            n,
            max: MAX_EIGEN_NODES,
        });
    }
    if n < 2 {
        return Err(HarnessError::TooSmall(n));
    }
    let z: Vec<f64> = (0..n).map(|i| w.row(i).iter().sum()).collect();
    let inv_sqrt: Vec<f64> = z.iter().map(|d| 1.0 / d.sqrt()).collect();
    let m: Vec<f64> = (0..n * n)
        .map(|k| w.as_slice()[k] * inv_sqrt[k / n] * inv_sqrt[k % n])
        .collect();
    let (values, vectors) = jacobi_eigen(&m, n)?;
    // the largest eigenvalue of the normalized matrix is the trivial 1
    let mut x: Vec<f64> = vectors[1]
        .iter()
        .zip(&inv_sqrt)
        .map(|(y, s)| y * s)
        .collect();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= norm);
    let (imax, _) = x.iter().enumerate().fold((0, 0.0f64), |acc, (i, v)| {
        if v.abs() > acc.1 {
            (i, v.abs())
        } else {
            acc
        }
    });
    if x[imax] < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    let eigenvalue = 1.0 - values[1];
    let residual = generalized_residual(w, &x, eigenvalue);
    Ok(EigenSolution {
        vector: x,
        eigenvalue,
        residual,
        node_ids: (0..n).collect(),
        iterations: 0,
        grid: w.grid_dims(),
    })
}

/// `‖(Z - W) x - λ Z x‖₂` over all nodes.
pub fn generalized_residual(w: &AffinityMatrix<f64>, x: &[f64], lambda: f64) -> f64 {
    (0..w.n())
        .map(|i| {
            let row = w.row(i);
            let z: f64 = row.iter().sum();
            let wx: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            let r = z * x[i] - wx - lambda * z * x[i];
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

/// `cut(A, B) / assoc(A, V) + cut(A, B) / assoc(B, V)`.
pub fn ncut_value(w: &AffinityMatrix<f64>, side: &[bool]) -> f64 {
    let n = w.n();
    let (mut cut, mut assoc_a, mut assoc_b) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let v = w.get(i, j);
            if side[i] {
                assoc_a += v;
            } else {
                assoc_b += v;
            }
            if side[i] && !side[j] {
                cut += v;
            }
        }
    }
    cut / assoc_a + cut / assoc_b
}

/// Exact minimum normalized cut over all non-trivial bipartitions (node 0 always on side `true`).
pub fn brute_force_ncut(w: &AffinityMatrix<f64>) -> Result<(Vec<bool>, f64), HarnessError> {
    let n = w.n();
    if n > MAX_NCUT_NODES {
        return Err(HarnessError::TooLarge {
            n,
            max: MAX_NCUT_NODES,
        });
    }
    if n < 2 {
        return Err(HarnessError::TooSmall(n));
    }
    let mut best = (Vec::new(), f64::INFINITY);
    for bits in 0u32..(1 << (n - 1)) - 1 {
        // node 0 fixed on the true side; remaining bits cover nodes 1..n, all-ones excluded
        let side: Vec<bool> = (0..n)
            .map(|i| i == 0 || bits & (1 << (i - 1)) != 0)
            .collect();
        let v = ncut_value(w, &side);
        if v < best.1 {
            best = (side, v);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }
}

/// Connected component containing `start` in the graph on `n` nodes with the given edges.
pub fn component_of(
    n: usize,
    edges: impl IntoIterator<Item = (usize, usize)>,
    start: usize,
) -> Vec<bool> {
    let mut uf = UnionFind::new(n);
    for (u, v) in edges {
        uf.union(u, v);
    }
    (0..n).map(|i| uf.same(i, start)).collect()
}

/// Bilinear resize with half-pixel centres, written out per output pixel.
pub fn resize_bilinear_oracle(g: &Grid<f64>, height: usize, width: usize) -> Grid<f64> {
    let (h, w) = g.dims();
    let tap = |coord: f64, len: usize| -> (usize, usize, f64) {
        let c = coord.clamp(0.0, (len - 1) as f64);
        let i0 = c.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, c - i0 as f64)
    };
    Grid::from_fn(height, width, |r, c| {
        let y = (r as f64 + 0.5) * h as f64 / height as f64 - 0.5;
        let x = (c as f64 + 0.5) * w as f64 / width as f64 - 0.5;
        let (y0, y1, fy) = tap(y, h);
        let (x0, x1, fx) = tap(x, w);
        (1.0 - fy) * ((1.0 - fx) * g.get(y0, x0) + fx * g.get(y0, x1))
            + fy * ((1.0 - fx) * g.get(y1, x0) + fx * g.get(y1, x1))
    })
}

/// Non-separable Gaussian blur with reflected borders, truncated at radius `max(ceil(4σ), 1)`.
pub fn gaussian_blur_oracle(g: &Grid<f64>, sigma: f64) -> Grid<f64> {
    let radius = ((4.0 * sigma).ceil() as isize).max(1);
    let weight = |d: isize| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp();
    let norm: f64 = (-radius..=radius).map(weight).sum();
    let (h, w) = g.dims();
    Grid::from_fn(h, w, |r, c| {
        let mut acc = 0.0;
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let y = reflect_index(r as isize + dy, h);
                let x = reflect_index(c as isize + dx, w);
                acc += weight(dy) * weight(dx) * g.get(y, x);
            }
        }
        acc / (norm * norm)
    })
}

/// Patch mask from a boolean side vector.
pub fn side_to_mask(side: &[bool], height: usize, width: usize) -> Mask {
    Mask::from_fn(height, width, |r, c| side[r * width + c])
}
