//! Second generalized eigenvector of `(Z - W) x = λ Z x`.
//!
//! Works on the symmetric normalized operator `M = Z^{-1/2} W Z^{-1/2}`, whose
//! largest eigenvalue 1 belongs to `Z^{1/2} 1`. That vector is deflated and a
//! restarted Lanczos iteration with full reorthogonalization finds the largest
//! remaining eigenvalue `μ`; then `λ = 1 - μ` and `x ∝ Z^{-1/2} y`.

use rayon::prelude::*;

use super::{EigenSolution, NcutError};
use crate::affinity::AffinityMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    /// Bound on `‖(Z - W) x - λ Z x‖₂` for unit `x`, raised to the rounding floor of `T` when smaller.
    pub tol: T,
    /// Budget of operator applications across all restarts.
    pub max_iterations: usize,
    /// Krylov subspace size per restart cycle.
    pub krylov_dim: usize,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-6).max(T::epsilon().sqrt()),
            max_iterations: 10_000,
            krylov_dim: 160,
        }
    }
}

/// Solves on the sub-graph induced by `nodes` (indices into `w`).
pub fn solve_second_eigvec<T: Scalar>(
    w: &AffinityMatrix<T>,
    nodes: &[usize],
    opts: &SolverOptions<T>,
) -> Result<EigenSolution<T>, NcutError> {
    let m = nodes.len();
    if m < 2 {
        return Err(NcutError::TooFewNodes(m));
    }

    let mut sub = vec![T::zero(); m * m];
    for (a, &i) in nodes.iter().enumerate() {
        let row = w.row(i);
        for (b, &j) in nodes.iter().enumerate() {
            let v = row[j];
            if !(v > T::zero()) || !v.is_finite() {
                return Err(NcutError::NonPositiveAffinity { row: i, col: j });
            }
            sub[a * m + b] = v;
        }
    }
    let degree: Vec<T> = sub
        .par_chunks(m)
        .map(|row| row.iter().copied().sum())
        .collect();
    let inv_sqrt: Vec<T> = degree.iter().map(|&z| T::one() / z.sqrt()).collect();

    let mut op = sub.clone();
    op.par_chunks_mut(m).enumerate().for_each(|(a, row)| {
        for (b, v) in row.iter_mut().enumerate() {
            *v = *v * inv_sqrt[a] * inv_sqrt[b];
        }
    });

    let mut trivial: Vec<T> = degree.iter().map(|z| z.sqrt()).collect();
    normalize(&mut trivial);

    let lanczos = Lanczos {
        op: &op,
        m,
        trivial: &trivial,
    };
    // rounding alone leaves a residual near sqrt(m) * eps * max degree; f32 on large graphs can exceed `tol`
    let peak_degree = degree.iter().fold(T::zero(), |a, &z| a.max(z));
    let floor = T::lit(4.0) * T::lit(m as f64).sqrt() * T::epsilon() * peak_degree;
    let tol = opts.tol.max(floor);
    let target = tol * T::lit(1e-3);
    let kdim = opts.krylov_dim.max(2).min(m - 1);

    let mut start = seed_vector::<T>(m);
    let mut best: Option<(Vec<T>, T, T)> = None;
    let mut iterations = 0usize;
    let mut stalls = 0usize;

    loop {
        let cycle = lanczos.cycle(&start, kdim, opts.max_iterations.saturating_sub(iterations));
        iterations += cycle.steps;
        let Some(y) = cycle.ritz_vector else {
            break;
        };
        let (x, lambda, residual) = generalized_pair(&sub, &degree, &inv_sqrt, &y);

        let improved = best
            .as_ref()
            .is_none_or(|(_, _, r)| residual < *r * T::lit(0.9));
        if best.as_ref().is_none_or(|(_, _, r)| residual < *r) {
            best = Some((x, lambda, residual));
        }
        stalls = if improved { 0 } else { stalls + 1 };

        let best_res = best.as_ref().map(|b| b.2).unwrap_or(T::infinity());
        let done = best_res <= target
            || cycle.exhausted
            || iterations >= opts.max_iterations
            || (stalls >= 3 && best_res <= tol);
        if done {
            break;
        }
        start = y;
    }

    let (mut x, lambda, residual) = best.ok_or(NcutError::ConvergenceFailure {
        iterations,
        residual: f64::NAN,
    })?;
    if !(residual <= tol) {
        return Err(NcutError::ConvergenceFailure {
            iterations,
            residual: residual.to_f64_lossy(),
        });
    }
    orient(&mut x);
    Ok(EigenSolution {
        vector: x,
        eigenvalue: lambda,
        residual,
        node_ids: nodes.to_vec(),
        iterations,
        grid: w.grid_dims(),
    })
}

struct Lanczos<'a, T> {
    op: &'a [T],
    m: usize,
    trivial: &'a [T],
}

struct Cycle<T> {
    ritz_vector: Option<Vec<T>>,
    steps: usize,
    /// The Krylov space became invariant, so the Ritz pair is exact up to rounding.
    exhausted: bool,
}

impl<T: Scalar> Lanczos<'_, T> {
    fn apply(&self, v: &[T]) -> Vec<T> {
        self.op.par_chunks(self.m).map(|row| dot(row, v)).collect()
    }

    fn project_out(&self, w: &mut [T], basis: &[Vec<T>]) {
        for _ in 0..2 {
            let c = dot(self.trivial, w);
            axpy(w, -c, self.trivial);
            for q in basis {
                let c = dot(q, w);
                axpy(w, -c, q);
            }
        }
    }

    fn cycle(&self, start: &[T], kdim: usize, budget: usize) -> Cycle<T> {
        let mut q = start.to_vec();
        self.project_out(&mut q, &[]);
        if normalize(&mut q) == T::zero() {
            q = seed_vector(self.m);
            self.project_out(&mut q, &[]);
            normalize(&mut q);
        }

        let mut basis: Vec<Vec<T>> = vec![q];
        let mut alpha: Vec<T> = Vec::new();
        let mut beta: Vec<T> = Vec::new();
        let mut exhausted = false;
        let mut steps = 0;

        while steps < budget {
            let j = basis.len() - 1;
            let mut w = self.apply(&basis[j]);
            steps += 1;
            let a = dot(&basis[j], &w);
            alpha.push(a);
            self.project_out(&mut w, &basis);
            let b = norm(&w);
            if basis.len() == kdim || basis.len() == self.m - 1 {
                exhausted = basis.len() == self.m - 1;
                break;
            }
            if b <= T::lit(1e3) * T::epsilon() {
                exhausted = true;
                break;
            }
            beta.push(b);
            for v in &mut w {
                *v /= b;
            }
            basis.push(w);
        }
        if alpha.is_empty() {
            return Cycle {
                ritz_vector: None,
                steps,
                exhausted,
            };
        }
        // the last basis vector is unused when the budget ran out before its step
        basis.truncate(alpha.len());

        let Some((values, vectors)) = tridiagonal_eigen(&alpha, &beta) else {
            return Cycle {
                ritz_vector: None,
                steps,
                exhausted,
            };
        };
        let k = alpha.len();
        let top = (0..k).fold(0, |best, i| if values[i] > values[best] { i } else { best });
        let mut y = vec![T::zero(); self.m];
        for (i, q) in basis.iter().enumerate() {
            axpy(&mut y, vectors[i * k + top], q);
        }
        self.project_out(&mut y, &[]);
        normalize(&mut y);
        Cycle {
            ritz_vector: Some(y),
            steps,
            exhausted,
        }
    }
}

/// Maps a normalized-space vector back and evaluates the generalized Rayleigh quotient and residual.
fn generalized_pair<T: Scalar>(w: &[T], degree: &[T], inv_sqrt: &[T], y: &[T]) -> (Vec<T>, T, T) {
    let m = degree.len();
    let mut x: Vec<T> = y.iter().zip(inv_sqrt).map(|(&a, &b)| a * b).collect();
    normalize(&mut x);
    let wx: Vec<T> = w.par_chunks(m).map(|row| dot(row, &x)).collect();
    let lx: Vec<T> = (0..m).map(|i| degree[i] * x[i] - wx[i]).collect();
    // Laplacian form on the max-normalized vector: no cancellation, and exact on two nodes
    let peak = x.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let s: Vec<T> = x.iter().map(|&v| v / peak).collect();
    let num: T = w
        .par_chunks(m)
        .enumerate()
        .map(|(i, row)| {
            (i + 1..m)
                .map(|j| row[j] * (s[i] - s[j]) * (s[i] - s[j]))
                .sum::<T>()
        })
        .collect::<Vec<T>>()
        .into_iter()
        .sum();
    let den: T = s.iter().zip(degree).map(|(&a, &z)| a * a * z).sum();
    let lambda = num / den;
    let residual = (0..m)
        .map(|i| {
            let r = lx[i] - lambda * degree[i] * x[i];
            r * r
        })
        .sum::<T>()
        .sqrt();
    (x, lambda, residual)
}

/// Flips the sign so that the entry of largest magnitude is positive.
fn orient<T: Scalar>(x: &mut [T]) {
    let mut idx = 0;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > x[idx].abs() {
            idx = i;
        }
    }
    if x[idx] < T::zero() {
        for v in x.iter_mut() {
            *v = -*v;
        }
    }
}

/// Deterministic start vector with no special structure.
fn seed_vector<T: Scalar>(m: usize) -> Vec<T> {
    let mut v: Vec<T> = (0..m as u64)
        .map(|i| {
            let mut z = i.wrapping_add(0x9E37_79B9_7F4A_7C15);
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            T::lit((z >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
        })
        .collect();
    normalize(&mut v);
    v
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn norm<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

/// Scales to unit length and returns the previous norm (0 leaves `v` untouched).
fn normalize<T: Scalar>(v: &mut [T]) -> T {
    let n = norm(v);
    if n > T::zero() {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Implicit-shift QL on a symmetric tridiagonal matrix.
///
/// `diag` has length `k`, `off` length `k - 1` (`off[i]` couples `i` and `i + 1`).
/// Returns eigenvalues and a row-major `k × k` matrix whose columns are eigenvectors.
pub(crate) fn tridiagonal_eigen<T: Scalar>(diag: &[T], off: &[T]) -> Option<(Vec<T>, Vec<T>)> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![T::zero(); n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);
    let mut z = vec![T::zero(); n * n];
    for i in 0..n {
        z[i * n + i] = T::one();
    }
    let two = T::lit(2.0);

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return None;
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            let signed = if g >= T::zero() { r } else { -r };
            g = d[m] - d[l] + e[l] / (g + signed);
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let f = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * f;
                    z[k * n + i] = c * z[k * n + i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Some((d, z))
}
