//! Spectral bipartitioning and the iterative cut loop.

mod eigen;

pub use eigen::{solve_second_eigvec, SolverOptions};

use crate::affinity::{AffinityMatrix, AFFINITY_FLOOR};
use crate::grid::Mask;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NcutError {
    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },
    #[error("eigenvector does not split the active nodes")]
    DegenerateSplit,
    #[error("need at least two nodes, got {0}")]
    TooFewNodes(usize),
    #[error("affinity ({row}, {col}) is not a positive finite number")]
    NonPositiveAffinity { row: usize, col: usize },
}

/// Second generalized eigenpair on a set of graph nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSolution<T> {
    /// Unit-norm eigenvector, one entry per element of `node_ids`.
    pub vector: Vec<T>,
    pub eigenvalue: T,
    /// `‖(Z - W) x - λ Z x‖₂`.
    pub residual: T,
    pub node_ids: Vec<usize>,
    /// Operator applications spent.
    pub iterations: usize,
    /// Patch grid the node ids index into.
    pub grid: (usize, usize),
}

impl<T: Scalar> EigenSolution<T> {
    /// Eigenvector scattered onto the patch grid; nodes not solved for read 0.
    pub fn grid_values(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.grid.0 * self.grid.1];
        for (&node, &v) in self.node_ids.iter().zip(&self.vector) {
            out[node] = v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bipartition {
    pub foreground: Mask,
    pub background: Mask,
    /// Active node with the largest `|x|`.
    pub seed_max: usize,
    /// Active node with the smallest `|x|`.
    pub seed_min: usize,
}

impl Bipartition {
    pub fn active(&self) -> Mask {
        self.foreground.union(&self.background)
    }
}

/// Splits every solved node at the mean of the eigenvector.
pub fn bipartition<T: Scalar>(e: &EigenSolution<T>) -> Result<Bipartition, NcutError> {
    let (h, w) = e.grid;
    split(e, &Mask::from_nodes(h, w, e.node_ids.iter().copied()))
}

/// Mean split restricted to `active`; the foreground is the side holding the largest `|x|`.
pub(crate) fn split<T: Scalar>(
    e: &EigenSolution<T>,
    active: &Mask,
) -> Result<Bipartition, NcutError> {
    let entries: Vec<(usize, T)> = e
        .node_ids
        .iter()
        .zip(&e.vector)
        .filter(|(n, _)| active.contains(**n))
        .map(|(&n, &v)| (n, v))
        .collect();
    if entries.len() < 2 {
        return Err(NcutError::DegenerateSplit);
    }
    let (mut lo, mut hi, mut peak) = (T::infinity(), T::neg_infinity(), T::zero());
    let mut sum = T::zero();
    let (mut seed_max, mut seed_min) = (entries[0], entries[0]);
    for &(n, v) in &entries {
        lo = lo.min(v);
        hi = hi.max(v);
        peak = peak.max(v.abs());
        sum += v;
        if v.abs() > seed_max.1.abs() {
            seed_max = (n, v);
        }
        if v.abs() < seed_min.1.abs() {
            seed_min = (n, v);
        }
    }
    if hi - lo <= T::lit(64.0) * T::epsilon() * peak {
        return Err(NcutError::DegenerateSplit);
    }
    let mean = sum / T::from_usize_lossy(entries.len());
    let fg_upper = seed_max.1 > mean;
    let (h, w) = e.grid;
    let mut foreground = Mask::empty(h, w);
    let mut background = Mask::empty(h, w);
    for &(n, v) in &entries {
        if (v > mean) == fg_upper {
            foreground.insert(n);
        } else {
            background.insert(n);
        }
    }
    if !background.any() {
        return Err(NcutError::DegenerateSplit);
    }
    Ok(Bipartition {
        foreground,
        background,
        seed_max: seed_max.0,
        seed_min: seed_min.0,
    })
}

/// True when the mean split over every node puts all active nodes on one side,
/// i.e. the cut only separates the already-removed nodes from the rest.
fn separates_removed<T: Scalar>(e: &EigenSolution<T>, active: &Mask) -> bool {
    let mean = e.vector.iter().copied().sum::<T>() / T::from_usize_lossy(e.vector.len());
    let mut sides = e
        .node_ids
        .iter()
        .zip(&e.vector)
        .filter(|(n, _)| active.contains(**n))
        .map(|(_, &v)| v > mean);
    match sides.next() {
        Some(first) => sides.all(|s| s == first),
        None => true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutLoopOptions<T> {
    pub n_iters: usize,
    /// A foreground covering at least this share of the active nodes is the leftover background.
    pub rest_fraction: f64,
    pub min_active: usize,
    pub solver: SolverOptions<T>,
}

impl<T: Scalar> Default for CutLoopOptions<T> {
    fn default() -> Self {
        Self {
            n_iters: 3,
            rest_fraction: 0.95,
            min_active: 16,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    /// All `n_iters` iterations produced a cut.
    Completed,
    /// The cut at this iteration returned the remaining background.
    Rest {
        iteration: usize,
    },
    TooFewActive {
        iteration: usize,
        active: usize,
    },
    Degenerate {
        iteration: usize,
    },
    Failed {
        iteration: usize,
        error: NcutError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutLoopOutcome {
    /// Semantic bipartition of each accepted iteration.
    pub cuts: Vec<Bipartition>,
    /// Nodes removed after each accepted iteration; pairwise disjoint.
    pub removed: Vec<Mask>,
    pub stop: StopReason,
}

/// Runs up to `n_iters` cuts, removing each accepted instance from the graph.
///
/// `on_cut` receives the iteration index, the bipartition and its eigenvector and
/// returns the nodes to remove (an instance mask). An empty return removes the
/// whole foreground. Removed nodes keep their slot in the matrix but every edge
/// touching them drops to the affinity floor, so the remaining graph stays
/// positive. Once only background is left, the cheapest cut separates the
/// removed nodes from everything else; that is reported as [`StopReason::Rest`].
pub fn cut_loop<T, F>(
    w: &AffinityMatrix<T>,
    opts: &CutLoopOptions<T>,
    mut on_cut: F,
) -> CutLoopOutcome
where
    T: Scalar,
    F: FnMut(usize, &Bipartition, &EigenSolution<T>) -> Mask,
{
    let (h, wd) = w.grid_dims();
    let all: Vec<usize> = (0..w.n()).collect();
    let mut graph = w.clone();
    let mut active = Mask::full(h, wd);
    let mut cuts = Vec::new();
    let mut removed = Vec::new();

    for iteration in 0..opts.n_iters {
        let count = active.count();
        if count < opts.min_active.max(2) {
            return CutLoopOutcome {
                cuts,
                removed,
                stop: StopReason::TooFewActive {
                    iteration,
                    active: count,
                },
            };
        }
        let e = match solve_second_eigvec(&graph, &all, &opts.solver) {
            Ok(e) => e,
            Err(error) => {
                return CutLoopOutcome {
                    cuts,
                    removed,
                    stop: StopReason::Failed { iteration, error },
                }
            }
        };
        // a complete uniform graph has λ = 1 and every split is equally bad
        if e.eigenvalue >= T::one() - opts.solver.tol {
            return CutLoopOutcome {
                cuts,
                removed,
                stop: StopReason::Degenerate { iteration },
            };
        }
        if iteration > 0 && separates_removed(&e, &active) {
            log::debug!(
                "iteration {iteration}: cut returns the complement of the previous masks, stopping"
            );
            return CutLoopOutcome {
                cuts,
                removed,
                stop: StopReason::Rest { iteration },
            };
        }
        let b = match split(&e, &active) {
            Ok(b) => b,
            Err(_) => {
                return CutLoopOutcome {
                    cuts,
                    removed,
                    stop: StopReason::Degenerate { iteration },
                }
            }
        };
        if b.foreground.count() as f64 >= opts.rest_fraction * count as f64 {
            log::debug!("iteration {iteration}: foreground covers the remaining graph, stopping");
            return CutLoopOutcome {
                cuts,
                removed,
                stop: StopReason::Rest { iteration },
            };
        }
        let mut instance = on_cut(iteration, &b, &e).intersection(&active);
        if !instance.any() {
            instance = b.foreground.clone();
        }
        let nodes: Vec<usize> = instance.nodes().collect();
        graph.isolate_nodes(&nodes, T::lit(AFFINITY_FLOOR));
        active = active.difference(&instance);
        cuts.push(b);
        removed.push(instance);
    }
    CutLoopOutcome {
        cuts,
        removed,
        stop: StopReason::Completed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node(w: f64) -> AffinityMatrix<f64> {
        AffinityMatrix::from_fn(2, |i, j| if i == j { 1.0 } else { w })
    }

    #[test]
    fn two_node_closed_form() {
        for w in [0.5, 0.1, 0.9, 1e-5] {
            let e = solve_second_eigvec(&two_node(w), &[0, 1], &SolverOptions::default()).unwrap();
            assert!(
                (e.eigenvalue - 2.0 * w / (1.0 + w)).abs() <= 4.0 * f64::EPSILON,
                "w={w}: {}",
                e.eigenvalue
            );
            let s = std::f64::consts::FRAC_1_SQRT_2;
            assert!(
                (e.vector[0] - s).abs() < 1e-12 && (e.vector[1] + s).abs() < 1e-12,
                "{:?}",
                e.vector
            );
        }
    }

    #[test]
    fn two_node_half_gives_two_thirds() {
        let e = solve_second_eigvec(&two_node(0.5), &[0, 1], &SolverOptions::default()).unwrap();
        assert!((e.eigenvalue - 2.0 / 3.0).abs() < 1e-15);
        let b = bipartition(&e).unwrap();
        assert_eq!(b.foreground.nodes().collect::<Vec<_>>(), vec![0]);
        assert_eq!(b.seed_max, 0);
    }

    #[test]
    fn rejects_single_node_and_nonpositive() {
        let w = two_node(0.5);
        assert_eq!(
            solve_second_eigvec(&w, &[0], &SolverOptions::default()).unwrap_err(),
            NcutError::TooFewNodes(1)
        );
        let bad = two_node(0.0);
        assert!(matches!(
            solve_second_eigvec(&bad, &[0, 1], &SolverOptions::default()),
            Err(NcutError::NonPositiveAffinity { .. })
        ));
    }

    #[test]
    fn constant_vector_is_degenerate() {
        let e = EigenSolution {
            vector: vec![0.5f64; 4],
            eigenvalue: 0.3,
            residual: 0.0,
            node_ids: vec![0, 1, 2, 3],
            iterations: 0,
            grid: (1, 4),
        };
        assert_eq!(bipartition(&e).unwrap_err(), NcutError::DegenerateSplit);
    }

    #[test]
    fn split_invariant_under_sign_and_scale() {
        let v = vec![0.7, -0.2, 0.1, -0.4, 0.3, -0.5];
        let mk = |vector: Vec<f64>| EigenSolution {
            vector,
            eigenvalue: 0.1,
            residual: 0.0,
            node_ids: (0..6).collect(),
            iterations: 0,
            grid: (2, 3),
        };
        let base = bipartition(&mk(v.clone())).unwrap();
        for c in [-1.0, 3.0, -0.25] {
            let other = bipartition(&mk(v.iter().map(|x| x * c).collect())).unwrap();
            assert_eq!(base, other, "c = {c}");
        }
    }

    #[test]
    fn block_graph_separates_by_sign() {
        let block = |i: usize, j: usize| {
            if (i < 3) == (j < 3) {
                1.0
            } else {
                AFFINITY_FLOOR
            }
        };
        let w = AffinityMatrix::from_fn(6, block);
        let e = solve_second_eigvec(&w, &(0..6).collect::<Vec<_>>(), &SolverOptions::default())
            .unwrap();
        assert!(e.residual <= 1e-6);
        let s0 = e.vector[0].signum();
        assert!(e.vector[..3].iter().all(|v| v.signum() == s0));
        assert!(e.vector[3..].iter().all(|v| v.signum() == -s0));
    }

    #[test]
    fn single_iteration_removes_nothing_observable() {
        let w = AffinityMatrix::from_fn(20, |i, j| {
            if (i < 5) == (j < 5) {
                1.0
            } else {
                AFFINITY_FLOOR
            }
        });
        let opts = CutLoopOptions {
            n_iters: 1,
            ..CutLoopOptions::default()
        };
        let out = cut_loop(&w, &opts, |_, _, _| Mask::empty(1, 20));
        assert_eq!(out.cuts.len(), 1);
        assert_eq!(out.stop, StopReason::Completed);
        assert_eq!(
            out.cuts[0].foreground.count() + out.cuts[0].background.count(),
            20
        );
    }
}
