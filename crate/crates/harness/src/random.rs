//! Random problem instances for the oracle comparisons.

use pseudomask::affinity::AffinityMatrix;
use pseudomask::SpatialGraph;
use rand::Rng;

/// Symmetric positive affinity with unit diagonal. Alternates between dense
/// uniform weights, soft clusters and near-binary clusters with random flips.
pub fn random_affinity<R: Rng>(rng: &mut R, n: usize) -> AffinityMatrix<f64> {
    let kind = rng.random_range(0..3);
    let clusters = rng.random_range(2..=4);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..clusters)).collect();
    let mut upper = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let same = labels[i] == labels[j];
            upper[i * n + j] = match kind {
                0 => rng.random_range(0.01..1.0),
                1 if same => rng.random_range(0.5..1.0),
                1 => rng.random_range(1e-5..0.2),
                _ => {
                    let on = same != rng.random_bool(0.05);
                    if on {
                        1.0
                    } else {
                        1e-5
                    }
                }
            };
        }
    }
    AffinityMatrix::from_fn(n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Less => upper[i * n + j],
        std::cmp::Ordering::Greater => upper[j * n + i],
    })
}

/// Directed graph on `n` nodes with integer capacities in `0..=max_cap` and distinct random terminals.
pub fn random_flow_graph<R: Rng>(
    rng: &mut R,
    n: usize,
    density: f64,
    max_cap: i64,
) -> SpatialGraph<i64> {
    assert!(n >= 2);
    let s = rng.random_range(0..n);
    let t = (s + rng.random_range(1..n)) % n;
    let mut g = SpatialGraph::new(n, s, t);
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.random_bool(density) {
                g.add_arc(u, v, rng.random_range(0..=max_cap));
            }
        }
    }
    g
}

/// Same shape as [`random_flow_graph`] with real capacities.
pub fn random_real_flow_graph<R: Rng>(rng: &mut R, n: usize, density: f64) -> SpatialGraph<f64> {
    assert!(n >= 2);
    let s = rng.random_range(0..n);
    let t = (s + rng.random_range(1..n)) % n;
    let mut g = SpatialGraph::new(n, s, t);
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(density) {
                g.add_edge(u, v, rng.random_range(0.0..1.0));
            }
        }
    }
    g
}
