//! Dinic max-flow with residual-reachability min-cut extraction.

use std::collections::VecDeque;
use std::fmt::Debug;
use std::ops::{Add, Sub};

/// Arc capacity. Integers give exact flows; floats use a relative zero tolerance.
pub trait Capacity:
    Copy + PartialOrd + Add<Output = Self> + Sub<Output = Self> + Debug + Send + Sync
{
    fn nil() -> Self;
    /// Residuals at or below this value count as saturated, given the largest capacity.
    fn tolerance(max_capacity: Self) -> Self;
    fn as_f64(self) -> f64;
}

impl Capacity for i64 {
    fn nil() -> Self {
        0
    }
    fn tolerance(_: Self) -> Self {
        0
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

macro_rules! float_capacity {
    ($t:ty) => {
        impl Capacity for $t {
            fn nil() -> Self {
                0.0
            }
            fn tolerance(max_capacity: Self) -> Self {
                max_capacity * <$t>::EPSILON * 64.0
            }
            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}
float_capacity!(f32);
float_capacity!(f64);

#[derive(Debug, Clone, PartialEq)]
struct Arc<C> {
    to: usize,
    cap: C,
}

/// Flow network over `n` nodes with a designated source and sink.
///
/// Arcs are stored in pairs: arc `2k` and `2k + 1` are each other's reverse.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGraph<C> {
    n: usize,
    source: usize,
    sink: usize,
    arcs: Vec<Arc<C>>,
    adjacency: Vec<Vec<usize>>,
}

impl<C: Capacity> SpatialGraph<C> {
    /// Panics if `source == sink` or either is out of range.
    pub fn new(n: usize, source: usize, sink: usize) -> Self {
        assert!(source < n && sink < n, "terminal out of range");
        assert_ne!(source, sink, "source and sink must differ");
        Self {
            n,
            source,
            sink,
            arcs: Vec::new(),
            adjacency: vec![Vec::new(); n],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    /// Directed arc `u -> v`; its reverse starts with zero capacity.
    pub fn add_arc(&mut self, u: usize, v: usize, cap: C) {
        self.push_pair(u, v, cap, C::nil());
    }

    /// Undirected edge: two opposite arcs of equal capacity.
    pub fn add_edge(&mut self, u: usize, v: usize, cap: C) {
        self.push_pair(u, v, cap, cap);
    }

    fn push_pair(&mut self, u: usize, v: usize, fwd: C, back: C) {
        assert!(u < self.n && v < self.n, "arc endpoint out of range");
        assert_ne!(u, v, "self-loops are not allowed");
        assert!(
            fwd >= C::nil() && back >= C::nil(),
            "capacities must be nonnegative"
        );
        let id = self.arcs.len();
        self.arcs.push(Arc { to: v, cap: fwd });
        self.arcs.push(Arc { to: u, cap: back });
        self.adjacency[u].push(id);
        self.adjacency[v].push(id + 1);
    }

    /// All arcs with positive capacity as `(from, to, capacity)`, in insertion order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, C)> + '_ {
        self.arcs
            .iter()
            .enumerate()
            .filter(|(_, a)| a.cap > C::nil())
            .map(|(id, a)| (self.arcs[id ^ 1].to, a.to, a.cap))
    }

    /// Total capacity of arcs leaving `side` (indexed by node).
    pub fn cut_capacity(&self, side: &[bool]) -> C {
        let mut total = C::nil();
        for (from, to, cap) in self.arcs() {
            if side[from] && !side[to] {
                total = total + cap;
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutResult<C> {
    /// Membership of each node in the source side.
    pub source_side: Vec<bool>,
    /// Capacity of the arcs from the source side to the rest.
    pub cut_value: C,
    /// Total flow pushed from source to sink.
    pub flow_value: C,
    /// Arcs crossing the cut, `(from, to)`.
    pub saturated_arcs: Vec<(usize, usize)>,
}

impl<C> CutResult<C> {
    pub fn source_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.source_side
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| i)
    }
}

/// Maximum flow by Dinic's algorithm; the source side is everything reachable in the final residual graph.
pub fn dinic_mincut<C: Capacity>(g: &SpatialGraph<C>) -> CutResult<C> {
    let max_cap = g
        .arcs
        .iter()
        .fold(C::nil(), |m, a| if a.cap > m { a.cap } else { m });
    let tol = C::tolerance(max_cap);
    let mut residual: Vec<C> = g.arcs.iter().map(|a| a.cap).collect();
    let mut level = vec![usize::MAX; g.n];
    let mut next = vec![0usize; g.n];
    let mut flow = C::nil();

    while bfs_levels(g, &residual, tol, &mut level) {
        next.iter_mut().for_each(|p| *p = 0);
        loop {
            let pushed = augment(g, &mut residual, tol, &level, &mut next);
            match pushed {
                Some(f) => flow = flow + f,
                None => break,
            }
        }
    }

    bfs_levels(g, &residual, tol, &mut level);
    let source_side: Vec<bool> = level.iter().map(|&l| l != usize::MAX).collect();
    let mut cut_value = C::nil();
    let mut saturated_arcs = Vec::new();
    for (from, to, cap) in g.arcs() {
        if source_side[from] && !source_side[to] {
            cut_value = cut_value + cap;
            saturated_arcs.push((from, to));
        }
    }
    CutResult {
        source_side,
        cut_value,
        flow_value: flow,
        saturated_arcs,
    }
}

/// Level graph from the source; returns whether the sink is reachable.
fn bfs_levels<C: Capacity>(
    g: &SpatialGraph<C>,
    residual: &[C],
    tol: C,
    level: &mut [usize],
) -> bool {
    level.iter_mut().for_each(|l| *l = usize::MAX);
    level[g.source] = 0;
    let mut queue = VecDeque::from([g.source]);
    while let Some(u) = queue.pop_front() {
        for &id in &g.adjacency[u] {
            let v = g.arcs[id].to;
            if level[v] == usize::MAX && residual[id] > tol {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    level[g.sink] != usize::MAX
}

/// Finds one augmenting path in the level graph and saturates its bottleneck.
fn augment<C: Capacity>(
    g: &SpatialGraph<C>,
    residual: &mut [C],
    tol: C,
    level: &[usize],
    next: &mut [usize],
) -> Option<C> {
    let mut path: Vec<usize> = Vec::new();
    let mut u = g.source;
    loop {
        if u == g.sink {
            let bottleneck =
                path.iter()
                    .map(|&id| residual[id])
                    .fold(None, |m: Option<C>, r| match m {
                        Some(m) if m <= r => Some(m),
                        _ => Some(r),
                    })?;
            for &id in &path {
                residual[id] = residual[id] - bottleneck;
                residual[id ^ 1] = residual[id ^ 1] + bottleneck;
            }
            return Some(bottleneck);
        }
        let mut advanced = false;
        while next[u] < g.adjacency[u].len() {
            let id = g.adjacency[u][next[u]];
            let v = g.arcs[id].to;
            if residual[id] > tol && level[v] == level[u] + 1 {
                path.push(id);
                u = v;
                advanced = true;
                break;
            }
            next[u] += 1;
        }
        if !advanced {
            // dead end: retreat and skip the arc that led here
            let id = path.pop()?;
            u = g.arcs[id ^ 1].to;
            next[u] += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_arc() {
        let mut g = SpatialGraph::new(2, 0, 1);
        g.add_arc(0, 1, 7i64);
        let r = dinic_mincut(&g);
        assert_eq!(r.cut_value, 7);
        assert_eq!(r.flow_value, 7);
        assert_eq!(r.source_nodes().collect::<Vec<_>>(), vec![0]);
        assert_eq!(r.saturated_arcs, vec![(0, 1)]);
    }

    #[test]
    fn disconnected_terminals() {
        let mut g = SpatialGraph::new(4, 0, 3);
        g.add_edge(0, 1, 2.5f64);
        g.add_edge(2, 3, 1.0);
        let r = dinic_mincut(&g);
        assert_eq!(r.cut_value, 0.0);
        assert_eq!(r.flow_value, 0.0);
        assert_eq!(r.source_side, vec![true, true, false, false]);
    }

    #[test]
    fn classic_network() {
        // CLRS flow network, max flow 23
        let mut g = SpatialGraph::new(6, 0, 5);
        for (u, v, c) in [
            (0, 1, 16),
            (0, 2, 13),
            (2, 1, 4),
            (1, 3, 12),
            (3, 2, 9),
            (2, 4, 14),
            (4, 3, 7),
            (3, 5, 20),
            (4, 5, 4),
        ] {
            g.add_arc(u, v, c as i64);
        }
        let r = dinic_mincut(&g);
        assert_eq!(r.flow_value, 23);
        assert_eq!(r.cut_value, 23);
        assert_eq!(g.cut_capacity(&r.source_side), 23);
        assert!(r.source_side[0] && !r.source_side[5]);
    }

    #[test]
    fn undirected_edge_is_arc_pair() {
        let mut g = SpatialGraph::new(3, 0, 2);
        g.add_edge(0, 1, 3i64);
        g.add_edge(1, 2, 2);
        let arcs: Vec<_> = g.arcs().collect();
        assert_eq!(arcs, vec![(0, 1, 3), (1, 0, 3), (1, 2, 2), (2, 1, 2)]);
        let r = dinic_mincut(&g);
        assert_eq!(r.cut_value, 2);
        assert_eq!(r.source_side, vec![true, true, false]);
    }

    #[test]
    #[should_panic(expected = "source and sink must differ")]
    fn equal_terminals_panic() {
        let _ = SpatialGraph::<i64>::new(2, 1, 1);
    }
}
