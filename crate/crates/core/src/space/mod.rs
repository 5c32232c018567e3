//! Finite metric measure spaces: points `0..n`, a metric, a positive
//! measure, and optionally the conductance graph the space was built from.

mod generators;
mod io;
mod profile;

use std::collections::BinaryHeap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use generators::{
    binary_tree, connected_sum, explicit, graph, grid, path, product_space, random_explicit,
    random_geometric, Sigma2,
};
pub use io::SpaceFile;
pub use profile::{
    annuli_constant, covering_cardinality_bound, doubling_profile, exp_doubling_constant,
    separated_cover, vitali_subcover, AnnuliReport, CoverReport, DoublingProfile, ExpDoublingReport,
    VitaliReport,
};

pub type PointId = usize;

/// Spaces up to this size cache all pairwise graph distances.
const GRAPH_CACHE_MAX: usize = 4096;

/// Spaces up to this size keep every sorted distance row after first use.
const ROW_CACHE_MAX: usize = 2048;

/// How distances are produced.
#[derive(Debug, Clone)]
pub enum Metric {
    /// Row-major `n x n` matrix.
    Dense(Vec<f64>),
    /// Grid graph distance: Manhattan distance of lattice indices times `h`.
    Lattice { shape: Vec<usize>, h: f64 },
    /// Complete binary tree in heap order with unit edges.
    BinaryTree,
    /// Shortest-path distance of a weighted graph.
    Graph { n: usize, adj: Vec<Vec<(usize, f64)>>, cache: Option<Vec<f64>> },
    /// `sqrt(|s - t|^2 h^2 + d(m, k)^2)` on `line x base`, index `s * base_n + m`.
    Product { base_n: usize, h: f64, base: Box<Metric> },
}

impl Metric {
    pub(crate) fn graph(n: usize, edges: &[(usize, usize, f64)]) -> Result<Metric> {
        let mut adj = vec![Vec::new(); n];
        for &(u, v, len) in edges {
            if u >= n || v >= n {
                return Err(Error::UnknownPoint(u.max(v)));
            }
            if !(len > 0.0) || !len.is_finite() {
                return invalid(format!("edge ({u},{v}) has non-positive length {len}"));
            }
            adj[u].push((v, len));
            adj[v].push((u, len));
        }
        let mut m = Metric::Graph { n, adj, cache: None };
        let first = m.row(0, n);
        if let Some(bad) = first.iter().position(|d| !d.is_finite()) {
            return invalid(format!("graph is disconnected: point {bad} unreachable from 0"));
        }
        if n <= GRAPH_CACHE_MAX {
            let mut all = Vec::with_capacity(n * n);
            for i in 0..n {
                all.extend(m.row(i, n));
            }
            // Path sums taken from opposite ends can differ in the last bit.
            for i in 0..n {
                for j in i + 1..n {
                    let d = all[i * n + j].min(all[j * n + i]);
                    all[i * n + j] = d;
                    all[j * n + i] = d;
                }
            }
            if let Metric::Graph { cache, .. } = &mut m {
                *cache = Some(all);
            }
        }
        Ok(m)
    }

    fn distance(&self, n: usize, x: usize, y: usize) -> f64 {
        match self {
            Metric::Dense(m) => m[x * n + y],
            Metric::Lattice { shape, h } => {
                let (mut a, mut b, mut s) = (x, y, 0usize);
                for &len in shape.iter().rev() {
                    s += (a % len).abs_diff(b % len);
                    a /= len;
                    b /= len;
                }
                s as f64 * h
            }
            Metric::BinaryTree => tree_distance(x, y) as f64,
            Metric::Graph { cache: Some(c), .. } => c[x * n + y],
            Metric::Graph { .. } => self.row(x, n)[y],
            Metric::Product { base_n, h, base } => {
                let (s, m) = (x / base_n, x % base_n);
                let (t, k) = (y / base_n, y % base_n);
                let a = s.abs_diff(t) as f64 * h;
                let b = base.distance(*base_n, m, k);
                (a * a + b * b).sqrt()
            }
        }
    }

    fn row(&self, x: usize, n: usize) -> Vec<f64> {
        match self {
            Metric::Graph { adj, cache: None, .. } => dijkstra(adj, x),
            Metric::Graph { cache: Some(c), .. } => c[x * n..(x + 1) * n].to_vec(),
            Metric::Dense(m) => m[x * n..(x + 1) * n].to_vec(),
            Metric::Product { base_n, h, base } => {
                let (s, m) = (x / base_n, x % base_n);
                let brow = base.row(m, *base_n);
                let lines = n / base_n;
                let mut out = Vec::with_capacity(n);
                for t in 0..lines {
                    let a = s.abs_diff(t) as f64 * h;
                    out.extend(brow.iter().map(|b| (a * a + b * b).sqrt()));
                }
                out
            }
            _ => (0..n).map(|y| self.distance(n, x, y)).collect(),
        }
    }
}

fn tree_depth(i: usize) -> u32 {
    usize::BITS - 1 - (i + 1).leading_zeros()
}

fn tree_distance(mut x: usize, mut y: usize) -> usize {
    let mut d = 0;
    while x != y {
        if tree_depth(x) >= tree_depth(y) {
            x = (x - 1) / 2;
        } else {
            y = (y - 1) / 2;
        }
        d += 1;
    }
    d
}

fn dijkstra(adj: &[Vec<(usize, f64)>], src: usize) -> Vec<f64> {
    #[derive(PartialEq)]
    struct Item(f64, usize);
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Item {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            o.0.partial_cmp(&self.0).unwrap().then(o.1.cmp(&self.1))
        }
    }
    let mut dist = vec![f64::INFINITY; adj.len()];
    dist[src] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Item(0.0, src));
    while let Some(Item(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, len) in &adj[u] {
            let nd = d + len;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Item(nd, v));
            }
        }
    }
    dist
}

/// Conductance edge `u < v` with weight `w > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

/// Recipe a space was generated from; lets saved spaces be rebuilt with
/// their lattice or product structure intact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Grid { dim: usize, side: usize, h: f64, sigma2: f64 },
    BinaryTree { depth: usize },
    ConnectedSum { copies: Vec<(usize, usize)>, neck: usize },
    Product { base: Box<Generator>, n_line: usize, h: f64 },
}

/// A finite metric measure space.
#[derive(Debug, Clone)]
pub struct MetricMeasureSpace {
    n: usize,
    metric: Metric,
    measure: Vec<f64>,
    coords: Option<Vec<Vec<f64>>>,
    edges: Vec<Edge>,
    boundary: Vec<bool>,
    factors: Option<Vec<MetricMeasureSpace>>,
    generator: Option<Generator>,
    diameter: OnceLock<f64>,
    rows: OnceLock<Vec<SortedRow>>,
}

impl MetricMeasureSpace {
    pub(crate) fn assemble(
        metric: Metric,
        measure: Vec<f64>,
        coords: Option<Vec<Vec<f64>>>,
        edges: Vec<Edge>,
        boundary: Vec<bool>,
    ) -> Result<Self> {
        let n = measure.len();
        if n == 0 {
            return invalid("space has no points");
        }
        if let Some(i) = measure.iter().position(|&m| !(m > 0.0) || !m.is_finite()) {
            return invalid(format!("measure of point {i} is not positive"));
        }
        if let Some(c) = &coords {
            if c.len() != n {
                return invalid("coords length does not match n");
            }
        }
        if boundary.len() != n {
            return invalid("boundary flags length does not match n");
        }
        for e in &edges {
            if e.u >= n || e.v >= n {
                return Err(Error::UnknownPoint(e.u.max(e.v)));
            }
            if !(e.w > 0.0) {
                return invalid(format!("edge ({},{}) has non-positive conductance", e.u, e.v));
            }
        }
        Ok(MetricMeasureSpace {
            n,
            metric,
            measure,
            coords,
            edges,
            boundary,
            factors: None,
            generator: None,
            diameter: OnceLock::new(),
            rows: OnceLock::new(),
        })
    }

    pub(crate) fn with_factors(mut self, factors: Vec<MetricMeasureSpace>) -> Self {
        self.factors = Some(factors);
        self
    }

    pub(crate) fn with_generator(mut self, g: Generator) -> Self {
        self.generator = Some(g);
        self
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    /// Conductance graph, if the space came with one.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Points on the generator's boundary (grid faces, path ends, tree leaves).
    pub fn boundary(&self) -> &[bool] {
        &self.boundary
    }

    pub fn interior(&self) -> Vec<PointId> {
        (0..self.n).filter(|&i| !self.boundary[i]).collect()
    }

    /// Factor spaces whose tensor product reproduces this space (measure,
    /// conductances and index order), when known.
    pub fn factors(&self) -> Option<&[MetricMeasureSpace]> {
        self.factors.as_deref()
    }

    pub fn generator(&self) -> Option<&Generator> {
        self.generator.as_ref()
    }

    pub fn check_point(&self, x: PointId) -> Result<()> {
        if x < self.n {
            Ok(())
        } else {
            Err(Error::UnknownPoint(x))
        }
    }

    pub fn distance(&self, x: PointId, y: PointId) -> f64 {
        self.metric.distance(self.n, x, y)
    }

    pub fn distances_from(&self, x: PointId) -> Vec<f64> {
        self.metric.row(x, self.n)
    }

    pub fn total_measure(&self) -> f64 {
        self.measure.iter().sum()
    }

    pub fn measure_of(&self, set: &[PointId]) -> f64 {
        set.iter().map(|&i| self.measure[i]).sum()
    }

    pub fn diameter(&self) -> f64 {
        *self.diameter.get_or_init(|| match &self.metric {
            Metric::Lattice { shape, h } => shape.iter().map(|s| s - 1).sum::<usize>() as f64 * h,
            Metric::BinaryTree => {
                let depth = tree_depth(self.n - 1) as f64;
                2.0 * depth
            }
            _ => (0..self.n)
                .map(|x| self.distances_from(x).into_iter().fold(0.0, f64::max))
                .fold(0.0, f64::max),
        })
    }

    /// Smallest positive distance.
    pub fn min_positive_distance(&self) -> f64 {
        match &self.metric {
            Metric::Lattice { h, .. } => *h,
            Metric::BinaryTree => 1.0,
            _ => (0..self.n)
                .map(|x| {
                    self.distances_from(x)
                        .into_iter()
                        .filter(|&d| d > 0.0)
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Open ball `{y : d(x, y) < r}`, sorted by id.
    pub fn ball(&self, x: PointId, r: f64) -> Result<Ball> {
        self.check_point(x)?;
        if !(r > 0.0) {
            return invalid(format!("ball radius must be positive, got {r}"));
        }
        let members = self
            .distances_from(x)
            .iter()
            .enumerate()
            .filter(|(_, &d)| d < r)
            .map(|(i, _)| i)
            .collect();
        Ok(Ball { center: x, radius: r, members })
    }

    pub fn ball_measure(&self, x: PointId, r: f64) -> f64 {
        self.distances_from(x)
            .iter()
            .zip(&self.measure)
            .filter(|(&d, _)| d < r)
            .map(|(_, m)| m)
            .sum()
    }

    /// Distances from `x` sorted ascending (ties by id), with the
    /// cumulative measure of each prefix.
    pub fn sorted_row(&self, x: PointId) -> SortedRow {
        let d = self.distances_from(x);
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap().then(a.cmp(&b)));
        let dist: Vec<f64> = order.iter().map(|&i| d[i]).collect();
        let mut cum = Vec::with_capacity(self.n + 1);
        cum.push(0.0);
        let mut s = 0.0;
        for &i in &order {
            s += self.measure[i];
            cum.push(s);
        }
        SortedRow { center: x, order, dist, cum_measure: cum }
    }
}

impl MetricMeasureSpace {
    /// Runs `f` on the sorted row of `x`, reusing a cache on small spaces.
    pub fn with_row<T>(&self, x: PointId, f: impl FnOnce(&SortedRow) -> T) -> T {
        if self.n <= ROW_CACHE_MAX {
            let rows = self.rows.get_or_init(|| {
                use rayon::prelude::*;
                (0..self.n).into_par_iter().map(|y| self.sorted_row(y)).collect()
            });
            f(&rows[x])
        } else {
            f(&self.sorted_row(x))
        }
    }
}

/// An open ball with its member list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: PointId,
    pub radius: f64,
    pub members: Vec<PointId>,
}

impl Ball {
    pub fn contains(&self, x: PointId) -> bool {
        self.members.binary_search(&x).is_ok()
    }
}

/// Distances from one center in ascending order.
#[derive(Debug, Clone)]
pub struct SortedRow {
    pub center: PointId,
    /// Point ids by increasing distance.
    pub order: Vec<PointId>,
    /// `dist[k] = d(center, order[k])`.
    pub dist: Vec<f64>,
    /// `cum_measure[k]` is the measure of the first `k` points.
    pub cum_measure: Vec<f64>,
}

impl SortedRow {
    /// Number of points with distance `< r`.
    pub fn count_below(&self, r: f64) -> usize {
        self.dist.partition_point(|&d| d < r)
    }

    pub fn ball_measure(&self, r: f64) -> f64 {
        self.cum_measure[self.count_below(r)]
    }

    /// Every distinct open ball around the center with some radius in
    /// `(0, cap]`, as `(member count, radius)`. The radius is the right end
    /// of the interval of radii giving that ball, clipped to `cap`; for the
    /// whole space with unbounded `cap` it is infinite.
    pub fn ball_levels(&self, cap: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let n = self.dist.len();
        let mut k = 0;
        while k < n {
            let u = self.dist[k];
            if u >= cap {
                break;
            }
            let mut end = k + 1;
            while end < n && self.dist[end] == u {
                end += 1;
            }
            let next = if end < n { self.dist[end] } else { f64::INFINITY };
            out.push((end, next.min(cap)));
            k = end;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_distances() {
        assert_eq!(tree_distance(0, 0), 0);
        assert_eq!(tree_distance(1, 2), 2);
        assert_eq!(tree_distance(3, 6), 4);
        assert_eq!(tree_distance(3, 4), 2);
        assert_eq!(tree_distance(0, 14), 3);
    }

    #[test]
    fn ball_levels_cover_each_ball_once() {
        let s = path(5, 1.0).unwrap();
        let row = s.sorted_row(2);
        assert_eq!(row.ball_levels(f64::INFINITY), vec![(1, 1.0), (3, 2.0), (5, f64::INFINITY)]);
        assert_eq!(row.ball_levels(1.5), vec![(1, 1.0), (3, 1.5)]);
        assert_eq!(row.ball_levels(1.0), vec![(1, 1.0)]);
    }
}
