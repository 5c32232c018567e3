//! Standard spaces: grids, paths, binary trees, connected sums, explicit
//! metrics, weighted graphs, products with a line, and seeded random spaces.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use super::{Edge, Generator, Metric, MetricMeasureSpace};
use crate::error::{invalid, Result};
use crate::util::rng_stream;

/// Density `sigma^2` of a grid, as a constant or a function of coordinates.
#[derive(Clone)]
pub enum Sigma2 {
    Constant(f64),
    Function(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl Sigma2 {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Sigma2::Constant(c) => *c,
            Sigma2::Function(f) => f(x),
        }
    }
}

impl fmt::Debug for Sigma2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sigma2::Constant(c) => write!(f, "Constant({c})"),
            Sigma2::Function(_) => write!(f, "Function(..)"),
        }
    }
}

fn lattice_index(idx: &[usize], side: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * side + i)
}

fn lattice_coords(mut p: usize, dim: usize, side: usize) -> Vec<usize> {
    let mut c = vec![0; dim];
    for k in (0..dim).rev() {
        c[k] = p % side;
        p /= side;
    }
    c
}

/// Lattice `{0..side}^dim` with spacing `h`, graph metric (Manhattan times
/// `h`), measure `sigma^2(x) h^dim` and conductance
/// `sigma^2(midpoint) h^(dim-2)` on lattice edges.
pub fn grid(dim: usize, side: usize, h: f64, sigma2: Sigma2) -> Result<MetricMeasureSpace> {
    if dim == 0 || side == 0 {
        return invalid("grid needs dim >= 1 and side >= 1");
    }
    if !(h > 0.0) {
        return invalid("grid spacing must be positive");
    }
    let n = side
        .checked_pow(dim as u32)
        .filter(|&n| n <= 50_000_000)
        .ok_or_else(|| crate::Error::InvalidInput("grid too large".into()))?;
    let mut coords = Vec::with_capacity(n);
    let mut measure = Vec::with_capacity(n);
    let mut boundary = Vec::with_capacity(n);
    let mut edges = Vec::new();
    let hd = h.powi(dim as i32);
    let hw = h.powi(dim as i32 - 2);
    for p in 0..n {
        let idx = lattice_coords(p, dim, side);
        let x: Vec<f64> = idx.iter().map(|&i| i as f64 * h).collect();
        measure.push(sigma2.eval(&x) * hd);
        boundary.push(idx.iter().any(|&i| i == 0 || i + 1 == side));
        for k in 0..dim {
            if idx[k] + 1 < side {
                let mut j = idx.clone();
                j[k] += 1;
                let mut mid = x.clone();
                mid[k] += 0.5 * h;
                edges.push(Edge { u: p, v: lattice_index(&j, side), w: sigma2.eval(&mid) * hw });
            }
        }
        coords.push(x);
    }
    let metric = Metric::Lattice { shape: vec![side; dim], h };
    let mut space = MetricMeasureSpace::assemble(metric, measure, Some(coords), edges, boundary)?;
    if let Sigma2::Constant(c) = sigma2 {
        space = space.with_generator(Generator::Grid { dim, side, h, sigma2: c });
        if dim > 1 {
            let per = c.powf(1.0 / dim as f64);
            let f = grid(1, side, h, Sigma2::Constant(per))?;
            space = space.with_factors(vec![f; dim]);
        }
    }
    Ok(space)
}

/// `n` points at spacing `h` on a line, unit density.
pub fn path(n: usize, h: f64) -> Result<MetricMeasureSpace> {
    grid(1, n, h, Sigma2::Constant(1.0))
}

/// Complete binary tree of the given depth (`2^(depth+1) - 1` nodes, heap
/// order), unit edges, counting measure; leaves form the boundary.
pub fn binary_tree(depth: usize) -> Result<MetricMeasureSpace> {
    if depth > 22 {
        return invalid("binary tree depth too large");
    }
    let n = (1usize << (depth + 1)) - 1;
    let first_leaf = (1usize << depth) - 1;
    let edges = (1..n).map(|v| Edge { u: (v - 1) / 2, v, w: 1.0 }).collect();
    let boundary = (0..n).map(|i| i >= first_leaf).collect();
    let space = MetricMeasureSpace::assemble(Metric::BinaryTree, vec![1.0; n], None, edges, boundary)?;
    Ok(space.with_generator(Generator::BinaryTree { depth }))
}

/// Copies of unit grids `(dim, side)` chained by necks: the far corner of
/// copy `i` is joined to the origin corner of copy `i + 1` by a path with
/// `neck` unit edges.
pub fn connected_sum(copies: &[(usize, usize)], neck: usize) -> Result<MetricMeasureSpace> {
    if copies.len() < 2 {
        return invalid("connected sum needs at least two copies");
    }
    if neck == 0 {
        return invalid("neck length must be at least 1");
    }
    let mut measure = Vec::new();
    let mut boundary = Vec::new();
    let mut edges = Vec::new();
    let mut attach = Vec::new();
    let mut prev_far: Option<usize> = None;
    for (ci, &(dim, side)) in copies.iter().enumerate() {
        let g = grid(dim, side, 1.0, Sigma2::Constant(1.0))?;
        let mut link = prev_far;
        if let Some(mut last) = prev_far {
            for _ in 1..neck {
                let id = measure.len();
                measure.push(1.0);
                boundary.push(false);
                edges.push(Edge { u: last, v: id, w: 1.0 });
                last = id;
            }
            link = Some(last);
        }
        let off = measure.len();
        measure.extend_from_slice(g.measure());
        boundary.extend_from_slice(g.boundary());
        edges.extend(g.edges().iter().map(|e| Edge { u: e.u + off, v: e.v + off, w: e.w }));
        if let Some(last) = link {
            edges.push(Edge { u: last, v: off, w: 1.0 });
            attach.push(off);
        }
        prev_far = None;
        if ci + 1 < copies.len() {
            prev_far = Some(off + g.len() - 1);
            attach.push(off + g.len() - 1);
        }
    }
    for a in attach {
        boundary[a] = false;
    }
    let metric_edges: Vec<(usize, usize, f64)> = edges.iter().map(|e| (e.u, e.v, 1.0)).collect();
    let metric = Metric::graph(measure.len(), &metric_edges)?;
    let space = MetricMeasureSpace::assemble(metric, measure, None, edges, boundary)?;
    Ok(space.with_generator(Generator::ConnectedSum { copies: copies.to_vec(), neck }))
}

/// Space from an explicit distance matrix. The metric axioms are checked
/// exhaustively up to 500 points and on a seeded sample of one million
/// triples above that.
pub fn explicit(matrix: Vec<Vec<f64>>, measure: Vec<f64>) -> Result<MetricMeasureSpace> {
    let n = matrix.len();
    if measure.len() != n {
        return invalid("measure length does not match the distance matrix");
    }
    let mut flat = Vec::with_capacity(n * n);
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != n {
            return invalid(format!("distance matrix row {i} has wrong length"));
        }
        flat.extend_from_slice(row);
    }
    check_metric(n, &flat)?;
    MetricMeasureSpace::assemble(Metric::Dense(flat), measure, None, Vec::new(), vec![false; n])
}

fn check_metric(n: usize, d: &[f64]) -> Result<()> {
    for i in 0..n {
        if d[i * n + i] != 0.0 {
            return invalid(format!("d({i},{i}) is not zero"));
        }
        for j in 0..n {
            let v = d[i * n + j];
            if !v.is_finite() || v < 0.0 {
                return invalid(format!("d({i},{j}) = {v} is not a finite nonnegative number"));
            }
            if v != d[j * n + i] {
                return invalid(format!("distance matrix is not symmetric at ({i},{j})"));
            }
            if i != j && v == 0.0 {
                return invalid(format!("distinct points {i} and {j} at distance zero"));
            }
        }
    }
    let tol = |a: f64| 1e-12 * a.max(1.0);
    let bad = |i: usize, j: usize, k: usize| d[i * n + k] > d[i * n + j] + d[j * n + k] + tol(d[i * n + k]);
    if n <= 500 {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if bad(i, j, k) {
                        return invalid(format!("triangle inequality fails for ({i},{j},{k})"));
                    }
                }
            }
        }
    } else {
        let mut rng = rng_stream(0x7269_616e_676c_65, 0);
        for _ in 0..1_000_000 {
            let (i, j, k) = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
            if bad(i, j, k) {
                return invalid(format!("triangle inequality fails for ({i},{j},{k})"));
            }
        }
    }
    Ok(())
}

/// Shortest-path metric of a connected weighted graph `(u, v, length)`.
/// Conductances default to `1 / length`.
pub fn graph(n: usize, edges: &[(usize, usize, f64)], measure: Vec<f64>) -> Result<MetricMeasureSpace> {
    if measure.len() != n {
        return invalid("measure length does not match n");
    }
    let metric = Metric::graph(n, edges)?;
    let cond = edges
        .iter()
        .map(|&(u, v, len)| Edge { u: u.min(v), v: u.max(v), w: 1.0 / len })
        .collect();
    MetricMeasureSpace::assemble(metric, measure, None, cond, vec![false; n])
}

/// `line x space` where the line has `n_line` points at spacing `h`;
/// metric `sqrt(|s - t|^2 + d(m, k)^2)`, measure `h * mu`, index
/// `s * n + m` (line coordinate slowest).
pub fn product_space(space: &MetricMeasureSpace, n_line: usize, h: f64) -> Result<MetricMeasureSpace> {
    if n_line < 2 || !(h > 0.0) {
        return invalid("product line needs n_line >= 2 and h > 0");
    }
    let n = space.len();
    let mut measure = Vec::with_capacity(n * n_line);
    let mut boundary = Vec::with_capacity(n * n_line);
    let mut edges = Vec::new();
    for s in 0..n_line {
        for m in 0..n {
            measure.push(h * space.measure()[m]);
            boundary.push(s == 0 || s + 1 == n_line || space.boundary()[m]);
            if s + 1 < n_line {
                edges.push(Edge { u: s * n + m, v: (s + 1) * n + m, w: space.measure()[m] / h });
            }
        }
        for e in space.edges() {
            edges.push(Edge { u: s * n + e.u, v: s * n + e.v, w: e.w * h });
        }
    }
    let coords = space.coords().map(|c| {
        (0..n_line)
            .flat_map(|s| c.iter().map(move |x| std::iter::once(s as f64 * h).chain(x.iter().copied()).collect()))
            .collect()
    });
    let metric = Metric::Product { base_n: n, h, base: Box::new(space.metric().clone()) };
    let mut out = MetricMeasureSpace::assemble(metric, measure, coords, edges, boundary)?;
    let line = path(n_line, h)?;
    let mut factors = vec![line];
    match space.factors() {
        Some(f) => factors.extend(f.iter().cloned()),
        None => factors.push(space.clone()),
    }
    out = out.with_factors(factors);
    if let Some(g) = space.generator() {
        out = out.with_generator(Generator::Product { base: Box::new(g.clone()), n_line, h });
    }
    Ok(out)
}

/// Seeded random geometric graph: `n` uniform points in the unit square,
/// each joined to its `k` nearest neighbours with Euclidean edge lengths,
/// consecutive points chained to guarantee connectivity; measure uniform
/// in `[0.5, 2]`.
pub fn random_geometric(n: usize, k: usize, seed: u64) -> Result<MetricMeasureSpace> {
    if n == 0 {
        return invalid("random space needs at least one point");
    }
    let mut rng = rng_stream(seed, 1);
    let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    let measure: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    let dist = |a: usize, b: usize| ((pts[a][0] - pts[b][0]).powi(2) + (pts[a][1] - pts[b][1]).powi(2)).sqrt();
    let mut edges = Vec::new();
    for a in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&b| b != a).collect();
        others.sort_by(|&x, &y| dist(a, x).partial_cmp(&dist(a, y)).unwrap().then(x.cmp(&y)));
        for &b in others.iter().take(k) {
            edges.push((a.min(b), a.max(b), dist(a, b).max(1e-9)));
        }
        if a + 1 < n {
            edges.push((a, a + 1, dist(a, a + 1).max(1e-9)));
        }
    }
    edges.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    edges.dedup_by(|x, y| x.0 == y.0 && x.1 == y.1);
    let mut s = graph(n, &edges, measure)?;
    s.coords = Some(pts.iter().map(|p| p.to_vec()).collect());
    Ok(s)
}

/// Seeded random explicit metric: shortest-path closure of a complete
/// graph with edge weights uniform in `[1, 3]`; measure uniform in `[0.5, 2]`.
pub fn random_explicit(n: usize, seed: u64) -> Result<MetricMeasureSpace> {
    if n == 0 {
        return invalid("random space needs at least one point");
    }
    let mut rng = rng_stream(seed, 2);
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let w = rng.gen_range(1.0..3.0);
            d[i][j] = w;
            d[j][i] = w;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    let measure = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    explicit(d, measure)
}
