//! Off-diagonal kernels, the kernel comparability condition, the ball
//! functional `phi`, truncated kernel operators and their domination by
//! `phi`-maximal functions.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::maximal::{lp_norm, phi_maximal, test_function};
use crate::report::Check;
use crate::space::{doubling_profile, MetricMeasureSpace, PointId};
use crate::util::ArgMax;

/// Kernels are stored densely up to this many points.
pub const DENSE_KERNEL_MAX: usize = 2000;

/// Kernel description as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `d^s / mu(B(x, d))`.
    Riesz { s: f64 },
    /// `m^s / mu(B(x, m)) * exp(-lambda d)` with `m = min(d, 1/lambda)`.
    Bessel { s: f64, lambda: f64 },
    /// `d^exponent`.
    Power { exponent: f64 },
    /// Dense `n x n` matrix stored as a JSON array of rows.
    Matrix { path: String },
}

/// Where a kernel came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelTag {
    Riesz,
    Bessel,
    Custom,
}

type RowFn = dyn Fn(PointId) -> Vec<f64> + Send + Sync;

#[derive(Clone)]
enum Repr {
    Dense(Arc<Vec<f64>>),
    Rows(Arc<RowFn>),
}

/// Kernel `K(x, y)` for `x != y`. The diagonal is never read.
#[derive(Clone)]
pub struct KernelMatrix {
    n: usize,
    tag: KernelTag,
    repr: Repr,
}

impl std::fmt::Debug for KernelMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.repr {
            Repr::Dense(_) => "dense",
            Repr::Rows(_) => "rows",
        };
        write!(f, "KernelMatrix {{ n: {}, tag: {:?}, {} }}", self.n, self.tag, kind)
    }
}

impl KernelMatrix {
    /// Dense kernel from a row-major `n x n` array.
    pub fn dense(n: usize, values: Vec<f64>, tag: KernelTag) -> Result<KernelMatrix> {
        if values.len() != n * n {
            return invalid(format!("kernel has {} entries, expected {}", values.len(), n * n));
        }
        Ok(KernelMatrix { n, tag, repr: Repr::Dense(Arc::new(values)) })
    }

    /// Kernel evaluated a row at a time, materialized when small.
    pub fn from_rows(n: usize, tag: KernelTag, row: Arc<RowFn>) -> KernelMatrix {
        if n <= DENSE_KERNEL_MAX {
            let mut values = vec![0.0; n * n];
            values.par_chunks_mut(n).enumerate().for_each(|(x, out)| out.copy_from_slice(&row(x)));
            KernelMatrix { n, tag, repr: Repr::Dense(Arc::new(values)) }
        } else {
            KernelMatrix { n, tag, repr: Repr::Rows(row) }
        }
    }

    /// Closed-form kernel `g(d, mu(B(x, d)))` evaluated on the space.
    pub fn closed_form(
        space: &MetricMeasureSpace,
        tag: KernelTag,
        g: impl Fn(f64, &dyn Fn(f64) -> f64) -> f64 + Send + Sync + 'static,
    ) -> KernelMatrix {
        let sp = Arc::new(space.clone());
        let n = space.len();
        let row = move |x: PointId| {
            sp.with_row(x, |row| {
                let vol = |r: f64| row.ball_measure(r);
                let d = sp.distances_from(x);
                d.iter().enumerate().map(|(y, &t)| if y == x { 0.0 } else { g(t, &vol) }).collect()
            })
        };
        KernelMatrix::from_rows(n, tag, Arc::new(row))
    }

    pub fn from_spec(space: &MetricMeasureSpace, spec: &KernelSpec, base: Option<&Path>) -> Result<KernelMatrix> {
        match *spec {
            KernelSpec::Riesz { s } => Ok(riesz_form(space, s)),
            KernelSpec::Bessel { s, lambda } => {
                if !(lambda > 0.0) {
                    return invalid("Bessel kernel needs lambda > 0");
                }
                Ok(KernelMatrix::closed_form(space, KernelTag::Bessel, move |d, vol| {
                    let m = d.min(1.0 / lambda);
                    m.powf(s) / vol(m) * (-lambda * d).exp()
                }))
            }
            KernelSpec::Power { exponent } => {
                Ok(KernelMatrix::closed_form(space, KernelTag::Custom, move |d, _| d.powf(exponent)))
            }
            KernelSpec::Matrix { ref path } => {
                let p = match base {
                    Some(b) => b.join(path),
                    None => Path::new(path).to_path_buf(),
                };
                let rows: Vec<Vec<f64>> = serde_json::from_str(&std::fs::read_to_string(p)?)?;
                let n = space.len();
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return invalid(format!("kernel matrix must be {n} x {n}"));
                }
                KernelMatrix::dense(n, rows.concat(), KernelTag::Custom)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn tag(&self) -> &KernelTag {
        &self.tag
    }

    pub fn get(&self, x: PointId, y: PointId) -> f64 {
        match &self.repr {
            Repr::Dense(v) => v[x * self.n + y],
            Repr::Rows(r) => r(x)[y],
        }
    }

    /// Row `x`; the entry at `x` is meaningless.
    pub fn row(&self, x: PointId) -> Vec<f64> {
        match &self.repr {
            Repr::Dense(v) => v[x * self.n..(x + 1) * self.n].to_vec(),
            Repr::Rows(r) => r(x),
        }
    }

    fn with_row<T>(&self, x: PointId, f: impl FnOnce(&[f64]) -> T) -> T {
        match &self.repr {
            Repr::Dense(v) => f(&v[x * self.n..(x + 1) * self.n]),
            Repr::Rows(r) => f(&r(x)),
        }
    }
}

/// Riesz-form kernel `d(x,y)^s / mu(B(x, d(x,y)))`.
pub fn riesz_form(space: &MetricMeasureSpace, s: f64) -> KernelMatrix {
    KernelMatrix::closed_form(space, KernelTag::Riesz, move |d, vol| d.powf(s) / vol(d))
}

fn check_size(space: &MetricMeasureSpace, k: &KernelMatrix) -> Result<()> {
    if k.len() != space.len() {
        return invalid(format!("kernel is {} x {} but the space has {} points", k.len(), k.len(), space.len()));
    }
    Ok(())
}

/// Result of the comparability check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelCondition {
    pub c2: f64,
    pub dmax: f64,
    /// Smallest admissible `C1`; infinite when the kernel vanishes where a
    /// comparison is required.
    pub c1: f64,
    /// `(x, y, x')` or `(x, y, y')` attaining `c1`, with which slot moved.
    pub witness: Option<(PointId, PointId, PointId, String)>,
}

/// Smallest `C1` such that for all `x != y` with `d(x,y) <= dmax`:
/// `d(x',y) <= C2 d(x,y)` implies `K(x,y) <= C1 K(x',y)`, and
/// `d(x,y') <= C2 d(x,y)` implies `K(x,y) <= C1 K(x,y')`.
pub fn kernel_condition_check(space: &MetricMeasureSpace, k: &KernelMatrix, c2: f64, dmax: f64) -> Result<KernelCondition> {
    check_size(space, k)?;
    if !(c2 > 1.0) {
        return invalid(format!("C2 must exceed 1, got {c2}"));
    }
    let n = space.len();
    // Moving the second slot: along row x, points sorted by distance from x.
    // Moving the first slot: along column y, points sorted by distance from y.
    let cols: Option<Vec<f64>> = if n <= DENSE_KERNEL_MAX {
        let mut t = vec![0.0; n * n];
        for x in 0..n {
            k.with_row(x, |row| {
                for y in 0..n {
                    t[y * n + x] = row[y];
                }
            });
        }
        Some(t)
    } else {
        None
    };
    let results: Vec<Result<ArgMax<(PointId, PointId, PointId, u8)>>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let row_k = k.row(a);
            let col_k: Vec<f64> = match &cols {
                Some(t) => t[a * n..(a + 1) * n].to_vec(),
                None => (0..n).map(|x| k.get(x, a)).collect(),
            };
            let mut best = ArgMax::new();
            space.with_row(a, |row| {
                // Prefix minima of the kernel over points sorted by distance
                // from `a`, skipping `a` itself (the diagonal).
                let scan = |vals: &[f64], slot: u8, best: &mut ArgMax<(PointId, PointId, PointId, u8)>| -> Result<()> {
                    let mut pmin = Vec::with_capacity(n);
                    let mut arg = Vec::with_capacity(n);
                    let (mut m, mut am) = (f64::INFINITY, usize::MAX);
                    for &z in &row.order {
                        if z != a && vals[z] < m {
                            m = vals[z];
                            am = z;
                        }
                        pmin.push(m);
                        arg.push(am);
                    }
                    for (pos, &b) in row.order.iter().enumerate() {
                        let d = row.dist[pos];
                        if b == a || d > dmax {
                            continue;
                        }
                        let kab = vals[b];
                        if kab < 0.0 {
                            return invalid(format!("negative kernel entry at ({a},{b})"));
                        }
                        let reach = row.dist.partition_point(|&t| t <= c2 * d);
                        let (low, who) = (pmin[reach - 1], arg[reach - 1]);
                        if low < 0.0 {
                            return invalid(format!("negative kernel entry next to ({a},{b})"));
                        }
                        let ratio = if kab == 0.0 { 1.0 } else if low == 0.0 { f64::INFINITY } else { kab / low };
                        best.offer(ratio, (a, b, who, slot));
                    }
                    Ok(())
                };
                scan(&row_k, 1, &mut best)?;
                scan(&col_k, 0, &mut best)
            })?;
            Ok(best)
        })
        .collect();
    let mut best = ArgMax::new();
    for r in results {
        best = best.merge(r?);
    }
    let witness = best.key.map(|(a, b, w, slot)| {
        if slot == 1 {
            (a, b, w, "y'".to_string())
        } else {
            // column scan: a is y, b is x
            (b, a, w, "x'".to_string())
        }
    });
    Ok(KernelCondition { c2, dmax, c1: if best.key.is_some() { best.value.max(1.0) } else { 1.0 }, witness })
}

/// `phi(B)`: largest `K(x, y)` over `x != y` in `B` with
/// `d(x, y) >= r(B) / (2 rho)`; `empty` flags a vacuous supremum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiValue {
    pub value: f64,
    pub empty: bool,
}

pub fn phi_functional(space: &MetricMeasureSpace, k: &KernelMatrix, center: PointId, radius: f64, members: &[PointId], rho: f64) -> PhiValue {
    let _ = center;
    let threshold = radius / (2.0 * rho);
    let mut best = f64::NEG_INFINITY;
    for &x in members {
        k.with_row(x, |row| {
            for &y in members {
                if y != x && space.distance(x, y) >= threshold {
                    best = best.max(row[y]);
                }
            }
        });
    }
    if best == f64::NEG_INFINITY {
        PhiValue { value: 0.0, empty: true }
    } else {
        PhiValue { value: best, empty: false }
    }
}

/// A ball of the critical family used by the growth and domination checks.
#[derive(Debug, Clone)]
struct FamilyBall {
    center: PointId,
    radius: f64,
    members: Vec<PointId>,
    mass: f64,
    phi: f64,
}

fn ball_family(space: &MetricMeasureSpace, k: &KernelMatrix, cap: f64, rho: f64) -> Vec<FamilyBall> {
    let cap = if cap.is_finite() { cap } else { space.diameter() };
    (0..space.len())
        .into_par_iter()
        .flat_map_iter(|x| {
            space.with_row(x, |row| {
                row.ball_levels(cap)
                    .into_iter()
                    .map(|(cnt, r)| {
                        let mut members = row.order[..cnt].to_vec();
                        members.sort_unstable();
                        let phi = phi_functional(space, k, x, r, &members, rho).value;
                        FamilyBall { center: x, radius: r, mass: row.cum_measure[cnt], members, phi }
                    })
                    .collect::<Vec<_>>()
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhiGrowth {
    pub epsilon: f64,
    pub radius_cap: f64,
    pub l: f64,
    pub pass: bool,
    /// `((center, radius), (center, radius))` of the extreme pair `B1 ⊆ B2`.
    pub witness: Option<((PointId, f64), (PointId, f64))>,
    /// Largest `phi(B2) / phi(B1)` over nested pairs.
    pub alpha: f64,
}

/// Smallest `L` with `phi(B1) mu(B1) <= L (r1/r2)^eps phi(B2) mu(B2)` over
/// all nested pairs `B1 ⊆ B2` of critical balls with radius at most the
/// cap. Also reports the largest `phi(B2)/phi(B1)` over the same pairs.
pub fn phi_growth_constant(space: &MetricMeasureSpace, k: &KernelMatrix, eps: f64, radius_cap: f64, rho: f64) -> Result<PhiGrowth> {
    check_size(space, k)?;
    if !(eps > 0.0) {
        return invalid("epsilon must be positive");
    }
    let n = space.len();
    let balls = ball_family(space, k, radius_cap, rho);
    let words = n.div_ceil(64);
    let bits: Vec<Vec<u64>> = balls
        .iter()
        .map(|b| {
            let mut w = vec![0u64; words];
            b.members.iter().for_each(|&y| w[y / 64] |= 1 << (y % 64));
            w
        })
        .collect();
    let mut by_center: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, b) in balls.iter().enumerate() {
        by_center[b.center].push(i);
    }
    let (lbest, abest) = (0..balls.len())
        .into_par_iter()
        .map(|j| {
            let b2 = &balls[j];
            let mut lb = ArgMax::new();
            let mut ab = ArgMax::new();
            for &c in &b2.members {
                for &i in &by_center[c] {
                    let b1 = &balls[i];
                    if b1.members.len() > b2.members.len() {
                        continue;
                    }
                    if !bits[i].iter().zip(&bits[j]).all(|(a, b)| a & !b == 0) {
                        continue;
                    }
                    let top = b1.phi * b1.mass;
                    if top > 0.0 {
                        let bottom = (b1.radius / b2.radius).powf(eps) * b2.phi * b2.mass;
                        let v = if bottom > 0.0 { top / bottom } else { f64::INFINITY };
                        lb.offer(v, (i, j));
                        ab.offer(b2.phi / b1.phi, (i, j));
                    }
                }
            }
            (lb, ab)
        })
        .reduce(|| (ArgMax::new(), ArgMax::new()), |a, b| (a.0.merge(b.0), a.1.merge(b.1)));
    let l = if lbest.key.is_some() { lbest.value } else { 0.0 };
    let witness = lbest
        .key
        .map(|(i, j)| ((balls[i].center, balls[i].radius), (balls[j].center, balls[j].radius)));
    Ok(PhiGrowth {
        epsilon: eps,
        radius_cap,
        l,
        pass: l.is_finite(),
        witness,
        alpha: if abest.key.is_some() { abest.value } else { 0.0 },
    })
}

/// `T_delta f(x) = sum over y != x with d(x,y) < delta of K(x,y) f(y) mu_y`.
pub fn truncated_apply(space: &MetricMeasureSpace, k: &KernelMatrix, delta: f64, f: &[f64]) -> Result<Vec<f64>> {
    check_size(space, k)?;
    if f.len() != space.len() {
        return invalid("function length does not match the space");
    }
    if !(delta > 0.0) {
        return invalid("delta must be positive");
    }
    let mu = space.measure();
    Ok((0..space.len())
        .into_par_iter()
        .map(|x| {
            let d = space.distances_from(x);
            k.with_row(x, |row| {
                let mut s = 0.0;
                for y in 0..d.len() {
                    if y != x && d[y] < delta {
                        s += row[y] * f[y] * mu[y];
                    }
                }
                s
            })
        })
        .collect())
}

/// `M_{phi,delta} f` for the `phi` functional of a kernel.
pub fn kernel_phi_maximal(space: &MetricMeasureSpace, k: &KernelMatrix, f: &[f64], delta: f64, rho: f64) -> Result<Vec<f64>> {
    check_size(space, k)?;
    let phi = |x: PointId, r: f64, members: &[PointId]| {
        let mut m = members.to_vec();
        m.sort_unstable();
        phi_functional(space, k, x, r, &m, rho).value
    };
    Ok(phi_maximal(space, &phi, f, delta)?.values)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DominationReport {
    pub delta: f64,
    pub p: f64,
    pub rho: f64,
    /// Largest `||T_delta f||_p / ||M_{phi,delta} f||_p` over the trials.
    pub c_emp: f64,
    /// Per-trial ratio; `None` for `0/0` trials.
    pub ratios: Vec<Option<f64>>,
    /// Trials where the maximal function vanished but `T_delta f` did not.
    pub violations: Vec<usize>,
    /// Doubling constant at scale `2(6 rho + 1) delta`.
    pub doubling_at_scale: f64,
    /// Kernel condition with `C2 = 1 + 8 rho` for `d(x,y) <= 16(6 rho + 1) delta`.
    pub kernel_condition: KernelCondition,
    /// `phi` growth for radii up to `2(6 rho + 1) delta`, when requested.
    pub phi_growth: Option<PhiGrowth>,
    pub checks: Vec<Check>,
}

/// Empirical constant in `||T_delta f||_p <= C ||M_{phi,delta} f||_p`
/// over seeded nonnegative test functions. Hypotheses of the domination
/// theorem are measured and reported, not enforced.
pub fn domination_check(
    space: &MetricMeasureSpace,
    k: &KernelMatrix,
    delta: f64,
    p: f64,
    trials: usize,
    seed: u64,
    rho: f64,
    with_growth: bool,
) -> Result<DominationReport> {
    check_size(space, k)?;
    if !(p > 1.0) {
        return invalid("domination check needs p > 1");
    }
    if trials == 0 {
        return invalid("at least one trial is required");
    }
    let mut ratios = Vec::with_capacity(trials);
    let mut violations = Vec::new();
    for t in 0..trials {
        let f = test_function(space, t, seed, true);
        let tf = truncated_apply(space, k, delta, &f)?;
        let mf = kernel_phi_maximal(space, k, &f, delta, rho)?;
        let (num, den) = (lp_norm(space, &tf, p), lp_norm(space, &mf, p));
        if den == 0.0 {
            if num > 0.0 {
                violations.push(t);
                ratios.push(Some(f64::INFINITY));
            } else {
                ratios.push(None);
            }
        } else {
            ratios.push(Some(num / den));
        }
    }
    let c_emp = ratios.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    let big = 2.0 * (6.0 * rho + 1.0) * delta;
    let doubling_at_scale = doubling_profile(space, big)?.doubling;
    let kernel_condition = kernel_condition_check(space, k, 1.0 + 8.0 * rho, 8.0 * big)?;
    let phi_growth = if with_growth {
        Some(phi_growth_constant(space, k, 1.0, big, rho)?)
    } else {
        None
    };
    let checks = vec![
        Check::new(
            "trial_ratios_finite",
            ratios.iter().flatten().all(|r| r.is_finite()),
            serde_json::json!({ "violations": violations }),
        ),
        Check::new(
            "kernel_condition_finite",
            kernel_condition.c1.is_finite(),
            serde_json::json!({ "c1": kernel_condition.c1, "witness": kernel_condition.witness }),
        ),
    ];
    Ok(DominationReport {
        delta,
        p,
        rho,
        c_emp,
        ratios,
        violations,
        doubling_at_scale,
        kernel_condition,
        phi_growth,
        checks,
    })
}

impl From<&KernelCondition> for Check {
    fn from(k: &KernelCondition) -> Check {
        Check::new("kernel_condition", k.c1.is_finite(), serde_json::json!({ "c1": k.c1, "witness": k.witness }))
    }
}
