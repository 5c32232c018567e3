//! Volume-growth constants and covering lemmas.
//!
//! Every sup over a radius is taken over the finitely many radii at which
//! some ball involved changes, so the values below are exact.

use rayon::prelude::*;
use serde::Serialize;

use super::{Ball, MetricMeasureSpace, PointId, SortedRow};
use crate::error::{invalid, Result};
use crate::report::Check;
use crate::util::ArgMax;

/// Doubling and reverse-doubling constants at scale `R`.
#[derive(Debug, Clone, Serialize)]
pub struct DoublingProfile {
    pub radius: f64,
    /// `A(R) = max mu(B(x,2r)) / mu(B(x,r))` over `0 < r <= R`.
    pub doubling: f64,
    /// `log2 A`.
    pub eta: f64,
    /// `a(R) = max mu(B(x,r)) / mu(B(x,2r))` over `0 < r <= R`.
    pub reverse: f64,
    /// `-log2 a`.
    pub nu: f64,
    /// `8 ln A`, the exponential-doubling constant implied by `A`.
    pub exp_constant: f64,
    pub doubling_witness: (PointId, f64),
    pub reverse_witness: (PointId, f64),
}

fn distinct_positive(row: &SortedRow) -> impl Iterator<Item = f64> + '_ {
    row.dist
        .iter()
        .enumerate()
        .filter(move |&(k, &d)| d > 0.0 && (k == 0 || row.dist[k - 1] != d))
        .map(|(_, &d)| d)
}

/// Doubling profile at scale `radius`.
pub fn doubling_profile(space: &MetricMeasureSpace, radius: f64) -> Result<DoublingProfile> {
    if !(radius > 0.0) {
        return invalid("doubling radius must be positive");
    }
    let (up, down) = (0..space.len())
        .into_par_iter()
        .map(|x| {
            let row = space.sorted_row(x);
            let mut up = ArgMax::new();
            let mut down = ArgMax::new();
            let mut eval = |r: f64| {
                if r > 0.0 && r <= radius {
                    let small = row.ball_measure(r);
                    let big = row.ball_measure(2.0 * r);
                    up.offer(big / small, (x, r));
                    down.offer(small / big, (x, r));
                }
            };
            for d in distinct_positive(&row) {
                eval(d);
                eval(d / 2.0);
            }
            eval(radius);
            (up, down)
        })
        .reduce(|| (ArgMax::new(), ArgMax::new()), |a, b| (a.0.merge(b.0), a.1.merge(b.1)));
    let a = up.value;
    let low = down.value;
    Ok(DoublingProfile {
        radius,
        doubling: a,
        eta: a.log2(),
        reverse: low,
        nu: -low.log2(),
        exp_constant: 8.0 * a.ln(),
        doubling_witness: up.key.unwrap(),
        reverse_witness: down.key.unwrap(),
    })
}

/// Annulus constant `max mu(B(x, r + R/4)) / mu(B(x, r))` over `r > 0`.
#[derive(Debug, Clone, Serialize)]
pub struct AnnuliReport {
    pub radius: f64,
    pub constant: f64,
    pub witness: (PointId, f64),
}

pub fn annuli_constant(space: &MetricMeasureSpace, radius: f64) -> Result<AnnuliReport> {
    if !(radius > 0.0) {
        return invalid("annulus scale must be positive");
    }
    let q = radius / 4.0;
    let best = (0..space.len())
        .into_par_iter()
        .map(|x| {
            let row = space.sorted_row(x);
            let far = *row.dist.last().unwrap();
            let mut best = ArgMax::new();
            let mut eval = |r: f64| {
                if r > 0.0 {
                    best.offer(row.ball_measure(r + q) / row.ball_measure(r), (x, r));
                }
            };
            for d in distinct_positive(&row) {
                eval(d);
                eval(d - q);
            }
            eval(far.max(q));
            best
        })
        .reduce(ArgMax::new, ArgMax::merge);
    Ok(AnnuliReport { radius, constant: best.value, witness: best.key.unwrap() })
}

/// Smallest `D` with `mu(B(x,r)) <= exp(D r / R) mu(B(x,R))` for all
/// `x` and `r >= R`, next to the value `8 ln A(R)` predicted by doubling.
#[derive(Debug, Clone, Serialize)]
pub struct ExpDoublingReport {
    pub radius: f64,
    pub empirical: f64,
    pub predicted: f64,
    pub witness: Option<(PointId, f64)>,
    pub check: Check,
}

pub fn exp_doubling_constant(space: &MetricMeasureSpace, radius: f64) -> Result<ExpDoublingReport> {
    let profile = doubling_profile(space, radius)?;
    let best = (0..space.len())
        .into_par_iter()
        .map(|x| {
            let row = space.sorted_row(x);
            let base = row.ball_measure(radius);
            let mut best = ArgMax::new();
            // For r just above a distance d >= R the ball is {d(x,.) <= d} and
            // R / r is largest, so these radii carry the supremum.
            for d in distinct_positive(&row).filter(|&d| d >= radius) {
                let k = row.dist.partition_point(|&t| t <= d);
                let v = radius / d * (row.cum_measure[k] / base).ln();
                best.offer(v, (x, d));
            }
            best
        })
        .reduce(ArgMax::new, ArgMax::merge);
    let empirical = best.value.max(0.0);
    let predicted = profile.exp_constant;
    Ok(ExpDoublingReport {
        radius,
        empirical,
        predicted,
        witness: best.key,
        check: Check::new(
            "exp_doubling_below_8lnA",
            empirical <= predicted * (1.0 + 1e-12),
            serde_json::json!({ "empirical": empirical, "predicted": predicted, "witness": best.key }),
        ),
    })
}

/// Bound `A exp(16 ln A r / delta)` on the size of a delta-separated subset
/// of a ball of radius `r`, with `A` the doubling constant at `2r + delta`.
pub fn covering_cardinality_bound(space: &MetricMeasureSpace, r: f64, delta: f64) -> Result<f64> {
    let a = doubling_profile(space, 2.0 * r + delta)?.doubling;
    Ok(a * (16.0 * a.ln() * r / delta).exp())
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverReport {
    pub centers: Vec<PointId>,
    pub bound: f64,
    pub checks: Vec<Check>,
}

/// Greedy maximal `delta`-separated subset of a ball (ascending id), with
/// checks that it covers the ball by `delta`-balls, that the half-balls are
/// disjoint, and that its size respects [`covering_cardinality_bound`].
pub fn separated_cover(space: &MetricMeasureSpace, ball: &Ball, delta: f64) -> Result<CoverReport> {
    if !(delta > 0.0) {
        return invalid("delta must be positive");
    }
    if delta > ball.radius {
        return invalid(format!("delta {delta} exceeds the ball radius {}", ball.radius));
    }
    let mut centers: Vec<PointId> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for &y in &ball.members {
        if rows.iter().all(|row| row[y] >= delta) {
            centers.push(y);
            rows.push(space.distances_from(y));
        }
    }
    let mut min_sep = f64::INFINITY;
    for (a, row) in rows.iter().enumerate() {
        for &c in &centers[a + 1..] {
            min_sep = min_sep.min(row[c]);
        }
    }
    let uncovered: Vec<PointId> = ball
        .members
        .iter()
        .copied()
        .filter(|&y| rows.iter().all(|row| row[y] >= delta))
        .collect();
    let mut overlap = None;
    'outer: for (a, row) in rows.iter().enumerate() {
        for y in 0..space.len() {
            if row[y] < delta / 2.0 {
                if let Some(b) = (a + 1..rows.len()).find(|&b| rows[b][y] < delta / 2.0) {
                    overlap = Some((centers[a], centers[b], y));
                    break 'outer;
                }
            }
        }
    }
    let bound = covering_cardinality_bound(space, ball.radius, delta)?;
    let checks = vec![
        Check::new("separated", min_sep >= delta, serde_json::json!({ "min_separation": min_sep })),
        Check::new("covers", uncovered.is_empty(), serde_json::json!({ "uncovered": uncovered.first() })),
        Check::new("half_balls_disjoint", overlap.is_none(), serde_json::json!({ "overlap": overlap })),
        Check::new(
            "cardinality",
            centers.len() as f64 <= bound,
            serde_json::json!({ "count": centers.len(), "bound": bound }),
        ),
    ];
    Ok(CoverReport { centers, bound, checks })
}

#[derive(Debug, Clone, Serialize)]
pub struct VitaliReport {
    /// Indices into the input list of the selected, pairwise disjoint balls.
    pub selected: Vec<usize>,
    pub dilation: f64,
    pub checks: Vec<Check>,
}

/// Greedy Vitali selection: balls by decreasing radius (ties by input
/// order), keeping each one disjoint from those already kept. Requires a
/// dilation factor `c > 3`.
pub fn vitali_subcover(space: &MetricMeasureSpace, balls: &[Ball], c: f64) -> Result<VitaliReport> {
    if !(c > 3.0) {
        return invalid(format!("dilation factor must exceed 3, got {c}"));
    }
    for b in balls {
        space.check_point(b.center)?;
        if let Some(&m) = b.members.iter().find(|&&m| m >= space.len()) {
            return Err(crate::Error::UnknownPoint(m));
        }
    }
    let mut order: Vec<usize> = (0..balls.len()).collect();
    order.sort_by(|&a, &b| balls[b].radius.partial_cmp(&balls[a].radius).unwrap().then(a.cmp(&b)));
    let mut taken = vec![false; space.len()];
    let mut selected = Vec::new();
    for i in order {
        if balls[i].members.iter().all(|&m| !taken[m]) {
            balls[i].members.iter().for_each(|&m| taken[m] = true);
            selected.push(i);
        }
    }
    let mut count = vec![0usize; space.len()];
    for &i in &selected {
        for &m in &balls[i].members {
            count[m] += 1;
        }
    }
    let overlap = count.iter().position(|&k| k > 1);
    let dilated: Vec<Vec<f64>> = selected.iter().map(|&i| space.distances_from(balls[i].center)).collect();
    let mut missed = None;
    'outer: for b in balls {
        for &m in &b.members {
            let inside = selected
                .iter()
                .zip(&dilated)
                .any(|(&i, row)| row[m] < c * balls[i].radius);
            if !inside {
                missed = Some(m);
                break 'outer;
            }
        }
    }
    let checks = vec![
        Check::new("disjoint", overlap.is_none(), serde_json::json!({ "shared_point": overlap })),
        Check::new("dilates_cover", missed.is_none(), serde_json::json!({ "uncovered_point": missed })),
    ];
    Ok(VitaliReport { selected, dilation: c, checks })
}
