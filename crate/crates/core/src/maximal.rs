//! Centered, uncentered, fractional and ball-functional maximal functions,
//! Morrey norms, and empirical operator norms.
//!
//! A ball around `x` only changes when the radius crosses a distance from
//! `x`, so every supremum below runs over finitely many balls per center.
//! For radius ranges `r < R` the supremum is the limit `r -> R`, which is
//! why a ball's representative radius is clipped to the range bound.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::space::{MetricMeasureSpace, PointId, SortedRow};
use crate::util::{rng_stream, ArgMax};

/// A nonnegative finite function on the points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential(Vec<f64>);

impl Potential {
    pub fn new(values: Vec<f64>) -> Result<Potential> {
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return invalid(format!("potential value at point {i} is negative or not finite"));
        }
        Ok(Potential(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, c: f64) -> Potential {
        Potential(self.0.iter().map(|v| v * c).collect())
    }
}

/// Which maximal operator produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaximalKind {
    Centered,
    Uncentered,
    Fractional,
    Dyadic,
    Phi,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaximalResult {
    pub kind: MaximalKind,
    pub s: f64,
    pub scale: f64,
    pub values: Vec<f64>,
}

fn check_function(space: &MetricMeasureSpace, f: &[f64]) -> Result<()> {
    if f.len() != space.len() {
        return invalid(format!("function has {} values for {} points", f.len(), space.len()));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return invalid("function values must be finite");
    }
    Ok(())
}

/// Prefix sums of `g * mu` along a sorted row.
fn prefix(row: &SortedRow, g: &[f64], mu: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(row.order.len() + 1);
    let mut s = 0.0;
    out.push(0.0);
    for &y in &row.order {
        s += g[y] * mu[y];
        out.push(s);
    }
    out
}

/// Radius bound used for a supremum over `r < bound`. On a finite space an
/// unbounded range is cut at the diameter when the weight grows with `r`.
fn effective_cap(space: &MetricMeasureSpace, bound: f64, weight_grows: bool) -> f64 {
    if bound.is_infinite() && weight_grows {
        space.diameter()
    } else {
        bound
    }
}

fn radius_weight(r: f64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        r.powf(s)
    }
}

/// `M_{s,delta} f(x) = sup_{0<r<delta} r^s avg_{B(x,r)} |f|`. With `s = 0`
/// and `delta = R` this is the centered maximal function `M_R`.
pub fn fractional_maximal(space: &MetricMeasureSpace, f: &[f64], s: f64, delta: f64) -> Result<MaximalResult> {
    check_function(space, f)?;
    if !(s >= 0.0) {
        return invalid(format!("order s must be nonnegative, got {s}"));
    }
    if !(delta > 0.0) {
        return invalid(format!("delta must be positive, got {delta}"));
    }
    let abs: Vec<f64> = f.iter().map(|v| v.abs()).collect();
    let mu = space.measure();
    let cap = effective_cap(space, delta, s > 0.0);
    let values = (0..space.len())
        .into_par_iter()
        .map(|x| {
            space.with_row(x, |row| {
                let pre = prefix(row, &abs, mu);
                row.ball_levels(cap)
                    .into_iter()
                    .map(|(k, r)| radius_weight(r, s) * (pre[k] / row.cum_measure[k]))
                    .fold(0.0, f64::max)
            })
        })
        .collect();
    let kind = if s == 0.0 { MaximalKind::Centered } else { MaximalKind::Fractional };
    Ok(MaximalResult { kind, s, scale: delta, values })
}

/// Centered maximal function `M_R f(x) = sup_{r<R} avg_{B(x,r)} |f|`.
pub fn centered_maximal(space: &MetricMeasureSpace, f: &[f64], radius: f64) -> Result<MaximalResult> {
    fractional_maximal(space, f, 0.0, radius)
}

/// `sup phi(B) * integral_B |f|` over balls `B` containing `x` with
/// `r(B) < delta`. `phi` receives the center, the representative radius
/// and the members of the ball in order of distance from the center.
pub fn phi_maximal(
    space: &MetricMeasureSpace,
    phi: &(dyn Fn(PointId, f64, &[PointId]) -> f64 + Sync),
    f: &[f64],
    delta: f64,
) -> Result<MaximalResult> {
    check_function(space, f)?;
    if !(delta > 0.0) {
        return invalid(format!("delta must be positive, got {delta}"));
    }
    let values = ball_family_sup(space, f, delta, &|x, r, members, integral, _| phi(x, r, members) * integral);
    Ok(MaximalResult { kind: MaximalKind::Phi, s: 0.0, scale: delta, values })
}

/// Uncentered maximal function: the largest average of `|f|` over balls
/// containing `x` with radius at most `R`.
pub fn uncentered_maximal(space: &MetricMeasureSpace, f: &[f64], radius: f64) -> Result<MaximalResult> {
    check_function(space, f)?;
    if !(radius > 0.0) {
        return invalid(format!("radius must be positive, got {radius}"));
    }
    let values = ball_family_sup(space, f, radius, &|_, _, _, integral, mass| integral / mass);
    Ok(MaximalResult { kind: MaximalKind::Uncentered, s: 0.0, scale: radius, values })
}

/// For every point, the max of `value(B)` over the balls of the family
/// (all centers, radii up to `cap`) that contain it. Members of the
/// `k`-th ball around a center are a prefix of the sorted row, so a suffix
/// maximum over the levels gives each member's best ball in one pass.
fn ball_family_sup(
    space: &MetricMeasureSpace,
    f: &[f64],
    cap: f64,
    value: &(dyn Fn(PointId, f64, &[PointId], f64, f64) -> f64 + Sync),
) -> Vec<f64> {
    let n = space.len();
    let abs: Vec<f64> = f.iter().map(|v| v.abs()).collect();
    let mu = space.measure();
    let cap = effective_cap(space, cap, true);
    (0..n)
        .into_par_iter()
        .fold(
            || vec![0.0f64; n],
            |mut acc, x| {
                space.with_row(x, |row| {
                    let pre = prefix(row, &abs, mu);
                    let levels = row.ball_levels(cap);
                    let mut best = vec![0.0f64; levels.len()];
                    for (i, &(k, r)) in levels.iter().enumerate() {
                        best[i] = value(x, r, &row.order[..k], pre[k], row.cum_measure[k]);
                    }
                    for i in (0..best.len().saturating_sub(1)).rev() {
                        best[i] = best[i].max(best[i + 1]);
                    }
                    let mut level = 0;
                    for (pos, &y) in row.order.iter().enumerate() {
                        while level < levels.len() && levels[level].0 <= pos {
                            level += 1;
                        }
                        if level == levels.len() {
                            break;
                        }
                        acc[y] = acc[y].max(best[level]);
                    }
                });
                acc
            },
        )
        .reduce(
            || vec![0.0f64; n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(u, v)| *u = u.max(v));
                a
            },
        )
}

/// Morrey norm `N_{p,R}(V) = sup_{x, r<R} (r^{2p} avg_{B(x,r)} V^p)^{1/p}`,
/// together with the ball attaining it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MorreyNorm {
    pub p: f64,
    pub radius: f64,
    pub value: f64,
    pub witness: Option<(PointId, f64)>,
}

pub fn morrey_norm(space: &MetricMeasureSpace, v: &Potential, p: f64, radius: f64) -> Result<MorreyNorm> {
    check_function(space, v.values())?;
    if !(p > 0.0) {
        return invalid(format!("exponent p must be positive, got {p}"));
    }
    if !(radius > 0.0) {
        return invalid(format!("radius must be positive, got {radius}"));
    }
    let vp: Vec<f64> = v.values().iter().map(|x| x.powf(p)).collect();
    let mu = space.measure();
    let cap = effective_cap(space, radius, true);
    let best = (0..space.len())
        .into_par_iter()
        .map(|x| {
            space.with_row(x, |row| {
                let pre = prefix(row, &vp, mu);
                let mut best = ArgMax::new();
                for (k, r) in row.ball_levels(cap) {
                    let term = radius_weight(r, 2.0 * p) * (pre[k] / row.cum_measure[k]);
                    best.offer(term.powf(1.0 / p), (x, r));
                }
                best
            })
        })
        .reduce(ArgMax::new, ArgMax::merge);
    let value = if best.key.is_some() { best.value } else { 0.0 };
    debug_assert_eq!(value, {
        let m = fractional_maximal(space, &vp, 2.0 * p, radius).unwrap();
        m.values.iter().fold(0.0f64, |a, &b| a.max(b)).powf(1.0 / p)
    });
    Ok(MorreyNorm { p, radius, value, witness: best.key })
}

/// Norm estimate from a fixed corpus of seeded test functions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpNormEstimate {
    pub p: f64,
    pub value: f64,
    pub ratios: Vec<f64>,
    pub worst_trial: usize,
}

/// Test function number `trial`: cycles through constants, point masses,
/// ball indicators and iid Gaussians. With `nonnegative` the Gaussian
/// values are replaced by their absolute values and constants are positive.
pub fn test_function(space: &MetricMeasureSpace, trial: usize, seed: u64, nonnegative: bool) -> Vec<f64> {
    let n = space.len();
    let mut rng = rng_stream(seed, trial as u64);
    match trial % 4 {
        0 => {
            let c: f64 = rng.gen_range(0.5..2.0);
            let c = if !nonnegative && rng.gen_bool(0.5) { -c } else { c };
            vec![c; n]
        }
        1 => {
            let y = rng.gen_range(0..n);
            let mut f = vec![0.0; n];
            f[y] = 1.0 / space.measure()[y];
            f
        }
        2 => {
            let x = rng.gen_range(0..n);
            let diam = space.diameter();
            let r = if diam > 0.0 { rng.gen_range(0.0..0.5 * diam) + f64::MIN_POSITIVE } else { 1.0 };
            let d = space.distances_from(x);
            d.iter().map(|&t| if t < r { 1.0 } else { 0.0 }).collect()
        }
        _ => (0..n)
            .map(|_| {
                let g: f64 = rng.sample(StandardNormal);
                if nonnegative {
                    g.abs()
                } else {
                    g
                }
            })
            .collect(),
    }
}

/// mu-weighted `L^p` norm; `p = inf` gives the max norm.
pub fn lp_norm(space: &MetricMeasureSpace, f: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return f.iter().fold(0.0, |a, v| a.max(v.abs()));
    }
    f.iter().zip(space.measure()).map(|(v, m)| v.abs().powf(p) * m).sum::<f64>().powf(1.0 / p)
}

/// Lower bound on `||T||_{p -> p}` from the seeded test-function corpus.
pub fn empirical_lp_opnorm(
    space: &MetricMeasureSpace,
    apply: &(dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync),
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<OpNormEstimate> {
    if !(p > 1.0) {
        return invalid(format!("operator norms need p > 1, got {p}"));
    }
    if trials == 0 {
        return invalid("at least one trial is required");
    }
    let ratios = (0..trials)
        .into_par_iter()
        .map(|t| {
            let f = test_function(space, t, seed, false);
            let tf = apply(&f)?;
            if tf.len() != f.len() {
                return Err(Error::InvalidInput("operator changed the function length".into()));
            }
            let den = lp_norm(space, &f, p);
            Ok(if den > 0.0 { lp_norm(space, &tf, p) / den } else { 0.0 })
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut best = ArgMax::new();
    for (t, &r) in ratios.iter().enumerate() {
        best.offer(r, t);
    }
    Ok(OpNormEstimate { p, value: best.value, ratios, worst_trial: best.key.unwrap_or(0) })
}

/// Reads a function from CSV (`point_id,value`, optional header) or a
/// JSON array, chosen by file extension.
pub fn read_function(path: &Path, n: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    parse_function(&text, path.extension().and_then(|e| e.to_str()) == Some("json"), n)
}

pub fn parse_function(text: &str, json: bool, n: usize) -> Result<Vec<f64>> {
    if json {
        let v: Vec<f64> = serde_json::from_str(text)?;
        if v.len() != n {
            return invalid(format!("function has {} values for {n} points", v.len()));
        }
        return Ok(v);
    }
    let mut out = vec![f64::NAN; n];
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return invalid(format!("line {}: expected point_id,value", line + 1));
        }
        let id = match rec[0].parse::<usize>() {
            Ok(id) => id,
            Err(_) if line == 0 => continue,
            Err(_) => return invalid(format!("line {}: bad point id", line + 1)),
        };
        if id >= n {
            return Err(Error::UnknownPoint(id));
        }
        out[id] = rec[1]
            .parse()
            .map_err(|_| Error::InvalidInput(format!("line {}: bad value", line + 1)))?;
    }
    if let Some(i) = out.iter().position(|v| v.is_nan()) {
        return invalid(format!("no value given for point {i}"));
    }
    Ok(out)
}

/// CSV text `point_id,value` for a function.
pub fn function_csv(values: &[f64]) -> String {
    let mut s = String::from("point_id,value\n");
    for (i, v) in values.iter().enumerate() {
        s.push_str(&format!("{i},{v}\n"));
    }
    s
}
