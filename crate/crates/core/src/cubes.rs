//! Dyadic cube hierarchies on finite metric spaces and the dyadic maximal
//! function.
//!
//! Cubes are grown bottom-up from nested nets. Level `m` is the whole point
//! set; level `k` keeps a greedy maximal `c rho^k`-separated subset of the
//! level `k - 1` centers, and every level `k - 1` center joins its nearest
//! kept center. A cube is the set of points that descend from its center.
//! With `2(rho-1)/(rho-3) < c <= rho - 1` (possible once `rho >= 5`) every
//! cube satisfies `B(x, rho^k) ⊆ E ⊆ B(x, rho^(k+1))` on any finite space.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::report::Check;
use crate::space::{MetricMeasureSpace, PointId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub center: PointId,
    /// Sorted point ids.
    pub members: Vec<PointId>,
    /// Index of the containing cube in the next level up.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub k: i64,
    pub cubes: Vec<Cube>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeHierarchy {
    pub rho: f64,
    pub m: i64,
    /// Levels `m, m + 1, ..., K`, finest first.
    pub levels: Vec<Level>,
}

impl CubeHierarchy {
    pub fn top_level(&self) -> i64 {
        self.levels.last().map_or(self.m, |l| l.k)
    }

    /// Side length `rho^k` of a level-`k` cube.
    pub fn length(&self, k: i64) -> f64 {
        self.rho.powi(k as i32)
    }
}

/// Largest admissible base level: `rho^m <= ` smallest positive distance.
pub fn default_base_level(space: &MetricMeasureSpace, rho: f64) -> i64 {
    let dmin = space.min_positive_distance();
    if !dmin.is_finite() {
        return 0;
    }
    let mut m = (dmin.ln() / rho.ln()).floor() as i64;
    while rho.powi(m as i32 + 1) <= dmin {
        m += 1;
    }
    while rho.powi(m as i32) > dmin {
        m -= 1;
    }
    m
}

fn separation_factor(rho: f64) -> f64 {
    if rho >= 5.0 {
        let lo = 2.0 * (rho - 1.0) / (rho - 3.0);
        0.5 * (lo + (rho - 1.0))
    } else {
        rho - 1.0
    }
}

/// Builds the hierarchy for levels `m..=K`, with `K` the first level whose
/// net is a single point, then verifies it exhaustively.
pub fn build_hierarchy(space: &MetricMeasureSpace, m: Option<i64>, rho: f64) -> Result<CubeHierarchy> {
    if !(rho > 1.0) || !rho.is_finite() {
        return invalid(format!("rho must exceed 1, got {rho}"));
    }
    let n = space.len();
    let m = match m {
        Some(m) => {
            let dmin = space.min_positive_distance();
            if rho.powi(m as i32) > dmin {
                return invalid(format!("base level {m}: rho^m exceeds the smallest distance {dmin}"));
            }
            m
        }
        None => default_base_level(space, rho),
    };
    let c = separation_factor(rho);

    let mut centers: Vec<PointId> = (0..n).collect();
    let mut levels = vec![Level {
        k: m,
        cubes: (0..n).map(|x| Cube { center: x, members: vec![x], parent: None }).collect(),
    }];
    let mut k = m;
    while centers.len() > 1 {
        k += 1;
        if k - m > 4096 {
            return Err(Error::Numerical("cube levels do not terminate".into()));
        }
        let sep = c * rho.powi(k as i32);
        let mut near = vec![f64::INFINITY; n];
        let mut nearest = vec![usize::MAX; n];
        let mut kept: Vec<PointId> = Vec::new();
        for &z in &centers {
            if near[z] >= sep {
                let row = space.distances_from(z);
                for y in 0..n {
                    if row[y] < near[y] {
                        near[y] = row[y];
                        nearest[y] = kept.len();
                    }
                }
                kept.push(z);
            }
        }
        let prev = levels.last_mut().unwrap();
        let mut cubes: Vec<Cube> = kept.iter().map(|&z| Cube { center: z, members: Vec::new(), parent: None }).collect();
        for child in prev.cubes.iter_mut() {
            let p = nearest[child.center];
            child.parent = Some(p);
            cubes[p].members.extend_from_slice(&child.members);
        }
        cubes.iter_mut().for_each(|q| q.members.sort_unstable());
        levels.push(Level { k, cubes });
        centers = kept;
    }
    let h = CubeHierarchy { rho, m, levels };
    let checks = verify_hierarchy(space, &h)?;
    if let Some(bad) = checks.iter().find(|c| !c.pass) {
        let (level, cube) = (
            bad.worst_case.get("level").and_then(|v| v.as_i64()).unwrap_or(m),
            bad.worst_case.get("cube").and_then(|v| v.as_u64()).unwrap_or(0) as usize,
        );
        return Err(Error::Construction { level, cube, detail: format!("{} failed: {}", bad.name, bad.worst_case) });
    }
    Ok(h)
}

/// Exhaustive check of the sandwich, partition and nesting properties.
/// Each failing check carries its first counterexample.
pub fn verify_hierarchy(space: &MetricMeasureSpace, h: &CubeHierarchy) -> Result<Vec<Check>> {
    let n = space.len();
    if h.levels.is_empty() {
        return invalid("hierarchy has no levels");
    }
    for (i, lvl) in h.levels.iter().enumerate() {
        if lvl.k != h.m + i as i64 {
            return invalid(format!("levels must run m, m+1, ...; found k = {} at position {i}", lvl.k));
        }
        for q in &lvl.cubes {
            space.check_point(q.center)?;
            if let Some(&bad) = q.members.iter().find(|&&y| y >= n) {
                return Err(Error::UnknownPoint(bad));
            }
        }
    }

    let mut partition_fail = None;
    let mut owner: Vec<Vec<usize>> = Vec::with_capacity(h.levels.len());
    for lvl in &h.levels {
        let mut own = vec![usize::MAX; n];
        for (a, q) in lvl.cubes.iter().enumerate() {
            for &y in &q.members {
                if own[y] != usize::MAX && partition_fail.is_none() {
                    partition_fail = Some(serde_json::json!({
                        "level": lvl.k, "cube": a, "point": y, "problem": "point in two cubes", "other_cube": own[y]
                    }));
                }
                own[y] = a;
            }
        }
        if partition_fail.is_none() {
            if let Some(y) = own.iter().position(|&o| o == usize::MAX) {
                partition_fail = Some(serde_json::json!({ "level": lvl.k, "point": y, "problem": "point in no cube" }));
            }
        }
        owner.push(own);
    }

    let mut sandwich_fail = None;
    'levels: for lvl in &h.levels {
        let inner = h.length(lvl.k);
        let outer = h.length(lvl.k + 1);
        for (a, q) in lvl.cubes.iter().enumerate() {
            let row = space.distances_from(q.center);
            let mut member = vec![false; n];
            q.members.iter().for_each(|&y| member[y] = true);
            if let Some(y) = (0..n).find(|&y| row[y] < inner && !member[y]) {
                sandwich_fail = Some(serde_json::json!({
                    "level": lvl.k, "cube": a, "center": q.center, "point": y, "distance": row[y],
                    "problem": "inner ball point outside cube"
                }));
                break 'levels;
            }
            if let Some(&y) = q.members.iter().find(|&&y| row[y] >= outer) {
                sandwich_fail = Some(serde_json::json!({
                    "level": lvl.k, "cube": a, "center": q.center, "point": y, "distance": row[y],
                    "problem": "cube point outside outer ball"
                }));
                break 'levels;
            }
        }
    }

    let mut nesting_fail = None;
    'nest: for (i, lvl) in h.levels.iter().enumerate() {
        for (a, q) in lvl.cubes.iter().enumerate() {
            for (j, upper) in h.levels.iter().enumerate().skip(i + 1) {
                let first = q.members.first().map(|&y| owner[j][y]);
                let split = q.members.iter().find(|&&y| Some(owner[j][y]) != first);
                if q.members.is_empty() || first == Some(usize::MAX) || split.is_some() {
                    nesting_fail = Some(serde_json::json!({
                        "level": lvl.k, "cube": a, "upper_level": upper.k, "point": split
                    }));
                    break 'nest;
                }
            }
        }
    }

    let ok = serde_json::json!(null);
    Ok(vec![
        Check::new("sandwich", sandwich_fail.is_none(), sandwich_fail.unwrap_or(ok.clone())),
        Check::new("partition", partition_fail.is_none(), partition_fail.unwrap_or(ok.clone())),
        Check::new("nesting", nesting_fail.is_none(), nesting_fail.unwrap_or(ok)),
    ])
}

/// Dyadic maximal function: for each point, the largest average of `|f|`
/// over the cubes containing it with side length at most `max_length`.
pub fn dyadic_maximal(space: &MetricMeasureSpace, h: &CubeHierarchy, f: &[f64], max_length: f64) -> Result<Vec<f64>> {
    let n = space.len();
    if f.len() != n {
        return invalid(format!("function has {} values for {n} points", f.len()));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return invalid("function values must be finite");
    }
    let mu = space.measure();
    let mut out = vec![0.0f64; n];
    for lvl in &h.levels {
        if h.length(lvl.k) > max_length {
            continue;
        }
        for q in &lvl.cubes {
            let mass: f64 = q.members.iter().map(|&y| mu[y]).sum();
            let integral: f64 = q.members.iter().map(|&y| f[y].abs() * mu[y]).sum();
            let avg = integral / mass;
            for &y in &q.members {
                out[y] = out[y].max(avg);
            }
        }
    }
    Ok(out)
}

/// Weak-(1,1) check with constant one: for every distinct value `lambda`
/// of `M_d f`, `lambda * mu({M_d f > lambda}) <= ||f||_1`, compared
/// exactly. The check carries the largest ratio and its `lambda`.
pub fn dyadic_weak_check(space: &MetricMeasureSpace, maximal: &[f64], f: &[f64]) -> Check {
    let mu = space.measure();
    let l1: f64 = f.iter().zip(mu).map(|(v, m)| v.abs() * m).sum();
    let mut idx: Vec<usize> = (0..maximal.len()).collect();
    idx.sort_by(|&a, &b| maximal[b].partial_cmp(&maximal[a]).unwrap());
    let mut pass = true;
    let mut worst = (0.0f64, 0.0f64);
    let mut above = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let lambda = maximal[idx[i]];
        if lambda > 0.0 {
            // `above` is the measure of {M_d f > lambda}.
            pass &= lambda * above <= l1;
            let ratio = if l1 > 0.0 { lambda * above / l1 } else { 0.0 };
            if ratio > worst.0 {
                worst = (ratio, lambda);
            }
        }
        while i < idx.len() && maximal[idx[i]] == lambda {
            above += mu[idx[i]];
            i += 1;
        }
    }
    Check::new(
        "dyadic_weak_1_1",
        pass,
        serde_json::json!({ "ratio": worst.0, "lambda": worst.1, "l1": l1 }),
    )
}
