//! Empirical relative Faber-Krahn constant
//! `b = min lambda_1(U) r^2 (mu(U) / mu(B(x,r)))^{2/eta}` over sampled balls
//! and subsets `U` of them.
//!
//! Radii are the critical radii of each center (distances attained from it,
//! plus the cap), the natural scales of a discrete space: an open ball
//! keeps its members until the radius reaches the next distance.

use std::collections::{HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DirichletOperator;
use crate::error::{invalid, Result};
use crate::linalg::{smallest_eigenpair, SparseSym, DENSE_EXTREME_MAX};
use crate::space::{doubling_profile, MetricMeasureSpace, PointId};
use crate::util::rng_stream;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FkWitness {
    pub center: PointId,
    pub radius: f64,
    /// `ball`, `sub_ball` or `random`.
    pub kind: String,
    pub size: usize,
    pub lambda1: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaberKrahnFit {
    pub radius: f64,
    pub eta: f64,
    pub samples: usize,
    pub b: f64,
    /// Smallest contributions, ascending.
    pub witnesses: Vec<FkWitness>,
}

/// `lambda_1` of the principal restriction of `s` to `keep`.
fn lambda1_positions(s: &SparseSym, keep: &[usize]) -> Result<f64> {
    let sub = s.principal(keep);
    if keep.len() <= DENSE_EXTREME_MAX {
        let e = sub.to_dense().symmetric_eigenvalues();
        return Ok(e.iter().fold(f64::INFINITY, |a, &b| a.min(b)));
    }
    Ok(smallest_eigenpair(&sub)?.0)
}

pub fn faber_krahn_fit(
    space: &MetricMeasureSpace,
    op: &DirichletOperator,
    radius: f64,
    eta: Option<f64>,
    samples: usize,
    seed: u64,
) -> Result<FaberKrahnFit> {
    if samples < 1 {
        return invalid("Faber-Krahn fit needs at least one sample");
    }
    if !(radius > 0.0) {
        return invalid("radius must be positive");
    }
    if op.full_len() != space.len() {
        return invalid("operator and space sizes differ");
    }
    let eta = match eta {
        Some(e) if e > 0.0 => e,
        Some(e) => return invalid(format!("eta must be positive, got {e}")),
        None => doubling_profile(space, radius)?.eta.max(f64::MIN_POSITIVE),
    };
    let sym = op.symmetric();
    let mu = space.measure();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); space.len()];
    for e in op.edges() {
        adj[e.u].push(e.v);
        adj[e.v].push(e.u);
    }
    let dom = op.domain();
    let mut cache: HashMap<(PointId, usize), f64> = HashMap::new();
    let mut all: Vec<FkWitness> = Vec::new();
    for i in 0..samples {
        let mut rng = rng_stream(seed, i as u64);
        let x = dom[rng.gen_range(0..dom.len())];
        let row = space.sorted_row(x);
        let levels = row.ball_levels(radius);
        let (count, r) = levels[rng.gen_range(0..levels.len())];
        let ball_mass = row.cum_measure[count];
        let r2 = r * r;
        let factor = |m: f64| (m / ball_mass).powf(2.0 / eta);
        // Concentric sub-balls, including the ball itself.
        for &(c, _) in levels.iter().filter(|(c, _)| *c <= count) {
            let keep: Vec<usize> = {
                let mut k: Vec<usize> = row.order[..c].iter().filter_map(|&y| op.position(y)).collect();
                k.sort_unstable();
                k
            };
            if keep.is_empty() {
                continue;
            }
            let l1 = match cache.get(&(x, c)) {
                Some(&v) => v,
                None => {
                    let v = lambda1_positions(&sym, &keep)?;
                    cache.insert((x, c), v);
                    v
                }
            };
            let m: f64 = keep.iter().map(|&a| op.mass()[a]).sum();
            all.push(FkWitness {
                center: x,
                radius: r,
                kind: if c == count { "ball".into() } else { "sub_ball".into() },
                size: keep.len(),
                lambda1: l1,
                ratio: l1 * r2 * factor(m),
            });
        }
        // One random connected subset grown inside the ball.
        let members: Vec<PointId> = row.order[..count].iter().copied().filter(|&y| op.position(y).is_some()).collect();
        if members.is_empty() {
            continue;
        }
        let target = rng.gen_range(1..=members.len());
        let inside: std::collections::HashSet<PointId> = members.iter().copied().collect();
        let start = *members.choose(&mut rng).unwrap();
        let mut chosen = vec![start];
        let mut seen: std::collections::HashSet<PointId> = [start].into_iter().collect();
        let mut frontier: VecDeque<PointId> = VecDeque::new();
        let push_nbrs = |y: PointId, seen: &mut std::collections::HashSet<PointId>, frontier: &mut VecDeque<PointId>| {
            for &z in &adj[y] {
                if inside.contains(&z) && seen.insert(z) {
                    frontier.push_back(z);
                }
            }
        };
        push_nbrs(start, &mut seen, &mut frontier);
        while chosen.len() < target && !frontier.is_empty() {
            let k = rng.gen_range(0..frontier.len());
            let y = frontier.remove(k).unwrap();
            chosen.push(y);
            push_nbrs(y, &mut seen, &mut frontier);
        }
        let mut keep: Vec<usize> = chosen.iter().filter_map(|&y| op.position(y)).collect();
        keep.sort_unstable();
        let l1 = lambda1_positions(&sym, &keep)?;
        let m: f64 = chosen.iter().map(|&y| mu[y]).sum();
        all.push(FkWitness { center: x, radius: r, kind: "random".into(), size: keep.len(), lambda1: l1, ratio: l1 * r2 * factor(m) });
    }
    all.sort_by(|a, b| a.ratio.total_cmp(&b.ratio).then(a.center.cmp(&b.center)));
    let b = all.first().map_or(f64::INFINITY, |w| w.ratio);
    all.truncate(5);
    Ok(FaberKrahnFit { radius, eta, samples, b, witnesses: all })
}
