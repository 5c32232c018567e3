//! Riesz potentials `L^{-s/2}` and Bessel potentials `(L + lambda^2)^{-s/2}`
//! as kernels against `mu`, and fits of their off-diagonal bounds.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DirichletOperator;
use crate::error::{invalid, Result};
use crate::kernels::{KernelMatrix, KernelTag};
use crate::space::{MetricMeasureSpace, PointId};
use crate::util::ArgMax;

/// Relative size below which an eigenvalue counts as zero.
const ZERO_MODE: f64 = 1e-10;

fn spectral_kernel(op: &DirichletOperator, tag: KernelTag, f: Arc<dyn Fn(f64) -> f64 + Send + Sync>) -> Result<KernelMatrix> {
    let n = op.full_len();
    let domain = op.domain().to_vec();
    if let Some(sep) = op.separable() {
        let sep = sep.clone();
        let pos: Vec<Option<usize>> = (0..n).map(|x| op.position(x)).collect();
        let row = move |x: PointId| {
            let mut out = vec![0.0; n];
            if let Some(a) = pos[x] {
                let r = sep.kernel_row(a, &*f);
                for (b, &y) in domain.iter().enumerate() {
                    out[y] = r[b];
                }
            }
            out
        };
        return Ok(KernelMatrix::from_rows(n, tag, Arc::new(row)));
    }
    let spec = op.spectrum()?;
    let phi = &spec.vectors;
    let scaled = DMatrix::from_fn(phi.nrows(), phi.ncols(), |i, k| phi[(i, k)] * f(spec.values[k]));
    let g = &scaled * phi.transpose();
    let mut values = vec![0.0; n * n];
    for (a, &x) in domain.iter().enumerate() {
        for (b, &y) in domain.iter().enumerate() {
            values[x * n + y] = g[(a, b)];
        }
    }
    KernelMatrix::dense(n, values, tag)
}

fn spectral_range(op: &DirichletOperator) -> Result<(f64, f64)> {
    if let Some(sep) = op.separable() {
        let v = sep.eigenvalues();
        return Ok((sep.min_eigenvalue(), v.iter().fold(0.0f64, |a, &b| a.max(b))));
    }
    let spec = op.spectrum()?;
    Ok((spec.values[0], *spec.values.last().unwrap()))
}

/// `i_s = sum_k lambda_k^{-s/2} phi_k phi_k^T`, the Riesz kernel. Points
/// outside the domain get zero rows and columns. Requires a strictly
/// positive spectrum.
pub fn riesz_kernel(op: &DirichletOperator, s: f64) -> Result<KernelMatrix> {
    if !(s > 0.0) {
        return invalid("Riesz order s must be positive");
    }
    let (lo, hi) = spectral_range(op)?;
    if !(lo > ZERO_MODE * hi.max(1e-300)) {
        return invalid(format!("Riesz kernel needs a positive spectrum; smallest eigenvalue is {lo:.3e}"));
    }
    KernelMatrix::from_spec_fn(op, KernelTag::Riesz, Arc::new(move |l: f64| l.powf(-s / 2.0)))
}

/// `g_{s,lambda} = sum_k (lambda_k + lambda^2)^{-s/2} phi_k phi_k^T`.
pub fn bessel_kernel(op: &DirichletOperator, s: f64, lambda: f64) -> Result<KernelMatrix> {
    if !(s > 0.0) {
        return invalid("Bessel order s must be positive");
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return invalid("Bessel parameter lambda must be finite and nonnegative");
    }
    if lambda == 0.0 {
        let (lo, hi) = spectral_range(op)?;
        if !(lo > ZERO_MODE * hi.max(1e-300)) {
            return invalid("Bessel kernel with lambda = 0 needs a positive spectrum");
        }
    }
    let l2 = lambda * lambda;
    KernelMatrix::from_spec_fn(op, KernelTag::Bessel, Arc::new(move |l: f64| (l + l2).powf(-s / 2.0)))
}

impl KernelMatrix {
    /// Kernel of `f(L)` against `mu`.
    pub fn from_spec_fn(op: &DirichletOperator, tag: KernelTag, f: Arc<dyn Fn(f64) -> f64 + Send + Sync>) -> Result<KernelMatrix> {
        spectral_kernel(op, tag, f)
    }
}

/// Fitted constant `C` in `k(x,y) <= C d^s / V(x, d)` over pairs of
/// distinct domain points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelBoundFit {
    pub s: f64,
    pub c: f64,
    pub witness: Option<(PointId, PointId)>,
    pub pairs: usize,
}

pub fn riesz_bound_fit(space: &MetricMeasureSpace, op: &DirichletOperator, k: &KernelMatrix, s: f64) -> Result<KernelBoundFit> {
    if k.len() != space.len() || op.full_len() != space.len() {
        return invalid("kernel, operator and space sizes differ");
    }
    let dom = op.domain();
    let best = dom
        .par_iter()
        .map(|&x| {
            let row = k.row(x);
            let d = space.distances_from(x);
            space.with_row(x, |sr| {
                let mut best = ArgMax::new();
                for &y in dom {
                    if y != x {
                        let env = d[y].powf(s) / sr.ball_measure(d[y]);
                        best.offer(row[y] / env, (x, y));
                    }
                }
                best
            })
        })
        .reduce(ArgMax::new, ArgMax::merge);
    let n = dom.len();
    Ok(KernelBoundFit { s, c: if best.key.is_some() { best.value } else { 0.0 }, witness: best.key, pairs: n * n.saturating_sub(1) })
}

/// Fit of `g_{s,lambda}(x,y) e^{gamma lambda d}` against the near/far
/// envelope `d^s/V(x,d)` (`lambda d <= 1`) or `lambda^{-s}/V(x,1/lambda)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BesselSeparation {
    pub s: f64,
    pub lambda: f64,
    pub gammas: Vec<f64>,
    /// Fitted constant per gamma, over all pairs.
    pub constants: Vec<f64>,
    /// Constant per gamma over pairs with `lambda d <= 1` only.
    pub near: Vec<f64>,
    /// Constant per gamma over pairs with `lambda d > 1` only.
    pub far: Vec<f64>,
    pub witnesses: Vec<Option<(PointId, PointId)>>,
    pub threshold: f64,
    /// Largest gamma in the grid whose constant stays at or below the threshold.
    pub largest_gamma_below: Option<f64>,
}

pub fn bessel_separation_check(
    space: &MetricMeasureSpace,
    op: &DirichletOperator,
    g: &KernelMatrix,
    s: f64,
    lambda: f64,
    gammas: &[f64],
    threshold: f64,
) -> Result<BesselSeparation> {
    if !(lambda > 0.0) {
        return invalid("lambda must be positive");
    }
    if gammas.iter().any(|&x| !(x >= 0.0)) {
        return invalid("gammas must be nonnegative");
    }
    let dom = op.domain();
    let m = gammas.len();
    type Acc = (Vec<ArgMax<(PointId, PointId)>>, Vec<f64>, Vec<f64>);
    let (all, near, far) = dom
        .par_iter()
        .map(|&x| {
            let row = g.row(x);
            let d = space.distances_from(x);
            space.with_row(x, |sr| {
                let far_env = (lambda.powf(-s) / sr.ball_measure(1.0 / lambda)).ln();
                let mut all = vec![ArgMax::new(); m];
                let mut near = vec![f64::NEG_INFINITY; m];
                let mut far = vec![f64::NEG_INFINITY; m];
                for &y in dom {
                    if y == x || !(row[y] > 0.0) {
                        continue;
                    }
                    let t = d[y];
                    let is_near = lambda * t <= 1.0;
                    let env = if is_near { (t.powf(s) / sr.ball_measure(t)).ln() } else { far_env };
                    let base = row[y].ln() - env;
                    for (i, &gm) in gammas.iter().enumerate() {
                        let v = base + gm * lambda * t;
                        all[i].offer(v, (x, y));
                        if is_near {
                            near[i] = near[i].max(v);
                        } else {
                            far[i] = far[i].max(v);
                        }
                    }
                }
                (all, near, far)
            })
        })
        .reduce(
            || (vec![ArgMax::new(); m], vec![f64::NEG_INFINITY; m], vec![f64::NEG_INFINITY; m]),
            |a: Acc, b: Acc| {
                (
                    a.0.into_iter().zip(b.0).map(|(u, v)| u.merge(v)).collect(),
                    a.1.iter().zip(&b.1).map(|(u, v)| u.max(*v)).collect(),
                    a.2.iter().zip(&b.2).map(|(u, v)| u.max(*v)).collect(),
                )
            },
        );
    let ex = |v: f64| if v == f64::NEG_INFINITY { 0.0 } else { v.exp() };
    let constants: Vec<f64> = all.iter().map(|a| if a.key.is_some() { a.value.exp() } else { 0.0 }).collect();
    let largest_gamma_below = gammas
        .iter()
        .zip(&constants)
        .filter(|(_, &c)| c <= threshold)
        .map(|(&gm, _)| gm)
        .fold(None, |acc: Option<f64>, gm| Some(acc.map_or(gm, |a| a.max(gm))));
    Ok(BesselSeparation {
        s,
        lambda,
        gammas: gammas.to_vec(),
        constants,
        near: near.into_iter().map(ex).collect(),
        far: far.into_iter().map(ex).collect(),
        witnesses: all.iter().map(|a| a.key).collect(),
        threshold,
        largest_gamma_below,
    })
}
