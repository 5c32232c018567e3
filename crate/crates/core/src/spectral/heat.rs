//! Heat kernels `p_t(x, y)` (the kernel of `e^{-tL}` against `mu`) and
//! Gaussian upper-bound fits.
//!
//! Separable operators use factor kernels computed by uniformization:
//! `e^{-tL} = e^{-t c} sum_k (t c)^k / k! P^k` with `P = I - L/c >= 0`,
//! which keeps tiny far-off-diagonal entries accurate to relative
//! precision. Other operators use dense spectral synthesis.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DirichletOperator, Spectrum};
use crate::error::{invalid, Result};
use crate::space::{MetricMeasureSpace, PointId};
use crate::util::ArgMax;

#[derive(Debug, Clone)]
enum Repr {
    Dense(Vec<DMatrix<f64>>),
    /// `factors[time][axis]`: factor kernels `p^j_t(a, b)`.
    Separable { dims: Vec<usize>, factors: Vec<Vec<DMatrix<f64>>> },
}

/// Heat kernel on the operator domain at a list of times.
#[derive(Debug, Clone)]
pub struct HeatKernel {
    pub times: Vec<f64>,
    domain: Vec<PointId>,
    mass: Vec<f64>,
    spectrum: Option<Spectrum>,
    repr: Repr,
}

/// `e^{-tL}` of a small operator as an entrywise-accurate nonnegative
/// matrix (row `a`, column `b`), via uniformization and squaring.
fn uniformized_semigroup(op: &DirichletOperator, t: f64) -> DMatrix<f64> {
    let m = op.len();
    let l = DMatrix::from_fn(m, m, |a, b| op.stiffness().get(a, b) / op.mass()[a]);
    let c = (0..m).map(|a| l[(a, a)]).fold(0.0f64, f64::max);
    if c == 0.0 {
        return DMatrix::identity(m, m);
    }
    let mut p = DMatrix::identity(m, m) - &l / c;
    p.iter_mut().for_each(|v| *v = v.max(0.0));
    let tau = t * c;
    let squarings = if tau > 30.0 { (tau / 30.0).log2().ceil() as u32 } else { 0 };
    let tau = tau / 2f64.powi(squarings as i32);
    let terms = (tau + 12.0 * tau.sqrt() + 30.0).max(m as f64 + 60.0) as usize;
    let mut term = DMatrix::identity(m, m);
    let mut w = (-tau).exp();
    let mut sum = &term * w;
    for k in 1..=terms {
        term = &term * &p;
        w *= tau / k as f64;
        if w == 0.0 {
            break;
        }
        sum += &term * w;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Heat kernel at the given times.
pub fn heat_kernel(op: &DirichletOperator, times: &[f64]) -> Result<HeatKernel> {
    if times.is_empty() || times.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return invalid("heat kernel times must be positive and finite");
    }
    let domain = op.domain().to_vec();
    let mass = op.mass().to_vec();
    if let Some(sep) = op.separable() {
        let factors = times
            .iter()
            .map(|&t| {
                sep.factor_ops()
                    .iter()
                    .map(|f| {
                        let e = uniformized_semigroup(f, t);
                        DMatrix::from_fn(f.len(), f.len(), |a, b| e[(a, b)] / f.mass()[b])
                    })
                    .collect()
            })
            .collect();
        return Ok(HeatKernel {
            times: times.to_vec(),
            domain,
            mass,
            spectrum: None,
            repr: Repr::Separable { dims: sep.dims().to_vec(), factors },
        });
    }
    let spec = op.spectrum()?;
    let mats = times
        .iter()
        .map(|&t| {
            let phi = &spec.vectors;
            let scaled = DMatrix::from_fn(phi.nrows(), phi.ncols(), |i, k| phi[(i, k)] * (-t * spec.values[k]).exp());
            &scaled * phi.transpose()
        })
        .collect();
    Ok(HeatKernel { times: times.to_vec(), domain, mass, spectrum: Some(spec), repr: Repr::Dense(mats) })
}

impl HeatKernel {
    pub fn len(&self) -> usize {
        self.domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain.is_empty()
    }

    pub fn domain(&self) -> &[PointId] {
        &self.domain
    }

    /// Spectral data when the kernel was synthesized densely.
    pub fn spectrum(&self) -> Option<&Spectrum> {
        self.spectrum.as_ref()
    }

    fn split(dims: &[usize], mut a: usize) -> Vec<usize> {
        let mut idx = vec![0; dims.len()];
        for j in (0..dims.len()).rev() {
            idx[j] = a % dims[j];
            a /= dims[j];
        }
        idx
    }

    /// `p_t(x, y)` for domain positions `a`, `b` and time index `ti`.
    pub fn get(&self, ti: usize, a: usize, b: usize) -> f64 {
        match &self.repr {
            Repr::Dense(m) => m[ti][(a, b)],
            Repr::Separable { dims, factors } => {
                let (ia, ib) = (Self::split(dims, a), Self::split(dims, b));
                factors[ti].iter().enumerate().map(|(j, f)| f[(ia[j], ib[j])]).product()
            }
        }
    }

    /// Row `p_t(x, .)` over domain positions.
    pub fn row(&self, ti: usize, a: usize) -> Vec<f64> {
        match &self.repr {
            Repr::Dense(m) => m[ti].row(a).iter().copied().collect(),
            Repr::Separable { dims, factors } => {
                let ia = Self::split(dims, a);
                let mut out = vec![1.0];
                for (j, f) in factors[ti].iter().enumerate() {
                    let r: Vec<f64> = f.row(ia[j]).iter().copied().collect();
                    out = out.iter().flat_map(|u| r.iter().map(move |v| u * v)).collect();
                }
                out
            }
        }
    }

    /// Full matrix at one time.
    pub fn matrix(&self, ti: usize) -> DMatrix<f64> {
        match &self.repr {
            Repr::Dense(m) => m[ti].clone(),
            Repr::Separable { .. } => {
                let n = self.len();
                let mut out = DMatrix::zeros(n, n);
                for a in 0..n {
                    for (b, v) in self.row(ti, a).into_iter().enumerate() {
                        out[(a, b)] = v;
                    }
                }
                out
            }
        }
    }

    /// Largest `|p_{t+s}(x,z) - sum_y p_t(x,y) p_s(y,z) mu_y|` for time
    /// indices with `times[k] = times[i] + times[j]`.
    pub fn semigroup_error(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        let (ti, tj, tk) = (self.times[i], self.times[j], self.times[k]);
        if ((ti + tj) - tk).abs() > 1e-12 * tk {
            return invalid("semigroup check needs times[k] = times[i] + times[j]");
        }
        let pi = self.matrix(i);
        let pj = self.matrix(j);
        let pk = self.matrix(k);
        let n = self.len();
        let scaled = DMatrix::from_fn(n, n, |a, b| pi[(a, b)] * self.mass[b]);
        let prod = scaled * pj;
        Ok((prod - pk).abs().max())
    }

    /// Writes one time slice as `n` (u64 little-endian) followed by the
    /// row-major little-endian f64 matrix over domain positions.
    pub fn write_binary(&self, ti: usize, path: &Path) -> Result<()> {
        let n = self.len();
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(&(n as u64).to_le_bytes())?;
        for a in 0..n {
            for v in self.row(ti, a) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a matrix written by [`HeatKernel::write_binary`].
pub fn read_binary(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 8 {
        return invalid("heat kernel file is too short");
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    if bytes.len() != 8 + 8 * n * n {
        return invalid("heat kernel file size does not match its header");
    }
    let vals: Vec<f64> = bytes[8..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(DMatrix::from_row_slice(n, n, &vals))
}

/// Fitted constants in Gaussian upper bounds for `p_t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianFit {
    pub radius: f64,
    pub c: f64,
    /// `max p_t(x,y) sqrt(V(x,sqrt t) V(y,sqrt t)) e^{d^2/(ct)}` over `t <= R^2`.
    pub c_small: f64,
    /// Same with `V(., R)` over `t > R^2`.
    pub c_large: f64,
    /// `c_small` restricted to pairs with `d(x,y) <= t`.
    pub c_small_near: f64,
    /// Natural logarithms of `c_small`, `c_large` and `c_small_near`; finite
    /// even when the constants overflow.
    pub ln_c_small: f64,
    pub ln_c_large: f64,
    pub ln_c_small_near: f64,
    /// `(x, y, t)` attaining `c_small` and `c_large`.
    pub witness_small: Option<(PointId, PointId, f64)>,
    pub witness_large: Option<(PointId, PointId, f64)>,
    /// `max p_t V(x, min(sqrt t, 1/lambda)) e^{d^2/(ct)}`, with the extra
    /// factor `e^{-(1-gamma) lambda^2 t}` when `sqrt t > 1/lambda`.
    pub c_lambda: Option<f64>,
    pub lambda_gamma: Option<(f64, f64)>,
    /// Pairs skipped because `p_t` underflowed to zero.
    pub underflow: usize,
}

/// Gaussian bound fit. All maxima are taken in log space.
pub fn gaussian_bound_fit(
    space: &MetricMeasureSpace,
    hk: &HeatKernel,
    radius: f64,
    c: f64,
    lambda_gamma: Option<(f64, f64)>,
) -> Result<GaussianFit> {
    if !(c > 4.0) {
        return invalid("the Gaussian constant c must exceed 4");
    }
    if !(radius > 0.0) {
        return invalid("radius must be positive");
    }
    let r2 = radius * radius;
    if !hk.times.iter().any(|&t| t <= r2) || !hk.times.iter().any(|&t| t > r2) {
        return invalid("heat kernel times must include some t <= R^2 and some t > R^2");
    }
    if let Some((l, g)) = lambda_gamma {
        if !(l > 0.0) || !(0.0..1.0).contains(&g) {
            return invalid("lambda must be positive and gamma in [0, 1)");
        }
    }
    let dom = hk.domain();
    let n = dom.len();
    let nt = hk.times.len();
    // ln V(x, sqrt t), ln V(x, R) and ln V(x, min(sqrt t, 1/lambda)) per domain position.
    let per_point: Vec<(Vec<f64>, f64, Vec<f64>)> = dom
        .par_iter()
        .map(|&x| {
            space.with_row(x, |row| {
                let sq: Vec<f64> = hk.times.iter().map(|t| row.ball_measure(t.sqrt()).ln()).collect();
                let big = row.ball_measure(radius).ln();
                let lam: Vec<f64> = match lambda_gamma {
                    Some((l, _)) => hk.times.iter().map(|t| row.ball_measure(t.sqrt().min(1.0 / l)).ln()).collect(),
                    None => Vec::new(),
                };
                (sq, big, lam)
            })
        })
        .collect();
    type Best = (ArgMax<(usize, usize, usize)>, ArgMax<(usize, usize, usize)>, ArgMax<(usize, usize, usize)>, f64, usize);
    let fold = (0..n)
        .into_par_iter()
        .map(|a| {
            let d = space.distances_from(dom[a]);
            let mut small = ArgMax::new();
            let mut large = ArgMax::new();
            let mut lam = ArgMax::new();
            let mut near = f64::NEG_INFINITY;
            let mut under = 0usize;
            for ti in 0..nt {
                let t = hk.times[ti];
                let row = hk.row(ti, a);
                for b in 0..n {
                    let p = row[b];
                    if !(p > 0.0) {
                        under += 1;
                        continue;
                    }
                    let dist = d[dom[b]];
                    let gauss = dist * dist / (c * t);
                    let lp = p.ln() + gauss;
                    if t <= r2 {
                        let v = lp + 0.5 * (per_point[a].0[ti] + per_point[b].0[ti]);
                        small.offer(v, (a, b, ti));
                        if dist <= t {
                            near = near.max(v);
                        }
                    } else {
                        large.offer(lp + 0.5 * (per_point[a].1 + per_point[b].1), (a, b, ti));
                    }
                    if let Some((l, g)) = lambda_gamma {
                        let extra = if t.sqrt() > 1.0 / l { -(1.0 - g) * l * l * t } else { 0.0 };
                        lam.offer(lp + per_point[a].2[ti] + extra, (a, b, ti));
                    }
                }
            }
            (small, large, lam, near, under)
        })
        .reduce(
            || (ArgMax::new(), ArgMax::new(), ArgMax::new(), f64::NEG_INFINITY, 0),
            |x: Best, y: Best| (x.0.merge(y.0), x.1.merge(y.1), x.2.merge(y.2), x.3.max(y.3), x.4 + y.4),
        );
    let (small, large, lam, near, underflow) = fold;
    let wit = |k: Option<(usize, usize, usize)>| k.map(|(a, b, ti)| (dom[a], dom[b], hk.times[ti]));
    let val = |m: &ArgMax<(usize, usize, usize)>| if m.key.is_some() { m.value.exp() } else { 0.0 };
    Ok(GaussianFit {
        radius,
        c,
        c_small: val(&small),
        c_large: val(&large),
        c_small_near: if near.is_finite() { near.exp() } else { 0.0 },
        ln_c_small: small.value,
        ln_c_large: large.value,
        ln_c_small_near: near,
        witness_small: wit(small.key),
        witness_large: wit(large.key),
        c_lambda: lambda_gamma.map(|_| val(&lam)),
        lambda_gamma,
        underflow,
    })
}
