//! Kronecker-sum operators `L = sum_j I x .. x L_j x .. x I` built from
//! small factor operators. Functions of `L` are applied through mode
//! products with the factor eigenvector matrices.

use nalgebra::DMatrix;

use super::{Boundary, DirichletOperator, Spectrum, DENSE_SPECTRUM_MAX};
use crate::error::Result;
use crate::space::MetricMeasureSpace;
use crate::util::rng_stream;
use rand::Rng;

/// Factor operators with their dense spectra; tensor index 0 varies slowest.
#[derive(Debug, Clone)]
pub struct Separable {
    ops: Vec<DirichletOperator>,
    spectra: Vec<Spectrum>,
    dims: Vec<usize>,
    sums: Vec<f64>,
}

/// Applies `a` along `axis` of a tensor with the given dimensions.
pub(crate) fn mode_product(t: &[f64], dims: &[usize], axis: usize, a: &DMatrix<f64>) -> Vec<f64> {
    let m = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let outer = t.len() / (m * stride);
    let rows = a.nrows();
    let mut out = vec![0.0; outer * rows * stride];
    for o in 0..outer {
        let src = &t[o * m * stride..(o + 1) * m * stride];
        let dst = &mut out[o * rows * stride..(o + 1) * rows * stride];
        for k in 0..m {
            let s = &src[k * stride..(k + 1) * stride];
            for i in 0..rows {
                let c = a[(i, k)];
                if c == 0.0 {
                    continue;
                }
                let d = &mut dst[i * stride..(i + 1) * stride];
                for (x, y) in d.iter_mut().zip(s) {
                    *x += c * y;
                }
            }
        }
    }
    out
}

impl Separable {
    /// Factor structure for `op`, or `None` when the factors do not
    /// reproduce it (checked on random vectors).
    pub(crate) fn from_factors(
        factors: &[MetricMeasureSpace],
        boundary: Boundary,
        op: &DirichletOperator,
    ) -> Result<Option<Separable>> {
        let mut ops = Vec::new();
        for f in factors {
            match f.factors() {
                Some(inner) => {
                    for g in inner {
                        ops.push(DirichletOperator::new(g, boundary)?);
                    }
                }
                None => ops.push(DirichletOperator::new(f, boundary)?),
            }
        }
        if ops.iter().any(|o| o.len() > DENSE_SPECTRUM_MAX) {
            return Ok(None);
        }
        let dims: Vec<usize> = ops.iter().map(|o| o.len()).collect();
        if dims.iter().product::<usize>() != op.len() {
            return Ok(None);
        }
        let spectra = ops.iter().map(|o| o.spectrum()).collect::<Result<Vec<_>>>()?;
        let mut sums = vec![0.0];
        for s in &spectra {
            sums = sums.iter().flat_map(|a| s.values.iter().map(move |b| a + b)).collect();
        }
        let sep = Separable { ops, spectra, dims, sums };
        if !sep.reproduces(op) {
            return Ok(None);
        }
        Ok(Some(sep))
    }

    fn reproduces(&self, op: &DirichletOperator) -> bool {
        let n = op.len();
        let mass: Vec<f64> = self.tensor_mass();
        if mass.iter().zip(op.mass()).any(|(a, b)| (a - b).abs() > 1e-12 * b.abs()) {
            return false;
        }
        let mut rng = rng_stream(0x5e9a, 0);
        for _ in 0..2 {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let direct = op.apply(&v);
            let mut sum = vec![0.0; n];
            for (j, o) in self.ops.iter().enumerate() {
                let l = DMatrix::from_fn(o.len(), o.len(), |a, b| o.stiffness().get(a, b) / o.mass()[a]);
                let part = mode_product(&v, &self.dims, j, &l);
                sum.iter_mut().zip(part).for_each(|(s, p)| *s += p);
            }
            let scale = direct.iter().fold(1.0f64, |a, b| a.max(b.abs()));
            if direct.iter().zip(&sum).any(|(a, b)| (a - b).abs() > 1e-10 * scale) {
                return false;
            }
        }
        true
    }

    fn tensor_mass(&self) -> Vec<f64> {
        let mut m = vec![1.0];
        for o in &self.ops {
            m = m.iter().flat_map(|a| o.mass().iter().map(move |b| a * b)).collect();
        }
        m
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn factor_ops(&self) -> &[DirichletOperator] {
        &self.ops
    }

    pub fn factor_spectra(&self) -> &[Spectrum] {
        &self.spectra
    }

    /// Eigenvalues of the full operator in tensor order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.sums
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.spectra.iter().map(|s| s.values[0]).sum()
    }

    /// Bottom eigenpair as a tensor product of factor ground states.
    pub fn ground_state(&self) -> (f64, Vec<f64>) {
        let mut v = vec![1.0];
        for s in &self.spectra {
            let col: Vec<f64> = s.vectors.column(0).iter().copied().collect();
            v = v.iter().flat_map(|a| col.iter().map(move |b| a * b)).collect();
        }
        (self.min_eigenvalue(), v)
    }

    /// Multi-index of a domain position.
    pub fn split(&self, mut a: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        for j in (0..self.dims.len()).rev() {
            idx[j] = a % self.dims[j];
            a /= self.dims[j];
        }
        idx
    }

    /// `Phi f(Lambda) Phi^T b`: the matrix of `f(L)` in the `mu`-kernel
    /// sense applied to `b`. With `b = e_x` this is the kernel row at `x`.
    pub fn apply_fn(&self, f: &dyn Fn(f64) -> f64, b: &[f64]) -> Vec<f64> {
        let mut c = b.to_vec();
        for (j, s) in self.spectra.iter().enumerate() {
            c = mode_product(&c, &self.dims, j, &s.vectors.transpose());
        }
        c.iter_mut().zip(&self.sums).for_each(|(v, &l)| *v *= f(l));
        for (j, s) in self.spectra.iter().enumerate() {
            c = mode_product(&c, &self.dims, j, &s.vectors);
        }
        c
    }

    /// Kernel row `k(x, .)` of `f(L)`, i.e. `sum_k f(lambda_k) phi_k(x) phi_k`.
    pub fn kernel_row(&self, a: usize, f: &dyn Fn(f64) -> f64) -> Vec<f64> {
        let idx = self.split(a);
        let mut c = vec![1.0];
        for (j, s) in self.spectra.iter().enumerate() {
            let row: Vec<f64> = s.vectors.row(idx[j]).iter().copied().collect();
            c = c.iter().flat_map(|u| row.iter().map(move |v| u * v)).collect();
        }
        c.iter_mut().zip(&self.sums).for_each(|(v, &l)| *v *= f(l));
        for (j, s) in self.spectra.iter().enumerate() {
            c = mode_product(&c, &self.dims, j, &s.vectors);
        }
        c
    }
}
