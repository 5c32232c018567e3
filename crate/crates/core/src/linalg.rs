//! Sparse symmetric matrices, banded LDL^T, Lanczos and CG.
//!
//! The extreme-eigenvalue routines pick a dense path for small problems and
//! Lanczos with full reorthogonalization otherwise.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Problems up to this size use dense symmetric eigensolvers for extreme eigenvalues.
pub const DENSE_EXTREME_MAX: usize = 400;

/// Symmetric matrix in CSR form with both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// Builds from `(i, j, v)` entries; duplicates are summed. Off-diagonal
    /// entries must be supplied for both (i, j) and (j, i).
    pub fn from_triplets(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            cols.push(j);
            vals.push(v);
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseSym { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        dot(x, &y)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Returns `self + diag(d)`.
    pub fn add_diagonal(&self, d: &[f64]) -> SparseSym {
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(self.vals.len() + self.n);
        for i in 0..self.n {
            entries.extend(self.row(i).map(|(j, v)| (i, j, v)));
            entries.push((i, i, d[i]));
        }
        SparseSym::from_triplets(self.n, entries)
    }

    /// Returns `D self D` for a diagonal scaling `D`.
    pub fn scale_symmetric(&self, d: &[f64]) -> SparseSym {
        let mut out = self.clone();
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.vals[k] *= d[i] * d[self.cols[k]];
            }
        }
        out
    }

    /// Principal submatrix on the given sorted index set.
    pub fn principal(&self, keep: &[usize]) -> SparseSym {
        let mut local = vec![usize::MAX; self.n];
        for (a, &i) in keep.iter().enumerate() {
            local[i] = a;
        }
        let mut entries = Vec::new();
        for (a, &i) in keep.iter().enumerate() {
            for (j, v) in self.row(i) {
                if local[j] != usize::MAX {
                    entries.push((a, local[j], v));
                }
            }
        }
        SparseSym::from_triplets(keep.len(), entries)
    }

    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Lower bound on the spectrum from Gershgorin discs.
    pub fn gershgorin_lower(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let mut d = 0.0;
                let mut off = 0.0;
                for (j, v) in self.row(i) {
                    if j == i {
                        d += v;
                    } else {
                        off += v.abs();
                    }
                }
                d - off
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn gershgorin_upper(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| if j == i { v } else { v.abs() }).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// LDL^T factorization of a symmetric positive definite band matrix.
#[derive(Debug, Clone)]
pub struct BandLdl {
    n: usize,
    b: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl BandLdl {
    /// Storage needed for a band factorization, in f64 entries.
    pub fn storage(a: &SparseSym) -> usize {
        a.dim() * a.bandwidth().max(1)
    }

    /// Factors `a`; returns `None` when a pivot is not positive.
    pub fn factor(a: &SparseSym) -> Option<BandLdl> {
        let n = a.dim();
        let b = a.bandwidth().max(1);
        let mut l = vec![0.0; n * b];
        let mut d = vec![0.0; n];
        let mut arow = vec![0.0; b + 1];
        for i in 0..n {
            let lo = i.saturating_sub(b);
            arow.iter_mut().for_each(|v| *v = 0.0);
            for (j, v) in a.row(i) {
                if j <= i {
                    arow[j + b - i] += v;
                }
            }
            for j in lo..i {
                let jlo = j.saturating_sub(b).max(lo);
                let mut s = arow[j + b - i];
                for k in jlo..j {
                    s -= l[i * b + k + b - i] * l[j * b + k + b - j] * d[k];
                }
                l[i * b + j + b - i] = s / d[j];
            }
            let mut s = arow[b];
            for k in lo..i {
                let lik = l[i * b + k + b - i];
                s -= lik * lik * d[k];
            }
            let scale = arow[b].abs().max(f64::MIN_POSITIVE);
            if !(s > 1e-14 * scale) {
                return None;
            }
            d[i] = s;
        }
        Some(BandLdl { n, b, l, d })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, b) = (self.n, self.b);
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let mut s = x[i];
            for k in lo..i {
                s -= self.l[i * b + k + b - i] * x[k];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let xi = x[i];
            let lo = i.saturating_sub(b);
            for k in lo..i {
                x[k] -= self.l[i * b + k + b - i] * xi;
            }
        }
    }
}

/// Conjugate gradients for a symmetric positive definite operator.
pub fn conjugate_gradient(
    apply: &dyn Fn(&[f64], &mut [f64]),
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= rel_tol * bnorm {
            return Ok(x);
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Numerical("CG: operator is not positive definite".into()));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= rel_tol * bnorm * 10.0 {
        return Ok(x);
    }
    Err(Error::Numerical(format!(
        "CG did not converge: residual {:.3e}",
        rr.sqrt() / bnorm
    )))
}

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn dense_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &k) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

fn start_vector(n: usize) -> Vec<f64> {
    // Mostly constant with a deterministic irregular perturbation.
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.25 * ((i as f64 * 0.618_033_988_749_895).fract() - 0.5))
        .collect();
    let s = norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Largest eigenpair of a symmetric operator by Lanczos with full
/// reorthogonalization. Stops when the Ritz residual drops below
/// `rel_tol * |theta|`.
pub fn lanczos_largest(
    apply: &dyn Fn(&[f64], &mut [f64]),
    n: usize,
    rel_tol: f64,
    max_iter: usize,
) -> Result<(f64, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidInput("empty operator".into()));
    }
    let max_iter = max_iter.min(n).max(1);
    let mut basis: Vec<Vec<f64>> = vec![start_vector(n)];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut best: Option<(f64, DVector<f64>)> = None;
    for k in 0..max_iter {
        apply(&basis[k], &mut w);
        let a = dot(&basis[k], &w);
        alpha.push(a);
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                for i in 0..n {
                    w[i] -= c * q[i];
                }
            }
        }
        let bnext = norm(&w);
        let m = k + 1;
        let check = m == max_iter || m % 4 == 0 || bnext <= 1e-14 * a.abs().max(1e-300);
        if check {
            let t = DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    alpha[i]
                } else if i + 1 == j {
                    beta[i]
                } else if j + 1 == i {
                    beta[j]
                } else {
                    0.0
                }
            });
            let (vals, vecs) = dense_eigen(t);
            let theta = vals[m - 1];
            let s = vecs.column(m - 1).into_owned();
            let resid = (bnext * s[m - 1]).abs();
            let done = resid <= rel_tol * theta.abs().max(1e-300) || bnext <= 1e-14 * theta.abs().max(1e-300) || m == n;
            best = Some((theta, s));
            if done {
                break;
            }
            if m == max_iter {
                return Err(Error::Numerical(format!(
                    "Lanczos did not converge in {max_iter} steps (residual {resid:.3e})"
                )));
            }
        }
        beta.push(bnext);
        let q: Vec<f64> = w.iter().map(|x| x / bnext).collect();
        basis.push(q);
    }
    let (theta, s) = best.expect("at least one Ritz check");
    let mut x = vec![0.0; n];
    for (c, q) in s.iter().zip(&basis) {
        for i in 0..n {
            x[i] += c * q[i];
        }
    }
    let xn = norm(&x);
    x.iter_mut().for_each(|v| *v /= xn);
    Ok((theta, x))
}

/// Smallest eigenpair of a sparse symmetric matrix.
pub fn smallest_eigenpair(a: &SparseSym) -> Result<(f64, Vec<f64>)> {
    let n = a.dim();
    if n == 0 {
        return Err(Error::InvalidInput("empty operator".into()));
    }
    if n <= DENSE_EXTREME_MAX {
        let (vals, vecs) = dense_eigen(a.to_dense());
        return Ok((vals[0], vecs.column(0).iter().copied().collect()));
    }
    if BandLdl::storage(a) <= 40_000_000 {
        return shift_invert_smallest(a);
    }
    let neg = |x: &[f64], y: &mut [f64]| {
        a.matvec(x, y);
        y.iter_mut().for_each(|v| *v = -*v);
    };
    let (theta, v) = lanczos_largest(&neg, n, 1e-10, n.min(3000))?;
    Ok((-theta, v))
}

fn shift_invert_smallest(a: &SparseSym) -> Result<(f64, Vec<f64>)> {
    let n = a.dim();
    let neg = |x: &[f64], y: &mut [f64]| {
        a.matvec(x, y);
        y.iter_mut().for_each(|v| *v = -*v);
    };
    let rough = lanczos_largest(&neg, n, 1e-14, 60.min(n));
    let scale = a.gershgorin_upper().abs().max(a.gershgorin_lower().abs()).max(1e-300);
    let mut step = 1e-3 * scale;
    let mut sigma = match rough {
        Ok((t, _)) => -t - step,
        Err(_) => a.gershgorin_lower() - step,
    };
    let floor = a.gershgorin_lower() - step;
    let ldl = loop {
        let shifted = a.add_diagonal(&vec![-sigma; n]);
        if let Some(f) = BandLdl::factor(&shifted) {
            break f;
        }
        step *= 4.0;
        sigma -= step;
        if sigma < floor - scale {
            return Err(Error::Numerical("shift-invert: no positive definite shift found".into()));
        }
    };
    let inv = |x: &[f64], y: &mut [f64]| {
        y.copy_from_slice(x);
        ldl.solve_in_place(y);
    };
    let (theta, v) = lanczos_largest(&inv, n, 1e-13, n.min(2000))?;
    Ok((sigma + 1.0 / theta, v))
}

/// Largest eigenvalue of `W^{1/2} K^{-1} W^{1/2}` where `w` is a
/// nonnegative diagonal and `solve` applies `K^{-1}` in place. Returns
/// the eigenvalue and the generalized eigenvector `psi` with
/// `W psi = theta K psi`.
pub fn largest_generalized(
    w: &[f64],
    solve: &dyn Fn(&mut [f64]) -> Result<()>,
) -> Result<(f64, Vec<f64>)> {
    let n = w.len();
    if w.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidInput("weight must be finite and nonnegative".into()));
    }
    let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    if sw.iter().all(|&x| x == 0.0) {
        return Ok((0.0, vec![0.0; n]));
    }
    let err = std::cell::RefCell::new(None);
    let apply = |x: &[f64], y: &mut [f64]| {
        for i in 0..n {
            y[i] = sw[i] * x[i];
        }
        if let Err(e) = solve(y) {
            *err.borrow_mut() = Some(e);
        }
        for i in 0..n {
            y[i] *= sw[i];
        }
    };
    let (theta, x) = lanczos_largest(&apply, n, 1e-12, n.min(1500))?;
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    let mut psi: Vec<f64> = (0..n).map(|i| sw[i] * x[i]).collect();
    solve(&mut psi)?;
    Ok((theta, psi))
}

/// Dense version of [`largest_generalized`] for a positive definite `k`.
pub fn largest_generalized_dense(w: &[f64], k: &DMatrix<f64>) -> Result<f64> {
    let n = w.len();
    let chol = k
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    let kinv = chol.inverse();
    let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let s = DMatrix::from_fn(n, n, |i, j| sw[i] * kinv[(i, j)] * sw[j]);
    let (vals, _) = dense_eigen(s);
    Ok(*vals.last().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian(n: usize) -> SparseSym {
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, i, 2.0));
            if i + 1 < n {
                e.push((i, i + 1, -1.0));
                e.push((i + 1, i, -1.0));
            }
        }
        SparseSym::from_triplets(n, e)
    }

    #[test]
    fn band_ldl_solves_tridiagonal() {
        let a = path_laplacian(50);
        let f = BandLdl::factor(&a).unwrap();
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; 50];
        a.matvec(&x, &mut b);
        f.solve_in_place(&mut b);
        for i in 0..50 {
            assert!((b[i] - x[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn band_ldl_rejects_indefinite() {
        let a = path_laplacian(10).add_diagonal(&vec![-1.0; 10]);
        assert!(BandLdl::factor(&a).is_none());
    }

    #[test]
    fn smallest_matches_closed_form_above_dense_threshold() {
        let n = 600;
        let a = path_laplacian(n);
        let (l, _) = smallest_eigenpair(&a).unwrap();
        let exact = 2.0 - 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((l - exact).abs() < 1e-12 * 4.0, "{l} vs {exact}");
    }

    #[test]
    fn cg_solves_spd() {
        let a = path_laplacian(30);
        let b = vec![1.0; 30];
        let x = conjugate_gradient(&|x, y| a.matvec(x, y), &b, 1e-12, 1000).unwrap();
        let mut r = vec![0.0; 30];
        a.matvec(&x, &mut r);
        assert!(r.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-9));
    }
}
