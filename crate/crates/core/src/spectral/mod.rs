//! Weighted graph Laplacians with Dirichlet conditions, their spectra, heat
//! kernels, Riesz and Bessel potentials, and the spectral inequalities for
//! Schrodinger operators `L - V`.
//!
//! The operator acts as `(Lf)(x) = (1/mu_x) sum_y w_xy (f(x) - f(y))` on
//! functions vanishing outside the domain. It is stored as the stiffness
//! matrix `K` (so `Q(f) = f^T K f`) together with the masses `mu`.

mod fk;
mod heat;
mod potentials;
mod schrodinger;
mod separable;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{conjugate_gradient, dense_eigen, smallest_eigenpair, BandLdl, SparseSym};
use crate::maximal::Potential;
use crate::space::{Edge, MetricMeasureSpace, PointId};

pub use fk::{faber_krahn_fit, FaberKrahnFit, FkWitness};
pub use heat::{gaussian_bound_fit, heat_kernel, read_binary, GaussianFit, HeatKernel};
pub use potentials::{
    bessel_kernel, bessel_separation_check, riesz_bound_fit, riesz_kernel, BesselSeparation, KernelBoundFit,
};
pub use schrodinger::{
    calibrate_cp, calibration_potential, fefferman_phong_constant, hardy_check, positivity_checks, HardyWitness, ScaleSweepEntry,
    product_identity_check, spectrum_bounds, Calibration, FeffermanPhong, HardyReport, PositivityReport,
    ProductIdentityReport, SpectrumBoundResult,
};
pub use separable::Separable;

/// Full spectral data are computed densely up to this many domain points.
pub const DENSE_SPECTRUM_MAX: usize = 2000;

/// Storage budget for banded factorizations, in f64 entries.
const BAND_BUDGET: usize = 40_000_000;

/// Boundary treatment for generated spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Every point is in the domain.
    Free,
    /// Boundary points are removed and functions vanish there.
    Dirichlet,
}

/// Eigenvalues in ascending order and `mu`-orthonormal eigenvectors
/// (columns, indexed by domain position).
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// `L` restricted to a domain, with optional separable structure.
#[derive(Debug, Clone)]
pub struct DirichletOperator {
    n_full: usize,
    edges: Vec<Edge>,
    domain: Vec<PointId>,
    index: Vec<usize>,
    stiffness: SparseSym,
    mass: Vec<f64>,
    separable: Option<Arc<Separable>>,
}

impl DirichletOperator {
    /// Operator from the space's own conductances.
    pub fn new(space: &MetricMeasureSpace, boundary: Boundary) -> Result<DirichletOperator> {
        let domain = match boundary {
            Boundary::Free => (0..space.len()).collect(),
            Boundary::Dirichlet => space.interior(),
        };
        let mut op = Self::build(space, space.edges().to_vec(), domain)?;
        if let Some(factors) = space.factors() {
            op.separable = Separable::from_factors(factors, boundary, &op)?.map(Arc::new);
        }
        Ok(op)
    }

    /// Operator on an explicit domain (functions vanish outside it).
    pub fn on_domain(space: &MetricMeasureSpace, domain: &[PointId]) -> Result<DirichletOperator> {
        Self::build(space, space.edges().to_vec(), domain.to_vec())
    }

    /// Operator from explicit conductances on an explicit domain.
    pub fn from_conductances(space: &MetricMeasureSpace, edges: Vec<Edge>, domain: &[PointId]) -> Result<DirichletOperator> {
        Self::build(space, edges, domain.to_vec())
    }

    fn build(space: &MetricMeasureSpace, edges: Vec<Edge>, mut domain: Vec<PointId>) -> Result<DirichletOperator> {
        let n = space.len();
        if edges.is_empty() && n > 1 {
            return invalid("space has no conductance graph");
        }
        for e in &edges {
            if e.u >= n || e.v >= n {
                return Err(Error::UnknownPoint(e.u.max(e.v)));
            }
            if !(e.w > 0.0) || !e.w.is_finite() {
                return invalid(format!("conductance of edge ({},{}) must be positive", e.u, e.v));
            }
        }
        domain.sort_unstable();
        domain.dedup();
        if domain.is_empty() {
            return invalid("operator domain is empty");
        }
        if let Some(&bad) = domain.iter().find(|&&x| x >= n) {
            return Err(Error::UnknownPoint(bad));
        }
        let mut index = vec![usize::MAX; n];
        for (a, &x) in domain.iter().enumerate() {
            index[x] = a;
        }
        let mut entries = Vec::with_capacity(4 * edges.len() + domain.len());
        for e in &edges {
            let (a, b) = (index[e.u], index[e.v]);
            if a != usize::MAX {
                entries.push((a, a, e.w));
            }
            if b != usize::MAX {
                entries.push((b, b, e.w));
            }
            if a != usize::MAX && b != usize::MAX && a != b {
                entries.push((a, b, -e.w));
                entries.push((b, a, -e.w));
            }
        }
        for a in 0..domain.len() {
            entries.push((a, a, 0.0));
        }
        let stiffness = SparseSym::from_triplets(domain.len(), entries);
        let mass = domain.iter().map(|&x| space.measure()[x]).collect();
        Ok(DirichletOperator { n_full: n, edges, domain, index, stiffness, mass, separable: None })
    }

    /// Same operator without separable shortcuts.
    pub fn without_separable(&self) -> DirichletOperator {
        DirichletOperator { separable: None, ..self.clone() }
    }

    pub fn domain(&self) -> &[PointId] {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain.is_empty()
    }

    pub fn full_len(&self) -> usize {
        self.n_full
    }

    /// Position of a point in the domain.
    pub fn position(&self, x: PointId) -> Option<usize> {
        self.index.get(x).copied().filter(|&a| a != usize::MAX)
    }

    pub fn stiffness(&self) -> &SparseSym {
        &self.stiffness
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn separable(&self) -> Option<&Separable> {
        self.separable.as_deref()
    }

    /// `M^{-1/2} K M^{-1/2}`, the operator in `mu`-orthonormal coordinates.
    pub fn symmetric(&self) -> SparseSym {
        let d: Vec<f64> = self.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
        self.stiffness.scale_symmetric(&d)
    }

    /// `L f` for `f` indexed by domain position.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; f.len()];
        self.stiffness.matvec(f, &mut y);
        y.iter_mut().zip(&self.mass).for_each(|(v, m)| *v /= m);
        y
    }

    /// `Q(psi) = 1/2 sum_{x,y} w_xy (psi(x) - psi(y))^2` for `psi` on the
    /// domain, extended by zero.
    pub fn quadratic_form(&self, psi: &[f64]) -> f64 {
        self.stiffness.quadratic_form(psi)
    }

    /// `Q` evaluated directly from the edges for a function on all points;
    /// values outside the domain are treated as zero.
    pub fn edge_energy(&self, psi_full: &[f64]) -> f64 {
        let val = |x: usize| if self.index[x] == usize::MAX { 0.0 } else { psi_full[x] };
        self.edges.iter().map(|e| e.w * (val(e.u) - val(e.v)).powi(2)).sum()
    }

    /// `sum psi^2 mu` over the domain.
    pub fn norm2(&self, psi: &[f64]) -> f64 {
        psi.iter().zip(&self.mass).map(|(v, m)| v * v * m).sum()
    }

    /// Restricts a function on all points to the domain.
    pub fn restrict(&self, f_full: &[f64]) -> Vec<f64> {
        self.domain.iter().map(|&x| f_full[x]).collect()
    }

    /// Extends a domain function by zero.
    pub fn extend(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_full];
        for (a, &x) in self.domain.iter().enumerate() {
            out[x] = f[a];
        }
        out
    }

    /// Dense eigendecomposition; needs a domain of at most
    /// [`DENSE_SPECTRUM_MAX`] points.
    pub fn spectrum(&self) -> Result<Spectrum> {
        if self.len() > DENSE_SPECTRUM_MAX {
            return invalid(format!(
                "full spectrum needs at most {DENSE_SPECTRUM_MAX} domain points, got {}",
                self.len()
            ));
        }
        let (values, u) = dense_eigen(self.symmetric().to_dense());
        let scale: Vec<f64> = self.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
        let vectors = DMatrix::from_fn(u.nrows(), u.ncols(), |i, k| u[(i, k)] * scale[i]);
        Ok(Spectrum { values, vectors })
    }

    fn positions(&self, set: &[PointId]) -> Result<Vec<usize>> {
        let mut pos = Vec::with_capacity(set.len());
        for &x in set {
            if x >= self.n_full {
                return Err(Error::UnknownPoint(x));
            }
            match self.position(x) {
                Some(a) => pos.push(a),
                None => return invalid(format!("point {x} is outside the operator domain")),
            }
        }
        pos.sort_unstable();
        pos.dedup();
        Ok(pos)
    }

    /// Smallest eigenpair of `L - diag(v)` on the positions `keep`, with
    /// the eigenvector returned in `mu`-normalized form.
    fn smallest_on(&self, keep: Option<&[usize]>, v: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
        let s = self.symmetric();
        let s = match v {
            Some(v) => s.add_diagonal(&v.iter().map(|x| -x).collect::<Vec<_>>()),
            None => s,
        };
        let (s, mass): (SparseSym, Vec<f64>) = match keep {
            Some(k) => (s.principal(k), k.iter().map(|&a| self.mass[a]).collect()),
            None => (s, self.mass.clone()),
        };
        let (val, u) = smallest_eigenpair(&s)?;
        let phi: Vec<f64> = u.iter().zip(&mass).map(|(x, m)| x / m.sqrt()).collect();
        Ok((val, phi))
    }

    /// Solver for `(K + alpha M) x = b`, in place.
    pub fn shifted_solver(&self, alpha: f64) -> Result<Box<dyn Fn(&mut [f64]) -> Result<()> + Sync + '_>> {
        if let Some(sep) = &self.separable {
            if sep.min_eigenvalue() + alpha <= 0.0 {
                return Err(Error::Numerical("shifted operator is singular".into()));
            }
            let sep = sep.clone();
            return Ok(Box::new(move |b: &mut [f64]| {
                let x = sep.apply_fn(&|l| 1.0 / (l + alpha), b);
                b.copy_from_slice(&x);
                Ok(())
            }));
        }
        let a = self.stiffness.add_diagonal(&self.mass.iter().map(|m| alpha * m).collect::<Vec<_>>());
        if BandLdl::storage(&a) <= BAND_BUDGET {
            let ldl = BandLdl::factor(&a).ok_or_else(|| Error::Numerical("shifted operator is not positive definite".into()))?;
            return Ok(Box::new(move |b: &mut [f64]| {
                ldl.solve_in_place(b);
                Ok(())
            }));
        }
        let n = a.dim();
        Ok(Box::new(move |b: &mut [f64]| {
            let apply = |x: &[f64], y: &mut [f64]| a.matvec(x, y);
            let x = conjugate_gradient(&apply, b, 1e-13, 20 * n)?;
            b.copy_from_slice(&x);
            Ok(())
        }))
    }
}

/// First eigenvalue of `L` with Dirichlet conditions outside `u`.
pub fn lambda1(op: &DirichletOperator, u: &[PointId]) -> Result<f64> {
    if u.is_empty() {
        return invalid("lambda1 needs a nonempty set");
    }
    let keep = op.positions(u)?;
    if keep.len() == op.len() {
        if let Some(sep) = op.separable() {
            return Ok(sep.min_eigenvalue());
        }
        return Ok(op.smallest_on(None, None)?.0);
    }
    Ok(op.smallest_on(Some(&keep), None)?.0)
}

/// Smallest eigenvalue of `L - V` on the operator domain, with its
/// `mu`-normalized eigenvector.
pub fn schrodinger_ground_state(op: &DirichletOperator, v: &Potential) -> Result<(f64, Vec<f64>)> {
    if v.values().len() != op.full_len() {
        return invalid("potential length does not match the space");
    }
    let vd = op.restrict(v.values());
    if vd.iter().all(|&x| x == 0.0) {
        if let Some(sep) = op.separable() {
            let (val, phi) = sep.ground_state();
            return Ok((val, phi));
        }
    }
    op.smallest_on(None, Some(&vd))
}

/// `lambda_1(L - V)`.
pub fn schrodinger_lambda1(op: &DirichletOperator, v: &Potential) -> Result<f64> {
    Ok(schrodinger_ground_state(op, v)?.0)
}
