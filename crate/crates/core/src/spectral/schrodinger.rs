//! Fefferman-Phong constants, two-sided bounds on the bottom of the
//! spectrum of `L - V`, positivity criteria, Hardy inequalities and the
//! product-with-a-line identities.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{heat_kernel, lambda1, schrodinger_lambda1, Boundary, DirichletOperator};
use crate::error::{invalid, Error, Result};
use crate::linalg::{largest_generalized, largest_generalized_dense, DENSE_EXTREME_MAX};
use crate::maximal::{morrey_norm, MorreyNorm, Potential};
use crate::report::Check;
use crate::space::{doubling_profile, path, product_space, DoublingProfile, MetricMeasureSpace, PointId};
use crate::util::{rng_stream, ArgMax};

/// Relative agreement required between the two evaluations of the
/// Fefferman-Phong eigenvalue.
const ADJOINT_TOL: f64 = 1e-8;

fn check_potential(op: &DirichletOperator, v: &Potential) -> Result<()> {
    if v.values().len() != op.full_len() {
        return invalid(format!("potential has {} values for {} points", v.values().len(), op.full_len()));
    }
    Ok(())
}

/// `max <W psi, psi> / <(K + alpha M) psi, psi>` with `W = V mu` on the
/// domain, plus the relative gap to an independent evaluation: the dense
/// norm of `W^{1/2} (K + alpha M)^{-1} W^{1/2}` for small problems, the
/// Rayleigh quotient of the returned eigenvector otherwise.
fn generalized_top(op: &DirichletOperator, v: &Potential, alpha: f64) -> Result<(f64, Vec<f64>, f64)> {
    let w: Vec<f64> = op.restrict(v.values()).iter().zip(op.mass()).map(|(a, m)| a * m).collect();
    if w.iter().all(|&x| x == 0.0) {
        return Ok((0.0, vec![0.0; w.len()], 0.0));
    }
    let solve = op.shifted_solver(alpha)?;
    let (theta, psi) = largest_generalized(&w, &*solve)?;
    let other = if op.len() <= DENSE_EXTREME_MAX {
        let mut k = op.stiffness().to_dense();
        for (a, m) in op.mass().iter().enumerate() {
            k[(a, a)] += alpha * m;
        }
        largest_generalized_dense(&w, &k)?
    } else {
        let num: f64 = psi.iter().zip(&w).map(|(p, x)| p * p * x).sum();
        let den = op.quadratic_form(&psi) + alpha * op.norm2(&psi);
        num / den
    };
    Ok((theta, psi, (theta - other).abs() / theta.abs().max(1e-300)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeffermanPhong {
    pub p: f64,
    /// Scale `R`; infinite for the scale-free form.
    pub radius: f64,
    /// Largest generalized eigenvalue `theta`.
    pub theta: f64,
    pub morrey: MorreyNorm,
    /// `theta / N_{p,R}(V)`.
    pub c_emp: f64,
    /// Relative gap between the two evaluations of `theta`.
    pub adjoint_gap: f64,
    /// Point where the extremal function peaks.
    pub peak: PointId,
    pub checks: Vec<Check>,
}

/// Empirical constant in `int V psi^2 <= C N_{p,R}(V) (Q(psi) + R^{-2} ||psi||^2)`
/// (or without the `R^{-2}` term when `R` is infinite).
pub fn fefferman_phong_constant(
    space: &MetricMeasureSpace,
    op: &DirichletOperator,
    v: &Potential,
    p: f64,
    radius: f64,
) -> Result<FeffermanPhong> {
    check_potential(op, v)?;
    if !(p > 1.0) {
        return invalid("Fefferman-Phong constant needs p > 1");
    }
    if !(radius > 0.0) {
        return invalid("radius must be positive");
    }
    let alpha = if radius.is_finite() { 1.0 / (radius * radius) } else { 0.0 };
    if alpha == 0.0 && lambda1(op, op.domain())? <= 1e-12 {
        return invalid("the scale-free constant needs an invertible operator (use a Dirichlet domain)");
    }
    let morrey = morrey_norm(space, v, p, radius)?;
    if morrey.value == 0.0 {
        return invalid("potential has zero Morrey norm");
    }
    let (theta, psi, gap) = generalized_top(op, v, alpha)?;
    let mut peak = ArgMax::new();
    for (a, x) in psi.iter().enumerate() {
        peak.offer(x.abs(), op.domain()[a]);
    }
    let checks = vec![Check::new("adjoint_agreement", gap <= ADJOINT_TOL, serde_json::json!({ "relative_gap": gap }))];
    Ok(FeffermanPhong {
        p,
        radius,
        theta,
        c_emp: theta / morrey.value,
        morrey,
        adjoint_gap: gap,
        peak: peak.key.unwrap_or(0),
        checks,
    })
}

/// Member `index` of the seeded potential family: |Gaussian| noise, a
/// single spike, a ball indicator, or a smooth bump, with amplitude
/// log-uniform in `[0.01, 10]`.
pub fn calibration_potential(space: &MetricMeasureSpace, index: usize, seed: u64) -> Potential {
    let n = space.len();
    let mut rng = rng_stream(seed, index as u64);
    let amp = 10f64.powf(rng.gen_range(-2.0..1.0));
    let diam = space.diameter().max(f64::MIN_POSITIVE);
    let vals: Vec<f64> = match index % 4 {
        0 => (0..n).map(|_| amp * rng.sample::<f64, _>(StandardNormal).abs()).collect(),
        1 => {
            let x = rng.gen_range(0..n);
            (0..n).map(|y| if y == x { amp } else { 0.0 }).collect()
        }
        2 => {
            let x = rng.gen_range(0..n);
            let r = rng.gen_range(0.05..0.5) * diam;
            space.distances_from(x).iter().map(|&d| if d < r { amp } else { 0.0 }).collect()
        }
        _ => {
            let x = rng.gen_range(0..n);
            let w = rng.gen_range(0.02..0.3) * diam;
            space.distances_from(x).iter().map(|&d| amp * (-(d * d) / (2.0 * w * w)).exp()).collect()
        }
    };
    Potential::new(vals).expect("family values are finite and nonnegative")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Calibration {
    pub p: f64,
    pub family: usize,
    pub seed: u64,
    pub radii: Vec<f64>,
    /// Largest empirical Fefferman-Phong constant over family and radii.
    pub fp_max: f64,
    /// `(member, radius)` attaining `fp_max`.
    pub witness: (usize, f64),
    /// Frozen constant `2 fp_max`.
    pub cp: f64,
}

/// Radii `2^j` (times the smallest distance) up to the diameter.
fn dyadic_radii(space: &MetricMeasureSpace) -> Vec<f64> {
    let h = space.min_positive_distance();
    let diam = space.diameter();
    if !(h > 0.0) || !h.is_finite() {
        return vec![1.0];
    }
    let mut out = Vec::new();
    let mut r = h;
    while r <= diam * (1.0 + 1e-12) {
        out.push(r);
        r *= 2.0;
    }
    if out.is_empty() {
        out.push(h);
    }
    out
}

/// Calibrates `C_p` as twice the largest Fefferman-Phong constant over a
/// fixed seeded family of potentials and dyadic scales.
pub fn calibrate_cp(space: &MetricMeasureSpace, op: &DirichletOperator, p: f64, family: usize, seed: u64) -> Result<Calibration> {
    if family == 0 {
        return invalid("calibration family must be nonempty");
    }
    let radii = dyadic_radii(space);
    let mut best = ArgMax::new();
    for i in 0..family {
        let v = calibration_potential(space, i, seed);
        for &r in &radii {
            let fp = fefferman_phong_constant(space, op, &v, p, r)?;
            best.offer(fp.c_emp, (i, r));
        }
    }
    Ok(Calibration { p, family, seed, radii, fp_max: best.value, witness: best.key.unwrap(), cp: 2.0 * best.value })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumBoundResult {
    /// `sup_{x,delta} (C1 avg_{B(x,delta)} V - delta^{-2})`.
    pub lower: f64,
    /// `sup_{x,delta} (Cp (avg_{B(x,delta)} V^p)^{1/p} - delta^{-2})`.
    pub upper: f64,
    /// `lambda_1(L - V)`.
    pub exact: f64,
    pub lower_witness: Option<(PointId, f64)>,
    pub upper_witness: Option<(PointId, f64)>,
    pub c1: f64,
    pub cp: f64,
    pub p: f64,
    /// Smallest Rayleigh quotient of `L - V` over the tent functions tried.
    pub tent_min: Option<f64>,
    pub tent_witness: Option<(PointId, f64)>,
    pub checks: Vec<Check>,
}

/// Two-sided bound `lower <= -lambda_1(L - V) <= upper`. The sups run over
/// all centers and critical radii up to the diameter. `c1` defaults to
/// `A^{-1-eta/2}` from the doubling profile at the diameter. Tent functions
/// `f_r(d(o, .))` are tried for every `tent_stride`-th center (0 disables).
pub fn spectrum_bounds(
    space: &MetricMeasureSpace,
    op: &DirichletOperator,
    v: &Potential,
    p: f64,
    c1: Option<f64>,
    cp: f64,
    tent_stride: usize,
) -> Result<SpectrumBoundResult> {
    check_potential(op, v)?;
    if !(p >= 1.0) {
        return invalid("spectrum bounds need p >= 1");
    }
    let c1 = match c1 {
        Some(c) if c > 0.0 => c,
        Some(c) => return invalid(format!("C1 must be positive, got {c}")),
        None => {
            let prof = doubling_profile(space, space.diameter().max(f64::MIN_POSITIVE))?;
            prof.doubling.powf(-1.0 - prof.eta / 2.0)
        }
    };
    if !(cp > 0.0) {
        return invalid(format!("Cp must be positive, got {cp}"));
    }
    let vals = v.values();
    let vp: Vec<f64> = vals.iter().map(|x| x.powf(p)).collect();
    let mu = space.measure();
    let cap = space.diameter().max(space.min_positive_distance());
    let (lo, hi) = (0..space.len())
        .into_par_iter()
        .map(|x| {
            space.with_row(x, |row| {
                let (mut s1, mut sp) = (0.0, 0.0);
                let mut pre1 = vec![0.0];
                let mut prep = vec![0.0];
                for &y in &row.order {
                    s1 += vals[y] * mu[y];
                    sp += vp[y] * mu[y];
                    pre1.push(s1);
                    prep.push(sp);
                }
                let mut lo = ArgMax::new();
                let mut hi = ArgMax::new();
                for (k, r) in row.ball_levels(cap) {
                    let m = row.cum_measure[k];
                    lo.offer(c1 * pre1[k] / m - r.powi(-2), (x, r));
                    hi.offer(cp * (prep[k] / m).powf(1.0 / p) - r.powi(-2), (x, r));
                }
                (lo, hi)
            })
        })
        .reduce(|| (ArgMax::new(), ArgMax::new()), |a, b| (a.0.merge(b.0), a.1.merge(b.1)));
    let exact = schrodinger_lambda1(op, v)?;
    let (tent_min, tent_witness) = if tent_stride > 0 { tent_rayleigh(space, op, v, tent_stride) } else { (None, None) };
    let scale = exact.abs().max(lo.value.abs()).max(hi.value.abs()).max(1.0);
    let tol = 1e-9 * scale;
    let mut checks = vec![
        Check::new(
            "lower_bound",
            lo.value <= -exact + tol,
            serde_json::json!({ "lower": lo.value, "minus_lambda1": -exact, "witness": lo.key }),
        ),
        Check::new(
            "upper_bound",
            -exact <= hi.value + tol,
            serde_json::json!({ "upper": hi.value, "minus_lambda1": -exact, "witness": hi.key }),
        ),
    ];
    if let Some(t) = tent_min {
        checks.push(Check::new(
            "tent_rayleigh",
            t >= exact - tol,
            serde_json::json!({ "tent_min": t, "lambda1": exact, "witness": tent_witness }),
        ));
    }
    Ok(SpectrumBoundResult {
        lower: lo.value,
        upper: hi.value,
        exact,
        lower_witness: lo.key,
        upper_witness: hi.key,
        c1,
        cp,
        p,
        tent_min,
        tent_witness,
        checks,
    })
}

/// `f_r(t) = r` on `[0, r]`, `2r - t` on `(r, 2r]`, `0` beyond.
fn tent(r: f64, t: f64) -> f64 {
    if t <= r {
        r
    } else if t <= 2.0 * r {
        2.0 * r - t
    } else {
        0.0
    }
}

fn tent_rayleigh(
    space: &MetricMeasureSpace,
    op: &DirichletOperator,
    v: &Potential,
    stride: usize,
) -> (Option<f64>, Option<(PointId, f64)>) {
    let radii = dyadic_radii(space);
    let best = (0..space.len())
        .into_par_iter()
        .step_by(stride)
        .map(|o| {
            let d = space.distances_from(o);
            let mut best = ArgMax::new();
            for &r in &radii {
                let mut psi: Vec<f64> = d.iter().map(|&t| tent(r, t)).collect();
                for x in 0..psi.len() {
                    if op.position(x).is_none() {
                        psi[x] = 0.0;
                    }
                }
                let dom = op.restrict(&psi);
                let nn = op.norm2(&dom);
                if nn == 0.0 {
                    continue;
                }
                let pot: f64 = dom.iter().zip(op.restrict(v.values())).zip(op.mass()).map(|((a, b), m)| a * a * b * m).sum();
                let q = op.edge_energy(&psi);
                best.offer(-(q - pot) / nn, (o, r));
            }
            best
        })
        .reduce(ArgMax::new, ArgMax::merge);
    if best.key.is_some() {
        (Some(-best.value), best.key)
    } else {
        (None, None)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleSweepEntry {
    pub lambda: f64,
    /// `max <V psi, psi> / (Q(psi) + lambda^2 ||psi||^2)`.
    pub theta: f64,
    /// `N_{p, 1/lambda}(V)`.
    pub morrey: f64,
    /// `theta / morrey`, compared against `Cp`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PositivityReport {
    pub p: f64,
    pub radius: f64,
    pub cp: f64,
    pub lambda1_m: f64,
    pub morrey: f64,
    /// `(1 + lambda_1 R^2) / (lambda_1 R^2)`.
    pub factor: f64,
    /// `max <V psi, psi> / (Q(psi) + lambda_1/2 ||psi||^2)`.
    pub theta_plus: f64,
    /// `max <V psi, psi> / (Q(psi) - lambda_1/2 ||psi||^2)`.
    pub theta_minus: f64,
    /// `theta / (N factor)` for each sign form.
    pub constant_plus: f64,
    pub constant_minus: f64,
    pub sweep: Vec<ScaleSweepEntry>,
    pub checks: Vec<Check>,
}

/// Positivity statements as generalized eigenvalue problems: the
/// `lambda_1(M) > 0` strengthening in both sign forms, and the
/// `Q + lambda^2 ||.||^2` form at each `lambda` of the sweep.
#[allow(clippy::too_many_arguments)]
pub fn positivity_checks(
    space: &MetricMeasureSpace,
    op: &DirichletOperator,
    v: &Potential,
    p: f64,
    radius: f64,
    cp: f64,
    lambda1_m: Option<f64>,
    lambdas: &[f64],
) -> Result<PositivityReport> {
    check_potential(op, v)?;
    if !(radius > 0.0) || !radius.is_finite() {
        return invalid("positivity checks need a finite positive scale R");
    }
    let l1 = match lambda1_m {
        Some(l) => l,
        None => lambda1(op, op.domain())?,
    };
    if !(l1 > 0.0) {
        return invalid(format!("the lambda_1(M) > 0 statement needs a positive bottom of the spectrum, got {l1}"));
    }
    let morrey = morrey_norm(space, v, p, radius)?.value;
    let factor = (1.0 + l1 * radius * radius) / (l1 * radius * radius);
    let (theta_plus, _, _) = generalized_top(op, v, l1 / 2.0)?;
    let (theta_minus, _, _) = generalized_top(op, v, -l1 / 2.0)?;
    let norm = |theta: f64| if theta == 0.0 { 0.0 } else { theta / (morrey * factor) };
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sweep = Vec::new();
    for &lam in &sorted {
        if !(lam > 0.0) {
            return invalid("sweep values of lambda must be positive");
        }
        let (theta, _, _) = generalized_top(op, v, lam * lam)?;
        let m = morrey_norm(space, v, p, 1.0 / lam)?.value;
        sweep.push(ScaleSweepEntry { lambda: lam, theta, morrey: m, ratio: if theta == 0.0 { 0.0 } else { theta / m } });
    }
    let monotone = sweep.windows(2).all(|w| w[1].theta <= w[0].theta * (1.0 + 1e-10));
    let (cpl, cmi) = (norm(theta_plus), norm(theta_minus));
    let worst_sweep = sweep.iter().map(|e| e.ratio).fold(0.0f64, f64::max);
    let checks = vec![
        Check::new("plus_form", cpl <= cp, serde_json::json!({ "constant": cpl, "cp": cp })),
        Check::new("minus_form", cmi <= cp, serde_json::json!({ "constant": cmi, "cp": cp })),
        Check::new("lambda_sweep", worst_sweep <= cp, serde_json::json!({ "worst_ratio": worst_sweep, "cp": cp })),
        Check::new(
            "sweep_monotone",
            monotone,
            serde_json::json!({ "theta": sweep.iter().map(|e| e.theta).collect::<Vec<_>>() }),
        ),
    ];
    Ok(PositivityReport {
        p,
        radius,
        cp,
        lambda1_m: l1,
        morrey,
        factor,
        theta_plus,
        theta_minus,
        constant_plus: cpl,
        constant_minus: cmi,
        sweep,
        checks,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardyWitness {
    pub r: f64,
    pub big_r: f64,
    pub nu: f64,
    /// `((nu-2)/2)^2 int phi^2 / rho^2` for the cutoff function `phi`.
    pub hardy_lhs: f64,
    /// `Q(phi)`.
    pub hardy_rhs: f64,
    /// `((nu-2)/2)^2 r^{-nu} V(o, r)`.
    pub volume_lhs: f64,
    /// `R^{-nu} mu(B(o, 2R) \ B(o, R))`.
    pub volume_rhs: f64,
    /// `V(o, R) / V(o, r)` against `(R/r)^nu`.
    pub volume_ratio: f64,
    pub power: f64,
    /// `ln(V(o,R)/V(o,r)) / ln(R/r)`.
    pub effective_nu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardyReport {
    pub origin: PointId,
    pub p: f64,
    /// `sup_{x, r<R} r^2 (avg_{B(x,r)} rho^{-2p})^{1/p}`, when a scale `R` is given.
    pub k_p: Option<MorreyNorm>,
    /// `max int psi^2/rho^2 / Q(psi)` on the Dirichlet domain.
    pub c_h: f64,
    pub inv_c_h: f64,
    /// `nu` with `((nu-2)/2)^2 = 1/C_H`.
    pub nu_from_c: f64,
    /// Whether `rho` is the Euclidean distance of the coordinates.
    pub euclidean: bool,
    pub witnesses: Vec<HardyWitness>,
    /// `int phi^2/rho^2 <= C_H Q(phi)` for every cutoff witness.
    pub checks: Vec<Check>,
}

/// `rho(x) = |x - o|` when the space carries coordinates (a discretized
/// manifold), the metric distance otherwise.
fn radial(space: &MetricMeasureSpace, o: PointId) -> (Vec<f64>, bool) {
    match space.coords() {
        Some(c) => {
            let co = &c[o];
            (c.iter().map(|x| x.iter().zip(co).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()).collect(), true)
        }
        None => (space.distances_from(o), false),
    }
}

/// Hardy constant, the Morrey size `K_p` of `rho^{-2}` at scale `radius`
/// (skipped when `None`), and the cutoff witnesses `(r, R, nu)` of the
/// reverse-doubling necessity argument.
pub fn hardy_check(
    space: &MetricMeasureSpace,
    op: &DirichletOperator,
    o: PointId,
    p: f64,
    radius: Option<f64>,
    witnesses: &[(f64, f64, f64)],
) -> Result<HardyReport> {
    space.check_point(o)?;
    if op.position(o).is_none() {
        return invalid(format!("origin {o} is outside the operator domain"));
    }
    if op.full_len() != space.len() {
        return invalid("operator and space sizes differ");
    }
    let (rho, euclidean) = radial(space, o);
    let v: Vec<f64> = rho.iter().map(|&t| if t > 0.0 { t.powi(-2) } else { 0.0 }).collect();
    let v = Potential::new(v)?;
    let k_p = radius.map(|r| morrey_norm(space, &v, p, r)).transpose()?;
    let (c_h, _, gap) = generalized_top(op, &v, 0.0)?;
    if gap > 1e-6 {
        return Err(Error::Numerical(format!("Hardy eigenvalue evaluations disagree (relative gap {gap:.2e})")));
    }
    let inv = 1.0 / c_h;
    let mut out = Vec::new();
    for &(r, big_r, nu) in witnesses {
        if !(0.0 < r && r < big_r) {
            return invalid("Hardy witness needs 0 < r < R");
        }
        let a = (nu - 2.0) / 2.0;
        let f = |t: f64| {
            if t <= r {
                r.powf(-a)
            } else if t <= big_r {
                t.powf(-a)
            } else if t <= 2.0 * big_r {
                2.0 * big_r.powf(-a) - big_r.powf(-nu / 2.0) * t
            } else {
                0.0
            }
        };
        let mut phi: Vec<f64> = rho.iter().map(|&t| f(t)).collect();
        for x in 0..phi.len() {
            if op.position(x).is_none() {
                phi[x] = 0.0;
            }
        }
        let mu = space.measure();
        let lhs: f64 = a * a * phi.iter().zip(v.values()).zip(mu).map(|((f, w), m)| f * f * w * m).sum::<f64>();
        let rhs = op.edge_energy(&phi);
        let vol = |t: f64| rho.iter().zip(mu).filter(|(d, _)| **d < t).map(|(_, m)| m).sum::<f64>();
        let (vr, vbig, v2big) = (vol(r), vol(big_r), vol(2.0 * big_r));
        out.push(HardyWitness {
            r,
            big_r,
            nu,
            hardy_lhs: lhs,
            hardy_rhs: rhs,
            volume_lhs: a * a * r.powf(-nu) * vr,
            volume_rhs: big_r.powf(-nu) * (v2big - vbig),
            volume_ratio: vbig / vr,
            power: (big_r / r).powf(nu),
            effective_nu: (vbig / vr).ln() / (big_r / r).ln(),
        });
    }
    let worst = out
        .iter()
        .filter(|w| w.hardy_rhs > 0.0 && w.nu != 2.0)
        .map(|w| w.hardy_lhs / ((w.nu - 2.0) / 2.0).powi(2) / (c_h * w.hardy_rhs))
        .fold(0.0f64, f64::max);
    let checks = vec![Check::new("witness_rayleigh", worst <= 1.0 + 1e-9, serde_json::json!({ "worst_ratio": worst }))];
    Ok(HardyReport {
        origin: o,
        p,
        k_p,
        c_h,
        inv_c_h: inv,
        nu_from_c: 2.0 + 2.0 * inv.sqrt(),
        euclidean,
        witnesses: out,
        checks,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProductIdentityReport {
    pub n_line: usize,
    pub h: f64,
    pub lambda1_base: f64,
    pub lambda1_product: f64,
    pub lambda1_gap: f64,
    /// Largest `|p~_t - p^line_t p_t|` per time.
    pub heat_errors: Vec<(f64, f64)>,
    pub morrey_radius: f64,
    pub morrey_base: f64,
    pub morrey_base_half: f64,
    pub morrey_product: f64,
    pub morrey_upper: f64,
    pub morrey_lower: f64,
    pub base_doubling: f64,
    pub product_doubling: DoublingProfile,
    pub checks: Vec<Check>,
}

/// Identities for `line x base`: `lambda_1(L~ - V~) = lambda_1(L - V)` with
/// `V~(s, m) = V(m)`, heat kernel factorization at `times`, and Morrey
/// comparability at scale `radius`. The product operator is assembled from
/// its own edges; no separable shortcut is used for it.
#[allow(clippy::too_many_arguments)]
pub fn product_identity_check(
    space: &MetricMeasureSpace,
    v: &Potential,
    n_line: usize,
    h: f64,
    p: f64,
    radius: f64,
    times: &[f64],
) -> Result<ProductIdentityReport> {
    let base = DirichletOperator::new(space, Boundary::Free)?;
    check_potential(&base, v)?;
    let prod_space = product_space(space, n_line, h)?;
    let prod = DirichletOperator::new(&prod_space, Boundary::Free)?.without_separable();
    let n = space.len();
    let lifted = Potential::new((0..n_line).flat_map(|_| v.values().iter().copied()).collect())?;
    let l_base = schrodinger_lambda1(&base, v)?;
    let l_prod = schrodinger_lambda1(&prod, &lifted)?;
    let gap = (l_base - l_prod).abs();
    let mut heat_errors = Vec::new();
    if !times.is_empty() {
        let line = DirichletOperator::new(&path(n_line, h)?, Boundary::Free)?;
        let hk_line = heat_kernel(&line, times)?;
        let hk_base = heat_kernel(&base.without_separable(), times)?;
        let hk_prod = heat_kernel(&prod, times)?;
        for (ti, &t) in times.iter().enumerate() {
            let (pl, pb) = (hk_line.matrix(ti), hk_base.matrix(ti));
            let err = (0..n_line * n)
                .into_par_iter()
                .map(|a| {
                    let row = hk_prod.row(ti, a);
                    let (s, m) = (a / n, a % n);
                    row.iter()
                        .enumerate()
                        .map(|(b, &val)| (val - pl[(s, b / n)] * pb[(m, b % n)]).abs())
                        .fold(0.0f64, f64::max)
                })
                .reduce(|| 0.0, f64::max);
            heat_errors.push((t, err));
        }
    }
    let base_doubling = doubling_profile(space, radius)?.doubling;
    let mb = morrey_norm(space, v, p, radius)?.value;
    let mh = morrey_norm(space, v, p, radius / 2.0)?.value;
    let mp = morrey_norm(&prod_space, &lifted, p, radius)?.value;
    let upper = 4.0 * base_doubling * mb;
    let lower = (4f64.powf(p) / (3.0 * base_doubling)).powf(1.0 / p) * mh;
    let product_doubling = doubling_profile(&prod_space, radius)?;
    let worst_heat = heat_errors.iter().map(|e| e.1).fold(0.0f64, f64::max);
    let checks = vec![
        Check::new("lambda1_identity", gap < 1e-9, serde_json::json!({ "gap": gap, "base": l_base, "product": l_prod })),
        Check::new("heat_factorization", worst_heat < 1e-8, serde_json::json!({ "errors": heat_errors })),
        Check::new(
            "morrey_comparability",
            mp <= upper * (1.0 + 1e-12) && mp >= lower * (1.0 - 1e-12),
            serde_json::json!({ "product": mp, "upper": upper, "lower": lower }),
        ),
    ];
    Ok(ProductIdentityReport {
        n_line,
        h,
        lambda1_base: l_base,
        lambda1_product: l_prod,
        lambda1_gap: gap,
        heat_errors,
        morrey_radius: radius,
        morrey_base: mb,
        morrey_base_half: mh,
        morrey_product: mp,
        morrey_upper: upper,
        morrey_lower: lower,
        base_doubling,
        product_doubling,
        checks,
    })
}
