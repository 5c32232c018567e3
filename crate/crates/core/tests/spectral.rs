use std::sync::Arc;

use mmlab_core::maximal::{morrey_norm, Potential};
use mmlab_core::space::{binary_tree, grid, path, random_geometric, Sigma2};
use mmlab_core::spectral::{
    bessel_kernel, bessel_separation_check, calibrate_cp, faber_krahn_fit, fefferman_phong_constant, gaussian_bound_fit,
    hardy_check, heat_kernel, lambda1, positivity_checks, product_identity_check, read_binary, riesz_bound_fit,
    riesz_kernel, schrodinger_lambda1, spectrum_bounds, Boundary, DirichletOperator,
};
use mmlab_core::{MetricMeasureSpace, PointId};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

/// Stiffness matrix on `domain` assembled straight from the edge list.
fn dense_stiffness(space: &MetricMeasureSpace, domain: &[PointId]) -> DMatrix<f64> {
    let n = domain.len();
    let pos = |x: usize| domain.iter().position(|&d| d == x);
    let mut k = DMatrix::zeros(n, n);
    for e in space.edges() {
        let (a, b) = (pos(e.u), pos(e.v));
        if let Some(a) = a {
            k[(a, a)] += e.w;
        }
        if let Some(b) = b {
            k[(b, b)] += e.w;
        }
        if let (Some(a), Some(b)) = (a, b) {
            k[(a, b)] -= e.w;
            k[(b, a)] -= e.w;
        }
    }
    k
}

/// Eigenvalues of `M^{-1/2} (K - diag(V mu)) M^{-1/2}` by dense solve.
fn dense_eigs(space: &MetricMeasureSpace, domain: &[PointId], v: Option<&[f64]>) -> Vec<f64> {
    let mut k = dense_stiffness(space, domain);
    let mu = space.measure();
    for (a, &x) in domain.iter().enumerate() {
        if let Some(v) = v {
            k[(a, a)] -= v[x] * mu[x];
        }
    }
    for a in 0..domain.len() {
        for b in 0..domain.len() {
            k[(a, b)] /= (mu[domain[a]] * mu[domain[b]]).sqrt();
        }
    }
    let mut e: Vec<f64> = k.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

fn weighted_grid(dim: usize, side: usize) -> MetricMeasureSpace {
    grid(dim, side, 1.0, Sigma2::Function(Arc::new(|x: &[f64]| 1.0 + 0.5 * (x[0] * 0.7).sin().powi(2)))).unwrap()
}

fn dirichlet_path_lambda(n: usize) -> f64 {
    2.0 - 2.0 * (std::f64::consts::PI / (n as f64 - 1.0)).cos()
}

#[test]
fn free_path_of_three() {
    let op = DirichletOperator::new(&path(3, 1.0).unwrap(), Boundary::Free).unwrap();
    let s = op.spectrum().unwrap();
    for (a, b) in s.values.iter().zip([0.0, 1.0, 3.0]) {
        assert!((a - b).abs() < 1e-12, "{:?}", s.values);
    }
    let c = s.vectors.column(0);
    assert!((c[0] - c[1]).abs() < 1e-12 && (c[1] - c[2]).abs() < 1e-12);
    let norm: f64 = c.iter().zip(op.mass()).map(|(x, m)| x * x * m).sum();
    assert!((norm - 1.0).abs() < 1e-12);
}

#[test]
fn dirichlet_path_closed_form() {
    for n in [5, 11, 51, 201] {
        let op = DirichletOperator::new(&path(n, 1.0).unwrap(), Boundary::Dirichlet).unwrap();
        let l = lambda1(&op, op.domain()).unwrap();
        assert!((l - dirichlet_path_lambda(n)).abs() < 1e-10, "n={n}: {l}");
    }
    let op = DirichletOperator::new(&path(201, 1.0).unwrap(), Boundary::Dirichlet).unwrap();
    let l = lambda1(&op, op.domain()).unwrap();
    let cont = (std::f64::consts::PI / 200.0).powi(2);
    assert!((l / cont - 1.0).abs() < 0.05);
}

#[test]
fn single_point_and_ball() {
    let s = path(201, 1.0).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Free).unwrap();
    assert!((lambda1(&op, &[7]).unwrap() - 2.0).abs() < 1e-12);
    let ball = s.ball(100, 10.5).unwrap();
    let l = lambda1(&op, &ball.members).unwrap();
    let oracle = dense_eigs(&s, &ball.members, None)[0];
    assert!((l - oracle).abs() < 1e-10);
    assert!((l - dirichlet_path_lambda(&ball.members.len() + 2)).abs() < 1e-10);
}

#[test]
fn domain_monotonicity() {
    let s = random_geometric(150, 5, 3).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Free).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let big: Vec<usize> = (0..s.len()).filter(|_| rng.gen_bool(0.5)).collect();
        if big.len() < 2 {
            continue;
        }
        let small: Vec<usize> = big.iter().copied().filter(|_| rng.gen_bool(0.6)).collect();
        if small.is_empty() {
            continue;
        }
        let (ls, lb) = (lambda1(&op, &small).unwrap(), lambda1(&op, &big).unwrap());
        assert!(ls >= lb - 1e-10, "{ls} < {lb}");
    }
}

#[test]
fn operator_is_mu_symmetric() {
    let s = weighted_grid(2, 9);
    let op = DirichletOperator::new(&s, Boundary::Dirichlet).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let f: Vec<f64> = (0..op.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g: Vec<f64> = (0..op.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ip = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(op.mass()).map(|((x, y), m)| x * y * m).sum::<f64>();
    let (lf, lg) = (op.apply(&f), op.apply(&g));
    assert!((ip(&lf, &g) - ip(&f, &lg)).abs() < 1e-12);
    assert!((ip(&lf, &f) - op.quadratic_form(&f)).abs() < 1e-12);
    assert!((op.quadratic_form(&f) - op.edge_energy(&op.extend(&f))).abs() < 1e-12);
}

#[test]
fn separable_matches_assembled() {
    for boundary in [Boundary::Free, Boundary::Dirichlet] {
        let s = grid(2, 10, 0.5, Sigma2::Constant(1.7)).unwrap();
        let op = DirichletOperator::new(&s, boundary).unwrap();
        let sep = op.separable().expect("grid operators split");
        let mut a = sep.eigenvalues().to_vec();
        a.sort_by(f64::total_cmp);
        let b = dense_eigs(&s, op.domain(), None);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
        let v = Potential::new((0..s.len()).map(|x| 0.3 * ((x % 7) as f64)).collect()).unwrap();
        let l1 = schrodinger_lambda1(&op, &v).unwrap();
        let l2 = schrodinger_lambda1(&op.without_separable(), &v).unwrap();
        assert!((l1 - l2).abs() < 1e-9);
    }
}

#[test]
fn spectrum_adds_over_factors() {
    let line = DirichletOperator::new(&path(5, 1.0).unwrap(), Boundary::Free).unwrap().spectrum().unwrap().values;
    let sq = DirichletOperator::new(&grid(2, 5, 1.0, Sigma2::Constant(1.0)).unwrap(), Boundary::Free)
        .unwrap()
        .without_separable()
        .spectrum()
        .unwrap()
        .values;
    let mut sums: Vec<f64> = line.iter().flat_map(|a| line.iter().map(move |b| a + b)).collect();
    sums.sort_by(f64::total_cmp);
    for (x, y) in sums.iter().zip(&sq) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn lanczos_matches_closed_form() {
    let s = grid(2, 50, 1.0, Sigma2::Constant(1.0)).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Dirichlet).unwrap().without_separable();
    assert!(op.len() > 2000);
    let l = lambda1(&op, op.domain()).unwrap();
    assert!((l - 2.0 * dirichlet_path_lambda(50)).abs() < 1e-9, "{l}");
}

#[test]
fn heat_semigroup_and_mass() {
    let s = path(51, 1.0).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Free).unwrap();
    let hk = heat_kernel(&op, &[0.5, 1.0, 5000.0]).unwrap();
    assert!(hk.semigroup_error(0, 0, 1).unwrap() < 1e-8);
    for ti in 0..2 {
        for a in 0..51 {
            let sum: f64 = hk.row(ti, a).iter().zip(op.mass()).map(|(p, m)| p * m).sum();
            assert!(sum <= 1.0 + 1e-10 && sum > 1.0 - 1e-8);
        }
    }
    let limit = 1.0 / s.total_measure();
    assert!((hk.get(2, 0, 50) - limit).abs() < 1e-8);
    let dir = DirichletOperator::new(&s, Boundary::Dirichlet).unwrap();
    let hd = heat_kernel(&dir, &[2.0]).unwrap();
    let mass = |a: usize| hd.row(0, a).iter().zip(dir.mass()).map(|(p, m)| p * m).sum::<f64>();
    assert!((0..dir.len()).all(|a| mass(a) <= 1.0 + 1e-12));
    assert!(mass(0) < 0.5 && mass(0) < mass(1));
}

#[test]
fn heat_matches_spectral_synthesis() {
    let s = grid(2, 8, 0.7, Sigma2::Constant(1.3)).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Dirichlet).unwrap();
    let times = [0.1, 1.0, 7.0];
    let sep = heat_kernel(&op, &times).unwrap();
    let dense = heat_kernel(&op.without_separable(), &times).unwrap();
    for ti in 0..times.len() {
        let diff = (sep.matrix(ti) - dense.matrix(ti)).abs().max();
        assert!(diff < 1e-8, "t={} diff {diff}", times[ti]);
    }
}

#[test]
fn heat_binary_round_trip() {
    let op = DirichletOperator::new(&path(9, 1.0).unwrap(), Boundary::Free).unwrap();
    let hk = heat_kernel(&op, &[0.3]).unwrap();
    let file = std::env::temp_dir().join(format!("heat_{}.bin", std::process::id()));
    hk.write_binary(0, &file).unwrap();
    let back = read_binary(&file).unwrap();
    std::fs::remove_file(&file).ok();
    assert_eq!(back, hk.matrix(0));
}

#[test]
fn gaussian_fit_matches_brute_force() {
    let s = path(21, 1.0).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Free).unwrap();
    let times = [0.25, 1.0, 4.0, 9.0, 30.0];
    let hk = heat_kernel(&op, &times).unwrap();
    let (radius, c) = (3.0, 5.0);
    let fit = gaussian_bound_fit(&s, &hk, radius, c, None).unwrap();
    let (mut small, mut large) = (0.0f64, 0.0f64);
    for (ti, &t) in times.iter().enumerate() {
        for x in 0..21 {
            for y in 0..21 {
                let d = s.distance(x, y);
                let p = hk.get(ti, x, y);
                let g = (d * d / (c * t)).exp();
                if t <= radius * radius {
                    let v = (s.ball_measure(x, t.sqrt()) * s.ball_measure(y, t.sqrt())).sqrt();
                    small = small.max(p * v * g);
                } else {
                    let v = (s.ball_measure(x, radius) * s.ball_measure(y, radius)).sqrt();
                    large = large.max(p * v * g);
                }
            }
        }
    }
    assert!((fit.c_small / small - 1.0).abs() < 1e-9, "{} vs {small}", fit.c_small);
    assert!((fit.c_large / large - 1.0).abs() < 1e-9);
    assert!(fit.c_small_near <= fit.c_small);
}

#[test]
fn riesz_two_is_the_green_function() {
    let s = weighted_grid(2, 7);
    let op = DirichletOperator::new(&s, Boundary::Dirichlet).unwrap();
    let k = riesz_kernel(&op, 2.0).unwrap();
    let g = dense_stiffness(&s, op.domain()).try_inverse().unwrap();
    for (a, &x) in op.domain().iter().enumerate() {
        for (b, &y) in op.domain().iter().enumerate() {
            assert!((k.get(x, y) - g[(a, b)]).abs() < 1e-10);
        }
    }
    let boundary = (0..s.len()).find(|x| op.position(*x).is_none()).unwrap();
    assert_eq!(k.get(boundary, op.domain()[0]), 0.0);
}

#[test]
fn free_riesz_is_rejected() {
    let op = DirichletOperator::new(&path(9, 1.0).unwrap(), Boundary::Free).unwrap();
    assert!(riesz_kernel(&op, 1.0).is_err());
}

#[test]
fn bessel_localizes_for_large_lambda() {
    let s = path(21, 1.0).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Dirichlet).unwrap();
    let g = bessel_kernel(&op, 2.0, 1e3).unwrap();
    for &x in op.domain() {
        for &y in op.domain() {
            if x != y {
                assert!(g.get(x, y) < 1e-6 * g.get(x, x));
            }
        }
    }
}

#[test]
fn riesz_constant_is_stable_in_resolution() {
    let fit = |side: usize| {
        let s = grid(3, side, 1.0, Sigma2::Constant(1.0)).unwrap();
        let op = DirichletOperator::new(&s, Boundary::Dirichlet).unwrap();
        let k = riesz_kernel(&op, 1.0).unwrap();
        riesz_bound_fit(&s, &op, &k, 1.0).unwrap().c
    };
    let (a, b) = (fit(11), fit(15));
    assert!(a > 0.0 && (b / a - 1.0).abs() < 0.5, "{a} vs {b}");
}

#[test]
fn bessel_separation_monotone_in_gamma() {
    let s = path(61, 1.0).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Dirichlet).unwrap();
    let lambda = 0.5;
    let g = bessel_kernel(&op, 1.0, lambda).unwrap();
    let gammas = [0.0, 0.25, 0.5, 0.75, 1.0, 2.0];
    let rep = bessel_separation_check(&s, &op, &g, 1.0, lambda, &gammas, 1e3).unwrap();
    assert!(rep.constants[0].is_finite() && rep.constants[0] > 0.0);
    assert!(rep.constants.windows(2).all(|w| w[1] >= w[0]));
    assert!(rep.largest_gamma_below.is_some());
}

#[test]
fn constant_potential_shifts_spectrum() {
    let s = path(101, 1.0).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Dirichlet).unwrap();
    let base = schrodinger_lambda1(&op, &Potential::new(vec![0.0; 101]).unwrap()).unwrap();
    let shifted = schrodinger_lambda1(&op, &Potential::new(vec![0.7; 101]).unwrap()).unwrap();
    assert!((shifted - (base - 0.7)).abs() < 1e-10);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let v: Vec<f64> = (0..101).map(|_| rng.gen_range(0.0..0.2)).collect();
    let got = schrodinger_lambda1(&op, &Potential::new(v.clone()).unwrap()).unwrap();
    let oracle = dense_eigs(&s, op.domain(), Some(&v))[0];
    assert!((got - oracle).abs() < 1e-10);
}

#[test]
fn fefferman_phong_scale_invariance() {
    let s = path(41, 1.0).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Free).unwrap();
    let v: Vec<f64> = (0..41).map(|x| if (15..20).contains(&x) { 1.0 } else { 0.0 }).collect();
    let a = fefferman_phong_constant(&s, &op, &Potential::new(v.clone()).unwrap(), 2.0, 4.0).unwrap();
    let b = fefferman_phong_constant(&s, &op, &Potential::new(v).unwrap().scaled(37.0), 2.0, 4.0).unwrap();
    assert!((a.c_emp / b.c_emp - 1.0).abs() < 1e-9);
    assert!(a.checks.iter().all(|c| c.pass));
    // Constant potential, free boundary: theta = c R^2.
    let c = 0.3;
    let fp = fefferman_phong_constant(&s, &op, &Potential::new(vec![c; 41]).unwrap(), 2.0, 4.0).unwrap();
    assert!((fp.theta - c * 16.0).abs() < 1e-8);
    let n = morrey_norm(&s, &Potential::new(vec![c; 41]).unwrap(), 2.0, 4.0).unwrap().value;
    assert!((fp.c_emp - c * 16.0 / n).abs() < 1e-8);
}

#[test]
fn fefferman_phong_rejects_degenerate_input() {
    let s = path(11, 1.0).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Free).unwrap();
    assert!(fefferman_phong_constant(&s, &op, &Potential::new(vec![0.0; 11]).unwrap(), 2.0, 2.0).is_err());
    assert!(fefferman_phong_constant(&s, &op, &Potential::new(vec![1.0; 11]).unwrap(), 2.0, f64::INFINITY).is_err());
}

#[test]
fn spectrum_bounds_for_zero_potential() {
    let s = path(31, 1.0).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Free).unwrap();
    let r = spectrum_bounds(&s, &op, &Potential::new(vec![0.0; 31]).unwrap(), 2.0, None, 10.0, 3).unwrap();
    assert!(r.exact.abs() < 1e-10);
    assert!((r.lower + 1.0 / s.diameter().powi(2)).abs() < 1e-12);
    assert!(r.lower <= -r.exact);
    // The radius sweep stops at the diameter, so the upper sup is -diam^{-2} < 0.
    assert!((r.upper + 1.0 / s.diameter().powi(2)).abs() < 1e-12);
    assert!(r.tent_min.unwrap() >= r.exact - 1e-12);
}

#[test]
fn bracket_holds_for_random_potentials() {
    let s = path(201, 1.0).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Free).unwrap();
    let cal = calibrate_cp(&s, &op, 2.0, 20, 11).unwrap();
    assert!((cal.cp - 2.0 * cal.fp_max).abs() < 1e-15);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let amp = 10f64.powf(rng.gen_range(-2.0..1.0));
        let v: Vec<f64> = (0..201).map(|_| amp * rng.gen::<f64>()).collect();
        let r = spectrum_bounds(&s, &op, &Potential::new(v).unwrap(), 2.0, None, cal.cp, 0).unwrap();
        assert!(r.lower <= -r.exact + 1e-12 && -r.exact <= r.upper + 1e-12, "{r:?}");
    }
}

#[test]
fn tents_bound_ground_state_energy() {
    let s = path(61, 1.0).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Dirichlet).unwrap();
    let v: Vec<f64> = (0..61).map(|x| if (25..35).contains(&x) { 0.5 } else { 0.0 }).collect();
    let r = spectrum_bounds(&s, &op, &Potential::new(v).unwrap(), 2.0, None, 50.0, 1).unwrap();
    assert!(r.tent_min.unwrap() >= r.exact - 1e-12);
    assert!(r.exact < 0.0);
    assert!(r.lower <= -r.exact + 1e-12 && -r.exact <= r.upper + 1e-12, "{r:?}");
}

#[test]
fn positivity_closed_form() {
    let s = path(101, 1.0).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Dirichlet).unwrap();
    let c = 1e-4;
    let v = Potential::new(vec![c; 101]).unwrap();
    let l1 = dirichlet_path_lambda(101);
    let r = positivity_checks(&s, &op, &v, 2.0, 10.0, 100.0, None, &[0.05, 0.1, 0.5, 1.0]).unwrap();
    assert!((r.lambda1_m - l1).abs() < 1e-10);
    assert!((r.theta_plus - c / (1.5 * l1)).abs() < 1e-8 * r.theta_plus);
    assert!((r.theta_minus - c / (0.5 * l1)).abs() < 1e-8 * r.theta_minus);
    assert!(r.sweep.windows(2).all(|w| w[1].theta <= w[0].theta));
    let zero = positivity_checks(&s, &op, &Potential::new(vec![0.0; 101]).unwrap(), 2.0, 10.0, 1.0, None, &[1.0]).unwrap();
    assert!(zero.checks.iter().all(|c| c.pass));
    let free = DirichletOperator::new(&s, Boundary::Free).unwrap();
    assert!(positivity_checks(&s, &free, &v, 2.0, 10.0, 1.0, None, &[]).is_err());
}

#[test]
fn hardy_potential_size_in_three_dimensions() {
    let s = grid(3, 21, 1.0, Sigma2::Constant(1.0)).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Dirichlet).unwrap();
    let o = 10 * 441 + 10 * 21 + 10;
    let (p, big_r) = (1.4, 4.0);
    let rep = hardy_check(&s, &op, o, p, Some(big_r), &[]).unwrap();
    let coords = s.coords().unwrap();
    let rho = |x: usize| coords[x].iter().zip(&coords[o]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let mut best = 0.0f64;
    for x in 0..s.len() {
        let mut near: Vec<(f64, f64)> = (0..s.len())
            .map(|y| (s.distance(x, y), if y == o { 0.0 } else { rho(y).powf(-2.0 * p) }))
            .filter(|&(d, _)| d < big_r)
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut levels: Vec<f64> = near.iter().map(|e| e.0).collect();
        levels.dedup();
        for (i, &u) in levels.iter().enumerate() {
            let r = levels.get(i + 1).copied().unwrap_or(big_r).min(big_r);
            let inside: Vec<f64> = near.iter().filter(|e| e.0 <= u).map(|e| e.1).collect();
            let avg = inside.iter().sum::<f64>() / inside.len() as f64;
            best = best.max(r * r * avg.powf(1.0 / p));
        }
    }
    assert!(rep.k_p.as_ref().unwrap().value.is_finite());
    assert!((rep.k_p.as_ref().unwrap().value - best).abs() < 1e-12 * best, "{} vs {best}", rep.k_p.as_ref().unwrap().value);
    assert!(rep.c_h.is_finite() && rep.c_h > 0.0);
}

#[test]
fn hardy_potential_size_brute_force() {
    let s = grid(2, 9, 1.0, Sigma2::Constant(1.0)).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Dirichlet).unwrap();
    let o = 40;
    let rep = hardy_check(&s, &op, o, 2.0, Some(3.0), &[]).unwrap();
    assert!(rep.euclidean);
    let coords = s.coords().unwrap();
    let rho: Vec<f64> = coords
        .iter()
        .map(|c| c.iter().zip(&coords[o]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .collect();
    let v: Vec<f64> = rho.iter().map(|&r| if r > 0.0 { r.powi(-2) } else { 0.0 }).collect();
    let n = morrey_norm(&s, &Potential::new(v.clone()).unwrap(), 2.0, 3.0).unwrap().value;
    assert!((rep.k_p.as_ref().unwrap().value - n).abs() < 1e-12);
    let w: Vec<f64> = op.domain().iter().map(|&x| v[x] * s.measure()[x]).collect();
    let k = dense_stiffness(&s, op.domain());
    let kinv = k.try_inverse().unwrap();
    let mut m = DMatrix::zeros(w.len(), w.len());
    for a in 0..w.len() {
        for b in 0..w.len() {
            m[(a, b)] = w[a].sqrt() * kinv[(a, b)] * w[b].sqrt();
        }
    }
    let top = m.symmetric_eigenvalues().iter().fold(0.0f64, |a, &b| a.max(b));
    assert!((rep.c_h - top).abs() < 1e-8 * top);
    assert!(hardy_check(&s, &op, 0, 2.0, Some(3.0), &[]).is_err());
}

#[test]
fn tree_volume_exponent_grows() {
    let s = binary_tree(10).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Dirichlet).unwrap();
    let w: Vec<(f64, f64, f64)> = [1.0, 2.0, 4.0].iter().map(|&r| (r, 2.0 * r, 3.0)).collect();
    let rep = hardy_check(&s, &op, 0, 2.0, None, &w).unwrap();
    assert!(!rep.euclidean);
    let nus: Vec<f64> = rep.witnesses.iter().map(|w| w.effective_nu).collect();
    assert!(nus.windows(2).all(|w| w[1] > w[0]), "{nus:?}");
}

#[test]
fn product_with_line_identities() {
    let base = path(31, 1.0).unwrap();
    let v: Vec<f64> = (0..31).map(|x| if (10..14).contains(&x) { 0.8 } else { 0.05 }).collect();
    let rep = product_identity_check(&base, &Potential::new(v).unwrap(), 31, 1.0, 2.0, 4.0, &[0.5, 3.0]).unwrap();
    assert!(rep.checks.iter().all(|c| c.pass), "{:?}", rep.checks);
    assert!(rep.lambda1_gap < 1e-9);
}

#[test]
fn faber_krahn_stable_in_samples() {
    let s = path(401, 1.0).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Free).unwrap();
    let a = faber_krahn_fit(&s, &op, 40.0, None, 200, 5).unwrap();
    let b = faber_krahn_fit(&s, &op, 40.0, None, 800, 5).unwrap();
    assert!(a.b > 0.0 && b.b <= a.b + 1e-12);
    assert!(b.b / a.b > 0.8, "{} vs {}", a.b, b.b);
}

#[test]
fn faber_krahn_collapses_on_trees() {
    let s = binary_tree(10).unwrap();
    let op = DirichletOperator::new(&s, Boundary::Free).unwrap();
    let fit = |r: f64| faber_krahn_fit(&s, &op, r, Some(2.0), 300, 1).unwrap().b;
    let (a, b) = (fit(2.0), fit(8.0));
    assert!(b < 0.5 * a, "{a} vs {b}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lambda1_is_domain_antitone(seed in 0u64..1000, keep in 0.2f64..0.9) {
        let s = random_geometric(60, 4, seed).unwrap();
        let op = DirichletOperator::new(&s, Boundary::Free).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let big: Vec<usize> = (0..60).collect();
        let small: Vec<usize> = big.iter().copied().filter(|_| rng.gen_bool(keep)).collect();
        prop_assume!(!small.is_empty());
        prop_assert!(lambda1(&op, &small).unwrap() >= lambda1(&op, &big).unwrap() - 1e-10);
    }

    #[test]
    fn heat_is_positive_and_submarkov(t in 0.01f64..20.0) {
        let s = weighted_grid(2, 6);
        let op = DirichletOperator::new(&s, Boundary::Dirichlet).unwrap();
        let hk = heat_kernel(&op, &[t]).unwrap();
        for a in 0..op.len() {
            let row = hk.row(0, a);
            prop_assert!(row.iter().all(|&p| p >= -1e-14));
            let sum: f64 = row.iter().zip(op.mass()).map(|(p, m)| p * m).sum();
            prop_assert!(sum <= 1.0 + 1e-10);
        }
    }

    #[test]
    fn potential_lowers_lambda1(amp in 0.0f64..3.0, seed in 0u64..100) {
        let s = path(40, 1.0).unwrap();
        let op = DirichletOperator::new(&s, Boundary::Dirichlet).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..40).map(|_| amp * rng.gen::<f64>()).collect();
        let base = lambda1(&op, op.domain()).unwrap();
        let got = schrodinger_lambda1(&op, &Potential::new(v.clone()).unwrap()).unwrap();
        prop_assert!(got <= base + 1e-10);
        prop_assert!(got >= base - amp - 1e-10);
    }
}
