use mmlab_core::space::{
    annuli_constant, binary_tree, connected_sum, doubling_profile, exp_doubling_constant, explicit, grid,
    path, product_space, random_explicit, random_geometric, separated_cover, vitali_subcover, Sigma2,
};
use mmlab_core::{Ball, MetricMeasureSpace};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn brute_ball_measure(s: &MetricMeasureSpace, x: usize, r: f64) -> f64 {
    (0..s.len()).filter(|&y| s.distance(x, y) < r).map(|y| s.measure()[y]).sum()
}

/// Every radius at which a ball around some center can change, with midpoints.
fn brute_radii(s: &MetricMeasureSpace, x: usize, cap: f64) -> Vec<f64> {
    let mut r: Vec<f64> = (0..s.len())
        .map(|y| s.distance(x, y))
        .filter(|&d| d > 0.0)
        .flat_map(|d| [d, d / 2.0])
        .filter(|&r| r <= cap)
        .collect();
    r.push(cap);
    r
}

fn brute_doubling(s: &MetricMeasureSpace, cap: f64) -> (f64, f64) {
    let mut a: f64 = 1.0;
    let mut low: f64 = 0.0;
    for x in 0..s.len() {
        for r in brute_radii(s, x, cap) {
            let small = brute_ball_measure(s, x, r);
            let big = brute_ball_measure(s, x, 2.0 * r);
            a = a.max(big / small);
            low = low.max(small / big);
        }
    }
    (a, low)
}

#[test]
fn path_three_points() {
    let s = path(3, 1.0).unwrap();
    assert_eq!(s.len(), 3);
    assert_eq!(s.distance(0, 2), 2.0);
    assert_eq!(s.measure(), &[1.0, 1.0, 1.0]);
}

#[test]
fn grid_ball_counts() {
    let s = grid(1, 101, 1.0, Sigma2::Constant(1.0)).unwrap();
    let b = s.ball(50, 10.5).unwrap();
    assert_eq!(b.members.len(), 21);
    assert_eq!(s.measure_of(&b.members), 21.0);
    let p5 = path(5, 1.0).unwrap();
    assert_eq!(p5.ball(2, 1.5).unwrap().members, vec![1, 2, 3]);
    assert_eq!(p5.ball(2, 0.5).unwrap().members, vec![2]);
    assert_eq!(p5.ball(0, 100.0).unwrap().members.len(), 5);
    assert!(p5.ball(7, 1.0).is_err());
    assert!(p5.ball(1, 0.0).is_err());
}

#[test]
fn grid_measure_and_conductance_scale_with_h() {
    let s = grid(2, 4, 0.5, Sigma2::Constant(3.0)).unwrap();
    assert!(s.measure().iter().all(|&m| m == 3.0 * 0.25));
    assert!(s.edges().iter().all(|e| e.w == 3.0));
    assert_eq!(s.distance(0, 15), 3.0);
    let f = Sigma2::Function(std::sync::Arc::new(|x: &[f64]| 1.0 + x[0]));
    let s = grid(1, 3, 1.0, f).unwrap();
    assert_eq!(s.measure(), &[1.0, 2.0, 3.0]);
    assert_eq!(s.edges()[0].w, 1.5);
    assert!(grid(1, 3, 0.0, Sigma2::Constant(1.0)).is_err());
}

#[test]
fn tree_balls_grow_exponentially() {
    let s = binary_tree(8).unwrap();
    for k in 0..=8 {
        assert_eq!(s.ball_measure(0, k as f64 + 0.5), (2f64).powi(k + 1) - 1.0);
    }
    assert_eq!(s.diameter(), 16.0);
}

#[test]
fn connected_sum_is_connected_with_neck() {
    let s = connected_sum(&[(2, 5), (2, 5)], 3).unwrap();
    assert_eq!(s.len(), 25 + 25 + 2);
    // far corner of copy 0 to origin corner of copy 1 through the neck
    assert_eq!(s.distance(24, 27), 3.0);
    assert_eq!(s.distance(0, 51), 8.0 + 3.0 + 8.0);
    assert!(!s.boundary()[24] && !s.boundary()[27]);
}

#[test]
fn explicit_rejects_bad_metrics() {
    let ok = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    assert!(explicit(ok.clone(), vec![1.0, 1.0]).is_ok());
    assert!(explicit(ok, vec![1.0, 0.0]).is_err());
    let asym = vec![vec![0.0, 1.0], vec![2.0, 0.0]];
    assert!(explicit(asym, vec![1.0, 1.0]).is_err());
    let tri = vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]];
    assert!(explicit(tri, vec![1.0; 3]).is_err());
    assert!(mmlab_core::space::graph(3, &[(0, 1, 1.0)], vec![1.0; 3]).is_err());
}

#[test]
fn json_round_trip_keeps_structure() {
    let g = grid(2, 5, 1.0, Sigma2::Constant(1.0)).unwrap();
    let back = MetricMeasureSpace::from_json(&g.to_json()).unwrap();
    assert_eq!(back.len(), 25);
    assert!(back.factors().is_some());
    let e = random_explicit(12, 4).unwrap();
    let back = MetricMeasureSpace::from_json(&e.to_json()).unwrap();
    for x in 0..12 {
        assert_eq!(back.distances_from(x), e.distances_from(x));
    }
    let t = random_geometric(30, 3, 9).unwrap();
    let back = MetricMeasureSpace::from_json(&t.to_json()).unwrap();
    assert_eq!(back.distances_from(7), t.distances_from(7));
}

#[test]
fn doubling_single_point() {
    let s = path(1, 1.0).unwrap();
    let p = doubling_profile(&s, 3.0).unwrap();
    assert_eq!(p.doubling, 1.0);
    assert_eq!(p.eta, 0.0);
}

#[test]
fn doubling_matches_brute_force() {
    let s = path(201, 1.0).unwrap();
    let p = doubling_profile(&s, 25.0).unwrap();
    let (a, low) = brute_doubling(&s, 25.0);
    assert_eq!(p.doubling, a);
    assert_eq!(p.reverse, low);
    assert!((2.0..=3.0).contains(&p.doubling));
    assert_eq!(p.eta, p.doubling.log2());
    assert_eq!(p.nu, -p.reverse.log2());
    for seed in 0..3 {
        let s = random_explicit(25, seed).unwrap();
        for cap in [1.5, 3.0, 10.0] {
            let p = doubling_profile(&s, cap).unwrap();
            let (a, low) = brute_doubling(&s, cap);
            assert!((p.doubling / a - 1.0).abs() < 1e-12 && (p.reverse / low - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn tree_doubling_grows_with_scale() {
    let s = binary_tree(10).unwrap();
    let a: Vec<f64> = [2.0, 4.0, 8.0].iter().map(|&r| doubling_profile(&s, r).unwrap().doubling).collect();
    assert!(a[0] < a[1] && a[1] < a[2], "{a:?}");
}

#[test]
fn annuli_constant_bounded_by_doubling_square() {
    let s = path(201, 1.0).unwrap();
    let c = annuli_constant(&s, 8.0).unwrap();
    let a = doubling_profile(&s, 8.0).unwrap().doubling;
    assert!(c.constant <= a * a, "{} vs {}", c.constant, a * a);
    // brute force over a fine radius grid containing every breakpoint
    let mut best: f64 = 1.0;
    for x in 0..s.len() {
        for j in 1..=(4 * 201) {
            let r = j as f64 / 4.0;
            best = best.max(brute_ball_measure(&s, x, r + 2.0) / brute_ball_measure(&s, x, r));
        }
    }
    assert_eq!(c.constant, best);
    let one = annuli_constant(&path(1, 1.0).unwrap(), 4.0).unwrap();
    assert_eq!(one.constant, 1.0);
}

#[test]
fn annuli_constant_stable_under_grid_growth() {
    let a = annuli_constant(&grid(2, 41, 1.0, Sigma2::Constant(1.0)).unwrap(), 6.0).unwrap();
    let b = annuli_constant(&grid(2, 81, 1.0, Sigma2::Constant(1.0)).unwrap(), 6.0).unwrap();
    assert!((a.constant / b.constant - 1.0).abs() < 0.1, "{} {}", a.constant, b.constant);
}

#[test]
fn exp_doubling_checks() {
    let s = path(401, 1.0).unwrap();
    let r = exp_doubling_constant(&s, 10.0).unwrap();
    assert!(r.check.pass, "{:?}", r.check);
    let big = exp_doubling_constant(&s, 500.0).unwrap();
    assert_eq!(big.empirical, 0.0);
    // brute force: r just above each integer distance
    let mut best: f64 = 0.0;
    for x in (0..401).step_by(7) {
        let base = brute_ball_measure(&s, x, 10.0);
        for d in 10..=400 {
            let v = brute_ball_measure(&s, x, d as f64 + 1e-9) / base;
            best = best.max(10.0 / d as f64 * v.ln());
        }
    }
    assert!(best <= r.empirical + 1e-12);
}

#[test]
fn exp_doubling_on_tree_reflects_exponential_growth() {
    let s = binary_tree(12).unwrap();
    let r = exp_doubling_constant(&s, 3.0).unwrap();
    // oracle: scan every node and every integer radius with exact counts
    let mut best: f64 = 0.0;
    for x in [0usize, 1, 3, 7, 15, 100, 2000, 8000] {
        let base = brute_ball_measure(&s, x, 3.0);
        for d in 3..=24 {
            let v = brute_ball_measure(&s, x, d as f64 + 0.5) / base;
            best = best.max(3.0 / d as f64 * v.ln());
        }
    }
    assert!(best <= r.empirical + 1e-12);
    let per_unit = 3.0 * std::f64::consts::LN_2;
    assert!(r.empirical > 0.5 * per_unit && r.empirical < 1.5 * per_unit, "{}", r.empirical);
}

#[test]
fn separated_cover_on_path() {
    let s = path(101, 1.0).unwrap();
    let ball = s.ball(50, 10.5).unwrap();
    let c = separated_cover(&s, &ball, 2.0).unwrap();
    assert!(c.centers.len() >= 10 && c.centers.len() <= 21);
    assert_eq!(c.centers, (40..=60).step_by(2).collect::<Vec<_>>());
    assert!(c.checks.iter().all(|k| k.pass), "{:?}", c.checks);
    let small = s.ball(50, 3.0).unwrap();
    let one = separated_cover(&s, &small, 3.0).unwrap();
    assert_eq!(one.centers.len(), 2);
    assert!(separated_cover(&s, &ball, 0.0).is_err());
    assert!(separated_cover(&s, &ball, 11.0).is_err());
}

#[test]
fn separated_cover_single_center_when_delta_exceeds_ball_diameter() {
    let s = grid(2, 9, 1.0, Sigma2::Constant(1.0)).unwrap();
    let ball = s.ball(40, 1.5).unwrap();
    let c = separated_cover(&s, &ball, 1.5).unwrap();
    assert!(c.centers.len() >= 1);
    let ball = s.ball(40, 1.0).unwrap();
    let c = separated_cover(&s, &ball, 1.0).unwrap();
    assert_eq!(c.centers, vec![40]);
}

#[test]
fn vitali_examples() {
    let s = path(101, 1.0).unwrap();
    let b = s.ball(10, 3.0).unwrap();
    let r = vitali_subcover(&s, std::slice::from_ref(&b), 3.5).unwrap();
    assert_eq!(r.selected, vec![0]);
    let b2 = s.ball(50, 3.0).unwrap();
    let r = vitali_subcover(&s, &[b.clone(), b2], 3.5).unwrap();
    assert_eq!(r.selected, vec![0, 1]);
    assert!(vitali_subcover(&s, &[b], 3.0).is_err());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let balls: Vec<Ball> = (0..20)
        .map(|_| s.ball(rng.gen_range(0..101), rng.gen_range(1.0..12.0)).unwrap())
        .collect();
    let r = vitali_subcover(&s, &balls, 3.5).unwrap();
    assert!(r.checks.iter().all(|c| c.pass));
}

#[test]
fn product_space_basics() {
    let one = path(1, 1.0).unwrap();
    let line = product_space(&one, 7, 1.0).unwrap();
    for s in 0..7 {
        for t in 0..7 {
            assert_eq!(line.distance(s, t), (s as f64 - t as f64).abs());
        }
    }
    let base = path(21, 1.0).unwrap();
    let p = product_space(&base, 21, 1.0).unwrap();
    assert_eq!(p.total_measure(), 21.0 * base.total_measure());
    assert!(product_space(&base, 1, 1.0).is_err());
    assert_eq!(p.distance(21 * 3 + 4, 21 * 6 + 8), 5.0);
}

/// Number of line points `t` with `|s - t| h < r`.
fn line_measure(n_line: usize, h: f64, s: usize, r: f64) -> f64 {
    (0..n_line).filter(|&t| (s.abs_diff(t) as f64) * h < r).count() as f64 * h
}

#[test]
fn product_volume_bracket_exact() {
    let base = path(21, 1.0).unwrap();
    let p = product_space(&base, 21, 1.0).unwrap();
    for s in 0..21 {
        for m in 0..21 {
            let x = s * 21 + m;
            for j in 1..=60 {
                let r = j as f64 * 0.5 + 0.25;
                let vol = p.ball_measure(x, r);
                let lower = line_measure(21, 1.0, s, r / 2.0) * base.ball_measure(m, r / 2.0);
                let upper = line_measure(21, 1.0, s, r) * base.ball_measure(m, r);
                assert!(lower <= vol && vol <= upper, "x={x} r={r}: {lower} {vol} {upper}");
            }
        }
    }
}

#[test]
fn product_doubling_against_base() {
    let base = path(21, 1.0).unwrap();
    let p = product_space(&base, 21, 1.0).unwrap();
    for r in [2.0, 4.0, 8.0] {
        let a = doubling_profile(&base, r).unwrap().doubling;
        let at = doubling_profile(&p, r).unwrap().doubling;
        assert!(at <= 4.0 * a * a, "R={r}: {at} vs {}", 4.0 * a * a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn doubling_monotone_in_scale(seed in 0u64..1000, r1 in 0.5f64..4.0, extra in 0.0f64..4.0) {
        let s = random_geometric(40, 3, seed).unwrap();
        let a = doubling_profile(&s, r1 * 0.1).unwrap();
        let b = doubling_profile(&s, (r1 + extra) * 0.1).unwrap();
        prop_assert!(a.doubling <= b.doubling);
        prop_assert!(a.doubling >= 1.0);
        prop_assert!(a.eta >= a.nu);
    }

    #[test]
    fn random_metrics_satisfy_axioms(seed in 0u64..1000) {
        let s = random_geometric(30, 2, seed).unwrap();
        for x in 0..30 {
            for y in 0..30 {
                let dxy = s.distance(x, y);
                prop_assert_eq!(dxy, s.distance(y, x));
                prop_assert_eq!(dxy == 0.0, x == y);
                for z in 0..30 {
                    prop_assert!(s.distance(x, z) <= dxy + s.distance(y, z) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn separated_cover_structure(seed in 0u64..1000, c in 0usize..40, r in 0.1f64..0.8, frac in 0.1f64..1.0) {
        let s = random_geometric(40, 3, seed).unwrap();
        let ball = s.ball(c, r).unwrap();
        let cover = separated_cover(&s, &ball, r * frac).unwrap();
        for k in &cover.checks {
            prop_assert!(k.pass, "{:?}", k);
        }
    }

    #[test]
    fn vitali_structure(seed in 0u64..1000, c in 3.01f64..6.0) {
        let s = random_explicit(30, seed).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let balls: Vec<Ball> = (0..12).map(|_| s.ball(rng.gen_range(0..30), rng.gen_range(0.5..4.0)).unwrap()).collect();
        let out = vitali_subcover(&s, &balls, c).unwrap();
        for k in &out.checks {
            prop_assert!(k.pass, "{:?}", k);
        }
    }
}
