use mmlab_core::cubes::{build_hierarchy, dyadic_maximal, dyadic_weak_check, verify_hierarchy, CubeHierarchy};
use mmlab_core::space::{binary_tree, grid, path, random_explicit, random_geometric, Sigma2};
use mmlab_core::MetricMeasureSpace;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn all_pass(space: &MetricMeasureSpace, h: &CubeHierarchy) -> bool {
    verify_hierarchy(space, h).unwrap().iter().all(|c| c.pass)
}

/// Independent check of the three properties straight from the definitions.
fn oracle(space: &MetricMeasureSpace, h: &CubeHierarchy) -> bool {
    let n = space.len();
    for lvl in &h.levels {
        let mut seen = vec![0; n];
        for q in &lvl.cubes {
            for y in 0..n {
                let d = space.distance(q.center, y);
                let inside = q.members.contains(&y);
                if d < h.rho.powi(lvl.k as i32) && !inside {
                    return false;
                }
                if inside && d >= h.rho.powi(lvl.k as i32 + 1) {
                    return false;
                }
            }
            q.members.iter().for_each(|&y| seen[y] += 1);
        }
        if seen.iter().any(|&c| c != 1) {
            return false;
        }
    }
    for (i, lo) in h.levels.iter().enumerate() {
        for up in &h.levels[i + 1..] {
            for q in &lo.cubes {
                let hits = up.cubes.iter().filter(|u| q.members.iter().all(|y| u.members.contains(y))).count();
                if hits != 1 {
                    return false;
                }
            }
        }
    }
    true
}

#[test]
fn single_point_space() {
    let s = path(1, 1.0).unwrap();
    let h = build_hierarchy(&s, Some(0), 8.0).unwrap();
    assert!(h.levels.iter().all(|l| l.cubes.len() == 1 && l.cubes[0].members == vec![0]));
}

#[test]
fn path_65_levels() {
    let s = path(65, 1.0).unwrap();
    let h = build_hierarchy(&s, Some(0), 8.0).unwrap();
    let lengths: Vec<f64> = h.levels.iter().map(|l| h.length(l.k)).collect();
    assert_eq!(lengths, vec![1.0, 8.0, 64.0]);
    assert!(all_pass(&s, &h));
    assert!(oracle(&s, &h));
}

#[test]
fn grid_33_nesting() {
    let s = grid(2, 33, 1.0, Sigma2::Constant(1.0)).unwrap();
    let h = build_hierarchy(&s, Some(0), 8.0).unwrap();
    assert!(oracle(&s, &h));
    let l8 = h.levels.iter().find(|l| l.k == 1).unwrap();
    let l64 = h.levels.iter().find(|l| l.k == 2).unwrap();
    for q in &l8.cubes {
        let hits = l64.cubes.iter().filter(|u| q.members.iter().all(|y| u.members.contains(y))).count();
        assert_eq!(hits, 1);
    }
}

#[test]
fn invalid_base_level() {
    let s = path(10, 1.0).unwrap();
    assert!(build_hierarchy(&s, Some(1), 8.0).is_err());
    assert!(build_hierarchy(&s, Some(0), 1.0).is_err());
    let h = build_hierarchy(&s, None, 8.0).unwrap();
    assert_eq!(h.m, 0);
}

#[test]
fn mutated_hierarchies_fail() {
    let s = path(65, 1.0).unwrap();
    let h = build_hierarchy(&s, Some(0), 8.0).unwrap();

    // Move a point near the center of one level-1 cube into another.
    let mut moved = h.clone();
    let lvl = &mut moved.levels[1];
    let y = lvl.cubes[0].center + 1;
    lvl.cubes[0].members.retain(|&v| v != y);
    lvl.cubes[1].members.push(y);
    lvl.cubes[1].members.sort();
    let checks = verify_hierarchy(&s, &moved).unwrap();
    let by_name = |n: &str| checks.iter().find(|c| c.name == n).unwrap().pass;
    assert!(by_name("partition"));
    assert!(!by_name("nesting") || !by_name("sandwich"));

    // Swap the centers of two level-1 cubes.
    let mut swapped = h.clone();
    let (a, b) = (swapped.levels[1].cubes[0].center, swapped.levels[1].cubes[1].center);
    swapped.levels[1].cubes[0].center = b;
    swapped.levels[1].cubes[1].center = a;
    let checks = verify_hierarchy(&s, &swapped).unwrap();
    let sandwich = checks.iter().find(|c| c.name == "sandwich").unwrap();
    assert!(!sandwich.pass);
    assert!(sandwich.worst_case.get("cube").is_some());
}

#[test]
fn random_spaces_build_exactly() {
    for seed in 0..10 {
        let s = random_geometric(60 + 20 * seed as usize, 3, seed).unwrap();
        let h = build_hierarchy(&s, None, 8.0).unwrap();
        assert!(oracle(&s, &h), "seed {seed}");
        let e = random_explicit(40, seed).unwrap();
        let h = build_hierarchy(&e, None, 8.0).unwrap();
        assert!(oracle(&e, &h), "explicit seed {seed}");
    }
    let t = binary_tree(6).unwrap();
    assert!(oracle(&t, &build_hierarchy(&t, None, 8.0).unwrap()));
}

#[test]
fn hierarchy_json_round_trip() {
    let s = path(20, 1.0).unwrap();
    let h = build_hierarchy(&s, Some(0), 8.0).unwrap();
    let text = serde_json::to_string(&h).unwrap();
    let back: CubeHierarchy = serde_json::from_str(&text).unwrap();
    assert_eq!(back, h);
    let bare: serde_json::Value = serde_json::json!({
        "rho": 8.0, "m": 0,
        "levels": [{"k": 0, "cubes": [{"center": 0, "members": [0]}, {"center": 1, "members": [1]}]},
                   {"k": 1, "cubes": [{"center": 0, "members": [0, 1]}]}]
    });
    let h2: CubeHierarchy = serde_json::from_value(bare).unwrap();
    assert!(all_pass(&path(2, 1.0).unwrap(), &h2));
}

#[test]
fn dyadic_maximal_constant_and_point_mass() {
    let s = path(65, 1.0).unwrap();
    let h = build_hierarchy(&s, Some(0), 8.0).unwrap();
    let m = dyadic_maximal(&s, &h, &vec![-2.5; 65], f64::INFINITY).unwrap();
    assert!(m.iter().all(|&v| v == 2.5));
    let y = 30;
    let mut f = vec![0.0; 65];
    f[y] = 1.0;
    let m = dyadic_maximal(&s, &h, &f, f64::INFINITY).unwrap();
    for x in 0..65 {
        // brute force over the chain of cubes containing x
        let mut best: f64 = 0.0;
        for lvl in &h.levels {
            let q = lvl.cubes.iter().find(|q| q.members.contains(&x)).unwrap();
            if q.members.contains(&y) {
                best = best.max(1.0 / q.members.len() as f64);
            }
        }
        assert_eq!(m[x], best);
    }
}

#[test]
fn dyadic_weak_type_on_reference_spaces() {
    for s in [path(201, 1.0).unwrap(), grid(2, 41, 1.0, Sigma2::Constant(1.0)).unwrap()] {
        let h = build_hierarchy(&s, Some(0), 8.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let f: Vec<f64> = (0..s.len()).map(|_| rng.gen_range(-1.0..1.0) * rng.gen::<f64>().powi(4)).collect();
            let m = dyadic_maximal(&s, &h, &f, f64::INFINITY).unwrap();
            let c = dyadic_weak_check(&s, &m, &f);
            assert!(c.pass, "{:?}", c);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sublinear_and_monotone(seed in 0u64..500, lmax in 0.5f64..100.0) {
        let s = random_geometric(50, 3, seed).unwrap();
        let h = build_hierarchy(&s, None, 8.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fg: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
        let top = f64::INFINITY;
        let mf = dyadic_maximal(&s, &h, &f, top).unwrap();
        let mg = dyadic_maximal(&s, &h, &g, top).unwrap();
        let mfg = dyadic_maximal(&s, &h, &fg, top).unwrap();
        let small = dyadic_maximal(&s, &h, &f, lmax * h.length(h.m)).unwrap();
        for x in 0..50 {
            prop_assert!(mfg[x] <= mf[x] + mg[x] + 1e-12);
            prop_assert!(small[x] <= mf[x]);
        }
        prop_assert!(dyadic_weak_check(&s, &mf, &f).pass);
    }
}
