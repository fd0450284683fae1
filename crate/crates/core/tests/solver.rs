mod common;

use approx::assert_relative_eq;
use coopalloc::model::received_power;
use coopalloc::solver::{feasibility_probe, kkt_residuals, solve_fixed_detailed, solve_relaxed};
use coopalloc::{solve_fixed, Association, FixedAssocProblem, Instance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assoc(inst: &Instance, serving: &[Vec<usize>]) -> Association {
    Association::from_serving(inst, serving).unwrap()
}

#[test]
fn single_link_forced() {
    let inst = Instance::new(vec![vec![1.0]], vec![1.0]).unwrap();
    let a = assoc(&inst, &[vec![0]]);
    let s = solve_fixed(&FixedAssocProblem::new(&inst, &a)).unwrap();
    assert!(s.feasible);
    assert_relative_eq!(s.y[0], 1.0, max_relative = 1e-12);
    assert_relative_eq!(s.x[0][0], 1.0, max_relative = 1e-9);
    assert_relative_eq!(s.z, 1.0, max_relative = 1e-9);
}

#[test]
fn identical_ues_split_evenly() {
    let (r, g) = (0.4, 2.0);
    let inst = Instance::new(vec![vec![g, g]], vec![r, r]).unwrap();
    let a = assoc(&inst, &[vec![0], vec![0]]);
    let s = solve_fixed(&FixedAssocProblem::new(&inst, &a)).unwrap();
    assert_relative_eq!(s.y[0], 0.5, epsilon = 1e-12);
    assert_relative_eq!(s.y[1], 0.5, epsilon = 1e-12);
    let expected = 2.0 * ((2.0 * r).exp2() - 1.0) * 0.5 / g;
    assert_relative_eq!(s.z, expected, max_relative = 1e-12);
}

/// Minimum of `cost(y0)` over a uniform grid, refined once around the best
/// point. `cost` returns `None` where no allocation meets the budgets.
fn grid_min(cost: impl Fn(f64) -> Option<f64>) -> (f64, f64) {
    let mut best = (f64::NAN, f64::INFINITY);
    let coarse = 100_000;
    for k in 1..coarse {
        let y = k as f64 / coarse as f64;
        if let Some(z) = cost(y) {
            if z < best.1 {
                best = (y, z);
            }
        }
    }
    let (c, h) = (best.0, 1.0 / coarse as f64);
    for k in -1000..=1000 {
        let y = c + h * k as f64 / 1000.0;
        if y > 0.0 && y < 1.0 {
            if let Some(z) = cost(y) {
                if z < best.1 {
                    best = (y, z);
                }
            }
        }
    }
    best
}

#[test]
fn single_bs_matches_grid_search() {
    let inst = Instance::new(vec![vec![4.0, 1.0]], vec![1.0, 1.0]).unwrap();
    let a = assoc(&inst, &[vec![0], vec![0]]);
    // The demand exceeds one budget, so compare the budget-free problem.
    let s = solve_fixed(&FixedAssocProblem::new(&inst, &a).with_relaxed([0])).unwrap();
    let cost = |y: f64| Some(received_power(1.0, y) / 4.0 + received_power(1.0, 1.0 - y));
    let (y0, z) = grid_min(cost);
    assert!((s.y[0] - y0).abs() < 1e-4, "y {} vs grid {y0}", s.y[0]);
    assert!(s.z <= z * (1.0 + 1e-6) && s.z >= z * (1.0 - 1e-6), "z {} vs grid {z}", s.z);
}

#[test]
fn two_bs_separate_clusters_match_grid_search() {
    let g = [[2.0, 0.3], [0.5, 1.5]];
    let r = [0.9, 0.7];
    let inst = Instance::new(vec![g[0].to_vec(), g[1].to_vec()], r.to_vec()).unwrap();
    let a = assoc(&inst, &[vec![0], vec![1]]);
    let s = solve_fixed(&FixedAssocProblem::new(&inst, &a)).unwrap();
    let cost = |y: f64| {
        let x0 = received_power(r[0], y) / g[0][0];
        let x1 = received_power(r[1], 1.0 - y) / g[1][1];
        (x0 <= 1.0 && x1 <= 1.0).then_some(x0 + x1)
    };
    let (y0, z) = grid_min(cost);
    assert!((s.y[0] - y0).abs() < 1e-4);
    assert_relative_eq!(s.z, z, max_relative = 1e-6);
}

#[test]
fn shared_ue_matches_grid_search_with_exact_split() {
    // UE 0 may draw power from both BSs; UE 1 is on BS 1 alone, so BS 1's
    // budget limits how much it can give UE 0. Demands push BS 0 to its cap.
    let g = [[1.0, 0.2], [0.8, 3.0]];
    let r = [1.2, 0.5];
    let inst = Instance::new(vec![g[0].to_vec(), g[1].to_vec()], r.to_vec()).unwrap();
    let a = assoc(&inst, &[vec![0, 1], vec![1]]);
    let s = solve_fixed(&FixedAssocProblem::new(&inst, &a)).unwrap();
    let cost = |y: f64| {
        let need = received_power(r[0], y);
        let x11 = received_power(r[1], 1.0 - y) / g[1][1];
        let room = [1.0, 1.0 - x11];
        if room[1] < 0.0 {
            return None;
        }
        // Fill the stronger link first.
        let order = if g[0][0] >= g[1][0] { [0, 1] } else { [1, 0] };
        let mut left = need;
        let mut power = x11;
        for i in order {
            let x = (left / g[i][0]).min(room[i]);
            power += x;
            left -= x * g[i][0];
        }
        (left <= 1e-12 * need).then_some(power)
    };
    let (y0, z) = grid_min(cost);
    assert!(s.feasible);
    assert!((s.y[0] - y0).abs() < 1e-4, "y {} vs grid {y0}", s.y[0]);
    assert_relative_eq!(s.z, z, max_relative = 1e-6);
    assert!(s.x[0][0] > 0.0 && s.x[1][0] > 0.0, "UE 0 should draw from both BSs");
}

#[test]
fn capped_budgets_floor_the_objective() {
    let inst = Instance::new(vec![vec![2.0, 1.0], vec![1.0, 2.0]], vec![0.3, 0.3]).unwrap();
    let a = assoc(&inst, &[vec![0], vec![1]]);
    let s = solve_fixed(&FixedAssocProblem::new(&inst, &a).with_capped([0])).unwrap();
    assert!(s.feasible);
    assert!(s.z >= 1.0 - 1e-9);
    assert_relative_eq!(s.bs_power(0), 1.0, max_relative = 1e-9);
}

#[test]
fn solves_are_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inst = common::random_instance(&mut rng, 3, 6, 5.0, 0.3, 0.9);
    let a = assoc(&inst, &[vec![0], vec![1], vec![2], vec![0, 1], vec![2], vec![1]]);
    let fp = FixedAssocProblem::new(&inst, &a);
    let (s1, s2) = (solve_fixed(&fp).unwrap(), solve_fixed(&fp).unwrap());
    assert_eq!(s1, s2);
}

#[test]
fn kkt_holds_on_random_associations() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    for _ in 0..200 {
        let m = rng.gen_range(2..=3);
        let n = rng.gen_range(2..=6);
        let inst = common::random_instance(&mut rng, m, n, 8.0, 0.1, 0.8);
        let mut serving: Vec<Vec<usize>> = (0..n).map(|_| vec![rng.gen_range(0..m)]).collect();
        if rng.gen_bool(0.5) {
            serving[0] = (0..m).collect::<Vec<_>>()[..2].to_vec();
        }
        let a = assoc(&inst, &serving);
        let fp = FixedAssocProblem::new(&inst, &a);
        let s = solve_fixed_detailed(&fp).unwrap_or_else(|e| panic!("{e}: {:?} {:?}", inst.gamma_matrix(), inst.rates()));
        let Some(d) = &s.duals else { continue };
        if !s.alloc.feasible {
            continue;
        }
        let k = kkt_residuals(&fp, &s.alloc, d).unwrap();
        assert!(k.max() < 1e-6, "{k:?}");
        assert!(s.alloc.satisfies_constraints(&inst, &Default::default()));
        checked += 1;
    }
    assert!(checked > 120, "only {checked} feasible cases");
}

#[test]
fn relaxed_point_below_budget_is_unconstrained_optimum() {
    let inst = Instance::new(vec![vec![5.0, 1.0, 2.0], vec![1.0, 4.0, 2.0]], vec![0.2, 0.2, 0.2]).unwrap();
    let a = assoc(&inst, &[vec![0], vec![1], vec![0]]);
    let fp = FixedAssocProblem::new(&inst, &a).with_relaxed([0]);
    let rel = solve_relaxed(&fp, (0, 1)).unwrap();
    assert!(rel.point.0 <= 1.0 && rel.point.1 <= 1.0);
    let free = solve_fixed(&FixedAssocProblem::new(&inst, &a).with_relaxed([0, 1])).unwrap();
    assert_relative_eq!(rel.solution.alloc.z, free.z, max_relative = 1e-9);
}

#[test]
fn relaxed_point_flags_overload() {
    let inst = Instance::new(vec![vec![1.0], vec![1.0]], vec![1.5]).unwrap();
    let a = assoc(&inst, &[vec![0]]);
    let rel = solve_relaxed(&FixedAssocProblem::new(&inst, &a).with_relaxed([0]), (0, 1)).unwrap();
    assert!(rel.point.0 > 1.0);
    assert_relative_eq!(rel.point.0, 1.5f64.exp2() - 1.0, max_relative = 1e-9);
}

#[test]
fn probe_tiny_and_huge_demands() {
    let inst = Instance::new(vec![vec![3.0, 1.0], vec![1.0, 3.0]], vec![1e-3, 1e-3]).unwrap();
    let a = assoc(&inst, &[vec![0], vec![1]]);
    let p = feasibility_probe(&inst, &a);
    assert!(p.feasible && p.min_max_power < 1e-2);

    let base = Instance::new(vec![vec![3.0, 1.0], vec![1.0, 3.0]], vec![0.5, 0.5]).unwrap();
    assert!(feasibility_probe(&base, &a).feasible);
    let heavy = base.with_scaled_rates(100.0).unwrap();
    assert!(!feasibility_probe(&heavy, &a).feasible);
    // Even the whole band for one UE cannot carry 50 bit/s/Hz on gamma = 3.
    assert!(received_power(50.0, 1.0) / 3.0 > 1.0);
}
