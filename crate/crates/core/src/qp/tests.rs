use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn settings() -> SolverSettings<f64> {
    SolverSettings::default()
}

fn scalar_qp(q: f64, c: f64) -> QpProblem<f64> {
    let mut p = QpProblem::new(1);
    p.q = Matrix::from_rows(&[vec![q]]);
    p.c = vec![c];
    p
}

/// Dense random convex QP: Q = GᵀG (possibly rank deficient), box bounds,
/// a few inequalities and one equality, with a known interior point so it
/// is always feasible.
fn random_qp(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> QpProblem<f64> {
    let mut p = QpProblem::new(n);
    let g: Vec<Vec<f64>> = (0..rank)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut q = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            q[(i, j)] = g.iter().map(|r| r[i] * r[j]).sum();
        }
    }
    p.q = q;
    p.c = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    for j in 0..n {
        p.set_bounds(j, -2.0, 2.0);
    }
    for i in 0..4 {
        let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rhs = dot(&row, &x0) + rng.random_range(0.0..0.5);
        p.add_ineq(row, rhs, format!("g{i}"));
    }
    let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rhs = dot(&row, &x0);
    p.add_eq(row, rhs, "e0");
    p
}

#[test]
fn unconstrained_stationary_point() {
    let sol = solve_qp(&scalar_qp(2.0, -2.0), &settings()).unwrap();
    assert!((sol.x[0] - 1.0).abs() < 1e-12);
    assert!((sol.objective + 1.0).abs() < 1e-12);
    assert_eq!(sol.status, QpStatus::Optimal);
}

#[test]
fn lower_bound_as_inequality_row() {
    let mut p = scalar_qp(2.0, 0.0);
    p.add_ineq(vec![-1.0], -3.0, "x>=3");
    let sol = solve_qp(&p, &settings()).unwrap();
    assert!((sol.x[0] - 3.0).abs() < 1e-12);
    assert!((sol.ineq_dual(&p, "x>=3").unwrap() - 6.0).abs() < 1e-10);
    assert!(check_kkt(&p, &sol, 1e-6).passed);
}

#[test]
fn lower_bound_as_variable_bound() {
    let mut p = scalar_qp(2.0, 0.0);
    p.set_bounds(0, 3.0, f64::INFINITY);
    let sol = solve_qp(&p, &settings()).unwrap();
    assert!((sol.x[0] - 3.0).abs() < 1e-12);
    assert!((sol.lower_duals[0] - 6.0).abs() < 1e-10);
}

#[test]
fn perturbed_dual_fails_kkt() {
    let mut p = scalar_qp(2.0, 0.0);
    p.add_ineq(vec![-1.0], -3.0, "x>=3");
    let mut sol = solve_qp(&p, &settings()).unwrap();
    sol.ineq_duals[0] += 0.1;
    let rep = check_kkt(&p, &sol, 1e-6);
    assert!(!rep.passed);
    assert!((rep.stationarity - 0.1).abs() < 1e-9);
}

#[test]
fn objective_matches_quadratic_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random_qp(&mut rng, 8, 8);
    let sol = solve_qp(&p, &settings()).unwrap();
    let direct = p.objective(&sol.x);
    assert!((sol.objective - direct).abs() <= 1e-8 * (1.0 + direct.abs()));
}

#[test]
fn not_psd_rejected() {
    assert_eq!(solve_qp(&scalar_qp(-1.0, 0.0), &settings()).unwrap_err(), QpError::NotPsd);
    let mut p = QpProblem::new(2);
    p.q = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
    assert_eq!(solve_qp(&p, &settings()).unwrap_err(), QpError::NotPsd);
}

#[test]
fn asymmetric_q_is_symmetrized() {
    let mut p = QpProblem::new(2);
    p.q = Matrix::from_rows(&[vec![2.0, 2.0], vec![0.0, 2.0]]);
    p.c = vec![-1.0, -1.0];
    let sol = solve_qp(&p, &settings()).unwrap();
    // (Q+Qᵀ)/2 = [[2,1],[1,2]] → x = (1/3, 1/3)
    assert!((sol.x[0] - 1.0 / 3.0).abs() < 1e-12);
    assert!((sol.x[1] - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn infeasible_reported() {
    let mut p = scalar_qp(1.0, 0.0);
    p.add_ineq(vec![1.0], 1.0, "x<=1");
    p.add_ineq(vec![-1.0], -2.0, "x>=2");
    assert!(matches!(solve_qp(&p, &settings()), Err(QpError::Infeasible { .. })));

    let mut p = QpProblem::<f64>::new(2);
    p.add_eq(vec![1.0, 1.0], 1.0, "a");
    p.add_eq(vec![1.0, 1.0], 2.0, "b");
    assert!(matches!(solve_qp(&p, &settings()), Err(QpError::Infeasible { .. })));
}

#[test]
fn unbounded_linear_direction() {
    let mut p = QpProblem::<f64>::new(2);
    p.q = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
    p.c = vec![0.0, -1.0];
    p.set_bounds(1, 0.0, f64::INFINITY);
    assert_eq!(solve_qp(&p, &settings()).unwrap_err(), QpError::Unbounded);
}

#[test]
fn linear_program_reaches_vertex() {
    // max x + y over the unit simplex corner: x + 2y ≤ 4, 3x + y ≤ 6, x,y ≥ 0
    let mut p = QpProblem::<f64>::new(2);
    p.c = vec![-1.0, -1.0];
    p.set_bounds(0, 0.0, f64::INFINITY);
    p.set_bounds(1, 0.0, f64::INFINITY);
    p.add_ineq(vec![1.0, 2.0], 4.0, "a");
    p.add_ineq(vec![3.0, 1.0], 6.0, "b");
    let sol = solve_qp(&p, &settings()).unwrap();
    assert!((sol.x[0] - 1.6).abs() < 1e-10);
    assert!((sol.x[1] - 1.2).abs() < 1e-10);
    assert!((sol.ineq_duals[0] - 0.4).abs() < 1e-10);
    assert!((sol.ineq_duals[1] - 0.2).abs() < 1e-10);
    assert!(check_kkt(&p, &sol, 1e-9).passed);
}

#[test]
fn degenerate_vertex_terminates() {
    // Three constraints through (1, 1) in the plane.
    let mut p = QpProblem::<f64>::new(2);
    p.c = vec![-1.0, -1.0];
    p.add_ineq(vec![1.0, 0.0], 1.0, "a");
    p.add_ineq(vec![0.0, 1.0], 1.0, "b");
    p.add_ineq(vec![1.0, 1.0], 2.0, "c");
    let sol = solve_qp(&p, &settings()).unwrap();
    assert!((sol.x[0] - 1.0).abs() < 1e-10 && (sol.x[1] - 1.0).abs() < 1e-10);
    assert!(check_kkt(&p, &sol, 1e-9).passed);
}

#[test]
fn random_instances_satisfy_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..100 {
        let rank = if k % 3 == 0 { 4 } else { 10 };
        let p = random_qp(&mut rng, 10, rank);
        let sol = solve_qp(&p, &settings()).unwrap();
        let rep = check_kkt(&p, &sol, 1e-7);
        assert!(rep.passed, "instance {k}: {rep:?}");
    }
}

#[test]
fn inactive_constraints_have_zero_dual() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = settings();
    for _ in 0..30 {
        let p = random_qp(&mut rng, 10, 10);
        let sol = solve_qp(&p, &s).unwrap();
        for (i, row) in p.a_ineq.iter().enumerate() {
            if p.b_ineq[i] - dot(row, &sol.x) > 1e-6 {
                assert!(sol.ineq_duals[i] <= s.comp_tol);
            }
        }
    }
}

#[test]
fn row_permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let p = random_qp(&mut rng, 10, 6);
        let base = solve_qp(&p, &settings()).unwrap();
        let mut perm = p.clone();
        perm.a_ineq.reverse();
        perm.b_ineq.reverse();
        perm.ineq_labels.reverse();
        let other = solve_qp(&perm, &settings()).unwrap();
        let scale = 1.0 + base.objective.abs();
        assert!((base.objective - other.objective).abs() <= 1e-8 * scale);
    }
}

#[test]
fn strictly_convex_unique_from_any_start() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let mut p = random_qp(&mut rng, 10, 10);
        for j in 0..10 {
            p.q[(j, j)] += 1e-3;
        }
        let cold = solve_qp(&p, &settings()).unwrap();
        let start: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        let warm = solve_qp_with(&p, &settings(), &WarmStart::from_point(start)).unwrap();
        for (a, b) in cold.x.iter().zip(&warm.x) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn working_set_warm_start_is_accepted() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let p = random_qp(&mut rng, 10, 10);
    let cold = solve_qp(&p, &settings()).unwrap();
    let hint = WarmStart {
        x: None,
        working_set: Some(cold.working_set.clone()),
    };
    let warm = solve_qp_with(&p, &settings(), &hint).unwrap();
    assert!(warm.warm_started);
    assert!(warm.iterations <= 1);
    assert!((cold.objective - warm.objective).abs() < 1e-10);
}

#[test]
fn bad_working_set_hint_falls_back() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let p = random_qp(&mut rng, 10, 10);
    let cold = solve_qp(&p, &settings()).unwrap();
    let hint = WarmStart {
        x: None,
        working_set: Some(WorkingSet {
            ineq: vec![0, 1, 2, 3],
            lower: (0..6).collect(),
            upper: vec![],
        }),
    };
    let sol = solve_qp_with(&p, &settings(), &hint).unwrap();
    assert!((cold.objective - sol.objective).abs() < 1e-9 * (1.0 + cold.objective.abs()));
    assert!(check_kkt(&p, &sol, 1e-7).passed);
}

#[test]
fn dual_equals_rhs_sensitivity() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    for _ in 0..40 {
        let p = random_qp(&mut rng, 10, 10);
        let sol = solve_qp(&p, &settings()).unwrap();
        for i in 0..p.b_ineq.len() {
            if sol.ineq_duals[i] < 1e-3 {
                continue;
            }
            let h = 1e-5;
            let mut up = p.clone();
            up.b_ineq[i] += h;
            let mut dn = p.clone();
            dn.b_ineq[i] -= h;
            let fu = solve_qp(&up, &settings()).unwrap().objective;
            let fd = solve_qp(&dn, &settings()).unwrap().objective;
            let fd_dual = -(fu - fd) / (2.0 * h);
            let rel = (fd_dual - sol.ineq_duals[i]).abs() / sol.ineq_duals[i];
            assert!(rel < 1e-3, "dual {} vs fd {}", sol.ineq_duals[i], fd_dual);
            checked += 1;
        }
    }
    assert!(checked > 10);
}

#[test]
fn single_precision_solve() {
    let mut p = QpProblem::<f32>::new(2);
    p.q = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]);
    p.c = vec![-2.0, -4.0];
    p.add_ineq(vec![1.0, 1.0], 1.0, "sum");
    let sol = solve_qp(&p, &SolverSettings::default()).unwrap();
    // min (x-1)² + (y-2)² on x + y ≤ 1 → (0, 1), λ = 2
    assert!((sol.x[0] - 0.0).abs() < 1e-5);
    assert!((sol.x[1] - 1.0).abs() < 1e-5);
    assert!((sol.ineq_duals[0] - 2.0).abs() < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_kkt_holds(seed in any::<u64>(), rank in 1usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_qp(&mut rng, 10, rank);
        let sol = solve_qp(&p, &settings()).unwrap();
        let rep = check_kkt(&p, &sol, 1e-7);
        prop_assert!(rep.passed, "{:?}", rep);
        prop_assert!(sol.ineq_duals.iter().all(|&l| l >= 0.0));
    }
}
