//! Solver correctness against independent combinatorial oracles.

use envmpc::solver::arrow::{ArrowQp, ArrowRow};
use envmpc::solver::{
    solve_lp, solve_qp, LinearProgram, QuadraticProgram, SolveStatus,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_box(dim: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut g = DMatrix::zeros(2 * dim, dim);
    let mut h = DVector::zeros(2 * dim);
    for j in 0..dim {
        g[(2 * j, j)] = 1.0;
        h[2 * j] = 1.0;
        g[(2 * j + 1, j)] = -1.0;
        h[2 * j + 1] = 1.0;
    }
    (g, h)
}

#[test]
fn lp_simple_bound() {
    // min z s.t. z >= 3.
    let lp = LinearProgram::new(
        DVector::from_vec(vec![1.0]),
        DMatrix::from_row_slice(1, 1, &[-1.0]),
        DVector::from_vec(vec![-3.0]),
    );
    let res = solve_lp(&lp, 1e-8).unwrap();
    assert_eq!(res.status, SolveStatus::Optimal);
    assert!((res.objective - 3.0).abs() < 1e-7);
}

#[test]
fn lp_box_matches_corner_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for dim in 1..=5 {
        for _ in 0..12 {
            let c = DVector::from_iterator(dim, (0..dim).map(|_| rng.gen_range(-2.0..2.0)));
            let (g, h) = unit_box(dim);
            let res = solve_lp(&LinearProgram::new(c.clone(), g, h), 1e-9).unwrap();
            assert_eq!(res.status, SolveStatus::Optimal);
            // Oracle: enumerate all 2^dim corners.
            let mut best = f64::INFINITY;
            for corner in 0..(1usize << dim) {
                let z = DVector::from_iterator(
                    dim,
                    (0..dim).map(|j| if corner >> j & 1 == 1 { 1.0 } else { -1.0 }),
                );
                best = best.min(c.dot(&z));
            }
            assert!(
                (res.objective - best).abs() < 1e-7,
                "dim {dim}: got {}, oracle {best}",
                res.objective
            );
        }
    }
}

#[test]
fn lp_infeasible_with_valid_certificate() {
    // z <= 0 and z >= 1.
    let lp = LinearProgram::new(
        DVector::from_vec(vec![0.0]),
        DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
        DVector::from_vec(vec![0.0, -1.0]),
    );
    let res = solve_lp(&lp, 1e-8).unwrap();
    assert_eq!(res.status, SolveStatus::Infeasible);
    let cert = res.farkas.expect("certificate");
    assert!(cert.ineq.min() >= -1e-9);
    let combo = lp.ineq_normals.tr_mul(&cert.ineq);
    assert!(combo.amax() < 1e-6);
    assert!(lp.ineq_offsets.dot(&cert.ineq) < 0.0);
}

#[test]
fn lp_unbounded_detected() {
    // min -z s.t. z >= 0 (no upper bound).
    let lp = LinearProgram::new(
        DVector::from_vec(vec![-1.0]),
        DMatrix::from_row_slice(1, 1, &[-1.0]),
        DVector::from_vec(vec![0.0]),
    );
    let res = solve_lp(&lp, 1e-8).unwrap();
    assert_eq!(res.status, SolveStatus::Unbounded);
}

#[test]
fn qp_unconstrained_projection() {
    // min ||z - a||^2 -> z = a.
    let a = DVector::from_vec(vec![1.5, -2.0, 0.25]);
    let qp = QuadraticProgram::new(
        DMatrix::identity(3, 3) * 2.0,
        -2.0 * a.clone(),
        DMatrix::zeros(0, 3),
        DVector::zeros(0),
        DMatrix::zeros(0, 3),
        DVector::zeros(0),
    )
    .unwrap();
    let res = solve_qp(&qp, 1e-9).unwrap();
    assert_eq!(res.status, SolveStatus::Optimal);
    assert!((&res.primal - &a).amax() < 1e-8);
}

#[test]
fn qp_scalar_bound() {
    // min z^2 s.t. z >= 1 -> z = 1, objective 1.
    let qp = QuadraticProgram::new(
        DMatrix::from_row_slice(1, 1, &[2.0]),
        DVector::zeros(1),
        DMatrix::from_row_slice(1, 1, &[-1.0]),
        DVector::from_vec(vec![-1.0]),
        DMatrix::zeros(0, 1),
        DVector::zeros(0),
    )
    .unwrap();
    let res = solve_qp(&qp, 1e-9).unwrap();
    assert_eq!(res.status, SolveStatus::Optimal);
    assert!((res.primal[0] - 1.0).abs() < 1e-8);
    assert!((res.objective - 1.0).abs() < 1e-8);
}

/// Brute force over all active-constraint subsets; exact for a positive
/// definite Hessian.
fn active_set_oracle(qp: &QuadraticProgram) -> f64 {
    let n = qp.linear.len();
    let m = qp.ineq_offsets.len();
    let mut best = f64::INFINITY;
    for subset in 0..(1usize << m) {
        let rows: Vec<usize> = (0..m).filter(|i| subset >> i & 1 == 1).collect();
        let na = rows.len();
        if na > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + na, n + na);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.hessian);
        let mut rhs = DVector::zeros(n + na);
        rhs.rows_mut(0, n).copy_from(&(-&qp.linear));
        for (a, &i) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + a, j)] = qp.ineq_normals[(i, j)];
                kkt[(j, n + a)] = qp.ineq_normals[(i, j)];
            }
            rhs[n + a] = qp.ineq_offsets[i];
        }
        let lu = kkt.full_piv_lu();
        let sol = match lu.solve(&rhs) {
            Some(s) => s,
            None => continue,
        };
        let z: DVector<f64> = sol.rows(0, n).into();
        let nu: DVector<f64> = sol.rows(n, na).into();
        let slack = &qp.ineq_offsets - &qp.ineq_normals * &z;
        if slack.iter().any(|s| *s < -1e-8) {
            continue;
        }
        if nu.iter().any(|v| *v < -1e-8) {
            continue;
        }
        let obj = 0.5 * z.dot(&(&qp.hessian * &z)) + qp.linear.dot(&z);
        best = best.min(obj);
    }
    best
}

#[test]
fn qp_random_matches_active_set_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for trial in 0..30 {
        let n = rng.gen_range(2..=6);
        let m = rng.gen_range(1..=8);
        let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let hessian = &raw * raw.transpose() + DMatrix::identity(n, n) * 0.5;
        let linear = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let g = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        // Offsets positive so the origin is strictly feasible.
        let h = DVector::from_fn(m, |_, _| rng.gen_range(0.2..1.5));
        let qp = QuadraticProgram::new(
            hessian,
            linear,
            g,
            h,
            DMatrix::zeros(0, n),
            DVector::zeros(0),
        )
        .unwrap();
        let res = solve_qp(&qp, 1e-9).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal, "trial {trial}");
        let oracle = active_set_oracle(&qp);
        assert!(
            (res.objective - oracle).abs() < 1e-7,
            "trial {trial}: ipm {} vs oracle {oracle}",
            res.objective
        );
    }
}

#[test]
fn determinism_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 4;
    let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let qp = QuadraticProgram::new(
        &raw * raw.transpose() + DMatrix::identity(n, n),
        DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
        DMatrix::from_fn(6, n, |_, _| rng.gen_range(-1.0..1.0)),
        DVector::from_fn(6, |_, _| rng.gen_range(0.5..2.0)),
        DMatrix::zeros(0, n),
        DVector::zeros(0),
    )
    .unwrap();
    let a = solve_qp(&qp, 1e-9).unwrap();
    let b = solve_qp(&qp, 1e-9).unwrap();
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    for i in 0..n {
        assert_eq!(a.primal[i].to_bits(), b.primal[i].to_bits());
    }
}

#[test]
fn duality_gap_at_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..10 {
        let n = 3;
        let m = 5;
        let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let hessian = &raw * raw.transpose() + DMatrix::identity(n, n) * 0.3;
        let qp = QuadraticProgram::new(
            hessian.clone(),
            DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
            DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0)),
            DVector::from_fn(m, |_, _| rng.gen_range(0.3..1.0)),
            DMatrix::zeros(0, n),
            DVector::zeros(0),
        )
        .unwrap();
        let tol = 1e-8;
        let res = solve_qp(&qp, tol).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        // Dual objective: -1/2 x'Px - h'z at a KKT point.
        let dual_obj = -0.5 * res.primal.dot(&(&qp.hessian * &res.primal))
            - qp.ineq_offsets.dot(&res.ineq_duals);
        let gap = (res.objective - dual_obj).abs();
        assert!(
            gap <= tol * (1.0 + res.objective.abs()) * 10.0,
            "gap {gap} vs objective {}",
            res.objective
        );
    }
}

#[test]
fn scaling_robustness() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 4;
    let m = 7;
    let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let hessian = &raw * raw.transpose() + DMatrix::identity(n, n) * 0.4;
    let linear = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let g = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = DVector::from_fn(m, |_, _| rng.gen_range(0.3..1.2));
    let base = QuadraticProgram::new(
        hessian.clone(),
        linear.clone(),
        g.clone(),
        h.clone(),
        DMatrix::zeros(0, n),
        DVector::zeros(0),
    )
    .unwrap();
    let scaled = QuadraticProgram::new(
        hessian,
        linear,
        g * 1e3,
        h * 1e3,
        DMatrix::zeros(0, n),
        DVector::zeros(0),
    )
    .unwrap();
    let a = solve_qp(&base, 1e-9).unwrap();
    let b = solve_qp(&scaled, 1e-9).unwrap();
    assert_eq!(a.status, SolveStatus::Optimal);
    assert_eq!(b.status, SolveStatus::Optimal);
    let rel = (a.objective - b.objective).abs() / (1.0 + a.objective.abs());
    assert!(rel <= 1e-6, "relative objective drift {rel}");
}

// ---------------------------------------------------------------------------
// Structured (arrow) path vs flattened dense path on random instances
// ---------------------------------------------------------------------------

fn random_arrow(rng: &mut ChaCha8Rng) -> ArrowQp {
    let n = rng.gen_range(2..=4);
    let d = rng.gen_range(1..=2);
    let nr = rng.gen_range(1..=3);
    // Uncertainty polytope: box with one extra cut.
    let mut wn = DMatrix::zeros(2 * d + 1, d);
    let mut wo = DVector::zeros(2 * d + 1);
    for j in 0..d {
        wn[(2 * j, j)] = 1.0;
        wo[2 * j] = rng.gen_range(0.5..1.5);
        wn[(2 * j + 1, j)] = -1.0;
        wo[2 * j + 1] = rng.gen_range(0.5..1.5);
    }
    for j in 0..d {
        wn[(2 * d, j)] = rng.gen_range(-1.0..1.0);
    }
    wo[2 * d] = rng.gen_range(0.4..1.0);

    let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let hessian = &raw * raw.transpose() + DMatrix::identity(n, n) * 0.6;
    let linear = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));

    let rows = (0..nr)
        .map(|_| {
            let a = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let cols: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.7)).collect();
            let bt = DMatrix::from_fn(d, cols.len(), |_, _| rng.gen_range(-0.5..0.5));
            ArrowRow {
                a,
                rhs: rng.gen_range(0.3..1.5),
                b0: DVector::zeros(d),
                cols,
                bt,
            }
        })
        .collect();

    let (pg, ph) = unit_box(n);
    ArrowQp {
        hessian,
        linear,
        obj_const: 0.0,
        w_normals: wn,
        w_offsets: wo,
        rows,
        plain_normals: pg,
        plain_offsets: ph * 3.0,
    }
}

#[test]
fn arrow_random_matches_flattened_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..40 {
        let aqp = random_arrow(&mut rng);
        let sol = aqp.solve(1e-8, 150).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "trial {trial}");
        let dense = solve_qp(&aqp.flatten().unwrap(), 1e-9).unwrap();
        assert_eq!(dense.status, SolveStatus::Optimal, "trial {trial}");
        let gap = (sol.objective - dense.objective).abs();
        assert!(
            gap < 1e-6 * (1.0 + dense.objective.abs()),
            "trial {trial}: arrow {} dense {}",
            sol.objective,
            dense.objective
        );
    }
}
