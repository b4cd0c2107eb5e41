use envmpc::solver::arrow::{ArrowQp, ArrowRow};
use envmpc::solver::solve_qp;
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

fn random_arrow(rng: &mut ChaCha8Rng) -> ArrowQp {
    let n = rng.gen_range(2..=4);
    let d = rng.gen_range(1..=2);
    let nr = rng.gen_range(1..=3);
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

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..25 {
        let aqp = random_arrow(&mut rng);
        if trial != 14 {
            continue;
        }
        let sol = aqp.solve(1e-9, 150).unwrap();
        let dense = solve_qp(&aqp.flatten().unwrap(), 1e-9).unwrap();
        println!(
            "trial {trial}: arrow {:?} iters={} obj={:.12} kkt=({:.2e},{:.2e},{:.2e}) | dense {:?} obj={:.12}",
            sol.status,
            sol.iterations,
            sol.objective,
            sol.kkt_residuals.primal,
            sol.kkt_residuals.dual,
            sol.kkt_residuals.complementarity,
            dense.status,
            dense.objective
        );
        println!(
            "n={} d={} nr={}",
            aqp.num_theta(),
            aqp.w_normals.ncols(),
            aqp.num_rows()
        );
    }
}
