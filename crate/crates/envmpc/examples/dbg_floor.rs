// Measures the accuracy floor of the structured solver over many random instances.
use envmpc::solver::arrow::{ArrowQp, ArrowRow};
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
    let n = rng.gen_range(2..=6);
    let d = rng.gen_range(1..=3);
    let nr = rng.gen_range(1..=4);
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
    let hessian = &raw * raw.transpose() + DMatrix::identity(n, n) * 0.3;
    let linear = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let rows = (0..nr)
        .map(|_| {
            let a = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let cols: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.7)).collect();
            let bt = DMatrix::from_fn(d, cols.len(), |_, _| rng.gen_range(-0.5..0.5));
            ArrowRow { a, rhs: rng.gen_range(0.3..1.5), b0: DVector::zeros(d), cols, bt }
        })
        .collect();
    let (pg, ph) = unit_box(n);
    ArrowQp {
        hessian, linear, obj_const: 0.0, w_normals: wn, w_offsets: wo, rows,
        plain_normals: pg, plain_offsets: ph * 3.0,
    }
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut fails = 0;
    for t in 0..2 {
        let aqp = random_arrow(&mut rng);
        let sol = aqp.solve(1e-8, 100).unwrap();
        let floor = sol.kkt_residuals.max();
        if floor > worst {
            worst = floor;
            println!("trial {t}: new worst floor {floor:.3e} status {:?}", sol.status);
        }
        if !matches!(sol.status, envmpc::solver::SolveStatus::Optimal) {
            fails += 1;
            println!("trial {t}: status {:?} floor {floor:.3e}", sol.status);
        }
    }
    println!("worst floor: {worst:.3e}, nonoptimal: {fails}/300");
}
