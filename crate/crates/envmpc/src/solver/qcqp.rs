//! Primal-dual interior point method for convex quadratically constrained
//! programs. This backs the min-max optimal control problem, whose epigraph
//! form has one convex quadratic constraint per uncertainty vertex.
//!
//! ```text
//!   min 1/2 x'P0x + q0'x
//!   s.t. 1/2 x'P_j x + g_j'x + r_j <= 0    (convex quadratic rows)
//!        G x <= h,  A x = b
//! ```
//!
//! The Newton systems have the same reduced KKT shape as the QP path with the
//! constraint Jacobian re-linearized at each iterate and the multiplier-
//! weighted constraint Hessians folded into the (1,1) block. Intended for
//! modest sizes (the vertex-enumeration guard upstream keeps instances small).

use nalgebra::{DMatrix, DVector};

use super::{KktResiduals, SolveStatus, SolverError};

#[derive(Debug, Clone)]
pub struct QuadConstraint {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl QuadConstraint {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x) + self.constant
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.hessian * x + &self.linear
    }
}

#[derive(Debug, Clone)]
pub struct QcqpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub quad: Vec<QuadConstraint>,
    pub ineq_normals: DMatrix<f64>,
    pub ineq_offsets: DVector<f64>,
    pub eq_normals: DMatrix<f64>,
    pub eq_offsets: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QcqpResult {
    pub status: SolveStatus,
    pub primal: DVector<f64>,
    pub objective: f64,
    pub kkt_residuals: KktResiduals,
    pub iterations: usize,
    pub quad_duals: DVector<f64>,
    pub ineq_duals: DVector<f64>,
    pub eq_duals: DVector<f64>,
}

struct State {
    x: DVector<f64>,
    sq: DVector<f64>,
    mu: DVector<f64>,
    sl: DVector<f64>,
    z: DVector<f64>,
    y: DVector<f64>,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

pub fn solve_qcqp(
    p: &QcqpProblem,
    tol: f64,
    max_iter: usize,
    warm_start: Option<&DVector<f64>>,
) -> Result<QcqpResult, SolverError> {
    let n = p.linear.len();
    let nq = p.quad.len();
    let ml = p.ineq_offsets.len();
    let me = p.eq_offsets.len();
    if p.hessian.nrows() != n || p.ineq_normals.ncols() != n || p.eq_normals.ncols() != n {
        return Err(SolverError::DimensionMismatch("qcqp data".into()));
    }
    for (j, qc) in p.quad.iter().enumerate() {
        if qc.hessian.nrows() != n || qc.linear.len() != n {
            return Err(SolverError::DimensionMismatch(format!("quad row {j}")));
        }
    }

    let x0 = warm_start.cloned().unwrap_or_else(|| DVector::zeros(n));
    let mut st = State {
        sq: DVector::from_iterator(nq, p.quad.iter().map(|qc| (-qc.value(&x0)).max(1.0))),
        sl: {
            let slack = &p.ineq_offsets - &p.ineq_normals * &x0;
            slack.map(|v| v.max(1.0))
        },
        mu: DVector::from_element(nq, 1.0),
        z: DVector::from_element(ml, 1.0),
        y: DVector::zeros(me),
        x: x0,
    };

    let denom_p = 1.0 + inf_norm(&p.ineq_offsets).max(inf_norm(&p.eq_offsets));
    let denom_d = 1.0 + inf_norm(&p.linear);
    let m_total = (nq + ml).max(1);
    let delta = 1e-9;

    let mut best: Option<(f64, State, usize)> = None;
    let mut iterations = 0;

    for iter in 0..max_iter {
        iterations = iter;
        // Residuals at the current point.
        let qvals: DVector<f64> = DVector::from_iterator(nq, p.quad.iter().map(|q| q.value(&st.x)));
        let mut jac = DMatrix::zeros(nq, n);
        for (j, qc) in p.quad.iter().enumerate() {
            jac.row_mut(j).copy_from(&qc.gradient(&st.x).transpose());
        }
        let r_dual = &p.hessian * &st.x
            + &p.linear
            + jac.tr_mul(&st.mu)
            + p.ineq_normals.tr_mul(&st.z)
            + p.eq_normals.tr_mul(&st.y);
        let r_quad = &qvals + &st.sq;
        let r_lin = &p.ineq_normals * &st.x + &st.sl - &p.ineq_offsets;
        let r_eq = &p.eq_normals * &st.x - &p.eq_offsets;
        let gap = st.sq.dot(&st.mu) + st.sl.dot(&st.z);
        let mu_bar = gap / m_total as f64;
        let obj = 0.5 * st.x.dot(&(&p.hessian * &st.x)) + p.linear.dot(&st.x);

        let pr = inf_norm(&r_quad).max(inf_norm(&r_lin)).max(inf_norm(&r_eq)) / denom_p;
        let dr = inf_norm(&r_dual) / denom_d;
        let gr = mu_bar / (1.0 + obj.abs());
        let merit = pr.max(dr).max(gr);
        if !merit.is_finite() {
            break;
        }
        if best.as_ref().map_or(true, |(bm, _, _)| merit < *bm) {
            best = Some((
                merit,
                State {
                    x: st.x.clone(),
                    sq: st.sq.clone(),
                    mu: st.mu.clone(),
                    sl: st.sl.clone(),
                    z: st.z.clone(),
                    y: st.y.clone(),
                },
                iter,
            ));
        }
        if pr <= tol && dr <= tol && gr <= tol {
            return Ok(finish(p, &st, tol, iter, SolveStatus::Optimal));
        }

        // Assemble the reduced KKT matrix.
        let dq: DVector<f64> = st.mu.component_div(&st.sq).map(|v| v.clamp(1e-14, 1e14));
        let dl: DVector<f64> = st.z.component_div(&st.sl).map(|v| v.clamp(1e-14, 1e14));
        let mut kkt = DMatrix::zeros(n + me, n + me);
        let mut h_block = p.hessian.clone();
        for (j, qc) in p.quad.iter().enumerate() {
            h_block += &qc.hessian * st.mu[j];
        }
        for j in 0..nq {
            let w = dq[j];
            let row = jac.row(j);
            for a in 0..n {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                for b in 0..n {
                    h_block[(a, b)] += w * ra * row[b];
                }
            }
        }
        for i in 0..ml {
            let w = dl[i];
            let row = p.ineq_normals.row(i);
            for a in 0..n {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                for b in 0..n {
                    h_block[(a, b)] += w * ra * row[b];
                }
            }
        }
        kkt.view_mut((0, 0), (n, n)).copy_from(&h_block);
        for i in 0..n {
            kkt[(i, i)] += delta;
        }
        if me > 0 {
            kkt.view_mut((0, n), (n, me))
                .copy_from(&p.eq_normals.transpose());
            kkt.view_mut((n, 0), (me, n)).copy_from(&p.eq_normals);
            for i in n..n + me {
                kkt[(i, i)] -= delta;
            }
        }
        let lu = kkt.lu();
        if lu.u().diagonal().iter().any(|v| v.abs() < 1e-300) {
            break;
        }

        let solve = |rx: &DVector<f64>, ry: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
            let mut rhs = DVector::zeros(n + me);
            rhs.rows_mut(0, n).copy_from(rx);
            if me > 0 {
                rhs.rows_mut(n, me).copy_from(ry);
            }
            let sol = lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(n + me));
            (sol.rows(0, n).into(), sol.rows(n, me).into())
        };

        // Predictor.
        let rcq_aff: DVector<f64> = st.sq.component_mul(&st.mu);
        let rcl_aff: DVector<f64> = st.sl.component_mul(&st.z);
        let wq: DVector<f64> = (st.mu.component_mul(&r_quad) - &rcq_aff).component_div(&st.sq);
        let wl: DVector<f64> = (st.z.component_mul(&r_lin) - &rcl_aff).component_div(&st.sl);
        let rx = -&r_dual - jac.tr_mul(&wq) - p.ineq_normals.tr_mul(&wl);
        let ry = -&r_eq;
        let (dx_a, _) = solve(&rx, &ry);
        let dsq_a = -&r_quad - &jac * &dx_a;
        let dmu_a = (-&rcq_aff - st.mu.component_mul(&dsq_a)).component_div(&st.sq);
        let dsl_a = -&r_lin - &p.ineq_normals * &dx_a;
        let dz_a = (-&rcl_aff - st.z.component_mul(&dsl_a)).component_div(&st.sl);

        let alpha_aff = step(&st.sq, &dsq_a)
            .min(step(&st.mu, &dmu_a))
            .min(step(&st.sl, &dsl_a))
            .min(step(&st.z, &dz_a))
            .min(1.0);
        let gap_aff = (&st.sq + &dsq_a * alpha_aff).dot(&(&st.mu + &dmu_a * alpha_aff))
            + (&st.sl + &dsl_a * alpha_aff).dot(&(&st.z + &dz_a * alpha_aff));
        let sigma = ((gap_aff / gap.max(1e-300)).clamp(0.0, 1.0)).powi(3).max(1e-10);

        // Corrector.
        let target = sigma * mu_bar;
        let rcq: DVector<f64> = st.sq.component_mul(&st.mu) + dsq_a.component_mul(&dmu_a)
            - DVector::from_element(nq, target);
        let rcl: DVector<f64> = st.sl.component_mul(&st.z) + dsl_a.component_mul(&dz_a)
            - DVector::from_element(ml, target);
        let wq: DVector<f64> = (st.mu.component_mul(&r_quad) - &rcq).component_div(&st.sq);
        let wl: DVector<f64> = (st.z.component_mul(&r_lin) - &rcl).component_div(&st.sl);
        let rx = -&r_dual - jac.tr_mul(&wq) - p.ineq_normals.tr_mul(&wl);
        let (dx, dy) = solve(&rx, &ry);
        let dsq = -&r_quad - &jac * &dx;
        let dmu = (-&rcq - st.mu.component_mul(&dsq)).component_div(&st.sq);
        let dsl = -&r_lin - &p.ineq_normals * &dx;
        let dz = (-&rcl - st.z.component_mul(&dsl)).component_div(&st.sl);

        let tau = if mu_bar < 1e-6 { 0.999 } else { 0.97 };
        let alpha = (tau * step(&st.sq, &dsq)
            .min(step(&st.mu, &dmu))
            .min(step(&st.sl, &dsl))
            .min(step(&st.z, &dz)))
        .min(1.0);
        if !alpha.is_finite() || alpha <= 1e-13 {
            break;
        }

        st.x += &dx * alpha;
        st.sq += &dsq * alpha;
        st.mu += &dmu * alpha;
        st.sl += &dsl * alpha;
        st.z += &dz * alpha;
        st.y += &dy * alpha;
        for v in st.sq.iter_mut().chain(st.mu.iter_mut()) {
            *v = v.max(1e-300);
        }
        for v in st.sl.iter_mut().chain(st.z.iter_mut()) {
            *v = v.max(1e-300);
        }
    }

    let (_, best_state, best_iter) = best.ok_or(SolverError::NonFiniteData(
        "qcqp produced no finite iterate".into(),
    ))?;
    let mut res = finish(p, &best_state, tol, best_iter.max(iterations), SolveStatus::Optimal);
    if res.kkt_residuals.max() > tol {
        res.status = SolveStatus::MaxIterations;
    }
    Ok(res)
}

fn step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut a = f64::INFINITY;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            a = a.min(-v[i] / dv[i]);
        }
    }
    a
}

fn finish(p: &QcqpProblem, st: &State, tol: f64, iter: usize, status: SolveStatus) -> QcqpResult {
    let x = &st.x;
    let objective = 0.5 * x.dot(&(&p.hessian * x)) + p.linear.dot(x);
    let mut primal = 0.0f64;
    for qc in &p.quad {
        primal = primal.max(qc.value(x));
    }
    let slack = &p.ineq_offsets - &p.ineq_normals * x;
    for v in slack.iter() {
        primal = primal.max(-v);
    }
    let re = &p.eq_normals * x - &p.eq_offsets;
    primal = primal.max(inf_norm(&re));
    let denom_p = 1.0 + inf_norm(&p.ineq_offsets).max(inf_norm(&p.eq_offsets));

    let mut jac_t_mu = DVector::zeros(x.len());
    for (j, qc) in p.quad.iter().enumerate() {
        jac_t_mu += qc.gradient(x) * st.mu[j];
    }
    let r_dual = &p.hessian * x
        + &p.linear
        + jac_t_mu
        + p.ineq_normals.tr_mul(&st.z)
        + p.eq_normals.tr_mul(&st.y);
    let denom_d = 1.0 + inf_norm(&p.linear);

    let mut comp = 0.0f64;
    for j in 0..st.mu.len() {
        comp = comp.max((st.mu[j] * (-p.quad[j].value(x))).abs());
    }
    for i in 0..st.z.len() {
        comp = comp.max((st.z[i] * slack[i]).abs());
    }
    let kkt = KktResiduals {
        primal: primal / denom_p,
        dual: inf_norm(&r_dual) / denom_d,
        complementarity: comp / (1.0 + objective.abs()),
    };
    let status = if status == SolveStatus::Optimal && kkt.max() > tol {
        SolveStatus::MaxIterations
    } else {
        status
    };
    QcqpResult {
        status,
        primal: x.clone(),
        objective,
        kkt_residuals: kkt,
        iterations: iter,
        quad_duals: st.mu.clone(),
        ineq_duals: st.z.clone(),
        eq_duals: st.y.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_lin(n: usize) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
        (
            DMatrix::zeros(0, n),
            DVector::zeros(0),
            DMatrix::zeros(0, n),
            DVector::zeros(0),
        )
    }

    #[test]
    fn epigraph_of_two_parabolas() {
        // min g  s.t. (x-1)^2 <= g, (x+1)^2 <= g  ->  x = 0, g = 1.
        let n = 2;
        let quad = vec![
            QuadConstraint {
                hessian: DMatrix::from_row_slice(n, n, &[2.0, 0.0, 0.0, 0.0]),
                linear: DVector::from_vec(vec![-2.0, -1.0]),
                constant: 1.0,
            },
            QuadConstraint {
                hessian: DMatrix::from_row_slice(n, n, &[2.0, 0.0, 0.0, 0.0]),
                linear: DVector::from_vec(vec![2.0, -1.0]),
                constant: 1.0,
            },
        ];
        let (gi, hi, ae, be) = no_lin(n);
        let p = QcqpProblem {
            hessian: DMatrix::zeros(n, n),
            linear: DVector::from_vec(vec![0.0, 1.0]),
            quad,
            ineq_normals: gi,
            ineq_offsets: hi,
            eq_normals: ae,
            eq_offsets: be,
        };
        let res = solve_qcqp(&p, 1e-9, 100, None).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!(res.primal[0].abs() < 1e-6, "x = {}", res.primal[0]);
        assert!((res.primal[1] - 1.0).abs() < 1e-6, "g = {}", res.primal[1]);
    }

    #[test]
    fn linear_objective_on_disc() {
        // min x + y  s.t. x^2 + y^2 <= 1.
        let n = 2;
        let quad = vec![QuadConstraint {
            hessian: DMatrix::from_row_slice(n, n, &[2.0, 0.0, 0.0, 2.0]),
            linear: DVector::zeros(n),
            constant: -1.0,
        }];
        let (gi, hi, ae, be) = no_lin(n);
        let p = QcqpProblem {
            hessian: DMatrix::zeros(n, n),
            linear: DVector::from_vec(vec![1.0, 1.0]),
            quad,
            ineq_normals: gi,
            ineq_offsets: hi,
            eq_normals: ae,
            eq_offsets: be,
        };
        let res = solve_qcqp(&p, 1e-9, 100, None).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        let r = 0.5f64.sqrt();
        assert!((res.primal[0] + r).abs() < 1e-6);
        assert!((res.primal[1] + r).abs() < 1e-6);
        assert!((res.objective + 2.0 * r).abs() < 1e-8);
    }

    #[test]
    fn equality_pins_variable() {
        // min g s.t. (x-1)^2 <= g, x = 0  ->  g = 1.
        let n = 2;
        let quad = vec![QuadConstraint {
            hessian: DMatrix::from_row_slice(n, n, &[2.0, 0.0, 0.0, 0.0]),
            linear: DVector::from_vec(vec![-2.0, -1.0]),
            constant: 1.0,
        }];
        let p = QcqpProblem {
            hessian: DMatrix::zeros(n, n),
            linear: DVector::from_vec(vec![0.0, 1.0]),
            quad,
            ineq_normals: DMatrix::zeros(0, n),
            ineq_offsets: DVector::zeros(0),
            eq_normals: DMatrix::from_row_slice(1, n, &[1.0, 0.0]),
            eq_offsets: DVector::from_vec(vec![0.0]),
        };
        let res = solve_qcqp(&p, 1e-9, 100, None).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert!(res.primal[0].abs() < 1e-7);
        assert!((res.primal[1] - 1.0).abs() < 1e-6);
    }
}
