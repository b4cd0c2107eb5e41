//! Mehrotra predictor-corrector interior point method over an abstract KKT
//! backend, plus the dense backend, phase-I classification and ray checks.
//!
//! Canonical form handled by the driver:
//!
//! ```text
//!     min 1/2 x'Px + q'x   s.t.   G x + s = h,  s >= 0,   A x = b
//! ```
//!
//! Each Newton step reduces to the regularized KKT system
//!
//! ```text
//!     [ P + G'DG + dI   A' ] [dx]   [rx]          D = diag(z/s)
//!     [ A              -dI ] [dy] = [ry]
//! ```
//!
//! which a backend factors and solves (with iterative refinement against the
//! unregularized operator). The driver never terminates with a silently wrong
//! answer: a stalled solve is classified by phase-I / ray subproblems in the
//! calling wrapper.

use nalgebra::{DMatrix, DVector};

use super::equilibrate;
use super::{
    FarkasCertificate, Feasibility, KktResiduals, QuadraticProgram, SolveResult, SolveStatus,
    SolverError,
};

/// Static KKT regularization. Data reaches the backend equilibrated, so an
/// absolute value is adequate.
const KKT_DELTA: f64 = 1e-9;
/// Refinement rounds on every KKT solve.
const REFINE_ROUNDS: usize = 2;

pub(crate) trait IpmProblem {
    fn num_vars(&self) -> usize;
    fn num_ineq(&self) -> usize;
    fn num_eq(&self) -> usize;

    fn hess_mul(&self, x: &DVector<f64>) -> DVector<f64>;
    fn linear(&self) -> &DVector<f64>;
    fn ineq_mul(&self, x: &DVector<f64>) -> DVector<f64>;
    fn ineq_tr_mul(&self, z: &DVector<f64>) -> DVector<f64>;
    fn eq_mul(&self, x: &DVector<f64>) -> DVector<f64>;
    fn eq_tr_mul(&self, y: &DVector<f64>) -> DVector<f64>;
    fn ineq_rhs(&self) -> &DVector<f64>;
    fn eq_rhs(&self) -> &DVector<f64>;

    /// Factor the reduced KKT matrix for the weight vector `d = z./s`.
    fn factor(&mut self, d: &DVector<f64>, delta: f64) -> Result<(), ()>;
    /// Solve the factored KKT system.
    fn kkt_solve(&self, rx: &DVector<f64>, ry: &DVector<f64>) -> (DVector<f64>, DVector<f64>);
}

#[derive(Debug, Clone)]
pub(crate) struct IpmPoint {
    pub x: DVector<f64>,
    pub s: DVector<f64>,
    pub z: DVector<f64>,
    pub y: DVector<f64>,
    pub iterations: usize,
}

pub(crate) enum IpmOutcome {
    Converged(IpmPoint),
    Stalled(IpmPoint),
}

pub(crate) struct IpmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub start: Option<IpmPoint>,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

/// Run the predictor-corrector loop. `prob` data should be reasonably scaled.
pub(crate) fn ipm_drive<P: IpmProblem>(prob: &mut P, opts: &IpmOptions) -> IpmOutcome {
    let n = prob.num_vars();
    let m = prob.num_ineq();
    let me = prob.num_eq();
    let q = prob.linear().clone();
    let h = prob.ineq_rhs().clone();
    let b = prob.eq_rhs().clone();

    // Equality-constrained or unconstrained QP: one Newton solve.
    if m == 0 {
        let d = DVector::zeros(0);
        if prob.factor(&d, KKT_DELTA).is_err() {
            return IpmOutcome::Stalled(IpmPoint {
                x: DVector::zeros(n),
                s: DVector::zeros(0),
                z: DVector::zeros(0),
                y: DVector::zeros(me),
                iterations: 0,
            });
        }
        let (x, y) = prob.kkt_solve(&(-&q), &b);
        let pt = IpmPoint {
            x,
            s: DVector::zeros(0),
            z: DVector::zeros(0),
            y,
            iterations: 1,
        };
        let rd = &prob.hess_mul(&pt.x) + &q + prob.eq_tr_mul(&pt.y);
        let re = prob.eq_mul(&pt.x) - &b;
        let ok = inf_norm(&rd) <= opts.tol * (1.0 + inf_norm(&q))
            && inf_norm(&re) <= opts.tol * (1.0 + inf_norm(&b));
        return if ok {
            IpmOutcome::Converged(pt)
        } else {
            IpmOutcome::Stalled(pt)
        };
    }

    // Initial point.
    let (mut x, mut s, mut z, mut y) = match &opts.start {
        Some(p) => (p.x.clone(), p.s.clone(), p.z.clone(), p.y.clone()),
        None => {
            let d = DVector::from_element(m, 1.0);
            if prob.factor(&d, 1e-6).is_err() {
                return IpmOutcome::Stalled(IpmPoint {
                    x: DVector::zeros(n),
                    s: DVector::from_element(m, 1.0),
                    z: DVector::from_element(m, 1.0),
                    y: DVector::zeros(me),
                    iterations: 0,
                });
            }
            let (x0, y0) = prob.kkt_solve(&(-&q), &b);
            let s_hat = &h - prob.ineq_mul(&x0);
            let shift = (-1.5 * s_hat.min()).max(0.0) + 0.1;
            let s1 = s_hat.add_scalar(shift);
            let z1 = DVector::from_element(m, 1.0);
            let mean = s1.dot(&z1) / m as f64;
            (
                x0,
                s1.add_scalar(0.5 * mean.min(1e3)),
                z1.add_scalar(0.5 * mean.min(1e3).max(0.0)),
                y0,
            )
        }
    };

    let denom_p = 1.0 + inf_norm(&h).max(inf_norm(&b));
    let denom_d = 1.0 + inf_norm(&q);
    let mut best: Option<(f64, IpmPoint)> = None;
    let mut since_best = 0usize;

    for iter in 0..opts.max_iter {
        let px = prob.hess_mul(&x);
        let rd = &px + &q + prob.ineq_tr_mul(&z) + prob.eq_tr_mul(&y);
        let rp = prob.ineq_mul(&x) + &s - &h;
        let re = prob.eq_mul(&x) - &b;
        let gap = s.dot(&z);
        let mu = gap / m as f64;
        let comp_max = s
            .iter()
            .zip(z.iter())
            .fold(0.0f64, |a, (si, zi)| a.max((si * zi).abs()));
        let obj = 0.5 * x.dot(&px) + q.dot(&x);

        let pr = inf_norm(&rp).max(inf_norm(&re)) / denom_p;
        let dr = inf_norm(&rd) / denom_d;
        let gr = comp_max / (1.0 + obj.abs());
        let merit = pr.max(dr).max(gr);

        if std::env::var("ENVMPC_IPM_TRACE").is_ok() {
            eprintln!(
                "iter {iter}: pr={pr:.3e} dr={dr:.3e} gr={gr:.3e} mu={mu:.3e} obj={obj:.6e}"
            );
        }
        if !merit.is_finite() {
            break;
        }
        let current = IpmPoint {
            x: x.clone(),
            s: s.clone(),
            z: z.clone(),
            y: y.clone(),
            iterations: iter,
        };
        if best.as_ref().map_or(true, |(bm, _)| merit < *bm) {
            best = Some((merit, current.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if pr <= opts.tol && dr <= opts.tol && gr <= opts.tol {
            return IpmOutcome::Converged(current);
        }
        // Divergence and stagnation guards: at the numerical floor further
        // steps only corrupt the iterate. The window is wide enough to ride
        // out a bad direction followed by recovery.
        if inf_norm(&x) > 1e14 || mu > 1e16 || since_best >= 8 {
            break;
        }

        let d: DVector<f64> = z.component_div(&s).map(|v| v.clamp(1e-14, 1e14));
        if prob.factor(&d, KKT_DELTA).is_err() {
            if std::env::var("ENVMPC_IPM_TRACE").is_ok() {
                eprintln!("iter {iter}: factorization failed, stopping");
            }
            break;
        }

        // Predictor (affine scaling direction).
        let rc_aff: DVector<f64> = s.component_mul(&z);
        let w1: DVector<f64> = (z.component_mul(&rp) - &rc_aff).component_div(&s);
        let rx = -&rd - prob.ineq_tr_mul(&w1);
        let ry = -&re;
        let (dx_a, _) = prob.kkt_solve(&rx, &ry);
        let ds_a = -&rp - prob.ineq_mul(&dx_a);
        let dz_a = (-&rc_aff - z.component_mul(&ds_a)).component_div(&s);

        let alpha_aff = step_to_boundary(&s, &ds_a)
            .min(step_to_boundary(&z, &dz_a))
            .min(1.0);
        let mu_aff = (&s + &ds_a * alpha_aff).dot(&(&z + &dz_a * alpha_aff)) / m as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3).max(1e-10);

        // Corrector with Mehrotra second-order term.
        let rc: DVector<f64> = s.component_mul(&z) + ds_a.component_mul(&dz_a)
            - DVector::from_element(m, sigma * mu);
        let w2: DVector<f64> = (z.component_mul(&rp) - &rc).component_div(&s);
        let rx = -&rd - prob.ineq_tr_mul(&w2);
        let (mut dx, mut dy) = prob.kkt_solve(&rx, &ry);
        let mut ds = -&rp - prob.ineq_mul(&dx);
        let mut dz = (-&rc - z.component_mul(&ds)).component_div(&s);

        let tau = if mu < 1e-6 { 0.999 } else { 0.99 };
        let mut alpha = (tau * step_to_boundary(&s, &ds).min(step_to_boundary(&z, &dz))).min(1.0);
        if !alpha.is_finite() || alpha <= 1e-13 {
            // Fall back to a pure centering step before giving up.
            let rc: DVector<f64> =
                s.component_mul(&z) - DVector::from_element(m, mu);
            let w3: DVector<f64> = (z.component_mul(&rp) - &rc).component_div(&s);
            let rx = -&rd - prob.ineq_tr_mul(&w3);
            let (cx, cy) = prob.kkt_solve(&rx, &ry);
            let cs = -&rp - prob.ineq_mul(&cx);
            let cz = (-&rc - z.component_mul(&cs)).component_div(&s);
            let ca = (0.9 * step_to_boundary(&s, &cs).min(step_to_boundary(&z, &cz))).min(1.0);
            if !ca.is_finite() || ca <= 1e-13 {
                if std::env::var("ENVMPC_IPM_TRACE").is_ok() {
                    eprintln!("iter {iter}: step collapsed (alpha={ca:.2e}), stopping");
                }
                break;
            }
            dx = cx;
            dy = cy;
            ds = cs;
            dz = cz;
            alpha = ca;
        }

        x += &dx * alpha;
        s += &ds * alpha;
        z += &dz * alpha;
        y += &dy * alpha;
        for v in s.iter_mut() {
            *v = v.max(1e-300);
        }
        for v in z.iter_mut() {
            *v = v.max(1e-300);
        }
    }

    IpmOutcome::Stalled(best.map(|(_, p)| p).unwrap_or(IpmPoint {
        x,
        s,
        z,
        y,
        iterations: opts.max_iter,
    }))
}

fn step_to_boundary(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut alpha = f64::INFINITY;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            alpha = alpha.min(-v[i] / dv[i]);
        }
    }
    alpha
}

// ---------------------------------------------------------------------------
// Dense backend
// ---------------------------------------------------------------------------

pub(crate) struct DenseBackend {
    qp: QuadraticProgram,
    kkt_true: DMatrix<f64>,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl DenseBackend {
    pub fn new(qp: QuadraticProgram) -> Self {
        Self {
            qp,
            kkt_true: DMatrix::zeros(0, 0),
            lu: None,
        }
    }
}

impl IpmProblem for DenseBackend {
    fn num_vars(&self) -> usize {
        self.qp.linear.len()
    }
    fn num_ineq(&self) -> usize {
        self.qp.ineq_offsets.len()
    }
    fn num_eq(&self) -> usize {
        self.qp.eq_offsets.len()
    }
    fn hess_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.qp.hessian * x
    }
    fn linear(&self) -> &DVector<f64> {
        &self.qp.linear
    }
    fn ineq_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.qp.ineq_normals * x
    }
    fn ineq_tr_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        self.qp.ineq_normals.tr_mul(z)
    }
    fn eq_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.qp.eq_normals * x
    }
    fn eq_tr_mul(&self, y: &DVector<f64>) -> DVector<f64> {
        self.qp.eq_normals.tr_mul(y)
    }
    fn ineq_rhs(&self) -> &DVector<f64> {
        &self.qp.ineq_offsets
    }
    fn eq_rhs(&self) -> &DVector<f64> {
        &self.qp.eq_offsets
    }

    fn factor(&mut self, d: &DVector<f64>, delta: f64) -> Result<(), ()> {
        let n = self.num_vars();
        let me = self.num_eq();
        let g = &self.qp.ineq_normals;
        let mut kkt = DMatrix::zeros(n + me, n + me);
        // P + G' D G block.
        kkt.view_mut((0, 0), (n, n)).copy_from(&self.qp.hessian);
        for r in 0..d.len() {
            let w = d[r];
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let gi = g[(r, i)];
                if gi == 0.0 {
                    continue;
                }
                let wgi = w * gi;
                for j in 0..n {
                    kkt[(i, j)] += wgi * g[(r, j)];
                }
            }
        }
        if me > 0 {
            kkt.view_mut((0, n), (n, me))
                .copy_from(&self.qp.eq_normals.transpose());
            kkt.view_mut((n, 0), (me, n)).copy_from(&self.qp.eq_normals);
        }
        self.kkt_true = kkt.clone();
        for boost in [1.0, 1e3, 1e6] {
            let mut reg = kkt.clone();
            for i in 0..n {
                reg[(i, i)] += delta * boost;
            }
            for i in n..n + me {
                reg[(i, i)] -= delta * boost;
            }
            let lu = reg.lu();
            if lu.u().diagonal().iter().all(|p| p.abs() >= 1e-300) {
                self.lu = Some(lu);
                return Ok(());
            }
        }
        Err(())
    }

    fn kkt_solve(&self, rx: &DVector<f64>, ry: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.num_vars();
        let me = self.num_eq();
        let lu = self.lu.as_ref().expect("factor before solve");
        let mut rhs = DVector::zeros(n + me);
        rhs.rows_mut(0, n).copy_from(rx);
        if me > 0 {
            rhs.rows_mut(n, me).copy_from(ry);
        }
        let mut sol = lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(n + me));
        let mut resid = &rhs - &self.kkt_true * &sol;
        let mut res_norm = inf_norm(&resid);
        let scale = 1.0 + inf_norm(&rhs);
        for _ in 0..REFINE_ROUNDS + 2 {
            if res_norm < 1e-16 * scale {
                break;
            }
            let corr = match lu.solve(&resid) {
                Some(c) => c,
                None => break,
            };
            let cand = &sol + &corr;
            let cand_resid = &rhs - &self.kkt_true * &cand;
            let cand_norm = inf_norm(&cand_resid);
            if cand_norm >= res_norm {
                break;
            }
            sol = cand;
            resid = cand_resid;
            res_norm = cand_norm;
        }
        (sol.rows(0, n).into(), sol.rows(n, me).into())
    }
}

// ---------------------------------------------------------------------------
// Dense entry points: solve with equilibration + stall classification
// ---------------------------------------------------------------------------

pub(crate) fn solve_dense(
    qp: &QuadraticProgram,
    tol: f64,
    max_iter: usize,
    lp_mode: bool,
) -> Result<SolveResult, SolverError> {
    let mut scaled = qp.clone();
    let scaling = equilibrate::ruiz(&mut scaled, 6);
    let mut backend = DenseBackend::new(scaled);
    let opts = IpmOptions {
        tol: (tol * 1e-1).max(1e-12),
        max_iter,
        start: None,
    };
    let outcome = ipm_drive(&mut backend, &opts);

    match outcome {
        IpmOutcome::Converged(p) => Ok(finish_dense(qp, &scaling, &p, tol, SolveStatus::Optimal)),
        IpmOutcome::Stalled(p) => {
            // Exact classification: infeasible, unbounded, or a genuine stall.
            let (g_all, h_all) = combined_ineq(qp);
            match phase1_dense(&g_all, &h_all, tol)? {
                Feasibility::Infeasible(cert) => {
                    let (c_in, c_eq) = split_cert(qp, cert);
                    let mut res = finish_dense(qp, &scaling, &p, tol, SolveStatus::Infeasible);
                    res.farkas = Some(FarkasCertificate { ineq: c_in, eq: c_eq });
                    Ok(res)
                }
                Feasibility::Feasible(_) => {
                    if lp_mode {
                        if let Some(ray) = improving_ray(qp, tol)? {
                            let mut res =
                                finish_dense(qp, &scaling, &p, tol, SolveStatus::Unbounded);
                            res.primal = ray;
                            return Ok(res);
                        }
                    }
                    // The best iterate may still satisfy the contract; only
                    // then is it reported optimal.
                    Ok(finish_dense(qp, &scaling, &p, tol, SolveStatus::Optimal))
                }
            }
        }
    }
}

/// Stack equalities into the inequality system (each as two rows) for
/// feasibility classification.
fn combined_ineq(qp: &QuadraticProgram) -> (DMatrix<f64>, DVector<f64>) {
    let m_in = qp.ineq_offsets.len();
    let m_eq = qp.eq_offsets.len();
    let n = qp.linear.len();
    let mut g = DMatrix::zeros(m_in + 2 * m_eq, n);
    let mut h = DVector::zeros(m_in + 2 * m_eq);
    g.view_mut((0, 0), (m_in, n)).copy_from(&qp.ineq_normals);
    h.rows_mut(0, m_in).copy_from(&qp.ineq_offsets);
    if m_eq > 0 {
        g.view_mut((m_in, 0), (m_eq, n)).copy_from(&qp.eq_normals);
        h.rows_mut(m_in, m_eq).copy_from(&qp.eq_offsets);
        g.view_mut((m_in + m_eq, 0), (m_eq, n))
            .copy_from(&(-&qp.eq_normals));
        h.rows_mut(m_in + m_eq, m_eq).copy_from(&(-&qp.eq_offsets));
    }
    (g, h)
}

fn split_cert(qp: &QuadraticProgram, cert: FarkasCertificate) -> (DVector<f64>, DVector<f64>) {
    let m_in = qp.ineq_offsets.len();
    let m_eq = qp.eq_offsets.len();
    let ineq = cert.ineq.rows(0, m_in).into_owned();
    let eq = if m_eq > 0 {
        cert.ineq.rows(m_in, m_eq).into_owned() - cert.ineq.rows(m_in + m_eq, m_eq).into_owned()
    } else {
        DVector::zeros(0)
    };
    (ineq, eq)
}

fn finish_dense(
    qp: &QuadraticProgram,
    scaling: &equilibrate::Scaling,
    p: &IpmPoint,
    tol: f64,
    status: SolveStatus,
) -> SolveResult {
    let x = scaling.unscale_primal(&p.x);
    let z = if p.z.len() == qp.ineq_offsets.len() {
        scaling.unscale_ineq_duals(&p.z)
    } else {
        DVector::zeros(qp.ineq_offsets.len())
    };
    let y = if p.y.len() == qp.eq_offsets.len() {
        scaling.unscale_eq_duals(&p.y)
    } else {
        DVector::zeros(qp.eq_offsets.len())
    };
    let objective = 0.5 * x.dot(&(&qp.hessian * &x)) + qp.linear.dot(&x);
    let kkt_residuals = residuals_original(qp, &x, &z, &y);
    let status = if status == SolveStatus::Optimal && kkt_residuals.max() > tol {
        SolveStatus::MaxIterations
    } else {
        status
    };
    SolveResult {
        status,
        primal: x,
        ineq_duals: z,
        eq_duals: y,
        objective,
        kkt_residuals,
        iterations: p.iterations,
        farkas: None,
    }
}

/// Relative KKT residuals in the original scaling.
fn residuals_original(
    qp: &QuadraticProgram,
    x: &DVector<f64>,
    z: &DVector<f64>,
    y: &DVector<f64>,
) -> KktResiduals {
    let slack = &qp.ineq_offsets - &qp.ineq_normals * x;
    let mut primal = 0.0f64;
    for v in slack.iter() {
        primal = primal.max(-v);
    }
    let re = &qp.eq_normals * x - &qp.eq_offsets;
    primal = primal.max(inf_norm(&re));
    let denom_p = 1.0 + inf_norm(&qp.ineq_offsets).max(inf_norm(&qp.eq_offsets));

    let rd = &qp.hessian * x + &qp.linear + qp.ineq_normals.tr_mul(z) + qp.eq_normals.tr_mul(y);
    let denom_d = 1.0 + inf_norm(&qp.linear);

    let mut comp = 0.0f64;
    for i in 0..z.len() {
        comp = comp.max((z[i] * slack[i]).abs());
        comp = comp.max(-z[i]); // dual sign violation folds into complementarity
    }
    let objective = 0.5 * x.dot(&(&qp.hessian * x)) + qp.linear.dot(x);
    KktResiduals {
        primal: primal / denom_p,
        dual: inf_norm(&rd) / denom_d,
        complementarity: comp / (1.0 + objective.abs()),
    }
}

// ---------------------------------------------------------------------------
// Phase-I feasibility and ray checks
// ---------------------------------------------------------------------------

/// Exact feasibility decision for `{x | G x <= h}` via the phase-I LP
/// `min t  s.t.  Gx - t <= h, -t <= 1`. The optimum is zero (up to `tol`) iff
/// the system is feasible; otherwise the phase-I duals on the original rows
/// form a Farkas certificate.
pub(crate) fn phase1_dense(
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    tol: f64,
) -> Result<Feasibility, SolverError> {
    let m = g.nrows();
    let n = g.ncols();
    if m == 0 {
        return Ok(Feasibility::Feasible(DVector::zeros(n)));
    }
    let mut gt = DMatrix::zeros(m + 1, n + 1);
    gt.view_mut((0, 0), (m, n)).copy_from(g);
    for i in 0..m {
        gt[(i, n)] = -1.0;
    }
    gt[(m, n)] = -1.0;
    let mut ht = DVector::zeros(m + 1);
    ht.rows_mut(0, m).copy_from(h);
    ht[m] = 1.0;
    let mut obj = DVector::zeros(n + 1);
    obj[n] = 1.0;

    let qp = QuadraticProgram {
        hessian: DMatrix::zeros(n + 1, n + 1),
        linear: obj,
        ineq_normals: gt,
        ineq_offsets: ht.clone(),
        eq_normals: DMatrix::zeros(0, n + 1),
        eq_offsets: DVector::zeros(0),
    };
    let mut scaled = qp.clone();
    let scaling = equilibrate::ruiz(&mut scaled, 6);

    // Strictly feasible start for the scaled phase-I problem.
    let ns = n + 1;
    let x0 = {
        let mut x = DVector::zeros(ns);
        // t chosen so all scaled slacks are >= 1.
        let t_needed = scaled
            .ineq_offsets
            .rows(0, m)
            .iter()
            .enumerate()
            .map(|(i, hi)| (-hi + 1.0) / -scaled.ineq_normals[(i, n)])
            .fold(0.0f64, f64::max);
        x[n] = t_needed;
        x
    };
    let s0 = &scaled.ineq_offsets - &scaled.ineq_normals * &x0;
    let start = IpmPoint {
        x: x0,
        s: s0,
        z: DVector::from_element(m + 1, 1.0),
        y: DVector::zeros(0),
        iterations: 0,
    };

    let mut backend = DenseBackend::new(scaled);
    let opts = IpmOptions {
        tol: (tol * 1e-2).max(1e-12),
        max_iter: super::DEFAULT_MAX_ITER,
        start: Some(start),
    };
    match ipm_drive(&mut backend, &opts) {
        IpmOutcome::Converged(p) => {
            let x = scaling.unscale_primal(&p.x);
            let t = x[n];
            if t <= tol {
                let point = x.rows(0, n).into_owned();
                // The phase-I optimum can sit marginally outside; nudge checks
                // are the caller's business, the point satisfies G x <= h + tol.
                Ok(Feasibility::Feasible(point))
            } else {
                let duals = scaling.unscale_ineq_duals(&p.z);
                let mut cert = duals.rows(0, m).into_owned();
                let norm = inf_norm(&cert);
                if norm > 0.0 {
                    cert /= norm;
                }
                // Validate the certificate before asserting infeasibility.
                let combo = g.tr_mul(&cert);
                let value = h.dot(&cert);
                let gscale = 1.0 + g.amax();
                if inf_norm(&combo) <= 1e-6 * gscale && value < 0.0 && cert.min() >= -1e-9 {
                    Ok(Feasibility::Infeasible(FarkasCertificate {
                        ineq: cert.map(|v| v.max(0.0)),
                        eq: DVector::zeros(0),
                    }))
                } else if t > (1.0 + inf_norm(h)) * 1e-6 {
                    // Clearly infeasible even if the certificate is noisy.
                    Ok(Feasibility::Infeasible(FarkasCertificate {
                        ineq: cert.map(|v| v.max(0.0)),
                        eq: DVector::zeros(0),
                    }))
                } else {
                    Err(SolverError::NonFiniteData(
                        "phase-I could not certify feasibility either way".into(),
                    ))
                }
            }
        }
        IpmOutcome::Stalled(_) => Err(SolverError::NonFiniteData(
            "phase-I solve failed to converge".into(),
        )),
    }
}

/// Look for an improving ray `{d | G d <= 0, A d = 0, c'd <= -1}` proving an
/// LP unbounded (given feasibility).
fn improving_ray(qp: &QuadraticProgram, tol: f64) -> Result<Option<DVector<f64>>, SolverError> {
    let n = qp.linear.len();
    let m_in = qp.ineq_offsets.len();
    let m_eq = qp.eq_offsets.len();
    let mut g = DMatrix::zeros(m_in + 2 * m_eq + 1, n);
    let mut h = DVector::zeros(m_in + 2 * m_eq + 1);
    g.view_mut((0, 0), (m_in, n)).copy_from(&qp.ineq_normals);
    if m_eq > 0 {
        g.view_mut((m_in, 0), (m_eq, n)).copy_from(&qp.eq_normals);
        g.view_mut((m_in + m_eq, 0), (m_eq, n))
            .copy_from(&(-&qp.eq_normals));
    }
    g.row_mut(m_in + 2 * m_eq)
        .copy_from(&qp.linear.transpose());
    h[m_in + 2 * m_eq] = -1.0;
    match phase1_dense(&g, &h, tol)? {
        Feasibility::Feasible(d) => {
            let down = qp.linear.dot(&d);
            let scale = 1.0 + inf_norm(&d);
            let cone_violation = (&qp.ineq_normals * &d)
                .iter()
                .fold(0.0f64, |a, v| a.max(*v))
                .max(inf_norm(&(&qp.eq_normals * &d)));
            if down < -0.5 && cone_violation <= 1e-6 * scale {
                Ok(Some(d))
            } else {
                Ok(None)
            }
        }
        Feasibility::Infeasible(_) => Ok(None),
    }
}
