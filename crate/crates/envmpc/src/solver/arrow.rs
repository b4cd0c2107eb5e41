//! Interior-point solving of QPs with the block-arrow structure produced by
//! dualizing per-row semi-infinite constraints.
//!
//! Problem class:
//!
//! ```text
//!   min 1/2 t'Ht + q't
//!   s.t.  a_r't + w'l_r <= rhs_r          (one scalar row per robust row r)
//!         W'l_r - B_r t  = b_r            (d equality rows per robust row)
//!         l_r >= 0                        (p bounds per robust row)
//!         G t <= h                        (plain rows without uncertainty)
//! ```
//!
//! where `t` are the global decision variables and each robust row carries its
//! own multiplier block `l_r` over the shared uncertainty polytope
//! `{v | W v <= w}`. The KKT system is solved by eliminating every
//! `(l_r, y_r)` block onto the global variables: a multiplier block couples to
//! `t` only through a rank `1 + d` term, so each block contributes a small
//! Schur update. The Mehrotra iteration is shared with the dense path (the
//! [`IpmProblem`] impl below); only the factorization differs.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::ipm::{ipm_drive, IpmOptions, IpmOutcome, IpmProblem};
use super::{KktResiduals, QuadraticProgram, SolveStatus, SolverError};

/// One dualized robust row.
#[derive(Debug, Clone)]
pub struct ArrowRow {
    /// Coefficient of the global variables in the affine part.
    pub a: DVector<f64>,
    /// Right-hand side of the scalar row (affine constant already folded in).
    pub rhs: f64,
    /// Constant part of the uncertainty functional `b(t) = b0 + Bt * t[cols]`.
    pub b0: DVector<f64>,
    /// Global-variable columns appearing in `b(t)`.
    pub cols: Vec<usize>,
    /// Coefficients of `b(t)` on those columns (d x cols.len()).
    pub bt: DMatrix<f64>,
}

/// Block-arrow QP data. See the module docs for the constraint layout.
#[derive(Debug, Clone)]
pub struct ArrowQp {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub obj_const: f64,
    pub w_normals: DMatrix<f64>,
    pub w_offsets: DVector<f64>,
    pub rows: Vec<ArrowRow>,
    pub plain_normals: DMatrix<f64>,
    pub plain_offsets: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct ArrowSolution {
    pub status: SolveStatus,
    pub theta: DVector<f64>,
    pub multipliers: Vec<DVector<f64>>,
    /// Duals of the scalar robust rows.
    pub row_duals: DVector<f64>,
    /// Duals of the plain rows.
    pub plain_duals: DVector<f64>,
    pub objective: f64,
    pub kkt_residuals: KktResiduals,
    pub iterations: usize,
    /// Phase-I certificate data when `status == Infeasible`: duals of the
    /// relaxed rows, ordered [plain rows, scalar robust rows].
    pub infeasibility_duals: Option<DVector<f64>>,
}

fn amax0(v: &DVector<f64>) -> f64 {
    if v.len() == 0 {
        0.0
    } else {
        v.amax()
    }
}

impl ArrowQp {
    pub fn num_theta(&self) -> usize {
        self.linear.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    fn validate(&self) -> Result<(), SolverError> {
        let n = self.num_theta();
        let p = self.w_offsets.len();
        let d = self.w_normals.ncols();
        if self.w_normals.nrows() != p || (p == 0 && !self.rows.is_empty()) {
            return Err(SolverError::DimensionMismatch(
                "uncertainty polytope rows".into(),
            ));
        }
        if self.hessian.nrows() != n || self.hessian.ncols() != n {
            return Err(SolverError::DimensionMismatch("hessian".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.a.len() != n
                || r.b0.len() != d
                || r.bt.nrows() != d
                || r.bt.ncols() != r.cols.len()
                || r.cols.iter().any(|&c| c >= n)
            {
                return Err(SolverError::DimensionMismatch(format!("robust row {i}")));
            }
        }
        if self.plain_normals.ncols() != n || self.plain_normals.nrows() != self.plain_offsets.len()
        {
            return Err(SolverError::DimensionMismatch("plain rows".into()));
        }
        Ok(())
    }

    /// Solve, classifying a stalled solve with an exact phase-I subproblem.
    pub fn solve(&self, tol: f64, max_iter: usize) -> Result<ArrowSolution, SolverError> {
        self.validate()?;
        let mut backend = ArrowBackend::new(self);
        let opts = IpmOptions {
            tol: (tol * 1e-1).max(1e-12),
            max_iter,
            start: None,
        };
        match ipm_drive(&mut backend, &opts) {
            IpmOutcome::Converged(pt) => Ok(self.finish(&backend, pt, tol, SolveStatus::Optimal)),
            IpmOutcome::Stalled(pt) => match self.phase1(tol, max_iter) {
                Ok((true, _)) => Ok(self.finish(&backend, pt, tol, SolveStatus::Optimal)),
                Ok((false, duals)) => {
                    let mut sol = self.finish(&backend, pt, tol, SolveStatus::Infeasible);
                    sol.infeasibility_duals = Some(duals);
                    Ok(sol)
                }
                // Classification itself failed: report the stall honestly.
                Err(_) => Ok(self.finish(&backend, pt, tol, SolveStatus::MaxIterations)),
            },
        }
    }

    fn finish(
        &self,
        backend: &ArrowBackend,
        pt: super::ipm::IpmPoint,
        tol: f64,
        status: SolveStatus,
    ) -> ArrowSolution {
        let n = self.num_theta();
        let p = self.w_offsets.len();
        let m_g = self.plain_offsets.len();
        let nr = self.rows.len();
        let theta: DVector<f64> = pt.x.rows(0, n).into();
        let multipliers: Vec<DVector<f64>> = (0..nr)
            .map(|r| pt.x.rows(n + r * p, p).into_owned())
            .collect();
        let plain_duals: DVector<f64> = pt.z.rows(0, m_g).into_owned();
        let row_duals: DVector<f64> = pt.z.rows(m_g, nr).into_owned();
        let objective =
            0.5 * theta.dot(&(&self.hessian * &theta)) + self.linear.dot(&theta) + self.obj_const;
        let kkt = backend.residuals(&pt);
        let status = if status == SolveStatus::Optimal && kkt.max() > tol {
            SolveStatus::MaxIterations
        } else {
            status
        };
        ArrowSolution {
            status,
            theta,
            multipliers,
            row_duals,
            plain_duals,
            objective,
            kkt_residuals: kkt,
            iterations: pt.iterations,
            infeasibility_duals: None,
        }
    }

    /// Phase-I: relax the scalar and plain rows by a common slack variable.
    /// The multiplier cone `l >= 0` and the equality blocks stay exact (the
    /// equalities are always solvable over the cone because the normals of a
    /// bounded uncertainty polytope positively span the space).
    fn phase1(&self, tol: f64, max_iter: usize) -> Result<(bool, DVector<f64>), SolverError> {
        let n = self.num_theta();
        let mut relaxed = self.clone();
        relaxed.hessian = DMatrix::zeros(n + 1, n + 1);
        let mut q = DVector::zeros(n + 1);
        q[n] = 1.0;
        relaxed.linear = q;
        relaxed.obj_const = 0.0;
        for r in relaxed.rows.iter_mut() {
            let mut a = DVector::zeros(n + 1);
            a.rows_mut(0, n).copy_from(&r.a);
            a[n] = -1.0;
            r.a = a;
        }
        let m_g = self.plain_offsets.len();
        let mut g = DMatrix::zeros(m_g + 1, n + 1);
        g.view_mut((0, 0), (m_g, n)).copy_from(&self.plain_normals);
        for i in 0..m_g {
            g[(i, n)] = -1.0;
        }
        g[(m_g, n)] = -1.0;
        let mut h = DVector::zeros(m_g + 1);
        h.rows_mut(0, m_g).copy_from(&self.plain_offsets);
        h[m_g] = 1.0;
        relaxed.plain_normals = g;
        relaxed.plain_offsets = h;

        let mut backend = ArrowBackend::new(&relaxed);
        let opts = IpmOptions {
            tol: (tol * 1e-2).max(1e-12),
            max_iter,
            start: None,
        };
        match ipm_drive(&mut backend, &opts) {
            IpmOutcome::Converged(pt) => {
                let t_star = pt.x[n];
                let nr = self.rows.len();
                let mut duals = DVector::zeros(m_g + nr);
                duals
                    .rows_mut(0, m_g)
                    .copy_from(&pt.z.rows(0, m_g).into_owned());
                duals
                    .rows_mut(m_g, nr)
                    .copy_from(&pt.z.rows(m_g + 1, nr).into_owned());
                Ok((t_star <= tol, duals))
            }
            IpmOutcome::Stalled(_) => Err(SolverError::NonFiniteData(
                "arrow phase-I failed to converge".into(),
            )),
        }
    }

    /// Expand into an explicit dense QP over `[t, l_0, ..., l_{R-1}]`.
    /// Intended for small instances and cross-checking the structured path.
    pub fn flatten(&self) -> Result<QuadraticProgram, SolverError> {
        self.validate()?;
        let n = self.num_theta();
        let p = self.w_offsets.len();
        let d = self.w_normals.ncols();
        let nr = self.rows.len();
        let nv = n + nr * p;
        let m_g = self.plain_offsets.len();
        let m_in = m_g + nr + nr * p;
        let m_eq = nr * d;

        let mut hess = DMatrix::zeros(nv, nv);
        hess.view_mut((0, 0), (n, n)).copy_from(&self.hessian);
        let mut lin = DVector::zeros(nv);
        lin.rows_mut(0, n).copy_from(&self.linear);

        let mut g = DMatrix::zeros(m_in, nv);
        let mut h = DVector::zeros(m_in);
        g.view_mut((0, 0), (m_g, n)).copy_from(&self.plain_normals);
        h.rows_mut(0, m_g).copy_from(&self.plain_offsets);
        for (r, row) in self.rows.iter().enumerate() {
            for j in 0..n {
                g[(m_g + r, j)] = row.a[j];
            }
            for i in 0..p {
                g[(m_g + r, n + r * p + i)] = self.w_offsets[i];
            }
            h[m_g + r] = row.rhs;
        }
        for r in 0..nr {
            for i in 0..p {
                g[(m_g + nr + r * p + i, n + r * p + i)] = -1.0;
            }
        }

        let mut a_eq = DMatrix::zeros(m_eq, nv);
        let mut b_eq = DVector::zeros(m_eq);
        for (r, row) in self.rows.iter().enumerate() {
            for dd in 0..d {
                for i in 0..p {
                    a_eq[(r * d + dd, n + r * p + i)] = self.w_normals[(i, dd)];
                }
                for (ci, &c) in row.cols.iter().enumerate() {
                    a_eq[(r * d + dd, c)] = -row.bt[(dd, ci)];
                }
                b_eq[r * d + dd] = row.b0[dd];
            }
        }
        QuadraticProgram::new(hess, lin, g, h, a_eq, b_eq)
    }

    /// Objective value (including the constant term) at a given `theta`.
    pub fn objective_at(&self, theta: &DVector<f64>) -> f64 {
        0.5 * theta.dot(&(&self.hessian * theta)) + self.linear.dot(theta) + self.obj_const
    }
}

// ---------------------------------------------------------------------------
// Backend
// ---------------------------------------------------------------------------

struct RowFactor {
    /// (D_bound + delta)^{-1} diagonal.
    inv_diag: DVector<f64>,
    /// alpha = inv_diag .* w
    alpha: DVector<f64>,
    /// 1 + d_s * w'alpha
    denom: f64,
    d_s: f64,
    /// Y = W' Dtilde^{-1} W + delta I, factored.
    chol: Cholesky<f64, Dyn>,
}

struct ArrowBackend<'a> {
    qp: &'a ArrowQp,
    n: usize,
    p: usize,
    d: usize,
    nr: usize,
    m_g: usize,
    lin_full: DVector<f64>,
    ineq_rhs: DVector<f64>,
    eq_rhs: DVector<f64>,
    /// Per row: sorted union of support(a) and bt cols.
    row_active: Vec<Vec<usize>>,
    // Iteration state.
    weights: DVector<f64>,
    factors: Vec<RowFactor>,
    schur: Option<Cholesky<f64, Dyn>>,
    schur_lu: Option<nalgebra::LU<f64, Dyn, Dyn>>,
}

impl<'a> ArrowBackend<'a> {
    fn new(qp: &'a ArrowQp) -> Self {
        let n = qp.num_theta();
        let p = qp.w_offsets.len();
        let d = qp.w_normals.ncols();
        let nr = qp.rows.len();
        let m_g = qp.plain_offsets.len();

        let mut lin_full = DVector::zeros(n + nr * p);
        lin_full.rows_mut(0, n).copy_from(&qp.linear);

        let mut ineq_rhs = DVector::zeros(m_g + nr + nr * p);
        ineq_rhs.rows_mut(0, m_g).copy_from(&qp.plain_offsets);
        for (r, row) in qp.rows.iter().enumerate() {
            ineq_rhs[m_g + r] = row.rhs;
        }

        let mut eq_rhs = DVector::zeros(nr * d);
        for (r, row) in qp.rows.iter().enumerate() {
            eq_rhs.rows_mut(r * d, d).copy_from(&row.b0);
        }

        let row_active = qp
            .rows
            .iter()
            .map(|row| {
                let mut act: Vec<usize> = row.cols.clone();
                for j in 0..n {
                    if row.a[j] != 0.0 && !act.contains(&j) {
                        act.push(j);
                    }
                }
                act.sort_unstable();
                act
            })
            .collect();

        Self {
            qp,
            n,
            p,
            d,
            nr,
            m_g,
            lin_full,
            ineq_rhs,
            eq_rhs,
            row_active,
            weights: DVector::zeros(0),
            factors: Vec::new(),
            schur: None,
            schur_lu: None,
        }
    }

    fn weight_plain(&self, i: usize) -> f64 {
        self.weights[i]
    }
    fn weight_scalar(&self, r: usize) -> f64 {
        self.weights[self.m_g + r]
    }
    fn weight_bound(&self, r: usize, i: usize) -> f64 {
        self.weights[self.m_g + self.nr + r * self.p + i]
    }

    /// Residual of the unregularized reduced KKT system, for refinement.
    fn kkt_residual(
        &self,
        dx: &DVector<f64>,
        dy: &DVector<f64>,
        rx: &DVector<f64>,
        ry: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let gi = self.ineq_mul(dx);
        let weighted = gi.component_mul(&self.weights);
        let top = self.hess_mul(dx) + self.ineq_tr_mul(&weighted) + self.eq_tr_mul(dy);
        let bot = self.eq_mul(dx);
        (rx - top, ry - bot)
    }

    fn solve_once(&self, rx: &DVector<f64>, ry: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (n, p, d, nr) = (self.n, self.p, self.d, self.nr);
        let w = &self.qp.w_offsets;
        let wn = &self.qp.w_normals;

        // Reduce onto the global block: rhs_t = r_t - sum_r V_r (U_r' M_r^{-1} e_r).
        let mut rhs_t: DVector<f64> = rx.rows(0, n).into();
        for (r, row) in self.qp.rows.iter().enumerate() {
            let f = &self.factors[r];
            let rl: DVector<f64> = rx.rows(n + r * p, p).into();
            let rg: DVector<f64> = ry.rows(r * d, d).into();
            // e = M^{-1} [rl; rg]: multiplier part u, equality-dual part v.
            let dt_rl = dtilde_solve(f, &rl);
            let v = f.chol.solve(&(wn.tr_mul(&dt_rl) - &rg));
            let u = dtilde_solve(f, &(&rl - wn * &v));
            let wu = w.dot(&u);
            // rhs_t -= V [wu; v] with V = [d_s a | -Bt'].
            let a = &row.a;
            for j in 0..n {
                if a[j] != 0.0 {
                    rhs_t[j] -= f.d_s * a[j] * wu;
                }
            }
            let btv = row.bt.tr_mul(&v);
            for (ci, &c) in row.cols.iter().enumerate() {
                rhs_t[c] += btv[ci];
            }
        }

        let dtheta = if let Some(ch) = &self.schur {
            ch.solve(&rhs_t)
        } else {
            self.schur_lu
                .as_ref()
                .expect("factored")
                .solve(&rhs_t)
                .unwrap_or_else(|| DVector::zeros(n))
        };

        // Recover the per-row blocks.
        let mut dx = DVector::zeros(n + nr * p);
        dx.rows_mut(0, n).copy_from(&dtheta);
        let mut dy = DVector::zeros(nr * d);
        for (r, row) in self.qp.rows.iter().enumerate() {
            let f = &self.factors[r];
            let rl: DVector<f64> = rx.rows(n + r * p, p).into();
            let rg: DVector<f64> = ry.rows(r * d, d).into();
            let a_dot = row.a.dot(&dtheta);
            let f_vec = &rl - w * (f.d_s * a_dot);
            let mut g_vec = rg;
            let mut th_cols = DVector::zeros(row.cols.len());
            for (ci, &c) in row.cols.iter().enumerate() {
                th_cols[ci] = dtheta[c];
            }
            g_vec += &row.bt * th_cols;
            let dt_f = dtilde_solve(f, &f_vec);
            let v = f.chol.solve(&(wn.tr_mul(&dt_f) - &g_vec));
            let u = dtilde_solve(f, &(&f_vec - wn * &v));
            dx.rows_mut(n + r * p, p).copy_from(&u);
            dy.rows_mut(r * d, d).copy_from(&v);
        }
        (dx, dy)
    }

    fn residuals(&self, pt: &super::ipm::IpmPoint) -> KktResiduals {
        let gi = self.ineq_mul(&pt.x);
        let slack = &self.ineq_rhs - &gi;
        let mut primal = 0.0f64;
        for v in slack.iter() {
            primal = primal.max(-v);
        }
        let re = self.eq_mul(&pt.x) - &self.eq_rhs;
        for v in re.iter() {
            primal = primal.max(v.abs());
        }
        let denom_p = 1.0 + amax0(&self.ineq_rhs).max(amax0(&self.eq_rhs));

        let rd = self.hess_mul(&pt.x)
            + &self.lin_full
            + self.ineq_tr_mul(&pt.z)
            + self.eq_tr_mul(&pt.y);
        let denom_d = 1.0 + amax0(&self.lin_full);

        let mut comp = 0.0f64;
        for i in 0..pt.z.len() {
            comp = comp.max((pt.z[i] * slack[i]).abs());
            comp = comp.max(-pt.z[i]);
        }
        let theta: DVector<f64> = pt.x.rows(0, self.n).into();
        let obj = 0.5 * theta.dot(&(&self.qp.hessian * &theta)) + self.qp.linear.dot(&theta);
        KktResiduals {
            primal: primal / denom_p,
            dual: amax0(&rd) / denom_d,
            complementarity: comp / (1.0 + obj.abs()),
        }
    }
}

/// Apply `(D_bound + d_s w w' + delta)^{-1}` via Sherman-Morrison.
fn dtilde_solve(f: &RowFactor, v: &DVector<f64>) -> DVector<f64> {
    let base = v.component_mul(&f.inv_diag);
    let corr = f.d_s * f.alpha.dot(v) / f.denom;
    &base - &f.alpha * corr
}

impl<'a> IpmProblem for ArrowBackend<'a> {
    fn num_vars(&self) -> usize {
        self.n + self.nr * self.p
    }
    fn num_ineq(&self) -> usize {
        self.m_g + self.nr + self.nr * self.p
    }
    fn num_eq(&self) -> usize {
        self.nr * self.d
    }

    fn hess_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_vars());
        let theta: DVector<f64> = x.rows(0, self.n).into();
        out.rows_mut(0, self.n)
            .copy_from(&(&self.qp.hessian * theta));
        out
    }
    fn linear(&self) -> &DVector<f64> {
        &self.lin_full
    }

    fn ineq_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let (n, p, nr, m_g) = (self.n, self.p, self.nr, self.m_g);
        let theta: DVector<f64> = x.rows(0, n).into();
        let mut out = DVector::zeros(self.num_ineq());
        if m_g > 0 {
            out.rows_mut(0, m_g)
                .copy_from(&(&self.qp.plain_normals * &theta));
        }
        for (r, row) in self.qp.rows.iter().enumerate() {
            let l = x.rows(n + r * p, p);
            out[m_g + r] = row.a.dot(&theta) + self.qp.w_offsets.dot(&l);
            let mut bnd = out.rows_mut(m_g + nr + r * p, p);
            for i in 0..p {
                bnd[i] = -l[i];
            }
        }
        out
    }

    fn ineq_tr_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        let (n, p, nr, m_g) = (self.n, self.p, self.nr, self.m_g);
        let mut out = DVector::zeros(self.num_vars());
        if m_g > 0 {
            let zg: DVector<f64> = z.rows(0, m_g).into();
            out.rows_mut(0, n)
                .copy_from(&self.qp.plain_normals.tr_mul(&zg));
        }
        for (r, row) in self.qp.rows.iter().enumerate() {
            let zr = z[m_g + r];
            if zr != 0.0 {
                for j in 0..n {
                    if row.a[j] != 0.0 {
                        out[j] += zr * row.a[j];
                    }
                }
            }
            let mut lam = out.rows_mut(n + r * p, p);
            for i in 0..p {
                lam[i] = zr * self.qp.w_offsets[i] - z[m_g + nr + r * p + i];
            }
        }
        out
    }

    fn eq_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let (n, p, d) = (self.n, self.p, self.d);
        let mut out = DVector::zeros(self.num_eq());
        for (r, row) in self.qp.rows.iter().enumerate() {
            let l: DVector<f64> = x.rows(n + r * p, p).into();
            let mut block = self.qp.w_normals.tr_mul(&l);
            for (ci, &c) in row.cols.iter().enumerate() {
                let xc = x[c];
                if xc != 0.0 {
                    for dd in 0..d {
                        block[dd] -= row.bt[(dd, ci)] * xc;
                    }
                }
            }
            out.rows_mut(r * d, d).copy_from(&block);
        }
        out
    }

    fn eq_tr_mul(&self, y: &DVector<f64>) -> DVector<f64> {
        let (n, p, d) = (self.n, self.p, self.d);
        let mut out = DVector::zeros(self.num_vars());
        for (r, row) in self.qp.rows.iter().enumerate() {
            let yr: DVector<f64> = y.rows(r * d, d).into();
            out.rows_mut(n + r * p, p)
                .copy_from(&(&self.qp.w_normals * &yr));
            let btv = row.bt.tr_mul(&yr);
            for (ci, &c) in row.cols.iter().enumerate() {
                out[c] -= btv[ci];
            }
        }
        out
    }

    fn ineq_rhs(&self) -> &DVector<f64> {
        &self.ineq_rhs
    }
    fn eq_rhs(&self) -> &DVector<f64> {
        &self.eq_rhs
    }

    fn factor(&mut self, dw: &DVector<f64>, delta: f64) -> Result<(), ()> {
        if self.try_factor(dw, delta) {
            Ok(())
        } else {
            Err(())
        }
    }

    fn kkt_solve(&self, rx: &DVector<f64>, ry: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        // Monitored iterative refinement: keep the best-residual iterate and
        // stop as soon as a correction stops helping.
        let scale = 1.0 + amax0(rx).max(amax0(ry));
        let (mut dx, mut dy) = self.solve_once(rx, ry);
        let (mut res_x, mut res_y) = self.kkt_residual(&dx, &dy, rx, ry);
        let mut res_norm = res_x.amax().max(amax0(&res_y));
        for _ in 0..6 {
            if res_norm < 1e-15 * scale {
                break;
            }
            let (cx, cy) = self.solve_once(&res_x, &res_y);
            let nx = &dx + &cx;
            let ny = &dy + &cy;
            let (rx2, ry2) = self.kkt_residual(&nx, &ny, rx, ry);
            let new_norm = rx2.amax().max(amax0(&ry2));
            if new_norm < res_norm {
                dx = nx;
                dy = ny;
                res_x = rx2;
                res_y = ry2;
                let improved = new_norm < 0.5 * res_norm;
                res_norm = new_norm;
                if !improved {
                    break;
                }
            } else {
                break;
            }
        }
        (dx, dy)
    }
}

/// Cholesky with escalating diagonal jitter; cancellation at extreme barrier
/// weights can leave these blocks marginally indefinite.
fn chol_with_jitter(mut m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let scale = m.diagonal().amax().max(1.0);
    for jitter in [0.0, 1e-13, 1e-10, 1e-7] {
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter * scale;
            }
        }
        if let Some(c) = Cholesky::new(m.clone()) {
            return Some(c);
        }
    }
    None
}

impl<'a> ArrowBackend<'a> {
    fn try_factor(&mut self, dw: &DVector<f64>, delta: f64) -> bool {
        let (n, p, d) = (self.n, self.p, self.d);
        self.weights = dw.clone();
        let w = &self.qp.w_offsets;
        let wn = &self.qp.w_normals;

        let mut schur = self.qp.hessian.clone();
        for j in 0..n {
            schur[(j, j)] += delta;
        }
        // Plain rows: rank-one updates d_g a a'.
        for i in 0..self.m_g {
            let dg = self.weight_plain(i);
            if dg == 0.0 {
                continue;
            }
            let row = self.qp.plain_normals.row(i);
            for jj in 0..n {
                let v = row[jj];
                if v == 0.0 {
                    continue;
                }
                let scaled = dg * v;
                for kk in 0..n {
                    if row[kk] != 0.0 {
                        schur[(jj, kk)] += scaled * row[kk];
                    }
                }
            }
        }

        self.factors.clear();
        for (r, row) in self.qp.rows.iter().enumerate() {
            let d_s = self.weight_scalar(r);
            let mut inv_diag = DVector::zeros(p);
            for i in 0..p {
                inv_diag[i] = 1.0 / (self.weight_bound(r, i) + delta);
            }
            let alpha = w.component_mul(&inv_diag);
            let denom = 1.0 + d_s * w.dot(&alpha);
            // Y = W' (D + d_s ww' + delta)^{-1} W + delta I.
            let mut scaled_w = wn.clone();
            for i in 0..p {
                let s = inv_diag[i];
                for dd in 0..d {
                    scaled_w[(i, dd)] *= s;
                }
            }
            let mut y_mat = wn.tr_mul(&scaled_w);
            let ws = wn.tr_mul(&alpha);
            let corr = d_s / denom;
            for a_i in 0..d {
                for b_i in 0..d {
                    y_mat[(a_i, b_i)] -= corr * ws[a_i] * ws[b_i];
                }
                y_mat[(a_i, a_i)] += delta;
            }
            let chol = match chol_with_jitter(y_mat) {
                Some(c) => c,
                None => return false,
            };

            // Schur update: + d_s a a' - V T V' with T = U'M^{-1}U.
            let y_inv = chol.inverse();
            let yws = &y_inv * &ws;
            let t00 = w.dot(&alpha) / denom - ws.dot(&yws) / (denom * denom);
            let active = &self.row_active[r];
            let k = active.len();
            let mut t_mat = DMatrix::zeros(1 + d, 1 + d);
            t_mat[(0, 0)] = t00;
            for dd in 0..d {
                t_mat[(0, 1 + dd)] = yws[dd] / denom;
                t_mat[(1 + dd, 0)] = yws[dd] / denom;
                for ee in 0..d {
                    t_mat[(1 + dd, 1 + ee)] = -y_inv[(dd, ee)];
                }
            }
            let mut v_act = DMatrix::zeros(k, 1 + d);
            for (i, &c) in active.iter().enumerate() {
                v_act[(i, 0)] = d_s * row.a[c];
            }
            for (ci, &c) in row.cols.iter().enumerate() {
                let i = active.binary_search(&c).expect("col in active set");
                for dd in 0..d {
                    v_act[(i, 1 + dd)] = -row.bt[(dd, ci)];
                }
            }
            let update = &v_act * &t_mat * v_act.transpose();
            for (ia, &ca) in active.iter().enumerate() {
                for (ib, &cb) in active.iter().enumerate() {
                    schur[(ca, cb)] -= update[(ia, ib)];
                }
            }
            // d_s a a' over the support of a.
            for &ca in active.iter() {
                let aj = row.a[ca];
                if aj == 0.0 {
                    continue;
                }
                let scaled = d_s * aj;
                for &cb in active.iter() {
                    let ab = row.a[cb];
                    if ab != 0.0 {
                        schur[(ca, cb)] += scaled * ab;
                    }
                }
            }

            self.factors.push(RowFactor {
                inv_diag,
                alpha,
                denom,
                d_s,
                chol,
            });
        }

        match chol_with_jitter(schur.clone()) {
            Some(c) => {
                self.schur = Some(c);
                self.schur_lu = None;
                true
            }
            None => {
                let lu = schur.lu();
                if lu.u().diagonal().iter().any(|v| v.abs() < 1e-300) {
                    return false;
                }
                self.schur = None;
                self.schur_lu = Some(lu);
                true
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_qp, SolveStatus};

    /// A small arrow instance: 2 global vars, box uncertainty in R^1.
    fn toy() -> ArrowQp {
        // min (t0-1)^2 + (t1+0.5)^2
        // s.t. t0 + max_{|v|<=1} (t1 * v) <= 1   (robust row: b(t) = t1)
        //      t0 + t1 <= 2                      (plain row)
        let hessian = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let linear = DVector::from_vec(vec![-2.0, 1.0]);
        let w_normals = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let w_offsets = DVector::from_vec(vec![1.0, 1.0]);
        let row = ArrowRow {
            a: DVector::from_vec(vec![1.0, 0.0]),
            rhs: 1.0,
            b0: DVector::zeros(1),
            cols: vec![1],
            bt: DMatrix::from_row_slice(1, 1, &[1.0]),
        };
        ArrowQp {
            hessian,
            linear,
            obj_const: 1.25,
            w_normals,
            w_offsets,
            rows: vec![row],
            plain_normals: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            plain_offsets: DVector::from_vec(vec![2.0]),
        }
    }

    #[test]
    fn arrow_matches_flattened_dense() {
        let qp = toy();
        let sol = qp.solve(1e-9, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let dense = solve_qp(&qp.flatten().unwrap(), 1e-9).unwrap();
        assert_eq!(dense.status, SolveStatus::Optimal);
        let gap = (sol.objective - (dense.objective + qp.obj_const)).abs();
        assert!(gap < 1e-7, "objective gap {gap}");
        for j in 0..2 {
            assert!((sol.theta[j] - dense.primal[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn arrow_detects_infeasible() {
        let mut qp = toy();
        // t0 <= -10 and t0 >= 10 cannot both hold.
        qp.plain_normals = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        qp.plain_offsets = DVector::from_vec(vec![-10.0, -10.0]);
        let sol = qp.solve(1e-9, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(sol.infeasibility_duals.is_some());
    }

    #[test]
    fn arrow_robust_row_is_tight_against_worst_case() {
        let qp = toy();
        let sol = qp.solve(1e-10, 100).unwrap();
        // The robust row enforces t0 + |t1| <= 1 exactly.
        let t = &sol.theta;
        assert!(t[0] + t[1].abs() <= 1.0 + 1e-7);
        // Unconstrained optimum (1, -0.5) violates it, so the row is active.
        assert!((t[0] + t[1].abs() - 1.0).abs() < 1e-6);
    }
}
