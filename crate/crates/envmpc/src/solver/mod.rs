//! Dense LP/QP solving layer with explicit status and certificate contracts.
//!
//! A single primal-dual interior-point implementation (Mehrotra-style
//! predictor-corrector) serves both problem classes; an LP is solved as a
//! zero-Hessian QP. Problems are Ruiz-equilibrated before solving and all
//! reported quantities (primal, duals, objective, KKT residuals) refer to the
//! original scaling. Infeasibility is certified: a failed solve is classified
//! by an exact phase-I subproblem whose dual multipliers form a Farkas
//! certificate, and an LP with a verified improving ray is reported unbounded.
//!
//! The [`arrow`] submodule solves QPs with the block-arrow sparsity pattern
//! produced by dualizing per-row semi-infinite constraints; it shares the
//! interior-point driver with the dense path, only the KKT backend differs.

mod equilibrate;
mod ipm;

pub mod arrow;
pub mod qcqp;

pub(crate) use ipm::IpmProblem;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Default feasibility / optimality tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default interior-point iteration cap.
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite problem data: {0}")]
    NonFiniteData(String),
    #[error("hessian not positive semidefinite (min eigenvalue {0:.3e})")]
    IndefiniteHessian(f64),
}

/// Linear program `min c'z  s.t.  G z <= h,  A z = b`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: DVector<f64>,
    pub ineq_normals: DMatrix<f64>,
    pub ineq_offsets: DVector<f64>,
    pub eq_normals: DMatrix<f64>,
    pub eq_offsets: DVector<f64>,
}

impl LinearProgram {
    /// Inequality-only LP.
    pub fn new(objective: DVector<f64>, ineq_normals: DMatrix<f64>, ineq_offsets: DVector<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            ineq_normals,
            ineq_offsets,
            eq_normals: DMatrix::zeros(0, n),
            eq_offsets: DVector::zeros(0),
        }
    }

    fn validate(&self) -> Result<(), SolverError> {
        let n = self.objective.len();
        if self.ineq_normals.ncols() != n || self.eq_normals.ncols() != n {
            return Err(SolverError::DimensionMismatch(format!(
                "variable count {} vs constraint columns {}/{}",
                n,
                self.ineq_normals.ncols(),
                self.eq_normals.ncols()
            )));
        }
        if self.ineq_normals.nrows() != self.ineq_offsets.len()
            || self.eq_normals.nrows() != self.eq_offsets.len()
        {
            return Err(SolverError::DimensionMismatch("row count vs offsets".into()));
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.ineq_normals.iter().all(|v| v.is_finite())
            && self.ineq_offsets.iter().all(|v| v.is_finite())
            && self.eq_normals.iter().all(|v| v.is_finite())
            && self.eq_offsets.iter().all(|v| v.is_finite());
        if !finite {
            return Err(SolverError::NonFiniteData("LP data".into()));
        }
        Ok(())
    }
}

/// Quadratic program `min 1/2 z'Pz + c'z  s.t.  G z <= h,  A z = b`.
///
/// The Hessian is symmetrized on construction and must be positive
/// semidefinite up to a small tolerance.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub ineq_normals: DMatrix<f64>,
    pub ineq_offsets: DVector<f64>,
    pub eq_normals: DMatrix<f64>,
    pub eq_offsets: DVector<f64>,
}

impl QuadraticProgram {
    pub fn new(
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        ineq_normals: DMatrix<f64>,
        ineq_offsets: DVector<f64>,
        eq_normals: DMatrix<f64>,
        eq_offsets: DVector<f64>,
    ) -> Result<Self, SolverError> {
        let n = linear.len();
        if hessian.nrows() != n || hessian.ncols() != n {
            return Err(SolverError::DimensionMismatch("hessian shape".into()));
        }
        let hessian = (&hessian + hessian.transpose()) * 0.5;
        // Cheap PSD screen: symmetric eigenvalues of the (usually small) Hessian.
        let scale = hessian.amax().max(1.0);
        let min_eig = hessian
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-9 * scale {
            return Err(SolverError::IndefiniteHessian(min_eig));
        }
        let qp = Self {
            hessian,
            linear,
            ineq_normals,
            ineq_offsets,
            eq_normals,
            eq_offsets,
        };
        qp.as_lp_shape().validate()?;
        Ok(qp)
    }

    fn as_lp_shape(&self) -> LinearProgram {
        LinearProgram {
            objective: self.linear.clone(),
            ineq_normals: self.ineq_normals.clone(),
            ineq_offsets: self.ineq_offsets.clone(),
            eq_normals: self.eq_normals.clone(),
            eq_offsets: self.eq_offsets.clone(),
        }
    }
}

/// Outcome classification of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

/// KKT residuals of the returned point, in the original problem scaling.
#[derive(Debug, Clone, Copy, Default)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }
}

/// Certificate of primal infeasibility: `y_ineq >= 0` with
/// `G'y_ineq + A'y_eq = 0` and `h'y_ineq + b'y_eq < 0`.
#[derive(Debug, Clone)]
pub struct FarkasCertificate {
    pub ineq: DVector<f64>,
    pub eq: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub primal: DVector<f64>,
    /// Multipliers of the inequality rows (nonnegative at an optimum).
    pub ineq_duals: DVector<f64>,
    /// Multipliers of the equality rows.
    pub eq_duals: DVector<f64>,
    pub objective: f64,
    pub kkt_residuals: KktResiduals,
    pub iterations: usize,
    /// Present when `status == Infeasible`.
    pub farkas: Option<FarkasCertificate>,
}

/// Feasibility query outcome for `{z | G z <= h}`.
#[derive(Debug, Clone)]
pub enum Feasibility {
    Feasible(DVector<f64>),
    Infeasible(FarkasCertificate),
}

/// Solve a linear program. See [`SolveResult`] for the status contract.
pub fn solve_lp(lp: &LinearProgram, tol: f64) -> Result<SolveResult, SolverError> {
    lp.validate()?;
    let n = lp.objective.len();
    let qp = QuadraticProgram {
        hessian: DMatrix::zeros(n, n),
        linear: lp.objective.clone(),
        ineq_normals: lp.ineq_normals.clone(),
        ineq_offsets: lp.ineq_offsets.clone(),
        eq_normals: lp.eq_normals.clone(),
        eq_offsets: lp.eq_offsets.clone(),
    };
    ipm::solve_dense(&qp, tol, DEFAULT_MAX_ITER, true)
}

/// Solve a convex quadratic program.
pub fn solve_qp(qp: &QuadraticProgram, tol: f64) -> Result<SolveResult, SolverError> {
    qp.as_lp_shape().validate()?;
    ipm::solve_dense(qp, tol, DEFAULT_MAX_ITER, false)
}

/// Decide feasibility of `{z | G z <= h}` by an exact phase-I LP.
pub fn solve_feasibility(
    normals: &DMatrix<f64>,
    offsets: &DVector<f64>,
    tol: f64,
) -> Result<Feasibility, SolverError> {
    ipm::phase1_dense(normals, offsets, tol)
}
