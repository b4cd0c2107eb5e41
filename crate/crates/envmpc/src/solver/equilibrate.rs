//! Ruiz-style equilibration of QP data.
//!
//! Iteratively scales constraint rows and variable columns toward unit
//! infinity norm, then normalizes the cost. The solve runs on scaled data and
//! results are mapped back to the original scaling by [`Scaling::unscale_*`].

use nalgebra::{DMatrix, DVector};

use super::QuadraticProgram;

#[derive(Debug, Clone)]
pub struct Scaling {
    /// Column (variable) scaling: z = col * z_scaled.
    pub col: DVector<f64>,
    /// Inequality row scaling applied to (G, h).
    pub row_ineq: DVector<f64>,
    /// Equality row scaling applied to (A, b).
    pub row_eq: DVector<f64>,
    /// Cost scaling factor applied to (P, q).
    pub cost: f64,
}

impl Scaling {
    pub fn identity(n: usize, m_in: usize, m_eq: usize) -> Self {
        Self {
            col: DVector::from_element(n, 1.0),
            row_ineq: DVector::from_element(m_in, 1.0),
            row_eq: DVector::from_element(m_eq, 1.0),
            cost: 1.0,
        }
    }

    pub fn unscale_primal(&self, x: &DVector<f64>) -> DVector<f64> {
        x.component_mul(&self.col)
    }

    pub fn unscale_ineq_duals(&self, z: &DVector<f64>) -> DVector<f64> {
        z.component_mul(&self.row_ineq) / self.cost
    }

    pub fn unscale_eq_duals(&self, y: &DVector<f64>) -> DVector<f64> {
        y.component_mul(&self.row_eq) / self.cost
    }
}

fn col_norms_inf(m: &DMatrix<f64>, acc: &mut DVector<f64>) {
    for j in 0..m.ncols() {
        let mut c = acc[j];
        for i in 0..m.nrows() {
            c = c.max(m[(i, j)].abs());
        }
        acc[j] = c;
    }
}

/// Equilibrate `qp` in place; returns the applied scaling.
pub fn ruiz(qp: &mut QuadraticProgram, iterations: usize) -> Scaling {
    let n = qp.linear.len();
    let m_in = qp.ineq_offsets.len();
    let m_eq = qp.eq_offsets.len();
    let mut s = Scaling::identity(n, m_in, m_eq);

    for _ in 0..iterations {
        // Row scaling toward unit infinity norm.
        let mut dr_in = DVector::from_element(m_in, 1.0);
        for i in 0..m_in {
            let norm = qp.ineq_normals.row(i).amax();
            if norm > 1e-12 {
                dr_in[i] = 1.0 / norm.sqrt();
            }
        }
        let mut dr_eq = DVector::from_element(m_eq, 1.0);
        for i in 0..m_eq {
            let norm = qp.eq_normals.row(i).amax();
            if norm > 1e-12 {
                dr_eq[i] = 1.0 / norm.sqrt();
            }
        }
        // Column norms over the stacked [P; G; A].
        let mut cn = DVector::from_element(n, 0.0f64);
        col_norms_inf(&qp.hessian, &mut cn);
        col_norms_inf(&qp.ineq_normals, &mut cn);
        col_norms_inf(&qp.eq_normals, &mut cn);
        let mut dc = DVector::from_element(n, 1.0);
        for j in 0..n {
            if cn[j] > 1e-12 {
                dc[j] = 1.0 / cn[j].sqrt();
            }
        }

        for i in 0..m_in {
            let r = dr_in[i];
            for j in 0..n {
                qp.ineq_normals[(i, j)] *= r * dc[j];
            }
            qp.ineq_offsets[i] *= r;
            s.row_ineq[i] *= r;
        }
        for i in 0..m_eq {
            let r = dr_eq[i];
            for j in 0..n {
                qp.eq_normals[(i, j)] *= r * dc[j];
            }
            qp.eq_offsets[i] *= r;
            s.row_eq[i] *= r;
        }
        for i in 0..n {
            for j in 0..n {
                qp.hessian[(i, j)] *= dc[i] * dc[j];
            }
        }
        for j in 0..n {
            qp.linear[j] *= dc[j];
            s.col[j] *= dc[j];
        }
    }

    // Cost normalization.
    let p_scale = qp.hessian.amax();
    let q_scale = qp.linear.amax();
    let c = p_scale.max(q_scale);
    if c > 1e-12 {
        let inv = 1.0 / c;
        qp.hessian *= inv;
        qp.linear *= inv;
        s.cost = inv;
    }
    s
}
