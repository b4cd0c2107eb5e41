//! H-representation polytopes `{z | A z <= b}` and the LP-backed set queries
//! the rest of the crate builds on.
//!
//! Rows are normalized to unit Euclidean norm on construction so that all
//! tolerances are scale-free. Zero rows are kept: a zero row with nonnegative
//! offset is vacuous, a zero row with negative offset makes the set empty
//! (which `is_empty` reports through the feasibility LP).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::{self, Feasibility, LinearProgram, SolveStatus};

/// Default feasibility / containment tolerance on normalized rows.
pub const DEFAULT_TOL: f64 = 1e-7;
/// Vertex deduplication distance (infinity norm).
pub const VERTEX_DEDUP_TOL: f64 = 1e-6;
/// Dimension guard for vertex enumeration.
pub const DEFAULT_DIM_GUARD: usize = 12;
/// Guard on the number of candidate active sets during vertex enumeration.
const COMBINATION_GUARD: u128 = 20_000_000;

#[derive(Debug, Error)]
pub enum PolytopeError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operation on an empty polytope")]
    EmptySet,
    #[error("set is unbounded: {0}")]
    UnboundedSet(String),
    #[error("capacity exceeded: {0}")]
    CapacityExceeded(String),
    #[error("invalid polytope data: {0}")]
    InvalidData(String),
    #[error("LP backend failure: {0}")]
    Backend(#[from] solver::SolverError),
    #[error("LP backend returned status {0:?}")]
    BackendStatus(SolveStatus),
}

/// Convex polytope in H-representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolytopeJson", into = "PolytopeJson")]
pub struct Polytope {
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
    dim: usize,
}

impl Polytope {
    /// Build from rows `normals[i] . z <= offsets[i]`, normalizing each
    /// nonzero row to unit Euclidean norm.
    pub fn from_rows(normals: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self, PolytopeError> {
        if normals.nrows() != offsets.len() {
            return Err(PolytopeError::InvalidData(format!(
                "{} rows vs {} offsets",
                normals.nrows(),
                offsets.len()
            )));
        }
        let dim = normals.ncols();
        if dim == 0 {
            return Err(PolytopeError::InvalidData("dimension must be >= 1".into()));
        }
        if normals.iter().any(|v| !v.is_finite()) || offsets.iter().any(|v| !v.is_finite()) {
            return Err(PolytopeError::InvalidData("non-finite entry".into()));
        }
        let mut normals = normals;
        let mut offsets = offsets;
        for i in 0..normals.nrows() {
            let norm = normals.row(i).norm();
            if norm > 1e-14 {
                for j in 0..dim {
                    normals[(i, j)] /= norm;
                }
                offsets[i] /= norm;
            }
        }
        Ok(Self { normals, offsets, dim })
    }

    /// Axis-aligned box `lower <= z <= upper`.
    pub fn from_box(lower: &[f64], upper: &[f64]) -> Result<Self, PolytopeError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(PolytopeError::InvalidData("box bounds".into()));
        }
        let dim = lower.len();
        let mut normals = DMatrix::zeros(2 * dim, dim);
        let mut offsets = DVector::zeros(2 * dim);
        for j in 0..dim {
            normals[(2 * j, j)] = 1.0;
            offsets[2 * j] = upper[j];
            normals[(2 * j + 1, j)] = -1.0;
            offsets[2 * j + 1] = -lower[j];
        }
        Self::from_rows(normals, offsets)
    }

    /// The whole space (no rows).
    pub fn universe(dim: usize) -> Result<Self, PolytopeError> {
        Self::from_rows(DMatrix::zeros(0, dim.max(1)), DVector::zeros(0))
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.normals.nrows()
    }

    /// Concatenate the rows of two polytopes over the same space.
    pub fn intersection(&self, other: &Polytope) -> Result<Polytope, PolytopeError> {
        self.check_dim(other.dim)?;
        let m = self.num_rows() + other.num_rows();
        let mut normals = DMatrix::zeros(m, self.dim);
        let mut offsets = DVector::zeros(m);
        normals
            .view_mut((0, 0), (self.num_rows(), self.dim))
            .copy_from(&self.normals);
        normals
            .view_mut((self.num_rows(), 0), (other.num_rows(), self.dim))
            .copy_from(&other.normals);
        offsets.rows_mut(0, self.num_rows()).copy_from(&self.offsets);
        offsets
            .rows_mut(self.num_rows(), other.num_rows())
            .copy_from(&other.offsets);
        Self::from_rows(normals, offsets)
    }

    fn check_dim(&self, got: usize) -> Result<(), PolytopeError> {
        if got != self.dim {
            return Err(PolytopeError::DimensionMismatch {
                expected: self.dim,
                got,
            });
        }
        Ok(())
    }

    /// Rowwise membership test at tolerance `tol` (rows are normalized, so the
    /// tolerance is a Euclidean distance scale).
    pub fn contains_point(&self, z: &DVector<f64>, tol: f64) -> Result<bool, PolytopeError> {
        self.check_dim(z.len())?;
        if tol < 0.0 {
            return Err(PolytopeError::InvalidData("negative tolerance".into()));
        }
        for i in 0..self.num_rows() {
            if self.normals.row(i).transpose().dot(z) > self.offsets[i] + tol {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Largest violation of any row at `z` (negative strictly inside).
    pub fn max_violation(&self, z: &DVector<f64>) -> Result<f64, PolytopeError> {
        self.check_dim(z.len())?;
        let mut worst = f64::NEG_INFINITY;
        for i in 0..self.num_rows() {
            worst = worst.max(self.normals.row(i).transpose().dot(z) - self.offsets[i]);
        }
        Ok(worst)
    }

    /// True iff the feasibility LP certifies the row system infeasible.
    pub fn is_empty(&self, tol: f64) -> Result<bool, PolytopeError> {
        if self.num_rows() == 0 {
            return Ok(false);
        }
        match solver::solve_feasibility(&self.normals, &self.offsets, tol)? {
            Feasibility::Feasible(_) => Ok(false),
            Feasibility::Infeasible(_) => Ok(true),
        }
    }

    /// A point satisfying all rows (the phase-I witness).
    pub fn feasible_point(&self, tol: f64) -> Result<DVector<f64>, PolytopeError> {
        if self.num_rows() == 0 {
            return Ok(DVector::zeros(self.dim));
        }
        match solver::solve_feasibility(&self.normals, &self.offsets, tol)? {
            Feasibility::Feasible(z) => Ok(z),
            Feasibility::Infeasible(_) => Err(PolytopeError::EmptySet),
        }
    }

    /// Support function `max_{z in P} direction . z`.
    pub fn support(&self, direction: &DVector<f64>) -> Result<f64, PolytopeError> {
        self.check_dim(direction.len())?;
        if self.num_rows() == 0 {
            if direction.amax() == 0.0 {
                return Ok(0.0);
            }
            return Err(PolytopeError::UnboundedSet("support over universe".into()));
        }
        let lp = LinearProgram::new(-direction, self.normals.clone(), self.offsets.clone());
        let res = solver::solve_lp(&lp, solver::DEFAULT_TOL)?;
        match res.status {
            SolveStatus::Optimal => Ok(-res.objective),
            SolveStatus::Unbounded => Err(PolytopeError::UnboundedSet(format!(
                "support in direction {:?}",
                direction.as_slice()
            ))),
            SolveStatus::Infeasible => Err(PolytopeError::EmptySet),
            SolveStatus::MaxIterations => Err(PolytopeError::BackendStatus(res.status)),
        }
    }

    /// True iff `self` is contained in `other` at tolerance `tol`
    /// (one support LP per row of `other`). An empty set is a subset of
    /// everything; an unbounded support LP means "not a subset".
    pub fn is_subset(&self, other: &Polytope, tol: f64) -> Result<bool, PolytopeError> {
        self.check_dim(other.dim)?;
        if self.is_empty(tol)? {
            return Ok(true);
        }
        for i in 0..other.num_rows() {
            let dir: DVector<f64> = other.normals.row(i).transpose();
            match self.support(&dir) {
                Ok(value) => {
                    if value > other.offsets[i] + tol {
                        return Ok(false);
                    }
                }
                Err(PolytopeError::UnboundedSet(_)) => return Ok(false),
                Err(e) => return Err(e),
            }
        }
        Ok(true)
    }

    /// True iff every coordinate direction has a finite support value.
    pub fn is_bounded(&self) -> Result<bool, PolytopeError> {
        for j in 0..self.dim {
            for sign in [1.0, -1.0] {
                let mut dir = DVector::zeros(self.dim);
                dir[j] = sign;
                match self.support(&dir) {
                    Ok(_) => {}
                    Err(PolytopeError::UnboundedSet(_)) => return Ok(false),
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(true)
    }

    /// All vertices of a bounded, nonempty polytope of small dimension.
    ///
    /// Candidates are intersections of `dim` active rows; each candidate must
    /// satisfy every row. Vertices closer than [`VERTEX_DEDUP_TOL`] in the
    /// infinity norm are merged.
    pub fn enumerate_vertices(&self) -> Result<Vec<DVector<f64>>, PolytopeError> {
        self.enumerate_vertices_guarded(DEFAULT_DIM_GUARD)
    }

    pub fn enumerate_vertices_guarded(
        &self,
        dim_guard: usize,
    ) -> Result<Vec<DVector<f64>>, PolytopeError> {
        let d = self.dim;
        let m = self.num_rows();
        if d > dim_guard {
            return Err(PolytopeError::CapacityExceeded(format!(
                "dimension {d} above vertex-enumeration guard {dim_guard}"
            )));
        }
        if self.is_empty(DEFAULT_TOL)? {
            return Err(PolytopeError::EmptySet);
        }
        if !self.is_bounded()? {
            return Err(PolytopeError::UnboundedSet("vertex enumeration".into()));
        }
        let combos = binomial(m as u128, d as u128);
        if combos > COMBINATION_GUARD {
            return Err(PolytopeError::CapacityExceeded(format!(
                "C({m},{d}) = {combos} candidate active sets"
            )));
        }

        let mut vertices: Vec<DVector<f64>> = Vec::new();
        if m < d {
            return Ok(vertices);
        }
        let mut idx: Vec<usize> = (0..d).collect();
        loop {
            // Solve the d x d active system.
            let mut a = DMatrix::zeros(d, d);
            let mut b = DVector::zeros(d);
            for (r, &i) in idx.iter().enumerate() {
                a.row_mut(r).copy_from(&self.normals.row(i));
                b[r] = self.offsets[i];
            }
            let lu = a.full_piv_lu();
            let max_piv = lu.u().diagonal().amax();
            let min_piv = lu
                .u()
                .diagonal()
                .iter()
                .fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
            if max_piv > 0.0 && min_piv > 1e-10 * max_piv {
                if let Some(candidate) = lu.solve(&b) {
                    if self.contains_point(&candidate, DEFAULT_TOL)? {
                        let dup = vertices
                            .iter()
                            .any(|v| (v - &candidate).amax() < VERTEX_DEDUP_TOL);
                        if !dup {
                            vertices.push(candidate);
                        }
                    }
                }
            }
            // Next combination in lexicographic order.
            let mut k = d;
            loop {
                if k == 0 {
                    return Ok(vertices);
                }
                k -= 1;
                if idx[k] != k + m - d {
                    idx[k] += 1;
                    for j in k + 1..d {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    /// Center and radius of the largest inscribed ball (Chebyshev LP).
    ///
    /// Degenerate (lower-dimensional) polytopes return radius zero. An
    /// unbounded inscribed radius is reported as an error.
    pub fn chebyshev_ball(&self) -> Result<(DVector<f64>, f64), PolytopeError> {
        let d = self.dim;
        let m = self.num_rows();
        if m == 0 {
            return Err(PolytopeError::UnboundedSet("chebyshev radius".into()));
        }
        // Variables (c, r): max r  s.t.  a_i'c + ||a_i|| r <= b_i,  r >= 0.
        let mut g = DMatrix::zeros(m + 1, d + 1);
        let mut h = DVector::zeros(m + 1);
        for i in 0..m {
            for j in 0..d {
                g[(i, j)] = self.normals[(i, j)];
            }
            g[(i, d)] = self.normals.row(i).norm();
            h[i] = self.offsets[i];
        }
        g[(m, d)] = -1.0;
        h[m] = 0.0;
        let mut obj = DVector::zeros(d + 1);
        obj[d] = -1.0;
        let lp = LinearProgram::new(obj, g, h);
        let res = solver::solve_lp(&lp, solver::DEFAULT_TOL)?;
        match res.status {
            SolveStatus::Optimal => {
                let center = res.primal.rows(0, d).into_owned();
                Ok((center, res.primal[d].max(0.0)))
            }
            SolveStatus::Infeasible => Err(PolytopeError::EmptySet),
            SolveStatus::Unbounded => Err(PolytopeError::UnboundedSet("chebyshev radius".into())),
            SolveStatus::MaxIterations => Err(PolytopeError::BackendStatus(res.status)),
        }
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

// ---------------------------------------------------------------------------
// JSON form: {"normals": [[...], ...], "offsets": [...]}
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct PolytopeJson {
    normals: Vec<Vec<f64>>,
    offsets: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
}

impl TryFrom<PolytopeJson> for Polytope {
    type Error = PolytopeError;

    fn try_from(j: PolytopeJson) -> Result<Self, Self::Error> {
        let rows = j.normals.len();
        if rows != j.offsets.len() {
            return Err(PolytopeError::InvalidData(
                "normals and offsets length differ".into(),
            ));
        }
        let dim = match (rows, j.dim) {
            (0, Some(d)) => d,
            (0, None) => {
                return Err(PolytopeError::InvalidData(
                    "empty row list needs an explicit dim".into(),
                ))
            }
            (_, d) => {
                let inferred = j.normals[0].len();
                if let Some(d) = d {
                    if d != inferred {
                        return Err(PolytopeError::InvalidData("dim field mismatch".into()));
                    }
                }
                inferred
            }
        };
        let mut normals = DMatrix::zeros(rows, dim);
        for (i, row) in j.normals.iter().enumerate() {
            if row.len() != dim {
                return Err(PolytopeError::InvalidData(format!(
                    "row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            for (jj, v) in row.iter().enumerate() {
                normals[(i, jj)] = *v;
            }
        }
        let offsets = DVector::from_vec(j.offsets);
        Polytope::from_rows(normals, offsets)
    }
}

impl From<Polytope> for PolytopeJson {
    fn from(p: Polytope) -> Self {
        let normals = (0..p.normals.nrows())
            .map(|i| p.normals.row(i).iter().cloned().collect())
            .collect();
        PolytopeJson {
            normals,
            offsets: p.offsets.iter().cloned().collect(),
            dim: Some(p.dim),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(lo: f64, hi: f64) -> Polytope {
        Polytope::from_box(&[lo], &[hi]).unwrap()
    }

    #[test]
    fn contains_point_interval() {
        let p = interval(-1.0, 1.0);
        assert!(p.contains_point(&DVector::from_vec(vec![0.0]), 0.0).unwrap());
        assert!(!p.contains_point(&DVector::from_vec(vec![1.5]), 0.0).unwrap());
    }

    #[test]
    fn contains_point_dimension_mismatch() {
        let p = interval(-1.0, 1.0);
        let err = p
            .contains_point(&DVector::from_vec(vec![0.0, 0.0]), 0.0)
            .unwrap_err();
        assert!(matches!(err, PolytopeError::DimensionMismatch { .. }));
    }

    #[test]
    fn empty_and_nonempty() {
        // z <= 0 and z >= 1 contradict.
        let p = Polytope::from_rows(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![0.0, -1.0]),
        )
        .unwrap();
        assert!(p.is_empty(1e-9).unwrap());

        let q = Polytope::from_rows(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        assert!(!q.is_empty(1e-9).unwrap());
    }

    #[test]
    fn subset_intervals() {
        let small = interval(-1.0, 1.0);
        let big = interval(-2.0, 2.0);
        assert!(small.is_subset(&big, 1e-9).unwrap());
        assert!(!big.is_subset(&small, 1e-9).unwrap());
    }

    #[test]
    fn empty_is_subset_of_everything() {
        let empty = Polytope::from_rows(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![0.0, -1.0]),
        )
        .unwrap();
        let q = interval(-0.1, 0.1);
        assert!(empty.is_subset(&q, 1e-9).unwrap());
    }

    #[test]
    fn support_interval() {
        let p = interval(-1.0, 1.0);
        let up = p.support(&DVector::from_vec(vec![1.0])).unwrap();
        let down = p.support(&DVector::from_vec(vec![-2.0])).unwrap();
        assert!((up - 1.0).abs() < 1e-7);
        assert!((down - 2.0).abs() < 1e-7);
    }

    #[test]
    fn support_unbounded() {
        // Only z <= 1: unbounded below.
        let p = Polytope::from_rows(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        let err = p.support(&DVector::from_vec(vec![-1.0])).unwrap_err();
        assert!(matches!(err, PolytopeError::UnboundedSet(_)));
    }

    #[test]
    fn support_unit_box_diagonal() {
        // Enumerating the 4 corners gives max of (1,1).v = 2.
        let p = Polytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let s = p.support(&DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!((s - 2.0).abs() < 1e-7);
    }

    #[test]
    fn vertices_interval_and_box() {
        let p = interval(-1.0, 1.0);
        let mut vs: Vec<f64> = p.enumerate_vertices().unwrap().iter().map(|v| v[0]).collect();
        vs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(vs.len(), 2);
        assert!((vs[0] + 1.0).abs() < 1e-9 && (vs[1] - 1.0).abs() < 1e-9);

        let b = Polytope::from_box(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        let vs = b.enumerate_vertices().unwrap();
        assert_eq!(vs.len(), 4);
        for v in &vs {
            assert!(b.contains_point(v, 10.0 * VERTEX_DEDUP_TOL).unwrap());
        }
    }

    #[test]
    fn vertices_reject_unbounded() {
        let p = Polytope::from_rows(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        assert!(matches!(
            p.enumerate_vertices().unwrap_err(),
            PolytopeError::UnboundedSet(_)
        ));
    }

    #[test]
    fn vertices_reject_large_dimension() {
        let p = Polytope::from_box(&[0.0; 13], &[1.0; 13]).unwrap();
        assert!(matches!(
            p.enumerate_vertices().unwrap_err(),
            PolytopeError::CapacityExceeded(_)
        ));
    }

    #[test]
    fn chebyshev_interval() {
        let p = interval(-1.0, 1.0);
        let (c, r) = p.chebyshev_ball().unwrap();
        assert!(c[0].abs() < 1e-7);
        assert!((r - 1.0).abs() < 1e-7);
    }

    #[test]
    fn chebyshev_triangle() {
        // z1 >= 0, z2 >= 0, z1 + z2 <= 1: inscribed radius 1/(2 + sqrt(2)).
        let p = Polytope::from_rows(
            DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
        )
        .unwrap();
        let (_, r) = p.chebyshev_ball().unwrap();
        let expected = 1.0 / (2.0 + 2.0f64.sqrt());
        assert!((r - expected).abs() < 1e-7, "r = {r}, expected {expected}");
    }

    #[test]
    fn chebyshev_degenerate_zero_radius() {
        // The segment {0} x [0,1] has empty interior.
        let p = Polytope::from_rows(
            DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]),
        )
        .unwrap();
        let (_, r) = p.chebyshev_ball().unwrap();
        assert!(r.abs() < 1e-7);
    }

    #[test]
    fn chebyshev_empty_reports_empty_set() {
        let p = Polytope::from_rows(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![0.0, -1.0]),
        )
        .unwrap();
        assert!(matches!(
            p.chebyshev_ball().unwrap_err(),
            PolytopeError::EmptySet
        ));
    }

    #[test]
    fn json_round_trip() {
        let p = Polytope::from_box(&[-1.0, 0.0], &[2.0, 3.0]).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        let q: Polytope = serde_json::from_str(&text).unwrap();
        assert!(p.is_subset(&q, 1e-9).unwrap() && q.is_subset(&p, 1e-9).unwrap());
    }
}
