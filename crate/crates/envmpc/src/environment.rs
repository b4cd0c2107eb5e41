//! Environment dynamics `o+ = T o + S v`, per-step polytopic prediction data,
//! and the disturbance-parameterized set of admissible environment
//! trajectories.
//!
//! Trajectories are parameterized by their explicit input sequence: a stacked
//! input `v` is admissible when every block lies in its input set and every
//! induced state `o_i = T^i o(k) + sum_j T^(i-j-1) S v_j` satisfies its state
//! set. This avoids inverting `S` or representing image sets, and is exact
//! because trajectories are only ever produced forward from inputs.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::polytope::{Polytope, PolytopeError};

/// Membership tolerance used by the environment validators.
pub const ENV_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("inconsistent prediction: {0}")]
    InconsistentPrediction(String),
    #[error("empty admissible-trajectory set: {0}")]
    InfeasibleEnvironment(String),
    #[error("invalid prediction data: {0}")]
    InvalidPrediction(String),
    #[error("sampler exhausted after {0} attempts")]
    SamplingExhausted(usize),
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
}

/// Known linear environment dynamics. No stability requirement.
#[derive(Debug, Clone)]
pub struct EnvModel {
    t_mat: DMatrix<f64>,
    s_mat: DMatrix<f64>,
}

impl EnvModel {
    pub fn new(t_mat: DMatrix<f64>, s_mat: DMatrix<f64>) -> Result<Self, EnvError> {
        if t_mat.nrows() != t_mat.ncols() {
            return Err(EnvError::DimensionMismatch("T must be square".into()));
        }
        if s_mat.nrows() != t_mat.nrows() {
            return Err(EnvError::DimensionMismatch(
                "S row count must match T".into(),
            ));
        }
        if t_mat.nrows() == 0 || s_mat.ncols() == 0 {
            return Err(EnvError::DimensionMismatch(
                "environment dimensions must be positive".into(),
            ));
        }
        Ok(Self { t_mat, s_mat })
    }

    pub fn state_dim(&self) -> usize {
        self.t_mat.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.s_mat.ncols()
    }

    pub fn t_mat(&self) -> &DMatrix<f64> {
        &self.t_mat
    }

    pub fn s_mat(&self) -> &DMatrix<f64> {
        &self.s_mat
    }

    /// One step of `o+ = T o + S v`.
    pub fn propagate(&self, o: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>, EnvError> {
        if o.len() != self.state_dim() || v.len() != self.input_dim() {
            return Err(EnvError::DimensionMismatch(format!(
                "propagate: o has {} (need {}), v has {} (need {})",
                o.len(),
                self.state_dim(),
                v.len(),
                self.input_dim()
            )));
        }
        Ok(&self.t_mat * o + &self.s_mat * v)
    }
}

/// Per-time prediction data: input sets `V_0..V_{N-1}`, state sets
/// `O_0..O_N`, the measured environment state, and the uniform input bound.
#[derive(Debug, Clone)]
pub struct EnvPrediction {
    pub k: usize,
    pub o_now: DVector<f64>,
    input_sets: Vec<Polytope>,
    state_sets: Vec<Polytope>,
    v_bar: f64,
}

impl EnvPrediction {
    pub fn new(
        k: usize,
        o_now: DVector<f64>,
        input_sets: Vec<Polytope>,
        state_sets: Vec<Polytope>,
    ) -> Result<Self, EnvError> {
        if input_sets.is_empty() || state_sets.len() != input_sets.len() + 1 {
            return Err(EnvError::InvalidPrediction(format!(
                "need N >= 1 input sets and N+1 state sets, got {} and {}",
                input_sets.len(),
                state_sets.len()
            )));
        }
        let n_o = o_now.len();
        let m_o = input_sets[0].dim();
        let mut v_bar = 0.0f64;
        for (i, v_set) in input_sets.iter().enumerate() {
            if v_set.dim() != m_o {
                return Err(EnvError::DimensionMismatch(format!("input set {i}")));
            }
            if v_set.is_empty(ENV_TOL)? {
                return Err(EnvError::InvalidPrediction(format!("input set {i} empty")));
            }
            // The uniform bound is the largest infinity norm over the set,
            // obtained from supports in +/- coordinate directions. This also
            // checks boundedness.
            for j in 0..m_o {
                for sign in [1.0, -1.0] {
                    let mut dir = DVector::zeros(m_o);
                    dir[j] = sign;
                    match v_set.support(&dir) {
                        Ok(s) => v_bar = v_bar.max(s),
                        Err(PolytopeError::UnboundedSet(_)) => {
                            return Err(EnvError::InvalidPrediction(format!(
                                "input set {i} unbounded"
                            )))
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
            }
        }
        for (i, o_set) in state_sets.iter().enumerate() {
            if o_set.dim() != n_o {
                return Err(EnvError::DimensionMismatch(format!("state set {i}")));
            }
            if o_set.is_empty(ENV_TOL)? {
                return Err(EnvError::InvalidPrediction(format!("state set {i} empty")));
            }
        }
        if !state_sets[0].contains_point(&o_now, ENV_TOL)? {
            return Err(EnvError::InconsistentPrediction(
                "measured environment state outside its 0-step prediction set".into(),
            ));
        }
        Ok(Self {
            k,
            o_now,
            input_sets,
            state_sets,
            v_bar,
        })
    }

    pub fn horizon(&self) -> usize {
        self.input_sets.len()
    }

    pub fn input_set(&self, i: usize) -> &Polytope {
        &self.input_sets[i]
    }

    pub fn state_set(&self, i: usize) -> &Polytope {
        &self.state_sets[i]
    }

    pub fn input_sets(&self) -> &[Polytope] {
        &self.input_sets
    }

    pub fn state_sets(&self) -> &[Polytope] {
        &self.state_sets
    }

    pub fn v_bar(&self) -> f64 {
        self.v_bar
    }
}

/// The admissible environment trajectories over the horizon, parameterized by
/// the stacked input vector.
#[derive(Debug, Clone)]
pub struct TrajectorySet {
    /// Stacked powers of T: row block i is `T^i` ((N+1) n_o x n_o).
    pub base_map: DMatrix<f64>,
    /// Block lower-triangular input response: block (i, j) = `T^(i-j-1) S`.
    pub input_map: DMatrix<f64>,
    /// All stacked inputs consistent with the prediction data.
    pub disturbance_polytope: Polytope,
    pub o_now: DVector<f64>,
    pub n_o: usize,
    pub m_o: usize,
    pub horizon: usize,
}

impl TrajectorySet {
    /// The stacked state sequence induced by a stacked input.
    pub fn o_stacked(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.base_map * &self.o_now + &self.input_map * v
    }
}

/// Build the trajectory set of a prediction under the given dynamics.
///
/// The step-0 state rows are checked eagerly; a violation is an inconsistency
/// between the measurement and the prediction. An empty stacked-input
/// polytope is surfaced as an error, never hidden.
pub fn build_trajectory_set(
    model: &EnvModel,
    pred: &EnvPrediction,
) -> Result<TrajectorySet, EnvError> {
    let n_o = model.state_dim();
    let m_o = model.input_dim();
    if pred.o_now.len() != n_o {
        return Err(EnvError::DimensionMismatch("prediction state dim".into()));
    }
    if pred.input_set(0).dim() != m_o {
        return Err(EnvError::DimensionMismatch("prediction input dim".into()));
    }
    let n = pred.horizon();

    if !pred.state_set(0).contains_point(&pred.o_now, ENV_TOL)? {
        return Err(EnvError::InconsistentPrediction(
            "o(k) violates the 0-step state set".into(),
        ));
    }

    // Powers of T and the stacked maps.
    let mut powers: Vec<DMatrix<f64>> = Vec::with_capacity(n + 1);
    powers.push(DMatrix::identity(n_o, n_o));
    for i in 1..=n {
        let next = &powers[i - 1] * model.t_mat();
        powers.push(next);
    }
    let mut base_map = DMatrix::zeros((n + 1) * n_o, n_o);
    for (i, p) in powers.iter().enumerate() {
        base_map.view_mut((i * n_o, 0), (n_o, n_o)).copy_from(p);
    }
    let mut input_map = DMatrix::zeros((n + 1) * n_o, n * m_o);
    for i in 1..=n {
        for j in 0..i {
            let block = &powers[i - j - 1] * model.s_mat();
            input_map
                .view_mut((i * n_o, j * m_o), (n_o, m_o))
                .copy_from(&block);
        }
    }

    // Rows over the stacked input: every input block in its set, every
    // induced state (i >= 1) in its set.
    let total_rows: usize = pred.input_sets().iter().map(|p| p.num_rows()).sum::<usize>()
        + (1..=n).map(|i| pred.state_set(i).num_rows()).sum::<usize>();
    let dim_v = n * m_o;
    let mut normals = DMatrix::zeros(total_rows, dim_v);
    let mut offsets = DVector::zeros(total_rows);
    let mut at = 0;
    for (i, v_set) in pred.input_sets().iter().enumerate() {
        let rows = v_set.num_rows();
        normals
            .view_mut((at, i * m_o), (rows, m_o))
            .copy_from(v_set.normals());
        offsets.rows_mut(at, rows).copy_from(v_set.offsets());
        at += rows;
    }
    for i in 1..=n {
        let o_set = pred.state_set(i);
        let rows = o_set.num_rows();
        let response = input_map.view((i * n_o, 0), (n_o, dim_v));
        let mapped = o_set.normals() * response;
        let drift = o_set.normals() * (&powers[i] * &pred.o_now);
        normals.view_mut((at, 0), (rows, dim_v)).copy_from(&mapped);
        for r in 0..rows {
            offsets[at + r] = o_set.offsets()[r] - drift[r];
        }
        at += rows;
    }

    let disturbance_polytope = Polytope::from_rows(normals, offsets)?;
    if disturbance_polytope.is_empty(ENV_TOL)? {
        return Err(EnvError::InfeasibleEnvironment(format!(
            "no admissible trajectory at k = {}",
            pred.k
        )));
    }

    Ok(TrajectorySet {
        base_map,
        input_map,
        disturbance_polytope,
        o_now: pred.o_now.clone(),
        n_o,
        m_o,
        horizon: n,
    })
}

/// Per-index report of the prediction-shrinking conditions between two
/// consecutive predictions.
#[derive(Debug, Clone)]
pub struct ShrinkReport {
    /// (i, holds) for the input-set inclusions, i in [1, N-1].
    pub input_checks: Vec<(usize, bool)>,
    /// (i, holds) for the state-set inclusions, i in [1, N].
    pub state_checks: Vec<(usize, bool)>,
    pub all_ok: bool,
}

impl ShrinkReport {
    pub fn first_violation(&self) -> Option<String> {
        for (i, ok) in &self.input_checks {
            if !ok {
                return Some(format!("input-set inclusion fails at index {i}"));
            }
        }
        for (i, ok) in &self.state_checks {
            if !ok {
                return Some(format!("state-set inclusion fails at index {i}"));
            }
        }
        None
    }
}

/// Check that the prediction at time k+1 has shrunk into the prediction at
/// time k: `V_{i-1|k+1} <= V_{i|k}` and `O_{i-1|k+1} <= O_{i|k}`.
pub fn check_shrinking(
    pred_k: &EnvPrediction,
    pred_k1: &EnvPrediction,
    tol: f64,
) -> Result<ShrinkReport, EnvError> {
    if pred_k1.k != pred_k.k + 1 {
        return Err(EnvError::InvalidPrediction(format!(
            "predictions are at times {} and {}, expected consecutive",
            pred_k.k, pred_k1.k
        )));
    }
    let n = pred_k.horizon();
    if pred_k1.horizon() != n {
        return Err(EnvError::InvalidPrediction("horizon mismatch".into()));
    }
    let mut input_checks = Vec::with_capacity(n.saturating_sub(1));
    for i in 1..n {
        let ok = pred_k1.input_set(i - 1).is_subset(pred_k.input_set(i), tol)?;
        input_checks.push((i, ok));
    }
    let mut state_checks = Vec::with_capacity(n);
    for i in 1..=n {
        let ok = pred_k1.state_set(i - 1).is_subset(pred_k.state_set(i), tol)?;
        state_checks.push((i, ok));
    }
    let all_ok = input_checks.iter().all(|(_, ok)| *ok) && state_checks.iter().all(|(_, ok)| *ok);
    Ok(ShrinkReport {
        input_checks,
        state_checks,
        all_ok,
    })
}

/// Membership test behind the shrinking-prediction containment property: the
/// time-k trajectory set extended by `o_f` must contain every admissible
/// (k+1)-sequence prefixed with the measured state `o(k)`.
#[allow(clippy::too_many_arguments)]
pub fn contains_shifted_sequence(
    pred_k: &EnvPrediction,
    o_k: &DVector<f64>,
    v_k: &DVector<f64>,
    o_seq_k1: &[DVector<f64>],
    v_seq_k1: &[DVector<f64>],
    o_f: &Polytope,
    tol: f64,
) -> Result<bool, EnvError> {
    let n = pred_k.horizon();
    if o_seq_k1.len() != n + 1 || v_seq_k1.len() != n {
        return Err(EnvError::DimensionMismatch("sequence lengths".into()));
    }
    if !pred_k.state_set(0).contains_point(o_k, tol)? {
        return Ok(false);
    }
    if !pred_k.input_set(0).contains_point(v_k, tol)? {
        return Ok(false);
    }
    for i in 1..=n {
        if !pred_k.state_set(i).contains_point(&o_seq_k1[i - 1], tol)? {
            return Ok(false);
        }
    }
    for i in 1..n {
        if !pred_k.input_set(i).contains_point(&v_seq_k1[i - 1], tol)? {
            return Ok(false);
        }
    }
    o_f.contains_point(&o_seq_k1[n], tol).map_err(Into::into)
}

/// Draw one admissible trajectory, strictly inside the stacked-input polytope,
/// by hit-and-run from the Chebyshev center. Deterministic for a fixed seed.
pub fn sample_trajectory(
    model: &EnvModel,
    tset: &TrajectorySet,
    seed: u64,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>), EnvError> {
    let v = sample_stacked_input(tset, seed)?;
    let v_seq: Vec<DVector<f64>> = (0..tset.horizon)
        .map(|i| v.rows(i * tset.m_o, tset.m_o).into_owned())
        .collect();
    let mut o_seq = Vec::with_capacity(tset.horizon + 1);
    o_seq.push(tset.o_now.clone());
    for v_i in &v_seq {
        let next = model.propagate(o_seq.last().unwrap(), v_i)?;
        o_seq.push(next);
    }
    Ok((o_seq, v_seq))
}

/// Hit-and-run sample of the stacked-input polytope.
pub fn sample_stacked_input(tset: &TrajectorySet, seed: u64) -> Result<DVector<f64>, EnvError> {
    let poly = &tset.disturbance_polytope;
    let (center, radius) = poly.chebyshev_ball()?;
    if radius <= 1e-12 {
        // Degenerate set: the center is the only safe sample.
        if poly.contains_point(&center, 1e-9)? {
            return Ok(center);
        }
        return Err(EnvError::SamplingExhausted(0));
    }
    let margin = (radius * 1e-3).min(1e-7);
    let dim = poly.dim();
    let normals = poly.normals();
    let offsets = poly.offsets();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = center;
    let steps = 16 + 4 * dim;
    let budget = 40 * steps;
    let mut attempts = 0;
    let mut done = 0;
    while done < steps {
        attempts += 1;
        if attempts > budget {
            return Err(EnvError::SamplingExhausted(budget));
        }
        let dir = random_direction(&mut rng, dim);
        // Chord of the margin-shrunk polytope through x along dir.
        let mut t_lo = f64::NEG_INFINITY;
        let mut t_hi = f64::INFINITY;
        let ax = normals * &x;
        let ad = normals * &dir;
        for r in 0..poly.num_rows() {
            let slack = offsets[r] - margin - ax[r];
            if ad[r] > 1e-14 {
                t_hi = t_hi.min(slack / ad[r]);
            } else if ad[r] < -1e-14 {
                t_lo = t_lo.max(slack / ad[r]);
            } else if slack < 0.0 {
                t_hi = -1.0;
                t_lo = 1.0;
            }
        }
        if !(t_lo <= 0.0 && 0.0 <= t_hi) || t_hi - t_lo <= 1e-14 || !t_lo.is_finite() || !t_hi.is_finite() {
            continue;
        }
        let t = t_lo + rng.gen::<f64>() * (t_hi - t_lo);
        x += dir * t;
        done += 1;
    }
    Ok(x)
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    // Box-Muller standard normals, normalized.
    loop {
        let mut d = DVector::zeros(dim);
        let mut i = 0;
        while i < dim {
            let u1: f64 = rng.gen::<f64>().max(1e-300);
            let u2: f64 = rng.gen();
            let r = (-2.0 * u1.ln()).sqrt();
            d[i] = r * (2.0 * std::f64::consts::PI * u2).cos();
            i += 1;
            if i < dim {
                d[i] = r * (2.0 * std::f64::consts::PI * u2).sin();
                i += 1;
            }
        }
        let norm = d.norm();
        if norm > 1e-12 {
            return d / norm;
        }
    }
}

/// How the prediction data evolves with time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftRule {
    /// `V_{i|k} = V_i` and `O_{i|k} = O_i` for every k.
    Constant,
    /// `O_{i|k+1} = O_{i+1|k}` with a terminal refill set; input sets shift
    /// the same way and hold their last entry.
    Shift,
}

/// Generates the prediction at each time step from the k = 0 data.
#[derive(Debug, Clone)]
pub struct PredictionFamily {
    pub input_sets: Vec<Polytope>,
    pub state_sets: Vec<Polytope>,
    pub rule: ShiftRule,
    pub terminal_refill: Option<Polytope>,
}

impl PredictionFamily {
    pub fn new(
        input_sets: Vec<Polytope>,
        state_sets: Vec<Polytope>,
        rule: ShiftRule,
        terminal_refill: Option<Polytope>,
    ) -> Result<Self, EnvError> {
        if input_sets.is_empty() || state_sets.len() != input_sets.len() + 1 {
            return Err(EnvError::InvalidPrediction(
                "need N input sets and N+1 state sets".into(),
            ));
        }
        if rule == ShiftRule::Shift && terminal_refill.is_none() {
            return Err(EnvError::InvalidPrediction(
                "shift rule requires a terminal refill set".into(),
            ));
        }
        Ok(Self {
            input_sets,
            state_sets,
            rule,
            terminal_refill,
        })
    }

    pub fn horizon(&self) -> usize {
        self.input_sets.len()
    }

    /// Prediction data at time `k` for the measured state `o_now`.
    pub fn prediction_at(&self, k: usize, o_now: DVector<f64>) -> Result<EnvPrediction, EnvError> {
        let n = self.horizon();
        match self.rule {
            ShiftRule::Constant => EnvPrediction::new(
                k,
                o_now,
                self.input_sets.clone(),
                self.state_sets.clone(),
            ),
            ShiftRule::Shift => {
                let refill = self.terminal_refill.as_ref().expect("validated");
                let input_sets = (0..n)
                    .map(|i| self.input_sets[(i + k).min(n - 1)].clone())
                    .collect();
                let state_sets = (0..=n)
                    .map(|i| {
                        if i + k <= n {
                            self.state_sets[i + k].clone()
                        } else {
                            refill.clone()
                        }
                    })
                    .collect();
                EnvPrediction::new(k, o_now, input_sets, state_sets)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_model(t: f64, s: f64) -> EnvModel {
        EnvModel::new(
            DMatrix::from_row_slice(1, 1, &[t]),
            DMatrix::from_row_slice(1, 1, &[s]),
        )
        .unwrap()
    }

    fn interval(lo: f64, hi: f64) -> Polytope {
        Polytope::from_box(&[lo], &[hi]).unwrap()
    }

    #[test]
    fn propagate_identity_and_scalar() {
        let frozen = scalar_model(1.0, 0.0);
        let o = DVector::from_vec(vec![3.0]);
        let v = DVector::from_vec(vec![7.0]);
        assert_eq!(frozen.propagate(&o, &v).unwrap()[0], 3.0);

        let m = scalar_model(2.0, 1.0);
        let o = DVector::from_vec(vec![1.0]);
        let v = DVector::from_vec(vec![3.0]);
        assert_eq!(m.propagate(&o, &v).unwrap()[0], 5.0);
    }

    #[test]
    fn propagate_dimension_mismatch() {
        let m = scalar_model(1.0, 1.0);
        let err = m
            .propagate(&DVector::zeros(2), &DVector::zeros(1))
            .unwrap_err();
        assert!(matches!(err, EnvError::DimensionMismatch(_)));
    }

    #[test]
    fn trajectory_set_state_cap_tightens_inputs() {
        // T = 1, S = 1, V_0 = [-1, 1], O_0 = O_1 = [-10, 10], o = 9.5:
        // the stacked-input set is exactly [-1, 0.5].
        let m = scalar_model(1.0, 1.0);
        let pred = EnvPrediction::new(
            0,
            DVector::from_vec(vec![9.5]),
            vec![interval(-1.0, 1.0)],
            vec![interval(-10.0, 10.0), interval(-10.0, 10.0)],
        )
        .unwrap();
        let tset = build_trajectory_set(&m, &pred).unwrap();
        let expected = interval(-1.0, 0.5);
        assert!(tset
            .disturbance_polytope
            .is_subset(&expected, 1e-9)
            .unwrap());
        assert!(expected
            .is_subset(&tset.disturbance_polytope, 1e-9)
            .unwrap());
    }

    #[test]
    fn trajectory_set_rejects_inconsistent_measurement() {
        let err = EnvPrediction::new(
            0,
            DVector::from_vec(vec![11.0]),
            vec![interval(-1.0, 1.0)],
            vec![interval(-10.0, 10.0), interval(-10.0, 10.0)],
        )
        .unwrap_err();
        assert!(matches!(err, EnvError::InconsistentPrediction(_)));
    }

    #[test]
    fn trajectory_set_surfaces_emptiness() {
        // One step cannot move o = 0 into O_1 = [9, 10] with |v| <= 1.
        let m = scalar_model(1.0, 1.0);
        let pred = EnvPrediction::new(
            0,
            DVector::zeros(1),
            vec![interval(-1.0, 1.0)],
            vec![interval(-10.0, 10.0), interval(9.0, 10.0)],
        )
        .unwrap();
        assert!(matches!(
            build_trajectory_set(&m, &pred).unwrap_err(),
            EnvError::InfeasibleEnvironment(_)
        ));
    }

    #[test]
    fn inert_inputs_yield_power_trajectory() {
        // S = 0: the only trajectory is o, T o, T^2 o regardless of v.
        let m = scalar_model(0.5, 0.0);
        let pred = EnvPrediction::new(
            0,
            DVector::from_vec(vec![4.0]),
            vec![interval(-1.0, 1.0), interval(-1.0, 1.0)],
            vec![
                interval(-10.0, 10.0),
                interval(-10.0, 10.0),
                interval(-10.0, 10.0),
            ],
        )
        .unwrap();
        let tset = build_trajectory_set(&m, &pred).unwrap();
        let (o_seq, _) = sample_trajectory(&m, &tset, 7).unwrap();
        assert!((o_seq[0][0] - 4.0).abs() < 1e-12);
        assert!((o_seq[1][0] - 2.0).abs() < 1e-12);
        assert!((o_seq[2][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_deterministic_and_admissible() {
        let m = scalar_model(1.0, 1.0);
        let pred = EnvPrediction::new(
            0,
            DVector::from_vec(vec![0.0]),
            vec![interval(-1.0, 1.0), interval(-1.0, 1.0)],
            vec![
                interval(-5.0, 5.0),
                interval(-1.5, 1.5),
                interval(-2.0, 2.0),
            ],
        )
        .unwrap();
        let tset = build_trajectory_set(&m, &pred).unwrap();
        for seed in 0..20 {
            let (o_seq, v_seq) = sample_trajectory(&m, &tset, seed).unwrap();
            for (i, v) in v_seq.iter().enumerate() {
                assert!(pred.input_set(i).contains_point(v, 1e-9).unwrap());
            }
            for (i, o) in o_seq.iter().enumerate() {
                assert!(pred.state_set(i).contains_point(o, 1e-9).unwrap());
            }
            // Exact reconstruction.
            for i in 1..o_seq.len() {
                let re = m.propagate(&o_seq[i - 1], &v_seq[i - 1]).unwrap();
                assert!((&re - &o_seq[i]).amax() <= 1e-12);
            }
        }
        let (a, _) = sample_trajectory(&m, &tset, 42).unwrap();
        let (b, _) = sample_trajectory(&m, &tset, 42).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn shrinking_constant_sets_pass() {
        let v = interval(-1.0, 1.0);
        let o = interval(-10.0, 10.0);
        let p0 = EnvPrediction::new(
            0,
            DVector::zeros(1),
            vec![v.clone(), v.clone()],
            vec![o.clone(), o.clone(), o.clone()],
        )
        .unwrap();
        let p1 = EnvPrediction::new(
            1,
            DVector::zeros(1),
            vec![v.clone(), v.clone()],
            vec![o.clone(), o.clone(), o.clone()],
        )
        .unwrap();
        let rep = check_shrinking(&p0, &p1, 1e-9).unwrap();
        assert!(rep.all_ok);
    }

    #[test]
    fn shrinking_flags_violating_index() {
        let v = interval(-1.0, 1.0);
        let o_small = interval(-1.0, 1.0);
        let o_big = interval(-2.0, 2.0);
        let p0 = EnvPrediction::new(
            0,
            DVector::zeros(1),
            vec![v.clone(), v.clone()],
            vec![o_big.clone(), o_small.clone(), o_big.clone()],
        )
        .unwrap();
        // O_{0|1} = big is not inside O_{1|0} = small.
        let p1 = EnvPrediction::new(
            1,
            DVector::zeros(1),
            vec![v.clone(), v.clone()],
            vec![o_big.clone(), o_big.clone(), o_big.clone()],
        )
        .unwrap();
        let rep = check_shrinking(&p0, &p1, 1e-9).unwrap();
        assert!(!rep.all_ok);
        assert_eq!(rep.state_checks[0], (1, false));
        assert!(rep.first_violation().unwrap().contains("index 1"));
    }

    #[test]
    fn shift_family_reproduces_shift_identity() {
        let v = interval(-1.0, 1.0);
        let sets: Vec<Polytope> = (0..=3)
            .map(|i| interval(-10.0 - i as f64, 10.0 + i as f64))
            .collect();
        let refill = interval(-0.5, 0.5);
        let fam = PredictionFamily::new(
            vec![v.clone(), v.clone(), v.clone()],
            sets.clone(),
            ShiftRule::Shift,
            Some(refill.clone()),
        )
        .unwrap();
        let p0 = fam.prediction_at(0, DVector::zeros(1)).unwrap();
        let p1 = fam.prediction_at(1, DVector::zeros(1)).unwrap();
        // O_{i|1} = O_{i+1|0} for i where both are defined.
        for i in 0..3 {
            assert!(p1.state_set(i).is_subset(p0.state_set(i + 1), 1e-9).unwrap());
            assert!(p0.state_set(i + 1).is_subset(p1.state_set(i), 1e-9).unwrap());
        }
        let rep = check_shrinking(&p0, &p1, 1e-9).unwrap();
        assert!(rep.all_ok, "{:?}", rep.first_violation());
    }
}
