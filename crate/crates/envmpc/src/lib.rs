//! Disturbance-feedback model predictive control for linear systems whose
//! state constraints are driven by an uncertain, linearly evolving environment.
//!
//! The crate is organized around six subsystems:
//!
//! * [`polytope`] — H-representation polytopes and the LP-backed set queries
//!   (membership, emptiness, containment, support, vertex enumeration,
//!   Chebyshev ball) used everywhere else.
//! * [`solver`] — dense interior-point LP/QP solving with status and
//!   certificate contracts, plus a structure-exploiting path for the robust
//!   counterpart QPs produced by dualization.
//! * [`environment`] — environment dynamics, per-step prediction sets, and the
//!   disturbance-parameterized set of admissible environment trajectories.
//! * [`dfmpc`] — stacked predictions, the environment-feedback policy
//!   parameterization, duality-based robust counterparts, terminal-ingredient
//!   synthesis, and the receding-horizon solve.
//! * [`verifier`] — executable certificates: shifted-candidate construction and
//!   feasibility verification, the feedback-gain bound, descent monitoring,
//!   and the cross-parameterization equivalence check.
//! * [`sim`] — scenario files, closed-loop simulation, and trace emission.

pub mod dfmpc;
pub mod environment;
pub mod polytope;
pub mod sim;
pub mod solver;
pub mod verifier;

pub use polytope::Polytope;
