//! Pinned numerical tolerances.
//!
//! Every tolerance used by type invariants and verification checks lives
//! here, so that tests and library code agree on the same numbers.

/// Hermiticity tolerance: max entrywise |A - A^dag|.
pub const TOL_HERM: f64 = 1e-12;

/// Trace-one tolerance for density matrices.
pub const TOL_TRACE: f64 = 1e-12;

/// Eigenvalue floor for the positive-semidefinite check; tolerates round-off.
pub const PSD_FLOOR: f64 = -1e-10;

/// Relaxed eigenvalue floor for reference-trajectory samples, which carry
/// integrator round-off on top of construction round-off.
pub const PSD_FLOOR_REFERENCE: f64 = -1e-8;

/// Coordinate-chart round trips must be exact to this level.
pub const TOL_COORDS: f64 = 1e-14;

/// Unitarity requirement |U^dag U - I| for matrix exponentials.
pub const TOL_UNITARY: f64 = 1e-12;

/// Unitarity requirement for stored reference-trajectory step unitaries.
pub const TOL_UNITARY_REFERENCE: f64 = 1e-11;

/// Hermiticity/trace tolerance for raw integrator output.
pub const TOL_THETA: f64 = 1e-10;

/// Conservation allowance for open-loop samples: trace, Hermiticity, and
/// purity may drift this much over the longest propagation chains.
pub const TOL_CONSERVATION: f64 = 1e-11;

/// Eigendecomposition convergence: off-diagonal residual relative to |H|.
pub const TOL_EIG_OFFDIAG: f64 = 1e-13;

/// Target accuracy of the reference trajectory, validated by Richardson
/// comparison against a half-resolution run.
pub const TOL_REF: f64 = 1e-9;

/// Slope fits ignore data within this factor of `TOL_REF` (noise floor).
pub const NOISE_FLOOR_FACTOR: f64 = 10.0;

/// Quadrature self-consistency for the method-independent limit integral.
pub const TOL_QUADRATURE: f64 = 1e-6;

/// Residual allowance for the propagator-derivative identity check
/// (limited by the second-order propagator construction).
pub const TOL_IDENTITY_PROPAGATOR: f64 = 1e-5;

/// Residual allowance for the algebraic chain-rule identity check.
pub const TOL_IDENTITY_CHAIN_RULE: f64 = 1e-8;

/// Per-step tolerance for the Lyapunov value being nonincreasing along the
/// closed-loop flow.
pub const TOL_EVIDENCE_V_STEP: f64 = 1e-9;

/// Allowance for the populations of the invariant basis states, which stay
/// at zero in exact arithmetic.
pub const TOL_EVIDENCE_POPULATION: f64 = 1e-9;

/// Allowance for off-support matrix entries along the closed-loop flow.
pub const TOL_EVIDENCE_SUPPORT: f64 = 1e-8;

/// Purity drift allowance for the closed-loop trace.
pub const TOL_EVIDENCE_PURITY: f64 = 1e-9;

/// Below this norm the limit integral is treated as numerically zero and the
/// first-order-rate statement carries no content.
pub const VACUOUS_L_NORM: f64 = 1e-8;
