//! Numerical tolerances shared by every module and by the acceptance suite.

/// Default structural tolerance (trace, hermiticity, positivity of states).
pub const STRUCTURAL: f64 = 1e-10;
/// Relative tolerance used when comparing operators entrywise (scaled by the norm).
pub const COMPARISON_REL: f64 = 1e-12;
/// Hermiticity check for operators flagged hermitian, relative to the operator norm.
pub const HERMITIAN_REL: f64 = 1e-12;
/// Eigenvalue degeneracy / eigenspace membership tolerance.
pub const EIGENSPACE: f64 = 1e-9;
/// Maximum population allowed in the top two levels of a truncated oscillator.
pub const LEAKAGE: f64 = 1e-6;
/// Weight below which a mixture component is dropped when building Kraus operators.
pub const NEGLIGIBLE_WEIGHT: f64 = 1e-15;
/// Trace drift accepted per collision during long evolutions.
pub const TRACE_DRIFT_PER_STEP: f64 = 1e-12;
/// Relative residual above which an extrapolated limit is reported as not established.
pub const EXTRAPOLATION_REL: f64 = 1e-3;
/// Log-log slope below which a τ-sequence is flagged as divergent (∝ τ^slope).
pub const DIVERGENCE_SLOPE: f64 = -0.5;
/// Default number of moments checked by the regime classifier.
pub const DEFAULT_K_MAX: usize = 6;
