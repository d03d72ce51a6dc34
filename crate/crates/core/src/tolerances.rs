//! Numeric tolerances shared across modules and the verification suite.
//!
//! Every inequality the crate checks carries a pinned slack chosen for the
//! scale it runs at. Exact linear-algebra identities get slacks near machine
//! epsilon times the operation count; statistical checks get slacks derived
//! from their sampling error. Tests must reference these constants instead
//! of restating literals.

/// Default relative mass left outside the truncated uniformization series.
pub const UNIFORMIZATION_TAIL: f64 = 1e-12;

/// Hard cap on uniformization series terms before giving up.
pub const UNIFORMIZATION_MAX_TERMS: usize = 1_000_000;

/// Kernel rows must sum to one within this (series deficit included).
pub const KERNEL_ROW_SUM: f64 = 1e-10;

/// Kernel entries this far below zero are a construction error; entries in
/// `[-KERNEL_ENTRY_FLOOR, 0)` are clamped to zero.
pub const KERNEL_ENTRY_FLOOR: f64 = 1e-14;

/// `P_{t+s}` versus `P_t P_s`, entrywise.
pub const SEMIGROUP_LAW: f64 = 1e-9;

/// `pi P_t = pi`, entrywise.
pub const STATIONARITY: f64 = 1e-10;

/// Residual of the global balance equations for a stationary distribution.
pub const BALANCE_RESIDUAL: f64 = 1e-12;

/// Relative slack on semigroup contraction inequalities (Lipschitz norms,
/// Wasserstein distances, carre du champ commutation).
pub const CONTRACTION_SLACK: f64 = 1e-9;

/// Pointwise floor for the curvature gap of the iterated carre du champ.
pub const GAMMA2_FLOOR: f64 = -1e-12;

/// Agreement between the CDF form of W1 and the exhaustive coupling oracle.
pub const W1_AGREEMENT: f64 = 1e-9;

/// The duality gap of W1 against sampled 1-Lipschitz functions is
/// nonnegative up to rounding.
pub const DUAL_GAP_FLOOR: f64 = -1e-12;

/// Criterion values sit below empirical curvature estimates by at most this.
pub const SANDWICH_SLACK: f64 = 1e-9;

/// Slack on the covariance inequality (exact semigroup on both sides).
pub const COVARIANCE_SLACK: f64 = 1e-9;

/// Probability vectors fed to W1 must be normalized within this.
pub const NORMALIZATION: f64 = 1e-10;

/// Relative tolerance of the adaptive quadrature inside the optimized
/// tail bound.
pub const QUADRATURE_REL: f64 = 1e-8;

/// Absolute tolerance of the Clopper-Pearson bisection.
pub const CLOPPER_PEARSON_TOL: f64 = 1e-10;

/// Monte Carlo refuses truncated chains leaking more tail mass than this.
pub const TAIL_MASS_GUARD: f64 = 1e-6;

/// Tail mass above this on a truncated chain logs a warning diagnostic.
pub const TAIL_MASS_WARN: f64 = 1e-8;

/// A tail point whose analytic bound is below `UNTESTED_FACTOR / n_paths`
/// cannot be resolved by simulation and is reported as untested.
pub const UNTESTED_FACTOR: f64 = 10.0;

/// Slack on bound-versus-bound dominance checks (quadrature error included).
pub const BOUND_DOMINANCE_SLACK: f64 = 1e-9;

/// Bounds that coincide analytically must agree to this.
pub const BOUND_COINCIDENCE: f64 = 1e-12;

/// Relative agreement of the moment growth rate's small-multiplier slope
/// with its closed form.
pub const GROWTH_SLOPE_REL: f64 = 1e-6;

/// Absolute agreement of the two sides of the queue shift identity when the
/// test functions stay clear of the reflecting boundary.
pub const SHIFT_IDENTITY_ABS: f64 = 1e-6;

/// The forward-difference commutation with the generator at interior states.
pub const COMMUTATION_ABS: f64 = 1e-12;

/// Relative gap allowed between the finite-n fluid bound exponent and its
/// Gaussian limit exponent at n = 10^4.
pub const FLUID_EXPONENT_REL: f64 = 0.05;

/// Additive slack allowed when a Monte Carlo confidence bound is compared
/// against the Gaussian limit bound.
pub const FLUID_MC_SLACK: f64 = 0.01;

/// Exponents below this return a flat zero instead of a denormal.
pub const UNDERFLOW_EXPONENT: f64 = -708.0;
