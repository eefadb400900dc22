//! Centralized numeric tolerances.
//!
//! Every threshold the crate uses for rank decisions, algebraic-identity
//! residuals, and certificate slack lives here, so the accuracy contract is
//! in one place rather than scattered as magic numbers.

/// Relative eigenvalue cutoff for pseudoinverses and rank decisions.
///
/// Eigenvalues below `REL_EIG_CUTOFF * lambda_max` are treated as exact
/// zeros. Instance generators cap the conditioning of the measures, so this
/// separates true kernels from rounding noise with a wide margin.
pub const REL_EIG_CUTOFF: f64 = 1e-12;

/// Residual allowed for algebraic identities checked at module level
/// (projection algebra, kernel normalization, exchange identities).
pub const IDENTITY: f64 = 1e-10;

/// Residual allowed in sweep-scale identity checks, where longer chains of
/// operations accumulate rounding.
pub const SWEEP: f64 = 1e-9;

/// Relative tolerance for exact mass aggregation along the tree.
pub const PARTITION: f64 = 1e-12;

/// Certificate slack rule: an inequality instance passes iff
/// `rhs - lhs >= -CERT_SLACK * max(1, rhs)`. The inequalities are theorems,
/// so anything beyond floating error indicates an implementation bug.
pub const CERT_SLACK: f64 = 1e-9;

/// Symmetry / positive-semidefiniteness tolerance for input matrices,
/// relative to `1 + lambda_max`.
pub const PSD_INPUT: f64 = 1e-10;
