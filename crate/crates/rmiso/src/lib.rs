//! Incremental surrogate minimization for weighted finite-sum objectives
//! under recurrent (not necessarily i.i.d. or Markovian) data sampling.
//!
//! The solver maintains one majorizing first-order surrogate per component
//! and at each step refreshes the surrogate of the sampled index, then
//! minimizes the weighted average of all surrogates plus a regularizer:
//! either a proximal term `(rho_n / 2) ||theta - theta_prev||^2` (constant
//! or staleness-adaptive `rho_n`) or a hard trust-region restriction to a
//! ball of diminishing radius `r_n`.
//!
//! Crate layout:
//! - [`sampling`]: recurrent index sequences (i.i.d., random walk, cyclic,
//!   reshuffling), visit bookkeeping, and estimation of the recurrence
//!   constants (hitting / target / cover times).
//! - [`surrogate`]: first-order surrogate families (prox-linear, proximal,
//!   difference-of-convex, variational) and the incrementally maintained
//!   averaged surrogate.
//! - [`inner`]: projections, an L1-regularized nonnegative least-squares
//!   kernel, and the per-step inner minimizers (proximal and trust-region).
//! - [`solver`]: the outer iteration loop, per-step diagnostics, and
//!   run-level invariant accounting.
//! - [`problems`]: concrete objectives (distributed matrix factorization,
//!   logistic regression with a nonconvex regularizer, synthetic quadratics)
//!   plus data loaders.
//! - [`checks`]: the batch verification suite run by `rmiso check` and the
//!   acceptance tests.

pub mod checks;
pub mod diff;
pub mod error;
pub mod graph;
pub mod inner;
pub mod point;
pub mod problems;
pub mod sampling;
pub mod snapshot;
pub mod solver;
pub mod surrogate;

pub use error::{Error, Result};
pub use point::ParameterPoint;
