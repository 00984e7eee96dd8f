use thiserror::Error;

/// Errors shared by every module in this crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Malformed input: bad constellation order, negative variance, length
    /// mismatch, out-of-range geometry, and similar contract violations.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The adaptive integrator ran out of subdivisions before reaching the
    /// requested absolute tolerance.
    #[error(
        "quadrature did not converge: requested abs tol {requested:e}, \
         achieved {achieved:e} after {subdivisions} subdivisions"
    )]
    Quadrature {
        requested: f64,
        achieved: f64,
        subdivisions: usize,
    },

    /// The beta-weighted per-relay caps cannot cover the required budget.
    #[error(
        "infeasible constraints: weighted cap budget {cap_budget:e} is below \
         the required relay power budget {p_r:e}"
    )]
    Infeasible { cap_budget: f64, p_r: f64 },

    /// The equal-power baseline would exceed a per-relay cap.
    #[error(
        "equal-power share {share:e} exceeds the cap {cap:e} of relay {relay}"
    )]
    CapViolation { relay: usize, share: f64, cap: f64 },

    /// An iterative solver (Newton centering, barrier loop, bisection) hit its
    /// iteration limit or a numerically singular system.
    #[error("solver did not converge: {0}")]
    Convergence(String),

    /// Structurally valid input on which the requested operation is
    /// meaningless (e.g. every relay-destination gain is zero).
    #[error("degenerate instance: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
