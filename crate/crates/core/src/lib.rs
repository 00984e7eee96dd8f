//! Exact symbol-error analysis and power allocation for two-hop
//! decode-and-forward relay networks over Rayleigh fading.
//!
//! The source broadcasts an M-PSK symbol; each relay that decodes it
//! correctly retransmits on an orthogonal channel, and the destination
//! maximum-ratio combines whatever it heard. Only the channel *statistics*
//! (link variances) are assumed known, so every quantity here is an average
//! over the fading.
//!
//! What the crate provides, by module:
//!
//! * [`model`] — network description, derived per-branch statistics
//!   (`b`, `c`, `beta` families), decode probabilities.
//! * [`sep`] — the exact average SEP as a single finite integral
//!   ([`sep::sep_quadrature`]) and in closed form
//!   ([`sep::sep_closed_form`]), plus its gradient and Hessian in the relay
//!   powers.
//! * [`allocator`] — SEP-minimizing power allocation under a beta-weighted
//!   budget and per-relay caps: a barrier interior-point solver on the exact
//!   objective, a closed-form approximate solver, and baselines.
//! * [`montecarlo`] — semi-analytic and symbol-level simulators that
//!   validate the analysis, reproducible bit-for-bit from their seed.
//! * [`quad`] — the adaptive Gauss-Kronrod engine the analytic paths are
//!   built on.
//!
//! ```
//! use relay_sep::model::{derive_stats, NetworkConfig};
//! use relay_sep::sep::{sep_closed_form, PowerVector};
//!
//! let net = NetworkConfig {
//!     n_relays: 2,
//!     constellation_size: 4,
//!     source_power: 1.0,
//!     noise_power: 1.0,
//!     var_source_dest: 1.0,
//!     var_source_relay: vec![4.0, 2.0],
//!     var_relay_dest: vec![2.0, 1.0],
//! };
//! let stats = derive_stats(&net).unwrap();
//! let p = PowerVector::new(vec![0.6, 0.4]).unwrap();
//! let sep = sep_closed_form(&stats, &p).unwrap();
//! assert!(sep.value > 0.0 && sep.value < 0.75);
//! ```

pub mod allocator;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod quad;
pub mod sep;

pub use allocator::{
    allocate_approx, allocate_equal, allocate_exact, check_feasibility, AllocationResult,
    Constraints, Feasibility, SolverConfig, SolverKind,
};
pub use error::{Error, Result};
pub use model::{derive_stats, ChannelStats, Geometry, NetworkConfig};
pub use montecarlo::{estimate_sep, Estimator, TrialPlan};
pub use sep::{
    conditional_sep, sep_closed_form, sep_gradient, sep_hessian, sep_quadrature, PowerVector,
    SepEstimate, SepMethod,
};
