//! End-to-end symbol error probability of the relay network.
//!
//! With statistical channel knowledge the destination's average SEP has two
//! equivalent exact forms, and this module implements both plus the
//! derivatives the allocator needs:
//!
//! * [`sep_quadrature`] — a single finite-angle integral of a product, one
//!   factor per branch; always applicable.
//! * [`sep_closed_form`] — the same quantity after partial fractions, a finite
//!   sum of elementary terms; requires the per-branch products `b_i p_i` to be
//!   pairwise distinct and silently falls back to quadrature when they
//!   (nearly) collide.
//! * [`sep_gradient`] / [`sep_hessian`] — exact first and second derivatives
//!   in the relay powers, as integrals sharing the quadrature engine. The
//!   Hessian is positive semidefinite on the feasible set, which is what makes
//!   the exact allocation a convex problem.
//!
//! The decode success probabilities `beta` enter every factor as a mixture
//! weight: a relay that decodes wrong stays silent, so its branch contributes
//! either a faded signal (probability `beta_i`) or nothing (`1 - beta_i`).

use crate::error::{Error, Result};
use crate::model::{self, ChannelStats};
use crate::quad;
use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Relative spacing of `b_i p_i` values below which the partial-fraction sum
/// is numerically untrustworthy and [`sep_closed_form`] falls back to
/// quadrature.
pub const COLLISION_REL_TOL: f64 = 1e-9;

/// Relay transmit powers `p_1 .. p_N`, validated nonnegative and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerVector(Vec<f64>);

impl PowerVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        for (i, &x) in p.iter().enumerate() {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(Error::Config(format!(
                    "relay power {} must be nonnegative and finite, got {x}",
                    i + 1
                )));
            }
        }
        Ok(PowerVector(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for PowerVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// How a [`SepEstimate`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SepMethod {
    Quadrature,
    ClosedForm,
    /// Closed form was requested but a `b_i p_i` collision forced quadrature.
    ClosedFormFallback,
    MonteCarlo,
}

impl SepMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SepMethod::Quadrature => "quadrature",
            SepMethod::ClosedForm => "closed_form",
            SepMethod::ClosedFormFallback => "closed_form_fallback",
            SepMethod::MonteCarlo => "monte_carlo",
        }
    }
}

/// A symbol error probability with its provenance. Deterministic evaluators
/// leave the statistical fields empty; Monte-Carlo fills them.
#[derive(Debug, Clone)]
pub struct SepEstimate {
    pub value: f64,
    pub method: SepMethod,
    pub std_error: Option<f64>,
    pub trials: Option<u64>,
}

impl SepEstimate {
    fn exact(value: f64, method: SepMethod) -> Self {
        SepEstimate { value, method, std_error: None, trials: None }
    }
}

fn check_lengths(stats: &ChannelStats, p: &PowerVector) -> Result<()> {
    if p.len() != stats.n_relays() {
        return Err(Error::Config(format!(
            "power vector has {} entries but the network has {} relays",
            p.len(),
            stats.n_relays()
        )));
    }
    Ok(())
}

/// The conditional-SEP product at angle `theta`: one mixture factor per
/// branch, the direct branch first. This is the integrand of
/// [`sep_quadrature`] (before the `1/pi` normalization).
pub fn sep_integrand(theta: f64, stats: &ChannelStats, p: &PowerVector) -> f64 {
    let s = theta.sin().powi(2);
    let x0 = stats.direct_product();
    // beta[0] = 1: the source always transmits, so the direct branch is a pure
    // fading factor rather than a mixture.
    let mut g = if x0 == 0.0 { 1.0 } else { s / (s + x0) };
    for i in 0..p.len() {
        let x = stats.b[i + 1] * p[i];
        let beta = stats.beta[i + 1];
        g *= if x == 0.0 { 1.0 } else { (1.0 - beta) + beta * s / (s + x) };
    }
    g
}

/// Exact average SEP by adaptive quadrature of the branch product.
pub fn sep_quadrature(stats: &ChannelStats, p: &PowerVector) -> Result<SepEstimate> {
    check_lengths(stats, p)?;
    let q = quad::integrate(
        |theta| sep_integrand(theta, stats, p),
        0.0,
        stats.theta_max(),
        quad::ABS_TOL,
    )?;
    Ok(SepEstimate::exact(q.value / PI, SepMethod::Quadrature))
}

/// Exact average SEP as a finite sum: one elementary term per branch with
/// nonzero `b_i p_i`, plus a constant tail. Requires those products to be
/// pairwise distinct; on a (near-)collision the result is computed by
/// [`sep_quadrature`] instead and tagged [`SepMethod::ClosedFormFallback`].
pub fn sep_closed_form(stats: &ChannelStats, p: &PowerVector) -> Result<SepEstimate> {
    check_lengths(stats, p)?;

    // Branch products; index 0 is the direct link. Zero-power branches drop
    // out of both the sum and the cross-products (their factor is exactly 1).
    let n = stats.n_relays();
    let mut x = Vec::with_capacity(n + 1);
    x.push(stats.direct_product());
    for i in 0..n {
        x.push(stats.b[i + 1] * p[i]);
    }
    let active: Vec<usize> = (0..=n).filter(|&i| x[i] > 0.0).collect();

    for (a, &i) in active.iter().enumerate() {
        for &j in &active[a + 1..] {
            if (x[i] - x[j]).abs() <= COLLISION_REL_TOL * x[i].max(x[j]) {
                let q = sep_quadrature(stats, p)?;
                return Ok(SepEstimate::exact(q.value, SepMethod::ClosedFormFallback));
            }
        }
    }

    let m = stats.constellation_size;
    let tail = f64::from(m - 1) / f64::from(m);
    let mut value = tail;
    for &i in &active {
        // Single-branch term, with the constant tail removed so that the tail
        // is counted exactly once overall.
        let term = model::rayleigh_branch_sep(x[i], m) - tail;
        let mut cross = 1.0;
        for &j in &active {
            if j != i {
                cross *= stats.beta[j] / (1.0 - x[j] / x[i]) + (1.0 - stats.beta[j]);
            }
        }
        value += stats.beta[i] * term * cross;
    }
    Ok(SepEstimate::exact(value, SepMethod::ClosedForm))
}

/// Log-derivative kernel of branch `i` at `s = sin^2 theta`: the factor's
/// derivative in `p_i` divided by the factor itself.
#[inline]
fn branch_log_derivative(s: f64, b: f64, beta: f64, x: f64) -> f64 {
    -beta * b * s / ((s + x) * (s + (1.0 - beta) * x))
}

/// Gradient of the average SEP in the relay powers. Component `i` is an
/// integral of the branch product times that branch's log-derivative; it is
/// identically zero for a zero-gain relay and strictly negative otherwise
/// (more relay power never hurts the average SEP).
///
/// Finite for every `p >= 0` when the direct link is present; without a
/// direct link the slope at `p_i = 0` is unbounded and the quadrature
/// reports non-convergence.
pub fn sep_gradient(stats: &ChannelStats, p: &PowerVector) -> Result<Vec<f64>> {
    check_lengths(stats, p)?;
    let mut grad = vec![0.0; p.len()];
    for i in 0..p.len() {
        let b = stats.b[i + 1];
        if b == 0.0 {
            continue;
        }
        let beta = stats.beta[i + 1];
        let x = b * p[i];
        let q = quad::integrate(
            |theta| {
                let s = theta.sin().powi(2);
                sep_integrand(theta, stats, p) * branch_log_derivative(s, b, beta, x)
            },
            0.0,
            stats.theta_max(),
            quad::ABS_TOL,
        )?;
        grad[i] = q.value / PI;
    }
    Ok(grad)
}

/// Hessian of the average SEP in the relay powers, exploiting the product
/// structure of the integrand: cross entries integrate the product of two
/// branch log-derivatives, diagonal entries the second log-derivative.
/// Symmetric by construction and positive semidefinite on `p > 0`.
pub fn sep_hessian(stats: &ChannelStats, p: &PowerVector) -> Result<DMatrix<f64>> {
    check_lengths(stats, p)?;
    let n = p.len();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let bi = stats.b[i + 1];
        if bi == 0.0 {
            continue;
        }
        let beta_i = stats.beta[i + 1];
        let xi = bi * p[i];

        // Diagonal: (d^2 factor / d p_i^2) / factor.
        let q = quad::integrate(
            |theta| {
                let s = theta.sin().powi(2);
                let second = 2.0 * beta_i * bi * bi * s
                    / ((s + xi) * (s + xi) * (s + (1.0 - beta_i) * xi));
                sep_integrand(theta, stats, p) * second
            },
            0.0,
            stats.theta_max(),
            quad::ABS_TOL,
        )?;
        h[(i, i)] = q.value / PI;

        for j in (i + 1)..n {
            let bj = stats.b[j + 1];
            if bj == 0.0 {
                continue;
            }
            let beta_j = stats.beta[j + 1];
            let xj = bj * p[j];
            let q = quad::integrate(
                |theta| {
                    let s = theta.sin().powi(2);
                    sep_integrand(theta, stats, p)
                        * branch_log_derivative(s, bi, beta_i, xi)
                        * branch_log_derivative(s, bj, beta_j, xj)
                },
                0.0,
                stats.theta_max(),
                quad::ABS_TOL,
            )?;
            let v = q.value / PI;
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

/// M-PSK symbol error probability at a *known* instantaneous SNR `gamma`
/// (the classic finite-angle exponential integral). This is the quantity the
/// destination experiences once all fading draws are fixed; the Monte-Carlo
/// estimators average it.
pub fn conditional_sep(gamma: f64, constellation_size: u32) -> Result<f64> {
    model::check_constellation(constellation_size)?;
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::Config(format!(
            "instantaneous SNR must be nonnegative and finite, got {gamma}"
        )));
    }
    let m = f64::from(constellation_size);
    if gamma == 0.0 {
        // Blind guessing among M symbols.
        return Ok((m - 1.0) / m);
    }
    let g = model::g_psk(constellation_size)?;
    let q = quad::integrate(
        |theta| (-g * gamma / theta.sin().powi(2)).exp(),
        0.0,
        model::theta_max(constellation_size),
        quad::ABS_TOL,
    )?;
    Ok(q.value / PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChannelStats;
    use approx::assert_relative_eq;

    fn stats_n0(m: u32, b0: f64, p0: f64) -> ChannelStats {
        ChannelStats::new(m, p0, vec![b0], vec![], vec![1.0]).unwrap()
    }

    #[test]
    fn integrand_is_one_when_all_products_vanish() {
        let stats =
            ChannelStats::new(4, 0.0, vec![1.0, 2.0], vec![3.0], vec![1.0, 0.5]).unwrap();
        let p = PowerVector::new(vec![0.0]).unwrap();
        for theta in [0.3, 1.1, 2.0] {
            assert_eq!(sep_integrand(theta, &stats, &p), 1.0);
        }
    }

    #[test]
    fn integrand_single_ideal_branch() {
        // One always-decoding relay with b p = 3, no direct link: at theta =
        // pi/2 the factor is 1 / (1 + 3).
        let stats = ChannelStats::new(4, 1.0, vec![0.0, 3.0], vec![1.0], vec![1.0, 1.0]).unwrap();
        let p = PowerVector::new(vec![1.0]).unwrap();
        assert_relative_eq!(
            sep_integrand(std::f64::consts::FRAC_PI_2, &stats, &p),
            0.25,
            epsilon = 1e-15
        );
    }

    #[test]
    fn integrand_matches_factor_by_factor_recomputation() {
        let stats = ChannelStats::new(
            8,
            0.7,
            vec![0.9, 2.0, 0.4],
            vec![1.0, 1.0],
            vec![1.0, 0.8, 0.4],
        )
        .unwrap();
        let p = PowerVector::new(vec![1.3, 0.2]).unwrap();
        for theta in [0.2f64, 0.9, 1.7, 2.6] {
            let s: f64 = theta.sin().powi(2);
            let expect = (s / (s + 0.9 * 0.7))
                * (0.2 + 0.8 * s / (s + 2.0 * 1.3))
                * (0.6 + 0.4 * s / (s + 0.4 * 0.2));
            assert_relative_eq!(sep_integrand(theta, &stats, &p), expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn quadrature_direct_link_bpsk_reference() {
        // Single Rayleigh branch at unit mean SNR: (1 - sqrt(1/2)) / 2.
        let stats = stats_n0(2, 1.0, 1.0);
        let p = PowerVector::new(vec![]).unwrap();
        let est = sep_quadrature(&stats, &p).unwrap();
        assert_relative_eq!(est.value, 0.5 * (1.0 - 0.5f64.sqrt()), epsilon = 1e-11);
        assert_eq!(est.method, SepMethod::Quadrature);
    }

    #[test]
    fn quadrature_zero_power_network_guesses_blind() {
        let stats =
            ChannelStats::new(4, 0.0, vec![0.0, 1.0, 2.0], vec![1.0, 1.0], vec![1.0, 0.5, 0.7])
                .unwrap();
        let p = PowerVector::new(vec![0.0, 0.0]).unwrap();
        let est = sep_quadrature(&stats, &p).unwrap();
        assert_relative_eq!(est.value, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_matches_quadrature_on_direct_link() {
        let stats = stats_n0(4, 1.0, 2.0);
        let p = PowerVector::new(vec![]).unwrap();
        let cf = sep_closed_form(&stats, &p).unwrap();
        let q = sep_quadrature(&stats, &p).unwrap();
        assert_eq!(cf.method, SepMethod::ClosedForm);
        assert!((cf.value - q.value).abs() < 1e-10, "{} vs {}", cf.value, q.value);
    }

    #[test]
    fn closed_form_zero_powers_is_blind_guessing() {
        let stats =
            ChannelStats::new(8, 0.0, vec![0.0, 1.0], vec![1.0], vec![1.0, 0.5]).unwrap();
        let p = PowerVector::new(vec![0.0]).unwrap();
        let cf = sep_closed_form(&stats, &p).unwrap();
        assert_relative_eq!(cf.value, 7.0 / 8.0, epsilon = 1e-12);
        assert_eq!(cf.method, SepMethod::ClosedForm);
    }

    #[test]
    fn collision_falls_back_to_quadrature() {
        // b_1 p_1 and b_2 p_2 collide exactly; the partial-fraction sum would
        // divide by zero, so quadrature must take over with the same value.
        let stats = ChannelStats::new(
            4,
            1.0,
            vec![0.5, 2.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, 0.8, 0.9],
        )
        .unwrap();
        let p = PowerVector::new(vec![1.0, 2.0]).unwrap();
        let cf = sep_closed_form(&stats, &p).unwrap();
        let q = sep_quadrature(&stats, &p).unwrap();
        assert_eq!(cf.method, SepMethod::ClosedFormFallback);
        assert_eq!(cf.value, q.value);
    }

    #[test]
    fn near_collision_also_falls_back() {
        let stats = ChannelStats::new(
            4,
            1.0,
            vec![0.5, 2.0, 2.0 * (1.0 + 1e-10)],
            vec![1.0, 1.0],
            vec![1.0, 0.8, 0.9],
        )
        .unwrap();
        let p = PowerVector::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(
            sep_closed_form(&stats, &p).unwrap().method,
            SepMethod::ClosedFormFallback
        );
    }

    #[test]
    fn gradient_is_nonpositive_and_zero_for_dead_relays() {
        let stats = ChannelStats::new(
            4,
            1.0,
            vec![1.0, 2.0, 0.0, 0.7],
            vec![1.0, 1.0, 1.0],
            vec![1.0, 0.8, 0.6, 0.9],
        )
        .unwrap();
        let p = PowerVector::new(vec![0.5, 3.0, 1.2]).unwrap();
        let grad = sep_gradient(&stats, &p).unwrap();
        assert!(grad[0] < 0.0);
        assert_eq!(grad[1], 0.0, "zero-gain relay must have a zero gradient component");
        assert!(grad[2] < 0.0);
    }

    #[test]
    fn gradient_finite_at_zero_power_with_direct_link() {
        let stats =
            ChannelStats::new(4, 1.0, vec![1.0, 2.0], vec![1.0], vec![1.0, 0.8]).unwrap();
        let p = PowerVector::new(vec![0.0]).unwrap();
        let grad = sep_gradient(&stats, &p).unwrap();
        assert!(grad[0].is_finite() && grad[0] < 0.0);
    }

    #[test]
    fn conditional_sep_endpoints() {
        assert_eq!(conditional_sep(0.0, 4).unwrap(), 0.75);
        assert!(conditional_sep(1e12, 4).unwrap() <= 1e-12);
        assert!(conditional_sep(-1.0, 4).is_err());
        assert!(conditional_sep(f64::INFINITY, 4).is_err());
    }

    #[test]
    fn conditional_sep_bpsk_is_q_function() {
        // For BPSK the integral equals Q(sqrt(2 gamma)) = erfc(sqrt(gamma))/2;
        // compare against a series-free erfc evaluation via the complementary
        // relation with a high-accuracy rational approximation is overkill
        // here, so use the symmetry point erfc(1)/2 from published tables.
        let got = conditional_sep(1.0, 2).unwrap();
        assert_relative_eq!(got, 0.078649603525143, epsilon = 1e-12);
    }

    #[test]
    fn power_vector_rejects_bad_entries() {
        assert!(PowerVector::new(vec![0.0, 1.0]).is_ok());
        assert!(PowerVector::new(vec![-1e-9]).is_err());
        assert!(PowerVector::new(vec![f64::NAN]).is_err());
        assert!(PowerVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let stats = stats_n0(4, 1.0, 1.0);
        let p = PowerVector::new(vec![1.0]).unwrap();
        assert!(sep_quadrature(&stats, &p).is_err());
        assert!(sep_closed_form(&stats, &p).is_err());
        assert!(sep_gradient(&stats, &p).is_err());
        assert!(sep_hessian(&stats, &p).is_err());
    }
}
