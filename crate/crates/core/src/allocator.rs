//! Relay power allocation under a shared average-power budget.
//!
//! The problem: choose relay powers `p` minimizing the exact average SEP
//! subject to the budget equality `sum_i beta_i p_i = p_R` (a relay only
//! spends power when it decodes, hence the `beta` weights) and per-relay caps
//! `0 <= p_i <= p_max_i`. Two solvers are provided:
//!
//! * [`allocate_exact`] — logarithmic-barrier interior-point method on the
//!   true SEP objective. Each centering step is an equality-constrained
//!   Newton iteration; the barrier parameter grows geometrically until the
//!   duality-gap estimate `N / t` drops below the configured `eps`.
//! * [`allocate_approx`] — the closed-form stationarity condition of a tight
//!   high-SNR surrogate, reduced to a single scalar ("water level") found by
//!   bisection. Orders of magnitude cheaper, asymptotically near-optimal, and
//!   exactly the classical water-filling when every `beta_i -> 1`.
//!
//! [`allocate_equal`] is the naive baseline both are measured against.

use crate::error::{Error, Result};
use crate::model::ChannelStats;
use crate::sep::{self, PowerVector, SepEstimate};
use nalgebra::{DMatrix, DVector};

/// Relative tolerance used to classify a budget that exactly exhausts the
/// beta-weighted caps.
const FEAS_REL_TOL: f64 = 1e-12;

/// Below this distance from 1, `beta_i` takes the water-filling limit branch
/// of [`waterfill_power`] (the general expression degrades to 0/0 there).
const BETA_ONE_TOL: f64 = 1e-9;

/// Bisection bracket floor and iteration cap for the approximate solver.
const NU_BRACKET_LO: f64 = 1e-12;
const MAX_BISECT: usize = 200;
/// Early bisection stop: the budget already matches this well relative to
/// `p_R`. Otherwise the bracket shrinks to adjacent floats (the budget can be
/// steep in the level, so no width-based stop is safe).
const BUDGET_REL_TOL: f64 = 1e-10;

/// Budget and box constraints of one allocation instance.
#[derive(Debug, Clone)]
pub struct Constraints {
    /// Required beta-weighted average relay power `p_R`, strictly positive.
    pub p_r: f64,
    /// Per-relay caps, strictly positive, one per relay.
    pub p_max: Vec<f64>,
}

impl Constraints {
    pub fn validate(&self, n_relays: usize) -> Result<()> {
        if !(self.p_r > 0.0) || !self.p_r.is_finite() {
            return Err(Error::Config(format!(
                "relay power budget must be positive and finite, got {}",
                self.p_r
            )));
        }
        if self.p_max.len() != n_relays {
            return Err(Error::Config(format!(
                "{} caps provided for {} relays",
                self.p_max.len(),
                n_relays
            )));
        }
        for (i, &cap) in self.p_max.iter().enumerate() {
            if !(cap > 0.0) || !cap.is_finite() {
                return Err(Error::Config(format!(
                    "cap of relay {} must be positive and finite, got {cap}",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of comparing the budget against the beta-weighted caps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    /// Strictly feasible: the caps leave slack, an interior point exists.
    Feasible,
    /// The budget exhausts the caps exactly; the only feasible point is all-caps.
    TrivialAllCaps,
    /// The caps cannot absorb the budget.
    Infeasible,
}

/// Knobs of the iterative solvers. [`Default`] holds the values used
/// throughout the test suite.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Initial barrier parameter `t_0`.
    pub t0: f64,
    /// Geometric growth factor of the barrier parameter.
    pub mu: f64,
    /// Outer stopping rule: terminate once `N / t < eps`.
    pub eps: f64,
    /// Newton stopping rule: terminate centering once `lambda^2 / 2` falls
    /// below this.
    pub newton_eps: f64,
    /// Armijo acceptance fraction of the predicted decrease.
    pub ls_alpha: f64,
    /// Backtracking shrink factor.
    pub ls_beta: f64,
    /// Cap on barrier (outer) iterations.
    pub max_outer: usize,
    /// Cap on Newton iterations per centering.
    pub max_newton: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            t0: 1.0,
            mu: 15.0,
            eps: 1e-8,
            newton_eps: 1e-10,
            ls_alpha: 0.25,
            ls_beta: 0.5,
            max_outer: 64,
            max_newton: 200,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.t0 > 0.0
            && self.mu > 1.0
            && self.eps > 0.0
            && self.newton_eps > 0.0
            && (0.0..0.5).contains(&self.ls_alpha)
            && self.ls_alpha > 0.0
            && (0.0..1.0).contains(&self.ls_beta)
            && self.ls_beta > 0.0
            && self.max_outer > 0
            && self.max_newton > 0;
        if !ok {
            return Err(Error::Config(
                "solver config out of range (need t0>0, mu>1, eps>0, newton_eps>0, \
                 0<ls_alpha<0.5, 0<ls_beta<1, positive iteration caps)"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Which routine produced an [`AllocationResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    ExactBarrier,
    ApproxClosedForm,
    EqualPower,
    TrivialAllCaps,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::ExactBarrier => "exact",
            SolverKind::ApproxClosedForm => "approx",
            SolverKind::EqualPower => "equal",
            SolverKind::TrivialAllCaps => "trivial",
        }
    }
}

/// A solved allocation together with its certificates.
#[derive(Debug, Clone)]
pub struct AllocationResult {
    pub p: PowerVector,
    pub solver: SolverKind,
    /// Water level `nu'` (approximate solver) or the recovered budget dual
    /// (exact solver); absent for the baselines.
    pub multiplier: Option<f64>,
    /// Achieved SEP, evaluated by the closed form (fallback-aware).
    pub sep: SepEstimate,
    /// Worst violation of the applicable optimality system; see
    /// [`kkt_residual`] for the exact solver's definition.
    pub kkt_residual: f64,
    /// Barrier duality-gap estimate `N / t` at termination (exact solver only).
    pub duality_gap: Option<f64>,
}

/// Classify an instance by comparing the beta-weighted caps against `p_R`.
pub fn check_feasibility(stats: &ChannelStats, cons: &Constraints) -> Result<Feasibility> {
    cons.validate(stats.n_relays())?;
    let cap_budget: f64 =
        cons.p_max.iter().zip(&stats.beta[1..]).map(|(&cap, &beta)| beta * cap).sum();
    let tol = FEAS_REL_TOL * cap_budget.max(cons.p_r);
    Ok(if (cap_budget - cons.p_r).abs() <= tol {
        Feasibility::TrivialAllCaps
    } else if cap_budget < cons.p_r {
        Feasibility::Infeasible
    } else {
        Feasibility::Feasible
    })
}

/// Power of one relay at water level `nu_prime`, from the approximate
/// stationarity condition, clamped into `[0, p_max_i]`.
///
/// Limits are taken explicitly: a zero-gain relay gets nothing, a level at or
/// above `b_i` shuts the relay off, `beta_i -> 1` reduces to water-filling
/// `1/nu' - 1/b_i`, and `nu' -> 0` saturates the cap.
pub fn waterfill_power(nu_prime: f64, b_i: f64, beta_i: f64, p_max_i: f64) -> f64 {
    if b_i <= 0.0 {
        return 0.0;
    }
    if nu_prime <= 0.0 {
        return p_max_i;
    }
    if nu_prime >= b_i {
        return 0.0;
    }
    let raw = if 1.0 - beta_i < BETA_ONE_TOL {
        1.0 / nu_prime - 1.0 / b_i
    } else {
        let one_minus = 1.0 - beta_i;
        let disc = beta_i * beta_i + 4.0 * one_minus * b_i / nu_prime;
        (disc.sqrt() - beta_i) / (2.0 * b_i * one_minus) - 1.0 / b_i
    };
    raw.clamp(0.0, p_max_i)
}

fn weighted_budget(stats: &ChannelStats, cons: &Constraints, nu_prime: f64) -> f64 {
    (0..stats.n_relays())
        .map(|i| {
            stats.beta[i + 1]
                * waterfill_power(nu_prime, stats.b[i + 1], stats.beta[i + 1], cons.p_max[i])
        })
        .sum()
}

fn trivial_result(stats: &ChannelStats, cons: &Constraints) -> Result<AllocationResult> {
    let p = PowerVector::new(cons.p_max.clone())?;
    let sep = sep::sep_closed_form(stats, &p)?;
    let kkt_residual = dual_fit_residual(stats, cons, &p)?;
    Ok(AllocationResult {
        p,
        solver: SolverKind::TrivialAllCaps,
        multiplier: None,
        sep,
        kkt_residual,
        duality_gap: None,
    })
}

/// Approximate allocation: bisect the water level until the beta-weighted
/// budget is met, then read every relay power off [`waterfill_power`].
///
/// The budget is continuous and nonincreasing in the water level, so plain
/// bisection is exact up to floating-point resolution. Instances whose entire
/// cap mass sits on zero-gain relays cannot meet the budget this way and are
/// reported as degenerate.
pub fn allocate_approx(
    stats: &ChannelStats,
    cons: &Constraints,
    _sc: &SolverConfig,
) -> Result<AllocationResult> {
    match check_feasibility(stats, cons)? {
        Feasibility::Infeasible => {
            return Err(Error::Infeasible {
                cap_budget: weighted_cap_budget(stats, cons),
                p_r: cons.p_r,
            })
        }
        Feasibility::TrivialAllCaps => return trivial_result(stats, cons),
        Feasibility::Feasible => {}
    }

    let max_b = stats.b[1..].iter().copied().fold(0.0f64, f64::max);
    if max_b <= 0.0 {
        return Err(Error::Degenerate(
            "every relay-destination gain is zero; the SEP does not depend on the relay powers"
                .into(),
        ));
    }

    let mut lo = NU_BRACKET_LO;
    let mut hi = max_b + 1.0;
    if weighted_budget(stats, cons, lo) < cons.p_r {
        // Possible only when zero-gain relays carry part of the cap budget:
        // the usable caps alone cannot absorb p_R.
        return Err(Error::Degenerate(format!(
            "caps on relays with nonzero gain absorb at most {:e}, below the budget {:e}",
            weighted_budget(stats, cons, lo),
            cons.p_r
        )));
    }

    // Invariant: budget(lo) >= p_r >= budget(hi). Keep the best level seen;
    // the loop ends early on a budget match or once lo and hi are adjacent
    // floats.
    let mut nu = lo;
    let mut best_miss = weighted_budget(stats, cons, lo) - cons.p_r;
    for _ in 0..MAX_BISECT {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let miss = weighted_budget(stats, cons, mid) - cons.p_r;
        if miss.abs() < best_miss.abs() {
            best_miss = miss;
            nu = mid;
        }
        if miss.abs() <= BUDGET_REL_TOL * cons.p_r {
            break;
        }
        if miss > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let p_vec: Vec<f64> = (0..stats.n_relays())
        .map(|i| waterfill_power(nu, stats.b[i + 1], stats.beta[i + 1], cons.p_max[i]))
        .collect();
    let achieved: f64 = p_vec.iter().zip(&stats.beta[1..]).map(|(&p, &beta)| beta * p).sum();
    if (achieved - cons.p_r).abs() > 1e-9 * cons.p_r {
        return Err(Error::Convergence(format!(
            "water-level bisection left a budget miss of {:e} (relative {:e})",
            achieved - cons.p_r,
            (achieved - cons.p_r).abs() / cons.p_r
        )));
    }

    let p = PowerVector::new(p_vec)?;
    let kkt_residual = approx_kkt_residual(stats, cons, &p, nu);
    let sep = sep::sep_closed_form(stats, &p)?;
    Ok(AllocationResult {
        p,
        solver: SolverKind::ApproxClosedForm,
        multiplier: Some(nu),
        sep,
        kkt_residual,
        duality_gap: None,
    })
}

fn weighted_cap_budget(stats: &ChannelStats, cons: &Constraints) -> f64 {
    cons.p_max.iter().zip(&stats.beta[1..]).map(|(&cap, &beta)| beta * cap).sum()
}

/// Worst violation of the optimality system the approximate solver targets:
/// its algebraic stationarity (with multipliers implied by which bound each
/// relay sits on), the box bounds, and the budget equality.
fn approx_kkt_residual(
    stats: &ChannelStats,
    cons: &Constraints,
    p: &PowerVector,
    nu_prime: f64,
) -> f64 {
    let mut worst = 0.0f64;
    let mut budget = 0.0;
    for i in 0..p.len() {
        let beta = stats.beta[i + 1];
        let b = stats.b[i + 1];
        let x = b * p[i];
        budget += beta * p[i];
        let expr = if b == 0.0 {
            0.0
        } else {
            let lin = 1.0 + x;
            beta * b / (beta * lin + (1.0 - beta) * lin * lin)
        };
        let r = if p[i] <= 0.0 {
            // Shut off: the lower-bound multiplier beta nu' - expr must be >= 0.
            (expr - beta * nu_prime).max(0.0)
        } else if p[i] >= cons.p_max[i] {
            // Capped: the upper-bound multiplier expr - beta nu' must be >= 0.
            (beta * nu_prime - expr).max(0.0)
        } else {
            (expr - beta * nu_prime).abs()
        };
        worst = worst.max(r).max(-p[i]).max(p[i] - cons.p_max[i]);
    }
    worst.max((budget - cons.p_r).abs())
}

/// Equality-constrained Newton minimization of a smooth objective over the
/// open box, used with the barrier objective in production and with a plain
/// quadratic in the tests (where one step must land exactly).
///
/// Every iterate stays strictly inside the box and exactly on the hyperplane
/// `a . p = r` (the Newton step is projected back onto `a . dp = 0`, so
/// round-off cannot accumulate). Returns the minimizer, the equality
/// multiplier of the last Newton system, and the decrement trace.
fn newton_equality<V, G, H>(
    mut value: V,
    mut grad: G,
    mut hess: H,
    a: &DVector<f64>,
    mut p: DVector<f64>,
    upper: &[f64],
    sc: &SolverConfig,
) -> Result<(DVector<f64>, f64, Vec<f64>)>
where
    V: FnMut(&DVector<f64>) -> Result<f64>,
    G: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    H: FnMut(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    let n = p.len();
    let mut decrements = Vec::new();

    for _ in 0..sc.max_newton {
        let g = grad(&p)?;
        let h = hess(&p)?;

        // Block KKT system [[H, a], [a^T, 0]] [dp, w] = [-g, 0].
        let mut kkt = DMatrix::zeros(n + 1, n + 1);
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        for i in 0..n {
            kkt[(i, n)] = a[i];
            kkt[(n, i)] = a[i];
        }
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            rhs[i] = -g[i];
        }
        let sol = kkt
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Convergence("singular Newton system in centering".into()))?;
        let mut dp = DVector::from_fn(n, |i, _| sol[i]);
        let w = sol[n];
        // Scrub the along-constraint component so iterates cannot drift off
        // the budget hyperplane.
        let drift = a.dot(&dp) / a.dot(a);
        dp -= a * drift;

        let lambda_sq = dp.dot(&(&h * &dp)).max(0.0);
        decrements.push(lambda_sq);
        if 0.5 * lambda_sq < sc.newton_eps {
            return Ok((p, w, decrements));
        }
        // The objective and its derivatives come out of quadrature with a
        // small absolute error, which puts a floor under the achievable
        // decrement; the analytic tolerance can sit below that floor. Deep
        // inside the quadratic-convergence basin a genuine Newton step at
        // least halves the decrement every few iterations, so once that
        // progress dies while the decrement is already tiny, the iterate is
        // converged to working precision and further iterations only churn.
        const STALL_WINDOW: usize = 6;
        const STALL_CEILING: f64 = 1e-4;
        let k = decrements.len();
        if 0.5 * lambda_sq <= STALL_CEILING
            && k > STALL_WINDOW
            && lambda_sq > 0.5 * decrements[k - 1 - STALL_WINDOW]
        {
            return Ok((p, w, decrements));
        }

        // Longest step that keeps every coordinate strictly inside the box.
        let mut s_max = 1.0f64;
        for i in 0..n {
            if dp[i] < 0.0 {
                s_max = s_max.min(0.99 * p[i] / -dp[i]);
            } else if dp[i] > 0.0 {
                s_max = s_max.min(0.99 * (upper[i] - p[i]) / dp[i]);
            }
        }
        let mut s = s_max.min(1.0);

        let f0 = value(&p)?;
        let slope = g.dot(&dp);
        loop {
            let trial = &p + &dp * s;
            if value(&trial)? <= f0 + sc.ls_alpha * s * slope {
                p = trial;
                break;
            }
            s *= sc.ls_beta;
            if s < 1e-20 {
                return Err(Error::Convergence(
                    "backtracking line search stalled in centering".into(),
                ));
            }
        }
    }
    Err(Error::Convergence(format!(
        "Newton centering did not reach its tolerance in {} iterations \
         (last decrement {:e})",
        sc.max_newton,
        decrements.last().copied().unwrap_or(f64::NAN)
    )))
}

/// One barrier centering step from a strictly feasible iterate. Exposed so
/// the centering behavior can be driven directly; [`allocate_exact`] calls
/// the same routine in its outer loop.
pub fn newton_centering(
    p: &PowerVector,
    t: f64,
    stats: &ChannelStats,
    cons: &Constraints,
    sc: &SolverConfig,
) -> Result<PowerVector> {
    cons.validate(stats.n_relays())?;
    sc.validate()?;
    check_interior(p, cons)?;
    let (centered, _, _) = centering_pass(DVector::from_row_slice(p.as_slice()), t, stats, cons, sc)?;
    PowerVector::new(centered.iter().copied().collect())
}

fn check_interior(p: &PowerVector, cons: &Constraints) -> Result<()> {
    for i in 0..p.len() {
        if !(p[i] > 0.0 && p[i] < cons.p_max[i]) {
            return Err(Error::Config(format!(
                "centering requires a strictly interior start; p[{}] = {} with cap {}",
                i + 1,
                p[i],
                cons.p_max[i]
            )));
        }
    }
    Ok(())
}

fn centering_pass(
    p: DVector<f64>,
    t: f64,
    stats: &ChannelStats,
    cons: &Constraints,
    sc: &SolverConfig,
) -> Result<(DVector<f64>, f64, Vec<f64>)> {
    let a = DVector::from_iterator(stats.n_relays(), stats.beta[1..].iter().copied());
    let caps = cons.p_max.clone();

    let value = |p: &DVector<f64>| -> Result<f64> {
        let pv = PowerVector::new(p.iter().copied().collect())?;
        let mut v = t * sep::sep_quadrature(stats, &pv)?.value;
        for i in 0..p.len() {
            v -= p[i].ln() + (caps[i] - p[i]).ln();
        }
        Ok(v)
    };
    let grad = |p: &DVector<f64>| -> Result<DVector<f64>> {
        let pv = PowerVector::new(p.iter().copied().collect())?;
        let g = sep::sep_gradient(stats, &pv)?;
        Ok(DVector::from_fn(p.len(), |i, _| {
            t * g[i] - 1.0 / p[i] + 1.0 / (caps[i] - p[i])
        }))
    };
    let hess = |p: &DVector<f64>| -> Result<DMatrix<f64>> {
        let pv = PowerVector::new(p.iter().copied().collect())?;
        let mut h = sep::sep_hessian(stats, &pv)?;
        h *= t;
        for i in 0..p.len() {
            h[(i, i)] += 1.0 / (p[i] * p[i])
                + 1.0 / ((caps[i] - p[i]) * (caps[i] - p[i]));
        }
        Ok(h)
    };

    newton_equality(value, grad, hess, &a, p, &cons.p_max, sc)
}

/// Exact allocation by the barrier interior-point method.
///
/// Requires a strictly feasible instance (handles the all-caps boundary case
/// directly). On success the result carries the recovered budget dual, the
/// worst first-order optimality violation, and the final duality-gap
/// estimate `N / t`.
pub fn allocate_exact(
    stats: &ChannelStats,
    cons: &Constraints,
    sc: &SolverConfig,
) -> Result<AllocationResult> {
    sc.validate()?;
    match check_feasibility(stats, cons)? {
        Feasibility::Infeasible => {
            return Err(Error::Infeasible {
                cap_budget: weighted_cap_budget(stats, cons),
                p_r: cons.p_r,
            })
        }
        Feasibility::TrivialAllCaps => return trivial_result(stats, cons),
        Feasibility::Feasible => {}
    }

    let n = stats.n_relays();
    // Start on the hyperplane, strictly inside the box: caps scaled down so
    // the beta-weighted sum meets the budget with room to spare on every side.
    let cap_budget = weighted_cap_budget(stats, cons);
    let mut p = DVector::from_iterator(n, cons.p_max.iter().map(|&c| c * cons.p_r / cap_budget));

    let mut t = sc.t0;
    let mut outer = 0;
    let w = loop {
        let (centered, w_new, _) = centering_pass(p, t, stats, cons, sc)?;
        p = centered;
        outer += 1;
        if n as f64 / t < sc.eps {
            break w_new;
        }
        if outer >= sc.max_outer {
            return Err(Error::Convergence(format!(
                "barrier loop did not close the duality gap in {} outer iterations \
                 (N/t = {:e}, target {:e})",
                sc.max_outer,
                n as f64 / t,
                sc.eps
            )));
        }
        t *= sc.mu;
    };

    // Multipliers of the original problem from the final central point.
    let nu = w / t;
    let lambdas: Vec<f64> = (0..n).map(|i| 1.0 / (t * p[i])).collect();
    let gammas: Vec<f64> = (0..n).map(|i| 1.0 / (t * (cons.p_max[i] - p[i]))).collect();

    let p = PowerVector::new(p.iter().copied().collect())?;
    let kkt = kkt_residual(stats, cons, &p, nu, &lambdas, &gammas)?;
    let sep = sep::sep_closed_form(stats, &p)?;
    Ok(AllocationResult {
        p,
        solver: SolverKind::ExactBarrier,
        multiplier: Some(nu),
        sep,
        kkt_residual: kkt,
        duality_gap: Some(n as f64 / t),
    })
}

/// Naive baseline: the same power for every relay, sized so the beta-weighted
/// sum meets the budget. Fails with [`Error::CapViolation`] if that share
/// does not fit under some cap.
pub fn allocate_equal(stats: &ChannelStats, cons: &Constraints) -> Result<AllocationResult> {
    cons.validate(stats.n_relays())?;
    let beta_sum: f64 = stats.beta[1..].iter().sum();
    let share = cons.p_r / beta_sum;
    for (i, &cap) in cons.p_max.iter().enumerate() {
        if share > cap {
            return Err(Error::CapViolation { relay: i + 1, share, cap });
        }
    }
    let p = PowerVector::new(vec![share; stats.n_relays()])?;
    let sep = sep::sep_closed_form(stats, &p)?;
    let kkt_residual = dual_fit_residual(stats, cons, &p)?;
    Ok(AllocationResult {
        p,
        solver: SolverKind::EqualPower,
        multiplier: None,
        sep,
        kkt_residual,
        duality_gap: None,
    })
}

/// First-order optimality residual of a candidate point with explicitly
/// supplied multipliers: the worst violation among stationarity, dual
/// feasibility, complementary slackness, the box bounds and the budget.
pub fn kkt_residual(
    stats: &ChannelStats,
    cons: &Constraints,
    p: &PowerVector,
    nu: f64,
    lambdas: &[f64],
    gammas: &[f64],
) -> Result<f64> {
    cons.validate(stats.n_relays())?;
    if lambdas.len() != p.len() || gammas.len() != p.len() {
        return Err(Error::Config(format!(
            "multiplier vectors must have length {}, got {} and {}",
            p.len(),
            lambdas.len(),
            gammas.len()
        )));
    }
    let grad = sep::sep_gradient(stats, p)?;
    let mut worst = 0.0f64;
    let mut budget = 0.0;
    for i in 0..p.len() {
        let beta = stats.beta[i + 1];
        budget += beta * p[i];
        worst = worst
            .max((grad[i] + nu * beta - lambdas[i] + gammas[i]).abs())
            .max(-lambdas[i])
            .max(-gammas[i])
            .max((lambdas[i] * p[i]).abs())
            .max((gammas[i] * (cons.p_max[i] - p[i])).abs())
            .max(-p[i])
            .max(p[i] - cons.p_max[i]);
    }
    Ok(worst.max((budget - cons.p_r).abs()))
}

/// Best-achievable first-order residual of a point without given multipliers:
/// complementarity pins `lambda`/`gamma` coordinate-wise, so only the budget
/// dual `nu` is free and the worst stationarity violation is minimized over
/// it (the max of finitely many V-shaped functions — a golden-section search
/// over the candidate interval is exact enough at 1e-14 widths).
fn dual_fit_residual(stats: &ChannelStats, cons: &Constraints, p: &PowerVector) -> Result<f64> {
    let grad = sep::sep_gradient(stats, p)?;
    let n = p.len();

    let coord_residual = |nu: f64| -> f64 {
        let mut worst = 0.0f64;
        for i in 0..n {
            let station = grad[i] + nu * stats.beta[i + 1];
            let r = if p[i] <= 0.0 {
                (-station).max(0.0) // lower-bound multiplier must be >= 0
            } else if p[i] >= cons.p_max[i] {
                station.max(0.0) // upper-bound multiplier must be >= 0
            } else {
                station.abs()
            };
            worst = worst.max(r);
        }
        worst
    };

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        if stats.beta[i + 1] > 0.0 {
            let cand = -grad[i] / stats.beta[i + 1];
            lo = lo.min(cand);
            hi = hi.max(cand);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }

    let phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (coord_residual(x1), coord_residual(x2));
    for _ in 0..200 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = coord_residual(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = coord_residual(x2);
        }
    }
    let station = f1.min(f2);

    let budget: f64 = (0..n).map(|i| stats.beta[i + 1] * p[i]).sum();
    let mut worst = station.max((budget - cons.p_r).abs());
    for i in 0..n {
        worst = worst.max(-p[i]).max(p[i] - cons.p_max[i]);
    }
    Ok(worst)
}

// Expose centering internals (with diagnostics) to the integration tests.
#[doc(hidden)]
pub mod diagnostics {
    use super::*;

    /// Decrement trace and equality multiplier of one centering pass.
    pub fn centering_with_trace(
        p: &PowerVector,
        t: f64,
        stats: &ChannelStats,
        cons: &Constraints,
        sc: &SolverConfig,
    ) -> Result<(PowerVector, f64, Vec<f64>)> {
        check_interior(p, cons)?;
        let (q, w, d) =
            centering_pass(DVector::from_row_slice(p.as_slice()), t, stats, cons, sc)?;
        Ok((PowerVector::new(q.iter().copied().collect())?, w, d))
    }

    /// Drive the generic equality-constrained Newton routine with an
    /// arbitrary quadratic `0.5 p^T Q p + q^T p` (test hook: Newton must land
    /// in one step on quadratics).
    pub fn newton_on_quadratic(
        q_mat: DMatrix<f64>,
        q_lin: DVector<f64>,
        a: DVector<f64>,
        start: DVector<f64>,
        upper: &[f64],
        sc: &SolverConfig,
    ) -> Result<(DVector<f64>, f64, Vec<f64>)> {
        let value = |p: &DVector<f64>| Ok(0.5 * p.dot(&(&q_mat * p)) + q_lin.dot(p));
        let grad = |p: &DVector<f64>| Ok(&q_mat * p + &q_lin);
        let hess = |_p: &DVector<f64>| Ok(q_mat.clone());
        newton_equality(value, grad, hess, &a, start, upper, sc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChannelStats;
    use approx::assert_relative_eq;

    fn two_relay_stats(b: [f64; 2], beta: [f64; 2]) -> ChannelStats {
        ChannelStats::new(4, 1.0, vec![1.0, b[0], b[1]], vec![1.0, 1.0], vec![
            1.0, beta[0], beta[1],
        ])
        .unwrap()
    }

    #[test]
    fn feasibility_three_ways() {
        let stats = two_relay_stats([2.0, 1.0], [1.0, 0.5]);
        // Weighted cap budget = 1*1 + 0.5*1 = 1.5.
        let caps = vec![1.0, 1.0];
        let f = |p_r: f64| {
            check_feasibility(&stats, &Constraints { p_r, p_max: caps.clone() }).unwrap()
        };
        assert_eq!(f(1.0), Feasibility::Feasible);
        assert_eq!(f(1.5), Feasibility::TrivialAllCaps);
        assert_eq!(f(1.5 * (1.0 + 1e-15)), Feasibility::TrivialAllCaps);
        assert_eq!(f(2.0), Feasibility::Infeasible);
    }

    #[test]
    fn waterfill_power_reference_points() {
        // Level at or above the gain shuts the relay off.
        assert_eq!(waterfill_power(2.0, 2.0, 0.7, 10.0), 0.0);
        assert_eq!(waterfill_power(3.0, 2.0, 0.7, 10.0), 0.0);
        // Water-filling limit branch.
        assert_relative_eq!(waterfill_power(0.8, 2.0, 1.0, 10.0), 0.75, epsilon = 1e-12);
        // General branch: beta = 1/2, b = 2, level 1/2.
        let expect = (8.25f64.sqrt() - 0.5) / 2.0 - 0.5;
        assert_relative_eq!(waterfill_power(0.5, 2.0, 0.5, 10.0), expect, epsilon = 1e-12);
        // That point satisfies the stationarity expression it came from.
        let p = waterfill_power(0.5, 2.0, 0.5, 10.0);
        let lin = 1.0 + 2.0 * p;
        let expr = 0.5 * 2.0 / (0.5 * lin + 0.5 * lin * lin);
        assert_relative_eq!(expr, 0.5 * 0.5, epsilon = 1e-12);
        // Cap clamp.
        assert_eq!(waterfill_power(1e-9, 2.0, 0.5, 3.0), 3.0);
        // Dead relay.
        assert_eq!(waterfill_power(0.5, 0.0, 0.5, 3.0), 0.0);
    }

    #[test]
    fn approx_reduces_to_water_filling_for_ideal_relays() {
        let stats = two_relay_stats([2.0, 1.0], [1.0, 1.0]);
        let cons = Constraints { p_r: 1.0, p_max: vec![1e6, 1e6] };
        let r = allocate_approx(&stats, &cons, &SolverConfig::default()).unwrap();
        assert_relative_eq!(r.p[0], 0.75, epsilon = 1e-9);
        assert_relative_eq!(r.p[1], 0.25, epsilon = 1e-9);
        assert_relative_eq!(r.multiplier.unwrap(), 0.8, epsilon = 1e-9);
        assert!(r.kkt_residual < 1e-9);
    }

    #[test]
    fn approx_shuts_off_the_weak_relay_at_small_budgets() {
        let stats = two_relay_stats([2.0, 1.0], [1.0, 1.0]);
        let cons = Constraints { p_r: 0.1, p_max: vec![1e6, 1e6] };
        let r = allocate_approx(&stats, &cons, &SolverConfig::default()).unwrap();
        assert_relative_eq!(r.p[0], 0.1, epsilon = 1e-9);
        assert_eq!(r.p[1], 0.0);
        assert_relative_eq!(r.multiplier.unwrap(), 5.0 / 3.0, epsilon = 1e-8);
    }

    #[test]
    fn approx_budget_is_exact_and_boxed() {
        let stats = ChannelStats::new(
            4,
            1.0,
            vec![0.7, 3.0, 0.8, 0.05],
            vec![2.0, 2.0, 2.0],
            vec![1.0, 0.9, 0.6, 0.3],
        )
        .unwrap();
        let cons = Constraints { p_r: 2.0, p_max: vec![1.5, 2.0, 4.0] };
        let r = allocate_approx(&stats, &cons, &SolverConfig::default()).unwrap();
        let budget: f64 = r.p.iter().zip(&stats.beta[1..]).map(|(&p, &b)| b * p).sum();
        assert!((budget - 2.0).abs() <= 1e-9 * 2.0, "budget {budget}");
        for (i, &p) in r.p.iter().enumerate() {
            assert!((0.0..=cons.p_max[i]).contains(&p));
        }
    }

    #[test]
    fn infeasible_and_trivial_instances_are_classified() {
        let stats = two_relay_stats([2.0, 1.0], [1.0, 1.0]);
        let sc = SolverConfig::default();
        let cons = Constraints { p_r: 3.0, p_max: vec![1.0, 1.0] };
        assert!(matches!(
            allocate_approx(&stats, &cons, &sc),
            Err(Error::Infeasible { .. })
        ));
        assert!(matches!(allocate_exact(&stats, &cons, &sc), Err(Error::Infeasible { .. })));

        let cons = Constraints { p_r: 2.0, p_max: vec![1.0, 1.0] };
        let r = allocate_approx(&stats, &cons, &sc).unwrap();
        assert_eq!(r.solver, SolverKind::TrivialAllCaps);
        assert_eq!(r.p.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn degenerate_all_dead_relays_is_reported() {
        let stats = two_relay_stats([0.0, 0.0], [1.0, 0.5]);
        let cons = Constraints { p_r: 1.0, p_max: vec![1.0, 1.0] };
        assert!(matches!(
            allocate_approx(&stats, &cons, &SolverConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn equal_power_splits_the_budget_by_beta_sum() {
        let stats = two_relay_stats([2.0, 1.0], [1.0, 0.5]);
        let cons = Constraints { p_r: 1.5, p_max: vec![2.0, 2.0] };
        let r = allocate_equal(&stats, &cons).unwrap();
        assert_relative_eq!(r.p[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.p[1], 1.0, epsilon = 1e-12);
        let cons = Constraints { p_r: 1.5, p_max: vec![0.5, 2.0] };
        assert!(matches!(allocate_equal(&stats, &cons), Err(Error::CapViolation { .. })));
    }

    #[test]
    fn exact_single_relay_has_a_forced_solution() {
        let stats =
            ChannelStats::new(4, 1.0, vec![1.0, 2.0], vec![1.0], vec![1.0, 0.8]).unwrap();
        let cons = Constraints { p_r: 0.8, p_max: vec![10.0] };
        let r = allocate_exact(&stats, &cons, &SolverConfig::default()).unwrap();
        // beta * p = p_R has a unique solution: p = 0.8 / 0.8 = 1.
        assert_relative_eq!(r.p[0], 1.0, epsilon = 1e-6);
        assert!(r.kkt_residual < 1e-6, "kkt residual {}", r.kkt_residual);
        assert!(r.duality_gap.unwrap() < 1e-8);
    }

    #[test]
    fn exact_symmetric_instance_splits_evenly() {
        let stats = two_relay_stats([2.0, 2.0 * (1.0 + 1e-6)], [0.9, 0.9]);
        let cons = Constraints { p_r: 1.0, p_max: vec![5.0, 5.0] };
        let r = allocate_exact(&stats, &cons, &SolverConfig::default()).unwrap();
        assert_relative_eq!(r.p[0], r.p[1], epsilon = 1e-4);
        let budget = 0.9 * (r.p[0] + r.p[1]);
        assert!((budget - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constraint_validation_errors() {
        let stats = two_relay_stats([2.0, 1.0], [1.0, 0.5]);
        let bad = Constraints { p_r: -1.0, p_max: vec![1.0, 1.0] };
        assert!(check_feasibility(&stats, &bad).is_err());
        let bad = Constraints { p_r: 1.0, p_max: vec![1.0] };
        assert!(check_feasibility(&stats, &bad).is_err());
        let bad = Constraints { p_r: 1.0, p_max: vec![1.0, 0.0] };
        assert!(check_feasibility(&stats, &bad).is_err());
    }
}
