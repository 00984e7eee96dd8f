//! Behavioral guarantees of the allocation solvers.

mod common;

use common::{log_uniform, random_stats};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use relay_sep::allocator::{
    allocate_approx, allocate_equal, allocate_exact, diagnostics, kkt_residual, waterfill_power,
    Constraints, SolverConfig,
};
use relay_sep::error::Error;
use relay_sep::sep::PowerVector;

#[test]
fn newton_lands_in_one_step_on_a_quadratic() {
    let mut rng = ChaCha12Rng::seed_from_u64(71);
    for _ in 0..10 {
        let n = 4;
        let a_mat = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let q_mat = &a_mat.transpose() * &a_mat + DMatrix::identity(n, n) * 2.0;
        let q_lin = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let a = DVector::from_fn(n, |_, _| 0.5 + rng.random::<f64>());
        let start = DVector::from_element(n, 1.0);
        let upper = vec![100.0; n];

        let (p, w, trace) = diagnostics::newton_on_quadratic(
            q_mat.clone(),
            q_lin.clone(),
            a.clone(),
            start.clone(),
            &upper,
            &SolverConfig::default(),
        )
        .unwrap();

        assert!(trace.len() <= 2, "took {} Newton iterations on a quadratic", trace.len());
        let residual = &q_mat * &p + &q_lin + &a * w;
        assert!(residual.amax() <= 1e-8, "stationarity residual {:e}", residual.amax());
        assert!(
            (a.dot(&p) - a.dot(&start)).abs() <= 1e-10 * a.dot(&start).abs(),
            "left the constraint hyperplane"
        );
    }
}

#[test]
fn centering_holds_the_budget_hyperplane_to_machine_precision() {
    let mut rng = ChaCha12Rng::seed_from_u64(73);
    for _ in 0..6 {
        let n = 2 + (rng.random::<u32>() % 3) as usize;
        let stats = random_stats(&mut rng, n, 4);
        let caps: Vec<f64> = (0..n).map(|_| log_uniform(&mut rng, 0.5, 3.0)).collect();
        let cap_budget: f64 =
            caps.iter().zip(&stats.beta[1..]).map(|(&c, &b)| b * c).sum();
        let cons = Constraints { p_r: 0.6 * cap_budget, p_max: caps.clone() };
        let start = PowerVector::new(
            caps.iter().map(|&c| c * cons.p_r / cap_budget).collect(),
        )
        .unwrap();

        for &t in &[1.0, 50.0, 1e4] {
            let (p, _w, trace) = diagnostics::centering_with_trace(
                &start,
                t,
                &stats,
                &cons,
                &SolverConfig::default(),
            )
            .unwrap();
            let budget: f64 = p.iter().zip(&stats.beta[1..]).map(|(&p, &b)| b * p).sum();
            assert!(
                (budget - cons.p_r).abs() <= 1e-12 * cons.p_r,
                "budget drifted to {budget} (target {})",
                cons.p_r
            );
            assert!(*trace.last().unwrap() < 2.0 * SolverConfig::default().newton_eps);
            assert!(trace.len() <= 120, "centering used {} iterations", trace.len());
            for i in 0..p.len() {
                assert!(p[i] > 0.0 && p[i] < cons.p_max[i], "left the box");
            }
        }
    }
}

#[test]
fn exact_solver_certifies_and_beats_the_baselines() {
    let mut rng = ChaCha12Rng::seed_from_u64(79);
    let sc = SolverConfig::default();
    for _ in 0..6 {
        let n = 2 + (rng.random::<u32>() % 3) as usize;
        let stats = random_stats(&mut rng, n, 4);
        let beta_sum: f64 = stats.beta[1..].iter().sum();
        let p_r = log_uniform(&mut rng, 0.3, 3.0);
        // Caps that keep every solver (equal split included) feasible.
        let cons = Constraints { p_r, p_max: vec![2.5 * p_r / beta_sum * n as f64; n] };

        let exact = allocate_exact(&stats, &cons, &sc).unwrap();
        let approx = allocate_approx(&stats, &cons, &sc).unwrap();
        let equal = allocate_equal(&stats, &cons).unwrap();

        assert!(exact.kkt_residual <= 1e-6, "kkt residual {:e}", exact.kkt_residual);
        let gap = exact.duality_gap.unwrap();
        assert!(gap <= sc.eps && gap > sc.eps / sc.mu * 0.99, "gap schedule broken: {gap:e}");

        let budget: f64 =
            exact.p.iter().zip(&stats.beta[1..]).map(|(&p, &b)| b * p).sum();
        assert!((budget - p_r).abs() <= 1e-10 * p_r, "budget {budget} vs {p_r}");
        for i in 0..n {
            assert!(exact.p[i] > 0.0 && exact.p[i] < cons.p_max[i]);
        }

        assert!(
            exact.sep.value <= approx.sep.value + 1e-8,
            "exact {} worse than approx {}",
            exact.sep.value,
            approx.sep.value
        );
        assert!(
            exact.sep.value <= equal.sep.value + 1e-8,
            "exact {} worse than equal {}",
            exact.sep.value,
            equal.sep.value
        );
    }
}

#[test]
fn perturbing_the_exact_solution_raises_the_kkt_residual() {
    let stats = relay_sep::model::ChannelStats::new(
        4,
        1.0,
        vec![1.0, 3.0, 2.0],
        vec![20.0, 15.0],
        vec![
            1.0,
            relay_sep::model::beta_closed_form(20.0, 1.0, 4).unwrap(),
            relay_sep::model::beta_closed_form(15.0, 1.0, 4).unwrap(),
        ],
    )
    .unwrap();
    let cons = Constraints { p_r: 1.5, p_max: vec![3.0, 3.0] };
    let sc = SolverConfig::default();
    let exact = allocate_exact(&stats, &cons, &sc).unwrap();

    // Interior optimum: the bound multipliers are ~1/t, so scoring with
    // lambda = gamma = 0 barely moves the optimum's residual.
    let nu = exact.multiplier.unwrap();
    let zeros = vec![0.0; 2];
    let base = kkt_residual(&stats, &cons, &exact.p, nu, &zeros, &zeros).unwrap();

    // Slide along the budget hyperplane so only stationarity can degrade.
    let (b1, b2) = (stats.beta[1], stats.beta[2]);
    let step = 0.25;
    let perturbed = PowerVector::new(vec![
        exact.p[0] + step * b2,
        exact.p[1] - step * b1,
    ])
    .unwrap();
    let moved = kkt_residual(&stats, &cons, &perturbed, nu, &zeros, &zeros).unwrap();

    assert!(
        moved > 1e-3,
        "a clearly suboptimal point scored {moved:e}"
    );
    assert!(
        moved > 20.0 * base.max(1e-9),
        "optimum {base:e} vs perturbed {moved:e}: no contrast"
    );
}

#[test]
fn exact_solver_reports_exhausted_outer_iterations() {
    let mut rng = ChaCha12Rng::seed_from_u64(83);
    let stats = random_stats(&mut rng, 3, 4);
    let cons = Constraints { p_r: 1.0, p_max: vec![2.0, 2.0, 2.0] };
    let sc = SolverConfig { max_outer: 3, ..SolverConfig::default() };
    match allocate_exact(&stats, &cons, &sc) {
        Err(Error::Convergence(msg)) => {
            assert!(msg.contains("outer"), "unexpected message: {msg}")
        }
        other => panic!("expected a convergence error, got {other:?}"),
    }
}

#[test]
fn approx_multiplier_reproduces_its_own_powers() {
    let mut rng = ChaCha12Rng::seed_from_u64(89);
    for _ in 0..10 {
        let n = 2 + (rng.random::<u32>() % 4) as usize;
        let stats = random_stats(&mut rng, n, 8);
        let caps: Vec<f64> = (0..n).map(|_| log_uniform(&mut rng, 0.5, 4.0)).collect();
        let cap_budget: f64 =
            caps.iter().zip(&stats.beta[1..]).map(|(&c, &b)| b * c).sum();
        let cons = Constraints { p_r: 0.5 * cap_budget, p_max: caps };
        let r = allocate_approx(&stats, &cons, &SolverConfig::default()).unwrap();
        let nu = r.multiplier.unwrap();
        for i in 0..n {
            let again = waterfill_power(nu, stats.b[i + 1], stats.beta[i + 1], cons.p_max[i]);
            assert!(
                (again - r.p[i]).abs() <= 1e-12 * r.p[i].max(1.0),
                "relay {i}: {again} vs {}",
                r.p[i]
            );
        }
        assert!(r.kkt_residual <= 1e-8, "approx residual {:e}", r.kkt_residual);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The per-relay power is nonincreasing in the water level and always
    /// lands inside the box, whatever the branch parameters.
    #[test]
    fn waterfill_power_is_monotone_and_boxed(
        b in 1e-3f64..1e3,
        beta_raw in 0.25f64..1.0,
        cap in 1e-2f64..1e2,
        nu_lo_frac in 1e-6f64..1.0,
        nu_ratio in 1.0f64..1e3,
    ) {
        let beta = beta_raw;
        let nu_lo = nu_lo_frac * b;
        let nu_hi = (nu_lo * nu_ratio).min(b * 2.0);
        let p_lo = waterfill_power(nu_lo, b, beta, cap);
        let p_hi = waterfill_power(nu_hi, b, beta, cap);
        prop_assert!((0.0..=cap).contains(&p_lo));
        prop_assert!((0.0..=cap).contains(&p_hi));
        prop_assert!(p_hi <= p_lo + 1e-12 * cap);
    }
}
