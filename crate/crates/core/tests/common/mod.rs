#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use relay_sep::model::{beta_closed_form, ChannelStats};
use relay_sep::sep::PowerVector;

pub fn log_uniform(rng: &mut ChaCha12Rng, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
}

/// Random self-consistent instance: decode probabilities are derived from the
/// drawn source-relay scales, so every invariant of the model holds by
/// construction. The direct link is always present.
pub fn random_stats(rng: &mut ChaCha12Rng, n_relays: usize, m: u32) -> ChannelStats {
    let p0 = log_uniform(rng, 0.2, 5.0);
    let b: Vec<f64> = (0..=n_relays).map(|_| log_uniform(rng, 1e-2, 1e2)).collect();
    let c: Vec<f64> = (0..n_relays).map(|_| log_uniform(rng, 1e-1, 1e3)).collect();
    let mut beta = vec![1.0];
    for &ci in &c {
        beta.push(beta_closed_form(ci, p0, m).unwrap());
    }
    ChannelStats::new(m, p0, b, c, beta).unwrap()
}

pub fn random_powers(rng: &mut ChaCha12Rng, n: usize) -> PowerVector {
    PowerVector::new((0..n).map(|_| log_uniform(rng, 5e-2, 5.0)).collect()).unwrap()
}

/// Composite Simpson rule; `panels` must be even. Reference integrator for
/// test-side oracles, independent of the library's adaptive engine.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    assert!(panels >= 2 && panels % 2 == 0);
    let h = (b - a) / panels as f64;
    let mut sum = f(a) + f(b);
    for k in 1..panels {
        let x = a + k as f64 * h;
        sum += f(x) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}
