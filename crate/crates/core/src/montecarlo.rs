//! Monte-Carlo validation of the analytic SEP expressions.
//!
//! Two estimators, both driven by a counter-based RNG so results are
//! reproducible bit-for-bit from `(seed, shards, trials)` alone:
//!
//! * **Semi-analytic** ([`estimate_sep_semi_analytic`]) — draws only the
//!   channel power gains, then averages the *conditional* SEP analytically
//!   over the noise and over all decode outcomes (the relay decision and the
//!   additive noise are integrated out exactly). Each draw yields a number in
//!   `[0, 1]` rather than a Bernoulli outcome, which cuts the variance by
//!   orders of magnitude at low error rates.
//! * **Symbol-level** ([`estimate_sep_symbol_level`]) — simulates the full
//!   physical chain: complex fading coefficients, noisy receptions,
//!   maximum-likelihood detection at every relay, silence on a decode
//!   failure, maximum-ratio combining at the destination. Slow but assumes
//!   nothing, so it cross-checks the model itself.
//!
//! Work is split across independent RNG streams ("shards"); per-shard moments
//! are accumulated with Welford's recurrence and merged in fixed shard order,
//! so the estimate does not depend on scheduling and degenerate constant
//! streams produce a standard error of exactly zero.

use crate::error::{Error, Result};
use crate::model::ChannelStats;
use crate::sep::{self, PowerVector, SepEstimate, SepMethod};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Decode outcomes with more relays than this are sampled instead of
/// enumerated (the enumeration is exponential in the relay count).
pub const MAX_ENUMERATED_RELAYS: usize = 16;

/// Grid size of the cached conditional-SEP table.
const CSEP_TABLE_NODES: usize = 2048;

/// Which estimator a [`TrialPlan`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    SemiAnalytic,
    SymbolLevel,
}

/// Size, seeding and estimator choice of one Monte-Carlo run.
#[derive(Debug, Clone)]
pub struct TrialPlan {
    /// Total number of draws, split across the shards (the first
    /// `trials % shards` shards take one extra).
    pub trials: u64,
    /// Base seed; every shard derives its stream from this one value.
    pub seed: u64,
    /// Number of independent RNG streams.
    pub shards: u32,
    pub estimator: Estimator,
}

impl TrialPlan {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trial count must be at least 1".into()));
        }
        if self.shards == 0 {
            return Err(Error::Config("shard count must be at least 1".into()));
        }
        Ok(())
    }

    fn shard_sizes(&self) -> Vec<u64> {
        let base = self.trials / self.shards as u64;
        let rem = self.trials % self.shards as u64;
        (0..self.shards as u64).map(|s| base + u64::from(s < rem)).collect()
    }
}

/// Which relays decoded correctly in one protocol round.
pub type DecodingState = Vec<bool>;

/// Pack a decode outcome into an integer, first relay in the highest bit
/// (so `[true, false]` becomes `0b10 = 2`).
pub fn decoding_state_index(state: &[bool]) -> usize {
    state.iter().fold(0usize, |acc, &bit| (acc << 1) | usize::from(bit))
}

/// Inverse of [`decoding_state_index`] for a network of `n_relays` relays.
pub fn decoding_state_from_index(index: usize, n_relays: usize) -> DecodingState {
    (0..n_relays).map(|i| (index >> (n_relays - 1 - i)) & 1 == 1).collect()
}

/// Probability of one decode outcome given per-relay success probabilities.
pub fn state_probability(alphas: &[f64], state: &[bool]) -> f64 {
    alphas
        .iter()
        .zip(state)
        .map(|(&a, &bit)| if bit { a } else { 1.0 - a })
        .product()
}

/// Cached evaluator of the conditional SEP as a function of the post-combining
/// SNR, for one constellation size.
///
/// The semi-analytic estimator needs the conditional SEP at millions of SNR
/// points per run; evaluating the defining integral adaptively each time is
/// ~10^3 times too slow. This table samples it once on a uniform grid in
/// `sqrt(ln(1 + snr))` — the square root matters: the conditional SEP has a
/// branch point at zero SNR (infinite slope in the SNR itself) but is
/// analytic in its square root, so cubic interpolation converges at full
/// order on this axis. Queries are answered by four-point Lagrange
/// interpolation, which reproduces the adaptive values to ~1e-11 absolute —
/// far below any Monte-Carlo standard error. Past the last node the true
/// value is below 1e-28 and is returned as zero.
#[derive(Debug, Clone)]
pub struct CsepTable {
    zero_snr_value: f64,
    snr_hi: f64,
    u_hi: f64,
    du: f64,
    values: Vec<f64>,
}

impl CsepTable {
    pub fn new(constellation_size: u32) -> Result<Self> {
        let g = crate::model::g_psk(constellation_size)?;
        let m = constellation_size as f64;
        // exp(-g * snr_hi) = e^-64: the integrand is ~1e-28 past this point.
        let snr_hi = 64.0 / g;
        let u_hi = snr_hi.ln_1p().sqrt();
        let du = u_hi / (CSEP_TABLE_NODES - 1) as f64;
        let mut values = Vec::with_capacity(CSEP_TABLE_NODES);
        for j in 0..CSEP_TABLE_NODES {
            let u = j as f64 * du;
            let snr = (u * u).exp_m1();
            values.push(sep::conditional_sep(snr, constellation_size)?);
        }
        Ok(CsepTable { zero_snr_value: (m - 1.0) / m, snr_hi, u_hi, du, values })
    }

    /// Conditional SEP at the given instantaneous SNR.
    pub fn eval(&self, snr: f64) -> f64 {
        if snr <= 0.0 {
            return self.zero_snr_value;
        }
        if snr >= self.snr_hi {
            return 0.0;
        }
        let u = snr.ln_1p().sqrt().min(self.u_hi);
        let t = u / self.du;
        let seg = (t as usize).min(CSEP_TABLE_NODES - 2);
        let j0 = seg.saturating_sub(1).min(CSEP_TABLE_NODES - 4);
        let s = t - j0 as f64;
        let w0 = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0;
        let w1 = s * (s - 2.0) * (s - 3.0) / 2.0;
        let w2 = -s * (s - 1.0) * (s - 3.0) / 2.0;
        let w3 = s * (s - 1.0) * (s - 2.0) / 6.0;
        let v = &self.values[j0..j0 + 4];
        (w0 * v[0] + w1 * v[1] + w2 * v[2] + w3 * v[3]).clamp(0.0, self.zero_snr_value)
    }
}

/// Streaming mean/variance accumulator (Welford), mergeable across shards.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Welford) -> Welford {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        Welford {
            n,
            mean: self.mean + d * (other.n as f64 / n as f64),
            m2: self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64 / n as f64),
        }
    }

    fn std_error_of_mean(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

fn check_lengths(stats: &ChannelStats, p: &PowerVector) -> Result<()> {
    if p.len() != stats.n_relays() {
        return Err(Error::Config(format!(
            "power vector has {} entries for {} relays",
            p.len(),
            stats.n_relays()
        )));
    }
    Ok(())
}

fn shard_rng(seed: u64, shard: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    rng
}

#[inline]
fn exp_draw(rng: &mut ChaCha12Rng) -> f64 {
    // Unit exponential; random::<f64>() lies in [0, 1), so the log argument
    // stays in (0, 1].
    -(1.0 - rng.random::<f64>()).ln()
}

/// Run the estimator selected by the plan.
pub fn estimate_sep(
    stats: &ChannelStats,
    p: &PowerVector,
    plan: &TrialPlan,
) -> Result<SepEstimate> {
    match plan.estimator {
        Estimator::SemiAnalytic => estimate_sep_semi_analytic(stats, p, plan),
        Estimator::SymbolLevel => estimate_sep_symbol_level(stats, p, plan),
    }
}

/// Semi-analytic estimator: channel gains are drawn, noise and decode
/// outcomes are averaged out exactly.
///
/// Per draw, in this fixed order, one unit exponential is consumed for the
/// source-destination gain, one per relay for the source-relay gains
/// (ascending relay index), and one per relay for the relay-destination gains
/// (ascending) — regardless of which links carry power, so the stream layout
/// never depends on the operating point. The decode outcome is then
/// enumerated exactly over the relays that can actually influence the
/// combiner (positive gain *and* positive power; the others marginalize to a
/// factor of one), or sampled once per draw when more than
/// [`MAX_ENUMERATED_RELAYS`] such relays exist, consuming one extra uniform
/// per effective relay after the gains.
pub fn estimate_sep_semi_analytic(
    stats: &ChannelStats,
    p: &PowerVector,
    plan: &TrialPlan,
) -> Result<SepEstimate> {
    check_lengths(stats, p)?;
    plan.validate()?;

    let n = stats.n_relays();
    let g = stats.g_psk;
    let table = CsepTable::new(stats.constellation_size)?;

    // Mean instantaneous SNRs of each link (the b/c families fold g/N0, so
    // dividing by g recovers SNR units).
    let direct_mean = stats.b[0] * stats.source_power / g;
    let decode_means: Vec<f64> = stats.c.iter().map(|&c| c * stats.source_power / g).collect();
    let relay_means: Vec<f64> = (0..n).map(|i| stats.b[i + 1] * p[i] / g).collect();
    let effective: Vec<usize> = (0..n).filter(|&i| relay_means[i] > 0.0).collect();
    let k = effective.len();
    let enumerate = k <= MAX_ENUMERATED_RELAYS;

    let mut acc = Welford::default();
    let mut decode_snr = vec![0.0f64; n];
    let mut relay_snr = vec![0.0f64; n];
    let mut alphas = vec![0.0f64; k];

    for (shard, &size) in plan.shard_sizes().iter().enumerate() {
        let mut rng = shard_rng(plan.seed, shard as u64);
        let mut local = Welford::default();
        for _ in 0..size {
            let direct_snr = direct_mean * exp_draw(&mut rng);
            for i in 0..n {
                decode_snr[i] = decode_means[i] * exp_draw(&mut rng);
            }
            for i in 0..n {
                relay_snr[i] = relay_means[i] * exp_draw(&mut rng);
            }
            for (pos, &i) in effective.iter().enumerate() {
                alphas[pos] = 1.0 - table.eval(decode_snr[i]);
            }

            let sample = if enumerate {
                let mut total = 0.0;
                for idx in 0..(1usize << k) {
                    let mut prob = 1.0;
                    let mut snr = direct_snr;
                    for (pos, &i) in effective.iter().enumerate() {
                        if (idx >> (k - 1 - pos)) & 1 == 1 {
                            prob *= alphas[pos];
                            snr += relay_snr[i];
                        } else {
                            prob *= 1.0 - alphas[pos];
                        }
                    }
                    total += prob * table.eval(snr);
                }
                total
            } else {
                let mut snr = direct_snr;
                for (pos, &i) in effective.iter().enumerate() {
                    if rng.random::<f64>() < alphas[pos] {
                        snr += relay_snr[i];
                    }
                }
                table.eval(snr)
            };
            local.push(sample);
        }
        acc = acc.merge(local);
    }

    Ok(SepEstimate {
        value: acc.mean,
        method: SepMethod::MonteCarlo,
        std_error: Some(acc.std_error_of_mean()),
        trials: Some(plan.trials),
    })
}

#[inline]
fn complex_gaussian(rng: &mut ChaCha12Rng, variance: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * (variance / 2.0).sqrt()
}

/// Symbol-level estimator: the full transmit/detect chain is simulated and
/// errors are counted.
///
/// Noise power is normalized to one and the link variances are scaled
/// accordingly (only SNRs matter to the error rate). Per trial, in this fixed
/// order: one uniform selects the symbol; complex gains are drawn for
/// source-destination, the source-relay links (ascending), and the
/// relay-destination links (ascending); then complex noises for the direct
/// reception, each relay's reception (ascending), and each relay-destination
/// reception (ascending). Every variate is drawn on every trial, silent
/// relays included, so the stream layout is operating-point independent.
/// Relays apply coherent maximum-likelihood detection and stay silent unless
/// they decode the true symbol; the destination maximum-ratio combines the
/// direct branch with the active relays and detects by maximum correlation.
pub fn estimate_sep_symbol_level(
    stats: &ChannelStats,
    p: &PowerVector,
    plan: &TrialPlan,
) -> Result<SepEstimate> {
    check_lengths(stats, p)?;
    plan.validate()?;

    let n = stats.n_relays();
    let m = stats.constellation_size as usize;
    let g = stats.g_psk;
    let p0 = stats.source_power;

    // Link variances relative to unit noise power.
    let var_sd = stats.b[0] / g;
    let var_si: Vec<f64> = stats.c.iter().map(|&c| c / g).collect();
    let var_id: Vec<f64> = stats.b[1..].iter().map(|&b| b / g).collect();

    let constellation: Vec<Complex64> = (0..m)
        .map(|j| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / m as f64))
        .collect();
    let detect = |z: Complex64| -> usize {
        let mut best = 0;
        let mut best_metric = f64::NEG_INFINITY;
        for (j, s) in constellation.iter().enumerate() {
            let metric = (s.conj() * z).re;
            if metric > best_metric {
                best_metric = metric;
                best = j;
            }
        }
        best
    };

    let mut errors: u64 = 0;
    let mut h_si = vec![Complex64::ZERO; n];
    let mut h_id = vec![Complex64::ZERO; n];
    let mut w_relay = vec![Complex64::ZERO; n];
    let mut w_dest = vec![Complex64::ZERO; n];

    for (shard, &size) in plan.shard_sizes().iter().enumerate() {
        let mut rng = shard_rng(plan.seed, shard as u64);
        for _ in 0..size {
            let tx = ((rng.random::<f64>() * m as f64) as usize).min(m - 1);
            let s = constellation[tx];

            let h_sd = complex_gaussian(&mut rng, var_sd);
            for i in 0..n {
                h_si[i] = complex_gaussian(&mut rng, var_si[i]);
            }
            for i in 0..n {
                h_id[i] = complex_gaussian(&mut rng, var_id[i]);
            }
            let w_direct = complex_gaussian(&mut rng, 1.0);
            for i in 0..n {
                w_relay[i] = complex_gaussian(&mut rng, 1.0);
            }
            for i in 0..n {
                w_dest[i] = complex_gaussian(&mut rng, 1.0);
            }

            let mut z = p0.sqrt() * h_sd.conj() * (p0.sqrt() * h_sd * s + w_direct);
            for i in 0..n {
                if p[i] == 0.0 {
                    continue;
                }
                let y_relay = p0.sqrt() * h_si[i] * s + w_relay[i];
                if detect(h_si[i].conj() * y_relay) != tx {
                    continue; // decode failure: the relay stays silent
                }
                let y_dest = p[i].sqrt() * h_id[i] * s + w_dest[i];
                z += p[i].sqrt() * h_id[i].conj() * y_dest;
            }
            if detect(z) != tx {
                errors += 1;
            }
        }
    }

    let p_hat = errors as f64 / plan.trials as f64;
    let std_error = (p_hat * (1.0 - p_hat) / plan.trials as f64).sqrt();
    Ok(SepEstimate {
        value: p_hat,
        method: SepMethod::MonteCarlo,
        std_error: Some(std_error),
        trials: Some(plan.trials),
    })
}
