//! Network description and per-link channel statistics.
//!
//! The system is a two-hop decode-and-forward network: a source talks to a
//! destination directly and through `N` relays, every link fading as an
//! independent Rayleigh channel with known average gain. This module turns the
//! physical description (constellation order, powers, link variances or relay
//! geometry) into the three families of derived constants the analytical SEP
//! and the allocator consume:
//!
//! * `b[i]` — destination-side fading scale of branch `i` (`b[0]` is the
//!   direct link), `g_psk * variance / noise_power`;
//! * `c[i]` — source-to-relay fading scale of relay `i`;
//! * `beta[i]` — probability that relay `i` decodes the source symbol
//!   correctly, averaged over its own fading (`beta[0] = 1` stands in for the
//!   always-transmitting source).

use crate::error::{Error, Result};
use crate::quad;
use crate::sep;

/// Half the squared minimum distance of unit-energy M-PSK: `sin^2(pi / M)`.
pub fn g_psk(constellation_size: u32) -> Result<f64> {
    check_constellation(constellation_size)?;
    let m = f64::from(constellation_size);
    Ok((std::f64::consts::PI / m).sin().powi(2))
}

/// Upper integration angle of every SEP integral: `(M - 1) pi / M`.
pub(crate) fn theta_max(constellation_size: u32) -> f64 {
    let m = f64::from(constellation_size);
    std::f64::consts::PI * (m - 1.0) / m
}

/// `cot((M - 1) pi / M)`, the angle constant of the closed forms.
/// Zero for BPSK, negative for every larger constellation.
pub(crate) fn cot_theta_max(constellation_size: u32) -> f64 {
    let theta = theta_max(constellation_size);
    theta.cos() / theta.sin()
}

pub(crate) fn check_constellation(constellation_size: u32) -> Result<()> {
    if constellation_size < 2 || !constellation_size.is_power_of_two() {
        return Err(Error::Config(format!(
            "constellation size must be a power of two >= 2, got {constellation_size}"
        )));
    }
    Ok(())
}

/// Average M-PSK symbol error probability of a single Rayleigh branch whose
/// mean received SNR, already scaled by `g_psk`, is `z`.
///
/// This is the building block both of `beta` (success probability of the
/// source-relay hop, `1 -` this value at `z = c_i * p_0`) and of each term of
/// the closed-form end-to-end SEP (at `z = b_i * p_i`).
pub(crate) fn rayleigh_branch_sep(z: f64, constellation_size: u32) -> f64 {
    let ct = cot_theta_max(constellation_size);
    let r = (z / (z + 1.0)).sqrt();
    let tail = 0.5 - ct.atan() / std::f64::consts::PI;
    r * ((ct * r).atan() / std::f64::consts::PI - 0.5) + tail
}

/// Relay placement on the unit source-destination segment.
#[derive(Debug, Clone)]
pub struct Geometry {
    /// Relay distances from the source, each strictly inside `(0, 1)`.
    pub relay_positions: Vec<f64>,
    /// Path-loss exponent `nu`; physically meaningful values are `[2, 6]`.
    pub path_loss_exponent: f64,
}

/// Convert a geometry into link variances for a unit source-destination
/// distance: `m_sd = 1`, `m_si = d_i^-nu`, `m_id = (1 - d_i)^-nu`.
///
/// Returns `(m_sd, m_si list, m_id list)`.
pub fn variances_from_geometry(geometry: &Geometry) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let nu = geometry.path_loss_exponent;
    if !(2.0..=6.0).contains(&nu) {
        return Err(Error::Config(format!(
            "path-loss exponent must lie in [2, 6], got {nu}"
        )));
    }
    let mut m_si = Vec::with_capacity(geometry.relay_positions.len());
    let mut m_id = Vec::with_capacity(geometry.relay_positions.len());
    for (i, &d) in geometry.relay_positions.iter().enumerate() {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::Config(format!(
                "relay {} position must lie strictly inside (0, 1), got {d}",
                i + 1
            )));
        }
        m_si.push(d.powf(-nu));
        m_id.push((1.0 - d).powf(-nu));
    }
    Ok((1.0, m_si, m_id))
}

/// Physical description of one network instance.
#[derive(Debug, Clone)]
pub struct NetworkConfig {
    /// Number of relays `N`. Zero is allowed and means a direct link only.
    pub n_relays: usize,
    /// M-PSK constellation order; a power of two, at least 2.
    pub constellation_size: u32,
    /// Source transmit power `p_0`.
    pub source_power: f64,
    /// Noise power `N_0` at every receiver.
    pub noise_power: f64,
    /// Rayleigh variance of the direct source-destination link (0 disables it).
    pub var_source_dest: f64,
    /// Rayleigh variances of the source-relay links, length `N`, positive.
    pub var_source_relay: Vec<f64>,
    /// Rayleigh variances of the relay-destination links, length `N`,
    /// nonnegative (a zero-gain relay is allowed but useless).
    pub var_relay_dest: Vec<f64>,
}

impl NetworkConfig {
    /// Build a config from relay geometry instead of explicit variances.
    pub fn from_geometry(
        n_relays_check: usize,
        constellation_size: u32,
        source_power: f64,
        noise_power: f64,
        geometry: &Geometry,
    ) -> Result<Self> {
        if geometry.relay_positions.len() != n_relays_check {
            return Err(Error::Config(format!(
                "geometry lists {} relay positions but the network declares {} relays",
                geometry.relay_positions.len(),
                n_relays_check
            )));
        }
        let (m_sd, m_si, m_id) = variances_from_geometry(geometry)?;
        let cfg = NetworkConfig {
            n_relays: n_relays_check,
            constellation_size,
            source_power,
            noise_power,
            var_source_dest: m_sd,
            var_source_relay: m_si,
            var_relay_dest: m_id,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_constellation(self.constellation_size)?;
        if !(self.noise_power > 0.0) || !self.noise_power.is_finite() {
            return Err(Error::Config(format!(
                "noise power must be positive and finite, got {}",
                self.noise_power
            )));
        }
        if !(self.source_power >= 0.0) || !self.source_power.is_finite() {
            return Err(Error::Config(format!(
                "source power must be nonnegative and finite, got {}",
                self.source_power
            )));
        }
        if !(self.var_source_dest >= 0.0) || !self.var_source_dest.is_finite() {
            return Err(Error::Config(format!(
                "source-destination variance must be nonnegative and finite, got {}",
                self.var_source_dest
            )));
        }
        if self.var_source_relay.len() != self.n_relays
            || self.var_relay_dest.len() != self.n_relays
        {
            return Err(Error::Config(format!(
                "variance lists must have length {} (source-relay has {}, relay-dest has {})",
                self.n_relays,
                self.var_source_relay.len(),
                self.var_relay_dest.len()
            )));
        }
        for (i, &v) in self.var_source_relay.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "source-relay variance of relay {} must be positive and finite, got {v}",
                    i + 1
                )));
            }
        }
        for (i, &v) in self.var_relay_dest.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "relay-destination variance of relay {} must be nonnegative and finite, got {v}",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Derived constants of one network instance, the common currency of the SEP
/// evaluators and the allocator.
///
/// Index 0 of `b` and `beta` refers to the source's direct branch; relay `i`
/// (1-based in prose) lives at index `i` of `b`/`beta` and index `i - 1` of
/// `c`. `source_power` is carried along because the destination-side direct
/// branch always contributes through the product `b[0] * source_power`.
#[derive(Debug, Clone)]
pub struct ChannelStats {
    pub constellation_size: u32,
    /// `sin^2(pi / M)` for the configured constellation.
    pub g_psk: f64,
    /// Destination-side scales, length `N + 1`, `b[0]` for the direct link.
    pub b: Vec<f64>,
    /// Source-relay scales, length `N`.
    pub c: Vec<f64>,
    /// Decode success probabilities, length `N + 1`, `beta[0] = 1`.
    pub beta: Vec<f64>,
    /// Source transmit power `p_0`.
    pub source_power: f64,
}

impl ChannelStats {
    /// Assemble stats directly; used by synthetic test instances. Checks the
    /// same invariants `derive_stats` guarantees by construction.
    pub fn new(
        constellation_size: u32,
        source_power: f64,
        b: Vec<f64>,
        c: Vec<f64>,
        beta: Vec<f64>,
    ) -> Result<Self> {
        check_constellation(constellation_size)?;
        if b.is_empty() || beta.len() != b.len() || c.len() + 1 != b.len() {
            return Err(Error::Config(format!(
                "stats lengths must be b: N+1, beta: N+1, c: N; got b {}, beta {}, c {}",
                b.len(),
                beta.len(),
                c.len()
            )));
        }
        if !(source_power >= 0.0) || !source_power.is_finite() {
            return Err(Error::Config(format!(
                "source power must be nonnegative and finite, got {source_power}"
            )));
        }
        if b.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Config("b scales must be nonnegative and finite".into()));
        }
        if c.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::Config("c scales must be positive and finite".into()));
        }
        if beta[0] != 1.0 {
            return Err(Error::Config(format!("beta[0] must be 1, got {}", beta[0])));
        }
        let m = f64::from(constellation_size);
        // A random guess is right 1/M of the time, so no decode probability
        // can sit below that; exactly 1 models an ideal (error-free) relay.
        if beta[1..].iter().any(|&x| !(x >= 1.0 / m && x <= 1.0)) {
            return Err(Error::Config(format!(
                "relay decode probabilities must lie in [1/M, 1] = [{}, 1]",
                1.0 / m
            )));
        }
        Ok(ChannelStats {
            constellation_size,
            g_psk: g_psk(constellation_size)?,
            b,
            c,
            beta,
            source_power,
        })
    }

    pub fn n_relays(&self) -> usize {
        self.b.len() - 1
    }

    /// `(M - 1) pi / M`, the shared upper integration angle.
    pub fn theta_max(&self) -> f64 {
        theta_max(self.constellation_size)
    }

    /// The direct branch enters every formula as this fixed product.
    pub fn direct_product(&self) -> f64 {
        self.b[0] * self.source_power
    }
}

/// Compute all derived constants from a physical description.
pub fn derive_stats(config: &NetworkConfig) -> Result<ChannelStats> {
    config.validate()?;
    let g = g_psk(config.constellation_size)?;
    let scale = g / config.noise_power;

    let mut b = Vec::with_capacity(config.n_relays + 1);
    b.push(scale * config.var_source_dest);
    b.extend(config.var_relay_dest.iter().map(|&m| scale * m));

    let c: Vec<f64> = config.var_source_relay.iter().map(|&m| scale * m).collect();

    let mut beta = Vec::with_capacity(config.n_relays + 1);
    beta.push(1.0); // the source itself always "decodes"
    for &ci in &c {
        beta.push(beta_closed_form(ci, config.source_power, config.constellation_size)?);
    }

    Ok(ChannelStats {
        constellation_size: config.constellation_size,
        g_psk: g,
        b,
        c,
        beta,
        source_power: config.source_power,
    })
}

/// Decode success probability of a relay hop with scale `c_i`, in closed form.
pub fn beta_closed_form(c_i: f64, p_0: f64, constellation_size: u32) -> Result<f64> {
    check_scale_power(c_i, p_0)?;
    check_constellation(constellation_size)?;
    Ok(1.0 - rayleigh_branch_sep(c_i * p_0, constellation_size))
}

/// Same quantity as [`beta_closed_form`], straight from its defining integral
/// `1 - (1/pi) int_0^theta sin^2 / (sin^2 + c_i p_0) dtheta`. Kept as an
/// independent cross-check of the closed form.
pub fn beta_quadrature(c_i: f64, p_0: f64, constellation_size: u32) -> Result<f64> {
    check_scale_power(c_i, p_0)?;
    check_constellation(constellation_size)?;
    let z = c_i * p_0;
    let q = quad::integrate(
        |theta| {
            let s = theta.sin().powi(2);
            if z == 0.0 {
                1.0
            } else {
                s / (s + z)
            }
        },
        0.0,
        theta_max(constellation_size),
        quad::ABS_TOL,
    )?;
    Ok(1.0 - q.value / std::f64::consts::PI)
}

/// Probability that a relay decodes correctly *conditioned on* its current
/// channel draw `|h|^2`; the Monte-Carlo estimators average this.
pub fn alpha_conditional(
    channel_gain_sq: f64,
    p_0: f64,
    constellation_size: u32,
    noise_power: f64,
) -> Result<f64> {
    if !(channel_gain_sq >= 0.0) || !channel_gain_sq.is_finite() {
        return Err(Error::Config(format!(
            "channel gain must be nonnegative and finite, got {channel_gain_sq}"
        )));
    }
    if !(noise_power > 0.0) {
        return Err(Error::Config(format!(
            "noise power must be positive, got {noise_power}"
        )));
    }
    check_scale_power(1.0, p_0)?;
    let snr = channel_gain_sq * p_0 / noise_power;
    Ok(1.0 - sep::conditional_sep(snr, constellation_size)?)
}

fn check_scale_power(scale: f64, p_0: f64) -> Result<()> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Config(format!(
            "link scale must be positive and finite, got {scale}"
        )));
    }
    if !(p_0 >= 0.0) || !p_0.is_finite() {
        return Err(Error::Config(format!(
            "source power must be nonnegative and finite, got {p_0}"
        )));
    }
    Ok(())
}
