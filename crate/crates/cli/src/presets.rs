//! Built-in experiment definitions for the reference five-relay line network
//! (relays on the unit source-destination segment, cubic path loss, QPSK).

/// Equal-split total-power sweep, validated by Monte-Carlo: the closed form
/// and the simulation series should overlay for both relay subsets.
pub const FIG1: &str = r#"# Total-power sweep with equal split across source and active relays.
# Swept values are linear powers; the six points span 0..10 dB.

[network]
constellation_size = 4
noise_power = 1.0

[network.geometry]
relay_positions = [0.0117, 0.1365, 0.2844, 0.4692, 0.8938]
path_loss_exponent = 3.0

[source]
rule = "equal-split-total"
split = "instantaneous"

[sweep]
kind = "total-power"
log_range_db = { start = 0.0, stop = 10.0, points = 6 }
relay_sets = [[1, 3, 5], [1, 2, 3, 4, 5]]
solvers = []

[validation]
enabled = true
estimator = "semi-analytic"
trials = 1000000
shards = 8
seed = 20260816

[output]
csv = "fig1.csv"
"#;

/// Relay-budget sweep comparing the exact, approximate, and equal-power
/// allocators with per-relay caps equal to the full budget.
pub const FIG2: &str = r#"# Relay-budget sweep, fixed unit source power, caps p_max_i = p_R.
# Swept values are linear budgets; the eight points span 0..21 dB.

[network]
constellation_size = 4
noise_power = 1.0

[network.geometry]
relay_positions = [0.0117, 0.1365, 0.2844, 0.4692, 0.8938]
path_loss_exponent = 3.0

[source]
rule = "fixed"
power = 1.0

[sweep]
kind = "relay-budget"
log_range_db = { start = 0.0, stop = 21.0, points = 8 }
relay_sets = [[1, 3, 5], [1, 2, 3, 4, 5]]
solvers = ["exact", "approx", "equal"]

[constraints]
p_max = "p_r"

[output]
csv = "fig2.csv"
"#;

/// Same sweep as [`FIG2`] with the caps tightened to half the budget.
pub const FIG3: &str = r#"# Relay-budget sweep, fixed unit source power, caps p_max_i = p_R / 2.
# Swept values are linear budgets; the eight points span 0..21 dB.

[network]
constellation_size = 4
noise_power = 1.0

[network.geometry]
relay_positions = [0.0117, 0.1365, 0.2844, 0.4692, 0.8938]
path_loss_exponent = 3.0

[source]
rule = "fixed"
power = 1.0

[sweep]
kind = "relay-budget"
log_range_db = { start = 0.0, stop = 21.0, points = 8 }
relay_sets = [[1, 3, 5], [1, 2, 3, 4, 5]]
solvers = ["exact", "approx", "equal"]

[constraints]
p_max = "p_r/2"

[output]
csv = "fig3.csv"
"#;

pub fn by_name(name: &str) -> Option<&'static str> {
    match name {
        "fig1" => Some(FIG1),
        "fig2" => Some(FIG2),
        "fig3" => Some(FIG3),
        _ => None,
    }
}
