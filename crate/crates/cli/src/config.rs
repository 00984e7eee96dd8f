//! TOML experiment configuration: serde schema, validation, and resolution
//! into ready-to-run experiment descriptions.

use std::path::{Path, PathBuf};

use relay_sep::allocator::SolverConfig;
use relay_sep::model::{variances_from_geometry, Geometry};
use relay_sep::montecarlo::Estimator;
use serde::Deserialize;

/// A configuration problem. Carries the field context so the message is
/// actionable on its own; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

// ---------------------------------------------------------------------------
// Raw serde schema, one struct per TOML table.
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub network: NetworkSection,
    #[serde(default)]
    pub source: SourceSection,
    pub sweep: Option<SweepSection>,
    pub constraints: Option<ConstraintsSection>,
    pub validation: Option<ValidationSection>,
    pub solver: Option<SolverSection>,
    pub powers: Option<PowersSection>,
    pub output: Option<OutputSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub constellation_size: u32,
    #[serde(default = "default_noise_power")]
    pub noise_power: f64,
    pub geometry: Option<GeometrySection>,
    pub links: Option<LinksSection>,
}

fn default_noise_power() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub relay_positions: Vec<f64>,
    pub path_loss_exponent: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinksSection {
    pub var_source_dest: f64,
    pub var_source_relay: Vec<f64>,
    pub var_relay_dest: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    #[serde(default = "default_source_rule")]
    pub rule: String,
    pub power: Option<f64>,
    /// Equal-split interpretation: divide the swept total over the N+1
    /// transmit powers ("instantaneous", default) or over the N+1 *average*
    /// radiated powers `beta_i p_i` ("average").
    #[serde(default = "default_split")]
    pub split: String,
}

impl Default for SourceSection {
    fn default() -> Self {
        SourceSection { rule: default_source_rule(), power: None, split: default_split() }
    }
}

fn default_source_rule() -> String {
    "fixed".into()
}

fn default_split() -> String {
    "instantaneous".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub kind: String,
    pub values: Option<Vec<f64>>,
    pub log_range_db: Option<LogRange>,
    pub relay_sets: Vec<Vec<usize>>,
    #[serde(default)]
    pub solvers: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRange {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsSection {
    pub p_r: Option<f64>,
    #[serde(default = "default_cap_spec")]
    pub p_max: CapSpec,
}

fn default_cap_spec() -> CapSpec {
    CapSpec::Rule("p_r".into())
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum CapSpec {
    Rule(String),
    Absolute(Vec<f64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_estimator")]
    pub estimator: String,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_shards")]
    pub shards: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_estimator() -> String {
    "semi-analytic".into()
}
fn default_trials() -> u64 {
    1_000_000
}
fn default_shards() -> u32 {
    8
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub t0: Option<f64>,
    pub mu: Option<f64>,
    pub eps: Option<f64>,
    pub newton_eps: Option<f64>,
    pub ls_alpha: Option<f64>,
    pub ls_beta: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_newton: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowersSection {
    pub p: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub csv: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Resolved experiment description.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceRule {
    Fixed,
    EqualSplitTotal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    /// `p_0 = p_i = P / (N + 1)`.
    Instantaneous,
    /// `p_0 = beta_i p_i = P / (N + 1)`: relays with imperfect decoding get
    /// proportionally more transmit power so the *radiated* shares are equal.
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    RelayBudget,
    TotalPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    Exact,
    Approx,
    Equal,
}

impl SolverChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverChoice::Exact => "exact",
            SolverChoice::Approx => "approx",
            SolverChoice::Equal => "equal",
        }
    }
}

#[derive(Debug, Clone)]
pub enum CapRule {
    /// `p_max_i = p_R` for every active relay.
    Budget,
    /// `p_max_i = p_R / 2`.
    HalfBudget,
    /// One absolute cap per *global* relay; subsets inherit their entries.
    Absolute(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct ValidationPlan {
    pub estimator: Estimator,
    pub trials: u64,
    pub shards: u32,
    pub seed: u64,
}

/// Everything a run needs, fully validated.
#[derive(Debug)]
pub struct Experiment {
    pub constellation_size: u32,
    pub noise_power: f64,
    /// Global link variances; relay subsets index into these.
    pub var_source_dest: f64,
    pub var_source_relay: Vec<f64>,
    pub var_relay_dest: Vec<f64>,
    pub source_rule: SourceRule,
    pub source_power: Option<f64>,
    pub split: SplitKind,
    pub sweep_kind: SweepKind,
    pub sweep_values: Vec<f64>,
    /// 1-based ascending indices into the global relay list.
    pub relay_sets: Vec<Vec<usize>>,
    pub solvers: Vec<SolverChoice>,
    pub caps: CapRule,
    /// Single-instance budget for `allocate` (ignored by sweeps).
    pub p_r: Option<f64>,
    pub validation: Option<ValidationPlan>,
    pub solver_config: SolverConfig,
    pub fixed_powers: Option<Vec<f64>>,
    pub out_csv: Option<PathBuf>,
}

impl Experiment {
    pub fn n_relays_global(&self) -> usize {
        self.var_source_relay.len()
    }
}

pub fn load(path: &Path) -> Result<Experiment, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let file: ConfigFile = toml::from_str(&text)
        .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    resolve(file)
}

pub fn resolve(file: ConfigFile) -> Result<Experiment, ConfigError> {
    let (var_sd, var_si, var_id) = match (&file.network.geometry, &file.network.links) {
        (Some(_), Some(_)) => {
            return err("network: give either [network.geometry] or [network.links], not both")
        }
        (None, None) => {
            return err("network: one of [network.geometry] or [network.links] is required")
        }
        (Some(g), None) => {
            let geometry = Geometry {
                relay_positions: g.relay_positions.clone(),
                path_loss_exponent: g.path_loss_exponent,
            };
            variances_from_geometry(&geometry).map_err(|e| ConfigError(e.to_string()))?
        }
        (None, Some(l)) => {
            if l.var_source_relay.len() != l.var_relay_dest.len() {
                return err(format!(
                    "network.links: var_source_relay lists {} relays, var_relay_dest {}",
                    l.var_source_relay.len(),
                    l.var_relay_dest.len()
                ));
            }
            if !(l.var_source_dest >= 0.0) || !l.var_source_dest.is_finite() {
                return err("network.links.var_source_dest must be nonnegative and finite");
            }
            if l.var_source_relay.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return err("network.links.var_source_relay entries must be positive and finite");
            }
            if l.var_relay_dest.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return err("network.links.var_relay_dest entries must be nonnegative and finite");
            }
            (l.var_source_dest, l.var_source_relay.clone(), l.var_relay_dest.clone())
        }
    };
    let n_global = var_si.len();

    if !(file.network.noise_power > 0.0) || !file.network.noise_power.is_finite() {
        return err("network.noise_power must be positive and finite");
    }

    let source_rule = match file.source.rule.as_str() {
        "fixed" => SourceRule::Fixed,
        "equal-split-total" => SourceRule::EqualSplitTotal,
        other => {
            return err(format!(
                "source.rule must be \"fixed\" or \"equal-split-total\", got \"{other}\""
            ))
        }
    };
    if source_rule == SourceRule::Fixed {
        if let Some(p0) = file.source.power {
            if !(p0 > 0.0) || !p0.is_finite() {
                return err("source.power must be positive and finite");
            }
        }
    }
    let split = match file.source.split.as_str() {
        "instantaneous" => SplitKind::Instantaneous,
        "average" => SplitKind::Average,
        other => {
            return err(format!(
                "source.split must be \"instantaneous\" or \"average\", got \"{other}\""
            ))
        }
    };

    let (sweep_kind, sweep_values, relay_sets, solvers) = match &file.sweep {
        None => (SweepKind::RelayBudget, Vec::new(), vec![(1..=n_global).collect()], Vec::new()),
        Some(sweep) => {
            let kind = match sweep.kind.as_str() {
                "relay-budget" => SweepKind::RelayBudget,
                "total-power" => SweepKind::TotalPower,
                other => {
                    return err(format!(
                        "sweep.kind must be \"relay-budget\" or \"total-power\", got \"{other}\""
                    ))
                }
            };
            let values = match (&sweep.values, &sweep.log_range_db) {
                (Some(_), Some(_)) => {
                    return err("sweep: give either values or log_range_db, not both")
                }
                (None, None) => return err("sweep: one of values or log_range_db is required"),
                (Some(v), None) => v.clone(),
                (None, Some(r)) => {
                    if r.points == 0 {
                        return err("sweep.log_range_db.points must be at least 1");
                    }
                    (0..r.points)
                        .map(|k| {
                            let db = if r.points == 1 {
                                r.start
                            } else {
                                r.start + k as f64 * (r.stop - r.start) / (r.points - 1) as f64
                            };
                            10f64.powf(db / 10.0)
                        })
                        .collect()
                }
            };
            if values.is_empty() {
                return err("sweep.values must be nonempty");
            }
            if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return err("sweep values must be positive and finite");
            }
            if sweep.relay_sets.is_empty() {
                return err("sweep.relay_sets must list at least one relay set");
            }
            let mut sets = Vec::new();
            for (si, set) in sweep.relay_sets.iter().enumerate() {
                if set.is_empty() {
                    return err(format!("sweep.relay_sets[{si}] is empty"));
                }
                let mut sorted = set.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != set.len() {
                    return err(format!("sweep.relay_sets[{si}] repeats a relay index"));
                }
                if sorted[0] < 1 || *sorted.last().unwrap() > n_global {
                    return err(format!(
                        "sweep.relay_sets[{si}] indices must lie in 1..={n_global}"
                    ));
                }
                sets.push(sorted);
            }
            let mut solvers = Vec::new();
            for s in &sweep.solvers {
                solvers.push(match s.as_str() {
                    "exact" => SolverChoice::Exact,
                    "approx" => SolverChoice::Approx,
                    "equal" => SolverChoice::Equal,
                    other => {
                        return err(format!(
                            "sweep.solvers entries must be exact|approx|equal, got \"{other}\""
                        ))
                    }
                });
            }
            (kind, values, sets, solvers)
        }
    };

    let validation = match &file.validation {
        Some(v) if v.enabled => {
            let estimator = match v.estimator.as_str() {
                "semi-analytic" => Estimator::SemiAnalytic,
                "symbol-level" => Estimator::SymbolLevel,
                other => {
                    return err(format!(
                        "validation.estimator must be semi-analytic|symbol-level, got \"{other}\""
                    ))
                }
            };
            if v.trials == 0 {
                return err("validation.trials must be at least 1");
            }
            if v.shards == 0 {
                return err("validation.shards must be at least 1");
            }
            Some(ValidationPlan { estimator, trials: v.trials, shards: v.shards, seed: v.seed })
        }
        _ => None,
    };

    if file.sweep.is_some() {
        if sweep_kind == SweepKind::TotalPower {
            if !solvers.is_empty() {
                return err(
                    "a total-power sweep prescribes every power by the equal split; \
                     solver selection needs a relay-budget sweep",
                );
            }
            if source_rule != SourceRule::EqualSplitTotal {
                return err("a total-power sweep requires source.rule = \"equal-split-total\"");
            }
            if validation.is_none() {
                return err("a total-power sweep without validation computes nothing");
            }
        } else {
            if source_rule != SourceRule::Fixed {
                return err("a relay-budget sweep requires source.rule = \"fixed\"");
            }
            if file.source.power.is_none() {
                return err("a relay-budget sweep requires source.power");
            }
            if solvers.is_empty() {
                return err("a relay-budget sweep needs at least one solver");
            }
        }
    }

    let caps = match file.constraints.as_ref().map(|c| &c.p_max) {
        None => CapRule::Budget,
        Some(CapSpec::Rule(rule)) => match rule.as_str() {
            "p_r" => CapRule::Budget,
            "p_r/2" => CapRule::HalfBudget,
            other => {
                return err(format!(
                    "constraints.p_max must be \"p_r\", \"p_r/2\", or a list, got \"{other}\""
                ))
            }
        },
        Some(CapSpec::Absolute(list)) => {
            if list.len() != n_global {
                return err(format!(
                    "constraints.p_max lists {} caps for {n_global} relays",
                    list.len()
                ));
            }
            if list.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
                return err("constraints.p_max entries must be positive and finite");
            }
            CapRule::Absolute(list.clone())
        }
    };

    let p_r = match file.constraints.as_ref().and_then(|c| c.p_r) {
        Some(v) if !(v > 0.0) || !v.is_finite() => {
            return err("constraints.p_r must be positive and finite")
        }
        other => other,
    };

    let mut solver_config = SolverConfig::default();
    if let Some(s) = &file.solver {
        if let Some(v) = s.t0 {
            solver_config.t0 = v;
        }
        if let Some(v) = s.mu {
            solver_config.mu = v;
        }
        if let Some(v) = s.eps {
            solver_config.eps = v;
        }
        if let Some(v) = s.newton_eps {
            solver_config.newton_eps = v;
        }
        if let Some(v) = s.ls_alpha {
            solver_config.ls_alpha = v;
        }
        if let Some(v) = s.ls_beta {
            solver_config.ls_beta = v;
        }
        if let Some(v) = s.max_outer {
            solver_config.max_outer = v;
        }
        if let Some(v) = s.max_newton {
            solver_config.max_newton = v;
        }
    }

    let fixed_powers = match &file.powers {
        None => None,
        Some(sec) => {
            if sec.p.len() != n_global {
                return err(format!(
                    "powers.p lists {} entries for {n_global} relays",
                    sec.p.len()
                ));
            }
            if sec.p.iter().any(|&p| !(p >= 0.0) || !p.is_finite() ) {
                return err("powers.p entries must be nonnegative and finite");
            }
            Some(sec.p.clone())
        }
    };

    Ok(Experiment {
        constellation_size: file.network.constellation_size,
        noise_power: file.network.noise_power,
        var_source_dest: var_sd,
        var_source_relay: var_si,
        var_relay_dest: var_id,
        source_rule,
        source_power: file.source.power,
        split,
        sweep_kind,
        sweep_values,
        relay_sets,
        solvers,
        caps,
        p_r,
        validation,
        solver_config,
        fixed_powers,
        out_csv: file.output.and_then(|o| o.csv),
    })
}
