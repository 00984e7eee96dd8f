//! Experiment orchestration: the full sweep plus the single-instance
//! subcommands, all built on the library crate.

use std::io::Write;
use std::time::Instant;

use relay_sep::allocator::{self, AllocationResult, Constraints};
use relay_sep::model::{derive_stats, ChannelStats, NetworkConfig};
use relay_sep::montecarlo::{estimate_sep, TrialPlan};
use relay_sep::sep::{self, PowerVector, SepEstimate};
use relay_sep::Error as CoreError;

use crate::config::{
    CapRule, Experiment, SolverChoice, SourceRule, SplitKind, SweepKind, ValidationPlan,
};
use crate::table::{emit_csv, fmt_sig, relay_set_label, Row};

/// Weyl-sequence step for per-row seed derivation: consecutive ordinals give
/// well-separated seeds while staying reproducible from the base alone.
const SEED_STEP: u64 = 0x9E37_79B9_7F4A_7C15;

/// Failure domain of a CLI run; picks the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// I/O trouble writing results (exit 1).
    Io(String),
    /// Invalid configuration or usage (exit 2).
    Config(String),
    /// The requested instance has no feasible allocation (exit 3).
    Infeasible(String),
    /// A solver or integrator failed to converge (exit 4).
    Solver(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Solver(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Io(m) | Failure::Config(m) | Failure::Infeasible(m) | Failure::Solver(m) => m,
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(_) => Failure::Config(e.to_string()),
            CoreError::Infeasible { .. } | CoreError::CapViolation { .. } => {
                Failure::Infeasible(e.to_string())
            }
            CoreError::Quadrature { .. } | CoreError::Convergence(_) | CoreError::Degenerate(_) => {
                Failure::Solver(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

/// Per-sweep-point outcome: skippable rows degrade to a warning, everything
/// else aborts the run.
enum RowError {
    Skip(String),
    Fatal(Failure),
}

impl From<CoreError> for RowError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Infeasible { .. }
            | CoreError::CapViolation { .. }
            | CoreError::Degenerate(_) => RowError::Skip(e.to_string()),
            other => RowError::Fatal(other.into()),
        }
    }
}

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub timing: bool,
    pub quiet: bool,
}

fn derive_seed(base: u64, ordinal: u64) -> u64 {
    base.wrapping_add(ordinal.wrapping_mul(SEED_STEP))
}

fn trial_plan(v: &ValidationPlan, opts: &RunOptions, row_seed: u64) -> TrialPlan {
    TrialPlan {
        trials: opts.trials.unwrap_or(v.trials),
        seed: row_seed,
        shards: v.shards,
        estimator: v.estimator,
    }
}

/// Channel statistics for the subnetwork formed by the given 1-based relay
/// subset, at the given source power.
fn subnet_stats(exp: &Experiment, set: &[usize], p0: f64) -> relay_sep::Result<ChannelStats> {
    let cfg = NetworkConfig {
        n_relays: set.len(),
        constellation_size: exp.constellation_size,
        source_power: p0,
        noise_power: exp.noise_power,
        var_source_dest: exp.var_source_dest,
        var_source_relay: set.iter().map(|&i| exp.var_source_relay[i - 1]).collect(),
        var_relay_dest: set.iter().map(|&i| exp.var_relay_dest[i - 1]).collect(),
    };
    derive_stats(&cfg)
}

fn caps_for(exp: &Experiment, set: &[usize], p_r: f64) -> Vec<f64> {
    match &exp.caps {
        CapRule::Budget => vec![p_r; set.len()],
        CapRule::HalfBudget => vec![p_r / 2.0; set.len()],
        CapRule::Absolute(list) => set.iter().map(|&i| list[i - 1]).collect(),
    }
}

/// Scatter a subset-local power vector into one slot per global relay.
fn global_powers(n_global: usize, set: &[usize], local: &[f64]) -> Vec<Option<f64>> {
    let mut cols = vec![None; n_global];
    for (slot, &i) in set.iter().enumerate() {
        cols[i - 1] = Some(local[slot]);
    }
    cols
}

pub fn run_sweep(exp: &Experiment, opts: &RunOptions) -> Result<Vec<Row>, Failure> {
    if exp.sweep_values.is_empty() {
        return Err(Failure::Config("a [sweep] section is required for this command".into()));
    }
    let base_seed =
        opts.seed.or_else(|| exp.validation.as_ref().map(|v| v.seed)).unwrap_or(0);
    let mut rows = Vec::new();
    let mut ordinal: u64 = 0;
    for &value in &exp.sweep_values {
        for set in &exp.relay_sets {
            match exp.sweep_kind {
                SweepKind::TotalPower => {
                    let seed = derive_seed(base_seed, ordinal);
                    ordinal += 1;
                    let row = total_power_row(exp, opts, value, set, seed)?;
                    progress(opts, &row);
                    rows.push(row);
                }
                SweepKind::RelayBudget => {
                    for &solver in &exp.solvers {
                        let seed = derive_seed(base_seed, ordinal);
                        ordinal += 1;
                        match budget_row(exp, opts, value, set, solver, seed) {
                            Ok(row) => {
                                progress(opts, &row);
                                rows.push(row);
                            }
                            Err(RowError::Skip(msg)) => eprintln!(
                                "warning: sweep_value={} relay_set={} solver={}: {msg}; \
                                 row skipped",
                                fmt_sig(value),
                                relay_set_label(set),
                                solver.as_str()
                            ),
                            Err(RowError::Fatal(f)) => return Err(f),
                        }
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn progress(opts: &RunOptions, row: &Row) {
    if opts.quiet {
        return;
    }
    eprintln!(
        "sweep_value={} relay_set={} solver={} sep={}",
        fmt_sig(row.sweep_value),
        relay_set_label(&row.relay_set),
        if row.solver.is_empty() { "-" } else { row.solver },
        fmt_sig(row.sep_closed_form)
    );
}

/// Validation-only row: the total power is split equally, nothing is solved.
fn total_power_row(
    exp: &Experiment,
    opts: &RunOptions,
    total: f64,
    set: &[usize],
    seed: u64,
) -> Result<Row, Failure> {
    let start = Instant::now();
    let k = set.len();
    let share = total / (k as f64 + 1.0);
    let stats = subnet_stats(exp, set, share)?;
    let local: Vec<f64> = match exp.split {
        SplitKind::Instantaneous => vec![share; k],
        SplitKind::Average => stats.beta[1..].iter().map(|&b| share / b).collect(),
    };
    let p = PowerVector::new(local.clone())?;
    let closed = sep::sep_closed_form(&stats, &p)?;
    let quad = sep::sep_quadrature(&stats, &p)?;
    let (mc_estimate, mc_stderr) = match &exp.validation {
        Some(v) => {
            let mc = estimate_sep(&stats, &p, &trial_plan(v, opts, seed))?;
            (Some(mc.value), mc.std_error)
        }
        None => (None, None),
    };
    Ok(Row {
        sweep_value: total,
        relay_set: set.to_vec(),
        solver: "",
        p: global_powers(exp.n_relays_global(), set, &local),
        nu_prime: None,
        sep_closed_form: closed.value,
        sep_quadrature: quad.value,
        mc_estimate,
        mc_stderr,
        kkt_residual: None,
        duality_gap: None,
        wall_ms: opts.timing.then(|| start.elapsed().as_millis()),
    })
}

fn budget_row(
    exp: &Experiment,
    opts: &RunOptions,
    p_r: f64,
    set: &[usize],
    solver: SolverChoice,
    seed: u64,
) -> Result<Row, RowError> {
    let start = Instant::now();
    let p0 = exp.source_power.expect("validated at resolve time");
    let stats = subnet_stats(exp, set, p0)?;
    let cons = Constraints { p_r, p_max: caps_for(exp, set, p_r) };
    let result: AllocationResult = match solver {
        SolverChoice::Exact => allocator::allocate_exact(&stats, &cons, &exp.solver_config)?,
        SolverChoice::Approx => allocator::allocate_approx(&stats, &cons, &exp.solver_config)?,
        SolverChoice::Equal => allocator::allocate_equal(&stats, &cons)?,
    };
    let quad = sep::sep_quadrature(&stats, &result.p).map_err(|e| RowError::Fatal(e.into()))?;
    let (mc_estimate, mc_stderr) = match &exp.validation {
        Some(v) => {
            let mc = estimate_sep(&stats, &result.p, &trial_plan(v, opts, seed))
                .map_err(|e| RowError::Fatal(e.into()))?;
            (Some(mc.value), mc.std_error)
        }
        None => (None, None),
    };
    Ok(Row {
        sweep_value: p_r,
        relay_set: set.to_vec(),
        solver: solver.as_str(),
        p: global_powers(exp.n_relays_global(), set, result.p.as_slice()),
        nu_prime: result.multiplier,
        sep_closed_form: result.sep.value,
        sep_quadrature: quad.value,
        mc_estimate,
        mc_stderr,
        kkt_residual: Some(result.kkt_residual),
        duality_gap: result.duality_gap,
        wall_ms: opts.timing.then(|| start.elapsed().as_millis()),
    })
}

pub fn run_sweep_cmd(
    exp: &Experiment,
    opts: &RunOptions,
    out_override: Option<&std::path::Path>,
) -> Result<(), Failure> {
    let rows = run_sweep(exp, opts)?;
    let dest = out_override.or(exp.out_csv.as_deref());
    match dest {
        Some(path) => {
            let mut file = std::fs::File::create(path)
                .map_err(|e| Failure::Io(format!("cannot create {}: {e}", path.display())))?;
            emit_csv(&rows, exp.n_relays_global(), &mut file)?;
            if !opts.quiet {
                eprintln!("wrote {} rows to {}", rows.len(), path.display());
            }
        }
        None => {
            let stdout = std::io::stdout();
            emit_csv(&rows, exp.n_relays_global(), &mut stdout.lock())?;
        }
    }
    Ok(())
}

/// The full relay set `{1, .., N}` plus the fixed source power, shared by the
/// single-instance subcommands.
fn single_instance(exp: &Experiment) -> Result<(Vec<usize>, f64), Failure> {
    if exp.source_rule != SourceRule::Fixed {
        return Err(Failure::Config(
            "single-instance commands need source.rule = \"fixed\"".into(),
        ));
    }
    let p0 = exp.source_power.ok_or_else(|| {
        Failure::Config("single-instance commands need source.power".into())
    })?;
    Ok(((1..=exp.n_relays_global()).collect(), p0))
}

fn fixed_powers(exp: &Experiment) -> Result<Vec<f64>, Failure> {
    exp.fixed_powers
        .clone()
        .ok_or_else(|| Failure::Config("this command needs a [powers] section".into()))
}

fn write_estimate(out: &mut dyn Write, label: &str, est: &SepEstimate) -> Result<(), Failure> {
    writeln!(out, "{label}={}", fmt_sig(est.value))?;
    writeln!(out, "{label}_method={}", est.method.as_str())?;
    Ok(())
}

pub fn run_sep_eval(
    exp: &Experiment,
    opts: &RunOptions,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let (set, p0) = single_instance(exp)?;
    let powers = fixed_powers(exp)?;
    let stats = subnet_stats(exp, &set, p0)?;
    let p = PowerVector::new(powers)?;
    let closed = sep::sep_closed_form(&stats, &p)?;
    let quad = sep::sep_quadrature(&stats, &p)?;
    writeln!(out, "n_relays={}", stats.n_relays())?;
    writeln!(out, "constellation_size={}", exp.constellation_size)?;
    writeln!(out, "p_0={}", fmt_sig(p0))?;
    for (i, &pi) in p.as_slice().iter().enumerate() {
        writeln!(out, "p_{}={}", i + 1, fmt_sig(pi))?;
    }
    write_estimate(out, "sep_closed_form", &closed)?;
    write_estimate(out, "sep_quadrature", &quad)?;
    if let Some(v) = &exp.validation {
        let seed = opts.seed.unwrap_or(v.seed);
        let plan = trial_plan(v, opts, seed);
        let mc = estimate_sep(&stats, &p, &plan)?;
        writeln!(out, "mc_estimate={}", fmt_sig(mc.value))?;
        writeln!(out, "mc_stderr={}", fmt_sig(mc.std_error.unwrap_or(0.0)))?;
        writeln!(out, "mc_trials={}", plan.trials)?;
        writeln!(out, "mc_seed={}", plan.seed)?;
    }
    Ok(())
}

pub fn run_allocate(
    exp: &Experiment,
    opts: &RunOptions,
    solvers: &[SolverChoice],
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let (set, p0) = single_instance(exp)?;
    let p_r = exp
        .p_r
        .ok_or_else(|| Failure::Config("allocate needs constraints.p_r".into()))?;
    let stats = subnet_stats(exp, &set, p0)?;
    let cons = Constraints { p_r, p_max: caps_for(exp, &set, p_r) };
    let base_seed = opts.seed.or_else(|| exp.validation.as_ref().map(|v| v.seed)).unwrap_or(0);
    for (idx, &solver) in solvers.iter().enumerate() {
        let result = match solver {
            SolverChoice::Exact => allocator::allocate_exact(&stats, &cons, &exp.solver_config)?,
            SolverChoice::Approx => allocator::allocate_approx(&stats, &cons, &exp.solver_config)?,
            SolverChoice::Equal => allocator::allocate_equal(&stats, &cons)?,
        };
        writeln!(out, "solver={}", solver.as_str())?;
        for (i, &pi) in result.p.as_slice().iter().enumerate() {
            writeln!(out, "p_{}={}", i + 1, fmt_sig(pi))?;
        }
        let spent: f64 = stats
            .beta[1..]
            .iter()
            .zip(result.p.as_slice())
            .map(|(&b, &pi)| b * pi)
            .sum();
        if let Some(nu) = result.multiplier {
            writeln!(out, "nu_prime={}", fmt_sig(nu))?;
        }
        write_estimate(out, "sep_closed_form", &result.sep)?;
        writeln!(out, "kkt_residual={}", fmt_sig(result.kkt_residual))?;
        if let Some(gap) = result.duality_gap {
            writeln!(out, "duality_gap={}", fmt_sig(gap))?;
        }
        writeln!(out, "budget_spent={}", fmt_sig(spent))?;
        if let Some(v) = &exp.validation {
            let plan = trial_plan(v, opts, derive_seed(base_seed, idx as u64));
            let mc = estimate_sep(&stats, &result.p, &plan)?;
            writeln!(out, "mc_estimate={}", fmt_sig(mc.value))?;
            writeln!(out, "mc_stderr={}", fmt_sig(mc.std_error.unwrap_or(0.0)))?;
        }
    }
    Ok(())
}

pub fn run_simulate(
    exp: &Experiment,
    opts: &RunOptions,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let (set, p0) = single_instance(exp)?;
    let powers = fixed_powers(exp)?;
    let stats = subnet_stats(exp, &set, p0)?;
    let p = PowerVector::new(powers)?;
    let default_plan = ValidationPlan {
        estimator: relay_sep::montecarlo::Estimator::SemiAnalytic,
        trials: 1_000_000,
        shards: 8,
        seed: 0,
    };
    let v = exp.validation.as_ref().unwrap_or(&default_plan);
    let seed = opts.seed.unwrap_or(v.seed);
    let plan = trial_plan(v, opts, seed);
    let mc = estimate_sep(&stats, &p, &plan)?;
    writeln!(
        out,
        "estimator={}",
        match plan.estimator {
            relay_sep::montecarlo::Estimator::SemiAnalytic => "semi-analytic",
            relay_sep::montecarlo::Estimator::SymbolLevel => "symbol-level",
        }
    )?;
    writeln!(out, "trials={}", plan.trials)?;
    writeln!(out, "shards={}", plan.shards)?;
    writeln!(out, "seed={}", plan.seed)?;
    writeln!(out, "mc_estimate={}", fmt_sig(mc.value))?;
    writeln!(out, "mc_stderr={}", fmt_sig(mc.std_error.unwrap_or(0.0)))?;
    Ok(())
}
