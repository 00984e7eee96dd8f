//! Result rows and deterministic CSV emission.

use std::io::Write;

/// One sweep-point/relay-set/solver combination. `p` always has one slot per
/// *global* relay; relays outside the row's set stay `None` and print empty.
#[derive(Debug, Clone)]
pub struct Row {
    pub sweep_value: f64,
    /// 1-based global relay indices, ascending.
    pub relay_set: Vec<usize>,
    /// Empty for validation-only rows (no solver ran).
    pub solver: &'static str,
    pub p: Vec<Option<f64>>,
    pub nu_prime: Option<f64>,
    pub sep_closed_form: f64,
    pub sep_quadrature: f64,
    pub mc_estimate: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub kkt_residual: Option<f64>,
    pub duality_gap: Option<f64>,
    pub wall_ms: Option<u128>,
}

/// Twelve significant digits; round-trips through `f64` parsing bit-exactly.
pub fn fmt_sig(x: f64) -> String {
    format!("{:.11e}", x)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

pub fn relay_set_label(set: &[usize]) -> String {
    set.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

pub fn header(n_relays_global: usize) -> String {
    let mut cols = vec!["sweep_value".to_string(), "relay_set".into(), "solver".into()];
    for i in 1..=n_relays_global {
        cols.push(format!("p_{i}"));
    }
    for tail in [
        "nu_prime",
        "sep_closed_form",
        "sep_quadrature",
        "mc_estimate",
        "mc_stderr",
        "kkt_residual",
        "duality_gap",
        "wall_ms",
    ] {
        cols.push(tail.into());
    }
    cols.join(",")
}

pub fn emit_csv(rows: &[Row], n_relays_global: usize, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "{}", header(n_relays_global))?;
    for row in rows {
        let mut cols = vec![
            fmt_sig(row.sweep_value),
            relay_set_label(&row.relay_set),
            row.solver.to_string(),
        ];
        debug_assert_eq!(row.p.len(), n_relays_global);
        for &p in &row.p {
            cols.push(fmt_opt(p));
        }
        cols.push(fmt_opt(row.nu_prime));
        cols.push(fmt_sig(row.sep_closed_form));
        cols.push(fmt_sig(row.sep_quadrature));
        cols.push(fmt_opt(row.mc_estimate));
        cols.push(fmt_opt(row.mc_stderr));
        cols.push(fmt_opt(row.kkt_residual));
        cols.push(fmt_opt(row.duality_gap));
        cols.push(row.wall_ms.map(|ms| ms.to_string()).unwrap_or_default());
        writeln!(out, "{}", cols.join(","))?;
    }
    Ok(())
}
