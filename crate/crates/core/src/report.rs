//! CSV and key/value renderings of traces, summaries and sweeps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::metrics::Summary;
use crate::sim::{SweepAxis, SweepRow, Trace};

/// Trace column names for `num_users` users and `num_relays` relays.
pub fn trace_header(num_users: usize, num_relays: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    let per_user = |prefix: &str, cols: &mut Vec<String>| {
        for n in 1..=num_users {
            cols.push(format!("{prefix}_{n}"));
        }
    };
    per_user("Q", &mut cols);
    per_user("U", &mut cols);
    for c in ["S", "w", "delta", "O", "J", "P_grid"] {
        cols.push(c.to_string());
    }
    per_user("mu", &mut cols);
    per_user("R", &mut cols);
    per_user("X", &mut cols);
    cols.push("p_B_total".to_string());
    for i in 1..=num_relays {
        cols.push(format!("p_{i}_total"));
    }
    cols.push("dual_iters".to_string());
    cols.push("lyapunov".to_string());
    cols
}

/// One row per slot; the header is always present.
pub fn trace_csv(trace: &Trace) -> String {
    let n = trace.config.num_users;
    let mut out = trace_header(n, trace.deployed_relays).join(",");
    out.push('\n');
    for r in &trace.records {
        let mut fields: Vec<String> = vec![r.slot.to_string()];
        fields.extend(r.state.q.iter().map(f64::to_string));
        fields.extend(r.state.u.iter().map(f64::to_string));
        let d = &r.decision;
        for v in [r.state.s, d.harvested, d.charge_frac, d.discharge_o, d.grid_j, r.grid_power] {
            fields.push(v.to_string());
        }
        fields.extend(d.rate_mu.iter().map(f64::to_string));
        fields.extend(d.admit_r.iter().map(f64::to_string));
        fields.extend(d.aux_x.iter().map(f64::to_string));
        fields.push(d.p_b_total().to_string());
        fields.extend(r.relay_power.iter().map(f64::to_string));
        fields.push(r.alloc.iterations.to_string());
        fields.push(r.lyapunov.to_string());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Flat `key = value` record.
pub fn summary_kv(s: &Summary) -> String {
    let mut out = String::new();
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
    let _ = writeln!(out, "slots = {}", s.slots);
    let _ = writeln!(out, "mean_admitted = {}", join(&s.mean_admitted));
    let _ = writeln!(out, "mean_service = {}", join(&s.mean_service));
    let rows = [
        ("throughput", s.throughput),
        ("grid_power", s.grid_power),
        ("objective", s.objective),
        ("fairness", s.fairness),
        ("max_q", s.max_q),
        ("max_u", s.max_u),
        ("battery_min", s.battery_min),
        ("battery_max", s.battery_max),
        ("mean_u_sum", s.mean_u_sum),
        ("xi", s.xi),
        ("xi_over_v", s.xi_over_v),
        ("energy_balance_gap", s.energy_balance_gap),
        ("energy_balance_bound", s.energy_balance_bound),
        ("mean_dual_iterations", s.mean_dual_iterations),
    ];
    for (k, v) in rows {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

pub const SWEEP_COLUMNS: [&str; 13] = [
    "axis",
    "value",
    "seeds_ok",
    "objective",
    "throughput",
    "grid_power",
    "fairness",
    "max_q",
    "max_u",
    "battery_min",
    "battery_max",
    "xi_over_v",
    "errors",
];

/// One row per axis value, seed-averaged (extremes taken over seeds).
pub fn sweep_csv(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut out = SWEEP_COLUMNS.join(",");
    out.push('\n');
    for row in rows {
        let fold = |f: fn(&Summary) -> f64, pick: fn(f64, f64) -> f64, init: f64| {
            row.summaries.iter().map(|(_, s)| f(s)).fold(init, pick)
        };
        let errors = row
            .errors
            .iter()
            .map(|(seed, e)| format!("seed {seed}: {}", e.replace([',', '\n'], ";")))
            .collect::<Vec<_>>()
            .join(" | ");
        let fields = [
            axis.as_str().to_string(),
            row.value.to_string(),
            row.summaries.len().to_string(),
            row.mean(|s| s.objective).to_string(),
            row.mean(|s| s.throughput).to_string(),
            row.mean(|s| s.grid_power).to_string(),
            row.mean(|s| s.fairness).to_string(),
            fold(|s| s.max_q, f64::max, 0.0).to_string(),
            fold(|s| s.max_u, f64::max, 0.0).to_string(),
            fold(|s| s.battery_min, f64::min, f64::INFINITY).to_string(),
            fold(|s| s.battery_max, f64::max, f64::NEG_INFINITY).to_string(),
            row.mean(|s| s.xi_over_v).to_string(),
            errors,
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let h = trace_header(2, 1);
        assert_eq!(
            h.join(","),
            "t,Q_1,Q_2,U_1,U_2,S,w,delta,O,J,P_grid,mu_1,mu_2,R_1,R_2,X_1,X_2,p_B_total,p_1_total,dual_iters,lyapunov"
        );
    }
}
