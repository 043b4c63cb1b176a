//! CSV artifact writers (and the snapshot reader used for round-trip audits).
//!
//! All floats are written with Rust's shortest-round-trip formatting, so a
//! finite `f64` survives write-then-parse bit-for-bit. Column orders are
//! documented in `docs/csv_schemas.md` and fixed; rows follow flat C-order
//! node indexing for grid artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use stabvi_core::engine_avi::AviTraceRow;
use stabvi_core::engine_exact::TraceRow;
use stabvi_core::stability::{SublevelSet, TrajectoryRecord};
use stabvi_core::valuefn::GridValueFunction;

use crate::HarnessError;

fn write_atomic(path: &Path, content: &str) -> Result<(), HarnessError> {
    fs::write(path, content)?;
    Ok(())
}

/// Node snapshot: `x0,..,x{n-1},value`, one row per node in flat order.
pub fn write_snapshot(path: &Path, v: &GridValueFunction) -> Result<(), HarnessError> {
    let grid = v.grid();
    let n = grid.dim();
    let mut out = String::new();
    for a in 0..n {
        let _ = write!(out, "x{a},");
    }
    out.push_str("value\n");
    let mut coords = vec![0.0; n];
    for node in 0..grid.num_nodes() {
        grid.node_into(node, &mut coords);
        for c in &coords {
            let _ = write!(out, "{c},");
        }
        let _ = writeln!(out, "{}", v.value_at(node));
    }
    write_atomic(path, &out)
}

/// Reads back a snapshot CSV into (coordinate rows, values).
pub fn read_snapshot(path: &Path) -> Result<(Vec<Vec<f64>>, Vec<f64>), HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut coords = Vec::new();
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |s: &str| -> Result<f64, HarnessError> {
            s.parse::<f64>()
                .map_err(|_| HarnessError::Internal(format!("bad float `{s}` in {path:?}")))
        };
        let mut row = Vec::with_capacity(fields.len() - 1);
        for f in &fields[..fields.len() - 1] {
            row.push(parse(f)?);
        }
        values.push(parse(fields[fields.len() - 1])?);
        coords.push(row);
    }
    Ok((coords, values))
}

/// Exact-VI trace:
/// `iteration,sup_norm_delta,monotonicity_residual,lyapunov_residual,elapsed_seconds`.
pub fn write_exact_trace(path: &Path, rows: &[TraceRow]) -> Result<(), HarnessError> {
    let mut out =
        String::from("iteration,sup_norm_delta,monotonicity_residual,lyapunov_residual,elapsed_seconds\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.iteration,
            r.sup_norm_delta,
            r.max_monotonicity_residual,
            r.max_lyapunov_residual,
            r.elapsed_seconds
        );
    }
    write_atomic(path, &out)
}

/// Approximate-VI trace:
/// `iteration,c,gamma,sandwich_margin,semi_monotonicity_margin,breve_bound_margin,lyapunov_margin,elapsed_seconds`.
pub fn write_avi_trace(path: &Path, rows: &[AviTraceRow]) -> Result<(), HarnessError> {
    let mut out = String::from(
        "iteration,c,gamma,sandwich_margin,semi_monotonicity_margin,breve_bound_margin,lyapunov_margin,elapsed_seconds\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.iteration,
            r.c,
            r.gamma,
            r.sandwich_margin,
            r.semi_monotonicity_margin,
            r.breve_bound_margin,
            r.lyapunov_margin,
            r.elapsed_seconds
        );
    }
    write_atomic(path, &out)
}

/// Trajectory: `k,x0..x{n-1},u0..u{m-1},value,utility,cumulative_utility`.
/// Control and cost fields are empty on the final row (no step taken from it).
pub fn write_trajectory(
    path: &Path,
    rec: &TrajectoryRecord,
    n: usize,
    m: usize,
) -> Result<(), HarnessError> {
    let mut out = String::from("k");
    for a in 0..n {
        let _ = write!(out, ",x{a}");
    }
    for j in 0..m {
        let _ = write!(out, ",u{j}");
    }
    out.push_str(",value,utility,cumulative_utility\n");
    for (k, x) in rec.states.iter().enumerate() {
        let _ = write!(out, "{k}");
        for v in x {
            let _ = write!(out, ",{v}");
        }
        if k < rec.controls.len() {
            for u in &rec.controls[k] {
                let _ = write!(out, ",{u}");
            }
        } else {
            for _ in 0..m {
                out.push(',');
            }
        }
        if k < rec.values.len() {
            let _ = write!(out, ",{}", rec.values[k]);
        } else {
            out.push(',');
        }
        if k < rec.utilities.len() {
            let _ = write!(out, ",{},{}", rec.utilities[k], rec.cumulative_utility[k]);
        } else {
            out.push_str(",,");
        }
        out.push('\n');
    }
    write_atomic(path, &out)
}

/// Region-of-attraction mask: `x0..x{n-1},member,origin_component`.
pub fn write_mask(
    path: &Path,
    grid: &stabvi_core::valuefn::Grid,
    set: &SublevelSet,
) -> Result<(), HarnessError> {
    let n = grid.dim();
    let mut out = String::new();
    for a in 0..n {
        let _ = write!(out, "x{a},");
    }
    out.push_str("member,origin_component\n");
    let mut coords = vec![0.0; n];
    for node in 0..grid.num_nodes() {
        grid.node_into(node, &mut coords);
        for c in &coords {
            let _ = write!(out, "{c},");
        }
        let _ = writeln!(
            out,
            "{},{}",
            u8::from(set.members[node]),
            u8::from(set.origin_component[node])
        );
    }
    write_atomic(path, &out)
}
