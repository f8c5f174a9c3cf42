//! Output formatting: CSV for machine consumption, aligned text tables for
//! the terminal, JSON for composite reports.

use crate::error::CliResult;
use crate::experiments::{RmseReport, ScalingReport, SolveStats};
use gphodlr::ScanPoint;
use serde::Serialize;
use std::io::Write;

/// Serialize rows as CSV with a header derived from the row type.
pub fn write_csv<T: Serialize, W: Write>(writer: W, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Serialize any report as pretty JSON.
pub fn write_json<T: Serialize, W: Write>(mut writer: W, report: &T) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut writer, report)?;
    writeln!(writer)?;
    Ok(())
}

/// Aligned text table of solve statistics.
pub fn stats_table(rows: &[SolveStats]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<7} {:<12} {:>8} {:>4} {:>12} {:>12} {:>12} {:>12} {:>10} {:>7} {:>9} {:>7}\n",
        "engine",
        "kernel",
        "n",
        "dim",
        "assembly_s",
        "factor_s",
        "solve_s",
        "det_s",
        "rel_error",
        "levels",
        "max_rank",
        "pruned"
    ));
    for s in rows {
        out.push_str(&format!(
            "{:<7} {:<12} {:>8} {:>4} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>10.2e} {:>7} {:>9} {:>7}\n",
            s.engine,
            s.kernel,
            s.n,
            s.dim,
            s.assembly_s,
            s.factor_s,
            s.solve_s,
            s.det_s,
            s.rel_error,
            s.levels,
            s.max_rank,
            s.pruned_leaves
        ));
    }
    out
}

/// Text summary of a scaling comparison.
pub fn scaling_table(report: &ScalingReport) -> String {
    let mut out = stats_table(&report.hodlr);
    out.push_str(&stats_table(&report.dense));
    out.push_str(&format!(
        "hodlr factor-time slope: {:.3}\ndense factor-time slope: {:.3}\n",
        report.hodlr_factor_slope, report.dense_factor_slope
    ));
    out
}

/// Text table of a tolerance sweep.
pub fn rmse_table(report: &RmseReport) -> String {
    let mut out = format!(
        "n = {}, dense RMSE = {:.16}\n{:>10} {:>22} {:>14}\n",
        report.n, report.rmse_dense, "eps", "rmse", "diff_vs_dense"
    );
    for p in &report.points {
        out.push_str(&format!(
            "{:>10.1e} {:>22.16} {:>14.2e}\n",
            p.eps, p.rmse, p.abs_diff_vs_dense
        ));
    }
    out
}

/// Text table of a likelihood scan.
pub fn scan_table(param: &str, rows: &[ScanPoint]) -> String {
    let mut out = format!("{:>16} {:>22}\n", param, "log_likelihood");
    for r in rows {
        match (r.log_likelihood, &r.error) {
            (Some(ll), _) => out.push_str(&format!("{:>16.8} {:>22.10}\n", r.value, ll)),
            (None, Some(e)) => out.push_str(&format!("{:>16.8} failed: {e}\n", r.value)),
            (None, None) => out.push_str(&format!("{:>16.8} failed\n", r.value)),
        }
    }
    out
}
