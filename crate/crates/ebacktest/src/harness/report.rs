//! Aggregate tables and their CSV/JSON serializations.

use std::io::Write;

use serde::Serialize;

use super::{StructuralCell, Trajectory};

pub const SCHEMA_VERSION: u32 = 1;

/// One (threshold) cell of a detection table.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateCell {
    pub threshold: f64,
    pub detection_pct: f64,
    /// Conditional on detection; `None` when no replication detected.
    pub mean_days_to_detect: Option<f64>,
}

/// One labeled row: a (forecaster, adjustment) combination.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub label: String,
    pub cells: Vec<AggregateCell>,
    pub mean_final_log_e: f64,
    pub n_reps: usize,
    pub failures: usize,
}

impl AggregateRow {
    pub fn detection_pct(&self, threshold: f64) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.threshold == threshold)
            .map(|c| c.detection_pct)
    }

    pub fn mean_days(&self, threshold: f64) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.threshold == threshold)
            .and_then(|c| c.mean_days_to_detect)
    }
}

/// A cross-replication summary table.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateTable {
    pub schema_version: u32,
    pub rows: Vec<AggregateRow>,
}

impl AggregateTable {
    pub fn new(rows: Vec<AggregateRow>) -> Self {
        AggregateTable {
            schema_version: SCHEMA_VERSION,
            rows,
        }
    }

    pub fn row(&self, label: &str) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Concatenates tables produced by separate experiment calls.
    pub fn merged(tables: impl IntoIterator<Item = AggregateTable>) -> Self {
        AggregateTable::new(tables.into_iter().flat_map(|t| t.rows).collect())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("table serializes")
    }

    /// One CSV line per (row, threshold) cell.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "label",
            "threshold",
            "detection_pct",
            "mean_days_to_detect",
            "mean_final_log_e",
            "n_reps",
            "failures",
        ])?;
        for row in &self.rows {
            for cell in &row.cells {
                w.write_record([
                    row.label.clone(),
                    format!("{}", cell.threshold),
                    format!("{:.4}", cell.detection_pct),
                    cell.mean_days_to_detect
                        .map(|d| format!("{d:.2}"))
                        .unwrap_or_default(),
                    format!("{:.6}", row.mean_final_log_e),
                    row.n_reps.to_string(),
                    row.failures.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-day trajectory export: `t, lambda, e_value, log_wealth,
/// sup_log_wealth`.
pub fn write_trajectory_csv<W: Write>(trajectory: &Trajectory, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "lambda", "e_value", "log_wealth", "sup_log_wealth"])?;
    for p in &trajectory.points {
        w.write_record([
            p.t.to_string(),
            format!("{:.10}", p.lambda),
            format!("{}", p.e_value),
            format!("{}", p.log_wealth),
            format!("{}", p.sup_log_wealth),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// CSV for the structural-change grid: one line per change day.
pub fn write_structural_csv<W: Write>(cells: &[StructuralCell], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["change_day", "detection_pct", "arl", "n_reps", "failures"])?;
    for c in cells {
        w.write_record([
            c.change_day.to_string(),
            format!("{:.4}", c.detection_pct),
            c.arl.map(|a| format!("{a:.2}")).unwrap_or_default(),
            c.n_reps.to_string(),
            c.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
