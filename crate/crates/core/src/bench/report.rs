use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Condition, Slice};
use crate::router::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellResult {
    pub condition: Condition,
    pub slice: Slice,
    pub correct: u32,
    pub total: u32,
}

impl CellResult {
    /// `correct / total`, or 0 for an empty cell.
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            f64::from(self.correct) / f64::from(self.total)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemOutcome {
    pub condition: Condition,
    pub item_id: String,
    pub slice: Slice,
    pub outcome: Outcome,
}

/// Accuracy matrix. Stores counts only; every accuracy is derived.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub conditions: Vec<Condition>,
    pub cells: Vec<CellResult>,
    pub items: Vec<ItemOutcome>,
}

impl ResultsTable {
    /// Builds counts from item outcomes. Rows follow `conditions`.
    pub fn from_outcomes(conditions: &[Condition], items: Vec<ItemOutcome>) -> Self {
        let mut cells = Vec::with_capacity(conditions.len() * 3);
        for &condition in conditions {
            for slice in Slice::ALL {
                let (mut correct, mut total) = (0, 0);
                for it in items.iter().filter(|i| i.condition == condition && i.slice == slice) {
                    total += 1;
                    if it.outcome == Outcome::Correct {
                        correct += 1;
                    }
                }
                cells.push(CellResult {
                    condition,
                    slice,
                    correct,
                    total,
                });
            }
        }
        ResultsTable {
            conditions: conditions.to_vec(),
            cells,
            items,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    pub fn cell(&self, condition: Condition, slice: Slice) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.condition == condition && c.slice == slice)
    }

    pub fn accuracy(&self, condition: Condition, slice: Slice) -> Option<f64> {
        self.cell(condition, slice).map(CellResult::accuracy)
    }

    /// Unweighted mean of the slice accuracies. Empty slices are left out,
    /// so a suite without Slice C averages over A and B only.
    pub fn overall(&self, condition: Condition) -> Option<f64> {
        let cells: Option<Vec<&CellResult>> = Slice::ALL
            .iter()
            .map(|&s| self.cell(condition, s))
            .collect();
        let accs: Vec<f64> = cells?
            .into_iter()
            .filter(|c| c.total > 0)
            .map(CellResult::accuracy)
            .collect();
        if accs.is_empty() {
            return Some(0.0);
        }
        Some(accs.iter().sum::<f64>() / accs.len() as f64)
    }

    /// Row of `[A, B, C, overall]`.
    pub fn row(&self, condition: Condition) -> Option<[f64; 4]> {
        Some([
            self.accuracy(condition, Slice::A)?,
            self.accuracy(condition, Slice::B)?,
            self.accuracy(condition, Slice::C)?,
            self.overall(condition)?,
        ])
    }

    pub fn failures(&self, condition: Condition, slice: Slice) -> Vec<&str> {
        self.items
            .iter()
            .filter(|i| i.condition == condition && i.slice == slice && i.outcome == Outcome::Incorrect)
            .map(|i| i.item_id.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Text,
    Csv,
    Machine,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "text-table" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "machine" | "json" | "machine-readable" => Ok(ReportFormat::Machine),
            _ => Err(format!("unknown report format \"{s}\" (expected text, csv or machine)")),
        }
    }
}

const STRATEGY_HEADER: &str = "Strategy";

fn text_table(t: &ResultsTable) -> String {
    let width = t
        .conditions
        .iter()
        .map(|c| c.label().len())
        .chain([STRATEGY_HEADER.len()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = write!(out, "{STRATEGY_HEADER:<width$}");
    for s in Slice::ALL {
        let _ = write!(out, " {}", s.title());
    }
    out.push_str(" Overall\n");
    for &c in &t.conditions {
        let Some(row) = t.row(c) else { continue };
        let _ = write!(out, "{:<width$}", c.label());
        for v in row {
            let _ = write!(out, " {v:.3}");
        }
        out.push('\n');
    }
    out
}

fn csv(t: &ResultsTable) -> String {
    let mut out = String::from("condition,slice,correct,total,accuracy\n");
    for &c in &t.conditions {
        for s in Slice::ALL {
            if let Some(cell) = t.cell(c, s) {
                let _ = writeln!(
                    out,
                    "{},{:?},{},{},{:.3}",
                    c,
                    s,
                    cell.correct,
                    cell.total,
                    cell.accuracy()
                );
            }
        }
        if let Some(o) = t.overall(c) {
            let (k, n) = Slice::ALL
                .iter()
                .filter_map(|&s| t.cell(c, s))
                .fold((0, 0), |(k, n), cell| (k + cell.correct, n + cell.total));
            let _ = writeln!(out, "{c},overall,{k},{n},{o:.3}");
        }
    }
    out
}

pub fn emit_report(table: &ResultsTable, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => text_table(table),
        ReportFormat::Csv => csv(table),
        ReportFormat::Machine => {
            let mut s = serde_json::to_string_pretty(table).expect("table serializes");
            s.push('\n');
            s
        }
    }
}

/// Parses a machine-readable report.
pub fn parse_report(text: &str) -> Result<ResultsTable, serde_json::Error> {
    serde_json::from_str(text)
}
