//! TSV tables: effectiveness per (row, column) with significance markers,
//! and relative change between two orderings.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::report::{relative_change, EvalReport, RelativeChange};
use super::stats::paired_t_test;

pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Done(EvalReport),
    Failed(String),
}

/// Cells keyed by `(row, column)`; rows and columns keep insertion order.
#[derive(Debug, Clone, Default)]
pub struct Grid {
    rows: Vec<String>,
    columns: Vec<String>,
    cells: BTreeMap<(String, String), CellOutcome>,
}

impl Grid {
    pub fn insert(&mut self, row: &str, column: &str, outcome: CellOutcome) {
        if !self.rows.iter().any(|r| r == row) {
            self.rows.push(row.to_owned());
        }
        if !self.columns.iter().any(|c| c == column) {
            self.columns.push(column.to_owned());
        }
        self.cells.insert((row.to_owned(), column.to_owned()), outcome);
    }

    pub fn get(&self, row: &str, column: &str) -> Option<&CellOutcome> {
        self.cells.get(&(row.to_owned(), column.to_owned()))
    }

    fn done(&self, row: &str, column: &str) -> Option<&EvalReport> {
        match self.get(row, column) {
            Some(CellOutcome::Done(r)) => Some(r),
            _ => None,
        }
    }

    /// Aggregate per cell with `a` when significantly different from the
    /// column's best cell and `b` when significantly different from its
    /// worst (paired t-test, p < 0.05). Failed cells read `FAILED`.
    pub fn effectiveness_tsv(&self) -> String {
        let mut marks: BTreeMap<(String, String), String> = BTreeMap::new();
        for col in &self.columns {
            let done: Vec<(&String, &EvalReport)> =
                self.rows.iter().filter_map(|r| self.done(r, col).map(|rep| (r, rep))).collect();
            let by_agg = |pick_max: bool| {
                done.iter().copied().reduce(|acc, x| {
                    let better =
                        if pick_max { x.1.aggregate > acc.1.aggregate } else { x.1.aggregate < acc.1.aggregate };
                    if better {
                        x
                    } else {
                        acc
                    }
                })
            };
            let (Some(best), Some(worst)) = (by_agg(true), by_agg(false)) else { continue };
            for &(row, rep) in &done {
                let mut m = String::new();
                for (letter, reference) in [('a', best), ('b', worst)] {
                    if reference.0 == row {
                        continue;
                    }
                    let (x, y) = rep.paired_with(reference.1);
                    if paired_t_test(&x, &y).is_ok_and(|s| s.is_significant(ALPHA)) {
                        m.push(letter);
                    }
                }
                marks.insert((row.clone(), col.clone()), m);
            }
        }

        let mut out = String::from("run");
        for c in &self.columns {
            write!(out, "\t{c}").unwrap();
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(row);
            for col in &self.columns {
                out.push('\t');
                match self.get(row, col) {
                    None => out.push('-'),
                    Some(CellOutcome::Failed(_)) => out.push_str("FAILED"),
                    Some(CellOutcome::Done(rep)) => {
                        write!(out, "{:.4}", rep.aggregate).unwrap();
                        let m = &marks[&(row.clone(), col.clone())];
                        if !m.is_empty() {
                            write!(out, "^{m}").unwrap();
                        }
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Percentage change from `baseline` to `treatment` per cell, `*` marking a
/// significant paired difference. `n/a` where either side is missing or the
/// baseline is zero.
pub fn relative_change_tsv(baseline: &Grid, treatment: &Grid) -> (String, BTreeMap<(String, String), RelativeChange>) {
    let mut changes = BTreeMap::new();
    let mut out = String::from("run");
    for c in &baseline.columns {
        write!(out, "\t{c}").unwrap();
    }
    out.push('\n');
    for row in &baseline.rows {
        out.push_str(row);
        for col in &baseline.columns {
            out.push('\t');
            let (Some(b), Some(t)) = (baseline.done(row, col), treatment.done(row, col)) else {
                out.push_str("n/a");
                continue;
            };
            let rc = relative_change(b, t);
            match rc.percent {
                Some(p) => {
                    write!(out, "{p:+.2}%").unwrap();
                    if rc.is_significant(ALPHA) {
                        out.push('*');
                    }
                }
                None => out.push_str("n/a"),
            }
            changes.insert((row.clone(), col.clone()), rc);
        }
        out.push('\n');
    }
    (out, changes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(vals: &[f64]) -> EvalReport {
        let per_query: BTreeMap<String, f64> = vals.iter().enumerate().map(|(i, v)| (format!("q{i:02}"), *v)).collect();
        EvalReport {
            metric_name: "m".into(),
            run_tag: "t".into(),
            aggregate: vals.iter().sum::<f64>() / vals.len() as f64,
            n_evaluated: vals.len(),
            n_skipped: 0,
            skipped: vec![],
            per_query,
        }
    }

    #[test]
    fn markers_and_failures() {
        let mut g = Grid::default();
        let high: Vec<f64> = (0..20).map(|i| 0.8 + (i % 3) as f64 * 0.01).collect();
        let mid: Vec<f64> = (0..20).map(|i| 0.5 + (i % 4) as f64 * 0.01).collect();
        let low: Vec<f64> = (0..20).map(|i| 0.2 + (i % 5) as f64 * 0.01).collect();
        g.insert("high", "ds", CellOutcome::Done(rep(&high)));
        g.insert("mid", "ds", CellOutcome::Done(rep(&mid)));
        g.insert("low", "ds", CellOutcome::Done(rep(&low)));
        g.insert("broken", "ds", CellOutcome::Failed("boom".into()));
        let tsv = g.effectiveness_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "run\tds");
        assert_eq!(lines[1], "high\t0.8095^b");
        assert_eq!(lines[2], "mid\t0.5150^ab");
        assert_eq!(lines[3], "low\t0.2200^a");
        assert_eq!(lines[4], "broken\tFAILED");
    }

    #[test]
    fn relative_change_cells() {
        let mut pre = Grid::default();
        let mut con = Grid::default();
        pre.insert("fixed", "ds", CellOutcome::Done(rep(&[0.4, 0.5, 0.6, 0.5])));
        con.insert("fixed", "ds", CellOutcome::Done(rep(&[0.41, 0.52, 0.6, 0.51])));
        pre.insert("lumber", "ds", CellOutcome::Done(rep(&[0.0, 0.0, 0.0])));
        con.insert("lumber", "ds", CellOutcome::Done(rep(&[0.1, 0.0, 0.0])));
        pre.insert("semantic", "ds", CellOutcome::Failed("x".into()));
        let (tsv, changes) = relative_change_tsv(&pre, &con);
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[1], "fixed\t+2.00%");
        assert_eq!(lines[2], "lumber\tn/a");
        assert_eq!(lines[3], "semantic\tn/a");
        assert_eq!(changes.len(), 2);
    }
}
