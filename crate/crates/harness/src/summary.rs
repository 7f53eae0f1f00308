//! Ensemble statistics over Monte Carlo runs.

use std::path::Path;

use se23nav::ErrorDefinition;

use crate::metrics::{ErrorRow, COLUMNS};
use crate::records::{LogError, LogWriter};
use crate::runner::RunResult;

pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Linear-interpolated percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let x = q * (n - 1) as f64;
            let i = (x.floor() as usize).min(n - 2);
            let w = x - i as f64;
            sorted[i] + (sorted[i + 1] - sorted[i]) * w
        }
    }
}

/// Per-epoch RMS over the runs that reached that epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePoint {
    pub row: ErrorRow,
    pub runs: usize,
}

/// Terminal statistics of `|error|` per column (column 0, time, is unused).
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalStats {
    pub rms: ErrorRow,
    pub p50: ErrorRow,
    pub p95: ErrorRow,
    pub max: ErrorRow,
    /// Runs where the filter stopped early; they count as infinite error.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSummary {
    pub definition: ErrorDefinition,
    pub curve: Vec<EnsemblePoint>,
    pub terminal: TerminalStats,
}

pub fn summarize_filter(results: &[RunResult], d: ErrorDefinition) -> FilterSummary {
    let runs: Vec<_> = results.iter().filter_map(|r| r.filter(d)).collect();
    let len = runs.iter().map(|f| f.rows.len()).max().unwrap_or(0);
    let curve = (0..len)
        .map(|i| {
            let rows: Vec<&ErrorRow> = runs.iter().filter_map(|f| f.rows.get(i)).collect();
            let mut row = [0.0; 16];
            row[0] = rows[0][0];
            for (c, out) in row.iter_mut().enumerate().skip(1) {
                *out = rms(&rows.iter().map(|r| r[c]).collect::<Vec<_>>());
            }
            EnsemblePoint { row, runs: rows.len() }
        })
        .collect();

    let failures = runs.iter().filter(|f| f.terminal().is_none()).count();
    let mut terminal = TerminalStats { rms: [0.0; 16], p50: [0.0; 16], p95: [0.0; 16], max: [0.0; 16], failures };
    for c in 1..16 {
        let mut v: Vec<f64> = runs.iter().map(|f| f.terminal().map_or(f64::INFINITY, |r| r[c].abs())).collect();
        v.sort_by(f64::total_cmp);
        terminal.rms[c] = rms(&v);
        terminal.p50[c] = percentile(&v, 0.5);
        terminal.p95[c] = percentile(&v, 0.95);
        terminal.max[c] = v.last().copied().unwrap_or(f64::NAN);
    }
    FilterSummary { definition: d, curve, terminal }
}

pub fn summarize(results: &[RunResult], definitions: &[ErrorDefinition]) -> Vec<FilterSummary> {
    definitions.iter().map(|&d| summarize_filter(results, d)).collect()
}

/// Writes the RMS curves (`summary_rms.csv`) and terminal statistics
/// (`summary_terminal.csv`).
pub fn write_summary(dir: &Path, summaries: &[FilterSummary]) -> Result<(), LogError> {
    let mut header = vec!["filter", "runs"];
    header.extend(COLUMNS);
    let mut w = LogWriter::create(&dir.join("summary_rms.csv"), &header)?;
    for s in summaries {
        for p in &s.curve {
            w.write_fields(s.definition.tag(), &p.runs.to_string(), &p.row)?;
        }
    }
    w.finish()?;

    let mut header = vec!["filter", "stat"];
    header.extend(&COLUMNS[1..]);
    let mut w = LogWriter::create(&dir.join("summary_terminal.csv"), &header)?;
    for s in summaries {
        let t = &s.terminal;
        for (name, row) in [("rms", &t.rms), ("p50", &t.p50), ("p95", &t.p95), ("max", &t.max)] {
            w.write_fields(s.definition.tag(), name, &row[1..])?;
        }
        w.write_fields(s.definition.tag(), "failures", &[t.failures as f64; 15])?;
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::FilterRun;
    use se23nav::Hygiene;

    fn result(run: usize, rows: Vec<ErrorRow>) -> RunResult {
        RunResult {
            run,
            seed: run as u64,
            filters: vec![FilterRun {
                definition: ErrorDefinition::Right,
                rows,
                hygiene: Hygiene::default(),
                failure: None,
                imu_untouched: true,
            }],
        }
    }

    fn row(t: f64, v: f64) -> ErrorRow {
        let mut r = [v; 16];
        r[0] = t;
        r
    }

    #[test]
    fn hand_arithmetic() {
        assert!((rms(&[3.0, 4.0]) - 3.535_533_905_932_737_6).abs() < 1e-15);
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 1.0), 4.0);
    }

    #[test]
    fn single_run_is_its_own_summary() {
        let rows = vec![row(0.0, 2.0), row(1.0, 0.5)];
        let s = summarize_filter(&[result(0, rows.clone())], ErrorDefinition::Right);
        assert_eq!(s.curve.iter().map(|p| p.row).collect::<Vec<_>>(), rows);
        assert_eq!(s.terminal.rms[3], 0.5);
        assert_eq!(s.terminal.max[3], 0.5);
    }

    #[test]
    fn constant_error_has_that_rms() {
        let runs: Vec<_> = (0..7).map(|r| result(r, vec![row(0.0, 1.0), row(1.0, -1.0)])).collect();
        let s = summarize_filter(&runs, ErrorDefinition::Right);
        assert!(s.curve.iter().all(|p| p.row[1..].iter().all(|v| (v - 1.0).abs() < 1e-15) && p.runs == 7));
        assert!((s.terminal.rms[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn failures_count_as_infinite() {
        let mut bad = result(1, vec![row(0.0, 1.0)]);
        bad.filters[0].failure = Some("singular".into());
        let s = summarize_filter(&[result(0, vec![row(0.0, 1.0), row(1.0, 1.0)]), bad], ErrorDefinition::Right);
        assert_eq!(s.terminal.failures, 1);
        assert_eq!(s.terminal.max[3], f64::INFINITY);
        assert_eq!((s.curve[0].runs, s.curve[1].runs), (2, 1));
    }
}
