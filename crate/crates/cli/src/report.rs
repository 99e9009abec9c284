//! Trace and aggregate CSV files.
//!
//! Trace header (one row per EC generation or SQP iteration):
//! `phase,step,evaluations,best,mean,worst,selection_term,crossover_term,
//! mutation_term,crossover_width,mutation_width`. Price columns are empty on
//! rows that have no decomposition (initial populations, SQP).
//!
//! Aggregate header: `generation,runs` followed by `<col>_mean,<col>_se` for
//! each numeric column, over the EC rows of the first EC phase.

use std::io::Write;
use std::path::Path;

use ecsqp::hybrid::{Phase, TraceRow};
use ecsqp::HybridResult;

use crate::CliError;

pub const TRACE_HEADER: [&str; 11] = [
    "phase",
    "step",
    "evaluations",
    "best",
    "mean",
    "worst",
    "selection_term",
    "crossover_term",
    "mutation_term",
    "crossover_width",
    "mutation_width",
];

/// Aggregated per-generation columns, in file order.
pub const SERIES: [&str; 8] = [
    "best",
    "mean",
    "worst",
    "selection_term",
    "crossover_term",
    "mutation_term",
    "crossover_width",
    "mutation_width",
];

/// Nine significant digits, shortest form.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        // rounding may carry into a new digit; one less decimal is still 9 sig
        let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        let s = format!("{v:.8e}");
        let (m, e) = s.split_once('e').unwrap();
        let m = if m.contains('.') { m.trim_end_matches('0').trim_end_matches('.') } else { m };
        format!("{m}e{e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// The numeric series of a row, in `SERIES` order.
pub fn row_series(r: &TraceRow) -> [Option<f64>; 8] {
    let c = r.contribution.as_ref();
    [
        Some(r.best),
        Some(r.mean),
        Some(r.worst),
        c.map(|c| c.selection_term),
        c.map(|c| c.crossover_term),
        c.map(|c| c.mutation_term),
        c.map(|c| c.crossover_width()),
        c.map(|c| c.mutation_width()),
    ]
}

pub fn write_trace<W: Write>(out: W, trace: &[TraceRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in trace {
        let mut rec = vec![r.phase.as_str().to_string(), r.step.to_string(), r.evaluations.to_string()];
        rec.extend(row_series(r).iter().map(|v| opt(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and standard error (sample sd over sqrt R). The error is NaN for a
/// single sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One aggregated generation.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub generation: usize,
    pub runs: usize,
    /// `(mean, se)` per `SERIES` entry; `None` when no run has the column.
    pub series: Vec<Option<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalStats {
    pub runs: usize,
    pub failed: usize,
    pub mean: f64,
    pub se: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub mean_evaluations: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub rows: Vec<AggregateRow>,
    pub final_best: Option<FinalStats>,
}

/// EC rows of the first EC phase of a run; SQP-only runs have none.
fn ec_rows(r: &HybridResult) -> impl Iterator<Item = &TraceRow> {
    r.trace.iter().take_while(|t| t.phase == Phase::Ec)
}

/// Averages the EC-phase series over runs, generation by generation. Runs
/// that stopped early simply drop out of later generations.
pub fn aggregate(results: &[&HybridResult], failed: usize) -> AggregateReport {
    let max_gen = results.iter().flat_map(|r| ec_rows(r).map(|t| t.step)).max();
    let mut rows = Vec::new();
    if let Some(max_gen) = max_gen {
        for g in 0..=max_gen {
            let at: Vec<&TraceRow> = results.iter().filter_map(|r| ec_rows(r).find(|t| t.step == g)).collect();
            if at.is_empty() {
                continue;
            }
            let series = (0..SERIES.len())
                .map(|k| {
                    let xs: Vec<f64> = at.iter().filter_map(|t| row_series(t)[k]).collect();
                    (!xs.is_empty()).then(|| mean_se(&xs))
                })
                .collect();
            rows.push(AggregateRow {
                generation: g,
                runs: at.len(),
                series,
            });
        }
    }
    let final_best = (!results.is_empty()).then(|| {
        let f: Vec<f64> = results.iter().map(|r| r.f_star).collect();
        let (mean, se) = mean_se(&f);
        let sd = if f.len() > 1 { se * (f.len() as f64).sqrt() } else { f64::NAN };
        let evals: Vec<f64> = results.iter().map(|r| r.evaluations.total() as f64).collect();
        FinalStats {
            runs: f.len(),
            failed,
            mean,
            se,
            sd,
            min: f.iter().copied().fold(f64::INFINITY, f64::min),
            max: f.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_evaluations: mean_se(&evals).0,
        }
    });
    AggregateReport { rows, final_best }
}

pub fn write_aggregate<W: Write>(out: W, report: &AggregateReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["generation".to_string(), "runs".to_string()];
    for s in SERIES {
        header.push(format!("{s}_mean"));
        header.push(format!("{s}_se"));
    }
    w.write_record(&header)?;
    for row in &report.rows {
        let mut rec = vec![row.generation.to_string(), row.runs.to_string()];
        for s in &row.series {
            match s {
                Some((m, se)) => {
                    rec.push(fmt_num(*m));
                    rec.push(fmt_num(*se));
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, buf).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
