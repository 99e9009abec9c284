use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use ecsqp::hybrid::run_mode;
use ecsqp::{HybridResult, Mode, MutationRate, Selection};
use rayon::prelude::*;

use crate::config::{Batch, Plan};
use crate::report::{self, fmt_num, AggregateReport};
use crate::CliError;

/// Seed of run `index` in a batch.
pub fn run_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

pub struct BatchOutcome {
    pub batch: Batch,
    /// Indexed by run; `Err` holds the failure message.
    pub runs: Vec<Result<HybridResult, String>>,
    pub report: AggregateReport,
    pub dir: PathBuf,
}

impl BatchOutcome {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.is_err()).count()
    }
}

fn one_run(batch: &Batch, index: usize) -> Result<HybridResult, String> {
    let seed = run_seed(batch.base_seed, index);
    match catch_unwind(AssertUnwindSafe(|| run_mode(&batch.problem, &batch.hybrid, batch.mode, seed))) {
        Ok(Ok(r)) => Ok(r),
        Ok(Err(e)) => Err(format!("run {index} (seed {seed}): {e}")),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("run {index} (seed {seed}) panicked: {msg}"))
        }
    }
}

/// Runs every batch of `plan` and writes traces, aggregates and the summary
/// under `plan.output`.
pub fn execute(plan: &Plan) -> Result<Vec<BatchOutcome>, CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if plan.jobs > 0 {
        pool = pool.num_threads(plan.jobs);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    mkdir(&plan.output)?;

    let mut outcomes = Vec::new();
    for batch in &plan.batches {
        let dir = match &batch.label {
            Some(l) => plan.output.join(l),
            None => plan.output.clone(),
        };
        mkdir(&dir)?;
        let runs: Vec<_> = pool.install(|| {
            (0..batch.repetitions)
                .into_par_iter()
                .map(|i| {
                    let r = one_run(batch, i);
                    let written = match &r {
                        Ok(res) => {
                            report::write_file(&dir.join(format!("trace_{i}.csv")), |b| report::write_trace(b, &res.trace))
                        }
                        Err(_) => Ok(()),
                    };
                    written.map(|_| r)
                })
                .collect::<Result<Vec<_>, CliError>>()
        })?;
        for r in &runs {
            if let Err(msg) = r {
                eprintln!("warning: {msg}");
            }
        }
        let ok: Vec<&HybridResult> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
        let failed = runs.len() - ok.len();
        let agg = report::aggregate(&ok, failed);
        report::write_file(&dir.join("aggregate.csv"), |b| report::write_aggregate(b, &agg))?;
        outcomes.push(BatchOutcome {
            batch: batch.clone(),
            runs,
            report: agg,
            dir,
        });
    }
    let summary = summary_table(&outcomes);
    report::write_file(&plan.output.join("summary.txt"), |b| {
        b.extend_from_slice(summary.as_bytes());
        Ok(())
    })?;
    print!("{summary}");
    Ok(outcomes)
}

fn mkdir(p: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
}

fn describe_mutation(m: MutationRate) -> String {
    match m {
        MutationRate::InverseLength => "1/L".into(),
        MutationRate::Fixed(p) => fmt_num(p),
    }
}

/// First generation at which the averaged crossover width is at or below
/// `threshold`.
pub fn averaged_crossover_crossing(report: &AggregateReport, threshold: f64) -> Option<usize> {
    let k = report::SERIES.iter().position(|s| *s == "crossover_width").unwrap();
    report
        .rows
        .iter()
        .find(|r| r.series[k].is_some_and(|(m, _)| m <= threshold))
        .map(|r| r.generation)
}

pub fn summary_table(outcomes: &[BatchOutcome]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:<8} {:<4} {:>5} {:>5} {:>6} {:>5} {:>6} {:>14} {:>12} {:>12} {:>14} {:>14} {:>10} {:>7}",
        "label", "problem", "sel", "N", "Pc", "Pm", "mode", "runs", "mean_best", "sd", "se", "min", "max", "mean_evals", "xw<=thr"
    );
    for o in outcomes {
        let b = &o.batch;
        let sel = match b.hybrid.ga.selection {
            Selection::BinaryTournament => "BTS",
            Selection::RouletteWheel => "RWS",
        };
        let thr = b.hybrid.switching.sigma_threshold.unwrap_or(0.01);
        let crossing = averaged_crossover_crossing(&o.report, thr).map(|g| g.to_string()).unwrap_or_else(|| "-".into());
        let (mean, sd, se, min, max, ev) = match &o.report.final_best {
            Some(f) => (f.mean, f.sd, f.se, f.min, f.max, f.mean_evaluations),
            None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN),
        };
        let _ = writeln!(
            s,
            "{:<12} {:<8} {:<4} {:>5} {:>5} {:>6} {:>5} {:>6} {:>14} {:>12} {:>12} {:>14} {:>14} {:>10} {:>7}",
            b.label.as_deref().unwrap_or("-"),
            format!("{}-{}", b.problem.name(), b.problem.dimension),
            sel,
            b.hybrid.ga.population_size,
            fmt_num(b.hybrid.ga.crossover_rate),
            describe_mutation(b.hybrid.ga.mutation_rate),
            b.mode.as_str(),
            format!("{}/{}", b.repetitions - o.failures(), b.repetitions),
            fmt_num(mean),
            fmt_num(sd),
            fmt_num(se),
            fmt_num(min),
            fmt_num(max),
            fmt_num(ev),
            crossing,
        );
    }
    s
}

/// `price-trace` is `run` pinned to EC-only.
pub fn force_ec(plan: &mut Plan) {
    for b in &mut plan.batches {
        b.mode = Mode::EcOnly;
    }
}
