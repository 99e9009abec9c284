use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ecsqp::{Benchmark, BenchmarkProblem, Mode};
use ecsqp_cli::adcheck::{self, Corrupted};
use ecsqp_cli::config::{lookup_problem, Overrides, RunConfig};
use ecsqp_cli::report::fmt_num;
use ecsqp_cli::{runner, CliError};

#[derive(Parser)]
#[command(name = "ecsqp", version, about = "Hybrid GA / Newton-SQP optimizer experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Hybrid,
    Ec,
    Sqp,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Hybrid => Mode::Hybrid,
            ModeArg::Ec => Mode::EcOnly,
            ModeArg::Sqp => Mode::SqpOnly,
        }
    }
}

#[derive(clap::Args)]
struct BatchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 or unset uses every core.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run R seeded repetitions and write traces, aggregate.csv and summary.txt.
    Run(BatchArgs),
    /// Like `run`, restricted to the EC phase, for Price-term curves.
    PriceTrace(BatchArgs),
    /// Compare AD derivatives with finite differences.
    AdCheck {
        #[arg(long)]
        problem: String,
        #[arg(long, default_value_t = 2)]
        dimension: usize,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Perturb the AD path; the check is expected to fail.
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// List registered benchmark problems.
    BenchList,
}

fn batch(args: BatchArgs, price: bool) -> Result<bool, CliError> {
    let cfg = RunConfig::load(&args.config)?;
    let mut plan = cfg.plan(&Overrides {
        mode: args.mode.map(Mode::from),
        runs: args.runs,
        seed: args.seed,
        out: args.out,
        jobs: args.jobs,
    })?;
    if price {
        runner::force_ec(&mut plan);
    }
    let outcomes = runner::execute(&plan)?;
    Ok(outcomes.iter().all(|o| o.failures() == 0))
}

fn ad_check(problem: &str, dimension: usize, samples: usize, seed: u64, corrupt: bool) -> Result<bool, CliError> {
    let p = lookup_problem(problem, dimension)?;
    let rep = if corrupt {
        adcheck::check(&Corrupted(&p), &p, samples, seed)
    } else {
        adcheck::check(&p, &p, samples, seed)
    }
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("problem        {}-{}", p.name(), dimension);
    println!("samples        {} ({} skipped at kinks)", rep.samples, rep.skipped);
    println!("max grad err   {:e} (tol {:e})", rep.max_grad_err, adcheck::GRAD_TOL);
    println!("max hess err   {:e} (tol {:e})", rep.max_hess_err, adcheck::HESS_TOL);
    println!("{}", if rep.passed() { "ok" } else { "FAILED" });
    Ok(rep.passed())
}

fn bench_list() {
    println!("{:<14} {:<9} {:<16} {:<22} {}", "name", "goal", "domain", "optimum value / n", "optimizer x_i");
    for b in Benchmark::ALL {
        let p = BenchmarkProblem::new(b, 1);
        let (lo, hi) = b.domain();
        let goal = format!("{:?}", p.orientation).to_lowercase();
        let at = p.known_optimizer.as_ref().map(|x| x[0]).unwrap_or(f64::NAN);
        println!(
            "{:<14} {:<9} {:<16} {:<22} {}",
            b.name(),
            goal,
            format!("[{lo}, {hi}]"),
            fmt_num(p.known_optimum_value),
            fmt_num(at)
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => batch(a, false),
        Cmd::PriceTrace(a) => batch(a, true),
        Cmd::AdCheck {
            problem,
            dimension,
            samples,
            seed,
            corrupt,
        } => ad_check(&problem, dimension, samples, seed, corrupt),
        Cmd::BenchList => {
            bench_list();
            Ok(true)
        }
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
