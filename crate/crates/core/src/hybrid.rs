//! EC -> SQP -> validation pipeline.
//!
//! The EC phase runs until a switching criterion fires, SQP polishes the
//! best point, and a second EC run seeded with the polished point and its
//! bitwise complement checks that nothing better is nearby. Everything is
//! reported in the problem's native orientation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{AdContext, AdError, AdScalar};
use crate::benchmarks::{BenchmarkProblem, Objective, Orientation};
use crate::encoding::{Chromosome, EncodingSpec};
use crate::error::{Error, Result};
use crate::evolution::{bit_flip_mutation, Engine, FitnessStats, GaConfig, Individual, Population};
use crate::local_search::{sqp_run, SqpConfig, SqpOutcome, StoppingRule};
use crate::price_monitor::{decompose, ConvergenceState, OperatorContribution};

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchCriteria {
    /// Crossover width threshold; `None` disables the test.
    pub sigma_threshold: Option<f64>,
    /// Consecutive sub-threshold widths required.
    pub sigma_window: usize,
    /// `None` disables the stall test.
    pub stall_window: Option<usize>,
    pub stall_epsilon: f64,
    pub max_generations: usize,
}

impl Default for SwitchCriteria {
    fn default() -> Self {
        Self {
            sigma_threshold: Some(0.01),
            sigma_window: 3,
            stall_window: Some(20),
            stall_epsilon: 0.001,
            max_generations: 100,
        }
    }
}

impl SwitchCriteria {
    /// Only the generation cap.
    pub fn fixed_budget(max_generations: usize) -> Self {
        Self {
            sigma_threshold: None,
            stall_window: None,
            max_generations,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_generations == 0 {
            return Err(Error::domain("max_generations must be positive"));
        }
        if self.stall_window == Some(0) {
            return Err(Error::domain("stall window must be positive"));
        }
        if matches!(self.sigma_threshold, Some(t) if !(t > 0.0)) {
            return Err(Error::domain("sigma threshold must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchReason {
    SigmaConverged,
    Stalled,
    MaxGen,
}

impl SwitchReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SwitchReason::SigmaConverged => "sigma-converged",
            SwitchReason::Stalled => "stalled",
            SwitchReason::MaxGen => "max-gen",
        }
    }
}

/// First satisfied criterion, checked in the order sigma, stall, cap.
/// `best_history[t]` is the best fitness at generation `t`.
pub fn should_switch(
    state: &ConvergenceState,
    best_history: &[f64],
    generation: usize,
    crit: &SwitchCriteria,
) -> Option<SwitchReason> {
    if crit.sigma_threshold.is_some() && state.is_converged() {
        return Some(SwitchReason::SigmaConverged);
    }
    if let Some(w) = crit.stall_window {
        if generation >= w && generation < best_history.len() {
            if (best_history[generation] - best_history[generation - w]).abs() <= crit.stall_epsilon {
                return Some(SwitchReason::Stalled);
            }
        }
    }
    (generation >= crit.max_generations).then_some(SwitchReason::MaxGen)
}

pub fn invert_chromosome(c: &Chromosome) -> Chromosome {
    c.inverted()
}

/// How the second validation seed is derived from the polished point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationSeed {
    Complement,
    /// Bit-flip mutation with probability 0.5.
    HeavyMutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Hybrid,
    EcOnly,
    SqpOnly,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Hybrid => "hybrid",
            Mode::EcOnly => "ec",
            Mode::SqpOnly => "sqp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridConfig {
    pub ga: GaConfig,
    pub sqp: SqpConfig,
    pub switching: SwitchCriteria,
    /// Criteria for the validation run; defaults to `switching`.
    pub validation_switching: Option<SwitchCriteria>,
    pub precision: f64,
    pub validation_seed: ValidationSeed,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            ga: GaConfig::default(),
            sqp: SqpConfig {
                stopping: StoppingRule::Delta {
                    grad_change: 1e-3,
                    step_change: 1e-3,
                },
                ..SqpConfig::default()
            },
            switching: SwitchCriteria::default(),
            validation_switching: None,
            precision: 1e-2,
            validation_seed: ValidationSeed::Complement,
        }
    }
}

/// Minimization view of a problem: the native objective when minimizing,
/// its negation when maximizing.
pub struct Minimized<'a, O: Objective + ?Sized> {
    inner: &'a O,
    sign: f64,
}

impl<'a, O: Objective + ?Sized> Minimized<'a, O> {
    pub fn new(inner: &'a O, orientation: Orientation) -> Self {
        Self {
            inner,
            sign: -orientation.fitness_sign(),
        }
    }
}

impl<O: Objective + ?Sized> Objective for Minimized<'_, O> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.sign * self.inner.value(x)
    }

    fn ad_value(&self, ctx: &AdContext, x: &[AdScalar]) -> Result<AdScalar, AdError> {
        Ok(self.inner.ad_value(ctx, x)? * self.sign)
    }
}

/// One EC generation as seen by the driver.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Fitness orientation (maximized).
    pub stats: FitnessStats,
    pub contribution: OperatorContribution,
    pub elite_size: usize,
    /// Evaluations spent by this EC run so far, this generation included.
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcRun {
    pub initial_stats: FitnessStats,
    /// Evaluations spent building the initial population.
    pub initial_evaluations: usize,
    pub generations: Vec<GenerationRecord>,
    pub population: Population,
    pub best: Individual,
    pub switch_reason: SwitchReason,
    pub convergence: ConvergenceState,
    pub evaluations: usize,
}

/// Starting members of an EC run besides the random ones.
#[derive(Debug, Clone, PartialEq)]
pub enum Seed {
    /// Evaluated at exactly this point, genotype `encode(x)`.
    At(Vec<f64>),
    Genotype(Chromosome),
}

/// Runs the engine from `seeds` plus random members until `crit` fires.
pub fn run_ec<F>(engine: &mut Engine, seeds: &[Seed], fitness: &F, crit: &SwitchCriteria) -> Result<EcRun>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    crit.validate()?;
    let n = engine.config().population_size;
    if seeds.len() > n {
        return Err(Error::domain(format!("{} seeds for a population of {n}", seeds.len())));
    }
    let start = engine.evaluations();
    let mut members = engine.random_individuals(n - seeds.len(), fitness)?;
    for seed in seeds {
        members.push(match seed {
            Seed::At(x) => engine.individual_at(x, fitness)?,
            Seed::Genotype(c) => engine.individual(c.clone(), fitness)?,
        });
    }
    let mut population = Population { members, generation: 0 };
    let initial_stats = population.stats()?;
    let initial_evaluations = engine.evaluations() - start;

    let mut convergence = ConvergenceState::new(crit.sigma_threshold.unwrap_or(f64::NEG_INFINITY), crit.sigma_window);
    let mut best_history = vec![initial_stats.best];
    let mut generations = Vec::new();
    let switch_reason = loop {
        let g = engine.step(&population, fitness)?;
        let contribution = decompose(&g.lineage)?;
        let generation = g.population.generation;
        convergence.update(contribution.crossover_width(), generation);
        best_history.push(g.stats.best);
        generations.push(GenerationRecord {
            generation,
            stats: g.stats,
            contribution,
            elite_size: g.elite_size,
            evaluations: engine.evaluations() - start,
        });
        population = g.population;
        if let Some(reason) = should_switch(&convergence, &best_history, generation, crit) {
            break reason;
        }
    };
    let best = population.best().cloned().ok_or(Error::EmptyPopulation)?;
    Ok(EcRun {
        initial_stats,
        initial_evaluations,
        generations,
        population,
        best,
        switch_reason,
        convergence,
        evaluations: engine.evaluations() - start,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Ec,
    Sqp,
    Validation,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Ec => "ec",
            Phase::Sqp => "sqp",
            Phase::Validation => "validation",
        }
    }
}

/// One row of the unified trace, native orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub phase: Phase,
    /// Generation or iteration index within the phase.
    pub step: usize,
    pub best: f64,
    pub mean: f64,
    pub worst: f64,
    /// Cumulative objective evaluations over the whole run.
    pub evaluations: usize,
    /// Price terms for EC rows.
    pub contribution: Option<OperatorContribution>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PhaseEvaluations {
    pub ec: usize,
    pub sqp: usize,
    pub validation: usize,
}

impl PhaseEvaluations {
    pub fn total(&self) -> usize {
        self.ec + self.sqp + self.validation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridResult {
    pub mode: Mode,
    pub orientation: Orientation,
    /// Best of the initial population (or the SQP start point).
    pub initial_best: f64,
    pub x_ec: Vec<f64>,
    pub f_ec: f64,
    pub x_sqp: Vec<f64>,
    pub f_sqp: f64,
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub evaluations: PhaseEvaluations,
    pub switch_reason: Option<SwitchReason>,
    pub ec: Option<EcRun>,
    pub sqp: Option<SqpOutcome>,
    pub validation: Option<EcRun>,
    pub trace: Vec<TraceRow>,
    pub warnings: Vec<String>,
}

impl HybridResult {
    /// Best native value reached within `budget` evaluations, if any row
    /// fits the budget.
    pub fn best_within(&self, budget: usize) -> Option<f64> {
        let better = |a: f64, b: f64| if self.orientation.at_least_as_good(a, b) { a } else { b };
        self.trace
            .iter()
            .filter(|r| r.evaluations <= budget)
            .map(|r| r.best)
            .reduce(better)
    }
}

fn ec_rows(run: &EcRun, phase: Phase, offset: usize, sign: f64, rows: &mut Vec<TraceRow>) {
    rows.push(TraceRow {
        phase,
        step: 0,
        best: sign * run.initial_stats.best,
        mean: sign * run.initial_stats.mean,
        worst: sign * run.initial_stats.worst,
        evaluations: offset + run.initial_evaluations,
        contribution: None,
    });
    rows.extend(run.generations.iter().map(|g| TraceRow {
        phase,
        step: g.generation,
        best: sign * g.stats.best,
        mean: sign * g.stats.mean,
        worst: sign * g.stats.worst,
        evaluations: offset + g.evaluations,
        contribution: Some(g.contribution),
    }));
}

fn sqp_rows(out: &SqpOutcome, start_value: f64, offset: usize, sign: f64, rows: &mut Vec<TraceRow>) {
    // `sign` maps the minimized value back to native orientation
    let mut evals = offset + 1;
    rows.push(TraceRow {
        phase: Phase::Sqp,
        step: 0,
        best: sign * start_value,
        mean: sign * start_value,
        worst: sign * start_value,
        evaluations: evals,
        contribution: None,
    });
    for it in &out.iterations {
        evals += it.evaluations;
        rows.push(TraceRow {
            phase: Phase::Sqp,
            step: it.iteration + 1,
            best: sign * it.f_next,
            mean: sign * it.f_next,
            worst: sign * it.f_next,
            evaluations: evals,
            contribution: None,
        });
    }
}

fn encoding_for(problem: &BenchmarkProblem, precision: f64) -> Result<EncodingSpec> {
    EncodingSpec::from_bounds(problem.bounds.lower(), problem.bounds.upper(), precision)
}

/// Runs one pipeline in the requested mode with `seed` overriding the GA
/// seed.
pub fn run_mode(problem: &BenchmarkProblem, cfg: &HybridConfig, mode: Mode, seed: u64) -> Result<HybridResult> {
    match mode {
        Mode::Hybrid => run_hybrid(problem, cfg, seed),
        Mode::EcOnly => run_ec_only(problem, cfg, seed),
        Mode::SqpOnly => run_sqp_only(problem, cfg, seed),
    }
}

pub fn run_ec_only(problem: &BenchmarkProblem, cfg: &HybridConfig, seed: u64) -> Result<HybridResult> {
    let spec = encoding_for(problem, cfg.precision)?;
    let mut engine = Engine::new(GaConfig { seed, ..cfg.ga.clone() }, spec)?;
    let fitness = |x: &[f64]| problem.fitness(x);
    let sign = problem.orientation.fitness_sign();
    let ec = run_ec(&mut engine, &[], &fitness, &cfg.switching)?;
    let mut trace = Vec::new();
    ec_rows(&ec, Phase::Ec, 0, sign, &mut trace);
    let x = ec.best.phenotype.clone();
    let f = sign * ec.best.fitness;
    Ok(HybridResult {
        mode: Mode::EcOnly,
        orientation: problem.orientation,
        initial_best: sign * ec.initial_stats.best,
        x_ec: x.clone(),
        f_ec: f,
        x_sqp: x.clone(),
        f_sqp: f,
        x_star: x,
        f_star: f,
        evaluations: PhaseEvaluations {
            ec: ec.evaluations,
            ..Default::default()
        },
        switch_reason: Some(ec.switch_reason),
        ec: Some(ec),
        sqp: None,
        validation: None,
        trace,
        warnings: Vec::new(),
    })
}

/// SQP from a uniform random start in the box.
pub fn run_sqp_only(problem: &BenchmarkProblem, cfg: &HybridConfig, seed: u64) -> Result<HybridResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0: Vec<f64> = problem
        .bounds
        .lower()
        .iter()
        .zip(problem.bounds.upper())
        .map(|(&l, &u)| rng.gen_range(l..u))
        .collect();
    let minimized = Minimized::new(problem, problem.orientation);
    let native = -problem.orientation.fitness_sign();
    let f0 = problem.value(&x0);
    let out = sqp_run(&minimized, &x0, Some(&problem.bounds), &cfg.sqp)?;
    let mut trace = Vec::new();
    sqp_rows(&out, native * f0, 0, native, &mut trace);
    let f = problem.value(&out.x);
    Ok(HybridResult {
        mode: Mode::SqpOnly,
        orientation: problem.orientation,
        initial_best: f0,
        x_ec: x0,
        f_ec: f0,
        x_sqp: out.x.clone(),
        f_sqp: f,
        x_star: out.x.clone(),
        f_star: f,
        evaluations: PhaseEvaluations {
            sqp: out.evaluations,
            ..Default::default()
        },
        switch_reason: None,
        ec: None,
        sqp: Some(out),
        validation: None,
        trace,
        warnings: Vec::new(),
    })
}

pub fn run_hybrid(problem: &BenchmarkProblem, cfg: &HybridConfig, seed: u64) -> Result<HybridResult> {
    let spec = encoding_for(problem, cfg.precision)?;
    let mut engine = Engine::new(GaConfig { seed, ..cfg.ga.clone() }, spec)?;
    let fitness = |x: &[f64]| problem.fitness(x);
    let sign = problem.orientation.fitness_sign();
    let mut trace = Vec::new();
    let mut warnings = Vec::new();

    // global phase
    let ec = run_ec(&mut engine, &[], &fitness, &cfg.switching)?;
    ec_rows(&ec, Phase::Ec, 0, sign, &mut trace);
    let x_ec = ec.best.phenotype.clone();
    let fit_ec = ec.best.fitness;

    // local phase on the minimized view
    let minimized = Minimized::new(problem, problem.orientation);
    let (x_sqp, fit_sqp, sqp) = match sqp_run(&minimized, &x_ec, Some(&problem.bounds), &cfg.sqp) {
        Ok(out) => {
            sqp_rows(&out, -fit_ec, ec.evaluations, -sign, &mut trace);
            let fit = problem.fitness(&out.x);
            if fit >= fit_ec {
                (out.x.clone(), fit, Some(out))
            } else {
                // an inward projection off a bound can cost a little
                warnings.push(format!("local phase ended below the EC incumbent ({fit} < {fit_ec})"));
                (x_ec.clone(), fit_ec, Some(out))
            }
        }
        Err(e) => {
            warnings.push(format!("local phase failed: {e}"));
            (x_ec.clone(), fit_ec, None)
        }
    };
    let sqp_evals = sqp.as_ref().map_or(0, |o| o.evaluations);

    // validation phase
    engine.reset_elite();
    let encoded = engine.spec().encode(&x_sqp)?;
    let partner = match cfg.validation_seed {
        ValidationSeed::Complement => invert_chromosome(&encoded),
        ValidationSeed::HeavyMutation => bit_flip_mutation(&encoded, 0.5, engine.rng()),
    };
    let seeds = [Seed::At(x_sqp.clone()), Seed::Genotype(partner)];
    let crit = cfg.validation_switching.as_ref().unwrap_or(&cfg.switching);
    let validation = run_ec(&mut engine, &seeds, &fitness, crit)?;
    ec_rows(&validation, Phase::Validation, ec.evaluations + sqp_evals, sign, &mut trace);

    let (x_star, fit_star) = if validation.best.fitness > fit_sqp {
        (validation.best.phenotype.clone(), validation.best.fitness)
    } else {
        (x_sqp.clone(), fit_sqp)
    };

    Ok(HybridResult {
        mode: Mode::Hybrid,
        orientation: problem.orientation,
        initial_best: sign * ec.initial_stats.best,
        x_ec,
        f_ec: sign * fit_ec,
        x_sqp,
        f_sqp: sign * fit_sqp,
        x_star,
        f_star: sign * fit_star,
        evaluations: PhaseEvaluations {
            ec: ec.evaluations,
            sqp: sqp_evals,
            validation: validation.evaluations,
        },
        switch_reason: Some(ec.switch_reason),
        ec: Some(ec),
        sqp,
        validation: Some(validation),
        trace,
        warnings,
    })
}
