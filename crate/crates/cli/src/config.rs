//! Run configuration file (TOML).
//!
//! Every section is optional; missing keys take the library defaults.

use std::path::{Path, PathBuf};

use ecsqp::evolution::EliteShrink;
use ecsqp::hybrid::ValidationSeed;
use ecsqp::local_search::{DirectionKind, StoppingRule};
use ecsqp::{BenchmarkProblem, GaConfig, HybridConfig, Mode, MutationRate, Selection, SqpConfig, SwitchCriteria};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub ga: GaSection,
    #[serde(default)]
    pub sqp: SqpSection,
    #[serde(default)]
    pub switching: SwitchingSection,
    #[serde(default)]
    pub run: RunSection,
    /// Parameter sweep; each entry overrides `[ga]` for one batch.
    #[serde(default)]
    pub variants: Vec<Variant>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub name: String,
    pub dimension: usize,
    #[serde(default = "default_precision")]
    pub precision: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            name: "schwefel-max".into(),
            dimension: 2,
            precision: default_precision(),
        }
    }
}

fn default_precision() -> f64 {
    1e-2
}

/// `"1/L"` or a plain probability.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MutationSetting {
    Rate(f64),
    Named(String),
}

impl MutationSetting {
    fn resolve(&self) -> Result<MutationRate, CliError> {
        match self {
            MutationSetting::Rate(p) => Ok(MutationRate::Fixed(*p)),
            MutationSetting::Named(s) if s.eq_ignore_ascii_case("1/l") => Ok(MutationRate::InverseLength),
            MutationSetting::Named(s) => Err(CliError::Config(format!("mutation_rate: expected a number or \"1/L\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaSection {
    pub population_size: Option<usize>,
    pub crossover_rate: Option<f64>,
    pub mutation_rate: Option<MutationSetting>,
    pub selection: Option<String>,
    pub overlap_fraction: Option<f64>,
    pub elite_shrink: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqpSection {
    pub grad_tol: Option<f64>,
    pub step_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub lambda_min: Option<f64>,
    /// "delta" (default) or "absolute"
    pub stopping: Option<String>,
    pub grad_change: Option<f64>,
    pub step_change: Option<f64>,
    /// "newton" or "steepest"
    pub direction: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingSection {
    pub use_sigma: Option<bool>,
    pub sigma_threshold: Option<f64>,
    pub sigma_window: Option<usize>,
    pub use_stall: Option<bool>,
    pub stall_window: Option<usize>,
    pub stall_epsilon: Option<f64>,
    pub max_generations: Option<usize>,
    /// Generation budget for the validation run; defaults to the above.
    pub validation_max_generations: Option<usize>,
    /// "complement" or "heavy-mutation"
    pub validation_seed: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub mode: Option<String>,
    pub repetitions: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub label: String,
    #[serde(flatten)]
    pub ga: GaSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

/// One fully resolved batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub label: Option<String>,
    pub problem: BenchmarkProblem,
    pub hybrid: HybridConfig,
    pub mode: Mode,
    pub repetitions: usize,
    pub base_seed: u64,
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub batches: Vec<Batch>,
    pub output: PathBuf,
    /// 0 means all cores.
    pub jobs: usize,
}

pub fn parse_mode(s: &str) -> Result<Mode, CliError> {
    match s {
        "hybrid" => Ok(Mode::Hybrid),
        "ec" | "ec-only" => Ok(Mode::EcOnly),
        "sqp" | "sqp-only" => Ok(Mode::SqpOnly),
        _ => Err(CliError::Config(format!("unknown mode {s:?} (expected hybrid, ec or sqp)"))),
    }
}

pub fn lookup_problem(name: &str, dimension: usize) -> Result<BenchmarkProblem, CliError> {
    if dimension == 0 {
        return Err(CliError::Config("problem dimension must be positive".into()));
    }
    BenchmarkProblem::lookup(name, dimension).ok_or_else(|| {
        let names: Vec<_> = ecsqp::Benchmark::ALL.iter().map(|b| b.name()).collect();
        CliError::Config(format!("unknown problem {name:?}; registered problems: {}", names.join(", ")))
    })
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn plan(&self, over: &Overrides) -> Result<Plan, CliError> {
        let problem = lookup_problem(&self.problem.name, self.problem.dimension)?;
        let mode = match (&over.mode, &self.run.mode) {
            (Some(m), _) => *m,
            (None, Some(s)) => parse_mode(s)?,
            (None, None) => Mode::Hybrid,
        };
        let repetitions = over.runs.or(self.run.repetitions).unwrap_or(1);
        if repetitions == 0 {
            return Err(CliError::Config("repetitions must be at least 1".into()));
        }
        let base_seed = over.seed.or(self.run.seed).unwrap_or(0);

        let base = self.hybrid_config(&self.ga)?;
        let mut batches = Vec::new();
        if self.variants.is_empty() {
            batches.push(Batch {
                label: None,
                problem: problem.clone(),
                hybrid: base,
                mode,
                repetitions,
                base_seed,
            });
        } else {
            for v in &self.variants {
                if v.label.is_empty() || v.label.contains(['/', '\\']) {
                    return Err(CliError::Config(format!("variant label {:?} is not a valid directory name", v.label)));
                }
                let merged = merge_ga(&self.ga, &v.ga);
                batches.push(Batch {
                    label: Some(v.label.clone()),
                    problem: problem.clone(),
                    hybrid: self.hybrid_config(&merged)?,
                    mode,
                    repetitions,
                    base_seed,
                });
            }
        }
        Ok(Plan {
            batches,
            output: over.out.clone().or_else(|| self.run.output.clone()).unwrap_or_else(|| PathBuf::from("out")),
            jobs: over.jobs.or(self.run.jobs).unwrap_or(0),
        })
    }

    fn hybrid_config(&self, ga: &GaSection) -> Result<HybridConfig, CliError> {
        let mut cfg = HybridConfig::default();
        cfg.precision = self.problem.precision;
        if !(cfg.precision > 0.0) {
            return Err(CliError::Config("precision must be positive".into()));
        }
        cfg.ga = ga_config(ga)?;
        cfg.sqp = sqp_config(&self.sqp, cfg.sqp)?;
        let s = &self.switching;
        let mut sw = SwitchCriteria::default();
        if let Some(t) = s.sigma_threshold {
            sw.sigma_threshold = Some(t);
        }
        if s.use_sigma == Some(false) {
            sw.sigma_threshold = None;
        }
        if let Some(w) = s.sigma_window {
            sw.sigma_window = w;
        }
        if let Some(w) = s.stall_window {
            sw.stall_window = Some(w);
        }
        if s.use_stall == Some(false) {
            sw.stall_window = None;
        }
        if let Some(e) = s.stall_epsilon {
            sw.stall_epsilon = e;
        }
        if let Some(m) = s.max_generations {
            sw.max_generations = m;
        }
        sw.validate().map_err(|e| CliError::Config(format!("[switching]: {e}")))?;
        cfg.ga.max_generations = sw.max_generations;
        if let Some(m) = s.validation_max_generations {
            let v = SwitchCriteria {
                max_generations: m,
                ..sw.clone()
            };
            v.validate().map_err(|e| CliError::Config(format!("[switching]: {e}")))?;
            cfg.validation_switching = Some(v);
        }
        cfg.switching = sw;
        cfg.validation_seed = match s.validation_seed.as_deref() {
            None | Some("complement") => ValidationSeed::Complement,
            Some("heavy-mutation") => ValidationSeed::HeavyMutation,
            Some(o) => return Err(CliError::Config(format!("validation_seed: unknown value {o:?}"))),
        };
        Ok(cfg)
    }
}

fn merge_ga(base: &GaSection, over: &GaSection) -> GaSection {
    GaSection {
        population_size: over.population_size.or(base.population_size),
        crossover_rate: over.crossover_rate.or(base.crossover_rate),
        mutation_rate: over.mutation_rate.clone().or_else(|| base.mutation_rate.clone()),
        selection: over.selection.clone().or_else(|| base.selection.clone()),
        overlap_fraction: over.overlap_fraction.or(base.overlap_fraction),
        elite_shrink: over.elite_shrink.clone().or_else(|| base.elite_shrink.clone()),
    }
}

fn ga_config(s: &GaSection) -> Result<GaConfig, CliError> {
    let mut ga = GaConfig::default();
    if let Some(n) = s.population_size {
        ga.population_size = n;
    }
    if let Some(p) = s.crossover_rate {
        ga.crossover_rate = p;
    }
    if let Some(m) = &s.mutation_rate {
        ga.mutation_rate = m.resolve()?;
    }
    if let Some(sel) = &s.selection {
        ga.selection = match sel.to_ascii_lowercase().as_str() {
            "tournament" | "bts" => Selection::BinaryTournament,
            "roulette" | "rws" => Selection::RouletteWheel,
            o => return Err(CliError::Config(format!("selection: unknown value {o:?} (tournament or roulette)"))),
        };
    }
    if let Some(g) = s.overlap_fraction {
        ga.overlap_fraction = g;
    }
    if let Some(e) = &s.elite_shrink {
        ga.elite_shrink = match e.as_str() {
            "halve" => EliteShrink::Halve,
            "overlap" => EliteShrink::OverlapFraction,
            o => return Err(CliError::Config(format!("elite_shrink: unknown value {o:?}"))),
        };
    }
    ga.validate().map_err(|e| CliError::Config(format!("[ga]: {e}")))?;
    Ok(ga)
}

fn sqp_config(s: &SqpSection, mut sqp: SqpConfig) -> Result<SqpConfig, CliError> {
    macro_rules! set {
        ($($f:ident),*) => {$( if let Some(v) = s.$f { sqp.$f = v; } )*};
    }
    set!(grad_tol, step_tol, max_iter, c1, c2, lambda_min);
    let (mut gc, mut sc) = match sqp.stopping {
        StoppingRule::Delta { grad_change, step_change } => (grad_change, step_change),
        StoppingRule::Absolute => (1e-3, 1e-3),
    };
    gc = s.grad_change.unwrap_or(gc);
    sc = s.step_change.unwrap_or(sc);
    sqp.stopping = match s.stopping.as_deref() {
        Some("absolute") => StoppingRule::Absolute,
        None | Some("delta") => StoppingRule::Delta {
            grad_change: gc,
            step_change: sc,
        },
        Some(o) => return Err(CliError::Config(format!("stopping: unknown value {o:?}"))),
    };
    sqp.direction = match s.direction.as_deref() {
        None | Some("newton") => DirectionKind::Newton,
        Some("steepest") => DirectionKind::SteepestDescent,
        Some(o) => return Err(CliError::Config(format!("direction: unknown value {o:?}"))),
    };
    sqp.validate().map_err(|e| CliError::Config(format!("[sqp]: {e}")))?;
    Ok(sqp)
}
