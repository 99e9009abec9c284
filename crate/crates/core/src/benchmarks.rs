//! Benchmark objectives with both plain and AD evaluation paths.

use std::f64::consts::{E, PI};
use std::fmt;

use crate::autodiff::{self, AdContext, AdError, AdScalar, Derivatives};
use crate::local_search::BoundBox;

/// Constant of the generalized Schwefel function.
pub const SCHWEFEL_CONSTANT: f64 = 418.9829;
/// Maximizer of `x sin(sqrt|x|)` on `[-500, 500]`.
pub const SCHWEFEL_ARGMAX: f64 = 420.968_746_359_982;
/// Maximum of `x sin(sqrt|x|)` on `[-500, 500]`.
pub const SCHWEFEL_PEAK: f64 = 418.982_887_272_433_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Minimize,
    Maximize,
}

impl Orientation {
    /// Multiplier that turns a native value into a fitness to maximize.
    pub fn fitness_sign(self) -> f64 {
        match self {
            Orientation::Minimize => -1.0,
            Orientation::Maximize => 1.0,
        }
    }

    /// True when `a` is at least as good as `b`.
    pub fn at_least_as_good(self, a: f64, b: f64) -> bool {
        match self {
            Orientation::Minimize => a <= b,
            Orientation::Maximize => a >= b,
        }
    }
}

/// A function with plain and AD evaluation paths in its native orientation.
pub trait Objective: Sync {
    fn dimension(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn ad_value(&self, ctx: &AdContext, x: &[AdScalar]) -> Result<AdScalar, AdError>;

    fn derivatives(&self, x: &[f64]) -> Result<Derivatives, AdError> {
        AdContext::new(self.dimension()).evaluate(x, |ctx, vars| self.ad_value(ctx, vars))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Ackley,
    Rastrigin,
    /// `418.9829 n - sum x_i sin(sqrt|x_i|)`, minimized.
    Schwefel,
    /// `sum x_i sin(sqrt|x_i|)`, maximized.
    SchwefelMax,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] = [
        Benchmark::Ackley,
        Benchmark::Rastrigin,
        Benchmark::Schwefel,
        Benchmark::SchwefelMax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Ackley => "ackley",
            Benchmark::Rastrigin => "rastrigin",
            Benchmark::Schwefel => "schwefel",
            Benchmark::SchwefelMax => "schwefel-max",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }

    pub fn domain(self) -> (f64, f64) {
        match self {
            Benchmark::Ackley => (-15.0, 30.0),
            Benchmark::Rastrigin => (-5.12, 5.12),
            Benchmark::Schwefel | Benchmark::SchwefelMax => (-500.0, 500.0),
        }
    }

    pub fn orientation(self) -> Orientation {
        match self {
            Benchmark::SchwefelMax => Orientation::Maximize,
            _ => Orientation::Minimize,
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn ackley(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let cs = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
    20.0 + E - 20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp()
}

pub fn rastrigin(x: &[f64]) -> f64 {
    10.0 * x.len() as f64
        + x.iter()
            .map(|v| v * v - 10.0 * (2.0 * PI * v).cos())
            .sum::<f64>()
}

/// `sum x_i sin(sqrt|x_i|)`.
pub fn schwefel_sum(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v.abs().sqrt().sin()).sum()
}

pub fn schwefel_min(x: &[f64]) -> f64 {
    SCHWEFEL_CONSTANT * x.len() as f64 - schwefel_sum(x)
}

pub fn schwefel_max(x: &[f64]) -> f64 {
    schwefel_sum(x)
}

fn ad_sum(ctx: &AdContext, terms: impl Iterator<Item = AdScalar>) -> AdScalar {
    terms.fold(ctx.constant(0.0), |acc, t| acc + t)
}

pub fn ackley_ad(ctx: &AdContext, x: &[AdScalar]) -> Result<AdScalar, AdError> {
    let n = x.len() as f64;
    let sq = ad_sum(ctx, x.iter().map(|v| v * v)) * (1.0 / n);
    let cs = ad_sum(ctx, x.iter().map(|v| (v * (2.0 * PI)).cos())) * (1.0 / n);
    Ok(20.0 + E - 20.0 * (sq.sqrt()? * -0.2).exp() - cs.exp())
}

pub fn rastrigin_ad(ctx: &AdContext, x: &[AdScalar]) -> Result<AdScalar, AdError> {
    let terms = x.iter().map(|v| v * v - 10.0 * (v * (2.0 * PI)).cos());
    Ok(ad_sum(ctx, terms) + 10.0 * x.len() as f64)
}

pub fn schwefel_sum_ad(ctx: &AdContext, x: &[AdScalar]) -> Result<AdScalar, AdError> {
    let terms = x
        .iter()
        .map(|v| Ok(v * v.abs().sqrt()?.sin()))
        .collect::<Result<Vec<_>, AdError>>()?;
    Ok(autodiff::sum(&terms).unwrap_or_else(|| ctx.constant(0.0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkProblem {
    pub kind: Benchmark,
    pub dimension: usize,
    pub bounds: BoundBox,
    pub orientation: Orientation,
    pub known_optimum_value: f64,
    pub known_optimizer: Option<Vec<f64>>,
}

impl BenchmarkProblem {
    pub fn new(kind: Benchmark, dimension: usize) -> Self {
        assert!(dimension > 0, "benchmark dimension must be positive");
        let (lo, hi) = kind.domain();
        let n = dimension as f64;
        let (value, at) = match kind {
            Benchmark::Ackley | Benchmark::Rastrigin => (0.0, 0.0),
            Benchmark::Schwefel => (n * (SCHWEFEL_CONSTANT - SCHWEFEL_PEAK), SCHWEFEL_ARGMAX),
            Benchmark::SchwefelMax => (n * SCHWEFEL_PEAK, SCHWEFEL_ARGMAX),
        };
        Self {
            kind,
            dimension,
            bounds: BoundBox::uniform(dimension, lo, hi),
            orientation: kind.orientation(),
            known_optimum_value: value,
            known_optimizer: Some(vec![at; dimension]),
        }
    }

    /// Registry lookup by name.
    pub fn lookup(name: &str, dimension: usize) -> Option<Self> {
        if dimension == 0 {
            return None;
        }
        Benchmark::from_name(name).map(|kind| Self::new(kind, dimension))
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// Value mapped to maximization orientation.
    pub fn fitness(&self, x: &[f64]) -> f64 {
        self.orientation.fitness_sign() * self.value(x)
    }
}

impl Objective for BenchmarkProblem {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self.kind {
            Benchmark::Ackley => ackley(x),
            Benchmark::Rastrigin => rastrigin(x),
            Benchmark::Schwefel => schwefel_min(x),
            Benchmark::SchwefelMax => schwefel_max(x),
        }
    }

    fn ad_value(&self, ctx: &AdContext, x: &[AdScalar]) -> Result<AdScalar, AdError> {
        match self.kind {
            Benchmark::Ackley => ackley_ad(ctx, x),
            Benchmark::Rastrigin => rastrigin_ad(ctx, x),
            Benchmark::Schwefel => {
                let s = schwefel_sum_ad(ctx, x)?;
                Ok(SCHWEFEL_CONSTANT * x.len() as f64 - s)
            }
            Benchmark::SchwefelMax => schwefel_sum_ad(ctx, x),
        }
    }
}
