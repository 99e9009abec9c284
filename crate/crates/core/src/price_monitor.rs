//! Price decomposition of the per-generation change in mean fitness into
//! selection, crossover and mutation contributions, plus the crossover
//! envelope used for convergence detection.

use crate::error::{Error, Result};
use crate::evolution::{LineageRecord, Stage};

/// `Cov(z, q) / mean(z)` with the population (1/N) covariance.
pub fn selection_term(z: &[f64], q: &[f64]) -> Result<f64> {
    if z.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: z.len(),
            found: q.len(),
        });
    }
    if z.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let n = z.len() as f64;
    let z_bar = z.iter().sum::<f64>() / n;
    if z_bar <= 0.0 {
        return Err(Error::NoOffspring);
    }
    let q_bar = q.iter().sum::<f64>() / n;
    let cov = z
        .iter()
        .zip(q)
        .map(|(zi, qi)| (zi - z_bar) * (qi - q_bar))
        .sum::<f64>()
        / n;
    Ok(cov / z_bar)
}

fn counts_as_f64(z: &[usize]) -> Vec<f64> {
    z.iter().map(|&v| v as f64).collect()
}

/// Per-slot fitness change produced by `stage`.
pub fn stage_deltas(lineage: &LineageRecord, stage: Stage) -> Vec<f64> {
    let before = lineage.slot_fitness_before(stage);
    lineage
        .slot_fitness(stage)
        .iter()
        .zip(&before)
        .map(|(after, b)| after - b)
        .collect()
}

/// First and second moments of `deltas` normalized by `norm`, and the
/// resulting standard deviation.
pub fn weighted_moments(deltas: &[f64], norm: f64) -> (f64, f64, f64) {
    let m1 = deltas.iter().sum::<f64>() / norm;
    let m2 = deltas.iter().map(|d| d * d).sum::<f64>() / norm;
    (m1, m2, (m2 - m1 * m1).max(0.0).sqrt())
}

/// `N zbar`, which equals the number of selection slots.
fn normalizer(lineage: &LineageRecord) -> Result<f64> {
    let total: usize = lineage.offspring_counts().iter().sum();
    if total == 0 {
        return Err(Error::NoOffspring);
    }
    Ok(total as f64)
}

/// `sum_i z_i dq_i / (N zbar)` for one operator stage.
pub fn operator_term(lineage: &LineageRecord, stage: Stage) -> Result<f64> {
    let norm = normalizer(lineage)?;
    Ok(weighted_moments(&stage_deltas(lineage, stage), norm).0)
}

pub fn operator_term_sigma(lineage: &LineageRecord, stage: Stage) -> Result<f64> {
    let norm = normalizer(lineage)?;
    Ok(weighted_moments(&stage_deltas(lineage, stage), norm).2)
}

/// Width of the `mean +/- sigma` band. Independent of the mean.
pub fn sigma_width(term_mean: f64, sigma: f64) -> f64 {
    debug_assert!(sigma >= 0.0);
    let width = 2.0 * sigma;
    debug_assert!(((term_mean + sigma) - (term_mean - sigma) - width).abs() <= 1e-9 * (1.0 + term_mean.abs()));
    width
}

/// The selection-term formula applied to the crossover stage: `z` counts
/// the children each slot contributed to, `q` is the post-selection fitness.
/// Exactly zero when every pair is crossed.
pub fn crossover_covariance_term(lineage: &LineageRecord) -> Result<f64> {
    selection_term(&counts_as_f64(&lineage.crossover_counts()), &lineage.after_selection)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorContribution {
    pub generation: usize,
    pub selection_term: f64,
    pub crossover_term: f64,
    pub mutation_term: f64,
    pub crossover_sigma: f64,
    pub mutation_sigma: f64,
    /// Mean of the post-mutation pool minus mean of the parents.
    pub total_delta_q: f64,
}

impl OperatorContribution {
    pub fn crossover_width(&self) -> f64 {
        sigma_width(self.crossover_term, self.crossover_sigma)
    }

    pub fn mutation_width(&self) -> f64 {
        sigma_width(self.mutation_term, self.mutation_sigma)
    }

    pub fn sum_of_terms(&self) -> f64 {
        self.selection_term + self.crossover_term + self.mutation_term
    }
}

pub fn decompose(lineage: &LineageRecord) -> Result<OperatorContribution> {
    let z = counts_as_f64(&lineage.offspring_counts());
    let norm = normalizer(lineage)?;
    let (crossover_term, _, crossover_sigma) = weighted_moments(&stage_deltas(lineage, Stage::Crossover), norm);
    let (mutation_term, _, mutation_sigma) = weighted_moments(&stage_deltas(lineage, Stage::Mutation), norm);
    Ok(OperatorContribution {
        generation: lineage.generation,
        selection_term: selection_term(&z, &lineage.parent_fitness)?,
        crossover_term,
        mutation_term,
        crossover_sigma,
        mutation_sigma,
        total_delta_q: lineage.pool_mean() - lineage.parent_mean(),
    })
}

/// Debounced threshold detector over the crossover width.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceState {
    pub threshold: f64,
    /// Consecutive sub-threshold widths required.
    pub window: usize,
    pub widths: Vec<f64>,
    pub converged_at: Option<usize>,
    run: usize,
}

impl Default for ConvergenceState {
    fn default() -> Self {
        Self::new(0.01, 3)
    }
}

impl ConvergenceState {
    pub fn new(threshold: f64, window: usize) -> Self {
        Self {
            threshold,
            window: window.max(1),
            widths: Vec::new(),
            converged_at: None,
            run: 0,
        }
    }

    /// Records `width` for `generation`; returns true once converged.
    pub fn update(&mut self, width: f64, generation: usize) -> bool {
        self.widths.push(width);
        self.run = if width <= self.threshold { self.run + 1 } else { 0 };
        if self.converged_at.is_none() && self.run >= self.window {
            self.converged_at = Some(generation);
        }
        self.converged_at.is_some()
    }

    pub fn is_converged(&self) -> bool {
        self.converged_at.is_some()
    }
}
