//! Generational binary GA with adaptive elitism and per-slot lineage
//! bookkeeping.
//!
//! Fitness is always maximized here. Minimization problems are negated by
//! the caller before they reach the engine.

use rand::seq::index;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoding::{Chromosome, EncodingSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    RouletteWheel,
    BinaryTournament,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MutationRate {
    Fixed(f64),
    /// `1 / L` for a string of length `L`.
    InverseLength,
}

impl MutationRate {
    pub fn probability(self, string_length: usize) -> f64 {
        match self {
            MutationRate::Fixed(p) => p,
            MutationRate::InverseLength => 1.0 / string_length.max(1) as f64,
        }
    }
}

/// How the elite count shrinks when offspring beat parents in both mean
/// and variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EliteShrink {
    /// `max(1, floor(n_elite / 2))`
    Halve,
    /// `max(1, floor(G * n_elite))`
    OverlapFraction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: MutationRate,
    pub selection: Selection,
    /// Overlap fraction `G`; the initial elite count is `ceil(G N)`.
    pub overlap_fraction: f64,
    pub max_generations: usize,
    pub elite_shrink: EliteShrink,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            crossover_rate: 1.0,
            mutation_rate: MutationRate::InverseLength,
            selection: Selection::BinaryTournament,
            overlap_fraction: 0.05,
            max_generations: 100,
            elite_shrink: EliteShrink::Halve,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.population_size;
        if n < 2 || n % 2 != 0 {
            return Err(Error::domain(format!("population size must be even and at least 2, got {n}")));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::domain(format!("crossover rate {} outside [0, 1]", self.crossover_rate)));
        }
        if let MutationRate::Fixed(p) = self.mutation_rate {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain(format!("mutation rate {p} outside [0, 1]")));
            }
        }
        let g = self.overlap_fraction;
        if !(g > 0.0 && g < 1.0) || g * (n as f64) < 1.0 {
            return Err(Error::domain(format!(
                "overlap fraction {g} must lie in (0, 1) with G*N >= 1"
            )));
        }
        if self.max_generations == 0 {
            return Err(Error::domain("max_generations must be positive"));
        }
        Ok(())
    }

    pub fn initial_elite_size(&self) -> usize {
        let n = self.population_size;
        ((self.overlap_fraction * n as f64).ceil() as usize).clamp(1, n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub chromosome: Chromosome,
    /// Point the fitness was measured at. Normally the decoded chromosome;
    /// an injected seed keeps its exact real coordinates until it changes.
    pub phenotype: Vec<f64>,
    pub fitness: f64,
    pub id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub members: Vec<Individual>,
    pub generation: usize,
}

impl Population {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn fitnesses(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.fitness).collect()
    }

    /// Highest-fitness member; the first one on ties.
    pub fn best(&self) -> Option<&Individual> {
        self.members
            .iter()
            .reduce(|a, b| if b.fitness > a.fitness { b } else { a })
    }

    pub fn stats(&self) -> Result<FitnessStats> {
        fitness_stats(&self.fitnesses())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessStats {
    pub mean: f64,
    /// Population variance (divisor N).
    pub variance: f64,
    pub best: f64,
    pub worst: f64,
}

impl FitnessStats {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

pub fn fitness_stats(values: &[f64]) -> Result<FitnessStats> {
    if values.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let worst = values.iter().copied().fold(f64::INFINITY, f64::min);
    // rounding can push the mean a hair outside [worst, best]
    Ok(FitnessStats {
        mean: mean.clamp(worst, best),
        variance,
        best,
        worst,
    })
}

/// Fitness-proportionate sampling with replacement.
///
/// When the worst fitness is not positive every weight is shifted by
/// `-worst + eps`, `eps = 1e-9 max(1, |worst|)`.
pub fn roulette_select<R: Rng + ?Sized>(fitness: &[f64], count: usize, rng: &mut R) -> Result<Vec<usize>> {
    if fitness.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let worst = fitness.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = if worst <= 0.0 {
        -worst + 1e-9 * worst.abs().max(1.0)
    } else {
        0.0
    };
    let mut cumulative = Vec::with_capacity(fitness.len());
    let mut total = 0.0;
    for f in fitness {
        total += f + shift;
        cumulative.push(total);
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::NonPositiveFitness(total));
    }
    Ok((0..count)
        .map(|_| {
            let r = rng.gen::<f64>() * total;
            cumulative
                .partition_point(|&c| c <= r)
                .min(fitness.len() - 1)
        })
        .collect())
}

/// Strict `k`-tournaments; contestants are distinct within a contest and
/// ties go to a uniformly chosen contestant.
pub fn tournament_select<R: Rng + ?Sized>(
    fitness: &[f64],
    k: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = fitness.len();
    if n == 0 {
        return Err(Error::EmptyPopulation);
    }
    if k == 0 || k > n {
        return Err(Error::TournamentTooLarge { k, n });
    }
    let mut tied = Vec::with_capacity(k);
    Ok((0..count)
        .map(|_| {
            let contest = index::sample(rng, n, k);
            let top = contest.iter().map(|i| fitness[i]).fold(f64::NEG_INFINITY, f64::max);
            tied.clear();
            tied.extend(contest.iter().filter(|&i| fitness[i] == top));
            if tied.len() == 1 {
                tied[0]
            } else {
                tied[rng.gen_range(0..tied.len())]
            }
        })
        .collect())
}

/// Swaps everything after the first `locus` bits.
pub fn crossover_at(p1: &Chromosome, p2: &Chromosome, locus: usize) -> Result<(Chromosome, Chromosome)> {
    if p1.len() != p2.len() {
        return Err(Error::LengthMismatch {
            expected: p1.len(),
            found: p2.len(),
        });
    }
    if locus == 0 || locus >= p1.len() {
        return Err(Error::domain(format!("locus {locus} outside 1..{}", p1.len())));
    }
    let (a, b) = (p1.bits(), p2.bits());
    let c1 = a[..locus].iter().chain(&b[locus..]).copied().collect();
    let c2 = b[..locus].iter().chain(&a[locus..]).copied().collect();
    Ok((Chromosome::from_bits(c1), Chromosome::from_bits(c2)))
}

/// Single-point crossover with the locus uniform on `1..L`.
pub fn single_point_crossover<R: Rng + ?Sized>(
    p1: &Chromosome,
    p2: &Chromosome,
    rng: &mut R,
) -> Result<(Chromosome, Chromosome)> {
    if p1.len() != p2.len() {
        return Err(Error::LengthMismatch {
            expected: p1.len(),
            found: p2.len(),
        });
    }
    if p1.len() < 2 {
        return Err(Error::domain("crossover needs at least two bits"));
    }
    let locus = rng.gen_range(1..p1.len());
    crossover_at(p1, p2, locus)
}

/// Flips each bit independently with probability `pm`.
pub fn bit_flip_mutation<R: Rng + ?Sized>(c: &Chromosome, pm: f64, rng: &mut R) -> Chromosome {
    let mut out = c.clone();
    if pm > 0.0 {
        for bit in out.bits_mut() {
            if rng.gen_bool(pm.min(1.0)) {
                *bit = !*bit;
            }
        }
    }
    out
}

/// Current elite count, shrunk under the adaptive rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EliteState {
    pub size: usize,
}

impl EliteState {
    pub fn new(cfg: &GaConfig) -> Self {
        Self {
            size: cfg.initial_elite_size(),
        }
    }

    fn shrink(&mut self, rule: EliteShrink, overlap: f64) {
        let next = match rule {
            EliteShrink::Halve => self.size / 2,
            EliteShrink::OverlapFraction => (overlap * self.size as f64).floor() as usize,
        };
        self.size = next.max(1);
    }
}

fn ranked(members: &[Individual]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..members.len()).collect();
    // stable: equal fitness keeps index order
    order.sort_by(|&a, &b| members[b].fitness.total_cmp(&members[a].fitness));
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replacement {
    pub members: Vec<Individual>,
    pub shrunk: bool,
    pub elite_size: usize,
}

/// Top `n_elite` parents plus top `N - n_elite` offspring. The elite count
/// shrinks first when the offspring mean and variance both exceed the
/// parents'.
pub fn adaptive_elitism_replace(
    parents: &[Individual],
    offspring: &[Individual],
    state: &mut EliteState,
    rule: EliteShrink,
    overlap: f64,
) -> Result<Replacement> {
    let n = parents.len();
    if n == 0 {
        return Err(Error::EmptyPopulation);
    }
    if offspring.len() < n - state.size.min(n) {
        return Err(Error::NoOffspring);
    }
    let p = fitness_stats(&parents.iter().map(|m| m.fitness).collect::<Vec<_>>())?;
    let o = fitness_stats(&offspring.iter().map(|m| m.fitness).collect::<Vec<_>>())?;
    let shrunk = o.mean > p.mean && o.variance > p.variance;
    if shrunk {
        state.shrink(rule, overlap);
    }
    let keep = state.size.min(n);
    let mut members: Vec<Individual> = ranked(parents)[..keep].iter().map(|&i| parents[i].clone()).collect();
    members.extend(ranked(offspring)[..n - keep].iter().map(|&i| offspring[i].clone()));
    Ok(Replacement {
        members,
        shrunk,
        elite_size: keep,
    })
}

/// Parent-to-offspring bookkeeping for one generation.
///
/// Lineage is tracked per selection slot: slot `s` holds a copy of parent
/// `slot_parent[s]`; the crossover child that keeps that slot's prefix is
/// attributed to it, and mutation acts on it in place. Fitness is recorded
/// for every slot after each stage.
#[derive(Debug, Clone, PartialEq)]
pub struct LineageRecord {
    pub generation: usize,
    /// `q_i` for every member of the parent population.
    pub parent_fitness: Vec<f64>,
    pub slot_parent: Vec<usize>,
    pub after_selection: Vec<f64>,
    pub after_crossover: Vec<f64>,
    pub after_mutation: Vec<f64>,
    /// Whether the pair holding this slot was crossed.
    pub crossed: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Selection,
    Crossover,
    Mutation,
}

impl LineageRecord {
    /// `z_i`: slots won by each parent.
    pub fn offspring_counts(&self) -> Vec<usize> {
        let mut z = vec![0; self.parent_fitness.len()];
        for &p in &self.slot_parent {
            z[p] += 1;
        }
        z
    }

    pub fn slot_fitness(&self, stage: Stage) -> &[f64] {
        match stage {
            Stage::Selection => &self.after_selection,
            Stage::Crossover => &self.after_crossover,
            Stage::Mutation => &self.after_mutation,
        }
    }

    /// Fitness each slot had before `stage` was applied.
    pub fn slot_fitness_before(&self, stage: Stage) -> Vec<f64> {
        match stage {
            Stage::Selection => self.slot_parent.iter().map(|&p| self.parent_fitness[p]).collect(),
            Stage::Crossover => self.after_selection.clone(),
            Stage::Mutation => self.after_crossover.clone(),
        }
    }

    /// Mean fitness of parent `i`'s offspring after `stage`, or `None`
    /// when `z_i = 0`.
    pub fn parent_stage_mean(&self, i: usize, stage: Stage) -> Option<f64> {
        let vals = self.slot_fitness(stage);
        let (sum, count) = self
            .slot_parent
            .iter()
            .zip(vals)
            .filter(|(&p, _)| p == i)
            .fold((0.0, 0usize), |(s, c), (_, v)| (s + v, c + 1));
        (count > 0).then(|| sum / count as f64)
    }

    /// Children each slot contributed to during crossover: two when its pair
    /// was crossed, one when copied.
    pub fn crossover_counts(&self) -> Vec<usize> {
        self.crossed.iter().map(|&c| if c { 2 } else { 1 }).collect()
    }

    pub fn parent_mean(&self) -> f64 {
        mean(&self.parent_fitness)
    }

    pub fn pool_mean(&self) -> f64 {
        mean(&self.after_mutation)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Response to selection, selection differential and intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionDiagnostics {
    /// `None` for the first generation.
    pub response: Option<f64>,
    pub differential: f64,
    /// `None` when the parent variance is zero.
    pub intensity: Option<f64>,
}

pub fn selection_diagnostics(
    previous: Option<&FitnessStats>,
    parents: &FitnessStats,
    selected: &FitnessStats,
) -> SelectionDiagnostics {
    let differential = selected.mean - parents.mean;
    let sd = parents.std_dev();
    SelectionDiagnostics {
        response: previous.map(|p| parents.mean - p.mean),
        differential,
        intensity: (sd > 0.0).then(|| differential / sd),
    }
}

/// Everything produced by one call to [`Engine::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub population: Population,
    pub lineage: LineageRecord,
    pub parent_stats: FitnessStats,
    pub selected_stats: FitnessStats,
    pub offspring_stats: FitnessStats,
    pub stats: FitnessStats,
    pub elite_size: usize,
    pub elite_shrunk: bool,
    /// Objective calls made during this generation.
    pub evaluations: usize,
}

/// Seeded GA driver. Owns the RNG stream, elite state and evaluation count.
#[derive(Debug, Clone)]
pub struct Engine {
    cfg: GaConfig,
    spec: EncodingSpec,
    rng: ChaCha8Rng,
    elite: EliteState,
    evaluations: usize,
    next_id: u64,
}

impl Engine {
    pub fn new(cfg: GaConfig, spec: EncodingSpec) -> Result<Self> {
        cfg.validate()?;
        if spec.total_length() < 2 {
            return Err(Error::domain("chromosome must have at least two bits"));
        }
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let elite = EliteState::new(&cfg);
        Ok(Self {
            cfg,
            spec,
            rng,
            elite,
            evaluations: 0,
            next_id: 0,
        })
    }

    pub fn config(&self) -> &GaConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &EncodingSpec {
        &self.spec
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn elite(&self) -> EliteState {
        self.elite
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// Restores the initial elite count, for a fresh phase on the same
    /// RNG stream.
    pub fn reset_elite(&mut self) {
        self.elite = EliteState::new(&self.cfg);
    }

    pub fn mutation_probability(&self) -> f64 {
        self.cfg.mutation_rate.probability(self.spec.total_length())
    }

    fn evaluate<F>(&mut self, x: &[f64], f: &F) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64 + ?Sized,
    {
        self.evaluations += 1;
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::NonFiniteObjective {
                value: v,
                point: x.to_vec(),
            });
        }
        Ok(v)
    }

    fn fresh_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    /// Decodes and evaluates `chromosome`.
    pub fn individual<F>(&mut self, chromosome: Chromosome, f: &F) -> Result<Individual>
    where
        F: Fn(&[f64]) -> f64 + ?Sized,
    {
        let phenotype = self.spec.decode(&chromosome)?;
        let fitness = self.evaluate(&phenotype, f)?;
        let id = self.fresh_id();
        Ok(Individual {
            chromosome,
            phenotype,
            fitness,
            id,
        })
    }

    /// An individual evaluated at the exact point `x`, carrying
    /// `encode(x)` as its genotype.
    pub fn individual_at<F>(&mut self, x: &[f64], f: &F) -> Result<Individual>
    where
        F: Fn(&[f64]) -> f64 + ?Sized,
    {
        let chromosome = self.spec.encode(x)?;
        let fitness = self.evaluate(x, f)?;
        let id = self.fresh_id();
        Ok(Individual {
            chromosome,
            phenotype: x.to_vec(),
            fitness,
            id,
        })
    }

    pub fn random_individuals<F>(&mut self, count: usize, f: &F) -> Result<Vec<Individual>>
    where
        F: Fn(&[f64]) -> f64 + ?Sized,
    {
        (0..count)
            .map(|_| {
                let c = self.spec.random_chromosome(&mut self.rng);
                self.individual(c, f)
            })
            .collect()
    }

    pub fn random_population<F>(&mut self, f: &F) -> Result<Population>
    where
        F: Fn(&[f64]) -> f64 + ?Sized,
    {
        let members = self.random_individuals(self.cfg.population_size, f)?;
        Ok(Population { members, generation: 0 })
    }

    /// Re-evaluates only when the genotype changed; otherwise the child
    /// inherits fitness and phenotype from `from`.
    fn child<F>(&mut self, chromosome: Chromosome, from: &Individual, f: &F) -> Result<Individual>
    where
        F: Fn(&[f64]) -> f64 + ?Sized,
    {
        if chromosome == from.chromosome {
            Ok(Individual {
                id: self.fresh_id(),
                ..from.clone()
            })
        } else {
            self.individual(chromosome, f)
        }
    }

    /// Selection, pairwise crossover, mutation, evaluation and adaptive
    /// elitist replacement.
    pub fn step<F>(&mut self, pop: &Population, f: &F) -> Result<Generation>
    where
        F: Fn(&[f64]) -> f64 + ?Sized,
    {
        let n = self.cfg.population_size;
        if pop.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: pop.len(),
            });
        }
        let start_evals = self.evaluations;
        let parent_fitness = pop.fitnesses();

        let slot_parent = match self.cfg.selection {
            Selection::RouletteWheel => roulette_select(&parent_fitness, n, &mut self.rng)?,
            Selection::BinaryTournament => tournament_select(&parent_fitness, 2, n, &mut self.rng)?,
        };
        let selected: Vec<Individual> = slot_parent.iter().map(|&i| pop.members[i].clone()).collect();
        let after_selection: Vec<f64> = selected.iter().map(|m| m.fitness).collect();

        let mut crossed_pool = Vec::with_capacity(n);
        let mut crossed = Vec::with_capacity(n);
        for pair in selected.chunks_exact(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if self.rng.gen_bool(self.cfg.crossover_rate) {
                let (c1, c2) = single_point_crossover(&a.chromosome, &b.chromosome, &mut self.rng)?;
                crossed_pool.push(self.child(c1, a, f)?);
                crossed_pool.push(self.child(c2, b, f)?);
                crossed.extend([true, true]);
            } else {
                crossed_pool.push(a.clone());
                crossed_pool.push(b.clone());
                crossed.extend([false, false]);
            }
        }
        let after_crossover: Vec<f64> = crossed_pool.iter().map(|m| m.fitness).collect();

        let pm = self.mutation_probability();
        let mut offspring = Vec::with_capacity(n);
        for c in &crossed_pool {
            let mutated = bit_flip_mutation(&c.chromosome, pm, &mut self.rng);
            offspring.push(self.child(mutated, c, f)?);
        }
        let after_mutation: Vec<f64> = offspring.iter().map(|m| m.fitness).collect();

        let replacement = adaptive_elitism_replace(
            &pop.members,
            &offspring,
            &mut self.elite,
            self.cfg.elite_shrink,
            self.cfg.overlap_fraction,
        )?;
        let population = Population {
            members: replacement.members,
            generation: pop.generation + 1,
        };
        Ok(Generation {
            parent_stats: fitness_stats(&parent_fitness)?,
            selected_stats: fitness_stats(&after_selection)?,
            offspring_stats: fitness_stats(&after_mutation)?,
            stats: population.stats()?,
            lineage: LineageRecord {
                generation: population.generation,
                parent_fitness,
                slot_parent,
                after_selection,
                after_crossover,
                after_mutation,
                crossed,
            },
            population,
            elite_size: replacement.elite_size,
            elite_shrunk: replacement.shrunk,
            evaluations: self.evaluations - start_evals,
        })
    }
}
