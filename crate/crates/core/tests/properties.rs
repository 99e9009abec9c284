//! Property suites, 1000 cases each.

use ecsqp::evolution::{adaptive_elitism_replace, EliteShrink, EliteState, Individual};
use ecsqp::hybrid::run_mode;
use ecsqp::local_search::{curvature, ipm_qp_solve, sqp_run, sufficient_decrease, StoppingRule};
use ecsqp::price_monitor::decompose;
use ecsqp::{
    AdContext, AdError, AdScalar, Benchmark, BenchmarkProblem, BoundBox, Chromosome, Engine, EncodingSpec, GaConfig,
    HybridConfig, Mode, MutationRate, Objective, Selection, SqpConfig, SwitchCriteria, VariableSpec,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn cases() -> ProptestConfig {
    ProptestConfig::with_cases(1000)
}

fn ind(fitness: f64, id: u64) -> Individual {
    Individual {
        chromosome: Chromosome::zeros(1),
        phenotype: vec![],
        fitness,
        id,
    }
}

fn bounds_and_precision() -> impl Strategy<Value = (f64, f64, f64)> {
    (-1e3f64..1e3, 1e-2f64..1e3, 1e-4f64..1.0).prop_map(|(a, w, p)| (a, a + w, p))
}

proptest! {
    #![proptest_config(cases())]

    #[test]
    fn decode_encode_within_half_step((a, b, p) in bounds_and_precision(), t in 0.0f64..=1.0) {
        let v = VariableSpec::new(a, b, p).unwrap();
        let spec = EncodingSpec::new(vec![v.clone()]).unwrap();
        let x = a + t * (b - a);
        let back = spec.decode(&spec.encode(&[x]).unwrap()).unwrap()[0];
        prop_assert!((back - x).abs() <= v.step() / 2.0 * (1.0 + 1e-9) + 1e-12 * x.abs().max(1.0));
        // range/p <= 2^l only bounds the grid step by p 2^l / (2^l - 1)
        let levels = 2f64.powi(v.bit_length as i32);
        prop_assert!(v.step() <= p * levels / (levels - 1.0) * (1.0 + 1e-12));
        prop_assert!((b - a) / p > levels / 2.0 || v.bit_length == 1);
    }

    #[test]
    fn encode_decode_identity_on_genotypes((a, b, p) in bounds_and_precision(), seed in any::<u64>()) {
        use rand::SeedableRng;
        let spec = EncodingSpec::from_bounds(&[a, -1.0], &[b, 1.0], p).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let c = spec.random_chromosome(&mut rng);
        let x = spec.decode(&c).unwrap();
        prop_assert_eq!(spec.encode(&x).unwrap(), c);
    }

    #[test]
    fn encoding_is_monotone((a, b, p) in bounds_and_precision(), s in 0.0f64..=1.0, t in 0.0f64..=1.0) {
        let v = VariableSpec::new(a, b, p).unwrap();
        let spec = EncodingSpec::new(vec![v]).unwrap();
        let (x, y) = (a + s.min(t) * (b - a), a + s.max(t) * (b - a));
        let (cx, cy) = (spec.encode(&[x]).unwrap(), spec.encode(&[y]).unwrap());
        let dx = spec.decode(&cx).unwrap()[0];
        let dy = spec.decode(&cy).unwrap()[0];
        prop_assert!(dx <= dy);
    }

    #[test]
    fn elitism_never_loses_the_best(
        parents in prop::collection::vec(-1e3f64..1e3, 2..40),
        extra in prop::collection::vec(-1e3f64..1e3, 0..40),
        elite in 1usize..40,
        halve in any::<bool>(),
    ) {
        let n = parents.len();
        let offspring: Vec<f64> = parents.iter().chain(&extra).copied().map(|v| v * 0.9 - 10.0).take(n.max(1)).collect();
        let p: Vec<Individual> = parents.iter().enumerate().map(|(i, &f)| ind(f, i as u64)).collect();
        let o: Vec<Individual> = offspring.iter().enumerate().map(|(i, &f)| ind(f, 1000 + i as u64)).collect();
        let mut state = EliteState { size: elite.min(n) };
        let rule = if halve { EliteShrink::Halve } else { EliteShrink::OverlapFraction };
        let r = adaptive_elitism_replace(&p, &o, &mut state, rule, 0.5).unwrap();
        prop_assert_eq!(r.members.len(), n);
        prop_assert!(state.size >= 1);
        let best_p = parents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let best_r = r.members.iter().map(|m| m.fitness).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(best_r >= best_p);
    }

    #[test]
    fn ga_best_is_monotone(seed in any::<u64>(), roulette in any::<bool>(), pc in 0.0f64..=1.0) {
        let cfg = GaConfig {
            population_size: 10,
            crossover_rate: pc,
            mutation_rate: MutationRate::Fixed(0.1),
            selection: if roulette { Selection::RouletteWheel } else { Selection::BinaryTournament },
            overlap_fraction: 0.2,
            max_generations: 8,
            elite_shrink: EliteShrink::Halve,
            seed,
        };
        let spec = EncodingSpec::from_bounds(&[-5.12, -5.12], &[5.12, 5.12], 0.05).unwrap();
        let f = |x: &[f64]| -ecsqp::benchmarks::rastrigin(x);
        let mut engine = Engine::new(cfg, spec).unwrap();
        let mut pop = engine.random_population(&f).unwrap();
        let mut best = pop.best().unwrap().fitness;
        for _ in 0..8 {
            let g = engine.step(&pop, &f).unwrap();
            let b = g.population.best().unwrap().fitness;
            prop_assert!(b >= best);
            best = b;
            pop = g.population;
        }
    }

    #[test]
    fn decomposition_matches_brute_force(seed in any::<u64>(), n in prop::sample::select(vec![4usize, 6, 10]), pc in prop::sample::select(vec![0.6, 1.0])) {
        let cfg = GaConfig {
            population_size: n,
            crossover_rate: pc,
            mutation_rate: MutationRate::Fixed(0.2),
            selection: if seed % 2 == 0 { Selection::RouletteWheel } else { Selection::BinaryTournament },
            overlap_fraction: 0.5,
            max_generations: 3,
            elite_shrink: EliteShrink::Halve,
            seed,
        };
        let spec = EncodingSpec::from_bounds(&[0.0], &[15.0], 1.0).unwrap();
        let f = |x: &[f64]| 1.0 + x[0] * x[0];
        let mut engine = Engine::new(cfg, spec).unwrap();
        let pop = engine.random_population(&f).unwrap();
        let g = engine.step(&pop, &f).unwrap();
        let c = decompose(&g.lineage).unwrap();
        let l = &g.lineage;

        // brute force from the raw lineage
        let nf = n as f64;
        let mut z = vec![0.0; n];
        for &p in &l.slot_parent {
            z[p] += 1.0;
        }
        let qbar = l.parent_fitness.iter().sum::<f64>() / nf;
        let zbar = z.iter().sum::<f64>() / nf;
        let mut cov = 0.0;
        for i in 0..n {
            cov += (z[i] - zbar) * (l.parent_fitness[i] - qbar);
        }
        let sel = cov / nf / zbar;
        let mut xo = 0.0;
        let mut mu = 0.0;
        for s in 0..n {
            xo += l.after_crossover[s] - l.after_selection[s];
            mu += l.after_mutation[s] - l.after_crossover[s];
        }
        let (xo, mu) = (xo / nf, mu / nf);
        let dq = l.after_mutation.iter().sum::<f64>() / nf - qbar;
        let scale = dq.abs().max(1.0);
        prop_assert!((c.selection_term - sel).abs() <= 1e-9 * scale);
        prop_assert!((c.crossover_term - xo).abs() <= 1e-9 * scale);
        prop_assert!((c.mutation_term - mu).abs() <= 1e-9 * scale);
        prop_assert!((c.sum_of_terms() - dq).abs() <= 1e-9 * scale);
    }
}

/// Random smooth test function: `sum a_i (x_i - c_i)^2 + b sum sin(w x_i)`.
#[derive(Debug)]
struct Wavy {
    a: Vec<f64>,
    c: Vec<f64>,
    b: f64,
    w: f64,
}

impl Objective for Wavy {
    fn dimension(&self) -> usize {
        self.a.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        (0..x.len())
            .map(|i| self.a[i] * (x[i] - self.c[i]).powi(2) + self.b * (self.w * x[i]).sin())
            .sum()
    }

    fn ad_value(&self, ctx: &AdContext, x: &[AdScalar]) -> Result<AdScalar, AdError> {
        let mut acc = ctx.constant(0.0);
        for i in 0..x.len() {
            let d = &x[i] - self.c[i];
            acc = acc + &(&d * &d) * self.a[i] + (&x[i] * self.w).sin() * self.b;
        }
        Ok(acc)
    }
}

fn wavy() -> impl Strategy<Value = (Wavy, Vec<f64>)> {
    (1usize..5).prop_flat_map(|n| {
        (
            prop::collection::vec(0.1f64..5.0, n),
            prop::collection::vec(-3.0f64..3.0, n),
            0.0f64..2.0,
            0.5f64..3.0,
            prop::collection::vec(-4.0f64..4.0, n),
        )
            .prop_map(|(a, c, b, w, x0)| (Wavy { a, c, b, w }, x0))
    })
}

proptest! {
    #![proptest_config(cases())]

    #[test]
    fn every_accepted_step_meets_wolfe((obj, x0) in wavy(), bounded in any::<bool>()) {
        let cfg = SqpConfig { max_iter: 30, ..SqpConfig::default() };
        let bounds = BoundBox::uniform(x0.len(), -4.5, 4.5);
        let out = sqp_run(&obj, &x0, bounded.then_some(&bounds), &cfg).unwrap();
        for it in &out.iterations {
            let s0 = it.slope();
            prop_assert!(s0 < 0.0);
            prop_assert!(it.alpha > 0.0 && it.alpha <= 1.0);
            prop_assert!(sufficient_decrease(it.f, s0, it.alpha, it.f_next, cfg.c1));
            if it.wolfe {
                prop_assert!(curvature(s0, it.slope_next, cfg.c2));
            } else {
                // only at the unit-step cap, still descending
                prop_assert_eq!(it.alpha, 1.0);
                prop_assert!(it.slope_next < cfg.c2 * s0);
            }
        }
        let start = if bounded { bounds.project_inward(&x0, 1e-6) } else { x0.clone() };
        let f0 = obj.value(&start);
        prop_assert!(out.f <= f0 + 1e-12);
    }

    #[test]
    fn ipm_step_stays_strictly_inside(
        n in 1usize..6,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
        let h = &a * a.transpose() + DMatrix::identity(n, n) * rng.gen_range(1e-3..1.0);
        let g = DVector::from_fn(n, |_, _| rng.gen_range(-1e3..1e3));
        let lo: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..0.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(1e-3..20.0)).collect();
        let x: Vec<f64> = lo.iter().zip(&hi).map(|(l, u)| l + (u - l) * rng.gen_range(1e-4..(1.0 - 1e-4))).collect();
        let bounds = BoundBox::new(lo, hi).unwrap();
        let s = ipm_qp_solve(&g, &h, &x, &bounds).unwrap();
        let next: Vec<f64> = x.iter().zip(s.iter()).map(|(a, b)| a + b).collect();
        prop_assert!(bounds.is_strictly_interior(&next));
    }

    #[test]
    fn bounded_iterates_stay_inside((obj, x0) in wavy()) {
        let bounds = BoundBox::uniform(x0.len(), -1.0, 1.0);
        let out = sqp_run(&obj, &x0, Some(&bounds), &SqpConfig { max_iter: 20, ..SqpConfig::default() }).unwrap();
        prop_assert!(bounds.is_strictly_interior(&out.x));
        for it in &out.iterations {
            prop_assert!(bounds.is_strictly_interior(&it.x));
        }
    }

    #[test]
    fn ad_is_linear_and_obeys_product_rule(
        x in prop::collection::vec(-3.0f64..3.0, 3),
        a in -5.0f64..5.0,
        b in -5.0f64..5.0,
    ) {
        let ctx = AdContext::new(3);
        let v = ctx.variables(&x).unwrap();
        let f = (&v[0] * &v[1]).sin() + &v[2] * 2.0;
        let g = (&v[1] * &v[2]).exp() - &v[0];
        let lin = &f * a + &g * b;
        let prod = &f * &g;
        for i in 0..3 {
            prop_assert!((lin.grad()[i] - (a * f.grad()[i] + b * g.grad()[i])).abs() <= 1e-12 * (1.0 + lin.grad()[i].abs()));
            let pg = f.grad()[i] * g.value() + f.value() * g.grad()[i];
            prop_assert!((prod.grad()[i] - pg).abs() <= 1e-12 * (1.0 + pg.abs()));
            for j in 0..3 {
                let lh = a * f.hess(i, j) + b * g.hess(i, j);
                prop_assert!((lin.hess(i, j) - lh).abs() <= 1e-12 * (1.0 + lh.abs()));
                let ph = f.hess(i, j) * g.value() + f.grad()[i] * g.grad()[j] + f.grad()[j] * g.grad()[i] + f.value() * g.hess(i, j);
                prop_assert!((prod.hess(i, j) - ph).abs() <= 1e-10 * (1.0 + ph.abs()));
            }
        }
    }
}

proptest! {
    // each case is two full hybrid runs, kept tiny
    #![proptest_config(cases())]

    #[test]
    fn fixed_seed_is_deterministic(seed in any::<u64>(), which in 0usize..4, mode in prop::sample::select(vec![Mode::Hybrid, Mode::EcOnly, Mode::SqpOnly])) {
        let problem = BenchmarkProblem::new(Benchmark::ALL[which], 2);
        let mut cfg = HybridConfig::default();
        cfg.ga.population_size = 8;
        cfg.ga.overlap_fraction = 0.25;
        cfg.switching = SwitchCriteria::fixed_budget(4);
        cfg.sqp.max_iter = 10;
        cfg.sqp.stopping = StoppingRule::Absolute;
        let a = run_mode(&problem, &cfg, mode, seed).unwrap();
        let b = run_mode(&problem, &cfg, mode, seed).unwrap();
        prop_assert_eq!(a.f_star.to_bits(), b.f_star.to_bits());
        prop_assert_eq!(&a.x_star, &b.x_star);
        prop_assert_eq!(a.evaluations, b.evaluations);
        prop_assert_eq!(a.trace.len(), b.trace.len());
        for (r, s) in a.trace.iter().zip(&b.trace) {
            prop_assert_eq!(r.best.to_bits(), s.best.to_bits());
            prop_assert_eq!(r.mean.to_bits(), s.mean.to_bits());
        }
    }
}
