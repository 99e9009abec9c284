//! AD derivatives against finite differences at random points of a
//! benchmark's box.

use ecsqp::fdcheck;
use ecsqp::{AdContext, AdError, AdScalar, BenchmarkProblem, Objective};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const GRAD_TOL: f64 = 1e-6;
pub const HESS_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct AdCheckReport {
    pub samples: usize,
    /// Points where the sweep hit a kink and the comparison was skipped.
    pub skipped: usize,
    pub max_grad_err: f64,
    pub max_hess_err: f64,
}

impl AdCheckReport {
    pub fn passed(&self) -> bool {
        self.max_grad_err < GRAD_TOL && self.max_hess_err < HESS_TOL
    }
}

/// Adds `0.01 x_0` on the AD path only, so the derivative check must fail.
pub struct Corrupted<'a>(pub &'a BenchmarkProblem);

impl Objective for Corrupted<'_> {
    fn dimension(&self) -> usize {
        self.0.dimension()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.0.value(x)
    }

    fn ad_value(&self, ctx: &AdContext, x: &[AdScalar]) -> Result<AdScalar, AdError> {
        Ok(self.0.ad_value(ctx, x)? + &x[0] * 0.01)
    }
}

pub fn check<O: Objective + ?Sized>(
    objective: &O,
    problem: &BenchmarkProblem,
    samples: usize,
    seed: u64,
) -> Result<AdCheckReport, AdError> {
    let mut rng = StdRng::seed_from_u64(seed);
    let (lo, hi) = (problem.bounds.lower(), problem.bounds.upper());
    let mut rep = AdCheckReport {
        samples,
        skipped: 0,
        max_grad_err: 0.0,
        max_hess_err: 0.0,
    };
    for _ in 0..samples {
        let x: Vec<f64> = (0..problem.dimension).map(|i| rng.gen_range(lo[i]..hi[i])).collect();
        let d = objective.derivatives(&x)?;
        if d.nonsmooth {
            rep.skipped += 1;
            continue;
        }
        let f = |y: &[f64]| objective.value(y);
        let g = fdcheck::gradient(f, &x);
        let h = fdcheck::hessian(f, &x);
        rep.max_grad_err = rep.max_grad_err.max(fdcheck::relative_error(d.gradient.iter(), g.iter()));
        rep.max_hess_err = rep.max_hess_err.max(fdcheck::relative_error(d.hessian.iter(), h.iter()));
    }
    Ok(rep)
}
