//! Newton-type local search with exact Hessians.
//!
//! Each iteration evaluates value, gradient and Hessian in one AD sweep,
//! regularizes the Hessian until it is positive definite, computes a step
//! (plain Newton solve, or a log-barrier interior-point solve of the
//! bound-constrained quadratic model), and picks a step length satisfying
//! the Wolfe conditions with `alpha` in `(0, 1]`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::autodiff::Derivatives;
use crate::benchmarks::Objective;
use crate::error::{Error, Result};

/// Fraction-to-boundary parameter used by the interior-point solver.
pub const FRACTION_TO_BOUNDARY: f64 = 0.995;
/// Barrier parameter at which the interior-point solve stops.
pub const MIN_BARRIER: f64 = 1e-8;
/// Cap on trial points per line search.
pub const MAX_LINE_SEARCH_EVALS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoundBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::LengthMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] < upper[i])) {
            return Err(Error::domain(format!(
                "bound {i}: lower {} is not below upper {}",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(n: usize, lower: f64, upper: f64) -> Self {
        Self::new(vec![lower; n], vec![upper; n]).expect("uniform bounds must be ordered")
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn is_strictly_interior(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| l < v && v < u)
    }

    /// Moves coordinates on or beyond a bound inside by `margin * range`.
    pub fn project_inward(&self, x: &[f64], margin: f64) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| {
                let pad = margin * (u - l);
                v.clamp(l + pad, u - pad)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionKind {
    Newton,
    /// `d = -g`; the linear-rate baseline.
    SteepestDescent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingRule {
    /// `||g||_inf <= grad_tol` or `||d|| <= step_tol`.
    Absolute,
    /// Additionally stop once both the gradient-norm change and the
    /// step-norm change between consecutive iterations fall below these.
    Delta { grad_change: f64, step_change: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqpConfig {
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_iter: usize,
    pub c1: f64,
    pub c2: f64,
    pub lambda_min: f64,
    pub stopping: StoppingRule,
    pub direction: DirectionKind,
}

impl Default for SqpConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            step_tol: 1e-6,
            max_iter: 200,
            c1: 1e-4,
            c2: 0.9,
            lambda_min: 1e-6,
            stopping: StoppingRule::Absolute,
            direction: DirectionKind::Newton,
        }
    }
}

impl SqpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::domain(format!(
                "Wolfe constants need 0 < c1 < c2 < 1, got c1={} c2={}",
                self.c1, self.c2
            )));
        }
        if !(self.grad_tol > 0.0 && self.step_tol > 0.0 && self.lambda_min > 0.0) {
            return Err(Error::domain("tolerances and lambda_min must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::domain("max_iter must be positive"));
        }
        Ok(())
    }
}

/// Diagonal shift applied to the Hessian before solving.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularization {
    Shift(f64),
    /// The ladder was exhausted; the direction is `-g`.
    SteepestFallback,
}

impl Regularization {
    /// Shift as a number; the fallback reports infinity.
    pub fn as_f64(self) -> f64 {
        match self {
            Regularization::Shift(l) => l,
            Regularization::SteepestFallback => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub d: DVector<f64>,
    pub regularization: Regularization,
}

impl Direction {
    /// `H + lambda I` that produced this direction.
    pub fn regularized_hessian(&self, hess: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        match self.regularization {
            Regularization::Shift(l) => {
                let n = hess.nrows();
                Some(hess + DMatrix::identity(n, n) * l)
            }
            Regularization::SteepestFallback => None,
        }
    }
}

/// Solves `(H + lambda I) d = -g` for the smallest `lambda` in
/// `{0, lambda_min, 10 lambda_min, ...}` that gives a Cholesky factorization
/// and a descent direction. Beyond `1e8 * lambda_min` falls back to `-g`.
pub fn newton_direction(grad: &DVector<f64>, hess: &DMatrix<f64>, lambda_min: f64) -> Direction {
    let n = grad.len();
    let ladder = std::iter::once(0.0).chain(
        std::iter::successors(Some(lambda_min), |l| Some(l * 10.0))
            .take_while(|&l| l <= 1e8 * lambda_min * (1.0 + 1e-9)),
    );
    for lambda in ladder {
        let m = hess + DMatrix::identity(n, n) * lambda;
        if let Some(chol) = Cholesky::new(m) {
            let d = -chol.solve(grad);
            if d.iter().all(|v| v.is_finite()) && d.dot(grad) < 0.0 {
                return Direction {
                    d,
                    regularization: Regularization::Shift(lambda),
                };
            }
        }
    }
    Direction {
        d: -grad,
        regularization: Regularization::SteepestFallback,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    pub value: f64,
    pub slope: f64,
    pub evaluations: usize,
    /// Both Wolfe conditions hold at `alpha`. False only when the
    /// evaluation cap was hit or the curvature condition cannot be met
    /// inside `(0, 1]`; sufficient decrease always holds.
    pub wolfe: bool,
}

pub fn sufficient_decrease(phi0: f64, dphi0: f64, alpha: f64, phi: f64, c1: f64) -> bool {
    phi <= phi0 + c1 * alpha * dphi0
}

pub fn curvature(dphi0: f64, dphi: f64, c2: f64) -> bool {
    dphi >= c2 * dphi0
}

/// Wolfe step length in `(0, 1]` along a descent direction.
///
/// `phi(alpha)` returns the merit value and its derivative. A unit step is
/// taken whenever it satisfies both conditions; otherwise the bracket
/// `[lo, hi]` is narrowed with safeguarded quadratic interpolation from
/// `phi(lo)`, `phi'(lo)` and `phi(hi)`.
pub fn wolfe_line_search<F>(
    mut phi: F,
    phi0: f64,
    dphi0: f64,
    c1: f64,
    c2: f64,
) -> Result<LineSearchOutcome>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    if !(dphi0 < 0.0) {
        return Err(Error::LineSearch(format!(
            "direction is not a descent direction (slope {dphi0})"
        )));
    }
    let mut lo = (0.0, phi0, dphi0);
    let mut hi: Option<(f64, f64)> = None;
    let mut best: Option<LineSearchOutcome> = None;
    let mut alpha = 1.0;

    for evaluations in 1..=MAX_LINE_SEARCH_EVALS {
        let (value, slope) = phi(alpha)?;
        let armijo = value.is_finite() && sufficient_decrease(phi0, dphi0, alpha, value, c1);
        if armijo {
            let outcome = LineSearchOutcome {
                alpha,
                value,
                slope,
                evaluations,
                wolfe: curvature(dphi0, slope, c2),
            };
            if outcome.wolfe {
                return Ok(outcome);
            }
            if best.map_or(true, |b| value < b.value) {
                best = Some(outcome);
            }
            match hi {
                // still descending steeply at the unit step; nothing larger is allowed
                None => break,
                Some(_) => lo = (alpha, value, slope),
            }
        } else {
            hi = Some((alpha, value));
        }

        let (a_lo, f_lo, d_lo) = lo;
        let (a_hi, f_hi) = hi.expect("bracket upper end is set");
        let width = a_hi - a_lo;
        if width <= f64::EPSILON * a_hi.max(1.0) {
            break;
        }
        let curv = (f_hi - f_lo - d_lo * width) / (width * width);
        let mut next = if curv > 0.0 && f_hi.is_finite() {
            a_lo - d_lo / (2.0 * curv)
        } else {
            a_lo + 0.5 * width
        };
        next = next.clamp(a_lo + 0.1 * width, a_lo + 0.9 * width);
        alpha = next;
    }

    let mut out = best.ok_or_else(|| {
        Error::LineSearch("no step satisfying sufficient decrease was found".into())
    })?;
    out.evaluations = out.evaluations.max(1);
    Ok(out)
}

fn box_offsets(x: &[f64], bounds: &BoundBox) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != bounds.dimension() {
        return Err(Error::LengthMismatch {
            expected: bounds.dimension(),
            found: x.len(),
        });
    }
    if !bounds.is_strictly_interior(x) {
        return Err(Error::domain("interior-point solve needs a strictly interior point"));
    }
    let lo = x.iter().zip(bounds.lower()).map(|(v, l)| l - v).collect();
    let hi = x.iter().zip(bounds.upper()).map(|(v, u)| u - v).collect();
    Ok((lo, hi))
}

/// Largest `t <= 1` keeping `s + t ds` at least `1 - tau` of the way from
/// the current slack to each bound.
fn fraction_to_boundary(s: &DVector<f64>, ds: &DVector<f64>, lo: &[f64], hi: &[f64], tau: f64) -> f64 {
    let mut t = 1.0f64;
    for i in 0..s.len() {
        if ds[i] < 0.0 {
            t = t.min(tau * (lo[i] - s[i]) / ds[i]);
        } else if ds[i] > 0.0 {
            t = t.min(tau * (hi[i] - s[i]) / ds[i]);
        }
    }
    t.max(0.0)
}

fn barrier_objective(g: &DVector<f64>, h: &DMatrix<f64>, s: &DVector<f64>, lo: &[f64], hi: &[f64], mu: f64) -> f64 {
    let mut v = g.dot(s) + 0.5 * s.dot(&(h * s));
    for i in 0..s.len() {
        let (a, b) = (s[i] - lo[i], hi[i] - s[i]);
        if a <= 0.0 || b <= 0.0 {
            return f64::INFINITY;
        }
        v -= mu * (a.ln() + b.ln());
    }
    v
}

/// Approximately minimizes `g's + s'Hs/2` subject to
/// `lower <= x + s <= upper` with log-barrier Newton iterations and the
/// schedule `mu <- mu / 10` down to [`MIN_BARRIER`]. `H` must be positive
/// definite and `x` strictly interior; the returned step keeps `x + s`
/// strictly feasible.
pub fn ipm_qp_solve(g: &DVector<f64>, h: &DMatrix<f64>, x: &[f64], bounds: &BoundBox) -> Result<DVector<f64>> {
    let n = g.len();
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: h.nrows(),
        });
    }
    let (lo, hi) = box_offsets(x, bounds)?;
    match barrier_solve(g, h, &lo, &hi) {
        Some(s) => Ok(s),
        None => {
            // barrier iterations broke down: take the clipped Newton step
            let chol = Cholesky::new(h.clone())
                .ok_or_else(|| Error::domain("quadratic model is not positive definite"))?;
            let full = -chol.solve(g);
            let zero = DVector::zeros(n);
            let t = fraction_to_boundary(&zero, &full, &lo, &hi, FRACTION_TO_BOUNDARY);
            Ok(full * t)
        }
    }
}

fn barrier_solve(g: &DVector<f64>, h: &DMatrix<f64>, lo: &[f64], hi: &[f64]) -> Option<DVector<f64>> {
    let n = g.len();
    let mut s = DVector::zeros(n);
    let mut mu = g.amax().max(1.0) * 0.1;
    loop {
        let mut converged = false;
        for _ in 0..100 {
            let mut grad = g + h * &s;
            let mut hb = h.clone();
            for i in 0..n {
                let (a, b) = (s[i] - lo[i], hi[i] - s[i]);
                grad[i] += -mu / a + mu / b;
                hb[(i, i)] += mu / (a * a) + mu / (b * b);
            }
            let ds = -Cholesky::new(hb)?.solve(&grad);
            let decrement = -grad.dot(&ds);
            if !decrement.is_finite() {
                return None;
            }
            if decrement <= 1e-14 * (1.0 + g.amax()) {
                converged = true;
                break;
            }
            let mut t = fraction_to_boundary(&s, &ds, lo, hi, FRACTION_TO_BOUNDARY);
            let f0 = barrier_objective(g, h, &s, lo, hi, mu);
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &s + &ds * t;
                let f1 = barrier_objective(g, h, &trial, lo, hi, mu);
                if f1 <= f0 - 1e-4 * t * decrement {
                    s = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                // no further progress representable at this barrier level
                converged = true;
                break;
            }
        }
        if !converged {
            return None;
        }
        if mu <= MIN_BARRIER {
            return Some(s);
        }
        mu = (mu / 10.0).max(MIN_BARRIER * 0.999);
    }
}

/// One accepted local-search step.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonIterate {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub hess: DMatrix<f64>,
    pub direction: Vec<f64>,
    pub alpha: f64,
    pub regularization: Regularization,
    /// Value and directional derivative at the accepted point.
    pub f_next: f64,
    pub slope_next: f64,
    pub wolfe: bool,
    /// Objective sweeps spent in this step's line search.
    pub evaluations: usize,
}

impl NewtonIterate {
    pub fn grad_norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn direction_norm(&self) -> f64 {
        self.direction.iter().map(|d| d * d).sum::<f64>().sqrt()
    }

    /// `g'd` at the start of the step.
    pub fn slope(&self) -> f64 {
        self.grad.iter().zip(&self.direction).map(|(g, d)| g * d).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    StepTolerance,
    DeltaCriteria,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqpOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: Vec<NewtonIterate>,
    /// AD sweeps performed, including line-search trial points.
    pub evaluations: usize,
    pub termination: Termination,
}

/// Runs the Newton/SQP loop on `objective` (minimized) from `x0`.
///
/// With `bounds`, steps come from [`ipm_qp_solve`] and every iterate stays
/// strictly interior; a start on the boundary is moved inside by
/// `1e-6 * range`. Without bounds the regularized Newton direction is used.
pub fn sqp_run<O: Objective + ?Sized>(
    objective: &O,
    x0: &[f64],
    bounds: Option<&BoundBox>,
    cfg: &SqpConfig,
) -> Result<SqpOutcome> {
    cfg.validate()?;
    if x0.len() != objective.dimension() {
        return Err(Error::LengthMismatch {
            expected: objective.dimension(),
            found: x0.len(),
        });
    }
    let mut x: Vec<f64> = match bounds {
        Some(b) if !b.is_strictly_interior(x0) => b.project_inward(x0, 1e-6),
        _ => x0.to_vec(),
    };
    let eval = |p: &[f64], iteration: usize| -> Result<Derivatives> {
        objective
            .derivatives(p)
            .map_err(|source| Error::Iterate { iteration, source })
    };
    let mut current = eval(&x, 0)?;
    let mut evaluations = 1;
    let mut iterations: Vec<NewtonIterate> = Vec::new();
    let mut termination = Termination::MaxIterations;

    if current.gradient.amax() <= cfg.grad_tol {
        return Ok(SqpOutcome {
            x,
            f: current.value,
            iterations,
            evaluations,
            termination: Termination::GradientTolerance,
        });
    }

    for k in 0..cfg.max_iter {
        let g = &current.gradient;
        let (d, regularization) = match cfg.direction {
            DirectionKind::SteepestDescent => (-g, Regularization::SteepestFallback),
            DirectionKind::Newton => {
                let dir = newton_direction(g, &current.hessian, cfg.lambda_min);
                let step = match (bounds, dir.regularized_hessian(&current.hessian)) {
                    (Some(b), Some(m)) => {
                        let s = ipm_qp_solve(g, &m, &x, b)?;
                        if s.dot(g) < 0.0 {
                            s
                        } else {
                            dir.d.clone()
                        }
                    }
                    _ => dir.d.clone(),
                };
                (step, dir.regularization)
            }
        };
        // keep steepest or fallback steps inside the box too
        let d = match bounds {
            Some(b) if !b.is_strictly_interior(&axpy(&x, 1.0, &d)) => {
                let (lo, hi) = box_offsets(&x, b)?;
                let zero = DVector::zeros(d.len());
                let t = fraction_to_boundary(&zero, &d, &lo, &hi, FRACTION_TO_BOUNDARY);
                d * t
            }
            _ => d,
        };

        if d.norm() <= cfg.step_tol {
            termination = Termination::StepTolerance;
            break;
        }

        let slope0 = g.dot(&d);
        let mut trials: Vec<(f64, Derivatives)> = Vec::new();
        let search = wolfe_line_search(
            |alpha| {
                let p = axpy(&x, alpha, &d);
                let dv = eval(&p, k)?;
                let out = (dv.value, dv.gradient.dot(&d));
                trials.push((alpha, dv));
                Ok(out)
            },
            current.value,
            slope0,
            cfg.c1,
            cfg.c2,
        );
        let step_evals = trials.len();
        evaluations += step_evals;
        let ls = match search {
            Ok(ls) => ls,
            Err(Error::LineSearch(_)) => {
                termination = Termination::LineSearchFailed;
                break;
            }
            Err(e) => return Err(e),
        };
        let next = trials
            .into_iter()
            .rev()
            .find(|(a, _)| *a == ls.alpha)
            .map(|(_, dv)| dv)
            .expect("accepted step was evaluated");

        let prev_grad_norm = current.gradient.norm();
        iterations.push(NewtonIterate {
            iteration: k,
            x: x.clone(),
            f: current.value,
            grad: current.gradient.as_slice().to_vec(),
            hess: current.hessian.clone(),
            direction: d.as_slice().to_vec(),
            alpha: ls.alpha,
            regularization,
            f_next: ls.value,
            slope_next: ls.slope,
            wolfe: ls.wolfe,
            evaluations: step_evals,
        });
        x = axpy(&x, ls.alpha, &d);
        current = next;

        if current.gradient.amax() <= cfg.grad_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        if let (StoppingRule::Delta { grad_change, step_change }, [.., prev, last]) =
            (cfg.stopping, iterations.as_slice())
        {
            let dg = (current.gradient.norm() - prev_grad_norm).abs();
            let dd = (last.direction_norm() - prev.direction_norm()).abs();
            if dg <= grad_change && dd <= step_change {
                termination = Termination::DeltaCriteria;
                break;
            }
        }
    }

    Ok(SqpOutcome {
        x,
        f: current.value,
        iterations,
        evaluations,
        termination,
    })
}

fn axpy(x: &[f64], a: f64, d: &DVector<f64>) -> Vec<f64> {
    x.iter().zip(d.iter()).map(|(xi, di)| xi + a * di).collect()
}
