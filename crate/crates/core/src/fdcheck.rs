//! Finite-difference derivative oracle, independent of the AD code path.
//!
//! Used by the derivative self-check command and by tests that validate AD
//! gradients and Hessians.

use nalgebra::{DMatrix, DVector};

/// Step for first derivatives: `h_i = GRAD_STEP * max(1, |x_i|)^STEP_POWER`.
pub const GRAD_STEP: f64 = 1e-4;
/// Base step for second derivatives.
pub const HESS_STEP: f64 = 1e-3;
/// The benchmarks oscillate with a period that grows like `sqrt|x|`
/// (Schwefel) or not at all (Ackley, Rastrigin), so steps scale gently.
pub const STEP_POWER: f64 = 0.5;

fn step(base: f64, x: f64) -> f64 {
    base * x.abs().max(1.0).powf(STEP_POWER)
}

/// Five-point central-difference gradient, `O(h^4)` truncation.
pub fn gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> DVector<f64> {
    let mut xp = x.to_vec();
    let mut at = |i: usize, v: f64| {
        xp[i] = v;
        let r = f(&xp);
        xp[i] = x[i];
        r
    };
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            let h = step(GRAD_STEP, x[i]);
            let (p1, m1) = (at(i, x[i] + h), at(i, x[i] - h));
            let (p2, m2) = (at(i, x[i] + 2.0 * h), at(i, x[i] - 2.0 * h));
            (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)
        }),
    )
}

/// Second-order central differences of function values at steps `h` and
/// `2h`, Richardson-combined to `O(h^4)`.
pub fn hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> DMatrix<f64> {
    let fine = hessian_at(&f, x, 1.0);
    let coarse = hessian_at(&f, x, 2.0);
    (fine * 4.0 - coarse) / 3.0
}

fn hessian_at<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], scale: f64) -> DMatrix<f64> {
    let n = x.len();
    let f0 = f(x);
    let mut xp = x.to_vec();
    let mut eval = |di: (usize, f64), dj: Option<(usize, f64)>| {
        xp[di.0] += di.1;
        if let Some((j, hj)) = dj {
            xp[j] += hj;
        }
        let v = f(&xp);
        xp.copy_from_slice(x);
        v
    };
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let hi = scale * step(HESS_STEP, x[i]);
        let fp = eval((i, hi), None);
        let fm = eval((i, -hi), None);
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = scale * step(HESS_STEP, x[j]);
            let fpp = eval((i, hi), Some((j, hj)));
            let fpm = eval((i, hi), Some((j, -hj)));
            let fmp = eval((i, -hi), Some((j, hj)));
            let fmm = eval((i, -hi), Some((j, -hj)));
            let v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// `max|a - b| / max(1, max|b|)` over all entries.
pub fn relative_error<'a, I>(a: I, b: I) -> f64
where
    I: IntoIterator<Item = &'a f64>,
{
    let (mut diff, mut scale) = (0.0f64, 1.0f64);
    for (x, y) in a.into_iter().zip(b) {
        diff = diff.max((x - y).abs());
        scale = scale.max(y.abs());
    }
    diff / scale
}
