//! Vectorized forward-mode automatic differentiation.
//!
//! Every [`AdScalar`] carries its value together with the full gradient and
//! Hessian with respect to the `n` independent variables of its
//! [`AdContext`], so a single forward sweep through an expression yields exact
//! first and second derivatives.
//!
//! Unary functions propagate through the second-order chain rule
//!
//! ```text
//! value = f(v)
//! grad  = f'(v) * grad v
//! hess  = f'(v) * hess v + f''(v) * grad v grad v^T
//! ```
//!
//! Only the upper triangle of each Hessian is computed; the lower triangle is
//! a mirror, so results are exactly symmetric.
//!
//! Operations with a restricted domain (`div`, `ln`, `sqrt`, `powf` and
//! `powi` with a negative exponent) return [`AdError`] instead of producing
//! non-finite entries. Combining scalars of different dimension is a
//! programming error and panics.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdError {
    #[error("{op} is undefined at {value}")]
    Domain { op: &'static str, value: f64 },

    #[error("variable index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("expected {expected} input values, got {found}")]
    InputLength { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdContext {
    n: usize,
}

impl AdContext {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "AD context needs at least one independent variable");
        Self { n }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    /// Independent variable `index` seeded at `x0`: unit gradient, zero Hessian.
    pub fn variable(&self, index: usize, x0: f64) -> Result<AdScalar, AdError> {
        if index >= self.n {
            return Err(AdError::IndexOutOfRange { index, n: self.n });
        }
        let mut s = self.constant(x0);
        s.grad[index] = 1.0;
        Ok(s)
    }

    pub fn constant(&self, c: f64) -> AdScalar {
        AdScalar {
            value: c,
            grad: vec![0.0; self.n],
            hess: vec![0.0; self.n * self.n],
            nonsmooth: false,
        }
    }

    pub fn variables(&self, x0: &[f64]) -> Result<Vec<AdScalar>, AdError> {
        if x0.len() != self.n {
            return Err(AdError::InputLength {
                expected: self.n,
                found: x0.len(),
            });
        }
        x0.iter()
            .enumerate()
            .map(|(i, &x)| self.variable(i, x))
            .collect()
    }

    /// Seeds `x0`, runs `f` once and returns value, gradient and Hessian.
    pub fn evaluate<F>(&self, x0: &[f64], f: F) -> Result<Derivatives, AdError>
    where
        F: FnOnce(&AdContext, &[AdScalar]) -> Result<AdScalar, AdError>,
    {
        let vars = self.variables(x0)?;
        let out = f(self, &vars)?;
        assert_eq!(out.dimension(), self.n, "expression dimension mismatch");
        Ok(out.into_derivatives())
    }
}

/// Value, gradient and Hessian from one forward sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    /// Set when the sweep passed through `abs` or `sqrt` exactly at zero,
    /// where the derivative fields are defined as zero.
    pub nonsmooth: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdScalar {
    value: f64,
    grad: Vec<f64>,
    // row-major n x n, symmetric
    hess: Vec<f64>,
    nonsmooth: bool,
}

impl AdScalar {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn dimension(&self) -> usize {
        self.grad.len()
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.hess[i * self.dimension() + j]
    }

    pub fn is_nonsmooth(&self) -> bool {
        self.nonsmooth
    }

    pub fn into_derivatives(self) -> Derivatives {
        let n = self.dimension();
        Derivatives {
            value: self.value,
            gradient: DVector::from_vec(self.grad),
            hessian: DMatrix::from_row_slice(n, n, &self.hess),
            nonsmooth: self.nonsmooth,
        }
    }

    fn check_dims(&self, other: &AdScalar) {
        assert_eq!(
            self.dimension(),
            other.dimension(),
            "AD dimension mismatch: {} vs {}",
            self.dimension(),
            other.dimension()
        );
    }

    fn mirror(&mut self) {
        let n = self.dimension();
        for i in 0..n {
            for j in 0..i {
                self.hess[i * n + j] = self.hess[j * n + i];
            }
        }
    }

    /// Applies a scalar function with first and second derivatives `d1`, `d2`
    /// evaluated at the current value.
    fn chain(&self, value: f64, d1: f64, d2: f64) -> AdScalar {
        let n = self.dimension();
        let g = &self.grad;
        let mut hess = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                hess[i * n + j] = d1 * self.hess[i * n + j] + d2 * g[i] * g[j];
            }
        }
        let mut out = AdScalar {
            value,
            grad: g.iter().map(|gi| d1 * gi).collect(),
            hess,
            nonsmooth: self.nonsmooth,
        };
        out.mirror();
        out
    }

    fn nonsmooth_zero(&self) -> AdScalar {
        let n = self.dimension();
        AdScalar {
            value: 0.0,
            grad: vec![0.0; n],
            hess: vec![0.0; n * n],
            nonsmooth: true,
        }
    }

    fn scaled(&self, c: f64) -> AdScalar {
        AdScalar {
            value: self.value * c,
            grad: self.grad.iter().map(|g| g * c).collect(),
            hess: self.hess.iter().map(|h| h * c).collect(),
            nonsmooth: self.nonsmooth,
        }
    }

    fn zip_with(&self, other: &AdScalar, f: impl Fn(f64, f64) -> f64) -> AdScalar {
        self.check_dims(other);
        AdScalar {
            value: f(self.value, other.value),
            grad: self.grad.iter().zip(&other.grad).map(|(a, b)| f(*a, *b)).collect(),
            hess: self.hess.iter().zip(&other.hess).map(|(a, b)| f(*a, *b)).collect(),
            nonsmooth: self.nonsmooth || other.nonsmooth,
        }
    }

    fn product(&self, other: &AdScalar) -> AdScalar {
        self.check_dims(other);
        let n = self.dimension();
        let (a, b) = (self.value, other.value);
        let (ga, gb) = (&self.grad, &other.grad);
        let mut hess = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = i * n + j;
                hess[k] = a * other.hess[k] + b * self.hess[k] + ga[i] * gb[j] + gb[i] * ga[j];
            }
        }
        let mut out = AdScalar {
            value: a * b,
            grad: ga.iter().zip(gb).map(|(x, y)| a * y + b * x).collect(),
            hess,
            nonsmooth: self.nonsmooth || other.nonsmooth,
        };
        out.mirror();
        out
    }

    pub fn recip(&self) -> Result<AdScalar, AdError> {
        let v = self.value;
        if v == 0.0 || !v.is_finite() {
            return Err(AdError::Domain { op: "recip", value: v });
        }
        Ok(self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v)))
    }

    pub fn div(&self, other: &AdScalar) -> Result<AdScalar, AdError> {
        if other.value == 0.0 {
            return Err(AdError::Domain {
                op: "div",
                value: other.value,
            });
        }
        Ok(self.product(&other.recip()?))
    }

    pub fn powi(&self, k: i32) -> Result<AdScalar, AdError> {
        let v = self.value;
        if k == 0 {
            return Ok(self.chain(1.0, 0.0, 0.0));
        }
        if k < 0 && v == 0.0 {
            return Err(AdError::Domain { op: "powi", value: v });
        }
        let kf = k as f64;
        Ok(self.chain(
            v.powi(k),
            kf * v.powi(k - 1),
            kf * (kf - 1.0) * v.powi(k - 2),
        ))
    }

    pub fn powf(&self, p: f64) -> Result<AdScalar, AdError> {
        let v = self.value;
        if !(v > 0.0) {
            return Err(AdError::Domain { op: "powf", value: v });
        }
        Ok(self.chain(v.powf(p), p * v.powf(p - 1.0), p * (p - 1.0) * v.powf(p - 2.0)))
    }

    pub fn sin(&self) -> AdScalar {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(&self) -> AdScalar {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(&self) -> AdScalar {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    pub fn ln(&self) -> Result<AdScalar, AdError> {
        let v = self.value;
        if !(v > 0.0) {
            return Err(AdError::Domain { op: "ln", value: v });
        }
        Ok(self.chain(v.ln(), 1.0 / v, -1.0 / (v * v)))
    }

    /// Square root; at exactly zero the derivative fields are zero and the
    /// result is flagged nonsmooth.
    pub fn sqrt(&self) -> Result<AdScalar, AdError> {
        let v = self.value;
        if v < 0.0 || v.is_nan() {
            return Err(AdError::Domain { op: "sqrt", value: v });
        }
        if v == 0.0 {
            return Ok(self.nonsmooth_zero());
        }
        let r = v.sqrt();
        Ok(self.chain(r, 0.5 / r, -0.25 / (r * v)))
    }

    /// Absolute value; at exactly zero the derivative fields are zero and the
    /// result is flagged nonsmooth.
    pub fn abs(&self) -> AdScalar {
        let v = self.value;
        if v == 0.0 {
            let mut out = self.chain(0.0, 0.0, 0.0);
            out.nonsmooth = true;
            return out;
        }
        self.chain(v.abs(), v.signum(), 0.0)
    }
}

impl Neg for &AdScalar {
    type Output = AdScalar;
    fn neg(self) -> AdScalar {
        self.scaled(-1.0)
    }
}

impl Neg for AdScalar {
    type Output = AdScalar;
    fn neg(self) -> AdScalar {
        -&self
    }
}

macro_rules! binary_op {
    ($trait:ident, $method:ident, $body:expr) => {
        impl $trait<&AdScalar> for &AdScalar {
            type Output = AdScalar;
            fn $method(self, rhs: &AdScalar) -> AdScalar {
                let f: fn(&AdScalar, &AdScalar) -> AdScalar = $body;
                f(self, rhs)
            }
        }
        impl $trait<AdScalar> for AdScalar {
            type Output = AdScalar;
            fn $method(self, rhs: AdScalar) -> AdScalar {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&AdScalar> for AdScalar {
            type Output = AdScalar;
            fn $method(self, rhs: &AdScalar) -> AdScalar {
                (&self).$method(rhs)
            }
        }
        impl $trait<AdScalar> for &AdScalar {
            type Output = AdScalar;
            fn $method(self, rhs: AdScalar) -> AdScalar {
                self.$method(&rhs)
            }
        }
    };
}

binary_op!(Add, add, |a, b| a.zip_with(b, |x, y| x + y));
binary_op!(Sub, sub, |a, b| a.zip_with(b, |x, y| x - y));
binary_op!(Mul, mul, |a, b| a.product(b));

impl Add<f64> for &AdScalar {
    type Output = AdScalar;
    fn add(self, c: f64) -> AdScalar {
        let mut out = self.clone();
        out.value += c;
        out
    }
}

impl Add<f64> for AdScalar {
    type Output = AdScalar;
    fn add(mut self, c: f64) -> AdScalar {
        self.value += c;
        self
    }
}

impl Add<AdScalar> for f64 {
    type Output = AdScalar;
    fn add(self, a: AdScalar) -> AdScalar {
        a + self
    }
}

impl Sub<f64> for AdScalar {
    type Output = AdScalar;
    fn sub(self, c: f64) -> AdScalar {
        self + (-c)
    }
}

impl Sub<f64> for &AdScalar {
    type Output = AdScalar;
    fn sub(self, c: f64) -> AdScalar {
        self + (-c)
    }
}

impl Sub<AdScalar> for f64 {
    type Output = AdScalar;
    fn sub(self, a: AdScalar) -> AdScalar {
        -a + self
    }
}

impl Mul<f64> for &AdScalar {
    type Output = AdScalar;
    fn mul(self, c: f64) -> AdScalar {
        self.scaled(c)
    }
}

impl Mul<f64> for AdScalar {
    type Output = AdScalar;
    fn mul(self, c: f64) -> AdScalar {
        self.scaled(c)
    }
}

impl Mul<AdScalar> for f64 {
    type Output = AdScalar;
    fn mul(self, a: AdScalar) -> AdScalar {
        a.scaled(self)
    }
}

impl Mul<&AdScalar> for f64 {
    type Output = AdScalar;
    fn mul(self, a: &AdScalar) -> AdScalar {
        a.scaled(self)
    }
}

/// Sum of scalars sharing one context; `None` for an empty iterator.
pub fn sum<'a, I>(terms: I) -> Option<AdScalar>
where
    I: IntoIterator<Item = &'a AdScalar>,
{
    let mut it = terms.into_iter();
    let first = it.next()?.clone();
    Some(it.fold(first, |acc, t| acc + t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn hess_matrix(s: &AdScalar) -> Vec<Vec<f64>> {
        let n = s.dimension();
        (0..n).map(|i| (0..n).map(|j| s.hess(i, j)).collect()).collect()
    }

    #[test]
    fn seeding() {
        let ctx = AdContext::new(2);
        let v = ctx.variable(0, PI).unwrap();
        assert_eq!(v.value(), PI);
        assert_eq!(v.grad(), &[1.0, 0.0]);
        assert_eq!(hess_matrix(&v), vec![vec![0.0; 2]; 2]);
        assert_eq!(ctx.variable(1, 0.0).unwrap().grad(), &[0.0, 1.0]);
        assert!(matches!(
            ctx.variable(2, 0.0),
            Err(AdError::IndexOutOfRange { index: 2, n: 2 })
        ));

        let one = AdContext::new(1).variable(0, 0.0).unwrap();
        assert_eq!((one.value(), one.grad(), one.hess(0, 0)), (0.0, &[1.0][..], 0.0));

        let c = ctx.constant(4.0);
        assert_eq!((c.value(), c.grad()), (4.0, &[0.0, 0.0][..]));
        let z = ctx.constant(0.0);
        assert!(z.grad().iter().chain(&z.hess).all(|&x| x == 0.0));
        assert_eq!((c + &v).dimension(), 2);
    }

    #[test]
    fn add_sub() {
        let ctx = AdContext::new(2);
        let x = ctx.variables(&[1.0, 2.0]).unwrap();
        let s = &x[0] + &x[1];
        assert_eq!((s.value(), s.grad()), (3.0, &[1.0, 1.0][..]));
        assert!(s.hess.iter().all(|&h| h == 0.0));
        let d = &x[0] - &x[1];
        assert_eq!(d.grad(), &[1.0, -1.0]);
        let z = &x[0] - &x[0];
        assert!(z.value() == 0.0 && z.grad().iter().chain(&z.hess).all(|&h| h == 0.0));
    }

    #[test]
    #[should_panic(expected = "dimension mismatch")]
    fn mixing_dimensions_panics() {
        let a = AdContext::new(2).constant(1.0);
        let b = AdContext::new(3).constant(1.0);
        let _ = a + b;
    }

    #[test]
    fn product_of_variables() {
        let ctx = AdContext::new(2);
        let x = ctx.variables(&[PI, PI / 2.0]).unwrap();
        let p = &x[0] * &x[1];
        assert!((p.value() - PI * PI / 2.0).abs() < 1e-15);
        assert_eq!(p.grad(), &[PI / 2.0, PI]);
        assert_eq!(hess_matrix(&p), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(&p * &ctx.constant(1.0), p);
    }

    #[test]
    fn square_matches_analytic() {
        let x = AdContext::new(1).variable(0, 3.0).unwrap();
        let sq = &x * &x;
        // d/dx x^2 = 2x, d2/dx2 = 2
        assert_eq!((sq.value(), sq.grad()[0], sq.hess(0, 0)), (9.0, 6.0, 2.0));
        assert_eq!(x.powi(2).unwrap(), sq);
    }

    #[test]
    fn unary_functions() {
        let ctx = AdContext::new(1);
        let s = ctx.variable(0, PI).unwrap().sin();
        assert!(s.value().abs() < 1e-15);
        assert_eq!(s.grad()[0], -1.0);
        assert!(s.hess(0, 0).abs() < 1e-15);

        let e = ctx.variable(0, 0.0).unwrap().exp();
        assert_eq!((e.value(), e.grad()[0], e.hess(0, 0)), (1.0, 1.0, 1.0));

        let r = ctx.variable(0, 2.0).unwrap().recip().unwrap();
        assert_eq!((r.value(), r.grad()[0], r.hess(0, 0)), (0.5, -0.25, 0.25));
        let q = ctx.constant(1.0).div(&ctx.variable(0, 2.0).unwrap()).unwrap();
        assert_eq!((q.value(), q.grad()[0], q.hess(0, 0)), (0.5, -0.25, 0.25));

        let c = ctx.variable(0, 0.0).unwrap().cos();
        assert_eq!((c.value(), c.grad()[0], c.hess(0, 0)), (1.0, -0.0, -1.0));

        let l = ctx.variable(0, 2.0).unwrap().ln().unwrap();
        assert_eq!((l.grad()[0], l.hess(0, 0)), (0.5, -0.25));

        let sq = ctx.variable(0, 4.0).unwrap().sqrt().unwrap();
        assert_eq!((sq.value(), sq.grad()[0], sq.hess(0, 0)), (2.0, 0.25, -1.0 / 32.0));

        let p = ctx.variable(0, 4.0).unwrap().powf(1.5).unwrap();
        assert_eq!((p.value(), p.grad()[0], p.hess(0, 0)), (8.0, 3.0, 0.375));

        let inv2 = ctx.variable(0, 2.0).unwrap().powi(-2).unwrap();
        assert_eq!((inv2.value(), inv2.grad()[0], inv2.hess(0, 0)), (0.25, -0.25, 0.375));

        let a = ctx.variable(0, -3.0).unwrap().abs();
        assert_eq!((a.value(), a.grad()[0], a.hess(0, 0)), (3.0, -1.0, 0.0));
    }

    #[test]
    fn domain_errors_name_the_op() {
        let ctx = AdContext::new(1);
        let zero = ctx.variable(0, 0.0).unwrap();
        let neg = ctx.variable(0, -1.0).unwrap();
        assert_eq!(
            ctx.constant(1.0).div(&zero),
            Err(AdError::Domain { op: "div", value: 0.0 })
        );
        assert_eq!(neg.ln(), Err(AdError::Domain { op: "ln", value: -1.0 }));
        assert_eq!(neg.sqrt(), Err(AdError::Domain { op: "sqrt", value: -1.0 }));
        assert!(zero.powi(-1).is_err());
        assert!(zero.powf(0.5).is_err());
    }

    #[test]
    fn nonsmooth_points_are_flagged() {
        let ctx = AdContext::new(1);
        let zero = ctx.variable(0, 0.0).unwrap();
        let a = zero.abs();
        assert!(a.is_nonsmooth());
        assert_eq!((a.value(), a.grad()[0], a.hess(0, 0)), (0.0, 0.0, 0.0));
        let s = zero.sqrt().unwrap();
        assert!(s.is_nonsmooth() && s.grad()[0] == 0.0);
        // the flag survives later arithmetic
        assert!((s + 1.0).exp().is_nonsmooth());
        assert!(!ctx.variable(0, 1.0).unwrap().abs().is_nonsmooth());
    }

    #[test]
    fn worked_example_matches_symbolic_derivatives() {
        // f = x1 x2 + sin x1 + 4 at (pi, pi/2)
        let ctx = AdContext::new(2);
        let d = ctx
            .evaluate(&[PI, PI / 2.0], |c, x| {
                Ok(&x[0] * &x[1] + x[0].sin() + c.constant(4.0))
            })
            .unwrap();
        assert!((d.value - (PI * PI + 8.0) / 2.0).abs() < 1e-12);
        assert!((d.gradient[0] - (PI - 2.0) / 2.0).abs() < 1e-12);
        assert!((d.gradient[1] - PI).abs() < 1e-12);
        let expected = [[0.0, 1.0], [1.0, 0.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((d.hessian[(i, j)] - expected[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn affine_expression_has_zero_hessian() {
        let ctx = AdContext::new(3);
        let d = ctx
            .evaluate(&[1.0, -2.0, 0.5], |c, x| {
                Ok(3.0 * &x[0] - &x[1] * 2.0 + &x[2] + c.constant(7.0))
            })
            .unwrap();
        assert!(d.hessian.iter().all(|&h| h == 0.0));
        assert_eq!(d.gradient.as_slice(), &[3.0, -2.0, 1.0]);
    }

    #[test]
    fn evaluate_checks_input_length() {
        let ctx = AdContext::new(2);
        assert!(matches!(
            ctx.evaluate(&[1.0], |c, _| Ok(c.constant(0.0))),
            Err(AdError::InputLength { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn sum_helper() {
        let ctx = AdContext::new(2);
        let x = ctx.variables(&[1.0, 2.0]).unwrap();
        assert_eq!(sum(&x).unwrap().value(), 3.0);
        assert!(sum(std::iter::empty()).is_none());
    }
}
