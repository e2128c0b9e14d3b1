//! Scalar abstraction and forward-mode dual numbers.
//!
//! Every geometric map in this crate is written once, generically over
//! [`Scalar`], and evaluated with `f64` for values, [`Dual<f64>`] for first
//! derivatives, and [`Dual<Dual<f64>>`] for second derivatives. Nesting works
//! because `Dual<S>` implements `Scalar` whenever `S` does.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Arithmetic with the elementary functions the geometry layer needs.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn from_f64(x: f64) -> Self;
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    /// Primal value, stripping all derivative components.
    fn value(&self) -> f64;
    /// Max absolute value over the primal and every derivative component.
    /// Used for pivot selection and Newton convergence in dual arithmetic.
    fn mag(&self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    /// Two-argument arctangent; `self` is the ordinate.
    fn atan2(self, x: Self) -> Self;
    fn powi(self, n: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..n {
            acc *= self;
        }
        acc
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn value(&self) -> f64 {
        *self
    }
    fn mag(&self) -> f64 {
        self.abs()
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
}

/// Dual number `re + ε·du` with `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<S> {
    pub re: S,
    pub du: S,
}

impl<S: Scalar> Dual<S> {
    pub fn new(re: S, du: S) -> Self {
        Dual { re, du }
    }
    /// Constant (zero derivative part).
    pub fn constant(re: S) -> Self {
        Dual { re, du: S::zero() }
    }
    /// Independent variable seeded with unit derivative.
    pub fn variable(re: S) -> Self {
        Dual { re, du: S::one() }
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.du + o.du)
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.du - o.du)
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual::new(self.re * o.re, self.re * o.du + self.du * o.re)
    }
}

impl<S: Scalar> Div for Dual<S> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let re = self.re / o.re;
        Dual::new(re, (self.du - re * o.du) / o.re)
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.du)
    }
}

impl<S: Scalar> AddAssign for Dual<S> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}
impl<S: Scalar> SubAssign for Dual<S> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}
impl<S: Scalar> MulAssign for Dual<S> {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    fn from_f64(x: f64) -> Self {
        Dual::constant(S::from_f64(x))
    }
    fn value(&self) -> f64 {
        self.re.value()
    }
    fn mag(&self) -> f64 {
        self.re.mag().max(self.du.mag())
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        let half = S::from_f64(0.5);
        Dual::new(s, self.du * half / s)
    }
    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.du * self.re.cos())
    }
    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -self.du * self.re.sin())
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, self.du * e)
    }
    fn ln(self) -> Self {
        Dual::new(self.re.ln(), self.du / self.re)
    }
    fn atan2(self, x: Self) -> Self {
        // d atan2(y, x) = (x dy − y dx) / (x² + y²)
        let denom = x.re * x.re + self.re * self.re;
        Dual::new(
            self.re.atan2(x.re),
            (x.re * self.du - self.re * x.du) / denom,
        )
    }
}

/// First-order dual over `f64`.
pub type D1 = Dual<f64>;
/// Second-order nested dual over `f64`.
pub type D2 = Dual<Dual<f64>>;

/// Seeds `x` as the `j`-th independent variable among `n` first-order duals.
pub fn seed1(x: &[f64], j: usize) -> Vec<D1> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            if i == j {
                Dual::variable(v)
            } else {
                Dual::constant(v)
            }
        })
        .collect()
}

/// Seeds `x` with an arbitrary first-order direction `v` (Jacobian-vector
/// products in one evaluation).
pub fn seed_dir<S: Scalar>(x: &[S], v: &[S]) -> Vec<Dual<S>> {
    x.iter()
        .zip(v.iter())
        .map(|(&xi, &vi)| Dual::new(xi, vi))
        .collect()
}

/// Seeds `x` for the mixed second derivative ∂²/∂x_j∂x_k.
pub fn seed2(x: &[f64], j: usize, k: usize) -> Vec<D2> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let inner = Dual::new(v, if i == k { 1.0 } else { 0.0 });
            let outer_du = Dual::new(if i == j { 1.0 } else { 0.0 }, 0.0);
            Dual::new(inner, outer_du)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn f<S: Scalar>(x: S, y: S) -> S {
        // sin(xy) + x·exp(y) / sqrt(x² + y²) + atan2(y, x)
        x.sin() * y + x * y.exp() / (x * x + y * y).sqrt() + y.atan2(x)
    }

    #[test]
    fn first_derivative_matches_closed_form() {
        let (x, y) = (0.7, -0.4);
        let g = f(Dual::variable(x), Dual::constant(y));
        // d/dx [sin(x)·y] = cos(x)·y
        // d/dx [x e^y (x²+y²)^{-1/2}] = e^y (x²+y²)^{-1/2} − x² e^y (x²+y²)^{-3/2}
        // d/dx atan2(y,x) = −y/(x²+y²)
        let r2 = x * x + y * y;
        let expect = x.cos() * y + y.exp() * (1.0 / r2.sqrt() - x * x / r2.powf(1.5)) - y / r2;
        assert_relative_eq!(g.du, expect, max_relative = 1e-14);
        assert_relative_eq!(g.re, f(x, y), max_relative = 1e-15);
    }

    #[test]
    fn nested_duals_give_second_derivatives() {
        // ∂²/∂x∂y of sin(x·y) = cos(xy) − xy·sin(xy)
        let (x, y) = (0.3, 1.1);
        let sx = Dual::new(Dual::new(x, 0.0), Dual::new(1.0, 0.0));
        let sy = Dual::new(Dual::new(y, 1.0), Dual::new(0.0, 0.0));
        let g = (sx * sy).sin();
        let expect = (x * y).cos() - x * y * (x * y).sin();
        assert_relative_eq!(g.du.du, expect, max_relative = 1e-14);
    }

    #[test]
    fn division_and_sqrt_round_trip() {
        let a = Dual::variable(2.5f64);
        let b = (a * a).sqrt(); // |a| = a for a > 0, derivative 1
        assert_relative_eq!(b.re, 2.5, max_relative = 1e-15);
        assert_relative_eq!(b.du, 1.0, max_relative = 1e-14);
        let c = a / a;
        assert_relative_eq!(c.re, 1.0, max_relative = 1e-15);
        assert_relative_eq!(c.du, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn directional_seed_is_jacobian_vector_product() {
        let x = [0.4, -0.8];
        let v = [2.0, 0.5];
        let s = seed_dir(&x, &v);
        let g = f(s[0], s[1]);
        let gx = f(Dual::variable(x[0]), Dual::constant(x[1])).du;
        let gy = f(Dual::constant(x[0]), Dual::variable(x[1])).du;
        assert_relative_eq!(g.du, gx * v[0] + gy * v[1], max_relative = 1e-13);
    }

    #[test]
    fn atan2_covers_all_quadrants() {
        for &(y, x) in &[(1.0, 2.0), (1.0, -2.0), (-1.0, -2.0), (-1.0, 2.0)] {
            let d = Dual::variable(y).atan2(Dual::constant(x));
            assert_relative_eq!(d.re, f64::atan2(y, x), max_relative = 1e-15);
            assert_relative_eq!(d.du, x / (x * x + y * y), max_relative = 1e-14);
        }
    }
}
