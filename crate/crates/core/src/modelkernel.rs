//! Closed-form Bargmann–Fock kernels of the model weight kφ₀ in the localized gauge.

use num_complex::Complex;

use crate::base::{MultiIndex, Measure, Point, Poly, QuadratureGrid};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// P_k(z, w) = kⁿ(2ⁿΠλ/πⁿ)·e^{kΣλⱼ(2zʲw̄ʲ − |zʲ|² − |wʲ|²)}.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelKernel<T> {
    lambda: Vec<T>,
    k: u32,
}

impl<T: Scalar> ModelKernel<T> {
    pub fn new(lambda: Vec<T>, k: u32) -> Result<Self> {
        if lambda.is_empty() || lambda.iter().any(|l| !(*l > T::zero() && l.is_finite())) {
            return Err(invalid("model eigenvalues must be positive"));
        }
        if k == 0 {
            return Err(invalid("k must be ≥ 1"));
        }
        Ok(Self { lambda, k })
    }

    pub fn lambda(&self) -> &[T] {
        &self.lambda
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Diagonal value kⁿ2ⁿΠλ/πⁿ.
    pub fn diagonal(&self) -> T {
        let kf = T::from_u32(self.k).unwrap();
        self.lambda.iter().fold(T::one(), |acc, l| acc * T::lit(2.0) * kf * *l / T::PI())
    }

    /// Complex logarithm of the exponential factor: real part −kΣλ|z−w|², imaginary 2kΣλ Im(z w̄).
    pub fn log_phase(&self, z: &Point<T>, w: &Point<T>) -> Complex<T> {
        let kf = T::from_u32(self.k).unwrap();
        let mut re = T::zero();
        let mut im = T::zero();
        for ((a, b), l) in z.coords().iter().zip(w.coords()).zip(&self.lambda) {
            re -= *l * (*a - *b).norm_sqr();
            im += *l * (*a * b.conj()).im;
        }
        Complex::new(kf * re, T::lit(2.0) * kf * im)
    }

    pub fn eval(&self, z: &Point<T>, w: &Point<T>) -> Complex<T> {
        self.log_phase(z, w).exp() * self.diagonal()
    }
}

/// K_BF(z, w) = (2ⁿΠλ/πⁿ)·exp(2Σλⱼ(zʲw̄ʲ − |wʲ|²)).
pub fn bf_kernel<T: Scalar>(lambda: &[T], z: &Point<T>, w: &Point<T>) -> Complex<T> {
    let mut e = Complex::new(T::zero(), T::zero());
    let mut pref = T::one();
    for ((a, b), l) in z.coords().iter().zip(w.coords()).zip(lambda) {
        e += (*a * b.conj() - Complex::new(b.norm_sqr(), T::zero())) * (T::lit(2.0) * *l);
        pref = pref * T::lit(2.0) * *l / T::PI();
    }
    e.exp() * pref
}

pub fn model_kernel<T: Scalar>(lambda: &[T], k: u32, z: &Point<T>, w: &Point<T>) -> Result<Complex<T>> {
    Ok(ModelKernel::new(lambda.to_vec(), k)?.eval(z, w))
}

/// ‖z^α‖² against e^{−2kφ₀}dm: πⁿα!/(2^{|α|+n}Π(kλᵢ)^{αᵢ+1}).
pub fn monomial_norm<T: Scalar>(alpha: &MultiIndex, lambda: &[T], k: u32) -> T {
    let kf = T::from_u32(k).unwrap();
    let n = lambda.len();
    let mut v = T::PI().powi(n as i32) * alpha.factorial::<T>() / T::lit(2.0).powi((alpha.order() as usize + n) as i32);
    for (a, l) in alpha.0.iter().zip(lambda) {
        v = v / (kf * *l).powi(*a as i32 + 1);
    }
    v
}

/// Result of applying the model projection to f·e^{−kφ₀}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReproduceResult<T> {
    pub value: Complex<T>,
    /// f(z)e^{−kφ₀(z)}, the value expected for holomorphic f.
    pub holomorphic_target: Complex<T>,
    /// Set when deg f exceeds the grid's per-axis exactness degree.
    pub exactness_warning: bool,
}

/// ∫ P_k(z, w) f(w) e^{−kφ₀(w)} dm(w) over the grid.
pub fn reproduce_check<T: Scalar>(
    lambda: &[T],
    k: u32,
    f: &Poly<T>,
    z: &Point<T>,
    grid: &QuadratureGrid<T>,
) -> Result<ReproduceResult<T>> {
    let model = ModelKernel::new(lambda.to_vec(), k)?;
    let kf = T::from_u32(k).unwrap();
    let phi0 = |p: &Point<T>| p.coords().iter().zip(lambda).fold(T::zero(), |a, (c, l)| a + *l * c.norm_sqr());
    // the Gaussian weight of the grid is divided out in log space
    let density_log = |p: &Point<T>| match grid.measure() {
        Measure::Lebesgue => T::zero(),
        Measure::Gaussian { k: kg, lambda: lg } => {
            T::lit(2.0) * *kg * p.coords().iter().zip(lg).fold(T::zero(), |a, (c, l)| a + *l * c.norm_sqr())
        }
    };
    let pref = model.diagonal();
    let value = grid.integrate_fn(|w| {
        let e = model.log_phase(z, w) + Complex::new(density_log(w) - kf * phi0(w), T::zero());
        e.exp() * pref * f.eval(w)
    })?;
    let target = f.eval(z) * (-kf * phi0(z)).exp();
    let exactness_warning = f.max_degree().unwrap_or(0) > grid.exactness_degree();
    Ok(ReproduceResult { value, holomorphic_target: target, exactness_warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn pt(re: f64, im: f64) -> Point<f64> {
        Point::from_re_im(re, im)
    }

    #[test]
    fn bf_examples() {
        assert_relative_eq!(bf_kernel(&[0.5], &pt(0.0, 0.0), &pt(0.0, 0.0)).re, 1.0 / PI, max_relative = 1e-15);
        let v = bf_kernel(&[0.5], &pt(1.3, -0.4), &pt(0.0, 0.0));
        assert_relative_eq!(v.re, 1.0 / PI, max_relative = 1e-15);
        assert_eq!(v.im, 0.0);
        let o2 = Point::origin(2);
        assert_relative_eq!(bf_kernel(&[1.0, 1.0], &o2, &o2).re, 4.0 / (PI * PI), max_relative = 1e-15);
    }

    #[test]
    fn model_examples() {
        let z = pt(0.7, -0.2);
        assert_relative_eq!(model_kernel(&[0.5], 1, &z, &z).unwrap().re, 1.0 / PI, max_relative = 1e-15);
        let v = model_kernel(&[0.5], 1, &pt(1.0, 0.0), &pt(0.0, 0.0)).unwrap();
        assert_relative_eq!(v.re, (-0.5f64).exp() / PI, max_relative = 1e-15);
        let o = pt(0.0, 0.0);
        assert_relative_eq!(model_kernel(&[0.5], 10, &o, &o).unwrap().re, 10.0 / PI, max_relative = 1e-15);
    }

    #[test]
    fn monomial_norm_examples() {
        let a0 = MultiIndex(vec![0]);
        let a1 = MultiIndex(vec![1]);
        assert_relative_eq!(monomial_norm(&a0, &[0.5], 1), PI, max_relative = 1e-15);
        assert_relative_eq!(monomial_norm(&a1, &[1.0], 1), PI / 4.0, max_relative = 1e-15);
        assert_relative_eq!(monomial_norm(&a0, &[0.5], 2), PI / 2.0, max_relative = 1e-15);
    }

    #[test]
    fn model_is_bf_kernel_in_localized_gauge() {
        // P = e^{−φ₀(z)} K_BF e^{φ₀(w)}
        let lam = [0.5, 1.3];
        let z = Point::new(vec![Complex::new(0.3, -0.1), Complex::new(0.2, 0.4)]).unwrap();
        let w = Point::new(vec![Complex::new(-0.5, 0.2), Complex::new(0.1, -0.3)]).unwrap();
        let phi0 = |p: &Point<f64>| p.coords().iter().zip(&lam).map(|(c, l)| l * c.norm_sqr()).sum::<f64>();
        let lhs = model_kernel(&lam, 1, &z, &w).unwrap();
        let rhs = bf_kernel(&lam, &z, &w) * (phi0(&w) - phi0(&z)).exp();
        assert_relative_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn reproduce_examples() {
        let lam = [0.5];
        let k = 3;
        let grid = QuadratureGrid::gaussian(&lam, 3.0, 40).unwrap();
        let one = Poly::constant(1, Complex::new(1.0, 0.0));
        let z = pt(0.4, 0.3);
        let r = reproduce_check(&lam, k, &one, &z, &grid).unwrap();
        assert_relative_eq!((r.value - r.holomorphic_target).norm(), 0.0, epsilon = 1e-12);
        let zf = Poly::coordinate(1, 0);
        let r = reproduce_check(&lam, k, &zf, &pt(0.0, 0.0), &grid).unwrap();
        assert!(r.value.norm() < 1e-14);
        let zb = Poly::conj_coordinate(1, 0);
        let r = reproduce_check(&lam, k, &zb, &pt(1.0, 0.0), &grid).unwrap();
        assert!(r.value.norm() < 1e-12);
        assert!(!r.exactness_warning);
    }

    #[test]
    fn composition_is_idempotent() {
        let lam = [0.5];
        let k = 2;
        let m = ModelKernel::new(lam.to_vec(), k).unwrap();
        let grid = QuadratureGrid::lebesgue_box(&Point::origin(1), 6.0, 6, 24).unwrap();
        let z = pt(0.3, -0.2);
        let w = pt(-0.1, 0.4);
        let c = grid.integrate_fn(|t| m.eval(&z, t) * m.eval(t, &w)).unwrap();
        assert_relative_eq!((c - m.eval(&z, &w)).norm(), 0.0, epsilon = 1e-8);
    }

    proptest! {
        #[test]
        fn hermitian_and_modulus(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, d in -2.0f64..2.0, k in 1u32..50) {
            let m = ModelKernel::new(vec![0.7], k).unwrap();
            let z = pt(a, b);
            let w = pt(c, d);
            prop_assert_eq!(m.eval(&z, &w), m.eval(&w, &z).conj());
            let modulus = m.diagonal() * (-(k as f64) * 0.7 * z.dist_sqr(&w)).exp();
            prop_assert!((m.eval(&z, &w).norm() - modulus).abs() <= 1e-13 * m.diagonal());
        }

        #[test]
        fn scaling_identity(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in -1.0f64..1.0, k in 1u32..200) {
            let lam = vec![0.5];
            let s = (k as f64).sqrt();
            let z = pt(a / s, b / s);
            let w = pt(c / s, d / s);
            let lhs = ModelKernel::new(lam.clone(), 1).unwrap().eval(&z.scaled(s), &w.scaled(s)) * k as f64;
            let rhs = ModelKernel::new(lam, k).unwrap().eval(&z, &w);
            prop_assert!((lhs - rhs).norm() <= 1e-12 * rhs.norm());
        }
    }
}
