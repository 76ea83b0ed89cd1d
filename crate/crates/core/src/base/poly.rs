//! Polynomials in (z, z̄) with complex coefficients.
//!
//! Real-valued weights are stored with conjugate-symmetric coefficients,
//! c(β, α) = conj c(α, β).

use std::collections::BTreeMap;

use num_complex::Complex;

use super::point::Point;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Exponent pair (powers of z, powers of z̄).
pub type Exponents = (Vec<u32>, Vec<u32>);

#[derive(Debug, Clone, PartialEq)]
pub struct Poly<T> {
    n: usize,
    terms: BTreeMap<Exponents, Complex<T>>,
}

impl<T: Scalar> Poly<T> {
    pub fn zero(n: usize) -> Self {
        Self { n, terms: BTreeMap::new() }
    }

    pub fn constant(n: usize, c: Complex<T>) -> Self {
        Self::monomial(vec![0; n], vec![0; n], c)
    }

    pub fn monomial(z: Vec<u32>, zbar: Vec<u32>, c: Complex<T>) -> Self {
        let n = z.len();
        assert_eq!(n, zbar.len(), "exponent lengths differ");
        let mut p = Self::zero(n);
        p.add_term(z, zbar, c);
        p
    }

    /// The coordinate function zⁱ.
    pub fn coordinate(n: usize, i: usize) -> Self {
        let mut z = vec![0; n];
        z[i] = 1;
        Self::monomial(z, vec![0; n], Complex::new(T::one(), T::zero()))
    }

    pub fn conj_coordinate(n: usize, i: usize) -> Self {
        let mut zb = vec![0; n];
        zb[i] = 1;
        Self::monomial(vec![0; n], zb, Complex::new(T::one(), T::zero()))
    }

    /// Re(c·z^α) = (c z^α + c̄ z̄^α)/2.
    pub fn re_holomorphic(alpha: Vec<u32>, c: Complex<T>) -> Self {
        let n = alpha.len();
        let half = T::lit(0.5);
        let mut p = Self::monomial(alpha.clone(), vec![0; n], c * half);
        p.add_term(vec![0; n], alpha, c.conj() * half);
        p
    }

    /// Real polynomial Σ c·Π (Re zⁱ)^{p_{2i}} (Im zⁱ)^{p_{2i+1}} re-expressed in (z, z̄).
    pub fn from_real_terms(n: usize, terms: &[(Vec<u32>, T)]) -> Result<Self> {
        let half = T::lit(0.5);
        let mut out = Self::zero(n);
        for (powers, c) in terms {
            if powers.len() != 2 * n {
                return Err(invalid(format!(
                    "real monomial needs {} exponents, got {}",
                    2 * n,
                    powers.len()
                )));
            }
            let mut term = Self::constant(n, Complex::new(*c, T::zero()));
            for i in 0..n {
                let x = (Self::coordinate(n, i) + Self::conj_coordinate(n, i)).scale(Complex::new(half, T::zero()));
                let y = (Self::coordinate(n, i) - Self::conj_coordinate(n, i)).scale(Complex::new(T::zero(), -half));
                term = term * x.pow(powers[2 * i]) * y.pow(powers[2 * i + 1]);
            }
            out = out + term;
        }
        Ok(out.pruned(T::zero()))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &Complex<T>)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, z: &[u32], zbar: &[u32]) -> Complex<T> {
        self.terms
            .get(&(z.to_vec(), zbar.to_vec()))
            .copied()
            .unwrap_or_else(|| Complex::new(T::zero(), T::zero()))
    }

    pub fn add_term(&mut self, z: Vec<u32>, zbar: Vec<u32>, c: Complex<T>) {
        debug_assert_eq!(z.len(), self.n);
        let e = self.terms.entry((z, zbar)).or_insert_with(|| Complex::new(T::zero(), T::zero()));
        *e += c;
    }

    /// Drops coefficients with modulus ≤ tol.
    pub fn pruned(mut self, tol: T) -> Self {
        self.terms.retain(|_, c| c.norm() > tol);
        self
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        Self { n: self.n, terms: self.terms.iter().map(|(k, c)| (k.clone(), *c * s)).collect() }
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Self::constant(self.n, Complex::new(T::one(), T::zero()));
        for _ in 0..e {
            acc = acc * self.clone();
        }
        acc
    }

    fn term_degree(k: &Exponents) -> u32 {
        k.0.iter().sum::<u32>() + k.1.iter().sum::<u32>()
    }

    /// Lowest total degree present, `None` for the zero polynomial.
    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().map(Self::term_degree).min()
    }

    pub fn max_degree(&self) -> Option<u32> {
        self.terms.keys().map(Self::term_degree).max()
    }

    /// Terms with total degree in `lo..=hi`.
    pub fn degree_range(&self, lo: u32, hi: u32) -> Self {
        Self {
            n: self.n,
            terms: self
                .terms
                .iter()
                .filter(|(k, _)| (lo..=hi).contains(&Self::term_degree(k)))
                .map(|(k, c)| (k.clone(), *c))
                .collect(),
        }
    }

    /// Largest coefficient modulus among terms of total degree ≤ d.
    pub fn max_coeff_up_to_degree(&self, d: u32) -> T {
        self.terms
            .iter()
            .filter(|(k, _)| Self::term_degree(k) <= d)
            .fold(T::zero(), |m, (_, c)| m.max(c.norm()))
    }

    pub fn max_abs_coeff(&self) -> T {
        self.terms.values().fold(T::zero(), |m, c| m.max(c.norm()))
    }

    /// Conjugate-symmetry defect max |c(α,β) − conj c(β,α)|.
    pub fn reality_defect(&self) -> T {
        self.terms.iter().fold(T::zero(), |m, ((z, zb), c)| {
            let mirror = self.coefficient(zb, z);
            m.max((*c - mirror.conj()).norm())
        })
    }

    pub fn eval(&self, p: &Point<T>) -> Complex<T> {
        let zs = p.coords();
        debug_assert_eq!(zs.len(), self.n);
        let mut acc = Complex::new(T::zero(), T::zero());
        for ((a, b), c) in &self.terms {
            let mut m = *c;
            for i in 0..self.n {
                if a[i] > 0 {
                    m *= zs[i].powu(a[i]);
                }
                if b[i] > 0 {
                    m *= zs[i].conj().powu(b[i]);
                }
            }
            acc += m;
        }
        acc
    }

    /// Real part of the value; exact for conjugate-symmetric coefficients.
    pub fn eval_real(&self, p: &Point<T>) -> T {
        self.eval(p).re
    }

    /// ∂/∂zⁱ.
    pub fn dz(&self, i: usize) -> Self {
        let mut out = Self::zero(self.n);
        for ((a, b), c) in &self.terms {
            if a[i] > 0 {
                let mut a2 = a.clone();
                a2[i] -= 1;
                out.add_term(a2, b.clone(), *c * T::from_u32(a[i]).unwrap());
            }
        }
        out
    }

    /// ∂/∂z̄ⁱ.
    pub fn dzbar(&self, i: usize) -> Self {
        let mut out = Self::zero(self.n);
        for ((a, b), c) in &self.terms {
            if b[i] > 0 {
                let mut b2 = b.clone();
                b2[i] -= 1;
                out.add_term(a.clone(), b2, *c * T::from_u32(b[i]).unwrap());
            }
        }
        out
    }

    /// Substitutes z = M ξ (so z̄ = M̄ ξ̄); `m[i][j]` is the row-major entry.
    pub fn substitute_linear(&self, m: &[Vec<Complex<T>>]) -> Self {
        let n = self.n;
        let lin: Vec<Self> = (0..n)
            .map(|i| {
                let mut p = Self::zero(n);
                for j in 0..n {
                    let mut e = vec![0; n];
                    e[j] = 1;
                    p.add_term(e, vec![0; n], m[i][j]);
                }
                p
            })
            .collect();
        let lin_bar: Vec<Self> = (0..n)
            .map(|i| {
                let mut p = Self::zero(n);
                for j in 0..n {
                    let mut e = vec![0; n];
                    e[j] = 1;
                    p.add_term(vec![0; n], e, m[i][j].conj());
                }
                p
            })
            .collect();
        let mut out = Self::zero(n);
        for ((a, b), c) in &self.terms {
            let mut t = Self::constant(n, *c);
            for i in 0..n {
                t = t * lin[i].pow(a[i]) * lin_bar[i].pow(b[i]);
            }
            out = out + t;
        }
        out
    }
}

impl<T: Scalar> std::ops::Add for Poly<T> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        assert_eq!(self.n, rhs.n);
        for ((a, b), c) in rhs.terms {
            self.add_term(a, b, c);
        }
        self
    }
}

impl<T: Scalar> std::ops::Sub for Poly<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + rhs.scale(Complex::new(-T::one(), T::zero()))
    }
}

impl<T: Scalar> std::ops::Mul for Poly<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        assert_eq!(self.n, rhs.n);
        let mut out = Self::zero(self.n);
        for ((a1, b1), c1) in &self.terms {
            for ((a2, b2), c2) in &rhs.terms {
                let a: Vec<u32> = a1.iter().zip(a2).map(|(x, y)| x + y).collect();
                let b: Vec<u32> = b1.iter().zip(b2).map(|(x, y)| x + y).collect();
                out.add_term(a, b, *c1 * *c2);
            }
        }
        out
    }
}
