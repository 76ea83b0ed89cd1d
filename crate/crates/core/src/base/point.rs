use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// A point z = (z¹,…,zⁿ) of ℂⁿ in model coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point<T> {
    coords: Vec<Complex<T>>,
}

impl<T: Scalar> Point<T> {
    pub fn new(coords: Vec<Complex<T>>) -> Result<Self> {
        if coords.is_empty() {
            return Err(invalid("point must have at least one coordinate"));
        }
        if coords.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(invalid("point coordinates must be finite"));
        }
        Ok(Self { coords })
    }

    /// Construction without validation; callers guarantee finiteness.
    pub(crate) fn from_vec(coords: Vec<Complex<T>>) -> Self {
        debug_assert!(!coords.is_empty());
        Self { coords }
    }

    pub fn origin(n: usize) -> Self {
        Self::from_vec(vec![Complex::new(T::zero(), T::zero()); n.max(1)])
    }

    /// One complex coordinate.
    pub fn scalar(z: Complex<T>) -> Self {
        Self::from_vec(vec![z])
    }

    pub fn from_re_im(re: T, im: T) -> Self {
        Self::scalar(Complex::new(re, im))
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Complex<T>] {
        &self.coords
    }

    pub fn norm_sqr(&self) -> T {
        self.coords.iter().fold(T::zero(), |acc, c| acc + c.norm_sqr())
    }

    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    pub fn dist_sqr(&self, other: &Self) -> T {
        self.coords
            .iter()
            .zip(&other.coords)
            .fold(T::zero(), |acc, (a, b)| acc + (*a - *b).norm_sqr())
    }

    pub fn scaled(&self, s: T) -> Self {
        Self::from_vec(self.coords.iter().map(|c| *c * s).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_vec(self.coords.iter().zip(&other.coords).map(|(a, b)| *a + *b).collect())
    }

    /// Underlying real coordinates (Re z¹, Im z¹, …, Re zⁿ, Im zⁿ).
    pub fn to_real(&self) -> Vec<T> {
        self.coords.iter().flat_map(|c| [c.re, c.im]).collect()
    }

    pub fn from_real(xs: &[T]) -> Self {
        debug_assert!(xs.len() % 2 == 0 && !xs.is_empty());
        Self::from_vec(xs.chunks(2).map(|p| Complex::new(p[0], p[1])).collect())
    }
}
