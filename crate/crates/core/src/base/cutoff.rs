//! Smooth radial bumps built from the exp(−1/t) transition.

use serde::{Deserialize, Serialize};

use super::point::Point;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Radial profile equal to 1 on [0, inner] and 0 on [outer, ∞).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile<T> {
    pub inner: T,
    pub outer: T,
}

impl<T: Scalar> CutoffProfile<T> {
    pub fn new(inner: T, outer: T) -> Result<Self> {
        if !(inner > T::zero() && outer > inner && outer.is_finite()) {
            return Err(invalid(format!("cutoff needs 0 < inner < outer, got ({inner}, {outer})")));
        }
        Ok(Self { inner, outer })
    }

    /// χ: 1 on B_{1/2}, supported in B₁.
    pub fn standard() -> Self {
        Self { inner: T::lit(0.5), outer: T::one() }
    }

    /// χ̃: 1 on B₁ ⊃ supp χ, supported in B₂.
    pub fn standard_wide() -> Self {
        Self { inner: T::one(), outer: T::lit(2.0) }
    }

    /// Value and first two radial derivatives at radius r.
    pub fn eval_with_derivatives(&self, r: T) -> (T, T, T) {
        if r <= self.inner {
            return (T::one(), T::zero(), T::zero());
        }
        if r >= self.outer {
            return (T::zero(), T::zero(), T::zero());
        }
        let width = self.outer - self.inner;
        let t = (r - self.inner) / width;
        let one = T::one();
        let u = one - t;
        // rising step g = σ(−s) and its complement ψ = σ(s), s = 1/t − 1/(1−t)
        let s = one / t - one / u;
        let sigma = |x: T| {
            if x >= T::zero() {
                one / (one + (-x).exp())
            } else {
                let e = x.exp();
                e / (one + e)
            }
        };
        let g = sigma(-s);
        let psi = sigma(s);
        let q = one / (t * t) + one / (u * u);
        let dq = -T::lit(2.0) / (t * t * t) + T::lit(2.0) / (u * u * u);
        let g1 = g * psi * q;
        let g2 = g1 * (psi - g) * q + g * psi * dq;
        (psi, -g1 / width, -g2 / (width * width))
    }

    pub fn value(&self, r: T) -> T {
        self.eval_with_derivatives(r).0
    }
}

/// z ↦ χ(scale·|z|).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledCutoff<T> {
    pub profile: CutoffProfile<T>,
    pub scale: T,
}

impl<T: Scalar> ScaledCutoff<T> {
    pub fn eval(&self, z: &Point<T>) -> T {
        self.profile.value(self.scale * z.norm())
    }

    pub fn eval_radius(&self, r: T) -> T {
        self.profile.value(self.scale * r)
    }

    /// (value, d/dr, d²/dr²) in the absolute radius r = |z|.
    pub fn radial(&self, r: T) -> (T, T, T) {
        let (v, d1, d2) = self.profile.eval_with_derivatives(self.scale * r);
        (v, d1 * self.scale, d2 * self.scale * self.scale)
    }

    /// Radius below which the cutoff is identically one.
    pub fn plateau_radius(&self) -> T {
        self.profile.inner / self.scale
    }

    /// Radius beyond which the cutoff vanishes.
    pub fn support_radius(&self) -> T {
        self.profile.outer / self.scale
    }
}

pub(crate) fn check_k_eps<T: Scalar>(k: u32, epsilon: T) -> Result<()> {
    if k == 0 {
        return Err(invalid("semiclassical parameter k must be ≥ 1"));
    }
    if !(epsilon > T::zero() && epsilon < T::one() / T::lit(6.0)) {
        return Err(invalid(format!("epsilon must lie in (0, 1/6), got {epsilon}")));
    }
    Ok(())
}

/// z ↦ χ(scale_factor·k^{1/2−ε}·z).
pub fn make_cutoff<T: Scalar>(
    profile: CutoffProfile<T>,
    k: u32,
    epsilon: T,
    scale_factor: T,
) -> Result<ScaledCutoff<T>> {
    check_k_eps(k, epsilon)?;
    if !(scale_factor > T::zero()) {
        return Err(invalid("scale factor must be positive"));
    }
    let kf = T::from_u32(k).unwrap();
    Ok(ScaledCutoff { profile, scale: scale_factor * kf.powf(T::lit(0.5) - epsilon) })
}
