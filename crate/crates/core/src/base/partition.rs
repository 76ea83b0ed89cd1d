use serde::{Deserialize, Serialize};

use super::cutoff::CutoffProfile;
use super::point::Point;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Near-diagonal partition η(z, w) = ζ(|z − w|) with ζ = 1 on [0, r₀], 0 on [2r₀, ∞).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec<T> {
    pub near_diagonal_radius: T,
}

impl<T: Scalar> PartitionSpec<T> {
    pub fn new(r0: T) -> Result<Self> {
        if !(r0 > T::zero() && r0.is_finite()) {
            return Err(invalid("near-diagonal radius must be positive"));
        }
        Ok(Self { near_diagonal_radius: r0 })
    }

    fn profile(&self) -> CutoffProfile<T> {
        CutoffProfile { inner: self.near_diagonal_radius, outer: T::lit(2.0) * self.near_diagonal_radius }
    }

    pub fn eta(&self, z: &Point<T>, w: &Point<T>) -> T {
        self.profile().value(z.dist_sqr(w).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn eta_is_symmetric_and_bounded(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, d in -2.0f64..2.0) {
            let p = PartitionSpec::new(0.3).unwrap();
            let z = Point::scalar(Complex::new(a, b));
            let w = Point::scalar(Complex::new(c, d));
            let e = p.eta(&z, &w);
            prop_assert_eq!(e, p.eta(&w, &z));
            prop_assert!((0.0..=1.0).contains(&e));
            let dist = z.dist_sqr(&w).sqrt();
            if dist <= 0.3 { prop_assert_eq!(e, 1.0); }
            if dist >= 0.6 { prop_assert_eq!(e, 0.0); }
        }
    }
}
