use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Ascending k list and the cutoff exponent ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiclassParams<T> {
    k_values: Vec<u32>,
    epsilon: T,
}

impl<T: Scalar> SemiclassParams<T> {
    pub fn new(k_values: Vec<u32>, epsilon: T) -> Result<Self> {
        if k_values.is_empty() {
            return Err(invalid("k list must be nonempty"));
        }
        if k_values[0] == 0 || k_values.windows(2).any(|p| p[0] >= p[1]) {
            return Err(invalid("k list must be positive and strictly increasing"));
        }
        if !(epsilon > T::zero() && epsilon < T::one() / T::lit(6.0)) {
            return Err(invalid(format!("epsilon must lie in (0, 1/6), got {epsilon}")));
        }
        Ok(Self { k_values, epsilon })
    }

    pub fn k_values(&self) -> &[u32] {
        &self.k_values
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }
}
