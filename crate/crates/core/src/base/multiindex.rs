use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Multi-index α ∈ ℕ₀ⁿ.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// |α| = Σαᵢ.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    /// α! = Παᵢ!.
    pub fn factorial<T: Scalar>(&self) -> T {
        self.0.iter().fold(T::one(), |acc, &a| acc * factorial::<T>(a))
    }

    /// All multi-indices with |α| ≤ max_order, graded by order then reverse
    /// lexicographic within each order.
    pub fn enumerate(n: usize, max_order: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for d in 0..=max_order {
            let mut cur = vec![0u32; n];
            push_with_order(&mut out, &mut cur, 0, d);
        }
        out
    }
}

fn push_with_order(out: &mut Vec<MultiIndex>, cur: &mut Vec<u32>, pos: usize, remaining: u32) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for a in (0..=remaining).rev() {
        cur[pos] = a;
        push_with_order(out, cur, pos + 1, remaining - a);
    }
    cur[pos] = 0;
}

pub fn factorial<T: Scalar>(a: u32) -> T {
    (1..=a).fold(T::one(), |acc, i| acc * T::from_u32(i).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_counts_match_binomials() {
        // #{|α| ≤ A} = C(A + n, n)
        assert_eq!(MultiIndex::enumerate(1, 6).len(), 7);
        assert_eq!(MultiIndex::enumerate(2, 4).len(), 15);
        assert_eq!(MultiIndex::enumerate(3, 3).len(), 20);
        let idx = MultiIndex::enumerate(2, 2);
        assert_eq!(idx[0], MultiIndex(vec![0, 0]));
        assert_eq!(idx[1], MultiIndex(vec![1, 0]));
        assert_eq!(idx[2], MultiIndex(vec![0, 1]));
    }

    #[test]
    fn factorial_and_order() {
        let a = MultiIndex(vec![3, 2]);
        assert_eq!(a.order(), 5);
        assert_eq!(a.factorial::<f64>(), 12.0);
    }
}
