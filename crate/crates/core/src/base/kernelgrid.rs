use num_complex::Complex;
use rayon::prelude::*;

use super::point::Point;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Two-point kernel sampled on `z_nodes × w_nodes` (row-major in z).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrid<T> {
    pub k: u32,
    pub z_nodes: Vec<Point<T>>,
    pub w_nodes: Vec<Point<T>>,
    pub values: Vec<Complex<T>>,
}

impl<T: Scalar> KernelGrid<T> {
    /// Samples `f(z, w)` on the product of the node lists.
    pub fn sample<F>(k: u32, z_nodes: Vec<Point<T>>, w_nodes: Vec<Point<T>>, f: F) -> Result<Self>
    where
        F: Fn(&Point<T>, &Point<T>) -> Result<Complex<T>> + Sync,
    {
        let nw = w_nodes.len();
        let values = (0..z_nodes.len() * nw)
            .into_par_iter()
            .map(|idx| f(&z_nodes[idx / nw], &w_nodes[idx % nw]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { k, z_nodes, w_nodes, values })
    }

    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.values[i * self.w_nodes.len() + j]
    }

    /// Pointwise linear combination a·self + b·other on identical nodes.
    pub fn combine(&self, a: T, other: &Self, b: T) -> Result<Self> {
        if !self.same_nodes(other) {
            return Err(invalid("kernel grids do not share nodes"));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| *x * a + *y * b).collect();
        Ok(Self { k: self.k, z_nodes: self.z_nodes.clone(), w_nodes: self.w_nodes.clone(), values })
    }

    pub fn same_nodes(&self, other: &Self) -> bool {
        self.k == other.k && self.z_nodes == other.z_nodes && self.w_nodes == other.w_nodes
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.norm()))
    }
}
