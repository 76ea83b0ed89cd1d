//! Numerical laboratory for semiclassical Bergman kernels of weighted Fock spaces.
//!
//! The numeric substrate in [`base`], [`modelkernel`] and [`fit`] is generic over
//! [`Scalar`] (`f32`/`f64`); the expansion, oracle, symbol and ∂̄ modules run in
//! double precision.

pub mod base;
pub mod cli;
pub mod config;
pub mod dbar;
pub mod error;
pub mod fit;
pub mod modelkernel;
pub mod neumann;
pub mod normalform;
pub mod oracle;
pub mod scalar;
pub mod symbols;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision aliases.
pub type Point = base::Point<f64>;
pub type Poly = base::Poly<f64>;
pub type WeightSpec = base::WeightSpec<f64>;
pub type MetricSpec = base::MetricSpec<f64>;
pub type QuadratureGrid = base::QuadratureGrid<f64>;
pub type KernelGrid = base::KernelGrid<f64>;
pub type ModelKernel = modelkernel::ModelKernel<f64>;
pub type CutoffProfile = base::CutoffProfile<f64>;
pub type SemiclassParams = base::SemiclassParams<f64>;

/// Single-precision aliases.
pub mod f32 {
    pub type Point = crate::base::Point<f32>;
    pub type WeightSpec = crate::base::WeightSpec<f32>;
    pub type QuadratureGrid = crate::base::QuadratureGrid<f32>;
    pub type ModelKernel = crate::modelkernel::ModelKernel<f32>;
}
