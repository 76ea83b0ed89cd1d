//! Shared numeric substrate: points, polynomials, weights, cutoffs, quadrature.

pub mod cutoff;
pub mod kernelgrid;
pub mod multiindex;
pub mod params;
pub mod partition;
pub mod point;
pub mod poly;
pub mod quadrature;
pub mod weight;

pub use cutoff::{make_cutoff, CutoffProfile, ScaledCutoff};
pub use kernelgrid::KernelGrid;
pub use multiindex::MultiIndex;
pub use params::SemiclassParams;
pub use partition::PartitionSpec;
pub use point::Point;
pub use poly::Poly;
pub use quadrature::{gauss_hermite, gauss_legendre, integrate, Measure, QuadratureGrid};
pub use weight::{eval_weight, MetricSpec, WeightSpec};
