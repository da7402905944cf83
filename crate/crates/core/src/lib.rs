//! Rate-coverage analysis and base-station leasing/slicing for virtualised
//! cellular networks.

pub mod allocators;
pub mod coefficients;
pub mod coverage;
pub mod error;
pub mod geometry;
pub mod milp;
pub mod montecarlo;
pub mod quadrature;
pub mod scenario;
pub mod solver;
pub mod workflow;

pub use coverage::{ActiveSet, CoverageEngine, QuadratureConfig};
pub use error::Error;
pub use geometry::Point;
pub use scenario::{Allocation, Scenario};
