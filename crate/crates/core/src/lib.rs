//! Optimal-transport calibration geometry: costs, densities, the induced
//! pseudo-Riemannian structure on the product space, transport solvers, and
//! numerical checks of calibration, curvature and mass comparison.

pub mod cost;
pub mod calibration;
pub mod curvature;
pub mod density;
pub mod domain;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod linalg;
pub mod mesh;
pub mod optim;
pub mod transport;

pub use cost::{CostField, Point};
pub use density::DensitySpec;
pub use domain::{BoxDomain, DomainSpec, Grid};
pub use error::{Error, Result};
pub use geometry::{ConformalConvention, MetricAtPoint, TangentPlane, TransportProblem};
pub use transport::{DiscretePlan, MapKind, TransportMap};
pub use graph::GraphSurface;
