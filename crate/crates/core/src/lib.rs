//! Model-data fusion of a simulated global field with point observations
//! through an SPDE/GMRF discrepancy model.

pub mod error;
pub mod experiments;
pub mod fem;
pub mod geometry;
pub mod grid;
pub mod inference;
pub mod matern;
pub mod mesh;
pub mod model;
pub mod sparse;
pub mod synthetic;
pub mod zeroregion;

pub use error::{Error, ErrorClass, Result};
pub use geometry::{DomainKind, Point3, Polygon, RegionId, EARTH_RADIUS_KM};
pub use mesh::{RegionPartition, TriangleMesh};
