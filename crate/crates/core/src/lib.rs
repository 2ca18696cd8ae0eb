//! Ship navigation in broken ice.
//!
//! A lattice planner searches over curvature-bounded motion primitives on a costmap of
//! expected kinetic-energy loss, a path optimizer refines the result, and a closed-loop
//! simulator (vessel dynamics, DP controller, impulse-based ice physics) evaluates planners.

pub mod costmap;
pub mod dubins;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod icefield;
pub mod lattice;
pub mod navigation;
pub mod optimizer;
pub mod physics;
pub mod scalar;

pub use error::{IceNavError, Result};
pub use scalar::Real;

pub type Point2 = geometry::Point2<f64>;
pub type Pose = geometry::Pose<f64>;
pub type ConvexPolygon = geometry::ConvexPolygon<f64>;
pub use geometry::{GridSpec, PlannedPath, ShipFootprint};
pub use icefield::{FieldSpec, IceField, IceFloe};
