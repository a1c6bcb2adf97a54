//! Geometry kernels on millimeter-scale point clouds.

mod cloud;
mod index;
mod normals;
pub mod reference;
mod sampling;

pub use cloud::{add, dist_sq, dot, norm, sub, Point3, PointCloud, EIGEN_EPS};
pub use index::{build_index, Neighbor, SpatialIndex};
pub use normals::{estimate_normals, Neighborhood, NormalDiagnostics};
pub use sampling::{
    ball_query, dfps, dfps_resolved, fps, BallHit, DitherRanges, SamplingParams,
};
