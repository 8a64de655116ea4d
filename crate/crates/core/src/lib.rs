//! Geometric and information-theoretic compression measurements for
//! representation point clouds.
//!
//! The crate covers the whole measurement pipeline: NPY/JSON interchange
//! ([`tensor_io`]), exact nearest-neighbor search ([`neighbors`]), nine
//! intrinsic-dimension estimators ([`estimators`]), synthetic manifolds with
//! known dimension ([`manifolds`]), per-layer profiles and convergence curves
//! ([`profiles`]), token-level statistics and perplexity ([`textstats`]) and
//! rank correlation reports ([`stats`]).
//!
//! Point clouds are generic over the storage scalar (`f32` or `f64`); all
//! estimator arithmetic runs in `f64`. The aliases below name the common
//! concrete instantiations.

pub mod bench;
pub mod error;
pub mod estimators;
pub mod manifolds;
pub mod neighbors;
pub mod profiles;
pub mod scalar;
pub mod stats;
pub mod tensor_io;
pub mod textstats;

pub(crate) mod numeric;

pub use error::{IdError, Result};
pub use estimators::{estimate, EstimatorName, EstimatorSpec, IdEstimate};
pub use neighbors::{knn, NeighborTable};
pub use scalar::Scalar;
pub use tensor_io::{LayerStack, PointCloud, RunManifest};

/// Point cloud in working precision.
pub type Cloud = PointCloud<f64>;
/// Single-precision point cloud, as commonly dumped by model tooling.
pub type Cloud32 = PointCloud<f32>;
/// Layer stack in working precision.
pub type Stack = LayerStack<f64>;
