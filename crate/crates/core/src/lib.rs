//! Object-instance based global localization.
//!
//! A posed RGB-D sequence is turned into an instance map: every detected
//! object becomes an [`ObjectInfoTuple`](instance_map::ObjectInfoTuple)
//! holding its world-frame point cloud and one or more re-identification
//! embeddings. Tuples that belong to the same physical object are grouped by
//! a three-stage clustering (voxel overlap, embedding distance, spatial
//! density). An unposed query frame is localized by matching its detections
//! to map objects, registering the matched clouds and keeping the candidate
//! with the highest overlap.
//!
//! Module map:
//!
//! * [`geometry`] poses, pinhole cameras, point clouds, voxel ops, normals, FPFH
//! * [`instance_map`] tuples, grouping, agglomerative clustering, DBSCAN, map files
//! * [`ingest`] TUM parsing, detection records, caption filtering, synthetic scenes
//! * [`localizer`] assignment search, RANSAC, colored ICP, overlap ranking
//! * [`eval`] translation/rotation error and success-rate reports

pub mod error;
pub mod eval;
pub mod geometry;
pub mod ingest;
pub mod instance_map;
pub mod localizer;
pub mod parallel;

pub use error::{Error, Result};
