//! Geometric substrate: rigid poses, pinhole backprojection, point clouds,
//! voxel occupancy, normals and FPFH descriptors.
//!
//! Every function here is pure over its inputs.

mod camera;
mod cloud;
pub mod cloud_io;
pub mod fpfh;
mod kdtree;
mod mask;
pub mod normals;
mod pose;
mod voxel;

pub use camera::{backproject, CameraIntrinsics, DepthImage};
pub use cloud::PointCloud;
pub use fpfh::{compute_fpfh, FpfhFeatures, FPFH_DIM};
pub use kdtree::KdTree;
pub use mask::Mask;
pub use normals::estimate_normals;
pub use pose::Pose;
pub use voxel::{occupied_voxels, set_iou, voxel_downsample, voxel_iou, voxel_key, VoxelKey};

/// Default voxel edge for occupancy IoU and downsampling, in meters.
pub const DEFAULT_VOXEL: f64 = 0.05;

/// FPFH radii derived from a voxel size: normals at 2×, features at 5×.
pub fn fpfh_radii(voxel: f64) -> (f64, f64) {
    (2.0 * voxel, 5.0 * voxel)
}
