use serde::{Deserialize, Serialize};

use crate::geometry::DEFAULT_VOXEL;
use crate::{Error, Result};

/// Settings for assignment search, registration and candidate ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationConfig {
    /// Map clouds are downsampled at this size; FPFH radii derive from it.
    pub voxel: f64,
    pub ransac_iters: usize,
    pub ransac_sample: usize,
    /// Inlier distance for RANSAC scoring (meters).
    pub ransac_dist: f64,
    /// Pairwise edge-length ratio a sample must satisfy, in (0, 1].
    pub edge_len_check: f64,
    /// Early-exit confidence for RANSAC.
    pub ransac_confidence: f64,
    pub icp_max_dist: f64,
    pub icp_max_iters: usize,
    /// Run ICP at 4x, 2x and 1x `icp_max_dist` instead of once.
    pub icp_multiscale: bool,
    /// Weight of the color term in colored ICP, in [0, 1].
    pub color_weight: f64,
    /// Magnitude of the pair-index one-hot block relative to unit-norm FPFH.
    pub onehot_scale: f64,
    pub overlap_tau: f64,
    pub k_best: usize,
    pub top_m_per_detection: usize,
    /// Safety cap on states expanded by the assignment search.
    pub max_assignment_states: usize,
    pub seed: u64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            voxel: DEFAULT_VOXEL,
            ransac_iters: 100_000,
            ransac_sample: 4,
            ransac_dist: 1.5 * DEFAULT_VOXEL,
            edge_len_check: 0.9,
            ransac_confidence: 0.999,
            icp_max_dist: 1.5 * DEFAULT_VOXEL,
            icp_max_iters: 30,
            icp_multiscale: false,
            color_weight: 0.5,
            onehot_scale: 5.0,
            overlap_tau: 1.5 * DEFAULT_VOXEL,
            k_best: 8,
            top_m_per_detection: 5,
            max_assignment_states: 2_000_000,
            seed: 0,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.voxel > 0.0
            && self.ransac_iters > 0
            && self.ransac_sample >= 3
            && self.ransac_dist > 0.0
            && self.edge_len_check > 0.0
            && self.edge_len_check <= 1.0
            && self.ransac_confidence > 0.0
            && self.ransac_confidence < 1.0
            && self.icp_max_dist > 0.0
            && self.icp_max_iters > 0
            && (0.0..=1.0).contains(&self.color_weight)
            && self.onehot_scale >= 0.0
            && self.overlap_tau > 0.0
            && self.k_best > 0
            && self.top_m_per_detection > 0
            && self.max_assignment_states > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid registration config {self:?}")))
        }
    }
}
