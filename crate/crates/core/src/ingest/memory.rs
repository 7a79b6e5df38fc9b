use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{dedup_boxes, CaptionStoplist, Detection, DetectionRecord, PosedFrame};
use crate::geometry::{backproject, fpfh_radii, normals::estimate_normals, voxel_downsample, PointCloud, Pose};
use crate::geometry::normals::NORMAL_MAX_NN;
use crate::instance_map::{cluster_memory, ClusteringConfig, MemoryMeta, ObjectId, ObjectInfoTuple, ObjectMemory};
use crate::{Error, Result};

/// Default class-agnostic box suppression threshold.
pub const DEFAULT_DEDUP_IOU: f64 = 0.9;

/// Settings shared by memory formation and query detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFilter {
    pub dedup_iou: f64,
    /// Per-detection clouds are voxel-downsampled at this size (meters);
    /// `None` keeps every backprojected pixel.
    pub cloud_voxel: Option<f64>,
    /// Estimate normals on each detection cloud, oriented toward its camera.
    pub with_normals: bool,
    #[serde(skip)]
    pub stoplist: CaptionStoplist,
}

impl Default for DetectionFilter {
    fn default() -> Self {
        Self {
            dedup_iou: DEFAULT_DEDUP_IOU,
            cloud_voxel: Some(crate::geometry::DEFAULT_VOXEL),
            with_normals: true,
            stoplist: CaptionStoplist::default(),
        }
    }
}

/// Detections that survive caption filtering and box suppression.
pub fn surviving_detections<'a>(record: &'a DetectionRecord, filter: &DetectionFilter) -> Vec<&'a Detection> {
    let kept: Vec<&Detection> = record
        .detections
        .iter()
        .filter(|d| !filter.stoplist.contains(&d.caption))
        .collect();
    dedup_boxes(&kept, filter.dedup_iou)
}

/// Backprojects each surviving detection of `frame` into the frame given by
/// `pose` and wraps it as an object info tuple. Detections whose mask has
/// no valid depth are skipped.
pub fn frame_tuples(
    frame: &PosedFrame,
    record: &DetectionRecord,
    pose: &Pose,
    filter: &DetectionFilter,
) -> Result<Vec<ObjectInfoTuple>> {
    let img = frame.load()?;
    let mut out = Vec::new();
    for det in surviving_detections(record, filter) {
        let mut cloud = backproject(&img.rgb, &img.depth, &det.mask, &frame.intrinsics, pose)?;
        if cloud.is_empty() {
            log::warn!(
                "frame {}: detection {:?} has no valid depth, skipped",
                frame.frame_id,
                det.caption
            );
            continue;
        }
        if let Some(v) = filter.cloud_voxel {
            cloud = voxel_downsample(&cloud, v)?;
        }
        if filter.with_normals {
            let radius = fpfh_radii(filter.cloud_voxel.unwrap_or(crate::geometry::DEFAULT_VOXEL)).0;
            let viewpoint: Vector3<f64> = pose.translation;
            cloud.normals = Some(estimate_normals(&cloud, radius, NORMAL_MAX_NN, &viewpoint));
        }
        out.push(ObjectInfoTuple::new(ObjectId::fresh(), cloud, vec![det.embedding.clone()])?);
    }
    Ok(out)
}

/// Which frames of a sequence are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSampling {
    pub stride: usize,
    pub offset: usize,
}

impl FrameSampling {
    /// Every 30th frame from the start (mapping).
    pub const MAPPING: FrameSampling = FrameSampling { stride: 30, offset: 0 };
    /// Every 30th frame starting at frame 15 (held-out queries).
    pub const QUERY: FrameSampling = FrameSampling { stride: 30, offset: 15 };

    pub fn new(stride: usize, offset: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("stride must be at least 1"));
        }
        Ok(Self { stride, offset })
    }

    pub fn indices(&self, n: usize) -> impl Iterator<Item = usize> {
        (self.offset..n).step_by(self.stride.max(1))
    }

    /// Whether the frame at sequence position `index` is sampled.
    pub fn selects(&self, index: usize) -> bool {
        index >= self.offset && (index - self.offset) % self.stride.max(1) == 0
    }

    /// The sampled frames, by their sequence index.
    pub fn select<'a>(&self, frames: &'a [PosedFrame]) -> Vec<&'a PosedFrame> {
        frames.iter().filter(|f| self.selects(f.index)).collect()
    }
}

/// Object info tuples of the sampled frames, before clustering.
pub fn collect_tuples(
    frames: &[PosedFrame],
    records: &[DetectionRecord],
    sampling: FrameSampling,
    filter: &DetectionFilter,
) -> Result<Vec<ObjectInfoTuple>> {
    let by_frame: HashMap<&str, &DetectionRecord> = records.iter().map(|r| (r.frame_id.as_str(), r)).collect();
    let mut tuples = Vec::new();
    for frame in sampling.select(frames) {
        let pose = frame
            .pose
            .ok_or_else(|| Error::invalid(format!("mapping frame {} has no pose", frame.frame_id)))?;
        let Some(record) = by_frame.get(frame.frame_id.as_str()) else {
            log::warn!("frame {} has no detection record, skipped", frame.frame_id);
            continue;
        };
        tuples.extend(frame_tuples(frame, record, &pose, filter)?);
    }
    Ok(tuples)
}

/// Builds the object memory of a posed sequence: per sampled frame, filter
/// captions, suppress duplicate boxes, backproject each mask into the world
/// frame, then cluster all tuples once.
pub fn build_memory(
    frames: &[PosedFrame],
    records: &[DetectionRecord],
    config: &ClusteringConfig,
    sampling: FrameSampling,
    filter: &DetectionFilter,
) -> Result<ObjectMemory> {
    let tuples = collect_tuples(frames, records, sampling, filter)?;
    if tuples.is_empty() {
        return Err(Error::invalid("no object detections in the sampled frames"));
    }
    let raw = ObjectMemory::new(
        tuples,
        MemoryMeta {
            embedding_dim: 0,
            clustering: None,
            stride: Some(sampling.stride),
        },
    )?;
    cluster_memory(&raw, config)
}

/// Concatenation helper used by the localizer and tests.
pub fn merged_cloud(tuples: &[ObjectInfoTuple]) -> PointCloud {
    PointCloud::concat(tuples.iter().map(|t| &t.cloud))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_sampling() {
        let s = FrameSampling::MAPPING;
        assert_eq!(s.indices(90).collect::<Vec<_>>(), vec![0, 30, 60]);
        assert_eq!(FrameSampling::QUERY.indices(90).collect::<Vec<_>>(), vec![15, 45, 75]);
        assert!(FrameSampling::new(0, 0).is_err());
        assert!(FrameSampling::QUERY.selects(45) && !FrameSampling::QUERY.selects(30));
        assert!(!FrameSampling::QUERY.selects(0));
    }
}
