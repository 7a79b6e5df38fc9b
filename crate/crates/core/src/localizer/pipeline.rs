use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::icp::{colored_icp_prepared, ColoredTarget};
use super::ransac::ransac_with_correspondences;
use super::{enumerate_assignments, Prediction, overlap_with_tree, ransac_feature_align, AssignmentCandidate, RegistrationConfig, MIN_PAIRS};
use crate::geometry::fpfh::Histogram;
use crate::geometry::normals::{estimate_normals, NORMAL_MAX_NN};
use crate::geometry::{compute_fpfh, fpfh_radii, voxel_downsample, KdTree, PointCloud, Pose, FPFH_DIM};
use crate::ingest::{frame_tuples, DetectionFilter, DetectionRecord, PosedFrame};
use crate::instance_map::{ObjectId, ObjectInfoTuple, ObjectMemory};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    /// Camera-to-world pose of the query frame.
    pub pose: Pose,
    pub overlap: f64,
    pub assignment: AssignmentCandidate,
    pub icp_fitness: f64,
    /// Position of the chosen assignment in score order.
    pub candidate_rank: usize,
}

/// Backprojects the surviving detections of a query frame into its camera
/// frame (identity pose).
pub fn detect_query_objects(
    frame: &PosedFrame,
    record: &DetectionRecord,
    filter: &DetectionFilter,
) -> Result<Vec<ObjectInfoTuple>> {
    if record.frame_id != frame.frame_id {
        return Err(Error::invalid(format!(
            "record for frame {} given with frame {}",
            record.frame_id, frame.frame_id
        )));
    }
    let tuples = frame_tuples(frame, record, &Pose::identity(), filter)?;
    if tuples.len() < MIN_PAIRS {
        return Err(Error::NotEnoughDetections {
            found: tuples.len(),
            required: MIN_PAIRS,
        });
    }
    Ok(tuples)
}

/// Per-object registration data: downsampled cloud with normals and
/// colors, and unit-norm FPFH rows.
#[derive(Debug, Clone)]
pub struct RegistrationCloud {
    pub cloud: PointCloud,
    pub fpfh: Vec<Histogram>,
}

impl RegistrationCloud {
    /// Missing normals are estimated and oriented away from the cloud
    /// centroid.
    pub fn new(cloud: &PointCloud, voxel: f64) -> Result<Self> {
        let mut cloud = voxel_downsample(cloud, voxel)?;
        let (normal_radius, feature_radius) = fpfh_radii(voxel);
        if cloud.normals.is_none() {
            let c = cloud.centroid().unwrap_or_default();
            let n = estimate_normals(&cloud, normal_radius, NORMAL_MAX_NN, &c);
            cloud.normals = Some(n.into_iter().map(|v| -v).collect());
        }
        let mut fpfh = compute_fpfh(&cloud, normal_radius, feature_radius)?.features;
        for h in &mut fpfh {
            let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                h.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Ok(Self { cloud, fpfh })
    }
}

/// Map data reused across queries.
pub struct PreparedMap<'a> {
    pub memory: &'a ObjectMemory,
    pub objects: Vec<RegistrationCloud>,
    /// All object clouds (downsampled) merged, for overlap scoring.
    pub merged: PointCloud,
    tree: KdTree,
}

impl<'a> PreparedMap<'a> {
    pub fn new(memory: &'a ObjectMemory, config: &RegistrationConfig) -> Result<Self> {
        config.validate()?;
        if memory.is_empty() {
            return Err(Error::invalid("object memory is empty"));
        }
        let objects = memory
            .objects
            .par_iter()
            .map(|o| RegistrationCloud::new(&o.cloud, config.voxel))
            .collect::<Result<Vec<_>>>()?;
        let merged = PointCloud::concat(objects.iter().map(|o| &o.cloud));
        let tree = KdTree::new(&merged.points);
        Ok(Self {
            memory,
            objects,
            merged,
            tree,
        })
    }

    fn index_of(&self, id: ObjectId) -> usize {
        self.memory.objects.iter().position(|o| o.id == id).expect("assignment ids come from the memory")
    }

    /// Overlap of `source` (camera frame) against the whole map under `pose`.
    pub fn overlap(&self, source: &PointCloud, pose: &Pose, tau: f64) -> f64 {
        overlap_with_tree(source, &self.tree, pose, tau)
    }
}

fn composite_features(parts: &[&RegistrationCloud], onehot_scale: f64) -> DMatrix<f64> {
    let rows: usize = parts.iter().map(|p| p.fpfh.len()).sum();
    let dim = FPFH_DIM + parts.len();
    let mut m = DMatrix::zeros(rows, dim);
    let mut r = 0;
    for (k, part) in parts.iter().enumerate() {
        for h in &part.fpfh {
            for (c, v) in h.iter().enumerate() {
                m[(r, c)] = *v;
            }
            m[(r, FPFH_DIM + k)] = onehot_scale;
            r += 1;
        }
    }
    m
}

fn block_correspondences(s: &RegistrationCloud, t: &RegistrationCloud) -> Vec<usize> {
    s.fpfh
        .iter()
        .map(|a| {
            let mut best = (f64::INFINITY, 0);
            for (j, b) in t.fpfh.iter().enumerate() {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                if d < best.0 {
                    best = (d, j);
                }
            }
            best.1
        })
        .collect()
}

/// Result of registering one candidate assignment.
#[derive(Debug, Clone)]
pub struct CandidateOutcome {
    pub rank: usize,
    pub assignment: AssignmentCandidate,
    pub result: std::result::Result<(Pose, f64, f64), String>,
}

fn register_candidate(
    rank: usize,
    cand: &AssignmentCandidate,
    query: &[RegistrationCloud],
    query_merged: &PointCloud,
    map: &PreparedMap<'_>,
    config: &RegistrationConfig,
) -> std::result::Result<(Pose, f64, f64), String> {
    let src_parts: Vec<&RegistrationCloud> = cand.pairs.iter().map(|&(i, _)| &query[i]).collect();
    let tgt_parts: Vec<&RegistrationCloud> = cand.pairs.iter().map(|&(_, id)| &map.objects[map.index_of(id)]).collect();
    let source = PointCloud::concat(src_parts.iter().map(|p| &p.cloud));
    let target = PointCloud::concat(tgt_parts.iter().map(|p| &p.cloud));
    let cfg = RegistrationConfig {
        seed: config.seed.wrapping_add(rank as u64),
        ..config.clone()
    };
    let coarse = if config.onehot_scale > 1.0 {
        // Unit-norm nonnegative FPFH rows are at most sqrt(2) apart while rows
        // of different pairs are more than onehot_scale * sqrt(2) apart, so the
        // composite nearest neighbor always lies in the same pair block.
        let mut corr = Vec::with_capacity(source.len());
        let mut offset = 0;
        for (s, t) in src_parts.iter().zip(&tgt_parts) {
            corr.extend(block_correspondences(s, t).into_iter().map(|j| j + offset));
            offset += t.cloud.len();
        }
        ransac_with_correspondences(&source, &target, &corr, &cfg)
    } else {
        let sf = composite_features(&src_parts, config.onehot_scale);
        let tf = composite_features(&tgt_parts, config.onehot_scale);
        ransac_feature_align(&source, &target, &sf, &tf, &cfg)
    }
    .map_err(|e| e.to_string())?;
    let colored = ColoredTarget::new(&target, 2.0 * config.voxel).map_err(|e| e.to_string())?;
    let fine = colored_icp_prepared(&source, &colored, &coarse.pose, &cfg).map_err(|e| e.to_string())?;
    let ov = map.overlap(query_merged, &fine.pose, config.overlap_tau);
    Ok((fine.pose, ov, fine.fitness))
}

/// Registers every candidate and returns all outcomes in rank order.
pub fn register_candidates(
    detections: &[ObjectInfoTuple],
    map: &PreparedMap<'_>,
    config: &RegistrationConfig,
) -> Result<Vec<CandidateOutcome>> {
    let candidates = enumerate_assignments(detections, map.memory, config)?;
    let query = detections
        .iter()
        .map(|d| RegistrationCloud::new(&d.cloud, config.voxel))
        .collect::<Result<Vec<_>>>()?;
    let query_merged = PointCloud::concat(query.iter().map(|q| &q.cloud));
    Ok(candidates
        .into_par_iter()
        .enumerate()
        .map(|(rank, cand)| CandidateOutcome {
            rank,
            result: register_candidate(rank, &cand, &query, &query_merged, map, config),
            assignment: cand,
        })
        .collect())
}

/// Localizes camera-frame detections against a prepared map: the candidate
/// with the largest overlap wins, earlier (lower-score) candidates on ties.
pub fn localize_tuples(
    detections: &[ObjectInfoTuple],
    map: &PreparedMap<'_>,
    config: &RegistrationConfig,
) -> Result<PoseEstimate> {
    let outcomes = register_candidates(detections, map, config)?;
    let mut best: Option<PoseEstimate> = None;
    for o in &outcomes {
        if let Ok((pose, ov, fit)) = &o.result {
            if *ov > 0.0 && best.as_ref().is_none_or(|b| *ov > b.overlap) {
                best = Some(PoseEstimate {
                    pose: *pose,
                    overlap: *ov,
                    assignment: o.assignment.clone(),
                    icp_fitness: *fit,
                    candidate_rank: o.rank,
                });
            }
        }
    }
    best.ok_or_else(|| {
        let detail: Vec<String> = outcomes
            .iter()
            .map(|o| match &o.result {
                Ok((_, ov, _)) => format!("#{} overlap {ov:.3}", o.rank),
                Err(e) => format!("#{} {e}", o.rank),
            })
            .collect();
        Error::LocalizationFailed(if detail.is_empty() {
            format!(
                "no feasible assignment of {} detections to {} map objects",
                detections.len(),
                map.memory.len()
            )
        } else {
            format!("all candidates have zero overlap: {}", detail.join("; "))
        })
    })
}

/// Localizes one query frame: detection, assignment search, registration
/// of each candidate and overlap ranking.
pub fn localize(
    frame: &PosedFrame,
    record: &DetectionRecord,
    map: &PreparedMap<'_>,
    filter: &DetectionFilter,
    config: &RegistrationConfig,
) -> Result<PoseEstimate> {
    let detections = detect_query_objects(frame, record, filter)?;
    localize_tuples(&detections, map, config)
}

/// Localizes each frame independently, in order. The pose of a frame is
/// never looked at. A frame without a detection record or whose
/// localization fails yields a failed prediction instead of an error.
pub fn localize_frames(
    frames: &[&PosedFrame],
    records: &[DetectionRecord],
    map: &PreparedMap<'_>,
    filter: &DetectionFilter,
    config: &RegistrationConfig,
) -> Vec<Prediction> {
    let by_frame: HashMap<&str, &DetectionRecord> = records.iter().map(|r| (r.frame_id.as_str(), r)).collect();
    frames
        .iter()
        .map(|f| {
            let Some(record) = by_frame.get(f.frame_id.as_str()) else {
                return Prediction::no_record(&f.frame_id, f.timestamp);
            };
            match localize(&f.without_pose(), record, map, filter, config) {
                Ok(est) => Prediction::success(&f.frame_id, f.timestamp, &est),
                Err(e) => {
                    log::info!("frame {}: {e}", f.frame_id);
                    Prediction::failure(&f.frame_id, f.timestamp, &e)
                }
            }
        })
        .collect()
}

/// Applies `g` to every detection cloud.
pub fn transform_tuples(tuples: &[ObjectInfoTuple], g: &Pose) -> Vec<ObjectInfoTuple> {
    tuples
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.cloud = t.cloud.transformed(g);
            t
        })
        .collect()
}

