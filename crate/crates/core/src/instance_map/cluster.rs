use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{agg_cluster, dbscan, group, tuple_embedding_distance, EmbeddingAggregation};
use super::{ObjectId, ObjectInfoTuple, ObjectMemory};
use crate::geometry::{occupied_voxels, voxel_downsample, DEFAULT_VOXEL};
use crate::{Error, Result};

/// Thresholds for the three clustering stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    /// Minimum voxel IoU for stage-1 merging.
    pub eps_iou: f64,
    /// Maximum embedding distance for stage-2 merging.
    pub eps_l2: f64,
    /// DBSCAN neighborhood radius over tuple centroids, meters.
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    /// Voxel edge for occupancy IoU, meters.
    pub voxel: f64,
    #[serde(default)]
    pub aggregation: EmbeddingAggregation,
    /// Re-voxelize grouped clouds at `voxel` after each grouping stage.
    /// Off by default so that clustering preserves the point multiset.
    #[serde(default)]
    pub downsample_merged: bool,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            eps_iou: 0.25,
            eps_l2: 0.5,
            dbscan_eps: 1.0,
            dbscan_min_pts: 1,
            voxel: DEFAULT_VOXEL,
            aggregation: EmbeddingAggregation::Mean,
            downsample_merged: false,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eps_iou > 0.0
            && self.eps_iou <= 1.0
            && self.eps_l2 > 0.0
            && self.dbscan_eps > 0.0
            && self.dbscan_min_pts >= 1
            && self.voxel > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid clustering config {self:?}")))
        }
    }
}

/// Clustering result with provenance: `members[k]` lists the input tuple
/// indices that were grouped into output tuple `k`.
#[derive(Debug, Clone)]
pub struct ClusterOutcome {
    pub memory: ObjectMemory,
    pub members: Vec<Vec<usize>>,
}

struct Group {
    tuple: ObjectInfoTuple,
    members: Vec<usize>,
}

fn group_all(parts: &[&Group], config: &ClusteringConfig) -> Result<Group> {
    let mut tuple = parts[0].tuple.clone();
    let mut members = parts[0].members.clone();
    for p in &parts[1..] {
        tuple = group(&tuple, &p.tuple)?;
        members.extend_from_slice(&p.members);
    }
    if parts.len() > 1 && config.downsample_merged {
        tuple.cloud = voxel_downsample(&tuple.cloud, config.voxel)?;
    }
    Ok(Group { tuple, members })
}

fn partition(labels: &[usize]) -> Vec<Vec<usize>> {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        out[l].push(i);
    }
    out
}

/// Pairwise voxel-IoU matrix, computed in parallel.
pub fn iou_matrix(tuples: &[ObjectInfoTuple], voxel: f64) -> Result<Vec<Vec<f64>>> {
    let sets = tuples
        .par_iter()
        .map(|t| occupied_voxels(&t.cloud, voxel))
        .collect::<Result<Vec<_>>>()?;
    let n = tuples.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        1.0
                    } else if j > i {
                        crate::geometry::set_iou(&sets[i], &sets[j])
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let mut m = upper;
    for i in 0..n {
        for j in 0..i {
            m[i][j] = m[j][i];
        }
    }
    Ok(m)
}

/// Pairwise embedding-distance matrix.
pub fn embedding_distance_matrix(
    tuples: &[ObjectInfoTuple],
    aggregation: EmbeddingAggregation,
) -> Result<Vec<Vec<f64>>> {
    let n = tuples.len();
    let mut m = vec![vec![0.0; n]; n];
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| tuple_embedding_distance(&tuples[i], &tuples[j], aggregation).map(|d| (j, d)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    for (i, row) in rows.into_iter().enumerate() {
        for (j, d) in row {
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    Ok(m)
}

/// Three-stage grouping of object info tuples:
///
/// 1. agglomerative merge on `1 - voxel IoU` at threshold `1 - eps_iou`;
/// 2. agglomerative merge of the stage-1 groups on embedding distance at `eps_l2`;
/// 3. DBSCAN over stage-1 group centroids inside each stage-2 cluster.
///
/// Stage-1 groups that share a stage-2 cluster and a DBSCAN cluster are
/// grouped. DBSCAN noise (only possible with `dbscan_min_pts > 1`) stays
/// ungrouped. Output ids are sequential from 0.
pub fn cluster_memory(memory: &ObjectMemory, config: &ClusteringConfig) -> Result<ObjectMemory> {
    cluster_memory_traced(memory, config).map(|o| o.memory)
}

pub fn cluster_memory_traced(memory: &ObjectMemory, config: &ClusteringConfig) -> Result<ClusterOutcome> {
    config.validate()?;
    if memory.objects.is_empty() {
        return Err(Error::invalid("cannot cluster an empty memory"));
    }
    let inputs: Vec<Group> = memory
        .objects
        .iter()
        .enumerate()
        .map(|(i, t)| Group {
            tuple: t.clone(),
            members: vec![i],
        })
        .collect();

    // Stage 1: spatial overlap.
    let tuples: Vec<ObjectInfoTuple> = inputs.iter().map(|g| g.tuple.clone()).collect();
    let iou = iou_matrix(&tuples, config.voxel)?;
    let dist: Vec<Vec<f64>> = iou
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, v)| if i == j { 0.0 } else { 1.0 - v })
                .collect()
        })
        .collect();
    let labels = agg_cluster(&dist, 1.0 - config.eps_iou)?;
    let stage1: Vec<Group> = partition(&labels)
        .iter()
        .map(|idx| group_all(&idx.iter().map(|&i| &inputs[i]).collect::<Vec<_>>(), config))
        .collect::<Result<_>>()?;

    // Stage 2: embedding similarity.
    let tuples: Vec<ObjectInfoTuple> = stage1.iter().map(|g| g.tuple.clone()).collect();
    let dist = embedding_distance_matrix(&tuples, config.aggregation)?;
    let labels = agg_cluster(&dist, config.eps_l2)?;

    // Stage 3: spatial density inside each semantic cluster.
    let mut out = Vec::new();
    for idx in partition(&labels) {
        let centroids: Vec<_> = idx.iter().map(|&i| stage1[i].tuple.centroid()).collect();
        let dl = dbscan(&centroids, config.dbscan_eps, config.dbscan_min_pts)?;
        let clusters = dl.iter().flatten().copied().max().map_or(0, |m| m + 1);
        for c in 0..clusters {
            let parts: Vec<&Group> = idx
                .iter()
                .zip(&dl)
                .filter(|(_, l)| **l == Some(c))
                .map(|(&i, _)| &stage1[i])
                .collect();
            out.push(group_all(&parts, config)?);
        }
        for (&i, _) in idx.iter().zip(&dl).filter(|(_, l)| l.is_none()) {
            out.push(group_all(&[&stage1[i]], config)?);
        }
    }

    let mut members = Vec::with_capacity(out.len());
    let objects = out
        .into_iter()
        .enumerate()
        .map(|(k, mut g)| {
            g.tuple.id = ObjectId(k as u64);
            members.push(g.members);
            g.tuple
        })
        .collect();
    let mut meta = memory.meta.clone();
    meta.clustering = Some(*config);
    Ok(ClusterOutcome {
        memory: ObjectMemory::new(objects, meta)?,
        members,
    })
}
