use std::collections::{BTreeMap, HashSet};

use nalgebra::Vector3;

use super::PointCloud;
use crate::{Error, Result};

pub type VoxelKey = [i64; 3];

/// Voxel index of a point: `floor(p / voxel)` per axis, anchored at the origin.
#[inline]
pub fn voxel_key(p: &Vector3<f64>, voxel: f64) -> VoxelKey {
    [
        (p.x / voxel).floor() as i64,
        (p.y / voxel).floor() as i64,
        (p.z / voxel).floor() as i64,
    ]
}

fn check_voxel(voxel: f64) -> Result<()> {
    if voxel > 0.0 && voxel.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("voxel size must be positive, got {voxel}")))
    }
}

pub fn occupied_voxels(cloud: &PointCloud, voxel: f64) -> Result<HashSet<VoxelKey>> {
    check_voxel(voxel)?;
    Ok(cloud.points.iter().map(|p| voxel_key(p, voxel)).collect())
}

/// Intersection-over-union of the occupied voxel sets of two clouds.
/// Two empty clouds have IoU 0.
pub fn voxel_iou(a: &PointCloud, b: &PointCloud, voxel: f64) -> Result<f64> {
    let va = occupied_voxels(a, voxel)?;
    let vb = occupied_voxels(b, voxel)?;
    Ok(set_iou(&va, &vb))
}

pub fn set_iou(va: &HashSet<VoxelKey>, vb: &HashSet<VoxelKey>) -> f64 {
    let (small, large) = if va.len() <= vb.len() { (va, vb) } else { (vb, va) };
    let inter = small.iter().filter(|k| large.contains(*k)).count();
    let union = va.len() + vb.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Default)]
struct Acc {
    n: usize,
    p: Vector3<f64>,
    c: Vector3<f64>,
    nr: Vector3<f64>,
    first_normal: Option<Vector3<f64>>,
}

/// One point per occupied voxel at the centroid of its members. Colors are
/// averaged; normals are averaged and renormalized. Output is ordered by
/// voxel key.
pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> Result<PointCloud> {
    check_voxel(voxel)?;
    let mut cells: BTreeMap<VoxelKey, Acc> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let acc = cells.entry(voxel_key(p, voxel)).or_default();
        acc.n += 1;
        acc.p += p;
        if let Some(c) = &cloud.colors {
            acc.c += c[i];
        }
        if let Some(n) = &cloud.normals {
            acc.nr += n[i];
            acc.first_normal.get_or_insert(n[i]);
        }
    }
    let mut out = PointCloud {
        points: Vec::with_capacity(cells.len()),
        colors: cloud.colors.as_ref().map(|_| Vec::with_capacity(cells.len())),
        normals: cloud.normals.as_ref().map(|_| Vec::with_capacity(cells.len())),
    };
    for acc in cells.values() {
        let inv = 1.0 / acc.n as f64;
        out.points.push(acc.p * inv);
        if let Some(c) = out.colors.as_mut() {
            c.push(acc.c * inv);
        }
        if let Some(nr) = out.normals.as_mut() {
            let norm = acc.nr.norm();
            nr.push(if norm > 1e-12 {
                acc.nr / norm
            } else {
                acc.first_normal.unwrap()
            });
        }
    }
    Ok(out)
}
