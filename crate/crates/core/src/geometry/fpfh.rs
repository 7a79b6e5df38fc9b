//! Fast Point Feature Histograms.
//!
//! Each point gets a 33-bin descriptor: three 11-bin histograms of the
//! Darboux-frame angles `(alpha, phi, theta)` between its normal and the
//! normals of its neighbors (the SPFH), followed by a distance-weighted sum
//! of neighbor SPFHs. Each sub-histogram of the SPFH sums to 100, and so does
//! each sub-histogram of the weighted neighbor term.

use nalgebra::Vector3;

use super::normals::{estimate_normals_with_tree, NORMAL_MAX_NN};
use super::{KdTree, PointCloud};
use crate::{Error, Result};

pub const FPFH_BINS: usize = 11;
pub const FPFH_DIM: usize = 3 * FPFH_BINS;

pub type Histogram = [f64; FPFH_DIM];

#[derive(Debug, Clone)]
pub struct FpfhFeatures {
    pub features: Vec<Histogram>,
    /// Points without any neighbor inside the feature radius; their row is zero.
    pub isolated: Vec<usize>,
}

/// Darboux-frame pair features `(alpha, phi, theta, distance)` for a source
/// point/normal and a target point/normal. The frame is anchored at whichever
/// of the two normals makes the smaller angle with the connecting line.
pub fn pair_features(
    p1: &Vector3<f64>,
    n1: &Vector3<f64>,
    p2: &Vector3<f64>,
    n2: &Vector3<f64>,
) -> [f64; 4] {
    let mut dp = p2 - p1;
    let dist = dp.norm();
    if dist == 0.0 {
        return [0.0; 4];
    }
    let a1 = n1.dot(&dp) / dist;
    let a2 = n2.dot(&dp) / dist;
    let (u, nt, theta) = if a1.abs().acos() > a2.abs().acos() {
        dp = -dp;
        (n2, n1, -a2)
    } else {
        (n1, n2, a1)
    };
    let v = dp.cross(u);
    let vn = v.norm();
    if vn == 0.0 {
        return [0.0, 0.0, 0.0, dist];
    }
    let v = v / vn;
    let w = u.cross(&v);
    let phi = v.dot(nt);
    let alpha = w.dot(nt).atan2(u.dot(nt));
    [alpha, phi, theta, dist]
}

#[inline]
fn bin(value: f64, lo: f64, hi: f64) -> usize {
    let b = (FPFH_BINS as f64 * (value - lo) / (hi - lo)).floor();
    (b.max(0.0) as usize).min(FPFH_BINS - 1)
}

/// Adds the pair features of one neighbor into an SPFH with weight `incr`.
#[inline]
pub fn accumulate_pair(hist: &mut Histogram, f: &[f64; 4], incr: f64) {
    hist[bin(f[0], -std::f64::consts::PI, std::f64::consts::PI)] += incr;
    hist[FPFH_BINS + bin(f[1], -1.0, 1.0)] += incr;
    hist[2 * FPFH_BINS + bin(f[2], -1.0, 1.0)] += incr;
}

/// Computes FPFH descriptors. Normals are taken from the cloud if present,
/// otherwise estimated within `normal_radius` and oriented toward the origin.
pub fn compute_fpfh(cloud: &PointCloud, normal_radius: f64, feature_radius: f64) -> Result<FpfhFeatures> {
    if cloud.is_empty() {
        return Err(Error::invalid("FPFH of an empty cloud"));
    }
    if !(normal_radius > 0.0 && feature_radius > 0.0) {
        return Err(Error::invalid("FPFH radii must be positive"));
    }
    let tree = KdTree::new(&cloud.points);
    let estimated;
    let normals = match &cloud.normals {
        Some(n) => n,
        None => {
            estimated =
                estimate_normals_with_tree(cloud, &tree, normal_radius, NORMAL_MAX_NN, &Vector3::zeros());
            &estimated
        }
    };
    let pts = &cloud.points;
    let neighborhoods: Vec<Vec<(usize, f64)>> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            tree.within(p, feature_radius)
                .into_iter()
                .filter(|&(j, _)| j != i)
                .collect()
        })
        .collect();

    let spfh: Vec<Histogram> = neighborhoods
        .iter()
        .enumerate()
        .map(|(i, nbrs)| {
            let mut h = [0.0; FPFH_DIM];
            if nbrs.is_empty() {
                return h;
            }
            let incr = 100.0 / nbrs.len() as f64;
            for &(j, _) in nbrs {
                let f = pair_features(&pts[i], &normals[i], &pts[j], &normals[j]);
                accumulate_pair(&mut h, &f, incr);
            }
            h
        })
        .collect();

    let mut isolated = Vec::new();
    let features = neighborhoods
        .iter()
        .enumerate()
        .map(|(i, nbrs)| {
            let mut h = [0.0; FPFH_DIM];
            if nbrs.is_empty() {
                isolated.push(i);
                return h;
            }
            let mut sums = [0.0; 3];
            for &(j, d2) in nbrs {
                if d2 == 0.0 {
                    continue;
                }
                let w = 1.0 / d2.sqrt();
                for (b, hb) in h.iter_mut().enumerate() {
                    let val = spfh[j][b] * w;
                    *hb += val;
                    sums[b / FPFH_BINS] += val;
                }
            }
            for (b, hb) in h.iter_mut().enumerate() {
                let s = sums[b / FPFH_BINS];
                if s > 0.0 {
                    *hb *= 100.0 / s;
                }
                *hb += spfh[i][b];
            }
            h
        })
        .collect();
    Ok(FpfhFeatures { features, isolated })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_zero_and_flagged() {
        let c = PointCloud::new(vec![Vector3::new(0.0, 0.0, 1.0)]);
        let f = compute_fpfh(&c, 0.1, 0.25).unwrap();
        assert_eq!(f.features[0], [0.0; FPFH_DIM]);
        assert_eq!(f.isolated, vec![0]);
    }

    #[test]
    fn empty_cloud_rejected() {
        assert!(compute_fpfh(&PointCloud::default(), 0.1, 0.25).is_err());
    }

    #[test]
    fn coplanar_pair_features() {
        let n = Vector3::z();
        let f = pair_features(&Vector3::zeros(), &n, &Vector3::new(0.1, 0.0, 0.0), &n);
        assert!(f[0].abs() < 1e-12 && f[1].abs() < 1e-12 && f[2].abs() < 1e-12);
        assert!((f[3] - 0.1).abs() < 1e-12);
    }
}
