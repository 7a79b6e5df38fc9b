//! Feature-matched RANSAC for coarse rigid alignment.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::RegistrationConfig;
use crate::geometry::{KdTree, PointCloud, Pose};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RansacOutcome {
    pub pose: Pose,
    /// Fraction of source points with a target point within `ransac_dist`.
    pub inlier_ratio: f64,
    pub iterations: usize,
}

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]` (Kabsch).
/// Returns `None` for fewer than three pairs or non-finite input.
pub fn fit_rigid(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Option<Pose> {
    if src.len() != dst.len() || src.len() < 3 {
        return None;
    }
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vector3<f64>>() / n;
    let cd = dst.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    if !h.iter().all(|v| v.is_finite()) {
        return None;
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let v = vt.transpose();
    let mut fix = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let r = v * fix * u.transpose();
    Some(Pose {
        rotation: r,
        translation: cd - r * cs,
    })
}

/// Index of the nearest target feature row for every source row.
pub fn feature_correspondences(source_feat: &DMatrix<f64>, target_feat: &DMatrix<f64>) -> Vec<usize> {
    let tt = target_feat.transpose();
    (0..source_feat.nrows())
        .into_par_iter()
        .map(|i| {
            let row = source_feat.row(i);
            let mut best = (f64::INFINITY, 0);
            for j in 0..tt.ncols() {
                let d: f64 = row.iter().zip(tt.column(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, j);
                }
            }
            best.1
        })
        .collect()
}

fn edges_consistent(src: &[Vector3<f64>], dst: &[Vector3<f64>], ratio: f64) -> bool {
    for i in 0..src.len() {
        for j in i + 1..src.len() {
            let a = (src[i] - src[j]).norm();
            let b = (dst[i] - dst[j]).norm();
            if a < b * ratio || b < a * ratio {
                return false;
            }
        }
    }
    true
}

fn count_inliers(source: &PointCloud, tree: &KdTree, pose: &Pose, dist: f64) -> usize {
    source
        .points
        .iter()
        .filter(|p| tree.nearest_within(&pose.transform_point(p), dist).is_some())
        .count()
}

/// Coarse alignment of `source` onto `target` from feature matches.
///
/// Correspondences pair each source point with its nearest target point in
/// feature space. Each iteration draws `ransac_sample` of them, rejects the
/// draw unless all pairwise edge lengths agree within `edge_len_check`, fits
/// a rigid transform and scores it by the number of source points landing
/// within `ransac_dist` of the target. Stops early once the best inlier
/// ratio gives `ransac_confidence` of having drawn an all-inlier sample.
pub fn ransac_feature_align(
    source: &PointCloud,
    target: &PointCloud,
    source_feat: &DMatrix<f64>,
    target_feat: &DMatrix<f64>,
    config: &RegistrationConfig,
) -> Result<RansacOutcome> {
    if source_feat.nrows() != source.len() || target_feat.nrows() != target.len() {
        return Err(Error::invalid("feature rows must match cloud sizes"));
    }
    if source_feat.ncols() != target_feat.ncols() {
        return Err(Error::invalid(format!(
            "feature dimensions differ: {} vs {}",
            source_feat.ncols(),
            target_feat.ncols()
        )));
    }
    check_sizes(source, target, config)?;
    let corr = feature_correspondences(source_feat, target_feat);
    ransac_with_correspondences(source, target, &corr, config)
}

fn check_sizes(source: &PointCloud, target: &PointCloud, config: &RegistrationConfig) -> Result<()> {
    let s = config.ransac_sample;
    if source.len() < s || target.is_empty() {
        return Err(Error::DegenerateInput(format!(
            "{} correspondences for a {s}-point sample",
            source.len().min(target.len())
        )));
    }
    Ok(())
}

/// RANSAC over given correspondences: `corr[i]` is the target index
/// matched to source point `i`.
pub fn ransac_with_correspondences(
    source: &PointCloud,
    target: &PointCloud,
    corr: &[usize],
    config: &RegistrationConfig,
) -> Result<RansacOutcome> {
    check_sizes(source, target, config)?;
    if corr.len() != source.len() || corr.iter().any(|&j| j >= target.len()) {
        return Err(Error::invalid("one in-range correspondence per source point required"));
    }
    let s = config.ransac_sample;
    let tree = KdTree::new(&target.points);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(usize, Pose)> = None;
    let mut budget = config.ransac_iters;
    let mut it = 0;
    let mut src = Vec::with_capacity(s);
    let mut dst = Vec::with_capacity(s);
    while it < budget {
        it += 1;
        src.clear();
        dst.clear();
        for i in sample(&mut rng, corr.len(), s) {
            src.push(source.points[i]);
            dst.push(target.points[corr[i]]);
        }
        if !edges_consistent(&src, &dst, config.edge_len_check) {
            continue;
        }
        let Some(pose) = fit_rigid(&src, &dst) else { continue };
        let inliers = count_inliers(source, &tree, &pose, config.ransac_dist);
        if best.as_ref().is_none_or(|(b, _)| inliers > *b) {
            let ratio = inliers as f64 / source.len() as f64;
            best = Some((inliers, pose));
            let p_all = ratio.powi(s as i32);
            let needed = if p_all >= 1.0 {
                0.0
            } else {
                ((1.0 - config.ransac_confidence).ln() / (1.0 - p_all).ln()).ceil()
            };
            if needed.is_finite() && needed >= 0.0 {
                budget = budget.min(needed as usize);
            }
        }
    }
    let Some((mut inliers, mut pose)) = best else {
        return Err(Error::DegenerateInput(format!(
            "no sample passed the edge-length check in {it} iterations"
        )));
    };
    // refit on feature correspondences that agree with the best model
    let (rs, rd): (Vec<_>, Vec<_>) = corr
        .iter()
        .enumerate()
        .filter(|&(i, &j)| (pose.transform_point(&source.points[i]) - target.points[j]).norm() <= config.ransac_dist)
        .map(|(i, &j)| (source.points[i], target.points[j]))
        .unzip();
    if let Some(refit) = fit_rigid(&rs, &rd) {
        let n = count_inliers(source, &tree, &refit, config.ransac_dist);
        if n >= inliers {
            inliers = n;
            pose = refit;
        }
    }
    Ok(RansacOutcome {
        pose,
        inlier_ratio: inliers as f64 / source.len() as f64,
        iterations: it,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kabsch_recovers_transform() {
        let g = Pose::from_axis_angle(Vector3::new(1.0, 2.0, 3.0), 0.7, Vector3::new(0.3, -1.0, 2.0));
        let src = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 2.0, 0.0),
            Vector3::new(0.0, 0.0, 3.0),
        ];
        let dst: Vec<_> = src.iter().map(|p| g.transform_point(p)).collect();
        let est = fit_rigid(&src, &dst).unwrap();
        assert!((est.rotation - g.rotation).norm() < 1e-12);
        assert!((est.translation - g.translation).norm() < 1e-12);
    }

    #[test]
    fn kabsch_avoids_reflection() {
        // planar points admit a reflection with zero residual
        let src = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ];
        let est = fit_rigid(&src, &src).unwrap();
        assert!((est.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let c = PointCloud::new(vec![Vector3::zeros(), Vector3::x()]);
        let f = DMatrix::zeros(2, 3);
        let err = ransac_feature_align(&c, &c, &f, &f, &RegistrationConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateInput(_)));
    }
}
