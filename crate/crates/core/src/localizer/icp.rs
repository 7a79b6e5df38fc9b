//! Colored ICP: point-to-plane geometry plus a photometric term that uses a
//! per-point intensity gradient on the target's tangent planes.

use nalgebra::{Matrix6, Rotation3, Vector3, Vector6};

use super::RegistrationConfig;
use crate::geometry::normals::{estimate_normals, NORMAL_MAX_NN};
use crate::geometry::{KdTree, PointCloud, Pose};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct IcpOutcome {
    pub pose: Pose,
    /// Fraction of source points with a correspondence within `icp_max_dist`.
    pub fitness: f64,
    /// Root mean squared combined residual over correspondences.
    pub rmse: f64,
    pub iterations: usize,
}

/// Target cloud with the data colored ICP needs per point.
#[derive(Debug, Clone)]
pub struct ColoredTarget {
    pub cloud: PointCloud,
    pub intensity: Vec<f64>,
    /// Intensity gradient in the tangent plane.
    pub gradient: Vec<Vector3<f64>>,
    tree: KdTree,
}

impl ColoredTarget {
    /// Estimates missing normals within `radius` and fits intensity
    /// gradients from up to 30 neighbors within `radius`.
    pub fn new(target: &PointCloud, radius: f64) -> Result<Self> {
        let intensity = target
            .intensities()
            .ok_or_else(|| Error::invalid("colored ICP needs target colors"))?;
        let mut cloud = target.clone();
        let tree = KdTree::new(&cloud.points);
        if cloud.normals.is_none() {
            let c = cloud.centroid().unwrap_or_default();
            let far = c + Vector3::new(0.0, 0.0, 1e3);
            cloud.normals = Some(estimate_normals(&cloud, radius, NORMAL_MAX_NN, &far));
        }
        let normals = cloud.normals.as_ref().expect("set above");
        let gradient = cloud
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let n = normals[i];
                let nbrs = tree.knn_within(p, NORMAL_MAX_NN, radius);
                if nbrs.len() < 4 {
                    return Vector3::zeros();
                }
                // least squares: g·(q' − p) = I(q) − I(p) for tangent-plane
                // projections q', plus a weighted g·n = 0 row
                let mut ata = nalgebra::Matrix3::zeros();
                let mut atb = Vector3::zeros();
                for &(j, _) in &nbrs {
                    if j == i {
                        continue;
                    }
                    let q = cloud.points[j];
                    let qp = q - n * n.dot(&(q - p));
                    let a = qp - p;
                    let b = intensity[j] - intensity[i];
                    ata += a * a.transpose();
                    atb += a * b;
                }
                let w = (nbrs.len() - 1) as f64;
                ata += n * n.transpose() * (w * w);
                ata.try_inverse().map_or(Vector3::zeros(), |inv| inv * atb)
            })
            .collect();
        Ok(Self {
            cloud,
            intensity,
            gradient,
            tree,
        })
    }

    fn normals(&self) -> &[Vector3<f64>] {
        self.cloud.normals.as_deref().expect("normals are always present")
    }
}

fn twist_to_pose(x: &Vector6<f64>) -> Pose {
    let w = Vector3::new(x[0], x[1], x[2]);
    Pose {
        rotation: Rotation3::new(w).into_inner(),
        translation: Vector3::new(x[3], x[4], x[5]),
    }
}

struct Linearized {
    jtj: Matrix6<f64>,
    jtr: Vector6<f64>,
    sq_sum: f64,
    matches: usize,
}

fn linearize(
    source: &PointCloud,
    source_intensity: &[f64],
    target: &ColoredTarget,
    pose: &Pose,
    max_dist: f64,
    color_weight: f64,
) -> Linearized {
    let wg = (1.0 - color_weight).sqrt();
    let wc = color_weight.sqrt();
    let normals = target.normals();
    let mut out = Linearized {
        jtj: Matrix6::zeros(),
        jtr: Vector6::zeros(),
        sq_sum: 0.0,
        matches: 0,
    };
    for (i, p) in source.points.iter().enumerate() {
        let s = pose.transform_point(p);
        let Some((j, _)) = target.tree.nearest_within(&s, max_dist) else {
            continue;
        };
        out.matches += 1;
        let q = target.cloud.points[j];
        let n = normals[j];
        let g = target.gradient[j];
        let rg = (s - q).dot(&n);
        let proj = s - n * rg;
        let rc = target.intensity[j] + g.dot(&(proj - q)) - source_intensity[i];
        let jg = {
            let c = s.cross(&n);
            Vector6::new(c.x, c.y, c.z, n.x, n.y, n.z)
        };
        let jc = {
            let c = s.cross(&g);
            Vector6::new(c.x, c.y, c.z, g.x, g.y, g.z)
        };
        for (jac, r, w) in [(jg, rg, wg), (jc, rc, wc)] {
            let jw = jac * w;
            out.jtj += jw * jw.transpose();
            out.jtr += jw * (r * w);
            out.sq_sum += (r * w) * (r * w);
        }
    }
    out
}

/// Refines `init` by minimizing the weighted sum of squared point-to-plane
/// and color residuals over nearest-neighbor correspondences within
/// `icp_max_dist`. Each Gauss-Newton step solves for a twist that is
/// applied on the left of the current pose.
pub fn colored_icp(source: &PointCloud, target: &PointCloud, init: &Pose, config: &RegistrationConfig) -> Result<IcpOutcome> {
    let prepared = ColoredTarget::new(target, 2.0 * config.voxel)?;
    colored_icp_prepared(source, &prepared, init, config)
}

pub fn colored_icp_prepared(
    source: &PointCloud,
    target: &ColoredTarget,
    init: &Pose,
    config: &RegistrationConfig,
) -> Result<IcpOutcome> {
    let source_intensity = source
        .intensities()
        .ok_or_else(|| Error::invalid("colored ICP needs source colors"))?;
    let scales: Vec<f64> = if config.icp_multiscale {
        vec![4.0 * config.icp_max_dist, 2.0 * config.icp_max_dist, config.icp_max_dist]
    } else {
        vec![config.icp_max_dist]
    };
    let mut pose = *init;
    let mut iterations = 0;
    for (level, &max_dist) in scales.iter().enumerate() {
        let mut prev: Option<f64> = None;
        for _ in 0..config.icp_max_iters {
            let lin = linearize(source, &source_intensity, target, &pose, max_dist, config.color_weight);
            if lin.matches == 0 {
                if level == 0 && iterations == 0 {
                    return Ok(IcpOutcome {
                        pose: *init,
                        fitness: 0.0,
                        rmse: 0.0,
                        iterations: 0,
                    });
                }
                break;
            }
            let res = lin.sq_sum / lin.matches as f64;
            if let Some(p) = prev {
                if (p - res).abs() <= 1e-6 * p.max(f64::MIN_POSITIVE) {
                    break;
                }
            }
            if res == 0.0 {
                break;
            }
            prev = Some(res);
            let Some(step) = lin.jtj.cholesky().map(|c| c.solve(&(-lin.jtr))) else {
                break;
            };
            if !step.iter().all(|v| v.is_finite()) {
                break;
            }
            pose = twist_to_pose(&step).compose(&pose).orthonormalized();
            iterations += 1;
        }
    }
    let lin = linearize(source, &source_intensity, target, &pose, config.icp_max_dist, config.color_weight);
    Ok(IcpOutcome {
        pose,
        fitness: lin.matches as f64 / source.len().max(1) as f64,
        rmse: if lin.matches > 0 {
            (lin.sq_sum / lin.matches as f64).sqrt()
        } else {
            0.0
        },
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn colored_grid() -> PointCloud {
        let mut pts = Vec::new();
        let mut cols = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                let (x, y) = (i as f64 * 0.02, j as f64 * 0.02);
                pts.push(Vector3::new(x, y, 0.1 * (x * 7.0).sin()));
                cols.push(Vector3::repeat(0.5 + 0.4 * (y * 9.0).sin()));
            }
        }
        PointCloud::with_colors(pts, cols)
    }

    #[test]
    fn ground_truth_is_a_fixed_point() {
        let c = colored_grid();
        let cfg = RegistrationConfig::default();
        let out = colored_icp(&c, &c, &Pose::identity(), &cfg).unwrap();
        assert!((out.pose.rotation - nalgebra::Matrix3::identity()).norm() < 1e-9);
        assert!(out.pose.translation.norm() < 1e-9);
        assert_eq!(out.fitness, 1.0);
    }

    #[test]
    fn far_apart_returns_init() {
        let c = colored_grid();
        let cfg = RegistrationConfig {
            icp_max_dist: 0.05,
            ..Default::default()
        };
        let init = Pose::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let out = colored_icp(&c, &c, &init, &cfg).unwrap();
        assert_eq!(out.pose, init);
        assert_eq!(out.fitness, 0.0);
    }

    #[test]
    fn needs_colors() {
        let c = PointCloud::new(vec![Vector3::zeros()]);
        assert!(colored_icp(&c, &c, &Pose::identity(), &RegistrationConfig::default()).is_err());
    }
}
