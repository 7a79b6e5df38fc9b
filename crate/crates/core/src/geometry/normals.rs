use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::{KdTree, PointCloud};

/// Neighbor cap for the plane fit.
pub const NORMAL_MAX_NN: usize = 30;

/// Estimates unit normals by a least-squares plane fit over up to
/// `max_nn` neighbors within `radius`, then flips each normal to face
/// `viewpoint`. Points with fewer than three neighbors get the unit vector
/// toward the viewpoint.
pub fn estimate_normals(
    cloud: &PointCloud,
    radius: f64,
    max_nn: usize,
    viewpoint: &Vector3<f64>,
) -> Vec<Vector3<f64>> {
    let tree = KdTree::new(&cloud.points);
    estimate_normals_with_tree(cloud, &tree, radius, max_nn, viewpoint)
}

pub(crate) fn estimate_normals_with_tree(
    cloud: &PointCloud,
    tree: &KdTree,
    radius: f64,
    max_nn: usize,
    viewpoint: &Vector3<f64>,
) -> Vec<Vector3<f64>> {
    cloud
        .points
        .iter()
        .map(|p| {
            let nbrs = tree.knn_within(p, max_nn, radius);
            let toward = viewpoint - p;
            let fallback = if toward.norm() > 1e-12 {
                toward.normalize()
            } else {
                Vector3::z()
            };
            if nbrs.len() < 3 {
                return fallback;
            }
            let mean: Vector3<f64> =
                nbrs.iter().map(|&(i, _)| cloud.points[i]).sum::<Vector3<f64>>() / nbrs.len() as f64;
            let mut cov = Matrix3::zeros();
            for &(i, _) in &nbrs {
                let d = cloud.points[i] - mean;
                cov += d * d.transpose();
            }
            let eig = SymmetricEigen::new(cov);
            let n = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
            if n.norm() < 1e-12 || !n.iter().all(|v| v.is_finite()) {
                return fallback;
            }
            let n = n.normalize();
            if n.dot(&toward) < 0.0 {
                -n
            } else {
                n
            }
        })
        .collect()
}

/// Fills in normals if the cloud has none.
pub fn ensure_normals(cloud: &mut PointCloud, radius: f64, viewpoint: &Vector3<f64>) {
    if cloud.normals.is_none() {
        cloud.normals = Some(estimate_normals(cloud, radius, NORMAL_MAX_NN, viewpoint));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_normal_faces_viewpoint() {
        let pts: Vec<_> = (0..10)
            .flat_map(|i| (0..10).map(move |j| Vector3::new(i as f64 * 0.01, j as f64 * 0.01, 1.0)))
            .collect();
        let c = PointCloud::new(pts);
        let n = estimate_normals(&c, 0.05, 30, &Vector3::zeros());
        for v in n {
            assert!((v - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn isolated_point_falls_back() {
        let c = PointCloud::new(vec![Vector3::new(0.0, 0.0, 2.0)]);
        let n = estimate_normals(&c, 0.05, 30, &Vector3::zeros());
        assert!((n[0] - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }
}
