use instloc::geometry::{compute_fpfh, fpfh_radii, PointCloud, Pose, FPFH_DIM};
use nalgebra::Vector3;

fn normalized(h: &[f64; FPFH_DIM]) -> Vec<f64> {
    let s: f64 = h.iter().sum();
    h.iter().map(|v| v / s).collect()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn grid(n: i32, step: f64, z: impl Fn(f64, f64) -> f64) -> PointCloud {
    let mut pts = Vec::new();
    for i in -n..=n {
        for j in -n..=n {
            let (x, y) = (i as f64 * step, j as f64 * step);
            pts.push(Vector3::new(x, y, z(x, y)));
        }
    }
    PointCloud::new(pts)
}

#[test]
fn planar_patch_has_one_interior_descriptor() {
    let step = 0.01;
    let cloud = grid(30, step, |_, _| 1.0);
    let (nr, fr) = fpfh_radii(0.02);
    let f = compute_fpfh(&cloud, nr, fr).unwrap();
    let interior: Vec<usize> = (0..cloud.len())
        .filter(|&i| {
            let p = cloud.points[i];
            p.x.abs().max(p.y.abs()) < 0.3 - 2.0 * fr
        })
        .collect();
    assert!(interior.len() > 100);
    let first = normalized(&f.features[interior[0]]);
    // coplanar normals put every pair in the middle bin of each sub-histogram
    for sub in 0..3 {
        let mass = first[sub * 11 + 5];
        assert!(mass > 0.3, "sub-histogram {sub} centre bin holds {mass}");
    }
    for &i in &interior {
        assert!(l1(&normalized(&f.features[i]), &first) < 0.05);
    }
}

#[test]
fn rotation_leaves_descriptors_unchanged() {
    let cloud = grid(25, 0.02, |x, y| 1.0 + 0.08 * (5.0 * x).sin() * (4.0 * y).cos() + 0.1 * x * x);
    let (nr, fr) = fpfh_radii(0.02);
    let rot = Pose::from_axis_angle(Vector3::new(0.3, -0.5, 1.0), 1.1, Vector3::zeros());
    let a = compute_fpfh(&cloud, nr, fr).unwrap();
    let b = compute_fpfh(&cloud.transformed(&rot), nr, fr).unwrap();
    let worst = a
        .features
        .iter()
        .zip(&b.features)
        .map(|(x, y)| l1(&normalized(x), &normalized(y)))
        .fold(0.0, f64::max);
    assert!(worst < 0.1, "worst L1 {worst}");
}
