use instloc::geometry::{compute_fpfh, fpfh_radii, PointCloud, Pose};
use instloc::ingest::synth::{gen_synth_scene, SceneSpec};
use instloc::ingest::{build_memory, DetectionFilter, FrameSampling};
use instloc::instance_map::ClusteringConfig;
use instloc::localizer::{
    colored_icp, detect_query_objects, localize_tuples, ransac_feature_align, transform_tuples, PreparedMap,
    RegistrationConfig,
};
use nalgebra::{DMatrix, Vector3};

fn pose_error(a: &Pose, b: &Pose) -> (f64, f64) {
    ((a.translation - b.translation).norm(), a.compose(&b.inverse()).rotation_angle())
}

fn shade(p: &Vector3<f64>) -> Vector3<f64> {
    let s = 0.6 + 0.3 * (6.0 * p.x).sin() * (5.0 * p.y + 0.4).cos() + 0.1 * (7.0 * p.z).sin();
    Vector3::new(s, 0.8 * s, 0.5 + 0.4 * (3.0 * p.z).cos())
}

fn wavy_surface() -> PointCloud {
    let mut pts = Vec::new();
    for i in -20..=20 {
        for j in -15..=15 {
            let (x, y) = (i as f64 * 0.02, j as f64 * 0.02);
            pts.push(Vector3::new(x, y, 0.08 * (5.0 * x).sin() * (4.0 * y + 0.3).cos() + 0.2 * x * x - 0.1 * x * y));
        }
    }
    let colors = pts.iter().map(shade).collect();
    PointCloud::with_colors(pts, colors)
}

fn cube_faces(half: f64, step: f64) -> PointCloud {
    let n = (2.0 * half / step).round() as i64;
    let mut pts = Vec::new();
    for axis in 0..3 {
        for side in [-half, half] {
            for a in 0..=n {
                for b in 0..=n {
                    let mut p = Vector3::zeros();
                    p[axis] = side;
                    p[(axis + 1) % 3] = -half + a as f64 * step;
                    p[(axis + 2) % 3] = -half + b as f64 * step;
                    pts.push(p + Vector3::new(0.1, -0.2, 1.5));
                }
            }
        }
    }
    let colors = pts.iter().map(shade).collect();
    PointCloud::with_colors(pts, colors)
}

fn rows(h: &[[f64; 33]]) -> DMatrix<f64> {
    DMatrix::from_fn(h.len(), 33, |i, j| h[i][j])
}

#[test]
fn ransac_recovers_thirty_degrees_about_z() {
    let source = wavy_surface();
    let truth = Pose::from_axis_angle(Vector3::z(), 30f64.to_radians(), Vector3::new(1.0, 0.0, 0.0));
    let target = source.transformed(&truth);
    let (nr, fr) = fpfh_radii(0.02);
    // the same rows on both sides: features invariant by construction
    let feat = rows(&compute_fpfh(&source, nr, fr).unwrap().features);
    let config = RegistrationConfig {
        ransac_dist: 0.01,
        ..RegistrationConfig::default()
    };
    let out = ransac_feature_align(&source, &target, &feat, &feat, &config).unwrap();
    let (te, re) = pose_error(&out.pose, &truth);
    assert!(te < 1e-3 && re < 1e-3, "te {te} re {re}");
}

#[test]
fn colored_icp_converges_from_small_perturbations() {
    let target = cube_faces(0.25, 0.01);
    let config = RegistrationConfig::default();
    let dirs = [
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 1.0),
        Vector3::new(-1.0, 0.5, 0.2),
        Vector3::new(0.3, -1.0, 0.7),
    ];
    for (k, d) in dirs.iter().enumerate() {
        let axis = dirs[(k + 1) % dirs.len()];
        let init = Pose::from_axis_angle(axis, 2f64.to_radians(), d.normalize() * 0.02);
        let out = colored_icp(&target, &target, &init, &config).unwrap();
        let (te, re) = pose_error(&out.pose, &Pose::identity());
        assert!(te < 1e-3 && re < 1e-3, "perturbation {k}: te {te} re {re}");
        assert!(out.fitness > 0.99);
    }
}

#[test]
fn colored_icp_without_overlap_returns_init() {
    let target = cube_faces(0.2, 0.02);
    let init = Pose::from_axis_angle(Vector3::z(), 0.0, Vector3::new(1.0, 0.0, 0.0));
    let config = RegistrationConfig {
        icp_max_dist: 0.05,
        ..RegistrationConfig::default()
    };
    let out = colored_icp(&target, &target, &init, &config).unwrap();
    assert_eq!(out.pose, init);
    assert_eq!(out.fitness, 0.0);
}

const SCENE: &str = r#"{
  "width": 160, "height": 120, "focal": 140.0, "embedding_dim": 16,
  "random_objects": {"count": 8, "region_min": [-2.0, -2.0], "region_max": [2.0, 2.0], "size_range": [0.35, 0.8]},
  "trajectory": {"type": "orbit", "center": [0.0, 0.0, 1.4], "radius": 4.5, "frames": 240, "look_at": [0.0, 0.0, 0.3]},
  "render_every": 15
}"#;

#[test]
fn moving_the_detections_moves_the_pose() {
    let spec: SceneSpec = serde_json::from_str(SCENE).unwrap();
    let ds = gen_synth_scene(&spec, 5).unwrap();
    let frames = ds.posed_frames();
    let filter = DetectionFilter::default();
    let memory = build_memory(
        &frames,
        &ds.detections.records,
        &ClusteringConfig::default(),
        FrameSampling::MAPPING,
        &filter,
    )
    .unwrap();
    let config = RegistrationConfig::default();
    let map = PreparedMap::new(&memory, &config).unwrap();
    let records = ds.detections.by_frame();
    let query = FrameSampling::QUERY.select(&frames)[1];
    let dets = detect_query_objects(&query.without_pose(), records[query.frame_id.as_str()], &filter).unwrap();
    let base = localize_tuples(&dets, &map, &config).unwrap();
    let (te, re) = pose_error(&base.pose, &query.pose.unwrap());
    assert!(te < 0.05 && re < 0.05, "te {te} re {re}");

    let g = Pose::from_axis_angle(Vector3::new(0.2, 1.0, -0.4), 0.6, Vector3::new(0.3, -0.5, 0.8));
    let moved = localize_tuples(&transform_tuples(&dets, &g), &map, &config).unwrap();
    let expected = base.pose.compose(&g.inverse());
    let (te, re) = pose_error(&moved.pose, &expected);
    assert!(te < 0.02 && re < 0.02, "te {te} re {re}");
}

#[test]
fn relative_centroid_distances_survive_rigid_motion() {
    let a = wavy_surface();
    let b = cube_faces(0.2, 0.04);
    let g = Pose::from_axis_angle(Vector3::new(1.0, 2.0, 3.0), 2.0, Vector3::new(-4.0, 0.5, 9.0));
    let d0 = (a.centroid().unwrap() - b.centroid().unwrap()).norm();
    let d1 = (a.transformed(&g).centroid().unwrap() - b.transformed(&g).centroid().unwrap()).norm();
    assert!((d0 - d1).abs() < 1e-12);
}
