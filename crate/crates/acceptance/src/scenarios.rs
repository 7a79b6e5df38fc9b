use std::time::{Duration, Instant};

use instloc::eval::{evaluate_predictions, EvalReport, EvalThresholds};
use instloc::geometry::{PointCloud, Pose};
use instloc::ingest::synth::{gen_synth_scene, SceneSpec, SynthDataset};
use instloc::ingest::{build_memory, DetectionFilter, FrameSampling};
use instloc::instance_map::{l2, ClusteringConfig, MemoryMeta, ObjectId, ObjectInfoTuple, ObjectMemory};
use instloc::localizer::{colored_icp, localize_frames, ransac_feature_align, Prediction, PreparedMap, RegistrationCloud, RegistrationConfig};
use instloc::Result;
use nalgebra::{DMatrix, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use crate::oracles::RefTuple;

/// Ten random primitives seen from a 600-frame orbit; every 15th frame is
/// rendered, so the mapping stride of 30 yields 20 frames.
pub const DESK_SCENE: &str = r#"{
  "width": 160,
  "height": 120,
  "focal": 140.0,
  "embedding_dim": 16,
  "random_objects": {
    "count": 10,
    "region_min": [-2.2, -2.2],
    "region_max": [2.2, 2.2],
    "size_range": [0.35, 0.8]
  },
  "trajectory": {
    "type": "orbit",
    "center": [0.0, 0.0, 1.4],
    "radius": 4.5,
    "frames": 600,
    "look_at": [0.0, 0.0, 0.3]
  },
  "render_every": 15
}"#;

pub fn desk_scene() -> SceneSpec {
    serde_json::from_str(DESK_SCENE).expect("scene literal parses")
}

pub const MAPPING: FrameSampling = FrameSampling::MAPPING;
/// Ten queries half-way between mapping frames.
pub const HELD_OUT: FrameSampling = FrameSampling { stride: 60, offset: 15 };

#[derive(Debug, Clone)]
pub struct SyntheticRun {
    pub mapping_frames: usize,
    pub map_objects: usize,
    pub predictions: Vec<Prediction>,
    pub report: EvalReport,
    pub query_detections: usize,
    /// Query detections whose nearest map object (by embedding) is wrong.
    pub misled_detections: usize,
    pub elapsed: Duration,
}

/// Replaces the embedding of `fraction` of each query frame's detections
/// with another object's embedding.
fn corrupt(ds: &mut SynthDataset, queries: &[String], fraction: f64, rng: &mut ChaCha8Rng) {
    let embeddings: Vec<Vec<f64>> = ds.objects.iter().map(|o| o.embedding.clone()).collect();
    for r in ds.detections.records.iter_mut().filter(|r| queries.contains(&r.frame_id)) {
        let n = r.detections.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        for &i in idx.iter().take((fraction * n as f64).round() as usize) {
            let d = &mut r.detections[i];
            let own = embeddings.iter().position(|e| *e == d.embedding).expect("synthetic embedding");
            let mut other = rng.random_range(0..embeddings.len() - 1);
            if other >= own {
                other += 1;
            }
            d.embedding = embeddings[other].clone();
        }
    }
}

fn nearest_object(memory: &ObjectMemory, e: &[f64]) -> usize {
    let d: Vec<f64> = memory.objects.iter().map(|o| l2(&o.mean_embedding(), e)).collect();
    (0..d.len()).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap_or(0)
}

/// Renders the desk scene, maps it, localizes the held-out queries and
/// scores them at the default thresholds.
pub fn run_synthetic(seed: u64, k_best: usize, corrupt_fraction: f64) -> Result<SyntheticRun> {
    let start = Instant::now();
    let spec = desk_scene();
    let mut ds = gen_synth_scene(&spec, seed)?;
    let frames = ds.posed_frames();
    let query_frames = HELD_OUT.select(&frames);
    let query_ids: Vec<String> = query_frames.iter().map(|f| f.frame_id.clone()).collect();
    let clean = ds.detections.clone();
    if corrupt_fraction > 0.0 {
        corrupt(&mut ds, &query_ids, corrupt_fraction, &mut ChaCha8Rng::seed_from_u64(seed ^ 0xc0ffee));
    }
    let filter = DetectionFilter::default();
    let memory = build_memory(&frames, &ds.detections.records, &ClusteringConfig::default(), MAPPING, &filter)?;

    let mut query_detections = 0;
    let mut misled = 0;
    for (a, b) in clean.records.iter().zip(&ds.detections.records) {
        if !query_ids.contains(&a.frame_id) {
            continue;
        }
        for (da, db) in a.detections.iter().zip(&b.detections) {
            query_detections += 1;
            if nearest_object(&memory, &da.embedding) != nearest_object(&memory, &db.embedding) {
                misled += 1;
            }
        }
    }

    let config = RegistrationConfig {
        k_best,
        ..RegistrationConfig::default()
    };
    let map = PreparedMap::new(&memory, &config)?;
    let predictions = localize_frames(&query_frames, &ds.detections.records, &map, &filter, &config);
    let truth: Vec<(f64, Pose)> = frames.iter().filter_map(|f| f.pose.map(|p| (f.timestamp, p))).collect();
    let report = evaluate_predictions(&predictions, &truth, EvalThresholds::default(), 1e-6)?;
    Ok(SyntheticRun {
        mapping_frames: MAPPING.select(&frames).len(),
        map_objects: memory.len(),
        predictions,
        report,
        query_detections,
        misled_detections: misled,
        elapsed: start.elapsed(),
    })
}

fn box_surface(center: Vector3<f64>, half: Vector3<f64>, color: Vector3<f64>, step: f64) -> PointCloud {
    let mut points = Vec::new();
    let mut colors = Vec::new();
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let nu = (2.0 * half[u] / step).round() as i64;
        let nv = (2.0 * half[v] / step).round() as i64;
        for side in [-1.0, 1.0] {
            for a in 0..=nu {
                for b in 0..=nv {
                    let mut p = Vector3::zeros();
                    p[axis] = side * half[axis];
                    p[u] = -half[u] + a as f64 * step;
                    p[v] = -half[v] + b as f64 * step;
                    let p = p + center;
                    // smooth shading survives voxel averaging; a fine
                    // checker would alias differently in each cloud
                    let shade = 0.7 + 0.3 * (p.x * 9.0 + 0.5).sin() * (p.y * 7.0 - 0.3).cos() + 0.05 * (p.z * 11.0).sin();
                    points.push(p);
                    colors.push(color * shade);
                }
            }
        }
    }
    PointCloud::with_colors(points, colors)
}

/// Three differently sized, coloured and textured boxes in an asymmetric
/// arrangement, sampled densely on their surfaces.
pub fn registration_target() -> PointCloud {
    let parts = [
        box_surface(Vector3::new(0.0, 0.0, 0.2), Vector3::new(0.3, 0.2, 0.2), Vector3::new(0.9, 0.3, 0.2), 0.01),
        box_surface(Vector3::new(0.7, 0.1, 0.1), Vector3::new(0.12, 0.25, 0.1), Vector3::new(0.2, 0.7, 0.3), 0.01),
        box_surface(Vector3::new(-0.2, 0.6, 0.3), Vector3::new(0.15, 0.15, 0.3), Vector3::new(0.2, 0.3, 0.9), 0.01),
    ];
    PointCloud::concat(parts.iter())
}

pub fn random_rigid(rng: &mut impl Rng) -> Pose {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let angle = rng.random_range(0.0..std::f64::consts::PI);
    let t = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    Pose::from_axis_angle(Vector3::from(axis), angle, t)
}

fn features(r: &RegistrationCloud) -> DMatrix<f64> {
    DMatrix::from_fn(r.fpfh.len(), r.fpfh.first().map_or(0, |h| h.len()), |i, j| r.fpfh[i][j])
}

#[derive(Debug, Clone, Copy)]
pub struct RegistrationTrial {
    pub te: f64,
    pub re: f64,
    pub fitness: f64,
}

/// Moves the target by a random rigid transform and registers it back with
/// feature RANSAC followed by colored ICP.
pub fn registration_trial(target: &PointCloud, seed: u64) -> Result<RegistrationTrial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let moved = random_rigid(&mut rng);
    let config = RegistrationConfig {
        seed,
        ..RegistrationConfig::default()
    };
    let src = RegistrationCloud::new(&target.transformed(&moved), config.voxel)?;
    let dst = RegistrationCloud::new(target, config.voxel)?;
    let coarse = ransac_feature_align(&src.cloud, &dst.cloud, &features(&src), &features(&dst), &config)?;
    let fine = colored_icp(&src.cloud, &dst.cloud, &coarse.pose, &config)?;
    let truth = moved.inverse();
    Ok(RegistrationTrial {
        te: (fine.pose.translation - truth.translation).norm(),
        re: fine.pose.compose(&truth.inverse()).rotation_angle(),
        fitness: fine.fitness,
    })
}

/// A random memory of at most `max_tuples` tuples: a few box-shaped
/// objects, some sharing an appearance, observed partially with noisy
/// embeddings. Returns the library memory and the same data for the
/// reference.
pub fn random_memory(rng: &mut impl Rng, max_tuples: usize) -> Result<(ObjectMemory, Vec<RefTuple>)> {
    let dim = 8;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let appearances: Vec<Vec<f64>> = (0..rng.random_range(1..=3))
        .map(|_| (0..dim).map(|_| unit.sample(rng)).collect())
        .collect();
    let objects: Vec<(Vector3<f64>, Vector3<f64>, usize)> = (0..rng.random_range(2..=5))
        .map(|_| {
            let c = Vector3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), 0.0);
            let h = Vector3::new(rng.random_range(0.1..0.3), rng.random_range(0.1..0.3), rng.random_range(0.1..0.3));
            (c, h, rng.random_range(0..appearances.len()))
        })
        .collect();
    let n = rng.random_range(3..=max_tuples);
    let mut lib = Vec::with_capacity(n);
    let mut refs = Vec::with_capacity(n);
    for i in 0..n {
        let (c, h, a) = objects[rng.random_range(0..objects.len())];
        // a random sub-box stands for a partial view
        let lo = Vector3::from_fn(|k, _| rng.random_range(-h[k]..0.3 * h[k]));
        let hi = Vector3::from_fn(|k, _| rng.random_range(lo[k] + 0.2 * h[k]..=h[k]));
        let points: Vec<Vector3<f64>> = (0..rng.random_range(20..60))
            .map(|_| c + Vector3::from_fn(|k, _| rng.random_range(lo[k]..hi[k])))
            .collect();
        let noise = if rng.random_bool(0.2) { 0.5 } else { 0.05 };
        let embedding: Vec<f64> = appearances[a].iter().map(|v| v + noise * unit.sample(rng)).collect();
        refs.push(RefTuple {
            points: points.clone(),
            embeddings: vec![embedding.clone()],
        });
        lib.push(ObjectInfoTuple::new(ObjectId(i as u64), PointCloud::new(points), vec![embedding])?);
    }
    let memory = ObjectMemory::new(
        lib,
        MemoryMeta {
            embedding_dim: dim,
            clustering: None,
            stride: None,
        },
    )?;
    Ok((memory, refs))
}
