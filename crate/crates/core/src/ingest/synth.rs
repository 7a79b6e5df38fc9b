//! Procedural RGB-D scenes for end-to-end checks.
//!
//! A scene is a set of analytic primitives (boxes, spheres, vertical
//! cylinders) with flat base colors, a checker texture and per-object
//! embeddings. Each camera pose is rendered by casting one ray per pixel;
//! the nearest hit provides color, depth and the object mask. Output mirrors
//! the TUM layout so it can be consumed like a recorded sequence.

use std::path::Path;
use std::sync::Arc;

use image::{Rgb, RgbImage};
use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    BBox, Detection, DetectionFile, DetectionHeader, DetectionRecord, FrameImages, PosedFrame, RgbdImage,
};
use crate::geometry::{CameraIntrinsics, DepthImage, Mask, Pose};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Box { half_extents: [f64; 3] },
    Sphere { radius: f64 },
    /// Cylinder with its axis along world z.
    Cylinder { radius: f64, half_height: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSpec {
    #[serde(flatten)]
    pub shape: Shape,
    pub center: [f64; 3],
    /// Rotation about world z, radians.
    #[serde(default)]
    pub yaw: f64,
    /// Base color in `[0, 1]`.
    pub color: [f64; 3],
    pub caption: String,
    /// Embedding reported for every detection of this object; drawn at
    /// random when absent.
    #[serde(default)]
    pub embedding: Option<Vec<f64>>,
}

/// Random object layout, generated from the scene seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomObjects {
    pub count: usize,
    /// Object centers are drawn in this xy box, objects rest on z = 0.
    pub region_min: [f64; 2],
    pub region_max: [f64; 2],
    /// Characteristic object size range (meters).
    pub size_range: [f64; 2],
    /// Extra clearance between bounding spheres (meters).
    #[serde(default = "default_clearance")]
    pub clearance: f64,
}

fn default_clearance() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPlacement {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Trajectory {
    /// `frames` poses evenly spaced on a circle around `center`, all looking
    /// at `look_at`.
    Orbit {
        center: [f64; 3],
        radius: f64,
        frames: usize,
        look_at: [f64; 3],
        #[serde(default = "one")]
        turns: f64,
        /// Radial oscillation amplitude (meters), two periods per turn.
        #[serde(default)]
        radius_wobble: f64,
    },
    Poses { poses: Vec<CameraPlacement> },
}

fn one() -> f64 {
    1.0
}

fn d_width() -> u32 {
    160
}
fn d_height() -> u32 {
    120
}
fn d_focal() -> f64 {
    140.0
}
fn d_depth_scale() -> f64 {
    5000.0
}
fn d_dim() -> usize {
    16
}
fn d_texture() -> f64 {
    0.15
}
fn d_min_pixels() -> usize {
    30
}
fn d_rate() -> f64 {
    30.0
}
fn d_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default = "d_width")]
    pub width: u32,
    #[serde(default = "d_height")]
    pub height: u32,
    #[serde(default = "d_focal")]
    pub focal: f64,
    #[serde(default = "d_depth_scale")]
    pub depth_scale: f64,
    #[serde(default = "d_dim")]
    pub embedding_dim: usize,
    #[serde(default)]
    pub objects: Vec<PrimitiveSpec>,
    #[serde(default)]
    pub random_objects: Option<RandomObjects>,
    pub trajectory: Trajectory,
    /// Checker cell size on object surfaces (meters); 0 disables texture.
    #[serde(default = "d_texture")]
    pub texture_scale: f64,
    /// Gaussian depth noise (meters).
    #[serde(default)]
    pub depth_noise_std: f64,
    /// Objects with fewer visible pixels are not reported as detections.
    #[serde(default = "d_min_pixels")]
    pub min_mask_pixels: usize,
    #[serde(default = "d_rate")]
    pub frame_rate: f64,
    /// Only frames whose index is a multiple of this are rendered. Frame
    /// indices and timestamps keep their trajectory positions.
    #[serde(default = "d_every")]
    pub render_every: usize,
}

impl SceneSpec {
    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            fx: self.focal,
            fy: self.focal,
            cx: (self.width as f64 - 1.0) / 2.0,
            cy: (self.height as f64 - 1.0) / 2.0,
            width: self.width,
            height: self.height,
            depth_scale: self.depth_scale,
            max_depth: 10.0,
        }
    }
}

/// A resolved scene object.
#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub center: Vector3<f64>,
    pub yaw: f64,
    pub color: Vector3<f64>,
    pub caption: String,
    pub embedding: Vec<f64>,
}

impl Primitive {
    fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), -self.yaw) * (p - self.center)
    }

    fn dir_to_local(&self, d: &Vector3<f64>) -> Vector3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), -self.yaw) * d
    }

    /// Signed distance from `p` to the surface (negative inside).
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        let l = self.to_local(p);
        match &self.shape {
            Shape::Sphere { radius } => l.norm() - radius,
            Shape::Box { half_extents } => {
                let q = l.abs() - Vector3::from(*half_extents);
                q.sup(&Vector3::zeros()).norm() + q.max().min(0.0)
            }
            Shape::Cylinder { radius, half_height } => {
                let dr = (l.x * l.x + l.y * l.y).sqrt() - radius;
                let dz = l.z.abs() - half_height;
                let outside = (dr.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt();
                outside + dr.max(dz).min(0.0)
            }
        }
    }

    /// Radius of a bounding sphere around the center.
    pub fn bounding_radius(&self) -> f64 {
        match &self.shape {
            Shape::Sphere { radius } => *radius,
            Shape::Box { half_extents } => Vector3::from(*half_extents).norm(),
            Shape::Cylinder { radius, half_height } => (radius * radius + half_height * half_height).sqrt(),
        }
    }

    /// Smallest ray parameter `t > 1e-9` where `origin + t·dir` hits the surface.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let o = self.to_local(origin);
        let d = self.dir_to_local(dir);
        const EPS: f64 = 1e-9;
        match &self.shape {
            Shape::Sphere { radius } => {
                let a = d.norm_squared();
                let b = o.dot(&d);
                let c = o.norm_squared() - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                [(-b - s) / a, (-b + s) / a].into_iter().find(|&t| t > EPS)
            }
            Shape::Box { half_extents } => {
                let (mut tmin, mut tmax) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    let h = half_extents[k];
                    if d[k].abs() < 1e-15 {
                        if o[k].abs() > h {
                            return None;
                        }
                    } else {
                        let t1 = (-h - o[k]) / d[k];
                        let t2 = (h - o[k]) / d[k];
                        tmin = tmin.max(t1.min(t2));
                        tmax = tmax.min(t1.max(t2));
                    }
                }
                if tmax < tmin {
                    return None;
                }
                [tmin, tmax].into_iter().find(|&t| t > EPS)
            }
            Shape::Cylinder { radius, half_height } => {
                let mut best: Option<f64> = None;
                let mut consider = |t: f64| {
                    if t > EPS && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                };
                let a = d.x * d.x + d.y * d.y;
                if a > 1e-15 {
                    let b = o.x * d.x + o.y * d.y;
                    let c = o.x * o.x + o.y * o.y - radius * radius;
                    let disc = b * b - a * c;
                    if disc >= 0.0 {
                        let s = disc.sqrt();
                        for t in [(-b - s) / a, (-b + s) / a] {
                            if (o.z + t * d.z).abs() <= *half_height {
                                consider(t);
                            }
                        }
                    }
                }
                if d.z.abs() > 1e-15 {
                    for zc in [-half_height, *half_height] {
                        let t = (zc - o.z) / d.z;
                        let (x, y) = (o.x + t * d.x, o.y + t * d.y);
                        if x * x + y * y <= radius * radius {
                            consider(t);
                        }
                    }
                }
                best
            }
        }
    }

    fn shade(&self, p: &Vector3<f64>, texture_scale: f64) -> Vector3<f64> {
        if texture_scale <= 0.0 {
            return self.color;
        }
        let l = self.to_local(p) / texture_scale;
        let parity = (l.x.floor() + l.y.floor() + l.z.floor()).rem_euclid(2.0);
        if parity < 0.5 {
            self.color
        } else {
            self.color * 0.6
        }
    }
}

/// Camera-to-world pose at `position` looking at `target`, with image `y`
/// pointing toward world `-z` (OpenCV camera axes, z-up world).
pub fn look_at(position: Vector3<f64>, target: Vector3<f64>) -> Result<Pose> {
    let z = target - position;
    if z.norm() < 1e-9 {
        return Err(Error::invalid("camera position equals its look-at target"));
    }
    let z = z.normalize();
    let x = z.cross(&Vector3::z());
    if x.norm() < 1e-9 {
        return Err(Error::invalid("camera looks straight up or down"));
    }
    let x = x.normalize();
    let y = z.cross(&x);
    Ok(Pose {
        rotation: Matrix3::from_columns(&[x, y, z]),
        translation: position,
    })
}

fn hue_color(h: f64) -> Vector3<f64> {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let x = 1.0 - (h6 % 2.0 - 1.0).abs();
    let (r, g, b) = match h6 as usize {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    Vector3::new(0.15 + 0.8 * r, 0.15 + 0.8 * g, 0.15 + 0.8 * b)
}

/// Unit-norm Gaussian vector.
pub fn random_embedding(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).unwrap();
    let v: Vec<f64> = (0..dim).map(|_| n.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / norm).collect()
}

const CAPTIONS: [&str; 10] = [
    "chair", "table", "lamp", "box", "ball", "bin", "stool", "vase", "crate", "drum",
];

/// Resolves explicit and random objects; deterministic in `seed`.
pub fn resolve_objects(spec: &SceneSpec, seed: u64) -> Result<Vec<Primitive>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Primitive> = Vec::new();
    for o in &spec.objects {
        let embedding = match &o.embedding {
            Some(e) if e.len() == spec.embedding_dim => e.clone(),
            Some(e) => {
                return Err(Error::invalid(format!(
                    "object {:?} embedding has dimension {}, scene declares {}",
                    o.caption,
                    e.len(),
                    spec.embedding_dim
                )))
            }
            None => random_embedding(&mut rng, spec.embedding_dim),
        };
        out.push(Primitive {
            shape: o.shape.clone(),
            center: Vector3::from(o.center),
            yaw: o.yaw,
            color: Vector3::from(o.color),
            caption: o.caption.clone(),
            embedding,
        });
    }
    if let Some(r) = &spec.random_objects {
        let mut hues: Vec<f64> = (0..r.count).map(|i| i as f64 / r.count.max(1) as f64).collect();
        hues.shuffle(&mut rng);
        for (k, hue) in hues.into_iter().enumerate() {
            let mut placed = None;
            for _ in 0..1000 {
                let s = rng.random_range(r.size_range[0]..=r.size_range[1]);
                let shape = match rng.random_range(0..3) {
                    0 => Shape::Box {
                        half_extents: [
                            s * rng.random_range(0.35..0.6),
                            s * rng.random_range(0.35..0.6),
                            s * rng.random_range(0.35..0.7),
                        ],
                    },
                    1 => Shape::Sphere { radius: s * 0.5 },
                    _ => Shape::Cylinder {
                        radius: s * rng.random_range(0.3..0.5),
                        half_height: s * rng.random_range(0.4..0.7),
                    },
                };
                let half_z = match &shape {
                    Shape::Box { half_extents } => half_extents[2],
                    Shape::Sphere { radius } => *radius,
                    Shape::Cylinder { half_height, .. } => *half_height,
                };
                let center = Vector3::new(
                    rng.random_range(r.region_min[0]..=r.region_max[0]),
                    rng.random_range(r.region_min[1]..=r.region_max[1]),
                    half_z,
                );
                let cand = Primitive {
                    shape,
                    center,
                    yaw: rng.random_range(0.0..std::f64::consts::PI),
                    color: hue_color(hue),
                    caption: CAPTIONS[k % CAPTIONS.len()].to_string(),
                    embedding: Vec::new(),
                };
                let clear = out.iter().all(|o| {
                    (o.center - cand.center).norm() > o.bounding_radius() + cand.bounding_radius() + r.clearance
                });
                if clear {
                    placed = Some(cand);
                    break;
                }
            }
            let mut p = placed.ok_or_else(|| Error::invalid("could not place random objects without overlap"))?;
            p.embedding = random_embedding(&mut rng, spec.embedding_dim);
            out.push(p);
        }
    }
    Ok(out)
}

/// Camera-to-world poses of every trajectory index.
pub fn resolve_trajectory(traj: &Trajectory) -> Result<Vec<Pose>> {
    match traj {
        Trajectory::Orbit {
            center,
            radius,
            frames,
            look_at: target,
            turns,
            radius_wobble,
        } => (0..*frames)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * turns * i as f64 / *frames as f64;
                let r = radius + radius_wobble * (2.0 * th).sin();
                let pos = Vector3::from(*center) + Vector3::new(r * th.cos(), r * th.sin(), 0.0);
                look_at(pos, Vector3::from(*target))
            })
            .collect(),
        Trajectory::Poses { poses } => poses
            .iter()
            .map(|c| look_at(Vector3::from(c.position), Vector3::from(c.look_at)))
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct SynthFrame {
    pub index: usize,
    pub timestamp: f64,
    pub pose: Pose,
    pub image: Arc<RgbdImage>,
    /// Per-object masks, indexed like [`SynthDataset::objects`].
    pub masks: Vec<Option<Mask>>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub intrinsics: CameraIntrinsics,
    pub objects: Vec<Primitive>,
    pub frames: Vec<SynthFrame>,
    /// Trajectory indices skipped because the camera was inside an object.
    pub skipped: Vec<usize>,
    pub detections: DetectionFile,
}

pub const SYNTH_PRODUCER: &str = "instloc-synth";

pub fn frame_id(index: usize) -> String {
    format!("{index:06}")
}

fn render_frame(
    spec: &SceneSpec,
    k: &CameraIntrinsics,
    objects: &[Primitive],
    pose: &Pose,
    rng: &mut ChaCha8Rng,
) -> (RgbdImage, Vec<Option<Mask>>) {
    let (w, h) = (k.width, k.height);
    let mut rgb = RgbImage::new(w, h);
    let mut depth = DepthImage::new(w, h);
    let mut masks: Vec<Mask> = objects.iter().map(|_| Mask::new(w, h)).collect();
    let noise = (spec.depth_noise_std > 0.0).then(|| Normal::new(0.0, spec.depth_noise_std).unwrap());
    let origin = pose.translation;
    for v in 0..h {
        for u in 0..w {
            let d_cam = Vector3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
            let d = pose.transform_vector(&d_cam);
            let hit = objects
                .iter()
                .enumerate()
                .filter_map(|(i, o)| o.intersect(&origin, &d).map(|t| (t, i)))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let Some((t, i)) = hit else { continue };
            let mut z = t;
            if let Some(n) = &noise {
                z += n.sample(rng);
            }
            let raw = (z * k.depth_scale).round();
            if z > k.max_depth || !(1.0..=65535.0).contains(&raw) {
                continue;
            }
            depth.put_pixel(u, v, image::Luma([raw as u16]));
            let c = objects[i].shade(&(origin + d * t), spec.texture_scale);
            let q = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
            rgb.put_pixel(u, v, Rgb([q(c.x), q(c.y), q(c.z)]));
            masks[i].set(u, v, true);
        }
    }
    let masks = masks
        .into_iter()
        .map(|m| (m.count() >= spec.min_mask_pixels).then_some(m))
        .collect();
    (RgbdImage { rgb, depth }, masks)
}

/// Renders a scene; identical `(spec, seed)` give identical output.
pub fn gen_synth_scene(spec: &SceneSpec, seed: u64) -> Result<SynthDataset> {
    let k = spec.intrinsics();
    k.validate()?;
    if spec.embedding_dim == 0 {
        return Err(Error::invalid("embedding_dim must be positive"));
    }
    let objects = resolve_objects(spec, seed)?;
    let poses = resolve_trajectory(&spec.trajectory)?;
    let every = spec.render_every.max(1);
    let rendered: Vec<std::result::Result<SynthFrame, usize>> = poses
        .par_iter()
        .enumerate()
        .filter(|(i, _)| i % every == 0)
        .map(|(i, pose)| {
            if objects.iter().any(|o| o.signed_distance(&pose.translation) <= 0.0) {
                log::warn!("frame {i}: camera inside an object, skipped");
                return Err(i);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let (image, masks) = render_frame(spec, &k, &objects, pose, &mut rng);
            Ok(SynthFrame {
                index: i,
                timestamp: i as f64 / spec.frame_rate,
                pose: *pose,
                image: Arc::new(image),
                masks,
            })
        })
        .collect();
    let mut frames = Vec::new();
    let mut skipped = Vec::new();
    for r in rendered {
        match r {
            Ok(f) => frames.push(f),
            Err(i) => skipped.push(i),
        }
    }
    let records = frames
        .iter()
        .map(|f| DetectionRecord {
            frame_id: frame_id(f.index),
            detections: f
                .masks
                .iter()
                .enumerate()
                .filter_map(|(i, m)| {
                    let m = m.as_ref()?;
                    let [x0, y0, x1, y1] = m.bounding_box()?;
                    Some(Detection {
                        caption: objects[i].caption.clone(),
                        bbox: BBox::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64),
                        mask: m.clone(),
                        embedding: objects[i].embedding.clone(),
                        score: 1.0,
                    })
                })
                .collect(),
        })
        .collect();
    Ok(SynthDataset {
        intrinsics: k,
        objects,
        frames,
        skipped,
        detections: DetectionFile {
            header: DetectionHeader {
                embedding_dim: spec.embedding_dim,
                producer: SYNTH_PRODUCER.into(),
                version: env!("CARGO_PKG_VERSION").into(),
                width: k.width,
                height: k.height,
            },
            records,
        },
    })
}

impl SynthDataset {
    /// Frames as posed in-memory frames.
    pub fn posed_frames(&self) -> Vec<PosedFrame> {
        self.frames
            .iter()
            .map(|f| PosedFrame {
                frame_id: frame_id(f.index),
                index: f.index,
                timestamp: f.timestamp,
                pose: Some(f.pose),
                intrinsics: self.intrinsics,
                images: FrameImages::Loaded(f.image.clone()),
            })
            .collect()
    }

    /// Writes the TUM-style layout: `rgb/`, `depth/` (16-bit PNG),
    /// `rgb.txt`, `depth.txt`, `groundtruth.txt`, `intrinsics.json` and
    /// `detections.jsonl`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        use std::fmt::Write as _;
        for sub in ["rgb", "depth"] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        let mut rgb_txt = String::from("# color images\n# timestamp filename\n");
        let mut depth_txt = String::from("# depth maps\n# timestamp filename\n");
        for f in &self.frames {
            let id = frame_id(f.index);
            let rp = dir.join(format!("rgb/{id}.png"));
            f.image.rgb.save(&rp).map_err(|source| Error::Image { path: rp.clone(), source })?;
            let dp = dir.join(format!("depth/{id}.png"));
            f.image.depth.save(&dp).map_err(|source| Error::Image { path: dp.clone(), source })?;
            writeln!(rgb_txt, "{:.6} rgb/{id}.png", f.timestamp).unwrap();
            writeln!(depth_txt, "{:.6} depth/{id}.png", f.timestamp).unwrap();
        }
        let write = |name: &str, body: &[u8]| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
        };
        write("rgb.txt", rgb_txt.as_bytes())?;
        write("depth.txt", depth_txt.as_bytes())?;
        let mut gt = Vec::new();
        let poses: Vec<(f64, Pose)> = self.frames.iter().map(|f| (f.timestamp, f.pose)).collect();
        super::tum::write_trajectory(&mut gt, &poses).expect("in-memory write");
        write("groundtruth.txt", &gt)?;
        write(
            "intrinsics.json",
            serde_json::to_string_pretty(&self.intrinsics).expect("intrinsics serialize").as_bytes(),
        )?;
        super::save_detections(&dir.join("detections.jsonl"), &self.detections)
    }
}

/// Parses a dataset written by [`SynthDataset::write`]. Frame indices come
/// from the numeric frame ids, so stride sampling sees trajectory positions.
pub fn parse_synth_sequence(dir: &Path, with_groundtruth: bool) -> Result<Vec<PosedFrame>> {
    let k = super::tum::dataset_intrinsics(dir)?;
    let mut frames = super::tum::parse_tum_frames(dir, 1e-3, k, with_groundtruth)?;
    for f in &mut frames {
        f.index = f.frame_id.parse().map_err(|_| {
            Error::format(dir.join("rgb.txt"), format!("frame id {:?} is not an index", f.frame_id))
        })?;
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_sphere() -> SceneSpec {
        SceneSpec {
            width: 64,
            height: 48,
            focal: 60.0,
            depth_scale: 5000.0,
            embedding_dim: 4,
            objects: vec![PrimitiveSpec {
                shape: Shape::Sphere { radius: 1.0 },
                center: [2.0, 0.0, 0.0],
                yaw: 0.0,
                color: [0.9, 0.1, 0.1],
                caption: "ball".into(),
                embedding: Some(vec![1.0, 0.0, 0.0, 0.0]),
            }],
            random_objects: None,
            trajectory: Trajectory::Poses {
                poses: vec![CameraPlacement {
                    position: [0.0, 0.0, 0.0],
                    look_at: [1.0, 0.0, 0.0],
                }],
            },
            texture_scale: 0.0,
            depth_noise_std: 0.0,
            min_mask_pixels: 1,
            frame_rate: 30.0,
            render_every: 1,
        }
    }

    #[test]
    fn sphere_on_axis() {
        let ds = gen_synth_scene(&one_sphere(), 0).unwrap();
        let f = &ds.frames[0];
        let m = f.masks[0].as_ref().unwrap();
        let n = m.count() as f64;
        let (su, sv) = m.iter_set().fold((0.0, 0.0), |(a, b), (u, v)| (a + u as f64, b + v as f64));
        assert!((su / n - ds.intrinsics.cx).abs() < 1e-9);
        assert!((sv / n - ds.intrinsics.cy).abs() < 1e-9);
        let min_raw = m.iter_set().map(|(u, v)| f.image.depth.get_pixel(u, v)[0]).min().unwrap();
        assert!((min_raw as i32 - 5000).abs() <= 1, "{min_raw}");
    }

    #[test]
    fn camera_inside_is_skipped() {
        let mut s = one_sphere();
        s.trajectory = Trajectory::Poses {
            poses: vec![CameraPlacement {
                position: [2.0, 0.0, 0.0],
                look_at: [3.0, 0.0, 0.0],
            }],
        };
        let ds = gen_synth_scene(&s, 0).unwrap();
        assert!(ds.frames.is_empty());
        assert_eq!(ds.skipped, vec![0]);
    }

    #[test]
    fn look_at_axes() {
        let p = look_at(Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)).unwrap();
        assert!((p.rotation.column(0) - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
        assert!((p.rotation.column(1) - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert!(p.is_valid(1e-12));
    }

    #[test]
    fn sdf_and_intersection_agree() {
        let shapes = [
            Shape::Box { half_extents: [0.3, 0.2, 0.4] },
            Shape::Sphere { radius: 0.5 },
            Shape::Cylinder { radius: 0.3, half_height: 0.5 },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for shape in shapes {
            let p = Primitive {
                shape,
                center: Vector3::new(0.1, -0.2, 0.3),
                yaw: 0.7,
                color: Vector3::repeat(0.5),
                caption: "x".into(),
                embedding: vec![],
            };
            for _ in 0..200 {
                let o = Vector3::new(3.0, rng.random_range(-0.5..0.5), rng.random_range(-0.3..0.9));
                let d = (p.center - o + Vector3::new(0.0, rng.random_range(-0.3..0.3), 0.0)).normalize();
                if let Some(t) = p.intersect(&o, &d) {
                    assert!(p.signed_distance(&(o + d * t)).abs() < 1e-9);
                }
            }
        }
    }
}
