use image::{ImageBuffer, Luma, RgbImage};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{Mask, PointCloud, Pose};
use crate::{Error, Result};

/// 16-bit depth image in raw sensor units.
pub type DepthImage = ImageBuffer<Luma<u16>, Vec<u16>>;

fn default_max_depth() -> f64 {
    10.0
}

/// Pinhole camera model. `depth_scale` is raw depth units per meter
/// (5000 for TUM-style data).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub depth_scale: f64,
    /// Depths beyond this range (meters) are treated as invalid.
    #[serde(default = "default_max_depth")]
    pub max_depth: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32, depth_scale: f64) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            depth_scale,
            max_depth: default_max_depth(),
        };
        k.validate()?;
        Ok(k)
    }

    /// Default calibration used for TUM RGB-D sequences without an
    /// `intrinsics.json`.
    pub fn tum_default() -> Self {
        Self {
            fx: 525.0,
            fy: 525.0,
            cx: 319.5,
            cy: 239.5,
            width: 640,
            height: 480,
            depth_scale: 5000.0,
            max_depth: default_max_depth(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.depth_scale > 0.0
            && self.max_depth > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid camera intrinsics {self:?}")))
        }
    }

    /// Camera-frame point for pixel `(u, v)` at metric depth `z`.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Pixel coordinates of a camera-frame point in front of the camera.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Raw depth value to meters, `None` for missing or out-of-range readings.
    #[inline]
    pub fn depth_to_meters(&self, raw: u16) -> Option<f64> {
        if raw == 0 {
            return None;
        }
        let z = raw as f64 / self.depth_scale;
        (z <= self.max_depth).then_some(z)
    }
}

/// Lifts the masked pixels of an RGB-D pair into `pose`'s frame.
///
/// Pixels with zero or out-of-range depth are skipped, so an all-invalid mask
/// yields an empty cloud. Colors are scaled to `[0, 1]`.
pub fn backproject(
    rgb: &RgbImage,
    depth: &DepthImage,
    mask: &Mask,
    intrinsics: &CameraIntrinsics,
    pose: &Pose,
) -> Result<PointCloud> {
    let (w, h) = (intrinsics.width, intrinsics.height);
    if rgb.dimensions() != (w, h) || depth.dimensions() != (w, h) || mask.dimensions() != (w, h) {
        return Err(Error::invalid(format!(
            "image size mismatch: rgb {:?}, depth {:?}, mask {:?}, intrinsics {}x{}",
            rgb.dimensions(),
            depth.dimensions(),
            mask.dimensions(),
            w,
            h
        )));
    }
    let mut points = Vec::new();
    let mut colors = Vec::new();
    for (u, v) in mask.iter_set() {
        let Some(z) = intrinsics.depth_to_meters(depth.get_pixel(u, v)[0]) else {
            continue;
        };
        let p = intrinsics.unproject(u as f64, v as f64, z);
        points.push(pose.transform_point(&p));
        let c = rgb.get_pixel(u, v).0;
        colors.push(Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64) / 255.0);
    }
    Ok(PointCloud::with_colors(points, colors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 4.0, 3.0, 8, 6, 1000.0).unwrap()
    }

    fn single_pixel(u: u32, v: u32, raw: u16) -> (RgbImage, DepthImage, Mask) {
        let rgb = RgbImage::from_pixel(8, 6, image::Rgb([255, 0, 0]));
        let mut depth = DepthImage::new(8, 6);
        depth.put_pixel(u, v, Luma([raw]));
        let mut mask = Mask::new(8, 6);
        mask.set(u, v, true);
        (rgb, depth, mask)
    }

    #[test]
    fn principal_point_ray() {
        let (rgb, depth, mask) = single_pixel(4, 3, 2000);
        let c = backproject(&rgb, &depth, &mask, &k(), &Pose::identity()).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c.points[0] - Vector3::new(0.0, 0.0, 2.0)).norm() < 1e-12);
        assert!((c.color(0).unwrap() - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn one_focal_length_off_axis() {
        // u = cx + fx is off-image for this tiny camera, so widen it.
        let k = CameraIntrinsics::new(2.0, 2.0, 1.0, 1.0, 4, 4, 1000.0).unwrap();
        let rgb = RgbImage::new(4, 4);
        let mut depth = DepthImage::new(4, 4);
        depth.put_pixel(3, 1, Luma([2000]));
        let mut mask = Mask::new(4, 4);
        mask.set(3, 1, true);
        let c = backproject(&rgb, &depth, &mask, &k, &Pose::identity()).unwrap();
        assert!((c.points[0] - Vector3::new(2.0, 0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_depth_gives_empty_cloud() {
        let rgb = RgbImage::new(8, 6);
        let depth = DepthImage::new(8, 6);
        let mut mask = Mask::new(8, 6);
        mask.fill(true);
        let c = backproject(&rgb, &depth, &mask, &k(), &Pose::identity()).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn far_depth_is_discarded() {
        let (rgb, depth, mask) = single_pixel(1, 1, 11_000);
        let c = backproject(&rgb, &depth, &mask, &k(), &Pose::identity()).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn pose_is_applied() {
        let (rgb, depth, mask) = single_pixel(4, 3, 1000);
        let pose = Pose::from_translation(Vector3::new(1.0, 2.0, 3.0));
        let c = backproject(&rgb, &depth, &mask, &k(), &pose).unwrap();
        assert!((c.points[0] - Vector3::new(1.0, 2.0, 4.0)).norm() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let (rgb, depth, _) = single_pixel(1, 1, 1000);
        let mask = Mask::new(4, 4);
        assert!(backproject(&rgb, &depth, &mask, &k(), &Pose::identity()).is_err());
    }

    proptest! {
        #[test]
        fn project_unproject_round_trip(u in 0.0f64..640.0, v in 0.0f64..480.0, z in 0.1f64..10.0) {
            let k = CameraIntrinsics::tum_default();
            let p = k.unproject(u, v, z);
            let (u2, v2) = k.project(&p).unwrap();
            prop_assert!((u - u2).abs() < 1e-6 && (v - v2).abs() < 1e-6);
        }
    }
}
