use std::borrow::Cow;
use std::path::PathBuf;
use std::sync::Arc;

use image::RgbImage;

use crate::geometry::{CameraIntrinsics, DepthImage, Pose};
use crate::{Error, Result};

/// An RGB image and its registered raw depth image.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdImage {
    pub rgb: RgbImage,
    pub depth: DepthImage,
}

/// Where a frame's pixels live.
#[derive(Debug, Clone)]
pub enum FrameImages {
    Loaded(Arc<RgbdImage>),
    Files { rgb: PathBuf, depth: PathBuf },
}

/// One RGB-D frame. `pose` is camera-to-world and absent for query frames.
#[derive(Debug, Clone)]
pub struct PosedFrame {
    pub frame_id: String,
    /// Position in the sequence; stride sampling is applied to this.
    pub index: usize,
    pub timestamp: f64,
    pub pose: Option<Pose>,
    pub intrinsics: CameraIntrinsics,
    pub images: FrameImages,
}

impl PosedFrame {
    /// Returns the pixels, reading them from disk when needed, after
    /// checking they match the intrinsics.
    pub fn load(&self) -> Result<Cow<'_, RgbdImage>> {
        let img = match &self.images {
            FrameImages::Loaded(img) => Cow::Borrowed(img.as_ref()),
            FrameImages::Files { rgb, depth } => {
                let rgb_img = image::open(rgb)
                    .map_err(|source| Error::Image {
                        path: rgb.clone(),
                        source,
                    })?
                    .to_rgb8();
                let depth_img = match image::open(depth).map_err(|source| Error::Image {
                    path: depth.clone(),
                    source,
                })? {
                    image::DynamicImage::ImageLuma16(d) => d,
                    other => other.to_luma16(),
                };
                Cow::Owned(RgbdImage {
                    rgb: rgb_img,
                    depth: depth_img,
                })
            }
        };
        let dims = (self.intrinsics.width, self.intrinsics.height);
        if img.rgb.dimensions() != dims || img.depth.dimensions() != dims {
            return Err(Error::invalid(format!(
                "frame {} images are {:?}/{:?}, intrinsics say {dims:?}",
                self.frame_id,
                img.rgb.dimensions(),
                img.depth.dimensions()
            )));
        }
        Ok(img)
    }

    /// Copy without the pose, as seen by the localizer.
    pub fn without_pose(&self) -> PosedFrame {
        PosedFrame {
            pose: None,
            ..self.clone()
        }
    }
}
