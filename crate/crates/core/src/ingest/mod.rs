//! Getting data in: TUM sequences, detection-record files, caption
//! filtering, box suppression, memory formation and synthetic scenes.

mod detections;
mod frame;
mod memory;
mod stoplist;
pub mod synth;
pub mod tum;

pub use detections::{
    dedup_boxes, load_detections, read_detections, save_detections, write_detections, BBox, Detection,
    DetectionFile, DetectionHeader, DetectionRecord,
};
pub use frame::{FrameImages, PosedFrame, RgbdImage};
pub use memory::{
    build_memory, collect_tuples, frame_tuples, merged_cloud, surviving_detections, DetectionFilter,
    FrameSampling, DEFAULT_DEDUP_IOU,
};
pub use stoplist::{filter_captions, CaptionStoplist};
pub use tum::{parse_tum_frames, parse_tum_sequence};
