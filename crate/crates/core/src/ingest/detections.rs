//! Detection-record files: one JSON object per line.
//!
//! The first line is a header declaring the embedding dimension, producer and
//! image size; each following line holds the detections of one frame:
//!
//! ```text
//! {"header":{"embedding_dim":16,"producer":"instloc-synth","version":"0.1.0","width":160,"height":120}}
//! {"frame_id":"000000","detections":[{"caption":"chair","box":[x0,y0,x1,y1],"mask_rle":[...],"embedding":[...],"score":0.9}]}
//! ```
//!
//! `mask_rle` holds row-major run lengths starting with the zero run.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::Mask;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionHeader {
    pub embedding_dim: usize,
    pub producer: String,
    pub version: String,
    pub width: u32,
    pub height: u32,
}

/// Axis-aligned box in pixels, `x0 < x1`, `y0 < y1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let iw = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let ih = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0);
        let inter = iw * ih;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    fn validate(&self, width: u32, height: u32) -> Result<()> {
        let ok = self.x0 < self.x1
            && self.y0 < self.y1
            && self.x0 >= 0.0
            && self.y0 >= 0.0
            && self.x1 <= width as f64
            && self.y1 <= height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("box {self:?} outside {width}x{height} image")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub caption: String,
    pub bbox: BBox,
    pub mask: Mask,
    pub embedding: Vec<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub frame_id: String,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFile {
    pub header: DetectionHeader,
    pub records: Vec<DetectionRecord>,
}

impl DetectionFile {
    pub fn by_frame(&self) -> HashMap<&str, &DetectionRecord> {
        self.records.iter().map(|r| (r.frame_id.as_str(), r)).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: DetectionHeader,
}

#[derive(Serialize, Deserialize)]
struct RawDetection {
    caption: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    mask_rle: Vec<u32>,
    embedding: Vec<f64>,
    score: f64,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    frame_id: String,
    detections: Vec<RawDetection>,
}

impl RawDetection {
    fn from_detection(d: &Detection) -> Self {
        Self {
            caption: d.caption.clone(),
            bbox: [d.bbox.x0, d.bbox.y0, d.bbox.x1, d.bbox.y1],
            mask_rle: d.mask.to_rle(),
            embedding: d.embedding.clone(),
            score: d.score,
        }
    }

    fn into_detection(self, header: &DetectionHeader) -> Result<Detection> {
        let [x0, y0, x1, y1] = self.bbox;
        let bbox = BBox::new(x0, y0, x1, y1);
        bbox.validate(header.width, header.height)?;
        if self.embedding.len() != header.embedding_dim {
            return Err(Error::invalid(format!(
                "embedding of dimension {} in a file declaring {}",
                self.embedding.len(),
                header.embedding_dim
            )));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::invalid(format!("score {} outside [0, 1]", self.score)));
        }
        Ok(Detection {
            caption: self.caption,
            bbox,
            mask: Mask::from_rle(header.width, header.height, &self.mask_rle)?,
            embedding: self.embedding,
            score: self.score,
        })
    }
}

pub fn write_detections(w: &mut impl Write, file: &DetectionFile) -> std::io::Result<()> {
    let header = HeaderLine {
        header: file.header.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for r in &file.records {
        let raw = RawRecord {
            frame_id: r.frame_id.clone(),
            detections: r.detections.iter().map(RawDetection::from_detection).collect(),
        };
        writeln!(w, "{}", serde_json::to_string(&raw).expect("record serializes"))?;
    }
    Ok(())
}

/// Parses a detection file, validating boxes, masks and embedding
/// dimensions against the header. Errors carry the offending line number.
pub fn read_detections(r: &mut impl BufRead, origin: &Path) -> Result<DetectionFile> {
    let mut lines = r.lines().enumerate().filter(|(_, l)| {
        l.as_ref().map_or(true, |s| !s.trim().is_empty())
    });
    let at = |n: usize, m: String| Error::format(origin, format!("line {}: {m}", n + 1));
    let (n, first) = lines.next().ok_or_else(|| at(0, "empty detection file".into()))?;
    let first = first.map_err(|e| Error::io(origin, e))?;
    let header: HeaderLine = serde_json::from_str(&first).map_err(|e| at(n, format!("bad header: {e}")))?;
    let header = header.header;
    let mut records = Vec::new();
    for (n, line) in lines {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| at(n, e.to_string()))?;
        let detections = raw
            .detections
            .into_iter()
            .map(|d| d.into_detection(&header))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| at(n, e.to_string()))?;
        records.push(DetectionRecord {
            frame_id: raw.frame_id,
            detections,
        });
    }
    Ok(DetectionFile { header, records })
}

pub fn load_detections(path: &Path) -> Result<DetectionFile> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_detections(&mut std::io::BufReader::new(f), path)
}

pub fn save_detections(path: &Path, file: &DetectionFile) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_detections(&mut w, file)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Greedy class-agnostic suppression: detections are visited by descending
/// score (stable for ties) and dropped when their box IoU with an already
/// kept box exceeds `iou_threshold`. Kept detections come back in visit order.
pub fn dedup_boxes<'a>(detections: &[&'a Detection], iou_threshold: f64) -> Vec<&'a Detection> {
    let mut order: Vec<&'a Detection> = detections.to_vec();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut kept: Vec<&'a Detection> = Vec::new();
    for d in order {
        if kept.iter().all(|k| k.bbox.iou(&d.bbox) <= iou_threshold) {
            kept.push(d);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(caption: &str, b: [f64; 4], score: f64) -> Detection {
        Detection {
            caption: caption.into(),
            bbox: BBox::new(b[0], b[1], b[2], b[3]),
            mask: Mask::new(16, 16),
            embedding: vec![0.0, 1.0],
            score,
        }
    }

    #[test]
    fn box_iou_overlap() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        let b = BBox::new(1.0, 1.0, 11.0, 11.0);
        assert!((a.iou(&b) - 81.0 / 119.0).abs() < 1e-15);
    }

    #[test]
    fn dedup_cases() {
        let a = det("chair", [0.0, 0.0, 10.0, 10.0], 0.9);
        let b = det("seat", [0.0, 0.0, 10.0, 10.0], 0.8);
        assert_eq!(dedup_boxes(&[&a, &b], 0.9), vec![&a]);
        let c = det("x", [1.0, 1.0, 11.0, 11.0], 0.95);
        assert_eq!(dedup_boxes(&[&a, &c], 0.9), vec![&c, &a]);
        let d = det("y", [12.0, 12.0, 14.0, 14.0], 0.5);
        assert_eq!(dedup_boxes(&[&a, &d], 0.9).len(), 2);
    }

    fn sample_file() -> DetectionFile {
        let mut m = Mask::new(16, 16);
        m.set(3, 4, true);
        DetectionFile {
            header: DetectionHeader {
                embedding_dim: 2,
                producer: "test".into(),
                version: "1".into(),
                width: 16,
                height: 16,
            },
            records: vec![DetectionRecord {
                frame_id: "000001".into(),
                detections: vec![Detection {
                    mask: m,
                    ..det("chair", [3.0, 4.0, 4.0, 5.0], 0.7)
                }],
            }],
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let f = sample_file();
        let mut buf = Vec::new();
        write_detections(&mut buf, &f).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().contains("\"embedding_dim\":2"));
        assert!(text.contains("\"box\":[3.0,4.0,4.0,5.0]"));
        let back = read_detections(&mut &buf[..], Path::new("t.jsonl")).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rejects_bad_records() {
        let good = "{\"header\":{\"embedding_dim\":2,\"producer\":\"p\",\"version\":\"1\",\"width\":2,\"height\":2}}\n";
        let bad_dim = format!(
            "{good}{{\"frame_id\":\"a\",\"detections\":[{{\"caption\":\"c\",\"box\":[0,0,1,1],\"mask_rle\":[4],\"embedding\":[1.0],\"score\":0.5}}]}}\n"
        );
        assert!(read_detections(&mut bad_dim.as_bytes(), Path::new("x")).is_err());
        let bad_box = format!(
            "{good}{{\"frame_id\":\"a\",\"detections\":[{{\"caption\":\"c\",\"box\":[1,0,1,1],\"mask_rle\":[4],\"embedding\":[1.0,2.0],\"score\":0.5}}]}}\n"
        );
        assert!(read_detections(&mut bad_box.as_bytes(), Path::new("x")).is_err());
        let bad_mask = format!(
            "{good}{{\"frame_id\":\"a\",\"detections\":[{{\"caption\":\"c\",\"box\":[0,0,1,1],\"mask_rle\":[3],\"embedding\":[1.0,2.0],\"score\":0.5}}]}}\n"
        );
        assert!(read_detections(&mut bad_mask.as_bytes(), Path::new("x")).is_err());
    }
}
