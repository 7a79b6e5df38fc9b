//! One JSON line per localized query frame.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::PoseEstimate;
use crate::geometry::Pose;
use crate::instance_map::ObjectId;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionStatus {
    Ok,
    NotEnoughDetections,
    NoDetectionRecord,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    /// Unit quaternion `(w, x, y, z)` with `w >= 0`.
    pub quaternion_wxyz: [f64; 4],
    pub translation: [f64; 3],
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        Self {
            quaternion_wxyz: p.quaternion_wxyz(),
            translation: p.translation.into(),
        }
    }
}

impl PoseRecord {
    pub fn to_pose(&self) -> Result<Pose> {
        let [w, x, y, z] = self.quaternion_wxyz;
        Pose::from_quaternion_xyzw([x, y, z, w], Vector3::from(self.translation))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub frame_id: String,
    pub timestamp: f64,
    pub status: PredictionStatus,
    #[serde(default)]
    pub pose: Option<PoseRecord>,
    #[serde(default)]
    pub overlap: Option<f64>,
    #[serde(default)]
    pub icp_fitness: Option<f64>,
    #[serde(default)]
    pub score: Option<f64>,
    /// `(detection index, map object id)` pairs of the chosen assignment.
    #[serde(default)]
    pub assignment: Vec<(usize, ObjectId)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl Prediction {
    pub fn success(frame_id: &str, timestamp: f64, est: &PoseEstimate) -> Self {
        Self {
            frame_id: frame_id.to_string(),
            timestamp,
            status: PredictionStatus::Ok,
            pose: Some((&est.pose).into()),
            overlap: Some(est.overlap),
            icp_fitness: Some(est.icp_fitness),
            score: Some(est.assignment.score),
            assignment: est.assignment.pairs.clone(),
            message: None,
        }
    }

    pub fn no_record(frame_id: &str, timestamp: f64) -> Self {
        Self {
            status: PredictionStatus::NoDetectionRecord,
            message: Some("no detection record for this frame".into()),
            ..Self::failure(frame_id, timestamp, &Error::invalid(""))
        }
    }

    pub fn failure(frame_id: &str, timestamp: f64, err: &Error) -> Self {
        let status = match err {
            Error::NotEnoughDetections { .. } => PredictionStatus::NotEnoughDetections,
            _ => PredictionStatus::Failed,
        };
        Self {
            frame_id: frame_id.to_string(),
            timestamp,
            status,
            pose: None,
            overlap: None,
            icp_fitness: None,
            score: None,
            assignment: Vec::new(),
            message: Some(err.to_string()),
        }
    }
}

pub fn write_predictions(w: &mut impl Write, preds: &[Prediction]) -> std::io::Result<()> {
    for p in preds {
        serde_json::to_writer(&mut *w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_predictions(r: impl BufRead, path: &Path) -> Result<Vec<Prediction>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
        if p.status == PredictionStatus::Ok && p.pose.is_none() {
            return Err(Error::format(path, format!("line {}: status ok without a pose", n + 1)));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions(std::io::BufReader::new(f), path)
}

pub fn save_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut buf = Vec::new();
    write_predictions(&mut buf, preds).expect("in-memory write");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_failure_line() {
        let pose = Pose::from_axis_angle(Vector3::z(), 0.4, Vector3::new(1.0, 2.0, 3.0));
        let ok = Prediction {
            frame_id: "000015".into(),
            timestamp: 0.5,
            status: PredictionStatus::Ok,
            pose: Some((&pose).into()),
            overlap: Some(0.9),
            icp_fitness: Some(0.8),
            score: Some(0.0),
            assignment: vec![(0, ObjectId(3)), (1, ObjectId(7)), (2, ObjectId(1))],
            message: None,
        };
        let bad = Prediction::failure(
            "000045",
            1.5,
            &Error::NotEnoughDetections { found: 2, required: 3 },
        );
        let mut buf = Vec::new();
        write_predictions(&mut buf, &[ok.clone(), bad.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap().contains("\"status\":\"not_enough_detections\""));
        let back = read_predictions(&buf[..], Path::new("p")).unwrap();
        assert_eq!(back[1], bad);
        let p = back[0].pose.unwrap().to_pose().unwrap();
        assert!((p.rotation - pose.rotation).norm() < 1e-12);
    }
}
