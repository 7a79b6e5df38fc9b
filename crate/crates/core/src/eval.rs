//! Pose error metrics and success-rate reports.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::Pose;
use crate::ingest::tum::{nearest_within, read_trajectory, DEFAULT_MAX_DT};
use crate::localizer::{load_predictions, Prediction, PredictionStatus};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalThresholds {
    /// Maximum translation error, meters.
    pub te_max: f64,
    /// Maximum rotation error, radians.
    pub re_max: f64,
}

impl Default for EvalThresholds {
    fn default() -> Self {
        Self { te_max: 0.6, re_max: 0.3 }
    }
}

impl EvalThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.te_max > 0.0 && self.re_max > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!("thresholds must be positive: {self:?}")))
        }
    }

    /// Both errors at or under their thresholds.
    pub fn accepts(&self, te: f64, re: f64) -> bool {
        te <= self.te_max && re <= self.re_max
    }
}

/// Translation error (meters) and rotation error (radians) of an estimate.
pub fn pose_errors(estimate: &Pose, truth: &Pose) -> (f64, f64) {
    let te = (estimate.translation - truth.translation).norm();
    let c = ((truth.rotation.transpose() * estimate.rotation).trace() - 1.0) / 2.0;
    (te, c.clamp(-1.0, 1.0).acos())
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame_id: String,
    pub timestamp: f64,
    pub status: PredictionStatus,
    /// Errors are absent when localization produced no pose.
    pub te: Option<f64>,
    pub re: Option<f64>,
    pub success: bool,
}

/// Aggregates over a set of frames. Frames without a pose count as
/// failures in the success rate; means and medians cover frames with a pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub frames: usize,
    pub localized: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_te: Option<f64>,
    pub mean_re: Option<f64>,
    pub median_te: Option<f64>,
    pub median_re: Option<f64>,
}

impl Summary {
    pub fn from_frames<'a>(frames: impl IntoIterator<Item = &'a FrameResult>) -> Self {
        let frames: Vec<&FrameResult> = frames.into_iter().collect();
        let te: Vec<f64> = frames.iter().filter_map(|f| f.te).collect();
        let re: Vec<f64> = frames.iter().filter_map(|f| f.re).collect();
        let successes = frames.iter().filter(|f| f.success).count();
        Self {
            frames: frames.len(),
            localized: te.len(),
            successes,
            success_rate: if frames.is_empty() {
                0.0
            } else {
                100.0 * successes as f64 / frames.len() as f64
            },
            mean_te: mean(&te),
            mean_re: mean(&re),
            median_te: median(&te),
            median_re: median(&re),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: EvalThresholds,
    pub summary: Summary,
    pub frames: Vec<FrameResult>,
}

/// Scores predictions against a timestamped ground-truth trajectory. Each
/// prediction is matched to the ground-truth pose nearest in time, within
/// `max_dt` seconds.
pub fn evaluate_predictions(
    predictions: &[Prediction],
    truth: &[(f64, Pose)],
    thresholds: EvalThresholds,
    max_dt: f64,
) -> Result<EvalReport> {
    thresholds.validate()?;
    let mut gt = truth.to_vec();
    gt.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ts: Vec<f64> = gt.iter().map(|g| g.0).collect();
    let mut missing = Vec::new();
    let mut frames = Vec::with_capacity(predictions.len());
    for p in predictions {
        let Some(gi) = nearest_within(&ts, p.timestamp, max_dt) else {
            missing.push(format!("{}@{}", p.frame_id, p.timestamp));
            continue;
        };
        let est = match (&p.status, &p.pose) {
            (PredictionStatus::Ok, Some(rec)) => Some(rec.to_pose()?),
            _ => None,
        };
        let errs = est.map(|e| pose_errors(&e, &gt[gi].1));
        frames.push(FrameResult {
            frame_id: p.frame_id.clone(),
            timestamp: p.timestamp,
            status: p.status,
            te: errs.map(|e| e.0),
            re: errs.map(|e| e.1),
            success: errs.is_some_and(|(te, re)| thresholds.accepts(te, re)),
        });
    }
    if !missing.is_empty() {
        return Err(Error::invalid(format!(
            "no ground-truth pose within {max_dt} s for frames: {}",
            missing.join(", ")
        )));
    }
    Ok(EvalReport {
        thresholds,
        summary: Summary::from_frames(&frames),
        frames,
    })
}

/// Reads a predictions file and a TUM ground-truth file and scores them.
pub fn evaluate_run(pred_path: &Path, gt_path: &Path, thresholds: EvalThresholds) -> Result<EvalReport> {
    let preds = load_predictions(pred_path)?;
    let gt = read_trajectory(gt_path)?;
    evaluate_predictions(&preds, &gt, thresholds, DEFAULT_MAX_DT)
}

/// Several sequences pooled two ways: every frame weighted equally, and
/// the unweighted mean of per-sequence success rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledReport {
    pub per_frame: Summary,
    pub mean_sequence_success_rate: f64,
    pub sequences: Vec<(String, Summary)>,
}

pub fn pool_reports(reports: &[(String, EvalReport)]) -> PooledReport {
    let per_frame = Summary::from_frames(reports.iter().flat_map(|(_, r)| &r.frames));
    let rates: Vec<f64> = reports.iter().map(|(_, r)| r.summary.success_rate).collect();
    PooledReport {
        per_frame,
        mean_sequence_success_rate: mean(&rates).unwrap_or(0.0),
        sequences: reports.iter().map(|(n, r)| (n.clone(), r.summary.clone())).collect(),
    }
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

impl EvalReport {
    /// Aligned text table: average errors, median errors, success rate.
    pub fn to_table(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        writeln!(
            out,
            "{:<8} {:>22} {:>22} {:>16}",
            "frames", "Avg Errors (m, rad)", "Median Errors (m, rad)", "Success Rate (%)"
        )
        .unwrap();
        writeln!(
            out,
            "{:<8} {:>22} {:>22} {:>16.2}",
            s.frames,
            format!("{} / {}", opt(s.mean_te, 2), opt(s.mean_re, 3)),
            format!("{} / {}", opt(s.median_te, 2), opt(s.median_re, 3)),
            s.success_rate
        )
        .unwrap();
        out
    }

    /// Per-frame CSV: `frame_id,timestamp,status,te,re,success`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame_id,timestamp,status,te,re,success\n");
        for f in &self.frames {
            let status = serde_json::to_value(f.status).expect("status serializes");
            writeln!(
                out,
                "{},{:.6},{},{},{},{}",
                f.frame_id,
                f.timestamp,
                status.as_str().unwrap_or_default(),
                f.te.map_or(String::new(), |v| format!("{v:.9}")),
                f.re.map_or(String::new(), |v| format!("{v:.9}")),
                f.success
            )
            .unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    #[test]
    fn basic_errors() {
        let a = Pose::identity();
        assert_eq!(pose_errors(&a, &a), (0.0, 0.0));
        let b = Pose::from_axis_angle(Vector3::z(), std::f64::consts::FRAC_PI_2, Vector3::zeros());
        assert!((pose_errors(&b, &a).1 - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let c = Pose::from_translation(Vector3::new(3.0, 4.0, 0.0));
        assert_eq!(pose_errors(&c, &a).0, 5.0);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn thresholds_from_table() {
        let t = EvalThresholds::default();
        assert!(t.accepts(0.29, 0.028));
        assert!(!t.accepts(1.60, 1.121));
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (prop::array::uniform3(-1.0..1.0f64), 0.0..3.1f64, prop::array::uniform3(-5.0..5.0f64)).prop_filter_map(
            "axis",
            |(ax, ang, t)| {
                let ax = Vector3::from(ax);
                (ax.norm() > 1e-3).then(|| Pose::from_axis_angle(ax, ang, Vector3::from(t)))
            },
        )
    }

    proptest! {
        #[test]
        fn rotation_error_symmetric_and_left_invariant(a in arb_pose(), b in arb_pose(), g in arb_pose()) {
            let (_, r1) = pose_errors(&a, &b);
            let (_, r2) = pose_errors(&b, &a);
            prop_assert!((r1 - r2).abs() < 1e-7);
            let (_, r3) = pose_errors(&g.compose(&a), &g.compose(&b));
            prop_assert!((r1 - r3).abs() < 1e-6);
        }

        #[test]
        fn median_of_odd_list_is_middle(mut v in prop::collection::vec(-10.0..10.0f64, 1..20)) {
            if v.len() % 2 == 0 { v.pop(); }
            let m = median(&v).unwrap();
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            prop_assert_eq!(m, s[s.len() / 2]);
        }

        #[test]
        fn success_monotone_in_thresholds(
            errs in prop::collection::vec((0.0..2.0f64, 0.0..2.0f64), 1..30),
            te in 0.01..1.0f64, re in 0.01..1.0f64, dte in 0.0..1.0f64, dre in 0.0..1.0f64,
        ) {
            let count = |t: EvalThresholds| errs.iter().filter(|(a, b)| t.accepts(*a, *b)).count();
            let lo = count(EvalThresholds { te_max: te, re_max: re });
            let hi = count(EvalThresholds { te_max: te + dte, re_max: re + dre });
            prop_assert!(lo <= hi);
        }
    }
}
