//! TUM RGB-D sequence layout: `rgb.txt`, `depth.txt` (`timestamp path`) and
//! `groundtruth.txt` (`timestamp tx ty tz qx qy qz qw`), `#` comments allowed.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use super::{FrameImages, PosedFrame};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::{Error, Result};

/// Default association window in seconds.
pub const DEFAULT_MAX_DT: f64 = 0.02;

fn data_lines(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(n, l)| (n + 1, l.split_whitespace().map(str::to_string).collect()))
        .collect())
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::format(path, format!("line {line}: bad number {s:?}")))
}

/// `timestamp path` pairs, in file order.
pub fn read_file_list(path: &Path) -> Result<Vec<(f64, String)>> {
    data_lines(path)?
        .into_iter()
        .map(|(n, toks)| {
            if toks.len() < 2 {
                return Err(Error::format(path, format!("line {n}: expected `timestamp path`")));
            }
            Ok((parse_f64(path, n, &toks[0])?, toks[1].clone()))
        })
        .collect()
}

/// Reads a TUM trajectory file into timestamped camera-to-world poses.
pub fn read_trajectory(path: &Path) -> Result<Vec<(f64, Pose)>> {
    data_lines(path)?
        .into_iter()
        .map(|(n, toks)| {
            if toks.len() < 8 {
                return Err(Error::format(path, format!("line {n}: expected 8 fields")));
            }
            let v: Vec<f64> = toks[..8]
                .iter()
                .map(|t| parse_f64(path, n, t))
                .collect::<Result<_>>()?;
            let pose = Pose::from_quaternion_xyzw([v[4], v[5], v[6], v[7]], Vector3::new(v[1], v[2], v[3]))
                .map_err(|e| Error::format(path, format!("line {n}: {e}")))?;
            Ok((v[0], pose))
        })
        .collect()
}

pub fn write_trajectory(w: &mut impl Write, poses: &[(f64, Pose)]) -> std::io::Result<()> {
    writeln!(w, "# timestamp tx ty tz qx qy qz qw")?;
    for (t, p) in poses {
        let [qw, qx, qy, qz] = p.quaternion_wxyz();
        let tr = p.translation;
        writeln!(
            w,
            "{t:.6} {:.9} {:.9} {:.9} {qx:.12} {qy:.12} {qz:.12} {qw:.12}",
            tr.x, tr.y, tr.z
        )?;
    }
    Ok(())
}

/// Index of the entry nearest to `t` within `max_dt`; ties go to the lower
/// timestamp. `sorted` must be ascending by timestamp.
pub fn nearest_within(sorted: &[f64], t: f64, max_dt: f64) -> Option<usize> {
    let pos = sorted.partition_point(|&x| x < t);
    let mut best: Option<(f64, usize)> = None;
    for i in [pos.wrapping_sub(1), pos] {
        if let Some(&x) = sorted.get(i) {
            let d = (x - t).abs();
            if d <= max_dt && best.is_none_or(|(bd, bi)| d < bd || (d == bd && x < sorted[bi])) {
                best = Some((d, i));
            }
        }
    }
    best.map(|(_, i)| i)
}

fn frame_id_of(path: &str) -> String {
    Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string())
}

/// Associates every RGB image with the nearest depth image and, when
/// `with_groundtruth`, the nearest ground-truth pose, both within `max_dt`.
/// Unmatched RGB frames are dropped.
pub fn parse_tum_frames(
    dir: &Path,
    max_dt: f64,
    intrinsics: CameraIntrinsics,
    with_groundtruth: bool,
) -> Result<Vec<PosedFrame>> {
    intrinsics.validate()?;
    let mut rgb = read_file_list(&dir.join("rgb.txt"))?;
    let mut depth = read_file_list(&dir.join("depth.txt"))?;
    let mut gt = if with_groundtruth {
        read_trajectory(&dir.join("groundtruth.txt"))?
    } else {
        Vec::new()
    };
    rgb.sort_by(|a, b| a.0.total_cmp(&b.0));
    depth.sort_by(|a, b| a.0.total_cmp(&b.0));
    gt.sort_by(|a, b| a.0.total_cmp(&b.0));
    let depth_ts: Vec<f64> = depth.iter().map(|d| d.0).collect();
    let gt_ts: Vec<f64> = gt.iter().map(|g| g.0).collect();

    let mut frames = Vec::new();
    for (t, rgb_path) in &rgb {
        let Some(di) = nearest_within(&depth_ts, *t, max_dt) else {
            continue;
        };
        let pose = if with_groundtruth {
            match nearest_within(&gt_ts, *t, max_dt) {
                Some(gi) => Some(gt[gi].1),
                None => continue,
            }
        } else {
            None
        };
        frames.push(PosedFrame {
            frame_id: frame_id_of(rgb_path),
            index: frames.len(),
            timestamp: *t,
            pose,
            intrinsics,
            images: FrameImages::Files {
                rgb: dir.join(rgb_path),
                depth: dir.join(PathBuf::from(&depth[di].1)),
            },
        });
    }
    if frames.is_empty() {
        return Err(Error::invalid(format!(
            "no associated frames in {} within {max_dt} s",
            dir.display()
        )));
    }
    Ok(frames)
}

/// Posed TUM frames; see [`parse_tum_frames`].
pub fn parse_tum_sequence(dir: &Path, max_dt: f64, intrinsics: CameraIntrinsics) -> Result<Vec<PosedFrame>> {
    parse_tum_frames(dir, max_dt, intrinsics, true)
}

/// Intrinsics from `<dir>/intrinsics.json`, falling back to the TUM default.
pub fn dataset_intrinsics(dir: &Path) -> Result<CameraIntrinsics> {
    let p = dir.join("intrinsics.json");
    if !p.exists() {
        return Ok(CameraIntrinsics::tum_default());
    }
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let k: CameraIntrinsics = serde_json::from_str(&text).map_err(|e| Error::format(&p, e.to_string()))?;
    k.validate()?;
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        std::fs::write(dir.join(name), body).unwrap();
    }

    fn fixture(depth_t: &str) -> tempfile::TempDir {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "rgb.txt", "# rgb\n1.000 rgb/1.000.png\n2.000 rgb/2.000.png\n");
        write(d.path(), "depth.txt", &format!("# depth\n{depth_t} depth/a.png\n2.005 depth/b.png\n"));
        write(
            d.path(),
            "groundtruth.txt",
            "# gt\n1.001 1 2 3 0 0 0 1\n2.001 0 0 0 0 0 0.7071067811865476 0.7071067811865476\n",
        );
        d
    }

    #[test]
    fn associates_within_window() {
        let d = fixture("1.010");
        let f = parse_tum_sequence(d.path(), 0.02, CameraIntrinsics::tum_default()).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].frame_id, "1.000");
        let p = f[0].pose.unwrap();
        assert_eq!(p.rotation, nalgebra::Matrix3::identity());
        assert_eq!(p.translation, Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn drops_frames_outside_window() {
        let d = fixture("1.050");
        let f = parse_tum_sequence(d.path(), 0.02, CameraIntrinsics::tum_default()).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].frame_id, "2.000");
    }

    #[test]
    fn deterministic_reparse() {
        let d = fixture("1.010");
        let a = parse_tum_sequence(d.path(), 0.02, CameraIntrinsics::tum_default()).unwrap();
        let b = parse_tum_sequence(d.path(), 0.02, CameraIntrinsics::tum_default()).unwrap();
        let ids = |f: &[PosedFrame]| f.iter().map(|x| (x.frame_id.clone(), x.timestamp)).collect::<Vec<_>>();
        assert_eq!(ids(&a), ids(&b));
    }

    #[test]
    fn missing_files_and_empty_association() {
        let d = tempfile::tempdir().unwrap();
        assert!(parse_tum_sequence(d.path(), 0.02, CameraIntrinsics::tum_default()).is_err());
        let d = fixture("9.000");
        write(d.path(), "rgb.txt", "1.0 rgb/x.png\n");
        assert!(parse_tum_sequence(d.path(), 0.02, CameraIntrinsics::tum_default()).is_err());
    }

    #[test]
    fn nearest_tie_breaks_low() {
        assert_eq!(nearest_within(&[0.9, 1.1], 1.0, 0.2), Some(0));
        assert_eq!(nearest_within(&[0.9, 1.1], 1.0, 0.05), None);
        assert_eq!(nearest_within(&[], 1.0, 0.05), None);
    }

    #[test]
    fn trajectory_round_trip() {
        let p = Pose::from_axis_angle(Vector3::new(0.2, 1.0, -0.3), 0.7, Vector3::new(1.0, -2.0, 0.5));
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &[(1.5, p)]).unwrap();
        let d = tempfile::tempdir().unwrap();
        let path = d.path().join("gt.txt");
        std::fs::write(&path, buf).unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back[0].0, 1.5);
        assert!((back[0].1.rotation - p.rotation).amax() < 1e-9);
    }
}
