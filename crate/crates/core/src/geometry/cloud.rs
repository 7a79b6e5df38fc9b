use nalgebra::Vector3;

use super::Pose;
use crate::{Error, Result};

/// Points in meters with optional per-point colors (`[0, 1]` RGB) and unit normals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub colors: Option<Vec<Vector3<f64>>>,
    pub normals: Option<Vec<Vector3<f64>>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self {
            points,
            colors: None,
            normals: None,
        }
    }

    pub fn with_colors(points: Vec<Vector3<f64>>, colors: Vec<Vector3<f64>>) -> Self {
        debug_assert_eq!(points.len(), colors.len());
        Self {
            points,
            colors: Some(colors),
            normals: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_colors(&self) -> bool {
        self.colors.is_some()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    pub fn color(&self, i: usize) -> Option<Vector3<f64>> {
        self.colors.as_ref().map(|c| c[i])
    }

    /// Checks the length and unit-normal invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if let Some(c) = &self.colors {
            if c.len() != n {
                return Err(Error::invalid(format!("{} colors for {n} points", c.len())));
            }
        }
        if let Some(nr) = &self.normals {
            if nr.len() != n {
                return Err(Error::invalid(format!("{} normals for {n} points", nr.len())));
            }
            if nr.iter().any(|v| (v.norm() - 1.0).abs() > 1e-6) {
                return Err(Error::invalid("normals must have unit length"));
            }
        }
        if self.points.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(Error::invalid("non-finite point coordinate"));
        }
        Ok(())
    }

    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vector3<f64> = self.points.iter().sum();
        Some(sum / self.points.len() as f64)
    }

    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
            colors: self.colors.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|n| n.iter().map(|v| pose.transform_vector(v)).collect()),
        }
    }

    /// Appends `other`. Attribute channels survive only if both clouds
    /// carry them (an empty side never drops a channel).
    pub fn extend(&mut self, other: &PointCloud) {
        fn merge(
            mine: &mut Option<Vec<Vector3<f64>>>,
            theirs: &Option<Vec<Vector3<f64>>>,
            mine_empty: bool,
            theirs_empty: bool,
        ) {
            match (mine.as_mut(), theirs) {
                (Some(a), Some(b)) => a.extend_from_slice(b),
                (None, Some(b)) if mine_empty => *mine = Some(b.clone()),
                (Some(_), None) if theirs_empty => {}
                _ => *mine = None,
            }
        }
        let (me, te) = (self.is_empty(), other.is_empty());
        merge(&mut self.colors, &other.colors, me, te);
        merge(&mut self.normals, &other.normals, me, te);
        self.points.extend_from_slice(&other.points);
    }

    /// Concatenation of several clouds.
    pub fn concat<'a>(clouds: impl IntoIterator<Item = &'a PointCloud>) -> PointCloud {
        let mut out = PointCloud::default();
        for c in clouds {
            out.extend(c);
        }
        out
    }

    /// Scalar intensity per point, mean of the RGB channels.
    pub fn intensities(&self) -> Option<Vec<f64>> {
        self.colors
            .as_ref()
            .map(|c| c.iter().map(|v| (v.x + v.y + v.z) / 3.0).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extend_keeps_common_channels() {
        let mut a = PointCloud::with_colors(vec![Vector3::zeros()], vec![Vector3::zeros()]);
        let b = PointCloud::new(vec![Vector3::x()]);
        a.extend(&b);
        assert_eq!(a.len(), 2);
        assert!(a.colors.is_none());

        let mut e = PointCloud::default();
        e.extend(&PointCloud::with_colors(vec![Vector3::x()], vec![Vector3::y()]));
        assert!(e.has_colors());
        e.validate().unwrap();
    }

    #[test]
    fn validate_catches_bad_normals() {
        let mut c = PointCloud::new(vec![Vector3::zeros()]);
        c.normals = Some(vec![Vector3::new(0.0, 0.0, 2.0)]);
        assert!(c.validate().is_err());
    }
}
