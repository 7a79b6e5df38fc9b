use crate::geometry::{KdTree, PointCloud, Pose};
use crate::{Error, Result};

/// Fraction of `source` points that land within `tau` of some `target`
/// point after applying `pose`. Empty source gives 0.
pub fn overlap(source: &PointCloud, target: &PointCloud, pose: &Pose, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("overlap tolerance must be positive, got {tau}")));
    }
    if source.is_empty() || target.is_empty() {
        return Ok(0.0);
    }
    Ok(overlap_with_tree(source, &KdTree::new(&target.points), pose, tau))
}

pub fn overlap_with_tree(source: &PointCloud, target: &KdTree, pose: &Pose, tau: f64) -> f64 {
    if source.is_empty() || target.is_empty() {
        return 0.0;
    }
    let hits = source
        .points
        .iter()
        .filter(|p| target.nearest_within(&pose.transform_point(p), tau).is_some())
        .count();
    hits as f64 / source.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    #[test]
    fn half_overlap() {
        let src: Vec<_> = (0..10).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let tgt: Vec<_> = (0..5).map(|i| Vector3::new(i as f64 + 0.01, 0.0, 0.0)).collect();
        let v = overlap(&PointCloud::new(src), &PointCloud::new(tgt), &Pose::identity(), 0.05).unwrap();
        assert_eq!(v, 0.5);
    }

    #[test]
    fn identical_and_disjoint() {
        let c = PointCloud::new(vec![Vector3::zeros(), Vector3::x()]);
        assert_eq!(overlap(&c, &c, &Pose::identity(), 0.01).unwrap(), 1.0);
        let far = Pose::from_translation(Vector3::new(10.0, 0.0, 0.0));
        assert_eq!(overlap(&c, &c, &far, 0.01).unwrap(), 0.0);
        assert_eq!(overlap(&PointCloud::default(), &c, &far, 0.01).unwrap(), 0.0);
        assert!(overlap(&c, &c, &far, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_tau(
            pts in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 1..40),
            t1 in 0.01..0.5f64, dt in 0.0..0.5f64,
        ) {
            let src = PointCloud::new(pts.iter().map(|&(x, y, z)| Vector3::new(x, y, z)).collect());
            let tgt = PointCloud::new(pts.iter().map(|&(x, y, z)| Vector3::new(y, z, x)).collect());
            let a = overlap(&src, &tgt, &Pose::identity(), t1).unwrap();
            let b = overlap(&src, &tgt, &Pose::identity(), t1 + dt).unwrap();
            prop_assert!(a <= b);
        }
    }
}
