use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rigid transform `x -> R x + t` in SE(3). Translation is in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, rejecting rotations that are not proper orthonormal
    /// matrices (tolerance 1e-9 on `R Rᵀ - I`).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Self {
            rotation,
            translation,
        };
        if !pose.is_valid(1e-9) {
            return Err(Error::invalid("rotation is not orthonormal with det +1"));
        }
        Ok(pose)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rot = Rotation3::from_scaled_axis(axis.normalize() * angle);
        Self {
            rotation: *rot.matrix(),
            translation,
        }
    }

    /// Exponential map of a rotation vector, as used by the 6-dof updates.
    pub fn from_rotation_vector(omega: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *Rotation3::new(omega).matrix(),
            translation,
        }
    }

    /// Quaternion in `(x, y, z, w)` order, as stored in TUM ground-truth files.
    /// The quaternion is normalized first.
    pub fn from_quaternion_xyzw(q: [f64; 4], translation: Vector3<f64>) -> Result<Self> {
        let [x, y, z, w] = q;
        let norm = (x * x + y * y + z * z + w * w).sqrt();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::invalid("zero or non-finite quaternion"));
        }
        let uq = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z));
        Ok(Self {
            rotation: *uq.to_rotation_matrix().matrix(),
            translation,
        })
    }

    /// Unit quaternion `(w, x, y, z)` with non-negative `w`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let uq = UnitQuaternion::from_matrix(&self.rotation);
        let q = uq.quaternion();
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [s * q.w, s * q.i, s * q.j, s * q.k]
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Geodesic angle of the rotation part, in radians.
    pub fn rotation_angle(&self) -> f64 {
        ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    /// Orthonormality and determinant check with tolerance on `R Rᵀ - I`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let rrt = self.rotation * self.rotation.transpose() - Matrix3::identity();
        rrt.amax() <= tol
            && (self.rotation.determinant() - 1.0).abs() <= tol.max(1e-12) * 10.0
            && self.translation.iter().all(|v| v.is_finite())
    }

    /// Projects the rotation back onto SO(3) via SVD. Used after numerical
    /// updates that may drift.
    pub fn orthonormalized(&self) -> Pose {
        let svd = self.rotation.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            let mut u2 = u;
            u2.column_mut(2).neg_mut();
            r = u2 * vt;
        }
        Pose {
            rotation: r,
            translation: self.translation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            -3.0f64..3.0,
            prop::array::uniform3(-5.0f64..5.0),
        )
            .prop_filter("axis nonzero", |(a, _, _)| {
                Vector3::from(*a).norm() > 1e-3
            })
            .prop_map(|(a, ang, t)| Pose::from_axis_angle(a.into(), ang, t.into()))
    }

    fn close(a: &Pose, b: &Pose, tol: f64) -> bool {
        (a.rotation - b.rotation).amax() <= tol && (a.translation - b.translation).amax() <= tol
    }

    #[test]
    fn identity_quaternion() {
        let p = Pose::from_quaternion_xyzw([0.0, 0.0, 0.0, 1.0], Vector3::zeros()).unwrap();
        assert_eq!(p.rotation, Matrix3::identity());
    }

    #[test]
    fn rejects_reflection() {
        let mut r = Matrix3::identity();
        r[(2, 2)] = -1.0;
        assert!(Pose::new(r, Vector3::zeros()).is_err());
    }

    proptest! {
        #[test]
        fn compose_with_inverse_is_identity(p in arb_pose()) {
            prop_assert!(close(&p.compose(&p.inverse()), &Pose::identity(), 1e-9));
            prop_assert!(p.is_valid(1e-9));
        }

        #[test]
        fn double_inverse(p in arb_pose()) {
            prop_assert!(close(&p.inverse().inverse(), &p, 1e-9));
        }

        #[test]
        fn compose_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            prop_assert!(close(&l, &r, 1e-9));
        }

        #[test]
        fn quaternion_round_trip(p in arb_pose()) {
            let [w, x, y, z] = p.quaternion_wxyz();
            let back = Pose::from_quaternion_xyzw([x, y, z, w], p.translation).unwrap();
            prop_assert!(close(&back, &p, 1e-9));
        }
    }
}
