use crate::error::{Error, Result};
use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Rigid transform `p ↦ R(rotation)·p + translation` with an axis-angle
/// rotation in radians.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RigidMotion {
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

impl RigidMotion {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(rotation: [f64; 3], translation: [f64; 3]) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(t: [f64; 3]) -> Self {
        Self::new([0.0; 3], t)
    }

    /// Rotation angle is wrapped into `[0, π]`.
    pub fn from_rotation(r: &Rotation3<f64>, t: Vector3<f64>) -> Self {
        Self::from_quaternion(&UnitQuaternion::from_rotation_matrix(r), t)
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>, t: Vector3<f64>) -> Self {
        Self::new(quaternion_log(q), t.into())
    }

    /// `[rx, ry, rz, tx, ty, tz]`.
    pub fn from_slice6(v: &[f64]) -> Result<Self> {
        if v.len() != 6 {
            return Err(Error::dims("6 motion parameters", v.len()));
        }
        Ok(Self::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]))
    }

    pub fn to_array6(&self) -> [f64; 6] {
        let (r, t) = (self.rotation, self.translation);
        [r[0], r[1], r[2], t[0], t[1], t[2]]
    }

    pub fn rotation3(&self) -> Rotation3<f64> {
        Rotation3::new(Vector3::from(self.rotation))
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.rotation3().into_inner()
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&self.rotation3())
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    pub fn angle(&self) -> f64 {
        Vector3::from(self.rotation).norm()
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        (self.matrix() * Vector3::from(p) + self.translation_vector()).into()
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidMotion) -> RigidMotion {
        let ra = self.rotation3();
        let r = ra * other.rotation3();
        let t = ra * other.translation_vector() + self.translation_vector();
        Self::from_rotation(&r, t)
    }

    pub fn inverse(&self) -> RigidMotion {
        let rinv = self.rotation3().inverse();
        Self::from_rotation(&rinv, -(rinv * self.translation_vector()))
    }

    pub fn is_finite(&self) -> bool {
        self.to_array6().iter().all(|v| v.is_finite())
    }

    /// Largest elementwise difference between the 3×4 matrices of two motions.
    pub fn max_matrix_diff(&self, other: &RigidMotion) -> f64 {
        let dr = (self.matrix() - other.matrix()).abs().max();
        let dt = (self.translation_vector() - other.translation_vector()).abs().max();
        dr.max(dt)
    }
}

/// Axis-angle vector of a unit quaternion, accurate near the identity where
/// `acos`-based extraction loses half the mantissa.
fn quaternion_log(q: &UnitQuaternion<f64>) -> [f64; 3] {
    let (w, v) = if q.w < 0.0 { (-q.w, -q.imag()) } else { (q.w, q.imag()) };
    let s = v.norm();
    let k = if s < 1e-8 {
        // θ = 2·atan2(s, w) ≈ 2s/w
        2.0 / w
    } else {
        2.0 * s.atan2(w) / s
    };
    (v * k).into()
}

/// One absolute pose with its timestamp.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StampedPose {
    pub timestamp: f64,
    /// Camera-to-world transform.
    pub pose: RigidMotion,
}

/// Absolute camera-to-world poses with strictly increasing timestamps.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    poses: Vec<StampedPose>,
}

impl Trajectory {
    pub fn new(poses: Vec<StampedPose>) -> Result<Self> {
        for (i, w) in poses.windows(2).enumerate() {
            if !(w[1].timestamp > w[0].timestamp) {
                return Err(Error::InvalidInput(format!(
                    "timestamps must increase strictly (index {}: {} then {})",
                    i + 1,
                    w[0].timestamp,
                    w[1].timestamp
                )));
            }
        }
        if let Some(p) = poses.iter().find(|p| !p.timestamp.is_finite() || !p.pose.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite pose at t={}", p.timestamp)));
        }
        Ok(Self { poses })
    }

    /// Poses stamped `0, 1, 2, …`.
    pub fn from_poses(poses: Vec<RigidMotion>) -> Result<Self> {
        Self::new(
            poses
                .into_iter()
                .enumerate()
                .map(|(i, pose)| StampedPose { timestamp: i as f64, pose })
                .collect(),
        )
    }

    /// Chain relative motions from an identity start: `pose[i+1] = pose[i] ∘ rel[i]`,
    /// where `rel[i]` maps frame `i+1` camera coordinates into frame `i`.
    pub fn accumulate(relatives: &[RigidMotion]) -> Self {
        let mut poses = Vec::with_capacity(relatives.len() + 1);
        poses.push(RigidMotion::identity());
        for r in relatives {
            let next = poses.last().expect("non-empty").compose(r);
            poses.push(next);
        }
        Self::from_poses(poses).expect("accumulated poses are stamped in order")
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn poses(&self) -> &[StampedPose] {
        &self.poses
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.poses.iter().map(|p| p.timestamp).collect()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.poses.iter().map(|p| p.pose.translation_vector()).collect()
    }

    /// Motion from pose `i` to pose `j` expressed in frame `i`: `pose[i]⁻¹ ∘ pose[j]`.
    pub fn relative(&self, i: usize, j: usize) -> RigidMotion {
        self.poses[i].pose.inverse().compose(&self.poses[j].pose)
    }

    /// Apply `g ∘ pose` to every pose.
    pub fn transformed(&self, g: &RigidMotion) -> Trajectory {
        Trajectory {
            poses: self
                .poses
                .iter()
                .map(|p| StampedPose { timestamp: p.timestamp, pose: g.compose(&p.pose) })
                .collect(),
        }
    }

    /// Positions multiplied by `s`; orientations unchanged.
    pub fn scaled(&self, s: f64) -> Trajectory {
        Trajectory {
            poses: self
                .poses
                .iter()
                .map(|p| {
                    let t = p.pose.translation;
                    StampedPose {
                        timestamp: p.timestamp,
                        pose: RigidMotion::new(p.pose.rotation, [s * t[0], s * t[1], s * t[2]]),
                    }
                })
                .collect(),
        }
    }

    /// Every `step`-th pose starting at the first.
    pub fn subsample(&self, step: usize) -> Trajectory {
        Trajectory {
            poses: self.poses.iter().step_by(step.max(1)).copied().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn arb_motion() -> impl Strategy<Value = RigidMotion> {
        (prop::array::uniform3(-1.5f64..1.5), prop::array::uniform3(-5.0f64..5.0))
            .prop_map(|(r, t)| RigidMotion::new(r, t))
    }

    #[test]
    fn quarter_turns_compose_to_half_turn() {
        let q = RigidMotion::new([0.0, 0.0, FRAC_PI_2], [0.0; 3]);
        let h = q.compose(&q);
        let expected = Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
        assert!((h.matrix() - expected).abs().max() < 1e-12);
        assert!((h.angle() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn accumulate_identities() {
        let t = Trajectory::accumulate(&[RigidMotion::identity(); 4]);
        assert_eq!(t.len(), 5);
        assert!(t.poses().iter().all(|p| p.pose.max_matrix_diff(&RigidMotion::identity()) == 0.0));
    }

    #[test]
    fn accumulate_translations_add() {
        let step = RigidMotion::from_translation([0.0, 0.0, 0.5]);
        let t = Trajectory::accumulate(&[step; 3]);
        assert!((t.positions()[3].z - 1.5).abs() < 1e-15);
        assert!(t.relative(1, 3).max_matrix_diff(&RigidMotion::from_translation([0.0, 0.0, 1.0])) < 1e-15);
    }

    #[test]
    fn rejects_non_increasing_timestamps() {
        let p = StampedPose { timestamp: 1.0, pose: RigidMotion::identity() };
        assert!(Trajectory::new(vec![p, p]).is_err());
    }

    proptest! {
        #[test]
        fn compose_with_inverse_is_identity(m in arb_motion()) {
            let e = m.compose(&m.inverse());
            prop_assert!(e.max_matrix_diff(&RigidMotion::identity()) <= 1e-9);
        }

        #[test]
        fn double_inverse_is_identity(m in arb_motion()) {
            prop_assert!(m.inverse().inverse().max_matrix_diff(&m) <= 1e-9);
        }

        #[test]
        fn rotation_is_orthonormal(m in arb_motion()) {
            let r = m.matrix();
            prop_assert!((r.transpose() * r - Matrix3::identity()).abs().max() <= 1e-9);
            prop_assert!((r.determinant() - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn apply_matches_compose(a in arb_motion(), b in arb_motion(), p in prop::array::uniform3(-3.0f64..3.0)) {
            let lhs = a.compose(&b).apply(p);
            let rhs = a.apply(b.apply(p));
            for k in 0..3 {
                prop_assert!((lhs[k] - rhs[k]).abs() < 1e-9);
            }
        }
    }
}
