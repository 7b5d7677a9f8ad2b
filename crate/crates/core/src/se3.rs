//! Rigid transforms, rotation exponential/logarithm, and timed trajectories.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Orthonormality tolerance every rotation in the system must satisfy.
pub const ROTATION_TOL: f64 = 1e-9;

/// Compositions between nearest-rotation re-projections. Bounds numerical
/// drift on long chains without paying the projection on every step.
const RENORMALIZE_EVERY: u32 = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("rotation matrix is not orthonormal with det +1 (error {0:.3e})")]
    NotARotation(f64),
}

/// A rigid transform: `x' = R x + t`.
///
/// `compose(a, b)` applies `b` first and then `a`, i.e. it equals the 4x4
/// homogeneous matrix product `A * B`.
#[derive(Clone, Copy, Debug)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    compositions: u32,
}

impl PartialEq for Pose {
    fn eq(&self, other: &Self) -> bool {
        self.rotation == other.rotation && self.translation == other.translation
    }
}

impl Pose {
    pub fn identity() -> Pose {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            compositions: 0,
        }
    }

    /// Builds a pose from parts, validating the rotation to 1e-6 and then
    /// snapping it to the nearest rotation so the internal 1e-9 invariant
    /// holds from the start.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Pose, GeomError> {
        let err = orthonormality_error(&rotation);
        if err > 1e-6 || rotation.determinant() < 0.0 {
            return Err(GeomError::NotARotation(err));
        }
        Ok(Pose {
            rotation: nearest_rotation(&rotation),
            translation,
            compositions: 0,
        })
    }

    /// Internal constructor for rotations that are exact by construction.
    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Pose {
        Pose {
            rotation,
            translation,
            compositions: 0,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Pose {
        Pose::from_parts_unchecked(Matrix3::identity(), translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Rigid composition; equals the homogeneous product `self * other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut out = Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
            compositions: self
                .compositions
                .saturating_add(other.compositions)
                .saturating_add(1),
        };
        if out.compositions >= RENORMALIZE_EVERY {
            out.rotation = nearest_rotation(&out.rotation);
            out.compositions = 0;
        }
        debug_assert!(orthonormality_error(&out.rotation) < ROTATION_TOL);
        out
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
            compositions: self.compositions,
        }
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        so3_log(&self.rotation).norm()
    }

    /// Applies the 6-parameter local increment used by the optimizer:
    /// `R <- exp(omega) * R`, `t <- t + nu`.
    pub fn apply_increment(&self, omega: &Vector3<f64>, nu: &Vector3<f64>) -> Pose {
        let mut rotation = so3_exp(omega) * self.rotation;
        let compositions = self.compositions + 1;
        if compositions >= RENORMALIZE_EVERY || orthonormality_error(&rotation) > ROTATION_TOL {
            rotation = nearest_rotation(&rotation);
        }
        let pose = Pose {
            rotation,
            translation: self.translation + nu,
            compositions: compositions % RENORMALIZE_EVERY,
        };
        debug_assert!(orthonormality_error(&pose.rotation) < ROTATION_TOL);
        pose
    }

    /// Validates the rotation invariant explicitly (used by tests and after
    /// optimizer steps).
    pub fn check_rotation(&self) -> Result<(), GeomError> {
        let err = orthonormality_error(&self.rotation);
        if err > ROTATION_TOL || self.rotation.determinant() < 0.0 {
            return Err(GeomError::NotARotation(err));
        }
        Ok(())
    }
}

/// Max-abs entry of `R^T R - I`.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    let d = r.transpose() * r - Matrix3::identity();
    d.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Skew-symmetric matrix such that `skew(a) * b = a x b`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues rotation from a rotation vector.
pub fn so3_exp(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta = omega.norm();
    if theta < 1e-12 {
        let k = skew(omega);
        return Matrix3::identity() + k + 0.5 * k * k;
    }
    let axis = omega / theta;
    let k = skew(&axis);
    Matrix3::identity() + theta.sin() * k + (1.0 - theta.cos()) * (k * k)
}

/// Rotation vector of a rotation matrix.
pub fn so3_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let axial = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    if theta < 1e-9 {
        return 0.5 * axial;
    }
    if theta > std::f64::consts::PI - 1e-6 {
        // Near pi the axial part cancels; recover the axis from R + I.
        let m = r + Matrix3::identity();
        let col = (0..3)
            .max_by(|&a, &b| {
                m.column(a)
                    .norm()
                    .partial_cmp(&m.column(b).norm())
                    .unwrap()
            })
            .unwrap();
        let axis = m.column(col).normalize();
        // Fix the sign with the axial part when it is not fully degenerate.
        let sign = if axial.dot(&axis) < 0.0 { -1.0 } else { 1.0 };
        return sign * theta * axis;
    }
    (theta / (2.0 * theta.sin())) * axial
}

/// Nearest rotation matrix in Frobenius norm (polar factor via SVD).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * vt;
    }
    r
}

/// Provenance of a trajectory entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimateQuality {
    /// Regular estimate from matched features.
    Estimated,
    /// Matching or optimization failed; identity increment was applied.
    Failed,
    /// Emitted by the maximum-interval override with too few events.
    Stalled,
}

/// A time-stamped absolute pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimedPose {
    pub stamp_us: u64,
    pub pose: Pose,
    pub quality: EstimateQuality,
}

/// Sum of consecutive translation-increment norms, in meters.
pub fn path_length(trajectory: &[TimedPose]) -> f64 {
    trajectory
        .windows(2)
        .map(|w| (w[1].pose.translation() - w[0].pose.translation()).norm())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_pose(rng: &mut StdRng) -> Pose {
        let omega = Vector3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        let t = Vector3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        );
        Pose::from_parts_unchecked(so3_exp(&omega), t)
    }

    fn homogeneous(p: &Pose) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(p.rotation());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(p.translation());
        m
    }

    #[test]
    fn compose_identity_is_neutral() {
        let mut rng = StdRng::seed_from_u64(1);
        let p = random_pose(&mut rng);
        let q = Pose::identity().compose(&p);
        assert!((q.rotation() - p.rotation()).norm() < 1e-15);
        assert!((q.translation() - p.translation()).norm() < 1e-15);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..20 {
            let p = random_pose(&mut rng);
            let q = p.compose(&p.inverse());
            assert!((q.rotation() - Matrix3::identity()).norm() < 1e-12);
            assert!(q.translation().norm() < 1e-12);
        }
    }

    // Oracle: composition must equal the 4x4 homogeneous matrix product.
    #[test]
    fn compose_matches_homogeneous_product() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..50 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let c = a.compose(&b);
            let m = homogeneous(&a) * homogeneous(&b);
            assert!((homogeneous(&c) - m).abs().max() < 1e-12);
        }
    }

    #[test]
    fn compose_associative() {
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..20 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let c = random_pose(&mut rng);
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            assert!((left.rotation() - right.rotation()).norm() < 1e-10);
            assert!((left.translation() - right.translation()).norm() < 1e-10);
        }
    }

    #[test]
    fn long_composition_chains_stay_orthonormal() {
        let mut rng = StdRng::seed_from_u64(5);
        let step = random_pose(&mut rng);
        let mut acc = Pose::identity();
        for _ in 0..20_000 {
            acc = acc.compose(&step);
        }
        assert!(orthonormality_error(acc.rotation()) < ROTATION_TOL);
        acc.check_rotation().unwrap();
    }

    #[test]
    fn exp_log_roundtrip() {
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..100 {
            let omega = Vector3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            );
            let omega = if omega.norm() > 3.1 {
                omega.normalize() * 3.1
            } else {
                omega
            };
            let back = so3_log(&so3_exp(&omega));
            assert!((back - omega).norm() < 1e-8, "omega {omega:?} back {back:?}");
        }
    }

    #[test]
    fn rejects_non_rotation() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Pose::new(m, Vector3::zeros()).is_err());
    }

    #[test]
    fn path_length_sums_increments() {
        let traj: Vec<TimedPose> = (0..5)
            .map(|i| TimedPose {
                stamp_us: i as u64,
                pose: Pose::from_translation(Vector3::new(i as f64 * 0.5, 0.0, 0.0)),
                quality: EstimateQuality::Estimated,
            })
            .collect();
        assert!((path_length(&traj) - 2.0).abs() < 1e-15);
    }
}
