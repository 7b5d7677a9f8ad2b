//! Camera intrinsics, radial-tangential distortion, and the stereo rig.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::se3::orthonormality_error;

#[derive(Debug, Error, PartialEq)]
pub enum CalibError {
    #[error("focal length must be positive (got fx={fx}, fy={fy})")]
    BadFocal { fx: f64, fy: f64 },
    #[error("principal point ({cx}, {cy}) outside sensor {width}x{height}")]
    BadPrincipalPoint { cx: f64, cy: f64, width: u16, height: u16 },
    #[error("sensor resolution must be nonzero")]
    BadResolution,
    #[error("extrinsic rotation is not orthonormal with det +1 (error {0:.3e})")]
    BadRotation(f64),
    #[error("stereo baseline must be positive")]
    BadBaseline,
    #[error("left and right sensor resolutions differ")]
    MismatchedResolution,
}

/// Pinhole intrinsics with a radial-tangential distortion model
/// (k1 k2 p1 p2 k3; shorter coefficient lists are zero-padded).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u16,
    pub height: u16,
    pub distortion: [f64; 5],
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u16,
        height: u16,
        distortion: &[f64],
    ) -> Result<CameraIntrinsics, CalibError> {
        if width == 0 || height == 0 {
            return Err(CalibError::BadResolution);
        }
        if !fx.is_finite() || fx <= 0.0 || !fy.is_finite() || fy <= 0.0 {
            return Err(CalibError::BadFocal { fx, fy });
        }
        if !(0.0 <= cx && cx < width as f64 && 0.0 <= cy && cy < height as f64) {
            return Err(CalibError::BadPrincipalPoint { cx, cy, width, height });
        }
        let mut d = [0.0; 5];
        for (slot, &value) in d.iter_mut().zip(distortion.iter()) {
            *slot = value;
        }
        Ok(CameraIntrinsics { fx, fy, cx, cy, width, height, distortion: d })
    }

    /// Ideal pinhole camera with no distortion.
    pub fn pinhole(f: f64, cx: f64, cy: f64, width: u16, height: u16) -> CameraIntrinsics {
        CameraIntrinsics::new(f, f, cx, cy, width, height, &[]).expect("valid pinhole")
    }

    pub fn has_distortion(&self) -> bool {
        self.distortion.iter().any(|&k| k != 0.0)
    }

    /// Pixel to normalized image coordinates (still distorted).
    pub fn normalize(&self, u: f64, v: f64) -> (f64, f64) {
        ((u - self.cx) / self.fx, (v - self.cy) / self.fy)
    }

    /// Applies the distortion model to undistorted normalized coordinates.
    pub fn distort(&self, x: f64, y: f64) -> (f64, f64) {
        let [k1, k2, p1, p2, k3] = self.distortion;
        let r2 = x * x + y * y;
        let radial = 1.0 + k1 * r2 + k2 * r2 * r2 + k3 * r2 * r2 * r2;
        let dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
        let dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
        (x * radial + dx, y * radial + dy)
    }

    /// Inverts the distortion model by fixed-point iteration. Returns `None`
    /// for points outside the invertible region of the model (the iteration
    /// diverges there, which flags the pixel as unrectifiable).
    pub fn undistort(&self, xd: f64, yd: f64) -> Option<(f64, f64)> {
        if !self.has_distortion() {
            return Some((xd, yd));
        }
        let [k1, k2, p1, p2, k3] = self.distortion;
        let (mut x, mut y) = (xd, yd);
        for _ in 0..50 {
            let r2 = x * x + y * y;
            let radial = 1.0 + k1 * r2 + k2 * r2 * r2 + k3 * r2 * r2 * r2;
            if !radial.is_finite() || radial.abs() < 1e-6 {
                return None;
            }
            let dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
            let dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
            x = (xd - dx) / radial;
            y = (yd - dy) / radial;
            if !(x.is_finite() && y.is_finite()) {
                return None;
            }
        }
        let (bx, by) = self.distort(x, y);
        let err = ((bx - xd).powi(2) + (by - yd).powi(2)).sqrt();
        (err < 1e-6).then_some((x, y))
    }
}

/// Calibrated stereo pair. The extrinsic maps left-camera coordinates to
/// right-camera coordinates: `x_r = R x_l + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct StereoRig {
    pub left: CameraIntrinsics,
    pub right: CameraIntrinsics,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    /// Distance between the camera centers, in meters; equals the baseline of
    /// the rectified pair.
    pub rectified_baseline: f64,
}

impl StereoRig {
    pub fn new(
        left: CameraIntrinsics,
        right: CameraIntrinsics,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<StereoRig, CalibError> {
        let err = orthonormality_error(&rotation);
        if err > 1e-6 || rotation.determinant() < 0.0 {
            return Err(CalibError::BadRotation(err));
        }
        if left.width != right.width || left.height != right.height {
            return Err(CalibError::MismatchedResolution);
        }
        let rectified_baseline = translation.norm();
        if !rectified_baseline.is_finite() || rectified_baseline <= 0.0 {
            return Err(CalibError::BadBaseline);
        }
        Ok(StereoRig { left, right, rotation, translation, rectified_baseline })
    }

    /// Horizontal rig with identical cameras separated by `baseline` meters,
    /// already rectified by construction.
    pub fn horizontal(cam: CameraIntrinsics, baseline: f64) -> Result<StereoRig, CalibError> {
        StereoRig::new(
            cam,
            cam,
            Matrix3::identity(),
            Vector3::new(-baseline, 0.0, 0.0),
        )
    }

    /// Right-camera center expressed in the left camera frame.
    pub fn right_center_in_left(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}
