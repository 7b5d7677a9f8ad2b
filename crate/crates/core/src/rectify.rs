//! Stereo rectification: a precomputed forward map from raw to rectified
//! pixel coordinates, queried per event in O(1).

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::calib::{CameraIntrinsics, StereoRig};
use crate::event::CameraSide;

#[derive(Debug, Error, PartialEq)]
pub enum RectifyError {
    #[error("baseline direction is degenerate (parallel to the mean optical axis)")]
    DegenerateBaseline,
}

/// Shared pinhole intrinsics of the rectified pair. Corresponding points are
/// row-aligned and depth follows `z = f * baseline / disparity`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RectifiedIntrinsics {
    pub f: f64,
    pub cu: f64,
    pub cv: f64,
    pub width: u16,
    pub height: u16,
    pub baseline: f64,
}

struct CameraMap {
    width: u16,
    height: u16,
    forward: Vec<Option<(f64, f64)>>,
}

impl CameraMap {
    fn entry(&self, x: u32, y: u32) -> Option<(f64, f64)> {
        self.forward[y as usize * self.width as usize + x as usize]
    }
}

/// Dense per-pixel forward rectification maps for both cameras.
pub struct RectificationMap {
    pub rectified: RectifiedIntrinsics,
    maps: [CameraMap; 2],
    /// Rectifying rotations applied to each camera's viewing rays.
    rotations: [Matrix3<f64>; 2],
}

impl RectificationMap {
    pub fn build(rig: &StereoRig) -> Result<RectificationMap, RectifyError> {
        let (q_left, q_right) = rectifying_rotations(rig)?;
        let rectified = RectifiedIntrinsics {
            f: 0.25 * (rig.left.fx + rig.left.fy + rig.right.fx + rig.right.fy),
            cu: 0.5 * (rig.left.cx + rig.right.cx),
            cv: 0.5 * (rig.left.cy + rig.right.cy),
            width: rig.left.width,
            height: rig.left.height,
            baseline: rig.rectified_baseline,
        };
        let maps = [
            build_camera_map(&rig.left, &q_left, &rectified),
            build_camera_map(&rig.right, &q_right, &rectified),
        ];
        Ok(RectificationMap { rectified, maps, rotations: [q_left, q_right] })
    }

    /// Direct (non-interpolated) rectification of an arbitrary raw point.
    /// This is the same computation the dense map caches per integer pixel.
    pub fn rectify_exact(&self, cam: CameraSide, raw: &CameraIntrinsics, u: f64, v: f64) -> Option<(f64, f64)> {
        rectify_one(raw, &self.rotations[cam.index()], &self.rectified, u, v)
    }

    pub fn map_entry(&self, cam: CameraSide, x: u32, y: u32) -> Option<(f64, f64)> {
        self.maps[cam.index()].entry(x, y)
    }
}

/// Rectified coordinate of a raw pixel, via bilinear interpolation of the
/// dense forward map. Returns `None` when the point lands outside the
/// rectified image (caller skips the feature).
pub fn rectify_point(p: (f64, f64), cam: CameraSide, map: &RectificationMap) -> Option<(f64, f64)> {
    let m = &map.maps[cam.index()];
    let (u, v) = p;
    if u < 0.0 || v < 0.0 || u > (m.width - 1) as f64 || v > (m.height - 1) as f64 {
        return None;
    }
    let x0 = (u.floor() as u32).min(m.width as u32 - 1);
    let y0 = (v.floor() as u32).min(m.height as u32 - 1);
    let x1 = (x0 + 1).min(m.width as u32 - 1);
    let y1 = (y0 + 1).min(m.height as u32 - 1);
    let fx = u - x0 as f64;
    let fy = v - y0 as f64;

    let mut acc = (0.0, 0.0);
    for (xx, yy, w) in [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ] {
        if w == 0.0 {
            continue;
        }
        match m.entry(xx, yy) {
            Some((ru, rv)) => {
                acc.0 += w * ru;
                acc.1 += w * rv;
            }
            None => return None,
        }
    }
    Some(acc)
}

fn rectify_one(
    raw: &CameraIntrinsics,
    rotation: &Matrix3<f64>,
    rect: &RectifiedIntrinsics,
    u: f64,
    v: f64,
) -> Option<(f64, f64)> {
    let (xd, yd) = raw.normalize(u, v);
    let (xu, yu) = raw.undistort(xd, yd)?;
    let ray = rotation * Vector3::new(xu, yu, 1.0);
    if ray.z <= 1e-9 {
        return None;
    }
    let ru = rect.f * ray.x / ray.z + rect.cu;
    let rv = rect.f * ray.y / ray.z + rect.cv;
    if !(ru.is_finite() && rv.is_finite()) {
        return None;
    }
    if ru < 0.0 || rv < 0.0 || ru > (rect.width - 1) as f64 || rv > (rect.height - 1) as f64 {
        return None;
    }
    Some((ru, rv))
}

fn build_camera_map(
    raw: &CameraIntrinsics,
    rotation: &Matrix3<f64>,
    rect: &RectifiedIntrinsics,
) -> CameraMap {
    let mut forward = Vec::with_capacity(raw.width as usize * raw.height as usize);
    for y in 0..raw.height {
        for x in 0..raw.width {
            forward.push(rectify_one(raw, rotation, rect, x as f64, y as f64));
        }
    }
    CameraMap { width: raw.width, height: raw.height, forward }
}

/// Rotations that bring both image planes onto a common plane whose x-axis
/// runs along the baseline. Applied to viewing rays: `ray' = Q * ray`.
fn rectifying_rotations(rig: &StereoRig) -> Result<(Matrix3<f64>, Matrix3<f64>), RectifyError> {
    let center = rig.right_center_in_left();
    let e1 = center / center.norm();
    // Mean optical axis of the two cameras, in left-camera coordinates.
    let z_left = Vector3::new(0.0, 0.0, 1.0);
    let z_right = rig.rotation.row(2).transpose();
    let z_mid = (z_left + z_right).normalize();
    let e2_raw = z_mid.cross(&e1);
    if e2_raw.norm() < 1e-9 {
        return Err(RectifyError::DegenerateBaseline);
    }
    let e2 = e2_raw.normalize();
    let e3 = e1.cross(&e2);
    let q = Matrix3::from_rows(&[e1.transpose(), e2.transpose(), e3.transpose()]);
    Ok((q, q * rig.rotation.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::so3_exp;

    fn rectified_rig() -> StereoRig {
        let cam = CameraIntrinsics::pinhole(200.0, 160.0, 120.0, 320, 240);
        StereoRig::horizontal(cam, 0.1).unwrap()
    }

    #[test]
    fn identity_rig_maps_identically() {
        let map = RectificationMap::build(&rectified_rig()).unwrap();
        let p = rectify_point((10.0, 20.0), CameraSide::Left, &map).unwrap();
        assert!((p.0 - 10.0).abs() < 1e-9 && (p.1 - 20.0).abs() < 1e-9);
        for &(u, v) in &[(0.0, 0.0), (319.0, 239.0), (153.7, 88.2)] {
            for cam in [CameraSide::Left, CameraSide::Right] {
                let (ru, rv) = rectify_point((u, v), cam, &map).unwrap();
                assert!((ru - u).abs() < 1e-9 && (rv - v).abs() < 1e-9);
            }
        }
    }

    fn project_raw(cam: &CameraIntrinsics, p: &Vector3<f64>) -> (f64, f64) {
        let (xd, yd) = cam.distort(p.x / p.z, p.y / p.z);
        (cam.fx * xd + cam.cx, cam.fy * yd + cam.cy)
    }

    #[test]
    fn horizontal_rig_keeps_rows_aligned() {
        let rig = rectified_rig();
        let map = RectificationMap::build(&rig).unwrap();
        // A 3D point projected into both cameras lands on the same row.
        for &(x, y, z) in &[(0.2, -0.4, 2.0), (-0.5, 0.3, 5.0), (0.0, 0.0, 1.0)] {
            let p = Vector3::new(x, y, z);
            let (ul, vl) = project_raw(&rig.left, &p);
            let pr = rig.rotation * p + rig.translation;
            let (ur, vr) = project_raw(&rig.right, &pr);
            let (_, rvl) = rectify_point((ul, vl), CameraSide::Left, &map).unwrap();
            let (rul, rvr) = rectify_point((ur, vr), CameraSide::Right, &map).unwrap();
            assert!((rvl - rvr).abs() <= 0.5, "rows {rvl} vs {rvr}");
            assert!(rul < ul + 1e-9, "positive disparity expected");
        }
    }

    #[test]
    fn misaligned_distorted_rig_keeps_rows_aligned() {
        // A realistic rig: differing intrinsics, radial distortion, and a
        // small extrinsic rotation off the ideal mount.
        let left =
            CameraIntrinsics::new(281.4, 279.3, 170.8, 131.2, 346, 260, &[-0.12, 0.018]).unwrap();
        let right =
            CameraIntrinsics::new(278.7, 280.1, 174.3, 127.9, 346, 260, &[-0.115, 0.016]).unwrap();
        let rotation = so3_exp(&Vector3::new(0.008, -0.011, 0.006));
        let rig = StereoRig::new(left, right, rotation, Vector3::new(-0.0999, 0.0012, -0.0008))
            .unwrap();
        let map = RectificationMap::build(&rig).unwrap();
        let mut checked = 0;
        for &(x, y, z) in &[
            (0.2, -0.4, 2.0),
            (-0.5, 0.3, 5.0),
            (0.1, 0.1, 1.5),
            (0.7, 0.5, 4.0),
            (-0.6, -0.5, 3.0),
        ] {
            let p = Vector3::new(x, y, z);
            let (ul, vl) = project_raw(&rig.left, &p);
            let pr = rig.rotation * p + rig.translation;
            let (ur, vr) = project_raw(&rig.right, &pr);
            let (Some((rul, rvl)), Some((rur, rvr))) = (
                rectify_point((ul, vl), CameraSide::Left, &map),
                rectify_point((ur, vr), CameraSide::Right, &map),
            ) else {
                continue;
            };
            checked += 1;
            assert!((rvl - rvr).abs() <= 0.5, "rows {rvl} vs {rvr} at {p:?}");
            let disparity = rul - rur;
            let expected = map.rectified.f * map.rectified.baseline / z;
            assert!(
                (disparity - expected).abs() < 0.6,
                "disparity {disparity} vs f*b/z {expected}"
            );
        }
        assert!(checked >= 4);
    }

    // Oracle: independent undistort-then-project chain, with the undistortion
    // solved by plain fixed-point search written out here.
    fn oracle_rectify(
        raw: &CameraIntrinsics,
        q: &Matrix3<f64>,
        rect: &RectifiedIntrinsics,
        u: f64,
        v: f64,
    ) -> (f64, f64) {
        let xd = (u - raw.cx) / raw.fx;
        let yd = (v - raw.cy) / raw.fy;
        let [k1, k2, p1, p2, k3] = raw.distortion;
        let distort = |x: f64, y: f64| {
            let r2 = x * x + y * y;
            let radial = 1.0 + k1 * r2 + k2 * r2 * r2 + k3 * r2.powi(3);
            (
                x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x),
                y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y,
            )
        };
        let (mut x, mut y) = (xd, yd);
        for _ in 0..200 {
            let (ex, ey) = distort(x, y);
            x += xd - ex;
            y += yd - ey;
        }
        let ray = q * Vector3::new(x, y, 1.0);
        (
            rect.f * ray.x / ray.z + rect.cu,
            rect.f * ray.y / ray.z + rect.cv,
        )
    }

    #[test]
    fn distorted_rig_matches_undistortion_oracle() {
        let left =
            CameraIntrinsics::new(210.0, 205.0, 158.0, 122.0, 320, 240, &[-0.2]).unwrap();
        let right =
            CameraIntrinsics::new(198.0, 202.0, 161.0, 119.0, 320, 240, &[-0.2, 0.04]).unwrap();
        let rotation = so3_exp(&Vector3::new(0.01, -0.02, 0.005));
        let rig = StereoRig::new(left, right, rotation, Vector3::new(-0.12, 0.001, -0.002))
            .unwrap();
        let map = RectificationMap::build(&rig).unwrap();
        let (q_left, q_right) = rectifying_rotations(&rig).unwrap();

        let mut checked = 0;
        for &(u, v) in &[(60.0, 60.0), (160.0, 120.0), (250.0, 200.0), (80.0, 170.0)] {
            for (cam, raw, q) in [
                (CameraSide::Left, &rig.left, &q_left),
                (CameraSide::Right, &rig.right, &q_right),
            ] {
                let Some((ru, rv)) = rectify_point((u, v), cam, &map) else {
                    continue;
                };
                let (ou, ov) = oracle_rectify(raw, q, &map.rectified, u, v);
                assert!(
                    (ru - ou).abs() < 1e-6 && (rv - ov).abs() < 1e-6,
                    "cam {cam:?} at ({u},{v}): map ({ru},{rv}) vs oracle ({ou},{ov})"
                );
                checked += 1;
            }
        }
        assert!(checked >= 6, "too few in-bounds probes");
    }

    #[test]
    fn out_of_bounds_map_entries_are_flagged() {
        // Strong negative radial distortion pushes undistorted border pixels
        // far outside the rectified frame (or beyond the invertible region).
        let cam = CameraIntrinsics::new(120.0, 120.0, 160.0, 120.0, 320, 240, &[-0.25]).unwrap();
        let rig = StereoRig::new(
            cam,
            cam,
            Matrix3::identity(),
            Vector3::new(-0.1, 0.0, 0.0),
        )
        .unwrap();
        let map = RectificationMap::build(&rig).unwrap();
        assert!(rectify_point((0.0, 0.0), CameraSide::Left, &map).is_none());
        assert!(rectify_point((160.0, 120.0), CameraSide::Left, &map).is_some());
    }
}
