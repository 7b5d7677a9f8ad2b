//! Inter-view motion estimation: triangulation of matched features from the
//! previous view and RANSAC-seeded Gauss-Newton minimization of the stereo
//! reprojection error.

use nalgebra::{Matrix6, Vector2, Vector3, Vector6};
use rand::Rng;
use thiserror::Error;

use crate::event::CameraSide;
use crate::matcher::QuadMatch;
use crate::rectify::RectifiedIntrinsics;
use crate::se3::{skew, Pose};

/// Penalty residual (per component, in pixels) for points that fall behind
/// the camera under a candidate pose.
const BEHIND_CAMERA_RESIDUAL: f64 = 1e3;

#[derive(Debug, Error, PartialEq)]
pub enum MotionError {
    #[error("need at least {needed} features, got {got}")]
    TooFewFeatures { needed: usize, got: usize },
    #[error("normal equations are singular (degenerate geometry)")]
    Singular,
    #[error("best hypothesis had {best} inliers, below the minimum of {min}")]
    NoConsensus { best: usize, min: usize },
}

/// A triangulated scene point in the previous-left camera frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Landmark {
    pub position: Vector3<f64>,
    /// Index of the match this landmark came from.
    pub source: usize,
}

/// One feature for motion estimation: a previous-view landmark and its
/// current-view rectified observations.
#[derive(Clone, Copy, Debug)]
pub struct Observation {
    pub point: Vector3<f64>,
    pub left: Vector2<f64>,
    pub right: Vector2<f64>,
}

/// Result of a motion solve. `pose` maps previous-view camera coordinates to
/// current-view camera coordinates.
#[derive(Clone, Debug)]
pub struct MotionEstimate {
    pub pose: Pose,
    pub inliers: Vec<usize>,
    /// Sum of squared reprojection residuals, in px^2.
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Back-projects a match using its previous-view stereo pair:
/// `z = f b / d`, rows averaged between the cameras. Rejects matches whose
/// disparity is below `d_min_px` or whose depth exceeds `z_max_m`.
pub fn triangulate(
    m: &QuadMatch,
    rect: &RectifiedIntrinsics,
    source: usize,
    d_min_px: f64,
    z_max_m: f64,
) -> Option<Landmark> {
    let d = m.disparity_prev();
    if d < d_min_px {
        return None;
    }
    let z = rect.f * rect.baseline / d;
    if !(z > 0.0 && z < z_max_m) {
        return None;
    }
    let y_row = 0.5 * (m.prev_left.1 + m.prev_right.1);
    let x = (m.prev_left.0 - rect.cu) * z / rect.f;
    let y = (y_row - rect.cv) * z / rect.f;
    Some(Landmark { position: Vector3::new(x, y, z), source })
}

/// Projects a point under `pose` into the rectified camera `side`. The right
/// camera is offset along the baseline. Errors with the behind-camera depth
/// when the transformed point has non-positive z.
pub fn project(
    point: &Vector3<f64>,
    pose: &Pose,
    rect: &RectifiedIntrinsics,
    side: CameraSide,
) -> Result<Vector2<f64>, f64> {
    let p = pose.transform(point);
    if p.z <= 0.0 {
        return Err(p.z);
    }
    let x = match side {
        CameraSide::Left => p.x,
        CameraSide::Right => p.x - rect.baseline,
    };
    Ok(Vector2::new(
        rect.f * x / p.z + rect.cu,
        rect.f * p.y / p.z + rect.cv,
    ))
}

/// Stacked residual vector (4 components per feature: left u,v then right
/// u,v) and per-feature behind-camera flags.
pub fn reprojection_residuals(
    obs: &[Observation],
    pose: &Pose,
    rect: &RectifiedIntrinsics,
) -> (Vec<f64>, Vec<bool>) {
    let mut residuals = Vec::with_capacity(obs.len() * 4);
    let mut behind = Vec::with_capacity(obs.len());
    for o in obs {
        match (
            project(&o.point, pose, rect, CameraSide::Left),
            project(&o.point, pose, rect, CameraSide::Right),
        ) {
            (Ok(l), Ok(r)) => {
                residuals.extend_from_slice(&[
                    o.left.x - l.x,
                    o.left.y - l.y,
                    o.right.x - r.x,
                    o.right.y - r.y,
                ]);
                behind.push(false);
            }
            _ => {
                residuals.extend_from_slice(&[BEHIND_CAMERA_RESIDUAL; 4]);
                behind.push(true);
            }
        }
    }
    (residuals, behind)
}

/// Sum of squared residuals.
pub fn reprojection_cost(obs: &[Observation], pose: &Pose, rect: &RectifiedIntrinsics) -> f64 {
    let (r, _) = reprojection_residuals(obs, pose, rect);
    r.iter().map(|v| v * v).sum()
}

/// Maximum of the left/right reprojection pixel distances for one feature;
/// infinite when the point falls behind the camera.
pub fn reprojection_distance(
    o: &Observation,
    pose: &Pose,
    rect: &RectifiedIntrinsics,
) -> f64 {
    match (
        project(&o.point, pose, rect, CameraSide::Left),
        project(&o.point, pose, rect, CameraSide::Right),
    ) {
        (Ok(l), Ok(r)) => ((o.left - l).norm()).max((o.right - r).norm()),
        _ => f64::INFINITY,
    }
}

/// Accumulates the normal equations for the 6-parameter local increment
/// (rotation vector omega, translation nu): residual r = observed -
/// projected, J = dr/d(omega, nu).
fn normal_equations(
    obs: &[Observation],
    pose: &Pose,
    rect: &RectifiedIntrinsics,
) -> (Matrix6<f64>, Vector6<f64>, f64) {
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    let mut cost = 0.0;
    for o in obs {
        let p = pose.transform(&o.point);
        if p.z <= 0.0 {
            cost += 4.0 * BEHIND_CAMERA_RESIDUAL * BEHIND_CAMERA_RESIDUAL;
            continue; // constant penalty, no gradient
        }
        // d p / d omega = -[R X]_x, d p / d nu = I.
        let rx = pose.rotation() * o.point;
        let dp_domega = -skew(&rx);
        let inv_z = 1.0 / p.z;
        let f = rect.f;
        for side in [CameraSide::Left, CameraSide::Right] {
            let (x_eff, observed) = match side {
                CameraSide::Left => (p.x, o.left),
                CameraSide::Right => (p.x - rect.baseline, o.right),
            };
            let predicted = Vector2::new(f * x_eff * inv_z + rect.cu, f * p.y * inv_z + rect.cv);
            let r = observed - predicted;
            cost += r.norm_squared();
            // d pi / d p (2x3).
            let du = Vector3::new(f * inv_z, 0.0, -f * x_eff * inv_z * inv_z);
            let dv = Vector3::new(0.0, f * inv_z, -f * p.y * inv_z * inv_z);
            // Row of J for u and v: dr/d(omega,nu) = -dpi/dp * [dp/domega | I].
            let ju_omega = -(dp_domega.transpose() * du);
            let jv_omega = -(dp_domega.transpose() * dv);
            let ju = Vector6::new(ju_omega.x, ju_omega.y, ju_omega.z, -du.x, -du.y, -du.z);
            let jv = Vector6::new(jv_omega.x, jv_omega.y, jv_omega.z, -dv.x, -dv.y, -dv.z);
            h += ju * ju.transpose() + jv * jv.transpose();
            g += ju * r.x + jv * r.y;
        }
    }
    (h, g, cost)
}

/// Analytic gradient of the reprojection cost with respect to the local
/// 6-parameter increment (2 J^T r with r = observed - predicted), for
/// validating the Jacobians against finite differences.
pub fn cost_gradient(
    obs: &[Observation],
    pose: &Pose,
    rect: &RectifiedIntrinsics,
) -> [f64; 6] {
    let (_, g, _) = normal_equations(obs, pose, rect);
    // r = z - pi, cost = |r|^2, d cost / d delta = 2 J^T r = 2 g.
    let mut out = [0.0; 6];
    for (slot, v) in out.iter_mut().zip(g.iter()) {
        *slot = 2.0 * v;
    }
    out
}

/// Gauss-Newton solver settings.
#[derive(Clone, Copy, Debug)]
pub struct GaussNewtonOptions {
    pub max_iterations: usize,
    pub step_tolerance: f64,
}

impl Default for GaussNewtonOptions {
    fn default() -> Self {
        GaussNewtonOptions { max_iterations: 20, step_tolerance: 1e-10 }
    }
}

/// Iterates `pose <- increment(delta) o pose` where delta solves the normal
/// equations; steps that would raise the cost are halved and, failing that,
/// rejected, so the cost never increases across accepted iterations.
pub fn gauss_newton(
    obs: &[Observation],
    rect: &RectifiedIntrinsics,
    init: &Pose,
    opts: &GaussNewtonOptions,
) -> Result<MotionEstimate, MotionError> {
    if obs.len() < 3 {
        return Err(MotionError::TooFewFeatures { needed: 3, got: obs.len() });
    }
    let mut pose = *init;
    let mut cost = reprojection_cost(obs, &pose, rect);
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iterations {
        iterations += 1;
        let (h, g, _) = normal_equations(obs, &pose, rect);
        let Some(chol) = h.cholesky() else {
            if iterations == 1 {
                return Err(MotionError::Singular);
            }
            break;
        };
        let delta = chol.solve(&-g);
        if delta.norm() < opts.step_tolerance {
            converged = true;
            break;
        }
        // Backtracking keeps the accepted cost sequence non-increasing.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let omega = Vector3::new(delta[0], delta[1], delta[2]) * scale;
            let nu = Vector3::new(delta[3], delta[4], delta[5]) * scale;
            let candidate = pose.apply_increment(&omega, &nu);
            let c = reprojection_cost(obs, &candidate, rect);
            if c <= cost {
                pose = candidate;
                pose.check_rotation().expect("optimizer step broke the rotation");
                assert!(c <= cost, "cost increased across an accepted iteration");
                cost = c;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
        if scale * delta.norm() < opts.step_tolerance {
            converged = true;
            break;
        }
    }
    Ok(MotionEstimate {
        pose,
        inliers: Vec::new(),
        final_cost: cost,
        iterations,
        converged,
    })
}

/// RANSAC settings. Sampling is drawn up-front from the caller's seeded RNG
/// so the estimate is bit-reproducible.
#[derive(Clone, Copy, Debug)]
pub struct RansacParams {
    pub iterations: usize,
    pub sample_size: usize,
    pub inlier_threshold_px: f64,
    pub min_inliers: usize,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            iterations: 50,
            sample_size: 3,
            inlier_threshold_px: 2.0,
            min_inliers: 6,
        }
    }
}

fn inlier_set(
    obs: &[Observation],
    pose: &Pose,
    rect: &RectifiedIntrinsics,
    threshold: f64,
) -> Vec<usize> {
    obs.iter()
        .enumerate()
        .filter(|(_, o)| reprojection_distance(o, pose, rect) <= threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Robust motion estimate: minimal-sample Gauss-Newton hypotheses from
/// identity init, inlier scoring, and a final refinement over the winning
/// inlier set.
pub fn ransac_estimate<R: Rng>(
    obs: &[Observation],
    rect: &RectifiedIntrinsics,
    params: &RansacParams,
    rng: &mut R,
) -> Result<MotionEstimate, MotionError> {
    let n = obs.len();
    if n < params.sample_size {
        return Err(MotionError::TooFewFeatures { needed: params.sample_size, got: n });
    }
    // All hypothesis samples are drawn before any evaluation.
    let samples: Vec<Vec<usize>> = (0..params.iterations)
        .map(|_| {
            let mut picked = Vec::with_capacity(params.sample_size);
            while picked.len() < params.sample_size {
                let k = rng.random_range(0..n);
                if !picked.contains(&k) {
                    picked.push(k);
                }
            }
            picked
        })
        .collect();

    let gn_opts = GaussNewtonOptions::default();
    let mut best: Option<(Vec<usize>, Pose, f64)> = None; // (inliers, pose, cost)
    for sample in &samples {
        let minimal: Vec<Observation> = sample.iter().map(|&i| obs[i]).collect();
        let Ok(hypo) = gauss_newton(&minimal, rect, &Pose::identity(), &gn_opts) else {
            continue;
        };
        let inliers = inlier_set(obs, &hypo.pose, rect, params.inlier_threshold_px);
        let better = match &best {
            None => true,
            Some((bi, _, bc)) => {
                inliers.len() > bi.len() || (inliers.len() == bi.len() && hypo.final_cost < *bc)
            }
        };
        if better {
            best = Some((inliers, hypo.pose, hypo.final_cost));
        }
    }
    let Some((inliers, hypo_pose, _)) = best else {
        return Err(MotionError::Singular);
    };
    if inliers.len() < params.min_inliers {
        return Err(MotionError::NoConsensus { best: inliers.len(), min: params.min_inliers });
    }

    // Refine on all inliers, then re-derive the inlier set at the refined pose.
    let inlier_obs: Vec<Observation> = inliers.iter().map(|&i| obs[i]).collect();
    let refined = gauss_newton(&inlier_obs, rect, &hypo_pose, &gn_opts)?;
    let final_inliers = inlier_set(obs, &refined.pose, rect, params.inlier_threshold_px);
    if final_inliers.len() < params.min_inliers {
        return Err(MotionError::NoConsensus {
            best: final_inliers.len(),
            min: params.min_inliers,
        });
    }
    let final_obs: Vec<Observation> = final_inliers.iter().map(|&i| obs[i]).collect();
    let final_cost = reprojection_cost(&final_obs, &refined.pose, rect);
    Ok(MotionEstimate {
        pose: refined.pose,
        inliers: final_inliers,
        final_cost,
        iterations: refined.iterations,
        converged: refined.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::QuadMatch;
    use crate::se3::so3_exp;
    use rand::rngs::StdRng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rect() -> RectifiedIntrinsics {
        RectifiedIntrinsics { f: 100.0, cu: 173.0, cv: 130.0, width: 346, height: 260, baseline: 0.1 }
    }

    fn quad(prev_left: (f64, f64), prev_right: (f64, f64)) -> QuadMatch {
        QuadMatch {
            cur_left: prev_left,
            cur_right: prev_right,
            prev_left,
            prev_right,
            scores: [1.0; 4],
            depth: None,
        }
    }

    #[test]
    fn depth_from_disparity() {
        let r = rect();
        // f = 100 px, b = 0.1 m, d = 10 px -> z = 1 m.
        let m = quad((183.0, 130.0), (173.0, 130.0));
        let lm = triangulate(&m, &r, 0, 0.5, 100.0).unwrap();
        assert!((lm.position.z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn principal_point_is_on_axis() {
        let r = rect();
        let m = quad((173.0, 130.0), (163.0, 130.0));
        let lm = triangulate(&m, &r, 0, 0.5, 100.0).unwrap();
        assert!(lm.position.x.abs() < 1e-12 && lm.position.y.abs() < 1e-12);
    }

    #[test]
    fn small_disparity_is_rejected() {
        let r = rect();
        let m = quad((173.3, 130.0), (173.0, 130.0));
        assert!(triangulate(&m, &r, 0, 0.5, 100.0).is_none());
    }

    // Oracle: project random scene points into both cameras, triangulate,
    // and recover the original positions.
    #[test]
    fn project_then_triangulate_roundtrip() {
        let r = rect();
        let mut rng = StdRng::seed_from_u64(71);
        let identity = Pose::identity();
        for _ in 0..200 {
            use rand::Rng;
            let p = Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(0.5..20.0),
            );
            let l = project(&p, &identity, &r, CameraSide::Left).unwrap();
            let rr = project(&p, &identity, &r, CameraSide::Right).unwrap();
            let m = quad((l.x, l.y), (rr.x, rr.y));
            if let Some(lm) = triangulate(&m, &r, 0, 0.5, 100.0) {
                assert!((lm.position - p).norm() < 1e-9, "{p:?} vs {:?}", lm.position);
            } else {
                // Only far points may be rejected.
                assert!(r.f * r.baseline / p.z < 0.5);
            }
        }
    }

    #[test]
    fn projection_matches_homogeneous_pipeline_oracle() {
        use nalgebra::Matrix4;
        let r = rect();
        let mut rng = StdRng::seed_from_u64(73);
        for _ in 0..100 {
            use rand::Rng;
            let omega = Vector3::new(
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
            );
            let t = Vector3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            );
            let pose = Pose::new(so3_exp(&omega), t).unwrap();
            let p = Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(2.0..20.0),
            );

            let mut hom = Matrix4::identity();
            hom.fixed_view_mut::<3, 3>(0, 0).copy_from(pose.rotation());
            hom.fixed_view_mut::<3, 1>(0, 3).copy_from(pose.translation());
            let ph = hom * p.push(1.0);
            if ph.z <= 0.0 {
                continue;
            }
            let expect_l =
                Vector2::new(r.f * ph.x / ph.z + r.cu, r.f * ph.y / ph.z + r.cv);
            let expect_r =
                Vector2::new(r.f * (ph.x - r.baseline) / ph.z + r.cu, r.f * ph.y / ph.z + r.cv);
            let got_l = project(&p, &pose, &r, CameraSide::Left).unwrap();
            let got_r = project(&p, &pose, &r, CameraSide::Right).unwrap();
            assert!((got_l - expect_l).norm() < 1e-9);
            assert!((got_r - expect_r).norm() < 1e-9);
        }
    }

    #[test]
    fn behind_camera_is_an_error() {
        let r = rect();
        let p = Vector3::new(0.0, 0.0, -1.0);
        assert!(project(&p, &Pose::identity(), &r, CameraSide::Left).is_err());
    }

    fn synthetic_observations(
        rng: &mut StdRng,
        n: usize,
        motion: &Pose,
        rect: &RectifiedIntrinsics,
    ) -> Vec<Observation> {
        use rand::Rng;
        (0..n)
            .map(|_| {
                let p = Vector3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(1.0..15.0),
                );
                Observation {
                    point: p,
                    left: project(&p, motion, rect, CameraSide::Left).unwrap(),
                    right: project(&p, motion, rect, CameraSide::Right).unwrap(),
                }
            })
            .collect()
    }

    #[test]
    fn residuals_vanish_on_consistent_data() {
        let r = rect();
        let mut rng = StdRng::seed_from_u64(79);
        let motion = Pose::new(
            so3_exp(&Vector3::new(0.02, -0.01, 0.03)),
            Vector3::new(0.05, -0.02, 0.1),
        )
        .unwrap();
        let obs = synthetic_observations(&mut rng, 40, &motion, &r);
        assert!(reprojection_cost(&obs, &motion, &r) < 1e-12);
        // Identity pose on a "static" observation set.
        let static_obs = synthetic_observations(&mut rng, 40, &Pose::identity(), &r);
        assert!(reprojection_cost(&static_obs, &Pose::identity(), &r) < 1e-24);
    }

    #[test]
    fn cost_matches_per_feature_recomputation_oracle() {
        let r = rect();
        let mut rng = StdRng::seed_from_u64(83);
        let truth = Pose::new(so3_exp(&Vector3::new(0.01, 0.02, -0.01)), Vector3::new(0.1, 0.0, 0.05))
            .unwrap();
        let obs = synthetic_observations(&mut rng, 30, &truth, &r);
        let perturbed = truth.apply_increment(&Vector3::zeros(), &Vector3::new(0.01, -0.02, 0.004));
        let (residuals, _) = reprojection_residuals(&obs, &perturbed, &r);
        let cost: f64 = residuals.iter().map(|v| v * v).sum();
        // Scalar recomputation, one feature at a time.
        let mut expect = 0.0;
        for o in &obs {
            let l = project(&o.point, &perturbed, &r, CameraSide::Left).unwrap();
            let rr = project(&o.point, &perturbed, &r, CameraSide::Right).unwrap();
            expect += (o.left - l).norm_squared() + (o.right - rr).norm_squared();
        }
        assert!((cost - expect).abs() < 1e-9);
    }

    #[test]
    fn jacobian_matches_central_finite_differences() {
        let r = rect();
        let mut rng = StdRng::seed_from_u64(89);
        let step = 1e-6;
        let mut checked = 0;
        for _ in 0..100 {
            use rand::Rng;
            let pose = Pose::new(
                so3_exp(&Vector3::new(
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                )),
                Vector3::new(
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                ),
            )
            .unwrap();
            let obs = synthetic_observations(&mut rng, 3, &Pose::identity(), &r);
            let (h, g, _) = normal_equations(&obs, &pose, &r);

            // Finite-difference J via residual perturbations, then compare
            // J^T J and J^T r against the analytic accumulation.
            let (r0, _) = reprojection_residuals(&obs, &pose, &r);
            let mut j_fd = vec![vec![0.0f64; 6]; r0.len()];
            for k in 0..6 {
                let mut omega = Vector3::zeros();
                let mut nu = Vector3::zeros();
                if k < 3 {
                    omega[k] = step;
                } else {
                    nu[k - 3] = step;
                }
                let plus = pose.apply_increment(&omega, &nu);
                let minus = pose.apply_increment(&-omega, &-nu);
                let (rp, _) = reprojection_residuals(&obs, &plus, &r);
                let (rm, _) = reprojection_residuals(&obs, &minus, &r);
                for (row, slot) in j_fd.iter_mut().enumerate() {
                    slot[k] = (rp[row] - rm[row]) / (2.0 * step);
                }
            }
            let mut h_fd = Matrix6::<f64>::zeros();
            let mut g_fd = Vector6::<f64>::zeros();
            for (row, jrow) in j_fd.iter().enumerate() {
                let jv = Vector6::from_iterator(jrow.iter().copied());
                h_fd += jv * jv.transpose();
                g_fd += jv * r0[row];
            }
            let h_scale = h.norm().max(1.0);
            assert!((h - h_fd).norm() / h_scale < 1e-4, "H mismatch");
            assert!((g - g_fd).norm() / g_fd.norm().max(1.0) < 1e-4, "g mismatch");
            checked += 1;
        }
        assert_eq!(checked, 100);
    }

    #[test]
    fn gauss_newton_recovers_known_motion() {
        let r = rect();
        let mut rng = StdRng::seed_from_u64(97);
        let truth = Pose::new(
            so3_exp(&Vector3::new(0.05, -0.03, 0.06)), // ~5 degrees total
            Vector3::new(0.06, -0.02, 0.07),           // |t| ~ 0.1 m
        )
        .unwrap();
        let obs = synthetic_observations(&mut rng, 60, &truth, &r);
        let est = gauss_newton(&obs, &r, &Pose::identity(), &GaussNewtonOptions::default())
            .unwrap();
        let delta = est.pose.compose(&truth.inverse());
        assert!(delta.translation().norm() < 1e-6, "t err {}", delta.translation().norm());
        assert!(delta.angle() < 1e-6, "r err {}", delta.angle());
    }

    #[test]
    fn gauss_newton_at_truth_converges_immediately() {
        let r = rect();
        let mut rng = StdRng::seed_from_u64(101);
        let truth = Pose::new(so3_exp(&Vector3::new(0.02, 0.01, -0.03)), Vector3::new(0.0, 0.05, 0.1))
            .unwrap();
        let obs = synthetic_observations(&mut rng, 30, &truth, &r);
        let est = gauss_newton(&obs, &r, &truth, &GaussNewtonOptions::default()).unwrap();
        assert!(est.iterations <= 2);
        assert!(est.final_cost < 1e-12);
        assert!(est.converged);
    }

    #[test]
    fn ransac_with_no_outliers_keeps_everything() {
        let r = rect();
        let mut rng = StdRng::seed_from_u64(103);
        let truth = Pose::new(so3_exp(&Vector3::new(0.03, 0.02, -0.04)), Vector3::new(0.05, 0.01, 0.08))
            .unwrap();
        let obs = synthetic_observations(&mut rng, 100, &truth, &r);
        let mut seed_rng = ChaCha8Rng::seed_from_u64(7);
        let est = ransac_estimate(&obs, &r, &RansacParams::default(), &mut seed_rng).unwrap();
        assert_eq!(est.inliers.len(), 100);
        let delta = est.pose.compose(&truth.inverse());
        assert!(delta.translation().norm() < 1e-6);
        assert!(delta.angle() < 1e-6);
    }

    #[test]
    fn ransac_rejects_gross_outliers() {
        let r = rect();
        let mut rng = StdRng::seed_from_u64(107);
        let truth = Pose::new(so3_exp(&Vector3::new(0.02, -0.02, 0.05)), Vector3::new(0.04, 0.03, 0.09))
            .unwrap();
        let mut obs = synthetic_observations(&mut rng, 70, &truth, &r);
        use rand::Rng;
        let n_outliers = 30;
        for _ in 0..n_outliers {
            let corrupted = Observation {
                point: Vector3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(1.0..15.0),
                ),
                left: Vector2::new(rng.random_range(0.0..345.0), rng.random_range(0.0..259.0)),
                right: Vector2::new(rng.random_range(0.0..345.0), rng.random_range(0.0..259.0)),
            };
            obs.push(corrupted);
        }
        let mut seed_rng = ChaCha8Rng::seed_from_u64(11);
        let est = ransac_estimate(&obs, &r, &RansacParams::default(), &mut seed_rng).unwrap();
        let delta = est.pose.compose(&truth.inverse());
        assert!(delta.translation().norm() < 0.01, "t err {}", delta.translation().norm());
        assert!(delta.angle() < 0.005, "r err {}", delta.angle());
        let excluded = (70..100).filter(|i| !est.inliers.contains(i)).count();
        assert!(excluded as f64 >= 0.95 * n_outliers as f64, "only {excluded} excluded");
    }

    #[test]
    fn ransac_is_deterministic_given_seed() {
        let r = rect();
        let mut rng = StdRng::seed_from_u64(109);
        let truth = Pose::new(so3_exp(&Vector3::new(0.01, 0.04, -0.02)), Vector3::new(0.02, 0.05, 0.06))
            .unwrap();
        let obs = synthetic_observations(&mut rng, 50, &truth, &r);
        let run = || {
            let mut seed_rng = ChaCha8Rng::seed_from_u64(99);
            ransac_estimate(&obs, &r, &RansacParams::default(), &mut seed_rng).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.inliers, b.inliers);
        assert_eq!(a.pose.rotation(), b.pose.rotation());
        assert_eq!(a.pose.translation(), b.pose.translation());
        assert_eq!(a.final_cost, b.final_cost);
    }

    #[test]
    fn minimal_three_feature_sample_interpolates_exactly() {
        let r = rect();
        let mut rng = StdRng::seed_from_u64(113);
        let truth = Pose::new(so3_exp(&Vector3::new(0.02, 0.01, 0.02)), Vector3::new(0.03, -0.01, 0.05))
            .unwrap();
        let obs = synthetic_observations(&mut rng, 3, &truth, &r);
        // With exactly the minimal sample the consensus floor is the sample
        // itself.
        let params = RansacParams { min_inliers: 3, ..RansacParams::default() };
        let mut seed_rng = ChaCha8Rng::seed_from_u64(5);
        let est = ransac_estimate(&obs, &r, &params, &mut seed_rng).unwrap();
        assert_eq!(est.inliers, vec![0, 1, 2]);
        assert!(est.final_cost < 1e-10);
    }

    #[test]
    fn static_scene_motion_is_identity() {
        let r = rect();
        let mut rng = StdRng::seed_from_u64(127);
        let obs = synthetic_observations(&mut rng, 80, &Pose::identity(), &r);
        let mut seed_rng = ChaCha8Rng::seed_from_u64(3);
        let est = ransac_estimate(&obs, &r, &RansacParams::default(), &mut seed_rng).unwrap();
        assert!(est.pose.translation().norm() < 1e-9);
        assert!(est.pose.angle() < 1e-9);
    }
}
