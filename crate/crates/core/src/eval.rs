//! Relative pose error between an estimated and a reference trajectory:
//! sliding windows parameterized by reference arc length, translation RMSE
//! as a percentage of window length and rotation RMSE in degrees per meter.

use thiserror::Error;

use crate::se3::{path_length, so3_exp, so3_log, Pose, TimedPose};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("trajectories do not overlap in time")]
    NoOverlap,
    #[error("need at least 2 associated pairs, got {0}")]
    TooFewPairs(usize),
    #[error("reference stamps must be strictly increasing")]
    UnorderedReference,
}

/// An estimate pose paired with the reference interpolated at its stamp.
#[derive(Clone, Debug)]
pub struct PosePair {
    pub stamp_us: u64,
    pub est: Pose,
    pub reference: Pose,
}

/// Interpolates the reference at each estimate stamp (linear translation,
/// geodesic rotation). Estimate stamps outside the reference range are
/// dropped; the count of dropped stamps is returned alongside the pairs.
pub fn associate(
    est: &[TimedPose],
    reference: &[TimedPose],
) -> Result<(Vec<PosePair>, usize), EvalError> {
    if reference.len() < 2 {
        return Err(EvalError::NoOverlap);
    }
    for w in reference.windows(2) {
        if w[1].stamp_us <= w[0].stamp_us {
            return Err(EvalError::UnorderedReference);
        }
    }
    let first = reference[0].stamp_us;
    let last = reference[reference.len() - 1].stamp_us;
    let mut pairs = Vec::new();
    let mut dropped = 0usize;
    for e in est {
        if e.stamp_us < first || e.stamp_us > last {
            dropped += 1;
            continue;
        }
        let idx = reference
            .partition_point(|r| r.stamp_us <= e.stamp_us)
            .min(reference.len() - 1)
            - 1;
        let (a, b) = (&reference[idx], &reference[idx + 1]);
        // Exact stamp hits take the reference pose verbatim, which keeps
        // rpe of a trajectory against itself exactly zero.
        let interpolated = if e.stamp_us == a.stamp_us {
            a.pose
        } else if e.stamp_us == b.stamp_us {
            b.pose
        } else {
            let alpha = (e.stamp_us - a.stamp_us) as f64 / (b.stamp_us - a.stamp_us) as f64;
            let translation =
                a.pose.translation() + alpha * (b.pose.translation() - a.pose.translation());
            let relative = a.pose.rotation().transpose() * b.pose.rotation();
            let rotation = a.pose.rotation() * so3_exp(&(alpha * so3_log(&relative)));
            Pose::new(rotation, translation).expect("interpolated rotation")
        };
        pairs.push(PosePair { stamp_us: e.stamp_us, est: e.pose, reference: interpolated });
    }
    if pairs.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    Ok((pairs, dropped))
}

/// Errors aggregated over all windows of one nominal length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowErrors {
    pub window_m: f64,
    /// Relative translation RMSE, percent of window length.
    pub translation_rmse_pct: f64,
    /// Relative rotation RMSE, degrees per meter.
    pub rotation_rmse_deg_per_m: f64,
    pub window_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RpeReport {
    pub windows: Vec<WindowErrors>,
    /// Window lengths skipped because the trajectory is too short.
    pub omitted: Vec<f64>,
    pub mean_translation_rmse_pct: f64,
    pub mean_rotation_rmse_deg_per_m: f64,
    pub est_length_m: f64,
    pub ref_length_m: f64,
}

impl RpeReport {
    /// Aligned text rendering, one row per window length.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "trajectory length: est {:.3} m, ref {:.3} m\n",
            self.est_length_m, self.ref_length_m
        ));
        out.push_str(&format!(
            "{:>10} {:>16} {:>16} {:>9}\n",
            "window[m]", "trans RMSE [%]", "rot RMSE [deg/m]", "windows"
        ));
        for w in &self.windows {
            out.push_str(&format!(
                "{:>10.2} {:>16.4} {:>16.4} {:>9}\n",
                w.window_m, w.translation_rmse_pct, w.rotation_rmse_deg_per_m, w.window_count
            ));
        }
        for &l in &self.omitted {
            out.push_str(&format!("{l:>10.2} {:>16} {:>16} {:>9}\n", "-", "-", "omitted"));
        }
        out.push_str(&format!(
            "{:>10} {:>16.4} {:>16.4}\n",
            "mean", self.mean_translation_rmse_pct, self.mean_rotation_rmse_deg_per_m
        ));
        out
    }

    /// CSV rendering: `window_m,translation_rmse_pct,rotation_rmse_deg_per_m,window_count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("window_m,translation_rmse_pct,rotation_rmse_deg_per_m,window_count\n");
        for w in &self.windows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                w.window_m, w.translation_rmse_pct, w.rotation_rmse_deg_per_m, w.window_count
            ));
        }
        out
    }
}

/// Cumulative reference arc length per pair.
fn arc_lengths(pairs: &[PosePair]) -> Vec<f64> {
    let mut s = Vec::with_capacity(pairs.len());
    let mut acc = 0.0;
    s.push(0.0);
    for w in pairs.windows(2) {
        acc += (w[1].reference.translation() - w[0].reference.translation()).norm();
        s.push(acc);
    }
    s
}

/// Relative pose error over sliding windows of the given arc lengths.
///
/// For each start pose with at least `window` meters of reference path left,
/// the end pose is the one whose arc distance from the start is closest to
/// the window length; the error is the relative-motion discrepancy
/// `(ref_i^-1 ref_j)^-1 (est_i^-1 est_j)` normalized by the window length.
pub fn rpe(pairs: &[PosePair], window_lengths: &[f64]) -> Result<RpeReport, EvalError> {
    if pairs.len() < 2 {
        return Err(EvalError::TooFewPairs(pairs.len()));
    }
    let s = arc_lengths(pairs);
    let total = *s.last().unwrap();
    let mut windows = Vec::new();
    let mut omitted = Vec::new();
    for &window in window_lengths {
        if !window.is_finite() || window <= 0.0 || total < window {
            omitted.push(window);
            continue;
        }
        let mut t_sq_sum = 0.0;
        let mut r_sq_sum = 0.0;
        let mut count = 0usize;
        let mut j_lo = 0usize;
        for i in 0..pairs.len() {
            if total - s[i] < window {
                break;
            }
            let target = s[i] + window;
            // First index at or beyond the target arc length.
            if j_lo < i + 1 {
                j_lo = i + 1;
            }
            while j_lo < pairs.len() && s[j_lo] < target {
                j_lo += 1;
            }
            let j = if j_lo >= pairs.len() {
                pairs.len() - 1
            } else if j_lo > i + 1
                && (target - s[j_lo - 1]).abs() <= (s[j_lo] - target).abs()
            {
                j_lo - 1
            } else {
                j_lo
            };
            let ref_rel = pairs[i].reference.inverse().compose(&pairs[j].reference);
            let est_rel = pairs[i].est.inverse().compose(&pairs[j].est);
            // Bit-identical relative motions have exactly zero discrepancy;
            // skipping the composition keeps rpe(T, T) exactly zero.
            let delta = if est_rel == ref_rel {
                Pose::identity()
            } else {
                ref_rel.inverse().compose(&est_rel)
            };
            let t_err = delta.translation().norm() / window * 100.0;
            let r_err = delta.angle().to_degrees() / window;
            t_sq_sum += t_err * t_err;
            r_sq_sum += r_err * r_err;
            count += 1;
        }
        if count == 0 {
            omitted.push(window);
            continue;
        }
        windows.push(WindowErrors {
            window_m: window,
            translation_rmse_pct: (t_sq_sum / count as f64).sqrt(),
            rotation_rmse_deg_per_m: (r_sq_sum / count as f64).sqrt(),
            window_count: count,
        });
    }
    let est_t: Vec<TimedPose> = pairs
        .iter()
        .map(|p| TimedPose {
            stamp_us: p.stamp_us,
            pose: p.est,
            quality: crate::se3::EstimateQuality::Estimated,
        })
        .collect();
    let ref_t: Vec<TimedPose> = pairs
        .iter()
        .map(|p| TimedPose {
            stamp_us: p.stamp_us,
            pose: p.reference,
            quality: crate::se3::EstimateQuality::Estimated,
        })
        .collect();
    let n = windows.len().max(1) as f64;
    Ok(RpeReport {
        mean_translation_rmse_pct: windows.iter().map(|w| w.translation_rmse_pct).sum::<f64>() / n,
        mean_rotation_rmse_deg_per_m: windows
            .iter()
            .map(|w| w.rotation_rmse_deg_per_m)
            .sum::<f64>()
            / n,
        windows,
        omitted,
        est_length_m: path_length(&est_t),
        ref_length_m: path_length(&ref_t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::EstimateQuality;
    use nalgebra::Vector3;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn timed(stamp_us: u64, pose: Pose) -> TimedPose {
        TimedPose { stamp_us, pose, quality: EstimateQuality::Estimated }
    }

    fn straight_line(n: usize, step_m: f64, step_us: u64) -> Vec<TimedPose> {
        (0..n)
            .map(|k| {
                timed(
                    k as u64 * step_us,
                    Pose::from_translation(Vector3::new(k as f64 * step_m, 0.0, 0.0)),
                )
            })
            .collect()
    }

    #[test]
    fn associate_exact_stamps() {
        let reference = straight_line(11, 0.1, 1000);
        let (pairs, dropped) = associate(&reference, &reference).unwrap();
        assert_eq!(pairs.len(), 11);
        assert_eq!(dropped, 0);
        for (p, r) in pairs.iter().zip(reference.iter()) {
            assert!((p.reference.translation() - r.pose.translation()).norm() < 1e-15);
        }
    }

    #[test]
    fn associate_interpolates_midpoints() {
        let reference = straight_line(11, 0.1, 1000);
        let est = vec![timed(2500, Pose::identity())];
        let (pairs, _) = associate(&est, &reference).unwrap();
        assert!((pairs[0].reference.translation().x - 0.25).abs() < 1e-12);
    }

    #[test]
    fn associate_drops_outside_range() {
        let reference = straight_line(5, 0.1, 1000);
        let est = vec![timed(0, Pose::identity()), timed(9999, Pose::identity())];
        let (pairs, dropped) = associate(&est, &reference).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(dropped, 1);
    }

    #[test]
    fn associate_interpolation_error_bounded_by_sampling() {
        // Dense reference vs a decimated copy: interpolation error stays
        // below reference-step x velocity.
        let dense = straight_line(101, 0.01, 100);
        let coarse: Vec<TimedPose> = dense.iter().step_by(10).cloned().collect();
        let mut rng = StdRng::seed_from_u64(139);
        let probes: Vec<TimedPose> =
            (0..50).map(|_| timed(rng.random_range(0..10_000), Pose::identity())).collect();
        let (fine_pairs, _) = associate(&probes, &dense).unwrap();
        let (coarse_pairs, _) = associate(&probes, &coarse).unwrap();
        for (f, c) in fine_pairs.iter().zip(coarse_pairs.iter()) {
            let err = (f.reference.translation() - c.reference.translation()).norm();
            assert!(err < 1e-9, "piecewise-linear path must interpolate exactly");
        }
    }

    #[test]
    fn rpe_of_identical_trajectories_is_zero() {
        let reference = straight_line(51, 0.1, 1000);
        let (pairs, _) = associate(&reference, &reference).unwrap();
        let report = rpe(&pairs, &[1.0, 2.0]).unwrap();
        for w in &report.windows {
            assert_eq!(w.translation_rmse_pct, 0.0);
            assert_eq!(w.rotation_rmse_deg_per_m, 0.0);
        }
    }

    #[test]
    fn scaled_straight_line_yields_scale_error() {
        let reference = straight_line(101, 0.1, 1000);
        let est: Vec<TimedPose> = reference
            .iter()
            .map(|p| {
                timed(p.stamp_us, Pose::from_translation(1.10 * p.pose.translation()))
            })
            .collect();
        let (pairs, _) = associate(&est, &reference).unwrap();
        let report = rpe(&pairs, &[1.0, 2.0, 5.0]).unwrap();
        for w in &report.windows {
            assert!(
                (w.translation_rmse_pct - 10.0).abs() < 1e-9,
                "want 10%, got {}",
                w.translation_rmse_pct
            );
            assert!(w.rotation_rmse_deg_per_m.abs() < 1e-12);
        }
    }

    #[test]
    fn too_short_windows_are_omitted() {
        let reference = straight_line(11, 0.1, 1000);
        let (pairs, _) = associate(&reference, &reference).unwrap();
        let report = rpe(&pairs, &[0.5, 100.0]).unwrap();
        assert_eq!(report.windows.len(), 1);
        assert_eq!(report.omitted, vec![100.0]);
    }

    #[test]
    fn reported_length_matches_increment_sum() {
        let reference = straight_line(21, 0.25, 1000);
        let (pairs, _) = associate(&reference, &reference).unwrap();
        let report = rpe(&pairs, &[1.0]).unwrap();
        assert!((report.ref_length_m - 5.0).abs() < 1e-12);
        assert!((report.est_length_m - 5.0).abs() < 1e-12);
    }

    fn random_trajectory(rng: &mut StdRng, n: usize) -> Vec<TimedPose> {
        let mut pose = Pose::identity();
        let mut out = vec![timed(0, pose)];
        for k in 1..n {
            let omega = Vector3::new(
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.05..0.05),
            );
            let t = Vector3::new(
                rng.random_range(-0.02..0.12),
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.05..0.05),
            );
            let inc = Pose::new(crate::se3::so3_exp(&omega), t).unwrap();
            pose = pose.compose(&inc);
            out.push(timed(k as u64 * 1000, pose));
        }
        out
    }

    /// Brute-force oracle: recompute everything per start index with fresh
    /// linear scans (independent cumulative sums, argmin by full scan).
    fn rpe_oracle(pairs: &[PosePair], window: f64) -> Option<(f64, f64, usize)> {
        let n = pairs.len();
        let dist = |i: usize, j: usize| -> f64 {
            let mut acc = 0.0;
            for k in i..j {
                acc += (pairs[k + 1].reference.translation()
                    - pairs[k].reference.translation())
                .norm();
            }
            acc
        };
        let mut t_sq = 0.0;
        let mut r_sq = 0.0;
        let mut count = 0usize;
        for i in 0..n {
            if dist(i, n - 1) < window {
                break;
            }
            let mut best_j = i + 1;
            let mut best_err = f64::INFINITY;
            for j in (i + 1)..n {
                let err = (dist(i, j) - window).abs();
                if err < best_err {
                    best_err = err;
                    best_j = j;
                }
            }
            let ref_rel = pairs[i].reference.inverse().compose(&pairs[best_j].reference);
            let est_rel = pairs[i].est.inverse().compose(&pairs[best_j].est);
            let delta = ref_rel.inverse().compose(&est_rel);
            t_sq += (delta.translation().norm() / window * 100.0).powi(2);
            r_sq += (delta.angle().to_degrees() / window).powi(2);
            count += 1;
        }
        (count > 0).then(|| ((t_sq / count as f64).sqrt(), (r_sq / count as f64).sqrt(), count))
    }

    #[test]
    fn rpe_matches_brute_force_oracle() {
        let mut rng = StdRng::seed_from_u64(149);
        for _ in 0..30 {
            let reference = random_trajectory(&mut rng, 60);
            let est = random_trajectory(&mut rng, 60);
            let (pairs, _) = associate(&est, &reference).unwrap();
            let report = rpe(&pairs, &[0.5, 1.0, 2.0]).unwrap();
            for w in &report.windows {
                let (t_exp, r_exp, n_exp) = rpe_oracle(&pairs, w.window_m).unwrap();
                assert!(
                    (w.translation_rmse_pct - t_exp).abs() < 1e-9,
                    "window {}: {} vs {}",
                    w.window_m,
                    w.translation_rmse_pct,
                    t_exp
                );
                assert!((w.rotation_rmse_deg_per_m - r_exp).abs() < 1e-9);
                assert_eq!(w.window_count, n_exp);
            }
        }
    }

    #[test]
    fn rpe_invariant_under_global_rigid_transform() {
        let mut rng = StdRng::seed_from_u64(151);
        let reference = random_trajectory(&mut rng, 40);
        let est = random_trajectory(&mut rng, 40);
        let (pairs, _) = associate(&est, &reference).unwrap();
        let base = rpe(&pairs, &[1.0]).unwrap();

        let g = Pose::new(
            crate::se3::so3_exp(&Vector3::new(0.4, -0.2, 0.9)),
            Vector3::new(5.0, -2.0, 3.0),
        )
        .unwrap();
        let moved: Vec<PosePair> = pairs
            .iter()
            .map(|p| PosePair {
                stamp_us: p.stamp_us,
                est: g.compose(&p.est),
                reference: g.compose(&p.reference),
            })
            .collect();
        let transformed = rpe(&moved, &[1.0]).unwrap();
        for (a, b) in base.windows.iter().zip(transformed.windows.iter()) {
            assert!((a.translation_rmse_pct - b.translation_rmse_pct).abs() < 1e-9);
            assert!((a.rotation_rmse_deg_per_m - b.rotation_rmse_deg_per_m).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_overlap_is_an_error() {
        let reference = straight_line(5, 0.1, 1000);
        let est = vec![timed(50_000, Pose::identity())];
        assert_eq!(associate(&est, &reference).unwrap_err(), EvalError::NoOverlap);
    }
}
