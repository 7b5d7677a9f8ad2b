//! Diagnostic harness: runs the corridor scenario and prints per-slice match
//! chain statistics plus pose error against ground truth.

use tsvo_core::eval::{associate, rpe};
use tsvo_core::matcher::{match_stereo, MatchParams};
use tsvo_core::pipeline::{self, PipelineConfig};
use tsvo_core::se3::path_length;
use tsvo_core::synth::{corridor_scenario, generate, ScenarioOptions};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let speed: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let distance: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let n: u32 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(20_000);

    let spurious: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let jitter: u64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0);
    let yaw: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0.6);
    let zncc_min: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(0.8);
    let sc = corridor_scenario(&ScenarioOptions {
        speed_mps: speed,
        distance_m: distance,
        jitter_us: jitter,
        spurious_rate: spurious,
        events_per_edge_crossing: 2,
        yaw_rad: yaw,
    });
    eprintln!("generating...");
    let out = generate(&sc, 7).unwrap();
    eprintln!("{} left / {} right events", out.left.len(), out.right.len());

    let config = PipelineConfig { events_per_estimate: n, zncc_min, ..PipelineConfig::default() };
    let mut prev_gt = sc.pose_at(0);
    let mut rot_errs: Vec<f64> = Vec::new();
    let mut trans_errs: Vec<f64> = Vec::new();
    let mut observer = |r: &pipeline::SliceReport<'_>| {
        let gt_now = sc.pose_at(r.stamp_us);
        let gt_inc = prev_gt.inverse().compose(&gt_now);
        prev_gt = gt_now;
        let est_inc_t = r
            .estimate
            .map(|e| e.pose.inverse().translation().norm())
            .unwrap_or(f64::NAN);
        let (rot_err_mrad, trans_err_mm) = r
            .estimate
            .map(|e| {
                let est_inc = e.pose.inverse();
                let delta = gt_inc.inverse().compose(&est_inc);
                (delta.angle() * 1e3, delta.translation().norm() * 1e3)
            })
            .unwrap_or((f64::NAN, f64::NAN));
        if rot_err_mrad.is_finite() {
            rot_errs.push(rot_err_mrad);
            trans_errs.push(trans_err_mm);
        }
        let inliers = r.estimate.map(|e| e.inliers.len()).unwrap_or(0);
        let s = &r.match_stats;
        eprintln!(
            "slice {:>3} t={:>8.4}s feats {:>4}/{:<4} stereo {:>4} lost tR/pS/tL/cl {:>3}/{:>3}/{:>3}/{:>3} quads {:>4} inl {:>4} |t_est| {:>7.4} |t_gt| {:>7.4} rot_err {:>6.2} mrad t_err {:>6.1} mm {:?}",
            r.slice_index,
            r.stamp_us as f64 / 1e6,
            r.features_left.len(),
            r.features_right.len(),
            s.stereo_pairs,
            s.lost_temporal_right,
            s.lost_prev_stereo,
            s.lost_temporal_left,
            s.lost_closure,
            r.quads.len(),
            inliers,
            est_inc_t,
            gt_inc.translation().norm(),
            rot_err_mrad,
            trans_err_mm,
            r.pose.quality,
        );
    };
    let pipeline = pipeline::run(config, &sc.rig, &out.left, &out.right, &mut observer).unwrap();
    rot_errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    trans_errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if !rot_errs.is_empty() {
        let pct = |v: &[f64], p: f64| v[(p * (v.len() - 1) as f64) as usize];
        eprintln!(
            "rot err mrad p50 {:.2} p90 {:.2} max {:.2}; trans err mm p50 {:.1} p90 {:.1} max {:.1}",
            pct(&rot_errs, 0.5),
            pct(&rot_errs, 0.9),
            pct(&rot_errs, 1.0),
            pct(&trans_errs, 0.5),
            pct(&trans_errs, 0.9),
            pct(&trans_errs, 1.0)
        );
    }

    let est = pipeline.trajectory().to_vec();
    eprintln!(
        "est length {:.3} m vs gt {:.3} m",
        path_length(&est),
        path_length(&out.truth.trajectory)
    );
    match associate(&est, &out.truth.trajectory) {
        Ok((pairs, _)) => match rpe(&pairs, &[0.5, 1.0, 2.0, 5.0]) {
            Ok(report) => print!("{}", report.to_text()),
            Err(e) => eprintln!("rpe failed: {e}"),
        },
        Err(e) => eprintln!("associate failed: {e}"),
    }

    // Quick stereo-only sanity probe: how many mutual-best pairs exist at a
    // moderate threshold, independent of the circular chain.
    let _ = match_stereo(&[], &[], &MatchParams::default());
}
