//! Measures ground-truth junction presence in the per-slice feature sets:
//! the fraction of visible, moving junctions that have a detected feature
//! within an association radius, per camera, and the resulting quad recall.

use std::collections::HashMap;

use tsvo_core::event::CameraSide;
use tsvo_core::pipeline::{self, PipelineConfig};
use tsvo_core::synth::{corridor_scenario, generate, GroundTruth, ScenarioOptions};

const ASSOC_RADIUS: f64 = 3.0;
const MIN_MOTION_PX: f64 = 1.0;

/// Interpolated junction track position at a time, if sampled around it.
fn track_at(
    tracks: &HashMap<(u32, CameraSide), Vec<(u64, f64, f64)>>,
    junction: u32,
    cam: CameraSide,
    t_us: u64,
) -> Option<(f64, f64)> {
    let samples = tracks.get(&(junction, cam))?;
    let idx = samples.partition_point(|s| s.0 <= t_us);
    if idx == 0 || idx >= samples.len() {
        return None;
    }
    let (t0, x0, y0) = samples[idx - 1];
    let (t1, x1, y1) = samples[idx];
    if t1 <= t0 || t_us < t0 {
        return None;
    }
    let a = (t_us - t0) as f64 / (t1 - t0) as f64;
    Some((x0 + a * (x1 - x0), y0 + a * (y1 - y0)))
}

fn index_tracks(truth: &GroundTruth) -> HashMap<(u32, CameraSide), Vec<(u64, f64, f64)>> {
    let mut map: HashMap<(u32, CameraSide), Vec<(u64, f64, f64)>> = HashMap::new();
    for s in &truth.tracks {
        map.entry((s.junction, s.cam)).or_default().push((s.t_us, s.x, s.y));
    }
    map
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let speed: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let distance: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3.0);
    let n: u32 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(40_000);
    let spurious: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.0);

    let sc = corridor_scenario(&ScenarioOptions {
        speed_mps: speed,
        distance_m: distance,
        jitter_us: 0,
        spurious_rate: spurious,
        events_per_edge_crossing: 2,
        ..ScenarioOptions::default()
    });
    let out = generate(&sc, 7).unwrap();
    eprintln!(
        "{} junctions, {} left events",
        sc.junctions.len(),
        out.left.len()
    );
    let tracks = index_tracks(&out.truth);
    let n_junctions = sc.junctions.len() as u32;

    let max_depth: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(4.0);
    let config = PipelineConfig { events_per_estimate: n, ..PipelineConfig::default() };
    let mut prev_stamp: Option<u64> = None;
    let mut prev_feats: Option<(Vec<(f64, f64)>, Vec<(f64, f64)>)> = None;
    let mut observer = |r: &pipeline::SliceReport<'_>| {
        let t = r.stamp_us;
        let cam_pose = sc.pose_at(t);
        let cur_l: Vec<(f64, f64)> = r.features_left.iter().map(|f| f.rect).collect();
        let cur_r: Vec<(f64, f64)> = r.features_right.iter().map(|f| f.rect).collect();
        let near = |feats: &[(f64, f64)], p: (f64, f64)| {
            feats
                .iter()
                .any(|f| ((f.0 - p.0).powi(2) + (f.1 - p.1).powi(2)).sqrt() <= ASSOC_RADIUS)
        };
        let mut covisible = 0usize;
        let mut present = [0usize; 4]; // cur L, cur R, prev L, prev R
        let mut all_four = 0usize;
        let mut recalled = 0usize;
        if let (Some(pt), Some((pl_feats, pr_feats))) = (prev_stamp, prev_feats.as_ref()) {
            for j in 0..n_junctions {
                let all = [
                    track_at(&tracks, j, CameraSide::Left, t),
                    track_at(&tracks, j, CameraSide::Right, t),
                    track_at(&tracks, j, CameraSide::Left, pt),
                    track_at(&tracks, j, CameraSide::Right, pt),
                ];
                let [Some(cl), Some(cr), Some(pl), Some(pr)] = all else {
                    continue;
                };
                let motion = ((cl.0 - pl.0).powi(2) + (cl.1 - pl.1).powi(2)).sqrt();
                if motion < MIN_MOTION_PX {
                    continue;
                }
                let depth = cam_pose.inverse().transform(&sc.junctions[j as usize]).z;
                if depth > max_depth {
                    continue;
                }
                covisible += 1;
                let hits = [
                    near(&cur_l, cl),
                    near(&cur_r, cr),
                    near(pl_feats, pl),
                    near(pr_feats, pr),
                ];
                for (k, h) in hits.iter().enumerate() {
                    if *h {
                        present[k] += 1;
                    }
                }
                if hits.iter().all(|&h| h) {
                    all_four += 1;
                }
                let hit = r.quads.iter().any(|q| {
                    let d = ((q.cur_left.0 - cl.0).powi(2) + (q.cur_left.1 - cl.1).powi(2)).sqrt();
                    let dr =
                        ((q.cur_right.0 - cr.0).powi(2) + (q.cur_right.1 - cr.1).powi(2)).sqrt();
                    d <= ASSOC_RADIUS && dr <= ASSOC_RADIUS
                });
                if hit {
                    recalled += 1;
                }
            }
        }
        if covisible > 0 {
            let pc = |k: usize| 100.0 * present[k] as f64 / covisible as f64;
            eprintln!(
                "slice {:>3} t={:>7.3}s feats {:>4}/{:<4} quads {:>4} covis {:>3} presence {:>3.0}/{:>3.0}/{:>3.0}/{:>3.0}% all4 {:>3.0}% recall {:>3.0}%",
                r.slice_index,
                t as f64 / 1e6,
                r.features_left.len(),
                r.features_right.len(),
                r.quads.len(),
                covisible,
                pc(0),
                pc(1),
                pc(2),
                pc(3),
                100.0 * all_four as f64 / covisible as f64,
                100.0 * recalled as f64 / covisible as f64,
            );
        }
        prev_stamp = Some(t);
        prev_feats = Some((cur_l, cur_r));
    };
    pipeline::run(config, &sc.rig, &out.left, &out.right, &mut observer).unwrap();
}
