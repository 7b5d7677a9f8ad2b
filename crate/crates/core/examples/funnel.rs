//! Funnel analysis for the most active junctions: detector hits per slice
//! near each junction vs hits surviving the recency window, replicating the
//! pipeline's window rule.

use tsvo_core::detector::detect;
use tsvo_core::event::CameraSide;
use tsvo_core::surface::TimestampMap;
use tsvo_core::synth::{corridor_scenario, generate, ScenarioOptions};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let speed: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let n: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(50_000);
    let radius: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(4.0);

    let sc = corridor_scenario(&ScenarioOptions {
        speed_mps: speed,
        distance_m: speed * 2.0,
        jitter_us: 0,
        spurious_rate: 0.0,
        events_per_edge_crossing: 2,
        ..ScenarioOptions::default()
    });
    let out = generate(&sc, 7).unwrap();

    let mut tracks: Vec<Vec<(u64, f64, f64)>> = vec![Vec::new(); sc.junctions.len()];
    for s in out.truth.tracks.iter().filter(|s| s.cam == CameraSide::Left) {
        tracks[s.junction as usize].push((s.t_us, s.x, s.y));
    }

    let mut map = TimestampMap::new(CameraSide::Left, sc.rig.left.width, sc.rig.left.height, 50_000);
    let mut cursor = vec![0usize; sc.junctions.len()];
    // Per junction: detector hit times.
    let mut hits: Vec<Vec<u64>> = vec![Vec::new(); sc.junctions.len()];
    let mut event_times: Vec<u64> = Vec::new();
    let mut slice_start = 0usize; // index into event_times
    let mut boundaries: Vec<(u64, usize)> = Vec::new(); // (t, event index)
    for e in &out.left {
        map.ingest(e).unwrap();
        event_times.push(e.t_us);
        if detect(&map, e) {
            for (j, track) in tracks.iter().enumerate() {
                while cursor[j] < track.len() && track[cursor[j]].0 < e.t_us {
                    cursor[j] += 1;
                }
                let Some(&(_, jx, jy)) = track.get(cursor[j]) else { continue };
                let d = ((e.x as f64 - jx).powi(2) + (e.y as f64 - jy).powi(2)).sqrt();
                if d <= radius {
                    hits[j].push(e.t_us);
                    break;
                }
            }
        }
        if event_times.len() - slice_start >= n {
            boundaries.push((e.t_us, event_times.len()));
            slice_start = event_times.len();
        }
    }

    // The three most active junctions.
    let mut order: Vec<usize> = (0..hits.len()).collect();
    order.sort_by_key(|&j| std::cmp::Reverse(hits[j].len()));
    for &j in order.iter().take(3) {
        eprintln!("junction {j}: {} hits total", hits[j].len());
        let mut miss = 0;
        let mut have = 0;
        for &(t, idx) in &boundaries {
            // Window rule: span of the last N/10 events, clamped [1, 20] ms.
            let take = (n / 10).max(1);
            let oldest = event_times[idx.saturating_sub(take)];
            let window = (t - oldest).clamp(1_000, 20_000);
            let hits_in_slice =
                hits[j].iter().filter(|&&h| h + 1_000_000 > t && h <= t).count();
            let in_window = hits[j].iter().any(|&h| h + window >= t && h <= t);
            if hits_in_slice > 0 {
                if in_window {
                    have += 1;
                } else {
                    miss += 1;
                }
                eprintln!(
                    "  slice t={:>7.3} window {:>5.1} ms: in-window {}",
                    t as f64 / 1e6,
                    window as f64 / 1e3,
                    in_window
                );
            }
        }
        eprintln!("  -> present {have}, missed {miss}");
    }
}
