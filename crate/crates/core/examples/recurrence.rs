//! Measures how often the corner detector fires near labeled junctions:
//! per-junction inter-hit intervals and the share of hits near junctions.

use tsvo_core::detector::detect;
use tsvo_core::event::CameraSide;
use tsvo_core::surface::TimestampMap;
use tsvo_core::synth::{corridor_scenario, generate, ScenarioOptions};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let speed: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let radius: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3.0);

    let sc = corridor_scenario(&ScenarioOptions {
        speed_mps: speed,
        distance_m: speed * 2.0,
        jitter_us: 0,
        spurious_rate: 0.0,
        events_per_edge_crossing: 2,
        ..ScenarioOptions::default()
    });
    let out = generate(&sc, 7).unwrap();

    // Junction tracks, left camera only, indexed by junction.
    let mut tracks: Vec<Vec<(u64, f64, f64)>> = vec![Vec::new(); sc.junctions.len()];
    for s in out.truth.tracks.iter().filter(|s| s.cam == CameraSide::Left) {
        tracks[s.junction as usize].push((s.t_us, s.x, s.y));
    }

    let mut map = TimestampMap::new(CameraSide::Left, sc.rig.left.width, sc.rig.left.height, 50_000);
    let mut hits_per_junction: Vec<Vec<u64>> = vec![Vec::new(); sc.junctions.len()];
    let mut total_hits = 0u64;
    let mut near_hits = 0u64;
    let warmup = 800_000u64; // skip the cold-start regime
    let mut cursor = vec![0usize; sc.junctions.len()];
    for e in &out.left {
        map.ingest(e).unwrap();
        if !detect(&map, e) {
            continue;
        }
        if e.t_us < warmup {
            continue;
        }
        total_hits += 1;
        for (j, track) in tracks.iter().enumerate() {
            // advance cursor to the sample at/after e.t
            while cursor[j] < track.len() && track[cursor[j]].0 < e.t_us {
                cursor[j] += 1;
            }
            let Some(&(_, jx, jy)) = track.get(cursor[j]) else { continue };
            let d = ((e.x as f64 - jx).powi(2) + (e.y as f64 - jy).powi(2)).sqrt();
            if d <= radius {
                near_hits += 1;
                hits_per_junction[j].push(e.t_us);
                break;
            }
        }
    }
    eprintln!(
        "{total_hits} detector hits after warmup, {near_hits} within {radius} px of a junction ({:.0}%)",
        100.0 * near_hits as f64 / total_hits.max(1) as f64
    );
    let mut intervals: Vec<u64> = Vec::new();
    let mut active = 0;
    for hits in &hits_per_junction {
        if hits.len() >= 2 {
            active += 1;
            for w in hits.windows(2) {
                intervals.push(w[1] - w[0]);
            }
        }
    }
    intervals.sort_unstable();
    if !intervals.is_empty() {
        let pct = |p: f64| intervals[(p * (intervals.len() - 1) as f64) as usize] as f64 / 1e3;
        eprintln!(
            "{active} junctions with >=2 hits; inter-hit interval ms: p25 {:.1} p50 {:.1} p75 {:.1} p90 {:.1}",
            pct(0.25),
            pct(0.5),
            pct(0.75),
            pct(0.9)
        );
    }
    // Junctions with any hit at all vs those ever visible
    let visible = tracks.iter().filter(|t| !t.is_empty()).count();
    let hit_any = hits_per_junction.iter().filter(|h| !h.is_empty()).count();
    eprintln!("{hit_any}/{visible} visible junctions ever produced a detector hit");

    // Geometry of silent vs active junctions.
    for (j, track) in tracks.iter().enumerate() {
        if track.is_empty() {
            continue;
        }
        let hits = hits_per_junction[j].len();
        let pos = sc.junctions[j];
        // Sample depth mid-track.
        let mid = track[track.len() / 2];
        let pose = sc.pose_at(mid.0);
        let depth = pose.inverse().transform(&pos).z;
        // Apparent speed from track endpoints.
        let (t0, x0, y0) = track[0];
        let (t1, x1, y1) = track[track.len() - 1];
        let flow = if t1 > t0 {
            (((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt()) / ((t1 - t0) as f64 / 1e6)
        } else {
            0.0
        };
        eprintln!(
            "junction {j:>3} kind {} pos ({:+.2},{:+.2},{:5.2}) depth {:5.2} flow {:6.1} px/s hits {:>4} samples {}",
            j % 8,
            pos.x,
            pos.y,
            pos.z,
            depth,
            flow,
            hits,
            track.len()
        );
    }
}
