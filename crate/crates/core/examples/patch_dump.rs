//! Dumps reference-timestamp age patches at (a) detector hits far from any
//! junction (junk) and (b) junction positions that never fire, to inspect
//! what the arc test sees.

use tsvo_core::detector::detect;
use tsvo_core::event::CameraSide;
use tsvo_core::surface::TimestampMap;
use tsvo_core::synth::{corridor_scenario, generate, ScenarioOptions};

fn age_grid(map: &TimestampMap, cx: i32, cy: i32, now: u64) {
    for dy in -4i32..=4 {
        let mut row = String::new();
        for dx in -4i32..=4 {
            let x = (cx + dx) as u16;
            let y = (cy + dy) as u16;
            let cell = match map.t_ref(x, y) {
                Some(t) => format!("{:>6}", ((now - t) / 1000).min(99999)),
                None => format!("{:>6}", "."),
            };
            row.push_str(&cell);
        }
        eprintln!("  {row}");
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let speed: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let t_probe_s: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.0);

    let sc = corridor_scenario(&ScenarioOptions {
        speed_mps: speed,
        distance_m: speed * (t_probe_s + 0.2),
        jitter_us: 0,
        spurious_rate: 0.0,
        events_per_edge_crossing: 2,
        ..ScenarioOptions::default()
    });
    let out = generate(&sc, 7).unwrap();
    let t_probe = (t_probe_s * 1e6) as u64;

    // Junction positions near t_probe.
    let junctions_now: Vec<(u32, f64, f64)> = out
        .truth
        .tracks
        .iter()
        .filter(|s| s.cam == CameraSide::Left && s.t_us.abs_diff(t_probe) < 600)
        .map(|s| (s.junction, s.x, s.y))
        .collect();
    let near_junction = |x: f64, y: f64| {
        junctions_now
            .iter()
            .any(|&(_, jx, jy)| ((x - jx).powi(2) + (y - jy).powi(2)).sqrt() <= 4.0)
    };

    let mut map = TimestampMap::new(CameraSide::Left, sc.rig.left.width, sc.rig.left.height, 50_000);
    let mut junk_shown = 0;
    let mut hit_positions: Vec<(u16, u16)> = Vec::new();
    for e in &out.left {
        if e.t_us > t_probe {
            break;
        }
        map.ingest(e).unwrap();
        if e.t_us + 3_000 > t_probe && detect(&map, e) {
            hit_positions.push((e.x, e.y));
            if junk_shown < 3 && !near_junction(e.x as f64, e.y as f64) {
                junk_shown += 1;
                eprintln!("junk hit at ({}, {}) t={} ms ago:", e.x, e.y, (t_probe - e.t_us) / 1000);
                age_grid(&map, e.x as i32, e.y as i32, t_probe);
            }
        }
    }

    // Silent junctions: no hits within 4 px in the last 3 ms.
    let mut silent_shown = 0;
    for &(id, jx, jy) in &junctions_now {
        if silent_shown >= 3 {
            break;
        }
        if jx < 8.0 || jy < 8.0 || jx > 338.0 || jy > 252.0 {
            continue;
        }
        let had_hit = hit_positions
            .iter()
            .any(|&(hx, hy)| ((hx as f64 - jx).powi(2) + (hy as f64 - jy).powi(2)).sqrt() <= 4.0);
        if had_hit {
            continue;
        }
        silent_shown += 1;
        eprintln!("silent junction {id} at ({jx:.1}, {jy:.1}):");
        age_grid(&map, jx.round() as i32, jy.round() as i32, t_probe);
    }
}
