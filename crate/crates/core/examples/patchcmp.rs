//! Side-by-side raw and rectified surface patches around one ground-truth
//! junction in both cameras, to localize where stereo appearance diverges.

use tsvo_core::event::CameraSide;
use tsvo_core::rectify::{rectify_point, RectificationMap};
use tsvo_core::surface::TimestampMap;
use tsvo_core::synth::{corridor_matching_scenario, generate, ScenarioOptions};

fn main() {
    let sc = corridor_matching_scenario(&ScenarioOptions {
        speed_mps: 0.8,
        distance_m: 1.3,
        jitter_us: 500,
        spurious_rate: 0.0,
        events_per_edge_crossing: 2,
        ..ScenarioOptions::default()
    });
    let out = generate(&sc, 11).unwrap();
    let rmap = RectificationMap::build(&sc.rig).unwrap();
    let t_probe = 1_000_000u64;

    let mut maps = [
        TimestampMap::new(CameraSide::Left, 346, 260, 50_000),
        TimestampMap::new(CameraSide::Right, 346, 260, 50_000),
    ];
    for (side, stream) in [&out.left, &out.right].iter().enumerate() {
        for e in stream.iter().take_while(|e| e.t_us <= t_probe) {
            maps[side].ingest(e).unwrap();
        }
    }

    // Junction on the nearest ring with both tracks at the probe time.
    let target = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(36u32);
    let mut raw_pos = [None, None];
    for s in &out.truth.tracks {
        if s.junction == target && s.t_us.abs_diff(t_probe) < 600 {
            raw_pos[s.cam.index()] = Some((s.x, s.y));
        }
    }
    let (Some(pl), Some(pr)) = (raw_pos[0], raw_pos[1]) else {
        eprintln!("junction {target} not visible at the probe time");
        return;
    };
    eprintln!("junction {target}: raw L ({:.2},{:.2}) R ({:.2},{:.2})", pl.0, pl.1, pr.0, pr.1);

    for (name, side, pos) in [("L", 0usize, pl), ("R", 1usize, pr)] {
        let raw = maps[side].render(t_probe, 30_000).unwrap();
        eprintln!("raw {name} around ({:.1},{:.1}):", pos.0, pos.1);
        for dy in -3i32..=3 {
            let row: Vec<String> = (-3i32..=3)
                .map(|dx| {
                    format!("{:5.2}", raw.get((pos.0 as i32 + dx) as u16, (pos.1 as i32 + dy) as u16))
                })
                .collect();
            eprintln!("   {}", row.join(" "));
        }
    }
    for (name, side, cam, pos) in [
        ("L", 0usize, CameraSide::Left, pl),
        ("R", 1usize, CameraSide::Right, pr),
    ] {
        let rect = maps[side].render_rectified(t_probe, 30_000, &rmap).unwrap();
        let rp = rectify_point(pos, cam, &rmap).unwrap();
        eprintln!("rectified {name} around ({:.2},{:.2}):", rp.0, rp.1);
        for dy in -3i32..=3 {
            let row: Vec<String> = (-3i32..=3)
                .map(|dx| {
                    format!(
                        "{:5.2}",
                        rect.sample(rp.0 + dx as f64, rp.1 + dy as f64)
                    )
                })
                .collect();
            eprintln!("   {}", row.join(" "));
        }
    }
}
