//! Tallies arc-test outcomes for events near labeled junctions: accepted,
//! no dominating arc, or dominating arc with out-of-range length.

use tsvo_core::detector::{dominating_lengths, CIRCLE3, CIRCLE4};
use tsvo_core::event::CameraSide;
use tsvo_core::surface::TimestampMap;
use tsvo_core::synth::{corridor_scenario, generate, ScenarioOptions};

fn ring_values(map: &TimestampMap, x: u16, y: u16, offsets: &[(i8, i8)]) -> Vec<(bool, u64)> {
    offsets
        .iter()
        .map(|&(dx, dy)| {
            let px = (x as i32 + dx as i32) as u16;
            let py = (y as i32 + dy as i32) as u16;
            match map.t_ref(px, py) {
                Some(t) => (true, t),
                None => (false, 0),
            }
        })
        .collect()
}

fn main() {
    let sc = corridor_scenario(&ScenarioOptions {
        speed_mps: 2.0,
        distance_m: 4.0,
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
    let mut cursor = vec![0usize; sc.junctions.len()];

    let mut map = TimestampMap::new(CameraSide::Left, sc.rig.left.width, sc.rig.left.height, 50_000);
    let mut accepted = 0u64;
    let mut none3 = 0u64;
    let mut out_of_range3 = 0u64;
    let mut len3 = vec![0u64; 17];
    let mut len4 = vec![0u64; 21];
    let mut considered = 0u64;
    for e in &out.left {
        map.ingest(e).unwrap();
        if e.t_us < 600_000 {
            continue;
        }
        if e.x < 4 || e.y < 4 || e.x >= map.width() - 4 || e.y >= map.height() - 4 {
            continue;
        }
        // Is this event near a junction?
        let mut near = false;
        for (j, track) in tracks.iter().enumerate() {
            while cursor[j] < track.len() && track[cursor[j]].0 < e.t_us {
                cursor[j] += 1;
            }
            let Some(&(_, jx, jy)) = track.get(cursor[j]) else { continue };
            if ((e.x as f64 - jx).powi(2) + (e.y as f64 - jy).powi(2)).sqrt() <= 2.5 {
                near = true;
                break;
            }
        }
        if !near {
            continue;
        }
        considered += 1;
        let v3 = ring_values(&map, e.x, e.y, &CIRCLE3);
        let v4 = ring_values(&map, e.x, e.y, &CIRCLE4);
        let m3 = dominating_lengths(&v3, map.kappa_us());
        let m4 = dominating_lengths(&v4, map.kappa_us());
        let l3 = (1..16).rev().find(|l| m3 & (1 << l) != 0);
        let l4 = (1..20).rev().find(|l| m4 & (1 << l) != 0);
        if l3 == Some(15) && considered % 1000 == 0 {
            let ages: Vec<String> = v3
                .iter()
                .map(|&(fired, t)| {
                    if fired {
                        format!("{}", (e.t_us - t) / 1000)
                    } else {
                        "never".into()
                    }
                })
                .collect();
            eprintln!("example L*=15 ring ages (ms) at ({},{}): {}", e.x, e.y, ages.join(" "));
        }
        match l3 {
            None => none3 += 1,
            Some(l) => {
                len3[l] += 1;
                if !((3..=6).contains(&l) || (10..=13).contains(&l)) {
                    out_of_range3 += 1;
                }
            }
        }
        if let Some(l) = l4 {
            len4[l] += 1;
        }
        let ok3 = (3..=6).chain(10..=13).any(|l| m3 & (1 << l) != 0);
        let ok4 = (4..=8).chain(12..=16).any(|l| m4 & (1 << l) != 0);
        if ok3 || ok4 {
            accepted += 1;
        }
    }
    eprintln!(
        "near-junction events: {considered}; accepted {accepted} ({:.0}%), r3 no-arc {none3} ({:.0}%), r3 out-of-range {out_of_range3} ({:.0}%)",
        100.0 * accepted as f64 / considered.max(1) as f64,
        100.0 * none3 as f64 / considered.max(1) as f64,
        100.0 * out_of_range3 as f64 / considered.max(1) as f64,
    );
    eprintln!("r3 dominant lengths: {:?}", &len3[1..]);
    eprintln!("r4 dominant lengths: {:?}", &len4[1..]);
}
