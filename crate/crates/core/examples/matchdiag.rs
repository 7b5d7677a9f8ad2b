//! Diagnoses the matcher-acceptance setup: for each co-visible junction,
//! whether features exist near it in all four sets, whether a stereo pair
//! forms, and whether the circle closes.

use std::collections::HashMap;

use tsvo_core::detector::{detect, recency_filter, Corner};
use tsvo_core::event::{CameraSide, Event, Polarity};
use tsvo_core::matcher::{describe, match_circular, match_stereo, zncc, Feature, MatchParams};
use tsvo_core::rectify::{rectify_point, RectificationMap};
use tsvo_core::surface::TimestampMap;
use tsvo_core::synth::{matching_panel_scenario, generate, ScenarioOptions};

fn main() {
    let sc = matching_panel_scenario(&ScenarioOptions {
        speed_mps: 0.8,
        distance_m: 1.3,
        jitter_us: 500,
        spurious_rate: 0.0,
        events_per_edge_crossing: 2,
        ..ScenarioOptions::default()
    });
    let out = generate(&sc, 11).unwrap();
    let mut tracks: HashMap<(u32, CameraSide), Vec<(u64, f64, f64)>> = HashMap::new();
    for s in &out.truth.tracks {
        tracks.entry((s.junction, s.cam)).or_default().push((s.t_us, s.x, s.y));
    }
    let track_at = |j: u32, cam: CameraSide, t: u64| -> Option<(f64, f64)> {
        let samples = tracks.get(&(j, cam))?;
        let idx = samples.partition_point(|s| s.0 <= t);
        if idx == 0 || idx >= samples.len() {
            return None;
        }
        let (t0, x0, y0) = samples[idx - 1];
        let (t1, x1, y1) = samples[idx];
        let a = (t - t0) as f64 / (t1 - t0) as f64;
        Some((x0 + a * (x1 - x0), y0 + a * (y1 - y0)))
    };

    let rmap = RectificationMap::build(&sc.rig).unwrap();
    let t_prev = 1_000_000u64;
    let t_cur = t_prev + 50_000;
    let window = 15_000u64;
    let delta = 30_000u64;

    let mut maps = [
        TimestampMap::new(CameraSide::Left, 346, 260, 50_000),
        TimestampMap::new(CameraSide::Right, 346, 260, 50_000),
    ];
    let streams = [&out.left, &out.right];
    let mut corners: [Vec<Corner>; 2] = [Vec::new(), Vec::new()];
    let mut cursors = [0usize; 2];
    let mut ingest_until = |maps: &mut [TimestampMap; 2],
                            corners: &mut [Vec<Corner>; 2],
                            cursors: &mut [usize; 2],
                            t: u64| {
        for side in 0..2 {
            while cursors[side] < streams[side].len() && streams[side][cursors[side]].t_us <= t {
                let e = &streams[side][cursors[side]];
                maps[side].ingest(e).unwrap();
                if detect(&maps[side], e) {
                    corners[side].push(Corner::from(e));
                }
                cursors[side] += 1;
            }
        }
    };

    let n_j = sc.junctions.len() as u32;
    let build = |maps: &[TimestampMap; 2], corners: &[Vec<Corner>; 2], t: u64| -> [Vec<Feature>; 2] {
        let mut sets = [Vec::new(), Vec::new()];
        for (side_idx, cam) in [CameraSide::Left, CameraSide::Right].iter().enumerate() {
            let mut cs = corners[side_idx].clone();
            for j in 0..n_j {
                if let Some((x, y)) = track_at(j, *cam, t) {
                    cs.push(Corner { x: x.round() as u16, y: y.round() as u16, t_us: t, polarity: Polarity::Positive });
                }
            }
            let surface = maps[side_idx].render_rectified(t, delta, &rmap).unwrap();
            let recent = recency_filter(&cs, t, window);
            let mut seen = std::collections::HashSet::new();
            for corner in recent {
                if !seen.insert((corner.x, corner.y)) {
                    continue;
                }
                let Some(rect) = rectify_point((corner.x as f64, corner.y as f64), *cam, &rmap) else { continue };
                let Some(descriptor) = describe(&surface, rect, 5) else { continue };
                sets[side_idx].push(Feature { corner, rect, descriptor });
            }
        }
        sets
    };

    ingest_until(&mut maps, &mut corners, &mut cursors, t_prev);
    let prev_sets = build(&maps, &corners, t_prev);
    ingest_until(&mut maps, &mut corners, &mut cursors, t_cur);
    let cur_sets = build(&maps, &corners, t_cur);

    let gate: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.8);
    let params = MatchParams { d_max: 86.5, zncc_min: gate, ..MatchParams::default() };
    let stereo_cur = match_stereo(&cur_sets[0], &cur_sets[1], &params);
    let quads = match_circular(&cur_sets[0], &cur_sets[1], &prev_sets[0], &prev_sets[1], &params);
    eprintln!(
        "gate {gate}: features cur {}/{} prev {}/{}; stereo_cur {}; quads {}",
        cur_sets[0].len(),
        cur_sets[1].len(),
        prev_sets[0].len(),
        prev_sets[1].len(),
        stereo_cur.len(),
        quads.len()
    );

    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    // Ground-truth positions live in raw coordinates; features are
    // rectified. Compare in the rectified frame.
    let rect_of = |cam: CameraSide, p: (f64, f64)| rectify_point(p, cam, &rmap);
    let near = |set: &[Feature], p: (f64, f64)| -> Option<usize> {
        set.iter()
            .enumerate()
            .filter(|(_, f)| dist(f.rect, p) <= 2.0)
            .min_by(|a, b| dist(a.1.rect, p).partial_cmp(&dist(b.1.rect, p)).unwrap())
            .map(|(i, _)| i)
    };

    // Control experiment: descriptors at the exact ground-truth rectified
    // positions (no integer quantization) in both views.
    {
        let sl = maps[0].render_rectified(t_cur, delta, &rmap).unwrap();
        let sr = maps[1].render_rectified(t_cur, delta, &rmap).unwrap();
        let mut scores = Vec::new();
        let cam_pose = sc.pose_at(t_cur);
        for j in 0..n_j {
            let (Some(cl0), Some(cr0)) = (
                track_at(j, CameraSide::Left, t_cur),
                track_at(j, CameraSide::Right, t_cur),
            ) else {
                continue;
            };
            let (Some(cl), Some(cr)) = (
                rect_of(CameraSide::Left, cl0),
                rect_of(CameraSide::Right, cr0),
            ) else {
                continue;
            };
            let (Some(dl), Some(dr)) = (describe(&sl, cl, 5), describe(&sr, cr, 5)) else {
                continue;
            };
            let depth = cam_pose.inverse().transform(&sc.junctions[j as usize]).z;
            scores.push((zncc(&dl, &dr), j % 12, depth, j));
        }
        scores.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for (s, kind, depth, j) in &scores {
            eprintln!("  exact zncc {s:+.2} kind {kind:>2} depth {depth:5.2} junction {j}");
        }
        // Patch dump for the worst interior (grid-crossing) junction.
        if let Some(&(s, _, _, j)) = scores
            .iter()
            .find(|(_, kind, depth, _)| matches!(kind, 0 | 1 | 4 | 5) && *depth < 6.0)
        {
            let cl0 = track_at(j, CameraSide::Left, t_cur).unwrap();
            let cr0 = track_at(j, CameraSide::Right, t_cur).unwrap();
            let cl = rect_of(CameraSide::Left, cl0).unwrap();
            let cr = rect_of(CameraSide::Right, cr0).unwrap();
            eprintln!("worst interior junction {j} zncc {s:+.2} at L({:.2},{:.2}) R({:.2},{:.2})", cl.0, cl.1, cr.0, cr.1);
            let dl = describe(&sl, cl, 5).unwrap();
            let dr = describe(&sr, cr, 5).unwrap();
            for (name, d) in [("L", &dl), ("R", &dr)] {
                eprintln!("  {name}:");
                for row in 0..5 {
                    let vals: Vec<String> =
                        (0..5).map(|c| format!("{:5.2}", d.values()[row * 5 + c])).collect();
                    eprintln!("    {}", vals.join(" "));
                }
            }
        }
    }

    let mut shown = 0;
    let mut stats = [0usize; 6]; // covis, present4, stereo, quad, zncc_fail_stereo, row_fail
    for j in 0..n_j {
        let (Some(cl0), Some(cr0), Some(pl0), Some(pr0)) = (
            track_at(j, CameraSide::Left, t_cur),
            track_at(j, CameraSide::Right, t_cur),
            track_at(j, CameraSide::Left, t_prev),
            track_at(j, CameraSide::Right, t_prev),
        ) else {
            continue;
        };
        let (Some(cl), Some(cr), Some(pl), Some(pr)) = (
            rect_of(CameraSide::Left, cl0),
            rect_of(CameraSide::Right, cr0),
            rect_of(CameraSide::Left, pl0),
            rect_of(CameraSide::Right, pr0),
        ) else {
            continue;
        };
        if dist(cl, pl) < 2.5 {
            continue;
        }
        stats[0] += 1;
        let f_cl = near(&cur_sets[0], cl);
        let f_cr = near(&cur_sets[1], cr);
        let f_pl = near(&prev_sets[0], pl);
        let f_pr = near(&prev_sets[1], pr);
        if let (Some(a), Some(b), Some(c), Some(d)) = (f_cl, f_cr, f_pl, f_pr) {
            stats[1] += 1;
            let in_stereo = stereo_cur.iter().any(|p| p.left == a);
            if in_stereo {
                stats[2] += 1;
            }
            let quad_hit = quads.iter().any(|q| dist(q.cur_left, cl) <= 2.5 && dist(q.cur_right, cr) <= 2.5);
            if quad_hit {
                stats[3] += 1;
            } else if shown < 6 {
                shown += 1;
                let fl = &cur_sets[0][a];
                let fr = &cur_sets[1][b];
                let fpl = &prev_sets[0][c];
                let fpr = &prev_sets[1][d];
                eprintln!(
                    "junction {j}: stereo={in_stereo} rows L{:.2} R{:.2} zncc(L,R)={:.3} zncc(R,pR)={:.3} zncc(pR,pL)={:.3} zncc(pL,L)={:.3} disp_cur {:.2} disp_prev {:.2} motion {:.1}px",
                    fl.rect.1,
                    fr.rect.1,
                    zncc(&fl.descriptor, &fr.descriptor),
                    zncc(&fr.descriptor, &fpr.descriptor),
                    zncc(&fpr.descriptor, &fpl.descriptor),
                    zncc(&fpl.descriptor, &fl.descriptor),
                    fl.rect.0 - fr.rect.0,
                    fpl.rect.0 - fpr.rect.0,
                    dist(cl, pl),
                );
            }
        }
    }
    eprintln!(
        "covis {} present4 {} stereo {} quads-hit {}",
        stats[0], stats[1], stats[2], stats[3]
    );

    // Chain trace for co-visible junctions: emulate each link's candidate
    // selection over the true feature sets.
    let best_temporal = |anchor: &Feature, pool: &[Feature]| -> Option<(usize, f64)> {
        pool.iter()
            .enumerate()
            .filter(|(_, c)| {
                let dx = c.rect.0 - anchor.rect.0;
                let dy = c.rect.1 - anchor.rect.1;
                (dx * dx + dy * dy).sqrt() <= 15.0
            })
            .map(|(i, c)| (i, zncc(&anchor.descriptor, &c.descriptor)))
            .filter(|(_, s)| *s >= gate)
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
    };
    let mut traced = 0;
    for j in 0..n_j {
        if traced >= 8 {
            break;
        }
        let all = [
            track_at(j, CameraSide::Left, t_cur).and_then(|p| rect_of(CameraSide::Left, p)),
            track_at(j, CameraSide::Right, t_cur).and_then(|p| rect_of(CameraSide::Right, p)),
            track_at(j, CameraSide::Left, t_prev).and_then(|p| rect_of(CameraSide::Left, p)),
            track_at(j, CameraSide::Right, t_prev).and_then(|p| rect_of(CameraSide::Right, p)),
        ];
        let [Some(cl), Some(cr), Some(pl), Some(pr)] = all else { continue };
        if dist(cl, pl) < 2.5 {
            continue;
        }
        let (Some(a), Some(b), Some(c), Some(d)) = (
            near(&cur_sets[0], cl),
            near(&cur_sets[1], cr),
            near(&prev_sets[0], pl),
            near(&prev_sets[1], pr),
        ) else {
            continue;
        };
        traced += 1;
        let quad_hit = quads.iter().any(|q| dist(q.cur_left, cl) <= 3.0 && dist(q.cur_right, cr) <= 3.0);
        if quad_hit {
            continue;
        }
        // Who does the temporal link from the true cur-right feature pick?
        let t_r = best_temporal(&cur_sets[1][b], &prev_sets[1]);
        let t_r_correct = t_r.map(|(i, _)| dist(prev_sets[1][i].rect, pr) <= 3.0);
        let t_l = best_temporal(&prev_sets[0][c], &cur_sets[0]);
        let t_l_correct = t_l.map(|(i, _)| dist(cur_sets[0][i].rect, cl) <= 3.0);
        let in_stereo = stereo_cur.iter().any(|p| p.left == a && p.right == b);
        eprintln!(
            "  miss junction {j}: stereo_pair={in_stereo} tempR={:?} tempL={:?}",
            t_r.map(|(i, s)| (format!("{:.2}", s), dist(prev_sets[1][i].rect, pr) <= 3.0, t_r_correct)),
            t_l.map(|(i, s)| (format!("{:.2}", s), dist(cur_sets[0][i].rect, cl) <= 3.0, t_l_correct)),
        );
    }

    // Dump the left/right patches at one junction with a bad stereo score.
    for j in 0..n_j {
        let (Some(cl0), Some(cr0)) = (
            track_at(j, CameraSide::Left, t_cur),
            track_at(j, CameraSide::Right, t_cur),
        ) else {
            continue;
        };
        let (Some(cl), Some(cr)) = (
            rect_of(CameraSide::Left, cl0),
            rect_of(CameraSide::Right, cr0),
        ) else {
            continue;
        };
        let (Some(a), Some(b)) = (near(&cur_sets[0], cl), near(&cur_sets[1], cr)) else {
            continue;
        };
        let fl = &cur_sets[0][a];
        let fr = &cur_sets[1][b];
        let score = zncc(&fl.descriptor, &fr.descriptor);
        if score < 0.5 {
            eprintln!(
                "junction {j} stereo zncc {score:.3}; left at ({:.1},{:.1}) right at ({:.1},{:.1}) true L ({:.2},{:.2}) R ({:.2},{:.2})",
                fl.rect.0, fl.rect.1, fr.rect.0, fr.rect.1, cl.0, cl.1, cr.0, cr.1
            );
            for (name, d) in [("L", &fl.descriptor), ("R", &fr.descriptor)] {
                eprintln!("  {name}:");
                for row in 0..5 {
                    let vals: Vec<String> = (0..5)
                        .map(|c| format!("{:5.2}", d.values()[row * 5 + c]))
                        .collect();
                    eprintln!("    {}", vals.join(" "));
                }
            }
            break;
        }
    }
}
