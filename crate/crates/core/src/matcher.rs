//! Time-surface descriptors, ZNCC scoring, and stereo + temporal feature
//! matching with the four-surface circular consistency check.

use crate::detector::Corner;
use crate::surface::TimeSurface;

/// Square window of time-surface values sampled around a rectified feature
/// location, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    values: Vec<f64>,
    window: usize,
}

impl Descriptor {
    pub fn from_values(values: Vec<f64>, window: usize) -> Descriptor {
        debug_assert_eq!(values.len(), window * window);
        Descriptor { values, window }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn window(&self) -> usize {
        self.window
    }
}

/// Bilinear samples of `surface` on the `window x window` integer-offset grid
/// centered at `center`; `None` when the window crosses the border.
pub fn describe(surface: &TimeSurface, center: (f64, f64), window: usize) -> Option<Descriptor> {
    debug_assert!(window % 2 == 1, "window must be odd");
    let half = (window / 2) as f64;
    let (cx, cy) = center;
    if cx - half < 0.0
        || cy - half < 0.0
        || cx + half > (surface.width() - 1) as f64
        || cy + half > (surface.height() - 1) as f64
    {
        return None;
    }
    let mut values = Vec::with_capacity(window * window);
    let h = window as i32 / 2;
    for dy in -h..=h {
        for dx in -h..=h {
            values.push(surface.sample(cx + dx as f64, cy + dy as f64));
        }
    }
    Some(Descriptor { values, window })
}

/// Zero-normalized cross-correlation in [-1, 1]; zero-variance descriptors
/// score 0 by definition.
pub fn zncc(a: &Descriptor, b: &Descriptor) -> f64 {
    assert_eq!(a.values.len(), b.values.len(), "descriptor lengths differ");
    let n = a.values.len() as f64;
    let mean_a: f64 = a.values.iter().sum::<f64>() / n;
    let mean_b: f64 = b.values.iter().sum::<f64>() / n;
    let mut cross = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.values.iter().zip(b.values.iter()) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cross += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return 0.0;
    }
    (cross / (var_a.sqrt() * var_b.sqrt())).clamp(-1.0, 1.0)
}

/// A corner with its rectified location and descriptor, ready for matching.
#[derive(Clone, Debug)]
pub struct Feature {
    pub corner: Corner,
    /// Sub-pixel position in the rectified frame.
    pub rect: (f64, f64),
    pub descriptor: Descriptor,
}

/// Matching thresholds and search bounds.
#[derive(Clone, Copy, Debug)]
pub struct MatchParams {
    pub zncc_min: f64,
    /// Row tolerance for rectified stereo candidates, in pixels.
    pub epipolar_tol: f64,
    /// Maximum disparity, in pixels.
    pub d_max: f64,
    /// Search radius around the same coordinate for temporal candidates.
    pub temporal_radius: f64,
    /// Final circular link must land within this distance of the start.
    pub closure_tol: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            zncc_min: 0.8,
            epipolar_tol: 1.0,
            d_max: f64::INFINITY,
            temporal_radius: 15.0,
            closure_tol: 1.0,
        }
    }
}

/// One stereo correspondence: indices into the left/right feature lists plus
/// the ZNCC score of the link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StereoPair {
    pub left: usize,
    pub right: usize,
    pub score: f64,
}

/// A feature matched through all four surfaces with a closed circle.
#[derive(Clone, Copy, Debug)]
pub struct QuadMatch {
    /// Rectified positions in the current left / current right /
    /// previous left / previous right surfaces.
    pub cur_left: (f64, f64),
    pub cur_right: (f64, f64),
    pub prev_left: (f64, f64),
    pub prev_right: (f64, f64),
    /// ZNCC of the four links, in circle order.
    pub scores: [f64; 4],
    /// Depth in meters, filled after triangulation.
    pub depth: Option<f64>,
}

impl QuadMatch {
    pub fn disparity_cur(&self) -> f64 {
        self.cur_left.0 - self.cur_right.0
    }

    pub fn disparity_prev(&self) -> f64 {
        self.prev_left.0 - self.prev_right.0
    }
}

/// Candidate selection shared by the stereo directions. Returns the best
/// right-list index for a fixed left-side feature (or vice versa), with
/// deterministic tie-breaking: higher score, then smaller disparity, then
/// position.
fn best_stereo_candidate(
    anchor: &Feature,
    pool: &[Feature],
    params: &MatchParams,
    anchor_is_left: bool,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64, f64)> = None; // (index, score, disparity)
    for (j, cand) in pool.iter().enumerate() {
        if (cand.rect.1 - anchor.rect.1).abs() > params.epipolar_tol {
            continue;
        }
        let disparity = if anchor_is_left {
            anchor.rect.0 - cand.rect.0
        } else {
            cand.rect.0 - anchor.rect.0
        };
        if disparity <= 0.0 || disparity > params.d_max {
            continue;
        }
        let score = zncc(&anchor.descriptor, &cand.descriptor);
        if score < params.zncc_min {
            continue;
        }
        let better = match best {
            None => true,
            Some((bi, bs, bd)) => {
                score > bs
                    || (score == bs
                        && (disparity < bd
                            || (disparity == bd
                                && (cand.rect.0, cand.rect.1)
                                    < (pool[bi].rect.0, pool[bi].rect.1))))
            }
        };
        if better {
            best = Some((j, score, disparity));
        }
    }
    best.map(|(j, s, _)| (j, s))
}

/// Best temporal candidate within the search radius around the anchor's
/// coordinate; ties broken by smaller displacement, then position.
fn best_temporal_candidate(
    anchor: &Feature,
    pool: &[Feature],
    params: &MatchParams,
) -> Option<(usize, f64)> {
    let r2 = params.temporal_radius * params.temporal_radius;
    let mut best: Option<(usize, f64, f64)> = None; // (index, score, displacement^2)
    for (j, cand) in pool.iter().enumerate() {
        let dx = cand.rect.0 - anchor.rect.0;
        let dy = cand.rect.1 - anchor.rect.1;
        let d2 = dx * dx + dy * dy;
        if d2 > r2 {
            continue;
        }
        let score = zncc(&anchor.descriptor, &cand.descriptor);
        if score < params.zncc_min {
            continue;
        }
        let better = match best {
            None => true,
            Some((bi, bs, bd2)) => {
                score > bs
                    || (score == bs
                        && (d2 < bd2
                            || (d2 == bd2
                                && (cand.rect.0, cand.rect.1)
                                    < (pool[bi].rect.0, pool[bi].rect.1))))
            }
        };
        if better {
            best = Some((j, score, d2));
        }
    }
    best.map(|(j, s, _)| (j, s))
}

/// One-to-one stereo matching along rectified rows: mutual best-ZNCC pairs
/// with positive bounded disparity. Output is ordered by left index.
pub fn match_stereo(left: &[Feature], right: &[Feature], params: &MatchParams) -> Vec<StereoPair> {
    let best_from_left: Vec<Option<(usize, f64)>> = left
        .iter()
        .map(|f| best_stereo_candidate(f, right, params, true))
        .collect();
    let best_from_right: Vec<Option<usize>> = right
        .iter()
        .map(|f| best_stereo_candidate(f, left, params, false).map(|(i, _)| i))
        .collect();
    best_from_left
        .iter()
        .enumerate()
        .filter_map(|(i, link)| {
            let (j, score) = (*link)?;
            (best_from_right[j] == Some(i)).then_some(StereoPair { left: i, right: j, score })
        })
        .collect()
}

/// Where candidate chains were lost, for diagnostics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CircularStats {
    pub stereo_pairs: usize,
    pub lost_temporal_right: usize,
    pub lost_prev_stereo: usize,
    pub lost_temporal_left: usize,
    pub lost_closure: usize,
    pub emitted: usize,
}

/// Chains matches through the four surfaces in circle order: current left ->
/// current right -> previous right -> previous left -> current left. A match
/// is kept only when the circle closes on the feature it started from.
pub fn match_circular(
    cur_left: &[Feature],
    cur_right: &[Feature],
    prev_left: &[Feature],
    prev_right: &[Feature],
    params: &MatchParams,
) -> Vec<QuadMatch> {
    match_circular_with_stats(cur_left, cur_right, prev_left, prev_right, params).0
}

pub fn match_circular_with_stats(
    cur_left: &[Feature],
    cur_right: &[Feature],
    prev_left: &[Feature],
    prev_right: &[Feature],
    params: &MatchParams,
) -> (Vec<QuadMatch>, CircularStats) {
    let stereo = match_stereo(cur_left, cur_right, params);
    let mut stats = CircularStats { stereo_pairs: stereo.len(), ..CircularStats::default() };
    let mut out = Vec::new();
    for pair in &stereo {
        let fl = &cur_left[pair.left];
        let fr = &cur_right[pair.right];
        let Some((pr_idx, s_temporal_r)) = best_temporal_candidate(fr, prev_right, params) else {
            stats.lost_temporal_right += 1;
            continue;
        };
        let pr = &prev_right[pr_idx];
        let Some((pl_idx, s_prev_stereo)) =
            best_stereo_candidate(pr, prev_left, params, false)
        else {
            stats.lost_prev_stereo += 1;
            continue;
        };
        let pl = &prev_left[pl_idx];
        let Some((back_idx, s_temporal_l)) = best_temporal_candidate(pl, cur_left, params) else {
            stats.lost_temporal_left += 1;
            continue;
        };
        let back = &cur_left[back_idx];
        let closure = ((back.rect.0 - fl.rect.0).powi(2) + (back.rect.1 - fl.rect.1).powi(2))
            .sqrt();
        if closure > params.closure_tol {
            stats.lost_closure += 1;
            continue;
        }
        let quad = QuadMatch {
            cur_left: fl.rect,
            cur_right: fr.rect,
            prev_left: pl.rect,
            prev_right: pr.rect,
            scores: [pair.score, s_temporal_r, s_prev_stereo, s_temporal_l],
            depth: None,
        };
        assert!(
            (quad.cur_left.1 - quad.cur_right.1).abs() <= params.epipolar_tol
                && (quad.prev_left.1 - quad.prev_right.1).abs() <= params.epipolar_tol,
            "emitted quad violates the epipolar tolerance"
        );
        assert!(
            quad.disparity_cur() > 0.0 && quad.disparity_prev() > 0.0,
            "emitted quad has non-positive disparity"
        );
        stats.emitted += 1;
        out.push(quad);
    }
    (out, stats)
}
