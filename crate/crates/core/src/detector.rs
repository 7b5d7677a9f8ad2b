//! Event-per-event corner detection on the reference-timestamp map.
//!
//! An event is a corner when, on a Bresenham circle around it, some
//! contiguous arc of bounded length is newer than everything outside it by
//! more than the refractory interval: the local timestamp structure looks
//! like a wedge rather than a straight edge or unstructured noise. The
//! margin matters: timestamps within one refractory interval belong to the
//! same burst generation, and requiring separation across generations keeps
//! a single stale pixel from masking real wedges on smoothly graded
//! timestamp fields. Both the radius-3 and radius-4 circles are tested and
//! either may accept, with the usual arc-or-complement rule.

use crate::event::{Event, Polarity};
use crate::surface::TimestampMap;

/// Ring offsets (dx, dy) of the radius-3 circle, in contiguous order.
pub const CIRCLE3: [(i8, i8); 16] = [
    (0, 3),
    (1, 3),
    (2, 2),
    (3, 1),
    (3, 0),
    (3, -1),
    (2, -2),
    (1, -3),
    (0, -3),
    (-1, -3),
    (-2, -2),
    (-3, -1),
    (-3, 0),
    (-3, 1),
    (-2, 2),
    (-1, 3),
];

/// Ring offsets (dx, dy) of the radius-4 circle, in contiguous order.
pub const CIRCLE4: [(i8, i8); 20] = [
    (0, 4),
    (1, 4),
    (2, 3),
    (3, 2),
    (4, 1),
    (4, 0),
    (4, -1),
    (3, -2),
    (2, -3),
    (1, -4),
    (0, -4),
    (-1, -4),
    (-2, -3),
    (-3, -2),
    (-4, -1),
    (-4, 0),
    (-4, 1),
    (-3, 2),
    (-2, 3),
    (-1, 4),
];

const CIRCLE3_ARC: (usize, usize) = (3, 6);
const CIRCLE4_ARC: (usize, usize) = (4, 8);

/// Pixels inset from every border so the outer circle fits.
pub const BORDER: u16 = 4;

/// A detected corner, in raw pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Corner {
    pub x: u16,
    pub y: u16,
    pub t_us: u64,
    pub polarity: Polarity,
}

impl From<&Event> for Corner {
    fn from(e: &Event) -> Corner {
        Corner { x: e.x, y: e.y, t_us: e.t_us, polarity: e.polarity }
    }
}

/// Timestamp ordering key: a never-fired pixel is older than any fired one,
/// and two never-fired pixels tie.
#[inline]
fn key(t: Option<u64>) -> (bool, u64) {
    match t {
        Some(v) => (true, v),
        None => (false, 0),
    }
}

/// Does `a` dominate `b` by more than the margin? Values within the margin
/// belong to the same burst generation and do not separate.
#[inline]
fn outranks(a: (bool, u64), b: (bool, u64), margin_us: u64) -> bool {
    match (a.0, b.0) {
        (true, true) => a.1 > b.1.saturating_add(margin_us),
        (true, false) => true,
        (false, _) => false,
    }
}

/// Lengths L (as a bitmask, bit L set) for which some proper contiguous arc
/// of L pixels is newer than every pixel outside it by more than
/// `margin_us`.
///
/// A dominating arc of length L exists exactly when the top-L values are
/// separated from the (L+1)-th by more than the margin and occupy contiguous
/// ring positions, so one pass over L with incremental ring membership and a
/// boundary count enumerates all of them in O(n log n).
pub fn dominating_lengths(values: &[(bool, u64)], margin_us: u64) -> u32 {
    let n = values.len();
    debug_assert!(n <= 32);
    let mut order: [u8; 32] = [0; 32];
    for (i, slot) in order.iter_mut().enumerate().take(n) {
        *slot = i as u8;
    }
    order[..n].sort_unstable_by(|&a, &b| values[b as usize].cmp(&values[a as usize]));

    let mut member = [false; 32];
    let mut boundaries = 0usize;
    let mut mask = 0u32;
    for l in 1..n {
        let p = order[l - 1] as usize;
        let left = member[(p + n - 1) % n];
        let right = member[(p + 1) % n];
        member[p] = true;
        match (left, right) {
            (false, false) => boundaries += 1,
            (true, true) => boundaries -= 1,
            _ => {}
        }
        if boundaries == 1
            && outranks(values[order[l - 1] as usize], values[order[l] as usize], margin_us)
        {
            mask |= 1 << l;
        }
    }
    mask
}

/// Acceptance mask for one circle: lengths in [lo, hi] or in the
/// complementary range [n-hi, n-lo].
#[inline]
fn acceptance_mask(circle: usize, bounds: (usize, usize)) -> u32 {
    let (lo, hi) = bounds;
    let mut mask = 0u32;
    for l in lo..=hi {
        mask |= 1 << l;
        mask |= 1 << (circle - l);
    }
    mask
}

fn circle_passes(map: &TimestampMap, x: u16, y: u16, offsets: &[(i8, i8)], bounds: (usize, usize)) -> bool {
    let mut values = [(false, 0u64); 32];
    for (slot, &(dx, dy)) in values.iter_mut().zip(offsets.iter()) {
        let px = (x as i32 + dx as i32) as u16;
        let py = (y as i32 + dy as i32) as u16;
        *slot = key(map.t_ref(px, py));
    }
    let lengths = dominating_lengths(&values[..offsets.len()], map.kappa_us());
    lengths & acceptance_mask(offsets.len(), bounds) != 0
}

/// Corner test for an event already ingested into `map` (the test reads the
/// reference timestamps including the event's own update).
pub fn detect(map: &TimestampMap, e: &Event) -> bool {
    if e.x < BORDER
        || e.y < BORDER
        || e.x >= map.width() - BORDER
        || e.y >= map.height() - BORDER
    {
        return false;
    }
    circle_passes(map, e.x, e.y, &CIRCLE3, CIRCLE3_ARC)
        || circle_passes(map, e.x, e.y, &CIRCLE4, CIRCLE4_ARC)
}

/// Keeps corners with timestamps inside `[t_us - window_us, t_us]`, sorted by
/// timestamp descending (ties broken by x then y).
pub fn recency_filter(corners: &[Corner], t_us: u64, window_us: u64) -> Vec<Corner> {
    let cutoff = t_us.saturating_sub(window_us);
    let mut kept: Vec<Corner> = corners
        .iter()
        .filter(|c| c.t_us >= cutoff && c.t_us <= t_us)
        .copied()
        .collect();
    kept.sort_unstable_by(|a, b| b.t_us.cmp(&a.t_us).then(a.x.cmp(&b.x)).then(a.y.cmp(&b.y)));
    kept
}
