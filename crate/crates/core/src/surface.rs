//! Per-pixel timestamp maps with the refractory reference rule, and
//! exponential-decay time surfaces rendered from them at arbitrary query
//! times.

use thiserror::Error;

use crate::event::{CameraSide, Event, Polarity};
use crate::rectify::RectificationMap;

#[derive(Debug, Error, PartialEq)]
pub enum SurfaceError {
    #[error("event at ({x},{y}) regresses pixel time: {got} < {prev}")]
    PixelOrder { x: u16, y: u16, prev: u64, got: u64 },
    #[error("render query at {query} precedes latest ingested event at {latest}")]
    QueryBeforeLatest { query: u64, latest: u64 },
}

/// Outcome of ingesting a single event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IngestOutcome {
    /// Event applied; `refreshed_reference` tells whether the refractory rule
    /// let the reference timestamp advance.
    Applied { refreshed_reference: bool },
    /// Event outside the sensor; dropped and counted.
    OutOfBounds,
}

/// Latest and reference event timestamps per pixel.
///
/// The reference timestamp advances only when the pixel was quiet for at
/// least the refractory interval, when the polarity flips, or on the first
/// event at that pixel. Burst noise therefore leaves the reference map
/// untouched, which is what the corner detector reads.
pub struct TimestampMap {
    camera: CameraSide,
    width: u16,
    height: u16,
    kappa_us: u64,
    t_last: Vec<Option<u64>>,
    t_ref: Vec<Option<u64>>,
    last_polarity: Vec<Option<Polarity>>,
    latest_us: Option<u64>,
    dropped: u64,
}

impl TimestampMap {
    pub fn new(camera: CameraSide, width: u16, height: u16, kappa_us: u64) -> TimestampMap {
        let n = width as usize * height as usize;
        TimestampMap {
            camera,
            width,
            height,
            kappa_us,
            t_last: vec![None; n],
            t_ref: vec![None; n],
            last_polarity: vec![None; n],
            latest_us: None,
            dropped: 0,
        }
    }

    pub fn camera(&self) -> CameraSide {
        self.camera
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn kappa_us(&self) -> u64 {
        self.kappa_us
    }

    /// Events dropped for being outside the sensor.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    /// Timestamp of the newest ingested event.
    pub fn latest_us(&self) -> Option<u64> {
        self.latest_us
    }

    #[inline]
    fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn t_last(&self, x: u16, y: u16) -> Option<u64> {
        self.t_last[self.index(x, y)]
    }

    pub fn t_ref(&self, x: u16, y: u16) -> Option<u64> {
        self.t_ref[self.index(x, y)]
    }

    pub fn last_polarity(&self, x: u16, y: u16) -> Option<Polarity> {
        self.last_polarity[self.index(x, y)]
    }

    pub fn ingest(&mut self, e: &Event) -> Result<IngestOutcome, SurfaceError> {
        if e.x >= self.width || e.y >= self.height {
            self.dropped += 1;
            return Ok(IngestOutcome::OutOfBounds);
        }
        let idx = self.index(e.x, e.y);
        let prev_last = self.t_last[idx];
        if let Some(prev) = prev_last {
            if e.t_us < prev {
                return Err(SurfaceError::PixelOrder { x: e.x, y: e.y, prev, got: e.t_us });
            }
        }
        let refresh = match prev_last {
            None => true,
            Some(prev) => {
                e.t_us > prev + self.kappa_us || self.last_polarity[idx] != Some(e.polarity)
            }
        };
        self.t_last[idx] = Some(e.t_us);
        if refresh {
            self.t_ref[idx] = Some(e.t_us);
        }
        self.last_polarity[idx] = Some(e.polarity);
        self.latest_us = Some(self.latest_us.map_or(e.t_us, |l| l.max(e.t_us)));
        Ok(IngestOutcome::Applied { refreshed_reference: refresh })
    }

    /// Decayed snapshot at query time `t_us`: `exp(-(t - t_last) / delta)`
    /// per fired pixel, exactly 0 for silent pixels.
    pub fn render(&self, t_us: u64, delta_us: u64) -> Result<TimeSurface, SurfaceError> {
        if let Some(latest) = self.latest_us {
            if t_us < latest {
                return Err(SurfaceError::QueryBeforeLatest { query: t_us, latest });
            }
        }
        let delta = delta_us as f64;
        let values = self
            .t_last
            .iter()
            .map(|slot| match slot {
                Some(last) => (-((t_us - last) as f64) / delta).exp(),
                None => 0.0,
            })
            .collect();
        Ok(TimeSurface {
            values,
            width: self.width,
            height: self.height,
            stamp_us: t_us,
            delta_us,
            camera: self.camera,
            rectified: false,
        })
    }

    /// Renders and resamples into the rectified frame by bilinear splatting
    /// through the forward rectification map, normalizing by the accumulated
    /// splat weight so values stay within [0, 1].
    pub fn render_rectified(
        &self,
        t_us: u64,
        delta_us: u64,
        rmap: &RectificationMap,
    ) -> Result<TimeSurface, SurfaceError> {
        let raw = self.render(t_us, delta_us)?;
        Ok(splat_rectified(&raw, rmap))
    }
}

/// Splats a raw-frame surface into the rectified frame. Exposed so tests can
/// drive it with independently computed maps.
pub fn splat_rectified(raw: &TimeSurface, rmap: &RectificationMap) -> TimeSurface {
    let width = rmap.rectified.width;
    let height = rmap.rectified.height;
    let n = width as usize * height as usize;
    let mut acc = vec![0.0f64; n];
    let mut weight = vec![0.0f64; n];
    for y in 0..raw.height {
        for x in 0..raw.width {
            let Some((ru, rv)) = rmap.map_entry(raw.camera, x as u32, y as u32) else {
                continue;
            };
            let v = raw.get(x, y);
            let x0 = ru.floor();
            let y0 = rv.floor();
            let fx = ru - x0;
            let fy = rv - y0;
            let x0 = x0 as i64;
            let y0 = y0 as i64;
            for (xx, yy, w) in [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x0 + 1, y0, fx * (1.0 - fy)),
                (x0, y0 + 1, (1.0 - fx) * fy),
                (x0 + 1, y0 + 1, fx * fy),
            ] {
                if w == 0.0 || xx < 0 || yy < 0 || xx >= width as i64 || yy >= height as i64 {
                    continue;
                }
                let idx = yy as usize * width as usize + xx as usize;
                acc[idx] += w * v;
                weight[idx] += w;
            }
        }
    }
    let values = acc
        .iter()
        .zip(weight.iter())
        .map(|(&a, &w)| if w > 0.0 { a / w } else { 0.0 })
        .collect();
    TimeSurface {
        values,
        width,
        height,
        stamp_us: raw.stamp_us,
        delta_us: raw.delta_us,
        camera: raw.camera,
        rectified: true,
    }
}

/// Immutable decayed snapshot of event recency; values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSurface {
    values: Vec<f64>,
    width: u16,
    height: u16,
    pub stamp_us: u64,
    pub delta_us: u64,
    pub camera: CameraSide,
    pub rectified: bool,
}

impl TimeSurface {
    /// Builds a surface from raw values (row-major, `width * height` long).
    /// Intended for synthetic inputs in tests and tools; `render` is the
    /// production path.
    pub fn from_values(
        values: Vec<f64>,
        width: u16,
        height: u16,
        stamp_us: u64,
        delta_us: u64,
        camera: CameraSide,
        rectified: bool,
    ) -> TimeSurface {
        assert_eq!(values.len(), width as usize * height as usize);
        TimeSurface { values, width, height, stamp_us, delta_us, camera, rectified }
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn get(&self, x: u16, y: u16) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Bilinear sample at a sub-pixel position; caller keeps the position
    /// inside `[0, width-1] x [0, height-1]`.
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let x0 = (u.floor() as usize).min(self.width as usize - 1);
        let y0 = (v.floor() as usize).min(self.height as usize - 1);
        let x1 = (x0 + 1).min(self.width as usize - 1);
        let y1 = (y0 + 1).min(self.height as usize - 1);
        let fx = u - x0 as f64;
        let fy = v - y0 as f64;
        let w = self.width as usize;
        let v00 = self.values[y0 * w + x0];
        let v10 = self.values[y0 * w + x1];
        let v01 = self.values[y1 * w + x0];
        let v11 = self.values[y1 * w + x1];
        v00 * (1.0 - fx) * (1.0 - fy)
            + v10 * fx * (1.0 - fy)
            + v01 * (1.0 - fx) * fy
            + v11 * fx * fy
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::{CameraIntrinsics, StereoRig};
    use crate::rectify::RectificationMap;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn map_16x16(kappa: u64) -> TimestampMap {
        TimestampMap::new(CameraSide::Left, 16, 16, kappa)
    }

    #[test]
    fn first_event_sets_both_timestamps() {
        let mut m = map_16x16(50_000);
        m.ingest(&Event::new(3, 4, 100, Polarity::Positive)).unwrap();
        assert_eq!(m.t_last(3, 4), Some(100));
        assert_eq!(m.t_ref(3, 4), Some(100));
    }

    #[test]
    fn same_polarity_burst_keeps_reference() {
        let mut m = map_16x16(50_000);
        m.ingest(&Event::new(3, 4, 0, Polarity::Positive)).unwrap();
        m.ingest(&Event::new(3, 4, 10_000, Polarity::Positive)).unwrap();
        assert_eq!(m.t_last(3, 4), Some(10_000));
        assert_eq!(m.t_ref(3, 4), Some(0));
    }

    #[test]
    fn polarity_change_refreshes_reference() {
        let mut m = map_16x16(50_000);
        m.ingest(&Event::new(3, 4, 0, Polarity::Positive)).unwrap();
        m.ingest(&Event::new(3, 4, 10_000, Polarity::Negative)).unwrap();
        assert_eq!(m.t_ref(3, 4), Some(10_000));
    }

    #[test]
    fn quiet_interval_refreshes_reference() {
        let mut m = map_16x16(50_000);
        m.ingest(&Event::new(3, 4, 0, Polarity::Positive)).unwrap();
        // Exactly kappa later: not strictly greater, reference stays.
        m.ingest(&Event::new(3, 4, 50_000, Polarity::Positive)).unwrap();
        assert_eq!(m.t_ref(3, 4), Some(0));
        m.ingest(&Event::new(3, 4, 100_001, Polarity::Positive)).unwrap();
        assert_eq!(m.t_ref(3, 4), Some(100_001));
    }

    #[test]
    fn out_of_bounds_events_counted() {
        let mut m = map_16x16(50_000);
        assert_eq!(
            m.ingest(&Event::new(16, 0, 5, Polarity::Positive)).unwrap(),
            IngestOutcome::OutOfBounds
        );
        assert_eq!(m.dropped(), 1);
    }

    #[test]
    fn pixel_time_regression_is_an_error() {
        let mut m = map_16x16(50_000);
        m.ingest(&Event::new(1, 1, 100, Polarity::Positive)).unwrap();
        assert!(m.ingest(&Event::new(1, 1, 99, Polarity::Positive)).is_err());
    }

    #[test]
    fn render_analytic_values() {
        let mut m = map_16x16(50_000);
        m.ingest(&Event::new(2, 2, 1_000, Polarity::Positive)).unwrap();
        m.ingest(&Event::new(5, 5, 31_000, Polarity::Negative)).unwrap();
        let s = m.render(31_000, 30_000).unwrap();
        assert_eq!(s.get(5, 5), 1.0);
        assert!((s.get(2, 2) - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(s.get(9, 9), 0.0);
    }

    #[test]
    fn render_rejects_past_queries() {
        let mut m = map_16x16(50_000);
        m.ingest(&Event::new(2, 2, 1_000, Polarity::Positive)).unwrap();
        assert!(matches!(
            m.render(999, 30_000),
            Err(SurfaceError::QueryBeforeLatest { .. })
        ));
    }

    #[test]
    fn monotone_decay_between_untouched_queries() {
        let mut m = map_16x16(50_000);
        let mut rng = StdRng::seed_from_u64(7);
        for t in 0..200u64 {
            let x = rng.random_range(0..16u16);
            let y = rng.random_range(0..16u16);
            let p = if rng.random_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
            m.ingest(&Event::new(x, y, t * 10, Polarity::from_bit(p.to_bit()).unwrap()))
                .unwrap();
        }
        let s1 = m.render(3_000, 30_000).unwrap();
        let s2 = m.render(9_000, 30_000).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                assert!(s1.get(x, y) >= s2.get(x, y));
            }
        }
    }

    #[test]
    fn render_is_idempotent() {
        let mut m = map_16x16(50_000);
        for t in 0..50u64 {
            m.ingest(&Event::new((t % 16) as u16, (t / 16) as u16, t * 7, Polarity::Positive))
                .unwrap();
        }
        let a = m.render(1_000, 30_000).unwrap();
        let b = m.render(1_000, 30_000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn replay_determinism() {
        let mut rng = StdRng::seed_from_u64(11);
        let events: Vec<Event> = (0..500)
            .map(|i| {
                Event::new(
                    rng.random_range(0..16),
                    rng.random_range(0..16),
                    i * 3,
                    if rng.random_bool(0.5) { Polarity::Positive } else { Polarity::Negative },
                )
            })
            .collect();
        let mut a = map_16x16(40);
        let mut b = map_16x16(40);
        for e in &events {
            a.ingest(e).unwrap();
            b.ingest(e).unwrap();
        }
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(a.t_last(x, y), b.t_last(x, y));
                assert_eq!(a.t_ref(x, y), b.t_ref(x, y));
            }
        }
    }

    /// Brute-force reference-rule oracle: recompute t_ref for one pixel by
    /// rescanning the full event history.
    fn rescan_reference(history: &[Event], x: u16, y: u16, kappa: u64) -> Option<u64> {
        let mut t_last: Option<u64> = None;
        let mut t_ref: Option<u64> = None;
        let mut pol: Option<Polarity> = None;
        for e in history.iter().filter(|e| e.x == x && e.y == y) {
            let refresh = match t_last {
                None => true,
                Some(prev) => e.t_us > prev + kappa || pol != Some(e.polarity),
            };
            if refresh {
                t_ref = Some(e.t_us);
            }
            t_last = Some(e.t_us);
            pol = Some(e.polarity);
        }
        t_ref
    }

    #[test]
    fn incremental_reference_matches_rescan_oracle() {
        let mut rng = StdRng::seed_from_u64(13);
        let kappa = 120;
        let mut t = 0u64;
        let events: Vec<Event> = (0..3_000)
            .map(|_| {
                t += rng.random_range(0..90);
                Event::new(
                    rng.random_range(0..16),
                    rng.random_range(0..16),
                    t,
                    if rng.random_bool(0.6) { Polarity::Positive } else { Polarity::Negative },
                )
            })
            .collect();
        let mut m = map_16x16(kappa);
        for e in &events {
            m.ingest(e).unwrap();
        }
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(m.t_ref(x, y), rescan_reference(&events, x, y, kappa));
            }
        }
    }

    #[test]
    fn identity_rectification_matches_raw_render() {
        let cam = CameraIntrinsics::pinhole(20.0, 7.5, 7.5, 16, 16);
        let rig = StereoRig::horizontal(cam, 0.1).unwrap();
        let rmap = RectificationMap::build(&rig).unwrap();
        let mut m = map_16x16(50_000);
        for t in 0..40u64 {
            m.ingest(&Event::new((t * 3 % 16) as u16, (t * 5 % 16) as u16, t * 11, Polarity::Positive))
                .unwrap();
        }
        let raw = m.render(1_000, 30_000).unwrap();
        let rect = m.render_rectified(1_000, 30_000, &rmap).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                assert!((raw.get(x, y) - rect.get(x, y)).abs() < 1e-12);
            }
        }
        assert!(rect.rectified);
    }

    #[test]
    fn bilinear_sample_on_ramp_hits_midpoints() {
        // Surface values form a linear ramp in x; half-pixel samples must
        // return exact midpoints.
        let mut m = map_16x16(50_000);
        // Ages chosen so values are distinct but irrelevant; we overwrite via
        // a handcrafted surface below instead.
        m.ingest(&Event::new(0, 0, 0, Polarity::Positive)).unwrap();
        let mut s = m.render(0, 30_000).unwrap();
        for y in 0..16u16 {
            for x in 0..16u16 {
                let idx = y as usize * 16 + x as usize;
                s.values[idx] = x as f64 / 15.0;
            }
        }
        let v = s.sample(3.5, 8.0);
        assert!((v - 3.5 / 15.0).abs() < 1e-15);
    }
}
