//! The odometry loop: event ingestion and per-event corner detection, event-
//! count-driven slicing with a maximum-interval override, four-surface
//! matching, robust motion estimation, and trajectory integration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::calib::StereoRig;
use crate::detector::{detect, recency_filter, Corner};
use crate::event::{CameraSide, Event};
use crate::matcher::{
    describe, match_circular_with_stats, CircularStats, Feature, MatchParams, QuadMatch,
};
use crate::motion::{ransac_estimate, triangulate, MotionEstimate, Observation, RansacParams};
use crate::rectify::{rectify_point, RectificationMap, RectifyError};
use crate::se3::{EstimateQuality, Pose, TimedPose};
use crate::surface::{IngestOutcome, SurfaceError, TimeSurface, TimestampMap};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{side} stream out of order at event {index}: {got} after {prev}")]
    StreamOrder { side: &'static str, index: u64, prev: u64, got: u64 },
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Rectify(#[from] RectifyError),
}

/// All tunables of the odometry loop.
#[derive(Clone, Copy, Debug)]
pub struct PipelineConfig {
    /// Left-camera events per estimate (N).
    pub events_per_estimate: u32,
    /// Cap between estimates; a pose is emitted at this interval even when
    /// too few events arrive.
    pub max_interval_us: u64,
    /// Time-surface decay constant.
    pub delta_us: u64,
    /// Refractory interval of the reference-timestamp rule.
    pub kappa_us: u64,
    /// Descriptor window side length (odd).
    pub descriptor_window: usize,
    /// Minimum normalized ZNCC for any match link.
    pub zncc_min: f64,
    pub ransac: RansacParams,
    pub epipolar_tolerance_px: f64,
    pub temporal_radius_px: f64,
    pub closure_tolerance_px: f64,
    /// Minimum previous-view disparity for triangulation.
    pub d_min_px: f64,
    /// Maximum disparity; defaults to width / 4 when unset.
    pub d_max_px: Option<f64>,
    pub z_max_m: f64,
    /// Clamp for the adaptive corner-recency window.
    pub recency_clamp_us: (u64, u64),
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            events_per_estimate: 10_000,
            max_interval_us: 1_000_000,
            delta_us: 30_000,
            kappa_us: 50_000,
            descriptor_window: 5,
            zncc_min: 0.8,
            ransac: RansacParams::default(),
            epipolar_tolerance_px: 1.0,
            temporal_radius_px: 15.0,
            closure_tolerance_px: 1.0,
            d_min_px: 0.5,
            d_max_px: None,
            z_max_m: 100.0,
            recency_clamp_us: (1_000, 20_000),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.events_per_estimate == 0 {
            return Err(PipelineError::Config("events_per_estimate must be > 0".into()));
        }
        if self.max_interval_us == 0 {
            return Err(PipelineError::Config("max_interval_us must be > 0".into()));
        }
        if self.delta_us == 0 {
            return Err(PipelineError::Config("delta_us must be > 0".into()));
        }
        if self.descriptor_window < 3 || self.descriptor_window.is_multiple_of(2) {
            return Err(PipelineError::Config("descriptor_window must be odd and >= 3".into()));
        }
        for (name, v) in [
            ("zncc_min", self.zncc_min),
            ("epipolar_tolerance_px", self.epipolar_tolerance_px),
            ("temporal_radius_px", self.temporal_radius_px),
            ("closure_tolerance_px", self.closure_tolerance_px),
            ("d_min_px", self.d_min_px),
            ("z_max_m", self.z_max_m),
            ("inlier_threshold_px", self.ransac.inlier_threshold_px),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(PipelineError::Config(format!("{name} must be positive")));
            }
        }
        if self.zncc_min > 1.0 {
            return Err(PipelineError::Config("zncc_min must be at most 1".into()));
        }
        Ok(())
    }
}

/// What caused a slice to close.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SliceTrigger {
    /// The left camera accumulated N events.
    EventCount,
    /// The maximum interval elapsed first.
    MaxInterval,
    /// The streams ended with a partial slice.
    EndOfStream,
}

/// Per-slice diagnostics handed to the observer right after the trajectory
/// entry is appended. Borrows the slice's surfaces and matches.
pub struct SliceReport<'a> {
    pub slice_index: u64,
    pub stamp_us: u64,
    pub prev_stamp_us: u64,
    pub trigger: SliceTrigger,
    pub pose: TimedPose,
    pub estimate: Option<&'a MotionEstimate>,
    pub quads: &'a [QuadMatch],
    pub match_stats: CircularStats,
    pub surface_left: &'a TimeSurface,
    pub surface_right: &'a TimeSurface,
    /// Corners accumulated over the slice, per camera.
    pub corners: [usize; 2],
    /// Features with valid rectified positions and descriptors.
    pub features_left: &'a [Feature],
    pub features_right: &'a [Feature],
}

/// Observer callback invoked once per closed slice.
pub type Observer<'o> = dyn FnMut(&SliceReport<'_>) + 'o;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PipelineCounters {
    pub events: [u64; 2],
    pub dropped_events: u64,
    pub estimates: u64,
    pub failed_estimates: u64,
    pub stall_estimates: u64,
}

struct PrevSlice {
    stamp_us: u64,
    surfaces: [TimeSurface; 2],
    features: [Vec<Feature>; 2],
}

/// Incremental odometry state fed one merged event at a time.
pub struct Pipeline {
    config: PipelineConfig,
    d_max_px: f64,
    rmap: RectificationMap,
    maps: [TimestampMap; 2],
    corners: [Vec<Corner>; 2],
    slice_event_times: [Vec<u64>; 2],
    previous: Option<PrevSlice>,
    trajectory: Vec<TimedPose>,
    absolute: Pose,
    last_estimate_us: u64,
    last_event_us: Option<u64>,
    left_since_estimate: u32,
    slice_index: u64,
    counters: PipelineCounters,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, rig: &StereoRig) -> Result<Pipeline, PipelineError> {
        config.validate()?;
        let rmap = RectificationMap::build(rig)?;
        let d_max_px = config.d_max_px.unwrap_or(rig.left.width as f64 / 4.0);
        Ok(Pipeline {
            config,
            d_max_px,
            maps: [
                TimestampMap::new(CameraSide::Left, rig.left.width, rig.left.height, config.kappa_us),
                TimestampMap::new(CameraSide::Right, rig.right.width, rig.right.height, config.kappa_us),
            ],
            rmap,
            corners: [Vec::new(), Vec::new()],
            slice_event_times: [Vec::new(), Vec::new()],
            previous: None,
            trajectory: Vec::new(),
            absolute: Pose::identity(),
            last_estimate_us: 0,
            last_event_us: None,
            left_since_estimate: 0,
            slice_index: 0,
            counters: PipelineCounters::default(),
        })
    }

    pub fn trajectory(&self) -> &[TimedPose] {
        &self.trajectory
    }

    pub fn counters(&self) -> &PipelineCounters {
        &self.counters
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn rectification(&self) -> &RectificationMap {
        &self.rmap
    }

    fn match_params(&self) -> MatchParams {
        MatchParams {
            zncc_min: self.config.zncc_min,
            epipolar_tol: self.config.epipolar_tolerance_px,
            d_max: self.d_max_px,
            temporal_radius: self.config.temporal_radius_px,
            closure_tol: self.config.closure_tolerance_px,
        }
    }

    /// Feeds one event from the merged stream (non-decreasing timestamps,
    /// left before right on ties). May close zero or more slices.
    pub fn step(
        &mut self,
        side: CameraSide,
        event: &Event,
        observer: &mut Observer,
    ) -> Result<(), PipelineError> {
        if let Some(prev) = self.last_event_us {
            if event.t_us < prev {
                return Err(PipelineError::StreamOrder {
                    side: side.label(),
                    index: self.counters.events[side.index()],
                    prev,
                    got: event.t_us,
                });
            }
        }
        self.last_event_us = Some(event.t_us);
        self.counters.events[side.index()] += 1;

        if self.trajectory.is_empty() {
            // Trajectory starts as identity at the first event, and the
            // pre-stream state becomes the first "previous" snapshot; the
            // very first estimate then runs the same path as every other.
            self.last_estimate_us = event.t_us;
            self.trajectory.push(TimedPose {
                stamp_us: event.t_us,
                pose: self.absolute,
                quality: EstimateQuality::Estimated,
            });
            let snapshot = self.snapshot(event.t_us)?;
            self.previous = Some(snapshot);
        }

        while event.t_us >= self.last_estimate_us + self.config.max_interval_us {
            let deadline = self.last_estimate_us + self.config.max_interval_us;
            self.close_slice(deadline, SliceTrigger::MaxInterval, observer)?;
        }

        match self.maps[side.index()].ingest(event)? {
            IngestOutcome::OutOfBounds => {
                self.counters.dropped_events += 1;
                return Ok(());
            }
            IngestOutcome::Applied { .. } => {}
        }
        self.slice_event_times[side.index()].push(event.t_us);
        if detect(&self.maps[side.index()], event) {
            self.corners[side.index()].push(Corner::from(event));
        }
        if side == CameraSide::Left {
            self.left_since_estimate += 1;
            if self.left_since_estimate >= self.config.events_per_estimate
                && event.t_us > self.last_estimate_us
            {
                self.close_slice(event.t_us, SliceTrigger::EventCount, observer)?;
            }
        }
        Ok(())
    }

    /// Flushes the final partial slice at the end of the streams.
    pub fn finish(&mut self, observer: &mut Observer) -> Result<(), PipelineError> {
        let Some(last) = self.last_event_us else {
            return Ok(());
        };
        if self.left_since_estimate > 0 && last > self.last_estimate_us {
            self.close_slice(last, SliceTrigger::EndOfStream, observer)?;
        }
        Ok(())
    }

    /// Adaptive corner-recency window: the span of the most recent N/3
    /// events of that camera, clamped to the configured range. The window
    /// must cover a couple of pixels of image motion so every active corner
    /// re-fires within it, while staying well under the slice interval so
    /// matched corners are near-simultaneous; N/3 with the clamp satisfies
    /// both at the search radii used downstream.
    fn recency_window(&self, side: CameraSide, t_us: u64) -> u64 {
        let (lo, hi) = self.config.recency_clamp_us;
        let times = &self.slice_event_times[side.index()];
        let take = (self.config.events_per_estimate as usize / 3).max(1);
        if times.is_empty() {
            return lo;
        }
        let oldest = times[times.len().saturating_sub(take)];
        (t_us.saturating_sub(oldest)).clamp(lo, hi)
    }

    fn snapshot(&self, t_us: u64) -> Result<PrevSlice, PipelineError> {
        let surfaces = [
            self.maps[0].render_rectified(t_us, self.config.delta_us, &self.rmap)?,
            self.maps[1].render_rectified(t_us, self.config.delta_us, &self.rmap)?,
        ];
        let features = [
            self.extract_features(CameraSide::Left, t_us, &surfaces[0]),
            self.extract_features(CameraSide::Right, t_us, &surfaces[1]),
        ];
        Ok(PrevSlice { stamp_us: t_us, surfaces, features })
    }

    fn extract_features(&self, side: CameraSide, t_us: u64, surface: &TimeSurface) -> Vec<Feature> {
        let window = self.recency_window(side, t_us);
        let recent = recency_filter(&self.corners[side.index()], t_us, window);
        let mut seen = std::collections::HashSet::new();
        let mut features = Vec::new();
        for corner in recent {
            // The filter output is newest-first, so the first occurrence per
            // pixel is the most recent detection there.
            if !seen.insert((corner.x, corner.y)) {
                continue;
            }
            let Some(rect) = rectify_point((corner.x as f64, corner.y as f64), side, &self.rmap)
            else {
                continue;
            };
            let Some(descriptor) = describe(surface, rect, self.config.descriptor_window) else {
                continue;
            };
            features.push(Feature { corner, rect, descriptor });
        }
        features
    }

    fn close_slice(
        &mut self,
        t_us: u64,
        trigger: SliceTrigger,
        observer: &mut Observer,
    ) -> Result<(), PipelineError> {
        let current = self.snapshot(t_us)?;
        let n_corners = [
            self.corners[0].len(),
            self.corners[1].len(),
        ];
        let params = self.match_params();

        let (quads, match_stats, estimate, prev_stamp) = match &self.previous {
            Some(prev) => {
                let (mut quads, match_stats) = match_circular_with_stats(
                    &current.features[0],
                    &current.features[1],
                    &prev.features[0],
                    &prev.features[1],
                    &params,
                );
                let rect = &self.rmap.rectified;
                let mut observations = Vec::with_capacity(quads.len());
                for (k, q) in quads.iter_mut().enumerate() {
                    if let Some(lm) =
                        triangulate(q, rect, k, self.config.d_min_px, self.config.z_max_m)
                    {
                        q.depth = Some(lm.position.z);
                        observations.push(Observation {
                            point: lm.position,
                            left: nalgebra::Vector2::new(q.cur_left.0, q.cur_left.1),
                            right: nalgebra::Vector2::new(q.cur_right.0, q.cur_right.1),
                        });
                    }
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
                rng.set_stream(self.slice_index + 1);
                let estimate = if observations.len() >= self.config.ransac.sample_size {
                    ransac_estimate(&observations, rect, &self.config.ransac, &mut rng).ok()
                } else {
                    None
                };
                (quads, match_stats, estimate, prev.stamp_us)
            }
            None => (Vec::new(), CircularStats::default(), None, t_us),
        };

        let quality = match &estimate {
            Some(est) => {
                // The estimate maps previous-view coordinates into the
                // current view; the camera moved by its inverse.
                self.absolute = self.absolute.compose(&est.pose.inverse());
                self.counters.estimates += 1;
                EstimateQuality::Estimated
            }
            None => {
                self.counters.estimates += 1;
                if trigger == SliceTrigger::MaxInterval {
                    self.counters.stall_estimates += 1;
                    EstimateQuality::Stalled
                } else {
                    self.counters.failed_estimates += 1;
                    EstimateQuality::Failed
                }
            }
        };
        let pose = TimedPose { stamp_us: t_us, pose: self.absolute, quality };
        debug_assert!(
            self.trajectory.last().is_none_or(|p| p.stamp_us < t_us),
            "trajectory stamps must be strictly increasing"
        );
        self.trajectory.push(pose);

        for q in quads.iter() {
            debug_assert!(q.disparity_cur() > 0.0 && q.disparity_prev() > 0.0);
        }

        let report = SliceReport {
            slice_index: self.slice_index,
            stamp_us: t_us,
            prev_stamp_us: prev_stamp,
            trigger,
            pose,
            estimate: estimate.as_ref(),
            quads: &quads,
            match_stats,
            surface_left: &current.surfaces[0],
            surface_right: &current.surfaces[1],
            corners: n_corners,
            features_left: &current.features[0],
            features_right: &current.features[1],
        };
        observer(&report);

        // Roll the fresh snapshot into "previous" whether or not the
        // estimate succeeded; stale pairs are never kept.
        self.previous = Some(current);
        self.corners[0].clear();
        self.corners[1].clear();
        self.slice_event_times[0].clear();
        self.slice_event_times[1].clear();
        self.left_since_estimate = 0;
        self.last_estimate_us = t_us;
        self.slice_index += 1;
        Ok(())
    }
}

/// Runs the full loop over two time-ordered streams, merging by timestamp
/// with the left camera first on ties. Returns the pipeline for inspection.
pub fn run(
    config: PipelineConfig,
    rig: &StereoRig,
    left: &[Event],
    right: &[Event],
    observer: &mut Observer,
) -> Result<Pipeline, PipelineError> {
    let mut pipeline = Pipeline::new(config, rig)?;
    let (mut i, mut j) = (0usize, 0usize);
    while i < left.len() || j < right.len() {
        let take_left = match (left.get(i), right.get(j)) {
            (Some(l), Some(r)) => l.t_us <= r.t_us,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => unreachable!(),
        };
        if take_left {
            pipeline.step(CameraSide::Left, &left[i], observer)?;
            i += 1;
        } else {
            pipeline.step(CameraSide::Right, &right[j], observer)?;
            j += 1;
        }
    }
    pipeline.finish(observer)?;
    Ok(pipeline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::CameraIntrinsics;
    use crate::event::Polarity;

    fn small_rig() -> StereoRig {
        let cam = CameraIntrinsics::pinhole(40.0, 31.5, 23.5, 64, 48);
        StereoRig::horizontal(cam, 0.1).unwrap()
    }

    fn quiet_config() -> PipelineConfig {
        PipelineConfig {
            events_per_estimate: 50,
            max_interval_us: 100_000,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn empty_streams_produce_empty_trajectory() {
        let rig = small_rig();
        let p = run(quiet_config(), &rig, &[], &[], &mut |_| {}).unwrap();
        assert!(p.trajectory().is_empty());
    }

    #[test]
    fn first_pose_is_identity_at_first_event() {
        let rig = small_rig();
        let left = vec![Event::new(10, 10, 777, Polarity::Positive)];
        let p = run(quiet_config(), &rig, &left, &[], &mut |_| {}).unwrap();
        assert_eq!(p.trajectory()[0].stamp_us, 777);
        assert_eq!(p.trajectory()[0].pose, Pose::identity());
    }

    #[test]
    fn stall_emits_pose_at_max_interval() {
        let rig = small_rig();
        let left = vec![
            Event::new(10, 10, 0, Polarity::Positive),
            Event::new(11, 10, 350_000, Polarity::Positive),
        ];
        let mut triggers = Vec::new();
        let p = run(quiet_config(), &rig, &left, &[], &mut |r| triggers.push((r.stamp_us, r.trigger)))
            .unwrap();
        // Gaps of 3.5 max-intervals produce stall poses at 100k, 200k, 300k.
        assert_eq!(
            triggers
                .iter()
                .filter(|(_, t)| *t == SliceTrigger::MaxInterval)
                .map(|(t, _)| *t)
                .collect::<Vec<_>>(),
            vec![100_000, 200_000, 300_000]
        );
        assert_eq!(p.counters().stall_estimates, 3);
        for w in p.trajectory().windows(2) {
            assert!(w[0].stamp_us < w[1].stamp_us);
        }
    }

    #[test]
    fn event_count_trigger_closes_slices() {
        let rig = small_rig();
        let n = 50u32;
        let left: Vec<Event> = (0..(n * 4) as u64)
            .map(|k| Event::new((10 + k % 5) as u16, 10, k * 100, Polarity::Positive))
            .collect();
        let mut count_slices = 0;
        let p = run(quiet_config(), &rig, &left, &[], &mut |r| {
            if r.trigger == SliceTrigger::EventCount {
                count_slices += 1;
            }
        })
        .unwrap();
        // 200 events at N = 50: 4 count slices (no flush needed), plus the
        // initial identity entry.
        assert_eq!(count_slices, 4);
        assert_eq!(p.counters().estimates, 4);
        assert_eq!(p.trajectory().len(), 5);
    }

    #[test]
    fn partial_slice_is_flushed_at_end() {
        let rig = small_rig();
        let left: Vec<Event> = (0..70u64)
            .map(|k| Event::new((10 + k % 5) as u16, 10, k * 100, Polarity::Positive))
            .collect();
        let mut triggers = Vec::new();
        run(quiet_config(), &rig, &left, &[], &mut |r| triggers.push(r.trigger)).unwrap();
        assert_eq!(triggers.len(), 2);
        assert_eq!(triggers[1], SliceTrigger::EndOfStream);
    }

    #[test]
    fn out_of_order_merged_stream_is_fatal() {
        let rig = small_rig();
        let left = vec![
            Event::new(10, 10, 100, Polarity::Positive),
            Event::new(10, 10, 50, Polarity::Positive),
        ];
        let err = match run(quiet_config(), &rig, &left, &[], &mut |_| {}) {
            Err(e) => e,
            Ok(_) => panic!("expected a stream-order error"),
        };
        match err {
            PipelineError::StreamOrder { prev, got, .. } => {
                assert_eq!((prev, got), (100, 50));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn out_of_bounds_events_are_dropped_and_counted() {
        let rig = small_rig();
        let left = vec![
            Event::new(10, 10, 0, Polarity::Positive),
            Event::new(64, 10, 10, Polarity::Positive),
            Event::new(10, 48, 20, Polarity::Positive),
        ];
        let p = run(quiet_config(), &rig, &left, &[], &mut |_| {}).unwrap();
        assert_eq!(p.counters().dropped_events, 2);
    }

    #[test]
    fn failed_estimates_keep_the_absolute_pose() {
        let rig = small_rig();
        // Structureless events: no corners, so every slice fails and the
        // pose stays at identity.
        let left: Vec<Event> = (0..120u64)
            .map(|k| Event::new((6 + (k % 50)) as u16, 24, k * 50, Polarity::Positive))
            .collect();
        let p = run(quiet_config(), &rig, &left, &[], &mut |_| {}).unwrap();
        for entry in p.trajectory() {
            assert_eq!(entry.pose, Pose::identity());
        }
        assert!(p.counters().failed_estimates > 0);
    }

    #[test]
    fn merge_prefers_left_on_timestamp_ties() {
        let rig = small_rig();
        let left = vec![Event::new(10, 10, 100, Polarity::Positive)];
        let right = vec![Event::new(20, 10, 100, Polarity::Positive)];
        let p = run(quiet_config(), &rig, &left, &right, &mut |_| {}).unwrap();
        assert_eq!(p.counters().events, [1, 1]);
        assert_eq!(p.trajectory()[0].stamp_us, 100);
    }
}
