//! Synthetic stereo event streams with exact ground truth: a moving virtual
//! rig observes a 3D wireframe scene, and any pixel whose distance to the
//! nearest projected edge crosses the 1 px threshold between fine time steps
//! emits an event (approach = positive, recede = negative).

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::calib::{CameraIntrinsics, StereoRig};
use crate::event::{CameraSide, Event, Polarity};
use crate::se3::{so3_exp, so3_log, EstimateQuality, Pose, TimedPose};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("scenario has no scene segments")]
    EmptyScene,
    #[error("trajectory needs at least two knots with increasing times")]
    BadTrajectory,
    #[error("time step must be in (0, 200] microseconds, got {0}")]
    BadStep(u64),
    #[error("scene is behind the camera for {percent:.0}% of the trajectory")]
    SceneBehindCamera { percent: f64 },
}

/// A wireframe edge in world coordinates, meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
}

/// Camera-to-world pose at a spline knot; poses between knots follow
/// constant-velocity interpolation.
#[derive(Clone, Debug)]
pub struct PoseKnot {
    pub t_us: u64,
    pub pose: Pose,
}

/// One ground-truth pixel track sample of a labeled scene junction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JunctionSample {
    pub junction: u32,
    pub t_us: u64,
    pub cam: CameraSide,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// Camera-to-world poses sampled along the trajectory.
    pub trajectory: Vec<TimedPose>,
    /// Per-camera pixel tracks of the labeled junctions.
    pub tracks: Vec<JunctionSample>,
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub left: Vec<Event>,
    pub right: Vec<Event>,
    pub truth: GroundTruth,
}

/// A wireframe scene, a pose spline, a rig, and noise settings.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub scene: Vec<Segment>,
    /// Labeled corner junctions (indices are the junction ids).
    pub junctions: Vec<Vector3<f64>>,
    pub knots: Vec<PoseKnot>,
    pub rig: StereoRig,
    /// Events emitted per threshold crossing (burst density).
    pub events_per_edge_crossing: u32,
    /// Half-width of the uniform per-event timestamp jitter, microseconds.
    pub jitter_us: u64,
    /// Spurious events per pixel per second.
    pub spurious_rate: f64,
    /// Fine simulation step, microseconds (at most 200).
    pub step_us: u64,
    /// Cadence of ground-truth trajectory and track samples.
    pub track_sample_us: u64,
}

impl Scenario {
    pub fn duration_us(&self) -> u64 {
        self.knots.last().map_or(0, |k| k.t_us)
    }

    /// Interpolated camera-to-world pose at `t_us` (clamped to the spline).
    pub fn pose_at(&self, t_us: u64) -> Pose {
        let knots = &self.knots;
        if t_us <= knots[0].t_us {
            return knots[0].pose;
        }
        if t_us >= knots[knots.len() - 1].t_us {
            return knots[knots.len() - 1].pose;
        }
        let idx = knots.partition_point(|k| k.t_us <= t_us) - 1;
        let (a, b) = (&knots[idx], &knots[idx + 1]);
        let alpha = (t_us - a.t_us) as f64 / (b.t_us - a.t_us) as f64;
        let translation = a.pose.translation() + alpha * (b.pose.translation() - a.pose.translation());
        let relative = a.pose.rotation().transpose() * b.pose.rotation();
        let rotation = a.pose.rotation() * so3_exp(&(alpha * so3_log(&relative)));
        Pose::new(rotation, translation).expect("interpolated rotation is valid")
    }
}

const NEAR_PLANE: f64 = 0.15;
const EDGE_THRESHOLD: f64 = 1.0;
const STAMP_BAND: f64 = 1.35;
const TRACK_MARGIN: f64 = 4.0;

/// World-to-camera transform for one camera of the rig at a given pose.
struct CameraFrame {
    pose_inv: Pose,
    cam: CameraIntrinsics,
}

impl CameraFrame {
    fn left(rig: &StereoRig, world_from_cam: &Pose) -> CameraFrame {
        CameraFrame { pose_inv: world_from_cam.inverse(), cam: rig.left }
    }

    fn right(rig: &StereoRig, world_from_cam: &Pose) -> CameraFrame {
        let extrinsic = Pose::new(rig.rotation, rig.translation).expect("rig validated");
        CameraFrame {
            pose_inv: extrinsic.compose(&world_from_cam.inverse()),
            cam: rig.right,
        }
    }

    fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.pose_inv.transform(p)
    }

    fn project(&self, p_cam: &Vector3<f64>) -> (f64, f64) {
        let (xd, yd) = self.cam.distort(p_cam.x / p_cam.z, p_cam.y / p_cam.z);
        (self.cam.fx * xd + self.cam.cx, self.cam.fy * yd + self.cam.cy)
    }

    /// Clips a world segment against the near plane and returns the
    /// camera-space endpoints, or None when fully behind the camera.
    fn clip_segment(&self, s: &Segment) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let mut a = self.to_camera(&s.a);
        let mut b = self.to_camera(&s.b);
        if a.z < NEAR_PLANE && b.z < NEAR_PLANE {
            return None;
        }
        if a.z < NEAR_PLANE {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            a += t * (b - a);
        } else if b.z < NEAR_PLANE {
            let t = (NEAR_PLANE - b.z) / (a.z - b.z);
            b += t * (a - b);
        }
        Some((a, b))
    }

    /// Stamps a world segment into the grid as a polyline of short chords,
    /// so lens distortion's curvature is followed to sub-pixel accuracy.
    fn stamp_segment(&self, grid: &mut DistanceGrid, s: &Segment) -> bool {
        let Some((a, b)) = self.clip_segment(s) else {
            return false;
        };
        let pieces = ((b - a).norm() / 0.25).ceil().max(1.0) as usize;
        let mut prev = self.project(&a);
        for k in 1..=pieces {
            let p = a + (k as f64 / pieces as f64) * (b - a);
            let cur = self.project(&p);
            grid.stamp(prev, cur);
            prev = cur;
        }
        true
    }
}

#[inline]
fn dist_sq_point_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let ab = (b.0 - a.0, b.1 - a.1);
    let ap = (p.0 - a.0, p.1 - a.1);
    let len2 = ab.0 * ab.0 + ab.1 * ab.1;
    if len2 < 1e-18 {
        return ap.0 * ap.0 + ap.1 * ap.1;
    }
    let t = ((ap.0 * ab.0 + ap.1 * ab.1) / len2).clamp(0.0, 1.0);
    let dx = p.0 - (a.0 + t * ab.0);
    let dy = p.1 - (a.1 + t * ab.1);
    dx * dx + dy * dy
}

/// Sparse grid of squared distances to the nearest projected edge, with a
/// touched-pixel list for O(active) resets.
struct DistanceGrid {
    width: usize,
    height: usize,
    values: Vec<f32>,
    touched: Vec<u32>,
}

impl DistanceGrid {
    fn new(width: usize, height: usize) -> DistanceGrid {
        DistanceGrid { width, height, values: vec![f32::INFINITY; width * height], touched: Vec::new() }
    }

    #[inline]
    fn update(&mut self, idx: usize, d: f32) {
        let slot = &mut self.values[idx];
        if slot.is_infinite() {
            self.touched.push(idx as u32);
        }
        if d < *slot {
            *slot = d;
        }
    }

    fn clear(&mut self) {
        for &idx in &self.touched {
            self.values[idx as usize] = f32::INFINITY;
        }
        self.touched.clear();
    }

    /// Stamps squared distances to the segment onto all pixels within the
    /// band, walking one major-axis line at a time.
    fn stamp(&mut self, a: (f64, f64), b: (f64, f64)) {
        let band_sq = (STAMP_BAND * STAMP_BAND) as f32;
        let (w, h) = (self.width as f64, self.height as f64);
        let dx = b.0 - a.0;
        let dy = b.1 - a.1;
        if dx.abs() >= dy.abs() {
            let (p, q) = if a.0 <= b.0 { (a, b) } else { (b, a) };
            let x0 = (p.0 - STAMP_BAND).floor().max(0.0);
            let x1 = (q.0 + STAMP_BAND).ceil().min(w - 1.0);
            if x0 > x1 {
                return;
            }
            let slope = if q.0 > p.0 { (q.1 - p.1) / (q.0 - p.0) } else { 0.0 };
            let pad = STAMP_BAND + 0.5 * slope.abs() + 0.5;
            for xi in (x0 as i64)..=(x1 as i64) {
                let xc = xi as f64;
                let t = if q.0 > p.0 { ((xc - p.0) / (q.0 - p.0)).clamp(0.0, 1.0) } else { 0.0 };
                let yline = p.1 + t * (q.1 - p.1);
                let y0 = (yline - pad).floor().max(0.0);
                let y1 = (yline + pad).ceil().min(h - 1.0);
                if y0 > y1 {
                    continue;
                }
                let row_base = xi as usize;
                for yi in (y0 as i64)..=(y1 as i64) {
                    let d2 = dist_sq_point_segment((xc, yi as f64), p, q) as f32;
                    if d2 <= band_sq {
                        self.update(yi as usize * self.width + row_base, d2);
                    }
                }
            }
        } else {
            let (p, q) = if a.1 <= b.1 { (a, b) } else { (b, a) };
            let y0 = (p.1 - STAMP_BAND).floor().max(0.0);
            let y1 = (q.1 + STAMP_BAND).ceil().min(h - 1.0);
            if y0 > y1 {
                return;
            }
            let slope = if q.1 > p.1 { (q.0 - p.0) / (q.1 - p.1) } else { 0.0 };
            let pad = STAMP_BAND + 0.5 * slope.abs() + 0.5;
            for yi in (y0 as i64)..=(y1 as i64) {
                let yc = yi as f64;
                let t = if q.1 > p.1 { ((yc - p.1) / (q.1 - p.1)).clamp(0.0, 1.0) } else { 0.0 };
                let xline = p.0 + t * (q.0 - p.0);
                let x0 = (xline - pad).floor().max(0.0);
                let x1 = (xline + pad).ceil().min(w - 1.0);
                if x0 > x1 {
                    continue;
                }
                let row = yi as usize * self.width;
                for xi in (x0 as i64)..=(x1 as i64) {
                    let d2 = dist_sq_point_segment((xi as f64, yc), p, q) as f32;
                    if d2 <= band_sq {
                        self.update(row + xi as usize, d2);
                    }
                }
            }
        }
    }
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    let limit = (-lambda).exp();
    let mut k = 0u32;
    let mut p = 1.0f64;
    loop {
        p *= rng.random::<f64>();
        if p <= limit || k > 100_000 {
            return k;
        }
        k += 1;
    }
}

struct CameraState {
    prev: DistanceGrid,
    cur: DistanceGrid,
    events: Vec<Event>,
}

/// Generates both event streams plus the ground-truth trajectory and
/// junction tracks.
pub fn generate(sc: &Scenario, seed: u64) -> Result<SynthOutput, SynthError> {
    if sc.scene.is_empty() {
        return Err(SynthError::EmptyScene);
    }
    if sc.knots.len() < 2 || sc.duration_us() == 0 {
        return Err(SynthError::BadTrajectory);
    }
    for w in sc.knots.windows(2) {
        if w[1].t_us <= w[0].t_us {
            return Err(SynthError::BadTrajectory);
        }
    }
    if sc.step_us == 0 || sc.step_us > 200 {
        return Err(SynthError::BadStep(sc.step_us));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = sc.rig.left.width as usize;
    let height = sc.rig.left.height as usize;
    let mut cams = [
        CameraState {
            prev: DistanceGrid::new(width, height),
            cur: DistanceGrid::new(width, height),
            events: Vec::new(),
        },
        CameraState {
            prev: DistanceGrid::new(width, height),
            cur: DistanceGrid::new(width, height),
            events: Vec::new(),
        },
    ];

    let duration = sc.duration_us();
    let n_steps = duration.div_ceil(sc.step_us);
    let mut blind_boundaries = 0u64;
    let mut t_prev = 0u64;
    let mut last_pose: Option<Pose> = None;
    for k in 0..=n_steps {
        let t_cur = (k * sc.step_us).min(duration);
        let world_from_cam = sc.pose_at(t_cur);
        // A stationary camera leaves the distance fields untouched, so the
        // projection and crossing work can be skipped wholesale.
        let moved = last_pose.as_ref() != Some(&world_from_cam);
        last_pose = Some(world_from_cam);
        let frames = [
            CameraFrame::left(&sc.rig, &world_from_cam),
            CameraFrame::right(&sc.rig, &world_from_cam),
        ];
        let mut any_visible = !moved;
        for (ci, frame) in frames.iter().enumerate() {
            let state = &mut cams[ci];
            if moved || k == 0 {
                for seg in &sc.scene {
                    if frame.stamp_segment(&mut state.cur, seg) {
                        any_visible = true;
                    }
                }
                emit_crossings(state, sc, t_prev, t_cur, k == 0, &mut rng);
                // Swap cur into prev and recycle the old prev grid.
                state.prev.clear();
                std::mem::swap(&mut state.prev, &mut state.cur);
            }
            // Spurious noise, uniform over the sensor and the step.
            if sc.spurious_rate > 0.0 && k > 0 {
                let lambda = sc.spurious_rate
                    * (width * height) as f64
                    * ((t_cur - t_prev) as f64 / 1e6);
                for _ in 0..poisson(&mut rng, lambda) {
                    let x = rng.random_range(0..width as u16);
                    let y = rng.random_range(0..height as u16);
                    let t = rng.random_range(t_prev..=t_cur);
                    let polarity =
                        if rng.random_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
                    state.events.push(Event::new(x, y, t, polarity));
                }
            }
        }
        if !any_visible {
            blind_boundaries += 1;
        }
        t_prev = t_cur;
        if t_cur == duration {
            break;
        }
    }

    let blind_fraction = blind_boundaries as f64 / (n_steps + 1) as f64;
    if blind_fraction > 0.1 {
        return Err(SynthError::SceneBehindCamera { percent: 100.0 * blind_fraction });
    }

    for state in &mut cams {
        state.events.sort_by_key(|e| (e.t_us, e.x, e.y, e.polarity.to_bit()));
    }

    let truth = ground_truth(sc);
    let [left_state, right_state] = cams;
    Ok(SynthOutput { left: left_state.events, right: right_state.events, truth })
}

/// Threshold crossings between the previous and current distance grids. A
/// crossing stands for a thin bright line transiting the pixel: the burst
/// alternates polarity (brightness up as the line arrives, down as it
/// leaves) so the refractory reference rule keeps refreshing on later
/// passages.
fn emit_crossings(
    state: &mut CameraState,
    sc: &Scenario,
    t_prev: u64,
    t_cur: u64,
    first_boundary: bool,
    rng: &mut ChaCha8Rng,
) {
    let width = state.prev.width;
    let span = t_cur.saturating_sub(t_prev);
    let mut push = |events: &mut Vec<Event>, idx: usize, frac: f64| {
        let x = (idx % width) as u16;
        let y = (idx / width) as u16;
        let base = t_prev + (frac * span as f64).round() as u64;
        for copy in 0..sc.events_per_edge_crossing.max(1) {
            let polarity = if copy % 2 == 0 { Polarity::Positive } else { Polarity::Negative };
            let mut t = base.saturating_add(copy as u64);
            if sc.jitter_us > 0 {
                let j = rng.random_range(-(sc.jitter_us as i64)..=(sc.jitter_us as i64));
                t = if j < 0 { t.saturating_sub((-j) as u64) } else { t + j as u64 };
            }
            events.push(Event::new(x, y, t.min(sc.duration_us()), polarity));
        }
    };

    // Grid values are squared distances; the threshold is 1 px so the
    // squared comparison is unchanged and square roots are only needed for
    // the crossing-time interpolation of actual events.
    let threshold_sq = (EDGE_THRESHOLD * EDGE_THRESHOLD) as f32;
    for i in 0..state.cur.touched.len() {
        let idx = state.cur.touched[i] as usize;
        let c2 = state.cur.values[idx];
        let p2 = state.prev.values[idx];
        if first_boundary {
            if c2 < threshold_sq {
                push(&mut state.events, idx, 1.0);
            }
            continue;
        }
        if p2 >= threshold_sq && c2 < threshold_sq {
            let frac = if p2.is_finite() {
                let p = (p2 as f64).sqrt();
                let c = (c2 as f64).sqrt();
                (p - EDGE_THRESHOLD) / (p - c)
            } else {
                0.5
            };
            push(&mut state.events, idx, frac.clamp(0.0, 1.0));
        }
    }
}

fn ground_truth(sc: &Scenario) -> GroundTruth {
    let duration = sc.duration_us();
    let cadence = sc.track_sample_us.max(1);
    let mut trajectory = Vec::new();
    let mut tracks = Vec::new();
    let mut t = 0u64;
    loop {
        let pose = sc.pose_at(t);
        trajectory.push(TimedPose { stamp_us: t, pose, quality: EstimateQuality::Estimated });
        let frames = [
            (CameraSide::Left, CameraFrame::left(&sc.rig, &pose)),
            (CameraSide::Right, CameraFrame::right(&sc.rig, &pose)),
        ];
        for (side, frame) in &frames {
            for (id, junction) in sc.junctions.iter().enumerate() {
                let p = frame.to_camera(junction);
                if p.z < NEAR_PLANE {
                    continue;
                }
                let (x, y) = frame.project(&p);
                if x < TRACK_MARGIN
                    || y < TRACK_MARGIN
                    || x > (frame.cam.width - 1) as f64 - TRACK_MARGIN
                    || y > (frame.cam.height - 1) as f64 - TRACK_MARGIN
                {
                    continue;
                }
                tracks.push(JunctionSample { junction: id as u32, t_us: t, cam: *side, x, y });
            }
        }
        if t == duration {
            break;
        }
        t = (t + cadence).min(duration);
    }
    GroundTruth { trajectory, tracks }
}

/// Options shared by the built-in scenarios.
#[derive(Clone, Copy, Debug)]
pub struct ScenarioOptions {
    pub speed_mps: f64,
    pub distance_m: f64,
    pub jitter_us: u64,
    pub spurious_rate: f64,
    pub events_per_edge_crossing: u32,
    /// Camera yaw relative to the travel direction, radians. An oblique
    /// view gives the scene transversal image motion; staring straight at
    /// the focus of expansion leaves most structure nearly motionless.
    pub yaw_rad: f64,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions {
            speed_mps: 1.0,
            distance_m: 10.0,
            jitter_us: 0,
            spurious_rate: 0.0,
            // A polarity-alternating pair per crossing: the line's arrival
            // and departure at the pixel.
            events_per_edge_crossing: 2,
            yaw_rad: 0.6,
        }
    }
}

/// Wireframe corridor with braced rings and X-crossed wall panels, observed
/// by an MVSEC-class rig (346x260, 10 cm baseline). The rig carries mild
/// radial distortion and a small extrinsic misalignment, as real rigs do;
/// rectification therefore genuinely resamples both views. The camera
/// translates down the corridor with a slight diagonal drift, viewing the
/// wall obliquely.
pub fn corridor_scenario(opts: &ScenarioOptions) -> Scenario {
    let left =
        CameraIntrinsics::new(281.4, 279.3, 170.8, 131.2, 346, 260, &[-0.12, 0.018]).unwrap();
    let right =
        CameraIntrinsics::new(278.7, 280.1, 174.3, 127.9, 346, 260, &[-0.115, 0.016]).unwrap();
    let rotation = so3_exp(&Vector3::new(0.008, -0.011, 0.006));
    let translation = Vector3::new(-0.0999, 0.0012, -0.0008);
    let rig = StereoRig::new(left, right, rotation, translation).expect("valid rig");
    wireframe_tunnel(rig, 1.5, 1.5, 1.0, opts)
}

/// Street-scale canyon observed by a DSEC-class rig (640x480, 60 cm
/// baseline): wider cross-section, braces every 2 m.
pub fn street_scenario(opts: &ScenarioOptions) -> Scenario {
    let left =
        CameraIntrinsics::new(421.6, 419.8, 318.2, 241.1, 640, 480, &[-0.09, 0.012]).unwrap();
    let right =
        CameraIntrinsics::new(418.9, 420.7, 321.4, 238.6, 640, 480, &[-0.085, 0.011]).unwrap();
    let rotation = so3_exp(&Vector3::new(-0.006, 0.009, -0.004));
    let translation = Vector3::new(-0.5998, -0.0015, 0.0011);
    let rig = StereoRig::new(left, right, rotation, translation).expect("valid rig");
    wireframe_tunnel(rig, 4.0, 3.0, 2.0, opts)
}

/// One braced ring panel of the corridor observed head-on during a lateral
/// pass. A single fronto-parallel plane gives every labeled junction fresh,
/// warp-free stereo appearance; this is the feature-matching stress setup.
/// (The full corridor stacks transparent wireframe layers at conflicting
/// disparities through every neighborhood, which no appearance-based
/// matcher can correlate; real scenes occlude instead.)
pub fn matching_panel_scenario(opts: &ScenarioOptions) -> Scenario {
    let full = corridor_scenario(opts);
    let rig = full.rig;
    let (hw, hh) = (1.5, 1.5);
    let z = 2.4;
    let corner = |sx: f64, sy: f64| Vector3::new(sx * hw, sy * hh, z);
    let mut scene = Vec::new();
    let mut junctions = Vec::new();
    // Panel frame.
    scene.push(Segment { a: corner(-1.0, -1.0), b: corner(1.0, -1.0) });
    scene.push(Segment { a: corner(1.0, -1.0), b: corner(1.0, 1.0) });
    scene.push(Segment { a: corner(1.0, 1.0), b: corner(-1.0, 1.0) });
    scene.push(Segment { a: corner(-1.0, 1.0), b: corner(-1.0, -1.0) });
    // Interior lattice at half-meter pitch; crossings and edge tees are the
    // labeled junctions.
    let marks = [-0.666, -0.333, 0.0, 0.333, 0.666];
    for &sx in &marks {
        scene.push(Segment { a: corner(sx, -1.0), b: corner(sx, 1.0) });
    }
    for &sy in &marks {
        scene.push(Segment { a: corner(-1.0, sy), b: corner(1.0, sy) });
    }
    for &sx in &marks {
        for &sy in &marks {
            junctions.push(corner(sx, sy));
        }
        junctions.push(corner(sx, -1.0));
        junctions.push(corner(sx, 1.0));
    }
    for &sy in &marks {
        junctions.push(corner(-1.0, sy));
        junctions.push(corner(1.0, sy));
    }

    let duration_us = (opts.distance_m / opts.speed_mps * 1e6).round() as u64;
    let start = Vector3::new(-0.5, -0.1, 0.0);
    let direction = Vector3::new(1.0, 0.15, 0.05).normalize();
    Scenario {
        scene,
        junctions,
        knots: vec![
            PoseKnot { t_us: 0, pose: Pose::from_translation(start) },
            PoseKnot {
                t_us: duration_us,
                pose: Pose::from_translation(start + direction * opts.distance_m),
            },
        ],
        rig,
        events_per_edge_crossing: opts.events_per_edge_crossing,
        jitter_us: opts.jitter_us,
        spurious_rate: opts.spurious_rate,
        step_us: 200,
        track_sample_us: 1_000,
    }
}

/// Same geometry as `corridor_scenario` with a stationary camera.
pub fn static_scenario(duration_s: f64, jitter_us: u64, spurious_rate: f64) -> Scenario {
    let mut sc = corridor_scenario(&ScenarioOptions {
        jitter_us,
        spurious_rate,
        ..ScenarioOptions::default()
    });
    let duration_us = (duration_s * 1e6) as u64;
    sc.knots = vec![
        PoseKnot { t_us: 0, pose: Pose::identity() },
        PoseKnot { t_us: duration_us, pose: Pose::identity() },
    ];
    sc
}

fn wireframe_tunnel(
    rig: StereoRig,
    half_width: f64,
    half_height: f64,
    brace_spacing: f64,
    opts: &ScenarioOptions,
) -> Scenario {
    let length = opts.distance_m + 15.0;
    let (hw, hh) = (half_width, half_height);
    let mut scene = Vec::new();
    let mut junctions = Vec::new();

    let corner = |sx: f64, sy: f64, z: f64| Vector3::new(sx * hw, sy * hh, z);
    // Four rails along the tunnel. Under forward motion their image lines
    // pass through the focus of expansion and slide along themselves, so
    // they generate almost no events; junctions touching them are not
    // labeled for the correspondence oracle.
    for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
        scene.push(Segment { a: corner(sx, sy, 0.0), b: corner(sx, sy, length) });
    }
    // Braced rings at irregular spacings (a repeating pattern would make
    // consecutive rings alias onto each other under forward motion). Each
    // ring carries two vertical posts and a horizontal crossbar whose
    // crossings give corner junctions with transversal image motion.
    let mut ring_zs = Vec::new();
    let mut z = 0.0;
    let mut i = 0usize;
    loop {
        // Deterministic irregularity in [0.55, 1.15] of the base spacing.
        let wobble = 0.55 + 0.6 * (((i * 2_654_435_761) % 1_000) as f64 / 1_000.0);
        z += brace_spacing * wobble;
        if z >= length {
            break;
        }
        ring_zs.push(z);
        i += 1;
    }
    for (i, &z) in ring_zs.iter().enumerate() {
        let ring = [
            (corner(-1.0, -1.0, z), corner(1.0, -1.0, z)),
            (corner(1.0, -1.0, z), corner(1.0, 1.0, z)),
            (corner(1.0, 1.0, z), corner(-1.0, 1.0, z)),
            (corner(-1.0, 1.0, z), corner(-1.0, -1.0, z)),
        ];
        for (a, b) in ring {
            scene.push(Segment { a, b });
        }
        // An interior grid in the ring plane: two posts and two crossbars.
        // Their crossings are the labeled corner junctions. Ring planes are
        // fronto-parallel (constant depth), so the left and right cameras
        // see identical local surface patterns there; junctions on the
        // receding walls warp between the views and cannot be matched by
        // translation-only descriptor correlation.
        for sx in [-0.5, 0.5] {
            scene.push(Segment { a: corner(sx, -1.0, z), b: corner(sx, 1.0, z) });
        }
        for sy in [-0.5, 0.5] {
            scene.push(Segment { a: corner(-1.0, sy, z), b: corner(1.0, sy, z) });
        }
        for sx in [-0.5, 0.5] {
            for sy in [-0.5, 0.5] {
                junctions.push(corner(sx, sy, z));
            }
            junctions.push(corner(sx, -1.0, z));
            junctions.push(corner(sx, 1.0, z));
        }
        for sy in [-0.5, 0.5] {
            junctions.push(corner(-1.0, sy, z));
            junctions.push(corner(1.0, sy, z));
        }

        // The space between rings stays empty: in a wireframe world nothing
        // occludes, so any between-ring texture would show through junction
        // neighborhoods at a different disparity and decorrelate the stereo
        // descriptors, the transparent-scene failure real surfaces do not
        // have. Depth structure for the pose comes from the ring planes
        // stacked along the corridor.
    }

    let duration_us = (opts.distance_m / opts.speed_mps * 1e6).round() as u64;
    // Slight diagonal drift keeps image motion nonzero across the frame.
    let direction = Vector3::new(0.03, 0.015, 1.0).normalize();
    let end = direction * opts.distance_m;
    let attitude = so3_exp(&Vector3::new(0.0, opts.yaw_rad, 0.0));
    let knots = vec![
        PoseKnot {
            t_us: 0,
            pose: Pose::new(attitude, Vector3::zeros()).expect("yaw rotation"),
        },
        PoseKnot {
            t_us: duration_us,
            pose: Pose::new(attitude, end).expect("yaw rotation"),
        },
    ];

    Scenario {
        scene,
        junctions,
        knots,
        rig,
        events_per_edge_crossing: opts.events_per_edge_crossing,
        jitter_us: opts.jitter_us,
        spurious_rate: opts.spurious_rate,
        step_us: 200,
        track_sample_us: 1_000,
    }
}
