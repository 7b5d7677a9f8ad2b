//! File formats: event streams (binary and CSV), calibration, trajectories,
//! junction-track sidecars, and PGM surface dumps.
//!
//! Binary event files: 16-byte header (magic "EVT1", width u16 LE, height
//! u16 LE, 8 reserved zero bytes), then 13-byte little-endian records
//! (t_us u64, x u16, y u16, polarity u8 with 1 = positive, 0 = negative).
//! CSV event files: one `t_us,x,y,p` line per event, `p` in {0, 1}.
//! Trajectories: `stamp_sec tx ty tz qx qy qz qw` per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::calib::{CalibError, CameraIntrinsics, StereoRig};
use crate::event::{CameraSide, Event, Polarity};
use crate::se3::{EstimateQuality, Pose, TimedPose};
use crate::surface::TimeSurface;
use crate::synth::JunctionSample;

pub const EVENT_MAGIC: &[u8; 4] = b"EVT1";
const EVENT_HEADER_LEN: usize = 16;
const EVENT_RECORD_LEN: usize = 13;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic at byte 0 (expected \"EVT1\")")]
    BadMagic { path: String },
    #[error("{path}: truncated record at byte {offset}")]
    Truncated { path: String, offset: u64 },
    #[error("{path}: malformed line {line}: {what}")]
    MalformedLine { path: String, line: u64, what: String },
    #[error("{path}: timestamp regression at record {record}: {got} after {prev}")]
    TimestampRegression { path: String, record: u64, prev: u64, got: u64 },
    #[error("{path}: missing key {key}")]
    MissingKey { path: String, key: String },
    #[error("{path}: duplicate key {key} on line {line}")]
    DuplicateKey { path: String, key: String, line: u64 },
    #[error("{path}: key {key}: {what}")]
    BadValue { path: String, key: String, what: String },
    #[error("{path}: {source}")]
    Calib {
        path: String,
        #[source]
        source: CalibError,
    },
    #[error("{path}: line {line}: quaternion norm deviates from 1 by more than 1e-6")]
    BadQuaternion { path: String, line: u64 },
}

fn io_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::Io { path: path.display().to_string(), source }
}

/// Detected on-disk representation of an event stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventFormat {
    Binary,
    Csv,
}

/// Lazily yields events from a file in order, enforcing non-decreasing
/// timestamps. Out-of-bounds records (binary format only, which knows the
/// sensor size) are dropped and counted, mirroring the ingest policy.
pub struct EventReader {
    path: String,
    format: EventFormat,
    reader: BufReader<File>,
    /// Sensor size from the binary header, if any.
    pub dims: Option<(u16, u16)>,
    pub dropped_out_of_bounds: u64,
    records: u64,
    lines: u64,
    offset: u64,
    last_t: Option<u64>,
    done: bool,
}

impl EventReader {
    pub fn open(path: &Path) -> Result<EventReader, IoError> {
        let mut file = File::open(path).map_err(|e| io_err(path, e))?;
        let mut magic = [0u8; 4];
        let n = file.read(&mut magic).map_err(|e| io_err(path, e))?;
        let format = if n == 4 && &magic == EVENT_MAGIC {
            EventFormat::Binary
        } else {
            EventFormat::Csv
        };
        let mut file = File::open(path).map_err(|e| io_err(path, e))?;
        let mut dims = None;
        let mut offset = 0u64;
        if format == EventFormat::Binary {
            let mut header = [0u8; EVENT_HEADER_LEN];
            file.read_exact(&mut header).map_err(|e| io_err(path, e))?;
            let width = u16::from_le_bytes([header[4], header[5]]);
            let height = u16::from_le_bytes([header[6], header[7]]);
            if width as u32 * height as u32 == 0 {
                return Err(IoError::BadValue {
                    path: path.display().to_string(),
                    key: "header".into(),
                    what: "width * height must be nonzero".into(),
                });
            }
            dims = Some((width, height));
            offset = EVENT_HEADER_LEN as u64;
        }
        Ok(EventReader {
            path: path.display().to_string(),
            format,
            reader: BufReader::new(file),
            dims,
            dropped_out_of_bounds: 0,
            records: 0,
            lines: 0,
            offset,
            last_t: None,
            done: false,
        })
    }

    pub fn format(&self) -> EventFormat {
        self.format
    }

    fn check_order(&mut self, e: &Event) -> Result<(), IoError> {
        if let Some(prev) = self.last_t {
            if e.t_us < prev {
                return Err(IoError::TimestampRegression {
                    path: self.path.clone(),
                    record: self.records,
                    prev,
                    got: e.t_us,
                });
            }
        }
        self.last_t = Some(e.t_us);
        Ok(())
    }

    fn next_binary(&mut self) -> Option<Result<Event, IoError>> {
        loop {
            let mut buf = [0u8; EVENT_RECORD_LEN];
            let mut filled = 0usize;
            while filled < EVENT_RECORD_LEN {
                match self.reader.read(&mut buf[filled..]) {
                    Ok(0) if filled == 0 => return None,
                    Ok(0) => {
                        return Some(Err(IoError::Truncated {
                            path: self.path.clone(),
                            offset: self.offset,
                        }))
                    }
                    Ok(m) => filled += m,
                    Err(e) => return Some(Err(io_err(Path::new(&self.path), e))),
                }
            }
            match self.decode_record(&buf) {
                Ok(e) => {
                    if let Some((w, h)) = self.dims {
                        if e.x >= w || e.y >= h {
                            self.dropped_out_of_bounds += 1;
                            continue;
                        }
                    }
                    return Some(Ok(e));
                }
                Err(err) => return Some(Err(err)),
            }
        }
    }

    fn decode_record(&mut self, buf: &[u8; EVENT_RECORD_LEN]) -> Result<Event, IoError> {
        let t_us = u64::from_le_bytes(buf[0..8].try_into().unwrap());
        let x = u16::from_le_bytes(buf[8..10].try_into().unwrap());
        let y = u16::from_le_bytes(buf[10..12].try_into().unwrap());
        let polarity = Polarity::from_bit(buf[12]).ok_or_else(|| IoError::BadValue {
            path: self.path.clone(),
            key: format!("record {} (byte {})", self.records, self.offset),
            what: format!("polarity byte must be 0 or 1, got {}", buf[12]),
        })?;
        self.offset += EVENT_RECORD_LEN as u64;
        self.records += 1;
        let e = Event::new(x, y, t_us, polarity);
        self.check_order(&e)?;
        Ok(e)
    }

    fn next_csv(&mut self) -> Option<Result<Event, IoError>> {
        loop {
            let mut line = String::new();
            match self.reader.read_line(&mut line) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(io_err(Path::new(&self.path), e))),
            }
            self.lines += 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let malformed = |what: &str| IoError::MalformedLine {
                path: self.path.clone(),
                line: self.lines,
                what: what.into(),
            };
            let mut parts = trimmed.split(',');
            let mut field = |name: &str| {
                parts
                    .next()
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| malformed(&format!("missing field {name}")))
            };
            let parsed: Result<Event, IoError> = (|| {
                let t_us: u64 = field("t_us")?
                    .parse()
                    .map_err(|_| malformed("t_us is not an unsigned integer"))?;
                let x: u16 = field("x")?.parse().map_err(|_| malformed("x is not a u16"))?;
                let y: u16 = field("y")?.parse().map_err(|_| malformed("y is not a u16"))?;
                let p: u8 = field("p")?.parse().map_err(|_| malformed("p is not 0 or 1"))?;
                let polarity =
                    Polarity::from_bit(p).ok_or_else(|| malformed("p must be 0 or 1"))?;
                Ok(Event::new(x, y, t_us, polarity))
            })();
            return Some(parsed.and_then(|e| {
                self.records += 1;
                self.check_order(&e)?;
                Ok(e)
            }));
        }
    }
}

impl Iterator for EventReader {
    type Item = Result<Event, IoError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = match self.format {
            EventFormat::Binary => self.next_binary(),
            EventFormat::Csv => self.next_csv(),
        };
        if matches!(item, Some(Err(_)) | None) {
            self.done = true;
        }
        item
    }
}

/// A fully loaded event file.
#[derive(Debug)]
pub struct EventFile {
    pub events: Vec<Event>,
    /// Sensor size from the binary header, if the file had one.
    pub dims: Option<(u16, u16)>,
    pub dropped_out_of_bounds: u64,
}

/// Reads a whole event file into memory, failing on the first bad record.
pub fn read_events(path: &Path) -> Result<EventFile, IoError> {
    let mut reader = EventReader::open(path)?;
    let mut events = Vec::new();
    for item in reader.by_ref() {
        events.push(item?);
    }
    Ok(EventFile {
        events,
        dims: reader.dims,
        dropped_out_of_bounds: reader.dropped_out_of_bounds,
    })
}

pub fn write_events_binary(
    path: &Path,
    dims: (u16, u16),
    events: &[Event],
) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = [0u8; EVENT_HEADER_LEN];
    header[0..4].copy_from_slice(EVENT_MAGIC);
    header[4..6].copy_from_slice(&dims.0.to_le_bytes());
    header[6..8].copy_from_slice(&dims.1.to_le_bytes());
    w.write_all(&header).map_err(|e| io_err(path, e))?;
    for e in events {
        let mut rec = [0u8; EVENT_RECORD_LEN];
        rec[0..8].copy_from_slice(&e.t_us.to_le_bytes());
        rec[8..10].copy_from_slice(&e.x.to_le_bytes());
        rec[10..12].copy_from_slice(&e.y.to_le_bytes());
        rec[12] = e.polarity.to_bit();
        w.write_all(&rec).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_events_csv(path: &Path, events: &[Event]) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for e in events {
        writeln!(w, "{},{},{},{}", e.t_us, e.x, e.y, e.polarity.to_bit())
            .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Calibration file: `key value...` lines, `#` comments. Required keys per
/// camera: fx fy cx cy width height; optional distortion (up to 5 values);
/// extrinsics as `extrinsic.rotation` (9 row-major values) and
/// `extrinsic.translation` (3 values).
pub fn read_calibration(path: &Path) -> Result<StereoRig, IoError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let path_s = path.display().to_string();

    let mut entries: std::collections::HashMap<String, Vec<f64>> =
        std::collections::HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let line_no = idx as u64 + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut parts = content.split_whitespace();
        let key = parts.next().unwrap().to_string();
        let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        let values = values.map_err(|_| IoError::BadValue {
            path: path_s.clone(),
            key: key.clone(),
            what: format!("non-numeric value on line {line_no}"),
        })?;
        if entries.insert(key.clone(), values).is_some() {
            return Err(IoError::DuplicateKey { path: path_s, key, line: line_no });
        }
    }

    let scalar = |entries: &std::collections::HashMap<String, Vec<f64>>,
                  key: &str|
     -> Result<f64, IoError> {
        let values = entries
            .get(key)
            .ok_or_else(|| IoError::MissingKey { path: path_s.clone(), key: key.into() })?;
        if values.len() != 1 {
            return Err(IoError::BadValue {
                path: path_s.clone(),
                key: key.into(),
                what: format!("expected 1 value, got {}", values.len()),
            });
        }
        Ok(values[0])
    };
    let list = |entries: &std::collections::HashMap<String, Vec<f64>>,
                key: &str,
                len: usize|
     -> Result<Vec<f64>, IoError> {
        let values = entries
            .get(key)
            .ok_or_else(|| IoError::MissingKey { path: path_s.clone(), key: key.into() })?;
        if values.len() != len {
            return Err(IoError::BadValue {
                path: path_s.clone(),
                key: key.into(),
                what: format!("expected {len} values, got {}", values.len()),
            });
        }
        Ok(values.clone())
    };

    let camera = |entries: &std::collections::HashMap<String, Vec<f64>>,
                  prefix: &str|
     -> Result<CameraIntrinsics, IoError> {
        let fx = scalar(entries, &format!("{prefix}.fx"))?;
        let fy = scalar(entries, &format!("{prefix}.fy"))?;
        let cx = scalar(entries, &format!("{prefix}.cx"))?;
        let cy = scalar(entries, &format!("{prefix}.cy"))?;
        let width = scalar(entries, &format!("{prefix}.width"))?;
        let height = scalar(entries, &format!("{prefix}.height"))?;
        let distortion = entries
            .get(&format!("{prefix}.distortion"))
            .cloned()
            .unwrap_or_default();
        if distortion.len() > 5 {
            return Err(IoError::BadValue {
                path: path_s.clone(),
                key: format!("{prefix}.distortion"),
                what: format!("at most 5 coefficients, got {}", distortion.len()),
            });
        }
        CameraIntrinsics::new(fx, fy, cx, cy, width as u16, height as u16, &distortion)
            .map_err(|e| IoError::Calib { path: path_s.clone(), source: e })
    };

    let left = camera(&entries, "left")?;
    let right = camera(&entries, "right")?;
    let r = list(&entries, "extrinsic.rotation", 9)?;
    let t = list(&entries, "extrinsic.translation", 3)?;
    let rotation = Matrix3::from_row_slice(&r);
    let translation = Vector3::new(t[0], t[1], t[2]);
    let orth = crate::se3::orthonormality_error(&rotation);
    if orth > 1e-6 {
        return Err(IoError::BadValue {
            path: path_s,
            key: "extrinsic.rotation".into(),
            what: format!("not orthonormal (error {orth:.3e})"),
        });
    }
    StereoRig::new(left, right, rotation, translation)
        .map_err(|e| IoError::Calib { path: path_s.clone(), source: e })
}

pub fn write_calibration(path: &Path, rig: &StereoRig) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut cam = |prefix: &str, c: &CameraIntrinsics| -> std::io::Result<()> {
        writeln!(w, "{prefix}.fx {}", fmt_sig(c.fx))?;
        writeln!(w, "{prefix}.fy {}", fmt_sig(c.fy))?;
        writeln!(w, "{prefix}.cx {}", fmt_sig(c.cx))?;
        writeln!(w, "{prefix}.cy {}", fmt_sig(c.cy))?;
        writeln!(w, "{prefix}.width {}", c.width)?;
        writeln!(w, "{prefix}.height {}", c.height)?;
        if c.has_distortion() {
            let coeffs: Vec<String> = c.distortion.iter().map(|&k| fmt_sig(k)).collect();
            writeln!(w, "{prefix}.distortion {}", coeffs.join(" "))?;
        }
        Ok(())
    };
    cam("left", &rig.left).map_err(|e| io_err(path, e))?;
    cam("right", &rig.right).map_err(|e| io_err(path, e))?;
    let r = rig.rotation;
    let rot: Vec<String> = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| fmt_sig(r[(i, j)]))
        .collect();
    (|| -> std::io::Result<()> {
        writeln!(w, "extrinsic.rotation {}", rot.join(" "))?;
        writeln!(
            w,
            "extrinsic.translation {} {} {}",
            fmt_sig(rig.translation.x),
            fmt_sig(rig.translation.y),
            fmt_sig(rig.translation.z)
        )?;
        w.flush()
    })()
    .map_err(|e| io_err(path, e))
}

/// Number formatted to 9 significant digits with trailing zeros trimmed.
fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// One `stamp tx ty tz qx qy qz qw` line per pose: the stamp with fixed 9
/// decimals, the rest to 9 significant digits.
pub fn write_trajectory(path: &Path, trajectory: &[TimedPose]) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for entry in trajectory {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
            *entry.pose.rotation(),
        ));
        let q = if q.w < 0.0 {
            UnitQuaternion::new_unchecked(Quaternion::new(-q.w, -q.i, -q.j, -q.k))
        } else {
            q
        };
        let t = entry.pose.translation();
        writeln!(
            w,
            "{:.9} {} {} {} {} {} {} {}",
            entry.stamp_us as f64 / 1e6,
            fmt_sig(t.x),
            fmt_sig(t.y),
            fmt_sig(t.z),
            fmt_sig(q.i),
            fmt_sig(q.j),
            fmt_sig(q.k),
            fmt_sig(q.w),
        )
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TimedPose>, IoError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let path_s = path.display().to_string();
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let line_no = idx as u64 + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Result<Vec<f64>, _> =
            content.split_whitespace().map(str::parse::<f64>).collect();
        let fields = fields.map_err(|_| IoError::MalformedLine {
            path: path_s.clone(),
            line: line_no,
            what: "non-numeric field".into(),
        })?;
        if fields.len() != 8 {
            return Err(IoError::MalformedLine {
                path: path_s.clone(),
                line: line_no,
                what: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let [stamp, tx, ty, tz, qx, qy, qz, qw] = fields[..] else { unreachable!() };
        let norm = (qx * qx + qy * qy + qz * qz + qw * qw).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(IoError::BadQuaternion { path: path_s.clone(), line: line_no });
        }
        let q = UnitQuaternion::new_normalize(Quaternion::new(qw, qx, qy, qz));
        let pose = Pose::new(*q.to_rotation_matrix().matrix(), Vector3::new(tx, ty, tz))
            .expect("unit quaternion yields a rotation");
        out.push(TimedPose {
            stamp_us: (stamp * 1e6).round() as u64,
            pose,
            quality: EstimateQuality::Estimated,
        });
    }
    Ok(out)
}

/// Binary PGM (P5) with values `round(255 * tau)`.
pub fn write_pgm(path: &Path, surface: &TimeSurface) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    write!(w, "P5\n{} {}\n255\n", surface.width(), surface.height())
        .map_err(|e| io_err(path, e))?;
    let bytes: Vec<u8> = surface
        .values()
        .iter()
        .map(|&v| (255.0 * v).round().clamp(0.0, 255.0) as u8)
        .collect();
    w.write_all(&bytes).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

/// Junction-track sidecar: `junction_id,t_us,cam,x,y` lines.
pub fn write_tracks(path: &Path, tracks: &[JunctionSample]) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for s in tracks {
        writeln!(
            w,
            "{},{},{},{},{}",
            s.junction,
            s.t_us,
            s.cam.label(),
            fmt_sig(s.x),
            fmt_sig(s.y)
        )
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_tracks(path: &Path) -> Result<Vec<JunctionSample>, IoError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let path_s = path.display().to_string();
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let line_no = idx as u64 + 1;
        let content = line.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let malformed = |what: &str| IoError::MalformedLine {
            path: path_s.clone(),
            line: line_no,
            what: what.into(),
        };
        let parts: Vec<&str> = content.split(',').map(str::trim).collect();
        if parts.len() != 5 {
            return Err(malformed("expected 5 fields"));
        }
        let cam = match parts[2] {
            "left" => CameraSide::Left,
            "right" => CameraSide::Right,
            other => return Err(malformed(&format!("unknown camera {other}"))),
        };
        out.push(JunctionSample {
            junction: parts[0].parse().map_err(|_| malformed("bad junction id"))?,
            t_us: parts[1].parse().map_err(|_| malformed("bad timestamp"))?,
            cam,
            x: parts[3].parse().map_err(|_| malformed("bad x"))?,
            y: parts[4].parse().map_err(|_| malformed("bad y"))?,
        });
    }
    Ok(out)
}
