//! KITTI raw-data ingestion: OXTS GPS/IMU records, timestamps and the
//! IMU-to-camera calibration chain.
//!
//! Ego-motion is taken from the vehicle-frame velocities and angular rates
//! integrated over the frame interval (small-angle, error `O(|w|^2)`) and
//! rotated into the rectified camera frame. All axis conventions come from
//! the calibration files.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use nalgebra::{Matrix3, Vector3};

use crate::error::{format, param, Error, Location, Result};
use crate::geometry::{CameraIntrinsics, EgoMotion};

/// Number of whitespace-separated values in one OXTS record.
pub const OXTS_FIELDS: usize = 30;

/// Frame interval assumed when timestamps are unavailable (10 Hz capture).
pub const DEFAULT_FRAME_INTERVAL: f64 = 0.1;

/// Orthonormality tolerance of a [`RigidTransform`].
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Orthonormality tolerance accepted from calibration text, whose values
/// carry about seven significant digits. Accepted matrices are projected
/// onto the nearest rotation.
pub const CALIB_ROTATION_TOLERANCE: f64 = 1e-4;

/// Zero-based positions in an OXTS line (devkit field order).
pub mod field {
    pub const LAT: usize = 0;
    pub const LON: usize = 1;
    pub const ALT: usize = 2;
    pub const ROLL: usize = 3;
    pub const PITCH: usize = 4;
    pub const YAW: usize = 5;
    pub const VN: usize = 6;
    pub const VE: usize = 7;
    pub const VF: usize = 8;
    pub const VL: usize = 9;
    pub const VU: usize = 10;
    pub const WX: usize = 17;
    pub const WY: usize = 18;
    pub const WZ: usize = 19;
}

/// One OXTS sample. Velocities are forward/left/up in m/s and angular rates
/// are about the IMU x (forward), y (left), z (up) axes in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct OxtsRecord {
    values: [f64; OXTS_FIELDS],
    timestamp: Option<f64>,
}

impl OxtsRecord {
    pub fn from_values(values: [f64; OXTS_FIELDS]) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse { location: Location::Field(i), message: "value is not finite".into() });
        }
        let yaw = values[field::YAW];
        if !(-std::f64::consts::PI..=std::f64::consts::PI).contains(&yaw) {
            return Err(Error::Parse {
                location: Location::Field(field::YAW),
                message: format!("yaw {yaw} outside [-pi, pi]"),
            });
        }
        Ok(Self { values, timestamp: None })
    }

    /// A record carrying only motion: vehicle-frame velocity `[forward, left,
    /// up]` and angular rate `[wx, wy, wz]`.
    pub fn from_motion(velocity: [f64; 3], angular_rate: [f64; 3]) -> Result<Self> {
        let mut values = [0.0; OXTS_FIELDS];
        values[field::VF] = velocity[0];
        values[field::VL] = velocity[1];
        values[field::VU] = velocity[2];
        values[field::WX] = angular_rate[0];
        values[field::WY] = angular_rate[1];
        values[field::WZ] = angular_rate[2];
        Self::from_values(values)
    }

    pub fn with_timestamp(mut self, seconds: f64) -> Self {
        self.timestamp = Some(seconds);
        self
    }

    pub fn values(&self) -> &[f64; OXTS_FIELDS] {
        &self.values
    }

    pub fn roll(&self) -> f64 {
        self.values[field::ROLL]
    }

    pub fn pitch(&self) -> f64 {
        self.values[field::PITCH]
    }

    pub fn yaw(&self) -> f64 {
        self.values[field::YAW]
    }

    /// `[forward, left, up]` velocity in m/s.
    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::new(self.values[field::VF], self.values[field::VL], self.values[field::VU])
    }

    /// Angular rate about the IMU axes in rad/s.
    pub fn angular_rate(&self) -> Vector3<f64> {
        Vector3::new(self.values[field::WX], self.values[field::WY], self.values[field::WZ])
    }

    pub fn timestamp(&self) -> Option<f64> {
        self.timestamp
    }

    /// Formats the record as one OXTS line. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_line(&self) -> String {
        self.values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
    }
}

/// Parses one OXTS line. Tokens past the thirtieth are ignored.
pub fn parse_oxts_line(text: &str) -> Result<OxtsRecord> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() < OXTS_FIELDS {
        return Err(Error::Parse {
            location: Location::Field(tokens.len()),
            message: format!("expected {OXTS_FIELDS} fields, found {}", tokens.len()),
        });
    }
    let mut values = [0.0; OXTS_FIELDS];
    for (i, token) in tokens.iter().take(OXTS_FIELDS).enumerate() {
        values[i] = token.parse().map_err(|_| Error::Parse {
            location: Location::Field(i),
            message: format!("not a number: {token:?}"),
        })?;
    }
    OxtsRecord::from_values(values)
}

/// Parses a timestamps file, one entry per line, into seconds relative to
/// the first entry. Accepts KITTI's `YYYY-MM-DD HH:MM:SS.fffffffff` form or
/// plain seconds.
pub fn parse_timestamps(text: &str) -> Result<Vec<f64>> {
    enum Stamp {
        Date(NaiveDateTime),
        Seconds(f64),
    }
    let mut stamps = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let stamp = if let Ok(dt) = NaiveDateTime::parse_from_str(line, "%Y-%m-%d %H:%M:%S%.f") {
            Stamp::Date(dt)
        } else if let Ok(s) = line.parse::<f64>() {
            Stamp::Seconds(s)
        } else {
            return Err(Error::Parse { location: Location::Line(i + 1), message: format!("bad timestamp {line:?}") });
        };
        stamps.push(stamp);
    }
    let Some(first) = stamps.first() else { return Ok(Vec::new()) };
    let relative = |s: &Stamp| -> Result<f64> {
        match (first, s) {
            (Stamp::Date(a), Stamp::Date(b)) => {
                let ns = (*b - *a)
                    .num_nanoseconds()
                    .ok_or_else(|| format("timestamp span overflows"))?;
                Ok(ns as f64 * 1e-9)
            }
            (Stamp::Seconds(a), Stamp::Seconds(b)) => Ok(b - a),
            _ => Err(format("timestamps mix date and numeric forms")),
        }
    };
    stamps.iter().map(relative).collect()
}

/// Formats seconds-from-start as KITTI timestamp lines anchored at a fixed
/// date.
pub fn format_timestamp(seconds: f64) -> String {
    let base = NaiveDateTime::parse_from_str("2011-09-26 00:00:00.0", "%Y-%m-%d %H:%M:%S%.f")
        .expect("valid base date");
    let ns = (seconds * 1e9).round() as i64;
    let t = base + chrono::Duration::nanoseconds(ns);
    t.format("%Y-%m-%d %H:%M:%S%.9f").to_string()
}

/// A proper rigid transform `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    let e = (r * r.transpose() - Matrix3::identity()).abs().max();
    e.max((r.determinant() - 1.0).abs())
}

/// Closest rotation in the Frobenius sense.
fn nearest_rotation(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut fix = Matrix3::identity();
    fix[(2, 2)] = (u * v_t).determinant().signum();
    u * fix * v_t
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|c| !c.is_finite()) {
            return Err(param("rigid transform must be finite"));
        }
        let err = orthonormality_error(&rotation);
        if err > ROTATION_TOLERANCE {
            return Err(param(format!("rotation is not orthonormal (error {err:.3e})")));
        }
        Ok(Self { rotation, translation })
    }

    /// Accepts a rotation within `tolerance` of SO(3) and projects it onto
    /// the nearest rotation.
    pub fn from_approximate(rotation: Matrix3<f64>, translation: Vector3<f64>, tolerance: f64) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|c| !c.is_finite()) {
            return Err(format("rigid transform must be finite"));
        }
        let err = orthonormality_error(&rotation);
        if err > tolerance {
            return Err(format(format!("rotation is not orthonormal (error {err:.3e})")));
        }
        Ok(Self { rotation: nearest_rotation(&rotation), translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.rotation)
    }
}

/// IMU-to-camera extrinsics and rectified intrinsics of one camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub imu_to_cam: RigidTransform,
    pub intrinsics: CameraIntrinsics,
}

pub const IMU_TO_VELO_FILE: &str = "calib_imu_to_velo.txt";
pub const VELO_TO_CAM_FILE: &str = "calib_velo_to_cam.txt";
pub const CAM_TO_CAM_FILE: &str = "calib_cam_to_cam.txt";

fn labelled_values(text: &str, label: &str, count: usize) -> Result<Option<Vec<f64>>> {
    for (i, line) in text.lines().enumerate() {
        let Some((key, rest)) = line.split_once(':') else { continue };
        if key.trim() != label {
            continue;
        }
        let values: Vec<f64> = rest
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                location: Location::Line(i + 1),
                message: format!("non-numeric value in {label}"),
            })?;
        if values.len() != count {
            return Err(Error::Parse {
                location: Location::Line(i + 1),
                message: format!("{label} needs {count} values, found {}", values.len()),
            });
        }
        return Ok(Some(values));
    }
    Ok(None)
}

fn required(text: &str, label: &str, count: usize, file: &str) -> Result<Vec<f64>> {
    labelled_values(text, label, count)?.ok_or_else(|| format(format!("{file}: missing {label}")))
}

/// Parses a KITTI `R:`/`T:` extrinsics file.
pub fn parse_rigid_transform(text: &str) -> Result<RigidTransform> {
    let r = required(text, "R", 9, "extrinsics")?;
    let t = required(text, "T", 3, "extrinsics")?;
    RigidTransform::from_approximate(
        Matrix3::from_row_slice(&r),
        Vector3::from_row_slice(&t),
        CALIB_ROTATION_TOLERANCE,
    )
}

/// Parses the rectified intrinsics of `camera` (`P_rect_0N`, `S_rect_0N`)
/// and the rectifying rotation `R_rect_00` (identity when absent).
pub fn parse_cam_to_cam(text: &str, camera: u8) -> Result<(CameraIntrinsics, Matrix3<f64>)> {
    let p = required(text, &format!("P_rect_{camera:02}"), 12, CAM_TO_CAM_FILE)?;
    let s = required(text, &format!("S_rect_{camera:02}"), 2, CAM_TO_CAM_FILE)?;
    let rect = match labelled_values(text, "R_rect_00", 9)? {
        Some(r) => {
            let t = RigidTransform::from_approximate(Matrix3::from_row_slice(&r), Vector3::zeros(), CALIB_ROTATION_TOLERANCE)?;
            t.rotation
        }
        None => Matrix3::identity(),
    };
    if s.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
        return Err(format(format!("S_rect_{camera:02} must hold positive integer sizes")));
    }
    let intr = CameraIntrinsics::new(p[0], p[5], p[2], p[6], s[0] as usize, s[1] as usize)
        .map_err(|e| format(format!("P_rect_{camera:02}: {e}")))?;
    Ok((intr, rect))
}

/// Composes the calibration chain IMU -> Velodyne -> camera 0 -> rectified.
pub fn parse_calib(imu_to_velo: &str, velo_to_cam: &str, cam_to_cam: &str, camera: u8) -> Result<Calibration> {
    let imu_to_velo = parse_rigid_transform(imu_to_velo)?;
    let velo_to_cam = parse_rigid_transform(velo_to_cam)?;
    let (intrinsics, rect) = parse_cam_to_cam(cam_to_cam, camera)?;
    let rect = RigidTransform::new(rect, Vector3::zeros())?;
    let imu_to_cam = rect.compose(&velo_to_cam.compose(&imu_to_velo));
    Ok(Calibration { imu_to_cam, intrinsics })
}

/// Reads the three standard calibration files from `dir`.
pub fn load_calib_dir(dir: &Path, camera: u8) -> Result<Calibration> {
    let read = |name: &str| -> Result<String> {
        let path = dir.join(name);
        fs::read_to_string(&path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
    };
    parse_calib(&read(IMU_TO_VELO_FILE)?, &read(VELO_TO_CAM_FILE)?, &read(CAM_TO_CAM_FILE)?, camera)
}

/// Writes the three calibration files for an IMU-to-camera transform, with
/// the Velodyne frame equal to the IMU frame and no rectifying rotation.
pub fn write_calib_dir(dir: &Path, imu_to_cam: &RigidTransform, intr: &CameraIntrinsics, camera: u8) -> Result<()> {
    let mat = |m: &Matrix3<f64>| {
        (0..3)
            .flat_map(|r| (0..3).map(move |c| (r, c)))
            .map(|(r, c)| format!("{:?}", m[(r, c)]))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let vec = |v: &Vector3<f64>| format!("{:?} {:?} {:?}", v.x, v.y, v.z);
    fs::create_dir_all(dir)?;
    fs::write(dir.join(IMU_TO_VELO_FILE), format!("R: {}\nT: 0.0 0.0 0.0\n", mat(&Matrix3::identity())))?;
    fs::write(
        dir.join(VELO_TO_CAM_FILE),
        format!("R: {}\nT: {}\n", mat(imu_to_cam.rotation()), vec(imu_to_cam.translation())),
    )?;
    let p = [
        intr.fx(), 0.0, intr.cx(), 0.0,
        0.0, intr.fy(), intr.cy(), 0.0,
        0.0, 0.0, 1.0, 0.0,
    ];
    let p = p.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ");
    fs::write(
        dir.join(CAM_TO_CAM_FILE),
        format!(
            "R_rect_00: {}\nS_rect_{camera:02}: {}.0 {}.0\nP_rect_{camera:02}: {p}\n",
            mat(&Matrix3::identity()),
            intr.width(),
            intr.height()
        ),
    )?;
    Ok(())
}

/// Camera-frame ego-motion between two OXTS samples.
///
/// Uses the mean of the two samples' rates over `dt` and rotates the result
/// into the camera frame. Without timestamps `dt` falls back to
/// [`DEFAULT_FRAME_INTERVAL`].
pub fn differential_egomotion(prev: &OxtsRecord, curr: &OxtsRecord, imu_to_cam: &RigidTransform) -> Result<EgoMotion> {
    let dt = match (prev.timestamp, curr.timestamp) {
        (Some(a), Some(b)) => {
            let dt = b - a;
            if !(dt.is_finite() && dt > 0.0) {
                return Err(param(format!("frame interval must be positive, got {dt}")));
            }
            dt
        }
        _ => {
            log::warn!("missing OXTS timestamps, assuming {DEFAULT_FRAME_INTERVAL} s frame interval");
            DEFAULT_FRAME_INTERVAL
        }
    };
    let rate = (prev.angular_rate() + curr.angular_rate()) * 0.5;
    let velocity = (prev.velocity() + curr.velocity()) * 0.5;
    let omega = imu_to_cam.rotate(&(rate * dt));
    let translation = imu_to_cam.rotate(&(velocity * dt));
    EgoMotion::from_vectors(omega, translation)?.with_frame_interval(dt)
}

/// Keeps only the rotation about the camera y axis (steering yaw) and the
/// translation.
pub fn yaw_only(ego: &EgoMotion) -> EgoMotion {
    let [_, wy, _, tx, ty, tz] = ego.parameters();
    ego.with_parameters([0.0, wy, 0.0, tx, ty, tz])
}

/// A sequence of OXTS records with optional timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OxtsSequence {
    pub records: Vec<OxtsRecord>,
}

impl OxtsSequence {
    /// Loads either a KITTI `oxts/` directory (`data/*.txt` plus
    /// `timestamps.txt`) or a single file with one record per line.
    pub fn load(path: &Path) -> Result<Self> {
        let (mut records, stamp_path) = if path.is_dir() {
            let data = path.join("data");
            let dir = if data.is_dir() { data } else { path.to_path_buf() };
            let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "txt") && p.file_name() != Some("timestamps.txt".as_ref()))
                .collect();
            files.sort();
            let records = files
                .iter()
                .map(|f| {
                    let text = fs::read_to_string(f)?;
                    let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
                    parse_oxts_line(line).map_err(|e| format(format!("{}: {e}", f.display())))
                })
                .collect::<Result<Vec<_>>>()?;
            (records, path.join("timestamps.txt"))
        } else {
            let text = fs::read_to_string(path)?;
            let records = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| parse_oxts_line(l).map_err(|e| format(format!("{} line {}: {e}", path.display(), i + 1))))
                .collect::<Result<Vec<_>>>()?;
            (records, path.with_file_name("timestamps.txt"))
        };
        if stamp_path.is_file() {
            let stamps = parse_timestamps(&fs::read_to_string(&stamp_path)?)?;
            if stamps.len() != records.len() {
                return Err(format(format!(
                    "{} has {} entries for {} OXTS records",
                    stamp_path.display(),
                    stamps.len(),
                    records.len()
                )));
            }
            for (r, t) in records.iter_mut().zip(stamps) {
                r.timestamp = Some(t);
            }
        } else {
            log::warn!("no timestamps next to {}, frame interval defaults to {DEFAULT_FRAME_INTERVAL} s", path.display());
        }
        Ok(Self { records })
    }

    /// Writes a KITTI-style `oxts/` directory. Records without timestamps
    /// are spaced at the default interval.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let data = dir.join("data");
        fs::create_dir_all(&data)?;
        let mut stamps = String::new();
        for (i, r) in self.records.iter().enumerate() {
            fs::write(data.join(format!("{i:010}.txt")), format!("{}\n", r.to_line()))?;
            let t = r.timestamp.unwrap_or(i as f64 * DEFAULT_FRAME_INTERVAL);
            stamps.push_str(&format_timestamp(t));
            stamps.push('\n');
        }
        fs::write(dir.join("timestamps.txt"), stamps)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Ego-motion for frame `t` from records `t - 1` and `t`; `t` must be at
    /// least 1.
    pub fn egomotion(&self, t: usize, imu_to_cam: &RigidTransform) -> Result<EgoMotion> {
        if t == 0 || t >= self.records.len() {
            return Err(param(format!("frame {t} has no predecessor in a sequence of {}", self.records.len())));
        }
        differential_egomotion(&self.records[t - 1], &self.records[t], imu_to_cam)
    }
}
