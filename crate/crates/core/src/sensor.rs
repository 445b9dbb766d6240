//! Head orientation: rotation-matrix decomposition, projection of the
//! viewing direction onto reference imagery, and the sensor/vision blend.
//!
//! Euler convention is intrinsic Z-Y-X: `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
//! Positive pitch looks up.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Point2;

const ORTHO_TOL: f64 = 1e-6;
const GIMBAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadPose {
    pub timestamp_ms: i64,
    /// Device-to-world rotation.
    pub rotation: Matrix3<f64>,
    /// Normalized sensor reliability in `[0, 1]`.
    pub reliability: f64,
}

impl HeadPose {
    pub fn new(timestamp_ms: i64, rotation: Matrix3<f64>, reliability: f64) -> Result<Self> {
        check_rotation(&rotation)?;
        if !(0.0..=1.0).contains(&reliability) {
            return Err(Error::Parameter(format!(
                "reliability must be in [0, 1], got {reliability}"
            )));
        }
        Ok(Self {
            timestamp_ms,
            rotation,
            reliability,
        })
    }

    pub fn from_euler(timestamp_ms: i64, angles: EulerAngles, reliability: f64) -> Result<Self> {
        Self::new(timestamp_ms, rotation_from_euler(&angles), reliability)
    }

    pub fn euler(&self) -> EulerAngles {
        euler_from_rotation(&self.rotation).expect("pose rotation validated at construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    /// Heading in `(-pi, pi]`.
    pub yaw: f64,
    /// Elevation in `[-pi/2, pi/2]`.
    pub pitch: f64,
    /// Roll in `(-pi, pi]`.
    pub roll: f64,
}

impl EulerAngles {
    pub const fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { yaw, pitch, roll }
    }
}

fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidRotation("non-finite entry".into()));
    }
    let gram = r.transpose() * r;
    let off = (gram - Matrix3::identity()).abs().max();
    if off > ORTHO_TOL {
        return Err(Error::InvalidRotation(format!(
            "R^T R deviates from identity by {off:.3e}"
        )));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > ORTHO_TOL {
        return Err(Error::InvalidRotation(format!("determinant {det}")));
    }
    Ok(())
}

/// Maps an angle into `(-pi, pi]`.
pub fn wrap_pi(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

pub fn rotation_from_euler(e: &EulerAngles) -> Matrix3<f64> {
    let (sy, cy) = e.yaw.sin_cos();
    let (sp, cp) = e.pitch.sin_cos();
    let (sr, cr) = e.roll.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// Z-Y-X decomposition. At gimbal lock roll is set to 0 and yaw takes the
/// remaining free angle.
pub fn euler_from_rotation(r: &Matrix3<f64>) -> Result<EulerAngles> {
    check_rotation(r)?;
    let cos_pitch = r[(0, 0)].hypot(r[(1, 0)]);
    let pitch = (-r[(2, 0)]).atan2(cos_pitch);
    if (pitch.abs() - FRAC_PI_2).abs() <= GIMBAL_TOL {
        let yaw = wrap_pi((-r[(0, 1)]).atan2(r[(1, 1)]));
        return Ok(EulerAngles {
            yaw,
            pitch: FRAC_PI_2.copysign(pitch),
            roll: 0.0,
        });
    }
    Ok(EulerAngles {
        yaw: wrap_pi(r[(1, 0)].atan2(r[(0, 0)])),
        pitch,
        roll: wrap_pi(r[(2, 1)].atan2(r[(2, 2)])),
    })
}

/// Equirectangular panorama spanning 2π horizontally and π vertically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanoramaGeometry {
    pub width: usize,
    pub height: usize,
    /// World heading of column 0, radians.
    pub yaw_at_left_edge: f64,
}

/// Pinhole reference camera looking along `heading`/`pitch`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatGeometry {
    pub width: usize,
    pub height: usize,
    pub heading: f64,
    pub pitch: f64,
    /// Horizontal field of view, radians.
    pub hfov: f64,
}

impl FlatGeometry {
    fn focal(&self) -> f64 {
        (self.width as f64 / 2.0) / (self.hfov / 2.0).tan()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceGeometry {
    Panorama(PanoramaGeometry),
    Flat(FlatGeometry),
}

impl ReferenceGeometry {
    pub fn width(&self) -> usize {
        match self {
            ReferenceGeometry::Panorama(g) => g.width,
            ReferenceGeometry::Flat(g) => g.width,
        }
    }

    pub fn height(&self) -> usize {
        match self {
            ReferenceGeometry::Panorama(g) => g.height,
            ReferenceGeometry::Flat(g) => g.height,
        }
    }

    pub fn is_panorama(&self) -> bool {
        matches!(self, ReferenceGeometry::Panorama(_))
    }

    /// Heading at the image center.
    pub fn heading(&self) -> f64 {
        match self {
            ReferenceGeometry::Panorama(g) => wrap_pi(g.yaw_at_left_edge + PI),
            ReferenceGeometry::Flat(g) => g.heading,
        }
    }

    /// Predicted focus for a viewing direction.
    pub fn project(&self, yaw: f64, pitch: f64) -> Point2 {
        match self {
            ReferenceGeometry::Panorama(g) => project_panorama(yaw, pitch, g),
            ReferenceGeometry::Flat(g) => {
                let f = g.focal();
                let (w, h) = (g.width as f64, g.height as f64);
                let dyaw = wrap_pi(yaw - g.heading);
                let dpitch = pitch - g.pitch;
                let x = if dyaw.abs() >= FRAC_PI_2 {
                    if dyaw > 0.0 { w - 1.0 } else { 0.0 }
                } else {
                    w / 2.0 + f * dyaw.tan()
                };
                let y = if dpitch.abs() >= FRAC_PI_2 {
                    if dpitch > 0.0 { 0.0 } else { h - 1.0 }
                } else {
                    h / 2.0 - f * dpitch.tan()
                };
                Point2::new(x.clamp(0.0, w - 1.0), y.clamp(0.0, h - 1.0))
            }
        }
    }

    /// Viewing direction `(yaw, pitch)` that projects onto `p`.
    pub fn unproject(&self, p: Point2) -> (f64, f64) {
        match self {
            ReferenceGeometry::Panorama(g) => {
                let yaw = wrap_pi(g.yaw_at_left_edge + TAU * p.x / g.width as f64);
                let pitch = PI * (0.5 - p.y / g.height as f64);
                (yaw, pitch)
            }
            ReferenceGeometry::Flat(g) => {
                let f = g.focal();
                let yaw = wrap_pi(g.heading + ((p.x - g.width as f64 / 2.0) / f).atan());
                let pitch = g.pitch + ((g.height as f64 / 2.0 - p.y) / f).atan();
                (yaw, pitch)
            }
        }
    }

    /// Horizontal wrap period for blending, panoramas only.
    pub fn wrap_width(&self) -> Option<f64> {
        match self {
            ReferenceGeometry::Panorama(g) => Some(g.width as f64),
            ReferenceGeometry::Flat(_) => None,
        }
    }
}

fn project_panorama(yaw: f64, pitch: f64, g: &PanoramaGeometry) -> Point2 {
    let w = g.width as f64;
    let h = g.height as f64;
    let turn = (yaw - g.yaw_at_left_edge).rem_euclid(TAU) / TAU;
    let x = (w * turn).rem_euclid(w);
    let y = (h * (0.5 - pitch / PI)).clamp(0.0, h - 1.0);
    Point2::new(x, y)
}

/// Sensor-predicted focus `f_s` on an equirectangular panorama.
pub fn project_pose(pose: &HeadPose, geometry: &PanoramaGeometry) -> Point2 {
    let e = pose.euler();
    project_panorama(e.yaw, e.pitch, geometry)
}

/// `f = alpha · f_s + (1 - alpha) · f_ref`. With `wrap_width` set the x
/// blend follows the shorter arc around the panorama.
pub fn blend_focus(f_s: Point2, f_ref: Point2, alpha: f64, wrap_width: Option<f64>) -> Result<Point2> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("alpha must be in [0, 1], got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(f_ref);
    }
    if alpha == 1.0 {
        return Ok(f_s);
    }
    let y = alpha * f_s.y + (1.0 - alpha) * f_ref.y;
    let x = match wrap_width {
        None => alpha * f_s.x + (1.0 - alpha) * f_ref.x,
        Some(w) => {
            let dx = shortest_dx(f_s.x - f_ref.x, w);
            (f_ref.x + alpha * dx).rem_euclid(w)
        }
    };
    Ok(Point2::new(x, y))
}

/// Signed horizontal offset reduced to `[-w/2, w/2]`.
pub fn shortest_dx(dx: f64, w: f64) -> f64 {
    dx - w * (dx / w).round()
}

/// Distance that honors horizontal wrap on panoramas.
pub fn focus_distance(a: Point2, b: Point2, wrap_width: Option<f64>) -> f64 {
    let dx = match wrap_width {
        Some(w) => shortest_dx(a.x - b.x, w),
        None => a.x - b.x,
    };
    dx.hypot(a.y - b.y)
}

pub const DEFAULT_ALPHA_MAX: f64 = 0.5;

/// Linear reliability-to-alpha map, `alpha_max · reliability`.
pub fn alpha_from_reliability(reliability: f64, alpha_max: f64) -> f64 {
    alpha_max * reliability.clamp(0.0, 1.0)
}

/// Time-ordered poses from one device.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SensorTrace {
    poses: Vec<HeadPose>,
}

impl SensorTrace {
    pub fn new(poses: Vec<HeadPose>) -> Result<Self> {
        if let Some(w) = poses.windows(2).find(|w| w[1].timestamp_ms < w[0].timestamp_ms) {
            return Err(Error::Parameter(format!(
                "sensor timestamps must be non-decreasing ({} after {})",
                w[1].timestamp_ms, w[0].timestamp_ms
            )));
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[HeadPose] {
        &self.poses
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Pose closest in time to `timestamp_ms`, if within `tolerance_ms`.
    /// Equal distances resolve to the earlier record.
    pub fn nearest(&self, timestamp_ms: i64, tolerance_ms: i64) -> Option<&HeadPose> {
        let i = self.poses.partition_point(|p| p.timestamp_ms < timestamp_ms);
        let mut best: Option<&HeadPose> = None;
        for cand in [i.checked_sub(1), Some(i)].into_iter().flatten() {
            let Some(p) = self.poses.get(cand) else { continue };
            let d = (p.timestamp_ms - timestamp_ms).abs();
            if d <= tolerance_ms && best.is_none_or(|b| d < (b.timestamp_ms - timestamp_ms).abs()) {
                best = Some(p);
            }
        }
        best
    }

    /// Parses `timestamp_ms r11 r12 r13 r21 r22 r23 r31 r32 r33 reliability`
    /// records, one per line. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut poses = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: String| Error::Parameter(format!("sensor line {}: {msg}", lineno + 1));
            if fields.len() != 11 {
                return Err(bad(format!("expected 11 fields, found {}", fields.len())));
            }
            let timestamp: i64 = fields[0]
                .parse()
                .map_err(|_| bad(format!("bad timestamp {:?}", fields[0])))?;
            let nums: Vec<f64> = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| bad(format!("bad number {f:?}"))))
                .collect::<Result<_>>()?;
            let rotation = Matrix3::from_row_slice(&nums[..9]);
            let pose = HeadPose::new(timestamp, rotation, nums[9]).map_err(|e| bad(e.to_string()))?;
            poses.push(pose);
        }
        Self::new(poses)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn format(&self) -> String {
        let mut s = String::new();
        for p in &self.poses {
            let _ = write!(s, "{}", p.timestamp_ms);
            for r in 0..3 {
                for c in 0..3 {
                    let _ = write!(s, " {}", p.rotation[(r, c)]);
                }
            }
            let _ = writeln!(s, " {}", p.reliability);
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.format()).map_err(|e| Error::io(path, e))
    }
}
