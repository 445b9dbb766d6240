//! Synthetic scenes, warped POV views, drifting sensor traces and scripted
//! multi-person sessions with exact ground truth.

use std::f64::consts::{FRAC_PI_2, PI};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedRegion, Corpus, ReferenceEntry};
use crate::error::{Error, Result};
use crate::imaging::{crop, round_u8, save_pgm, EdgeMode, GrayImage, Point2, Window};
use crate::joint::{Exhibit, Floorplan, Frame, FrameImage, Interval, Stream};
use crate::matching::AffineMap;
use crate::sensor::{
    focus_distance, EulerAngles, FlatGeometry, HeadPose, PanoramaGeometry, ReferenceGeometry, SensorTrace,
};

/// Correctness radius as a fraction of panorama width.
pub const RADIUS_FRACTION: f64 = 330.0 / 3584.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Texture {
    /// Periodic facade of near-identical windows.
    Checker,
    /// Multi-octave value noise blobs.
    Noise,
    /// Dense pasted shapes.
    Glyphs,
}

impl Texture {
    pub const ALL: [Texture; 3] = [Texture::Glyphs, Texture::Noise, Texture::Checker];

    pub fn name(&self) -> &'static str {
        match self {
            Texture::Checker => "checker",
            Texture::Noise => "noise",
            Texture::Glyphs => "glyphs",
        }
    }

    pub fn is_repetitive(&self) -> bool {
        matches!(self, Texture::Checker)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Panorama,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub texture: Texture,
    pub width: usize,
    pub height: usize,
    /// Shape density in `[0, 1]`.
    pub clutter: f64,
    pub kind: ReferenceKind,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            texture: Texture::Glyphs,
            width: 640,
            height: 320,
            clutter: 0.5,
            kind: ReferenceKind::Panorama,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 32 || self.height < 32 {
            return Err(Error::Parameter("scene must be at least 32x32".into()));
        }
        if !(0.0..=1.0).contains(&self.clutter) {
            return Err(Error::Parameter("clutter must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn geometry(&self) -> ReferenceGeometry {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x6E0);
        let heading = rng.random_range(-PI..PI);
        match self.kind {
            ReferenceKind::Panorama => ReferenceGeometry::Panorama(PanoramaGeometry {
                width: self.width,
                height: self.height,
                yaw_at_left_edge: heading,
            }),
            ReferenceKind::Flat => ReferenceGeometry::Flat(FlatGeometry {
                width: self.width,
                height: self.height,
                heading,
                pitch: 0.0,
                hfov: FRAC_PI_2,
            }),
        }
    }

    /// Correctness radius for this scene size.
    pub fn radius(&self) -> f64 {
        RADIUS_FRACTION * self.width as f64
    }
}

/// Nuisance parameters for one POV view. Magnitudes are upper bounds; each
/// pair draws its own values uniformly below them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthParams {
    pub pov_width: usize,
    pub pov_height: usize,
    /// Additive Gaussian noise, intensity units (0..255).
    pub noise_sigma: f64,
    pub max_brightness_shift: f64,
    pub max_occlusion: f64,
    /// Radians per second.
    pub max_drift_rate: f64,
    /// Scale drawn from `[1/(1+s), 1+s]`.
    pub max_scale_change: f64,
    pub max_rotation: f64,
    pub max_shear: f64,
    pub reliability: f64,
    /// Trace length; the POV frame falls in its second half.
    pub duration_ms: i64,
    /// Integer-translation crop with no noise, shift, occlusion or drift.
    pub exact: bool,
}

impl Default for TruthParams {
    fn default() -> Self {
        Self {
            pov_width: 160,
            pov_height: 120,
            noise_sigma: 10.0,
            max_brightness_shift: 20.0,
            max_occlusion: 0.2,
            max_drift_rate: 2f64.to_radians(),
            max_scale_change: 0.15,
            max_rotation: 10f64.to_radians(),
            max_shear: 0.05,
            reliability: 1.0,
            duration_ms: 10_000,
            exact: false,
        }
    }
}

impl TruthParams {
    pub fn noiseless() -> Self {
        Self {
            noise_sigma: 0.0,
            max_brightness_shift: 0.0,
            max_occlusion: 0.0,
            max_drift_rate: 0.0,
            max_scale_change: 0.0,
            max_rotation: 0.0,
            max_shear: 0.0,
            exact: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pov_width < 16 || self.pov_height < 16 {
            return Err(Error::Parameter("pov must be at least 16x16".into()));
        }
        let nonneg = [
            self.noise_sigma,
            self.max_brightness_shift,
            self.max_drift_rate,
            self.max_scale_change,
            self.max_rotation,
            self.max_shear,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Parameter("noise magnitudes must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.max_occlusion) || !(0.0..=1.0).contains(&self.reliability) {
            return Err(Error::Parameter("occlusion must be in [0, 1) and reliability in [0, 1]".into()));
        }
        if self.duration_ms < 2 {
            return Err(Error::Parameter("duration_ms must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub affine: AffineMap,
    pub focus: Point2,
    pub geometry: ReferenceGeometry,
    pub texture: Texture,
    /// True head orientation, sampled like the sensor trace.
    pub poses: Vec<HeadPose>,
    pub pov_timestamp_ms: i64,
    pub brightness_shift: f64,
    pub noise_sigma: f64,
    pub occlusion: f64,
    pub drift_rate: f64,
    pub radius: f64,
}

impl GroundTruth {
    pub fn wrap_width(&self) -> Option<f64> {
        self.geometry.wrap_width()
    }

    pub fn format(&self) -> String {
        let mut s = String::new();
        let m = self.affine.m;
        let _ = writeln!(s, "affine {} {} {} {} {} {}", m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2]);
        let _ = writeln!(s, "focus {} {}", self.focus.x, self.focus.y);
        let _ = writeln!(s, "radius {}", self.radius);
        let _ = writeln!(s, "timestamp_ms {}", self.pov_timestamp_ms);
        match self.geometry {
            ReferenceGeometry::Panorama(g) => {
                let _ = writeln!(s, "geometry panorama {} {} {}", g.width, g.height, g.yaw_at_left_edge);
            }
            ReferenceGeometry::Flat(g) => {
                let _ = writeln!(s, "geometry flat {} {} {} {} {}", g.width, g.height, g.heading, g.pitch, g.hfov);
            }
        }
        let _ = writeln!(s, "texture {}", self.texture.name());
        if let Some(p) = self.poses.first() {
            let e = p.euler();
            let _ = writeln!(s, "pose {} {} {}", e.yaw, e.pitch, e.roll);
        }
        let _ = writeln!(s, "brightness {}", self.brightness_shift);
        let _ = writeln!(s, "noise_sigma {}", self.noise_sigma);
        let _ = writeln!(s, "occlusion {}", self.occlusion);
        let _ = writeln!(s, "drift_rate {}", self.drift_rate);
        s
    }

    /// Parses the text written by [`GroundTruth::format`]. The true pose
    /// trace is not stored and comes back empty.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Evaluation(format!("truth record: {msg}"));
        let mut affine = None;
        let mut focus = None;
        let mut radius = None;
        let mut timestamp = 0;
        let mut geometry = None;
        let mut texture = Texture::Glyphs;
        let (mut brightness, mut noise, mut occlusion, mut drift) = (0.0, 0.0, 0.0, 0.0);
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let mut it = line.split_whitespace();
            let key = it.next().unwrap_or_default();
            let rest: Vec<&str> = it.collect();
            let nums = |n: usize| -> Result<Vec<f64>> {
                let v: Vec<f64> = rest
                    .iter()
                    .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad number in `{line}`"))))
                    .collect::<Result<_>>()?;
                if v.len() != n {
                    return Err(bad(format!("`{key}` expects {n} values")));
                }
                Ok(v)
            };
            match key {
                "affine" => {
                    let v = nums(6)?;
                    affine = Some(AffineMap::new(v[0], v[1], v[2], v[3], v[4], v[5]));
                }
                "focus" => {
                    let v = nums(2)?;
                    focus = Some(Point2::new(v[0], v[1]));
                }
                "radius" => radius = Some(nums(1)?[0]),
                "timestamp_ms" => timestamp = nums(1)?[0] as i64,
                "geometry" => {
                    let kind = rest.first().copied().unwrap_or_default();
                    let v: Vec<f64> = rest[1..]
                        .iter()
                        .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad number in `{line}`"))))
                        .collect::<Result<_>>()?;
                    geometry = Some(match (kind, v.len()) {
                        ("panorama", 3) => ReferenceGeometry::Panorama(PanoramaGeometry {
                            width: v[0] as usize,
                            height: v[1] as usize,
                            yaw_at_left_edge: v[2],
                        }),
                        ("flat", 5) => ReferenceGeometry::Flat(FlatGeometry {
                            width: v[0] as usize,
                            height: v[1] as usize,
                            heading: v[2],
                            pitch: v[3],
                            hfov: v[4],
                        }),
                        _ => return Err(bad(format!("bad geometry `{line}`"))),
                    });
                }
                "texture" => {
                    texture = match rest.first().copied() {
                        Some("checker") => Texture::Checker,
                        Some("noise") => Texture::Noise,
                        Some("glyphs") => Texture::Glyphs,
                        _ => return Err(bad(format!("bad texture `{line}`"))),
                    }
                }
                "pose" => {
                    nums(3)?;
                }
                "brightness" => brightness = nums(1)?[0],
                "noise_sigma" => noise = nums(1)?[0],
                "occlusion" => occlusion = nums(1)?[0],
                "drift_rate" => drift = nums(1)?[0],
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        Ok(Self {
            affine: affine.ok_or_else(|| bad("missing affine".into()))?,
            focus: focus.ok_or_else(|| bad("missing focus".into()))?,
            geometry: geometry.ok_or_else(|| bad("missing geometry".into()))?,
            texture,
            poses: Vec::new(),
            pov_timestamp_ms: timestamp,
            brightness_shift: brightness,
            noise_sigma: noise,
            occlusion,
            drift_rate: drift,
            radius: radius.ok_or_else(|| bad("missing radius".into()))?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub pov: GrayImage,
    pub reference: GrayImage,
    pub sensors: SensorTrace,
    pub truth: GroundTruth,
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Smoothly interpolated lattice noise in `[0, 1]` with lattice spacing `cell`.
fn value_noise(w: usize, h: usize, cell: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gw = (w as f64 / cell).ceil() as usize + 2;
    let gh = (h as f64 / cell).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random()).collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let fy = y as f64 / cell;
        let (iy, ty) = (fy.floor() as usize, smoothstep(fy.fract()));
        for x in 0..w {
            let fx = x as f64 / cell;
            let (ix, tx) = (fx.floor() as usize, smoothstep(fx.fract()));
            let l = |i: usize, j: usize| lattice[j * gw + i];
            let top = l(ix, iy) + (l(ix + 1, iy) - l(ix, iy)) * tx;
            let bottom = l(ix, iy + 1) + (l(ix + 1, iy + 1) - l(ix, iy + 1)) * tx;
            out.push(top + (bottom - top) * ty);
        }
    }
    out
}

struct Canvas {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

impl Canvas {
    fn new(w: usize, h: usize, v: Vec<f64>) -> Self {
        Self { w, h, v }
    }

    /// Fills pixels whose centers satisfy `inside(dx, dy)` relative to `c`
    /// within a square of half-size `r`.
    fn fill(&mut self, c: Point2, r: f64, value: f64, inside: impl Fn(f64, f64) -> bool) {
        let x0 = (c.x - r).floor().max(0.0) as usize;
        let y0 = (c.y - r).floor().max(0.0) as usize;
        let x1 = ((c.x + r).ceil() as usize).min(self.w.saturating_sub(1));
        let y1 = ((c.y + r).ceil() as usize).min(self.h.saturating_sub(1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                if inside(x as f64 - c.x, y as f64 - c.y) {
                    self.v[y * self.w + x] = value;
                }
            }
        }
    }

    fn rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, value: f64) {
        let c = Point2::new((x0 + x1) / 2.0, (y0 + y1) / 2.0);
        let (hw, hh) = ((x1 - x0) / 2.0, (y1 - y0) / 2.0);
        self.fill(c, hw.max(hh) + 1.0, value, |dx, dy| dx.abs() <= hw && dy.abs() <= hh);
    }

    fn glyph(&mut self, rng: &mut ChaCha8Rng, size_range: (f64, f64), margin: f64) {
        let c = Point2::new(
            rng.random_range(-margin..self.w as f64 + margin),
            rng.random_range(-margin..self.h as f64 + margin),
        );
        let a = rng.random_range(size_range.0..size_range.1);
        let b = a * rng.random_range(0.35..1.0);
        let angle: f64 = rng.random_range(0.0..PI);
        let value = if rng.random_bool(0.5) {
            rng.random_range(0.0..70.0)
        } else {
            rng.random_range(185.0..255.0)
        };
        let (s, co) = angle.sin_cos();
        let local = move |dx: f64, dy: f64| (co * dx + s * dy, -s * dx + co * dy);
        match rng.random_range(0..4) {
            0 => self.fill(c, a, value, move |dx, dy| {
                let (u, v) = local(dx, dy);
                u.abs() <= a && v.abs() <= b
            }),
            1 => self.fill(c, a, value, move |dx, dy| {
                let (u, v) = local(dx, dy);
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            }),
            2 => self.fill(c, a, value, move |dx, dy| {
                // isosceles triangle
                let (u, v) = local(dx, dy);
                v >= -b && v <= b && u.abs() <= a * (b - v) / (2.0 * b)
            }),
            _ => {
                // bar with a perpendicular stroke, letter-like
                let t = (b * 0.35).max(1.5);
                self.fill(c, a, value, move |dx, dy| {
                    let (u, v) = local(dx, dy);
                    (u.abs() <= a && v.abs() <= t) || (u.abs() <= t && v >= -b && v <= t)
                })
            }
        }
    }

    fn into_image(self) -> GrayImage {
        GrayImage::new(self.w, self.h, self.v.into_iter().map(round_u8).collect()).expect("canvas size")
    }
}

fn glyph_count(w: usize, h: usize, clutter: f64) -> usize {
    ((w * h) as f64 / 400.0 * clutter).round() as usize
}

/// Renders the reference scene. Identical specs give identical images.
pub fn render_scene(spec: &SceneSpec) -> GrayImage {
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n64 = value_noise(w, h, 64.0, &mut rng);
    let n24 = value_noise(w, h, 24.0, &mut rng);
    let glyphs = glyph_count(w, h, spec.clutter);
    match spec.texture {
        Texture::Glyphs => {
            let base = n64.iter().zip(&n24).map(|(a, b)| 80.0 + 60.0 * a + 40.0 * b).collect();
            let mut c = Canvas::new(w, h, base);
            for _ in 0..glyphs {
                c.glyph(&mut rng, (4.0, 16.0), 8.0);
            }
            c.into_image()
        }
        Texture::Noise => {
            let n10 = value_noise(w, h, 10.0, &mut rng);
            let base = n64
                .iter()
                .zip(&n10)
                .map(|(a, b)| {
                    let t = smoothstep((0.5 + 1.6 * (b - 0.5)).clamp(0.0, 1.0));
                    40.0 + 40.0 * a + 150.0 * t
                })
                .collect();
            let mut c = Canvas::new(w, h, base);
            for _ in 0..glyphs / 3 {
                c.glyph(&mut rng, (4.0, 12.0), 8.0);
            }
            c.into_image()
        }
        Texture::Checker => {
            let base = n64.iter().map(|a| 165.0 + 25.0 * a).collect();
            let mut c = Canvas::new(w, h, base);
            let (px, py) = (32.0, 40.0);
            let ox = rng.random_range(0.0..px);
            let oy = rng.random_range(0.0..py);
            let mut y = oy - py;
            while y < h as f64 {
                let mut x = ox - px;
                while x < w as f64 {
                    let v = 45.0 + rng.random_range(-6.0..6.0);
                    c.rect(x, y, x + 18.0, y + 24.0, v);
                    c.rect(x + 8.0, y, x + 10.0, y + 24.0, 150.0);
                    x += px;
                }
                y += py;
            }
            for _ in 0..glyphs / 10 {
                c.glyph(&mut rng, (4.0, 10.0), 0.0);
            }
            c.into_image()
        }
    }
}

fn random_linear(params: &TruthParams, scale_center: f64, rng: &mut ChaCha8Rng) -> AffineMap {
    let s = params.max_scale_change;
    let scale = scale_center * if s > 0.0 { (rng.random_range(-1.0..1.0) * (1.0 + s).ln()).exp() } else { 1.0 };
    let angle = if params.max_rotation > 0.0 { rng.random_range(-params.max_rotation..params.max_rotation) } else { 0.0 };
    let shear = if params.max_shear > 0.0 { rng.random_range(-params.max_shear..params.max_shear) } else { 0.0 };
    let rot = AffineMap::similarity(scale, angle, 0.0, 0.0);
    rot.compose(&AffineMap::new(1.0, shear, 0.0, 0.0, 1.0, 0.0))
}

/// POV-to-reference map sending the POV center to `focus`.
fn affine_through(linear: AffineMap, pov_center: Point2, focus: Point2) -> AffineMap {
    let moved = linear.apply(pov_center);
    let mut a = linear;
    a.m[0][2] = focus.x - moved.x;
    a.m[1][2] = focus.y - moved.y;
    a
}

fn footprint_inside(a: &AffineMap, pw: usize, ph: usize, w: usize, h: usize, margin: f64) -> bool {
    let corners = [(0.0, 0.0), (pw as f64 - 1.0, 0.0), (0.0, ph as f64 - 1.0), (pw as f64 - 1.0, ph as f64 - 1.0)];
    corners.iter().all(|&(x, y)| {
        let p = a.apply(Point2::new(x, y));
        p.x >= margin && p.y >= margin && p.x <= w as f64 - 1.0 - margin && p.y <= h as f64 - 1.0 - margin
    })
}

/// Samples `reference` through `affine` onto a `pw` x `ph` grid.
pub fn warp(reference: &GrayImage, affine: &AffineMap, pw: usize, ph: usize) -> GrayImage {
    GrayImage::from_fn(pw, ph, |x, y| {
        let p = affine.apply(Point2::new(x as f64, y as f64));
        round_u8(reference.sample_bilinear(p.x, p.y, EdgeMode::Clamp))
    })
}

/// Brightness shift, additive noise and occluding blobs. Returns the
/// occluded fraction actually painted.
fn degrade(image: &GrayImage, brightness: f64, sigma: f64, occlusion: f64, rng: &mut ChaCha8Rng) -> (GrayImage, f64) {
    let (w, h) = (image.width(), image.height());
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("valid sigma");
    let values: Vec<f64> = image
        .data()
        .iter()
        .map(|&v| v as f64 + brightness + if sigma > 0.0 { noise.sample(rng) } else { 0.0 })
        .collect();
    let mut c = Canvas::new(w, h, values);
    let mut covered = vec![false; w * h];
    let target = (occlusion * (w * h) as f64) as usize;
    let mut count = 0;
    let radius = (w.min(h) as f64 * 0.18).max(3.0);
    while count < target {
        let center = Point2::new(rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
        let (ra, rb) = (rng.random_range(0.5..1.0) * radius, rng.random_range(0.5..1.0) * radius);
        let value = rng.random_range(20.0..235.0);
        let budget = target - count;
        let mut painted = 0;
        let x0 = (center.x - ra).floor().max(0.0) as usize;
        let y0 = (center.y - rb).floor().max(0.0) as usize;
        let x1 = ((center.x + ra).ceil() as usize).min(w - 1);
        let y1 = ((center.y + rb).ceil() as usize).min(h - 1);
        'blob: for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = ((x as f64 - center.x) / ra, (y as f64 - center.y) / rb);
                if dx * dx + dy * dy <= 1.0 {
                    c.v[y * w + x] = value;
                    if !covered[y * w + x] {
                        covered[y * w + x] = true;
                        painted += 1;
                        if painted >= budget {
                            break 'blob;
                        }
                    }
                }
            }
        }
        count += painted;
    }
    (c.into_image(), count as f64 / (w * h) as f64)
}

/// Drifting sensor trace and true trace for a static head looking at `focus`.
fn pose_traces(
    geometry: &ReferenceGeometry,
    focus: Point2,
    drift_rate: f64,
    reliability: f64,
    duration_ms: i64,
    roll: f64,
) -> (Vec<HeadPose>, SensorTrace) {
    let (yaw, pitch) = geometry.unproject(focus);
    let mut truth = Vec::new();
    let mut sensed = Vec::new();
    let step = 100;
    let mut t = 0;
    while t <= duration_ms {
        let secs = t as f64 / 1000.0;
        let angles = EulerAngles::new(yaw, pitch, roll);
        truth.push(HeadPose::from_euler(t, angles, reliability).expect("valid pose"));
        let drift = drift_rate * secs;
        let drifted = EulerAngles::new(
            crate::sensor::wrap_pi(yaw + drift),
            (pitch + 0.3 * drift).clamp(-FRAC_PI_2 + 1e-3, FRAC_PI_2 - 1e-3),
            roll,
        );
        sensed.push(HeadPose::from_euler(t, drifted, reliability).expect("valid pose"));
        t += step;
    }
    (truth, SensorTrace::new(sensed).expect("increasing timestamps"))
}

/// POV view of `reference` around `focus` under `params`, with sensor
/// traces. `rng` drives every random choice.
#[allow(clippy::too_many_arguments)]
fn view_of(
    reference: &GrayImage,
    geometry: ReferenceGeometry,
    texture: Texture,
    focus: Point2,
    linear: AffineMap,
    params: &TruthParams,
    radius: f64,
    rng: &mut ChaCha8Rng,
) -> (GrayImage, SensorTrace, GroundTruth) {
    let (pw, ph) = (params.pov_width, params.pov_height);
    let pov_center = Point2::new(pw as f64 / 2.0, ph as f64 / 2.0);
    let affine = affine_through(linear, pov_center, focus);
    let warped = warp(reference, &affine, pw, ph);
    let brightness = if params.max_brightness_shift > 0.0 {
        rng.random_range(-params.max_brightness_shift..=params.max_brightness_shift)
    } else {
        0.0
    };
    let occlusion = if params.max_occlusion > 0.0 { rng.random_range(0.0..=params.max_occlusion) } else { 0.0 };
    let (pov, occlusion) = degrade(&warped, brightness, params.noise_sigma, occlusion, rng);
    let drift_rate = if params.max_drift_rate > 0.0 {
        rng.random_range(-params.max_drift_rate..=params.max_drift_rate)
    } else {
        0.0
    };
    let roll = rng.random_range(-0.1..0.1);
    let (poses, sensors) = pose_traces(&geometry, focus, drift_rate, params.reliability, params.duration_ms, roll);
    let half = params.duration_ms / 2;
    let step = 100;
    let pov_timestamp_ms = (rng.random_range(half..=params.duration_ms) / step) * step;
    let truth = GroundTruth {
        affine,
        focus,
        geometry,
        texture,
        poses,
        pov_timestamp_ms,
        brightness_shift: brightness,
        noise_sigma: params.noise_sigma,
        occlusion,
        drift_rate,
        radius,
    };
    (pov, sensors, truth)
}

/// Reference scene plus one POV view of it with full ground truth.
pub fn generate_pair(spec: &SceneSpec, params: &TruthParams) -> Result<SyntheticPair> {
    spec.validate()?;
    params.validate()?;
    let reference = render_scene(spec);
    let geometry = spec.geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xA11CE);
    let (pw, ph) = (params.pov_width, params.pov_height);
    let (w, h) = (spec.width, spec.height);
    if pw + 8 > w || ph + 8 > h {
        return Err(Error::Parameter("pov must be smaller than the scene".into()));
    }
    if params.exact {
        let margin = 4.0;
        let left = rng.random_range(margin as usize..w - pw - margin as usize);
        let top = rng.random_range(margin as usize..h - ph - margin as usize);
        let affine = AffineMap::translation(left as f64, top as f64);
        let center = Point2::new(pw as f64 / 2.0, ph as f64 / 2.0);
        let focus = affine.apply(center);
        let window = Window::new(focus, pw, ph);
        let pov = crop(&reference, &window, EdgeMode::Clamp);
        let (poses, sensors) = pose_traces(&geometry, focus, 0.0, params.reliability, params.duration_ms, 0.0);
        let pov_timestamp_ms = params.duration_ms / 2 / 100 * 100;
        let truth = GroundTruth {
            affine,
            focus,
            geometry,
            texture: spec.texture,
            poses,
            pov_timestamp_ms,
            brightness_shift: 0.0,
            noise_sigma: 0.0,
            occlusion: 0.0,
            drift_rate: 0.0,
            radius: spec.radius(),
        };
        return Ok(SyntheticPair { pov, reference, sensors, truth });
    }
    let (pov, sensors, truth) = random_view_with(&reference, geometry, spec.texture, params, &mut rng)?;
    Ok(SyntheticPair { pov, reference, sensors, truth })
}

/// A degraded POV view of `reference` whose footprint lies inside the image,
/// drawn from `seed`.
pub fn random_view(
    reference: &GrayImage,
    geometry: ReferenceGeometry,
    texture: Texture,
    params: &TruthParams,
    seed: u64,
) -> Result<(GrayImage, SensorTrace, GroundTruth)> {
    params.validate()?;
    random_view_with(reference, geometry, texture, params, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn random_view_with(
    reference: &GrayImage,
    geometry: ReferenceGeometry,
    texture: Texture,
    params: &TruthParams,
    rng: &mut ChaCha8Rng,
) -> Result<(GrayImage, SensorTrace, GroundTruth)> {
    let (pw, ph) = (params.pov_width, params.pov_height);
    let (w, h) = (reference.width(), reference.height());
    let margin = 4.0;
    let radius = RADIUS_FRACTION * w as f64;
    for _ in 0..10_000 {
        let linear = random_linear(params, 1.0, rng);
        let focus = Point2::new(rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
        let affine = affine_through(linear, Point2::new(pw as f64 / 2.0, ph as f64 / 2.0), focus);
        if footprint_inside(&affine, pw, ph, w, h, margin) {
            return Ok(view_of(reference, geometry, texture, focus, linear, params, radius, rng));
        }
    }
    Err(Error::Parameter("pov footprint does not fit in the scene".into()))
}

/// Scene spec for pair `index` of a dataset, cycling through `textures`.
pub fn dataset_scene(base: &SceneSpec, textures: &[Texture], index: usize) -> SceneSpec {
    let textures = if textures.is_empty() { &Texture::ALL[..] } else { textures };
    SceneSpec {
        seed: base.seed.wrapping_mul(1_000_003).wrapping_add(index as u64),
        texture: textures[index % textures.len()],
        ..*base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub scene: SceneSpec,
    pub textures: Vec<Texture>,
    pub truth: TruthParams,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            scene: SceneSpec::default(),
            textures: Texture::ALL.to_vec(),
            truth: TruthParams::default(),
        }
    }
}

pub fn generate_dataset(spec: &DatasetSpec, count: usize) -> Result<Vec<SyntheticPair>> {
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map(|i| generate_pair(&dataset_scene(&spec.scene, &spec.textures, i), &spec.truth))
        .collect()
}

pub fn pair_id(index: usize) -> String {
    format!("{index:03}")
}

/// Writes `ref/`, `pov/`, `sensors/`, `truth/` and a corpus manifest.
pub fn write_dataset(dir: impl AsRef<Path>, pairs: &[SyntheticPair]) -> Result<()> {
    let dir = dir.as_ref();
    for sub in ["ref", "pov", "sensors", "truth"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut entries = Vec::with_capacity(pairs.len());
    let mut times = String::new();
    for (i, pair) in pairs.iter().enumerate() {
        let id = pair_id(i);
        let _ = writeln!(times, "{id} {}", pair.truth.pov_timestamp_ms);
        let ref_path = dir.join("ref").join(format!("{id}.pgm"));
        save_pgm(&pair.reference, &ref_path)?;
        save_pgm(&pair.pov, dir.join("pov").join(format!("{id}.pgm")))?;
        pair.sensors.save(dir.join("sensors").join(format!("{id}.txt")))?;
        let truth_path = dir.join("truth").join(format!("{id}.txt"));
        std::fs::write(&truth_path, pair.truth.format()).map_err(|e| Error::io(&truth_path, e))?;
        entries.push(ReferenceEntry {
            id,
            image_path: ref_path,
            geometry: pair.truth.geometry,
            geo: None,
            annotations: Vec::new(),
        });
    }
    write_text(&dir.join("times.txt"), &times)?;
    crate::corpus::save_corpus(&Corpus::new(entries)?, dir.join("manifest.json"))
}

/// `id -> POV timestamp` from a dataset's `times.txt`.
pub fn read_times(dir: impl AsRef<Path>) -> Result<BTreeMap<String, i64>> {
    let path = dir.as_ref().join("times.txt");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut it = line.split_whitespace();
        let (Some(id), Some(t), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::format(&path, format!("line {}: expected `id timestamp_ms`", n + 1)));
        };
        let t = t
            .parse()
            .map_err(|_| Error::format(&path, format!("line {}: bad timestamp `{t}`", n + 1)))?;
        out.insert(id.to_string(), t);
    }
    Ok(out)
}

/// `(id, truth)` for every `truth/*.txt` in a dataset, sorted by id.
pub fn read_truths(dir: impl AsRef<Path>) -> Result<Vec<(String, GroundTruth)>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let truth = GroundTruth::parse(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        out.push((id, truth));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// One localization outcome to be scored against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    /// Estimate with sensors blended at the configured alpha.
    pub f: Point2,
    /// Estimate from the same run without sensors, when available.
    #[serde(default)]
    pub f_without: Option<Point2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub within: usize,
    pub accuracy: f64,
    pub mean_error: f64,
    pub median_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub radius: f64,
    pub with_sensors: AccuracySummary,
    pub without_sensors: Option<AccuracySummary>,
}

fn summarize(errors: &[f64], radius: f64) -> AccuracySummary {
    // inclusive boundary, with slack for coordinates that do not subtract exactly
    let within = errors.iter().filter(|&&e| e <= radius * (1.0 + 1e-12) + 1e-9).count();
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n == 0 {
        0.0
    } else if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    AccuracySummary {
        within,
        accuracy: if n == 0 { 0.0 } else { within as f64 / n as f64 },
        mean_error: if n == 0 { 0.0 } else { sorted.iter().sum::<f64>() / n as f64 },
        median_error: median,
    }
}

/// Fraction of estimates within `radius` of the truth (inclusive), plus
/// error statistics. Panorama distances honor horizontal wrap.
pub fn evaluate(results: &[EvalRecord], truths: &[(String, GroundTruth)], radius: f64) -> Result<EvalReport> {
    if !(radius > 0.0) {
        return Err(Error::Evaluation("radius must be > 0".into()));
    }
    let mut results: Vec<&EvalRecord> = results.iter().collect();
    results.sort_by(|a, b| a.id.cmp(&b.id));
    let mut truths: Vec<&(String, GroundTruth)> = truths.iter().collect();
    truths.sort_by(|a, b| a.0.cmp(&b.0));
    if results.len() != truths.len() {
        return Err(Error::Evaluation(format!("{} results for {} truths", results.len(), truths.len())));
    }
    let mut with = Vec::with_capacity(results.len());
    let mut without = Vec::new();
    for (r, (id, t)) in results.iter().zip(truths.iter().map(|x| (&x.0, &x.1))) {
        if &r.id != id {
            return Err(Error::Evaluation(format!("result id `{}` does not match truth id `{id}`", r.id)));
        }
        with.push(focus_distance(r.f, t.focus, t.wrap_width()));
        if let Some(f) = r.f_without {
            without.push(focus_distance(f, t.focus, t.wrap_width()));
        }
    }
    let without_sensors = if without.is_empty() {
        None
    } else if without.len() != with.len() {
        return Err(Error::Evaluation("sensor-free estimates must be given for all or none".into()));
    } else {
        Some(summarize(&without, radius))
    };
    Ok(EvalReport {
        count: with.len(),
        radius,
        with_sensors: summarize(&with, radius),
        without_sensors,
    })
}

impl EvalReport {
    pub fn format(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "count {}", self.count);
        let _ = writeln!(s, "radius {}", self.radius);
        let line = |s: &mut String, name: &str, a: &AccuracySummary| {
            let _ = writeln!(
                s,
                "{name} within {} accuracy {:.4} mean_error {:.3} median_error {:.3}",
                a.within, a.accuracy, a.mean_error, a.median_error
            );
        };
        line(&mut s, "with_sensors", &self.with_sensors);
        if let Some(w) = &self.without_sensors {
            line(&mut s, "without_sensors", w);
        }
        s
    }
}

/// Panorama of a gallery wall with framed, annotated paintings.
#[derive(Debug, Clone)]
pub struct Gallery {
    pub image: GrayImage,
    pub geometry: ReferenceGeometry,
    pub annotations: Vec<AnnotatedRegion>,
}

impl Gallery {
    pub fn entry(&self, id: &str, image_path: impl Into<std::path::PathBuf>) -> ReferenceEntry {
        ReferenceEntry {
            id: id.to_string(),
            image_path: image_path.into(),
            geometry: self.geometry,
            geo: None,
            annotations: self.annotations.clone(),
        }
    }

    pub fn exhibit_center(&self, k: usize) -> Point2 {
        let p = &self.annotations[k].polygon;
        Point2::new((p[0].x + p[2].x) / 2.0, (p[0].y + p[2].y) / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GallerySpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub exhibits: usize,
    pub painting_width: usize,
    pub painting_height: usize,
}

impl Default for GallerySpec {
    fn default() -> Self {
        Self {
            seed: 7,
            width: 1280,
            height: 480,
            exhibits: 4,
            painting_width: 220,
            painting_height: 180,
        }
    }
}

pub fn generate_gallery(spec: &GallerySpec) -> Result<Gallery> {
    let (w, h) = (spec.width, spec.height);
    let (pw, ph) = (spec.painting_width, spec.painting_height);
    if spec.exhibits == 0 || spec.exhibits * (pw + 16) > w || ph + 16 > h {
        return Err(Error::Parameter("paintings do not fit on the gallery wall".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let wall = value_noise(w, h, 48.0, &mut rng);
    let mut canvas = Canvas::new(w, h, wall.iter().map(|v| 150.0 + 16.0 * v).collect());
    let slot = w as f64 / spec.exhibits as f64;
    let mut annotations = Vec::new();
    for k in 0..spec.exhibits {
        let x0 = (slot * k as f64 + (slot - pw as f64) / 2.0).round();
        let y0 = ((h - ph) as f64 / 2.0 + rng.random_range(-10.0..10.0)).round();
        let art = render_scene(&SceneSpec {
            seed: spec.seed.wrapping_mul(31).wrapping_add(k as u64 + 1),
            texture: Texture::Glyphs,
            width: pw.max(32),
            height: ph.max(32),
            clutter: 0.9,
            kind: ReferenceKind::Flat,
        });
        canvas.rect(x0 - 4.0, y0 - 4.0, x0 + pw as f64 + 3.0, y0 + ph as f64 + 3.0, 25.0);
        for y in 0..ph {
            for x in 0..pw {
                canvas.v[(y0 as usize + y) * w + x0 as usize + x] = art.get(x, y) as f64;
            }
        }
        let (x1, y1) = (x0 + pw as f64 + 3.0, y0 + ph as f64 + 3.0);
        let (x0, y0) = (x0 - 4.0, y0 - 4.0);
        annotations.push(AnnotatedRegion {
            label: format!("exhibit-{k}"),
            polygon: vec![Point2::new(x0, y0), Point2::new(x1, y0), Point2::new(x1, y1), Point2::new(x0, y1)],
            info: format!("Exhibit {k}: synthetic painting {}", spec.seed),
        });
    }
    let geometry = ReferenceGeometry::Panorama(PanoramaGeometry {
        width: w,
        height: h,
        yaw_at_left_edge: rng.random_range(-PI..PI),
    });
    Ok(Gallery {
        image: canvas.into_image(),
        geometry,
        annotations,
    })
}

/// A POV view of a gallery with its focus drawn uniformly inside exhibit
/// `k`, inset by `inset` pixels from the frame.
pub fn gallery_view(
    gallery: &Gallery,
    k: usize,
    inset: f64,
    params: &TruthParams,
    seed: u64,
) -> Result<(GrayImage, SensorTrace, GroundTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = &gallery.annotations[k].polygon;
    let focus = Point2::new(
        rng.random_range(p[0].x + inset..p[2].x - inset),
        rng.random_range(p[0].y + inset..p[2].y - inset),
    );
    view_at(gallery, focus, 1.0, params, &mut rng)
}

fn view_at(
    gallery: &Gallery,
    focus: Point2,
    scale: f64,
    params: &TruthParams,
    rng: &mut ChaCha8Rng,
) -> Result<(GrayImage, SensorTrace, GroundTruth)> {
    params.validate()?;
    let radius = RADIUS_FRACTION * gallery.image.width() as f64;
    let linear = random_linear(params, scale, rng);
    Ok(view_of(&gallery.image, gallery.geometry, Texture::Glyphs, focus, linear, params, radius, rng))
}

/// Where one person is looking during a script segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gaze {
    Exhibit(usize),
    /// A bare stretch of wall unique to the person.
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start_ms: i64,
    pub end_ms: i64,
    pub gaze: Gaze,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSpec {
    pub seed: u64,
    pub gallery: GallerySpec,
    /// Per-person segments covering `[0, duration_ms]`.
    pub script: Vec<Vec<Segment>>,
    pub frame_interval_ms: i64,
    pub duration_ms: i64,
    pub truth: TruthParams,
}

fn seg(start_s: i64, end_s: i64, gaze: Gaze) -> Segment {
    Segment {
        start_ms: start_s * 1000,
        end_ms: end_s * 1000,
        gaze,
    }
}

impl Default for SessionSpec {
    /// Four people: together at exhibit 0, then split 2+2 between exhibits
    /// 1 and 2, then a mixed phase.
    fn default() -> Self {
        use Gaze::{Exhibit as E, Idle};
        let script = vec![
            vec![seg(0, 9, E(0)), seg(10, 12, Idle), seg(13, 24, E(1)), seg(25, 27, Idle), seg(28, 39, E(3))],
            vec![seg(0, 9, E(0)), seg(10, 12, Idle), seg(13, 24, E(2)), seg(25, 27, Idle), seg(28, 39, E(3))],
            vec![seg(0, 9, E(0)), seg(10, 12, Idle), seg(13, 24, E(2)), seg(25, 27, Idle), seg(28, 39, E(0))],
            vec![seg(0, 9, E(0)), seg(10, 12, Idle), seg(13, 24, E(1)), seg(25, 39, Idle)],
        ];
        Self {
            seed: 11,
            gallery: GallerySpec::default(),
            script,
            frame_interval_ms: 1000,
            duration_ms: 39_000,
            truth: TruthParams {
                pov_width: 240,
                pov_height: 180,
                max_drift_rate: 0.5f64.to_radians(),
                ..TruthParams::default()
            },
        }
    }
}

impl SessionSpec {
    pub fn person_id(i: usize) -> String {
        format!("P{}", i + 1)
    }

    pub fn gaze_at(&self, person: usize, t: i64) -> Option<Gaze> {
        self.script[person]
            .iter()
            .find(|s| s.start_ms <= t && t <= s.end_ms)
            .map(|s| s.gaze)
    }

    /// Scripted joint intervals of a pair: spans where both look at the
    /// same exhibit.
    pub fn scripted_intervals(&self, a: usize, b: usize) -> Vec<Interval> {
        let mut out = Vec::new();
        for sa in &self.script[a] {
            for sb in &self.script[b] {
                if let (Gaze::Exhibit(x), Gaze::Exhibit(y)) = (sa.gaze, sb.gaze) {
                    let (s, e) = (sa.start_ms.max(sb.start_ms), sa.end_ms.min(sb.end_ms));
                    if x == y && s <= e {
                        out.push(Interval { start_ms: s, end_ms: e });
                    }
                }
            }
        }
        out.sort_by_key(|i| i.start_ms);
        out
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSession {
    pub spec: SessionSpec,
    pub gallery: Gallery,
    pub streams: Vec<Stream>,
    /// True focus on the gallery for every frame, per stream.
    pub focus: Vec<Vec<Point2>>,
    pub floorplan: Floorplan,
}

/// Renders every person's frames and sensor trace for a scripted session.
pub fn generate_session(spec: &SessionSpec) -> Result<SyntheticSession> {
    use rayon::prelude::*;
    if spec.script.len() < 2 {
        return Err(Error::Session("a session needs at least 2 people".into()));
    }
    if spec.frame_interval_ms < 1 {
        return Err(Error::Parameter("frame_interval_ms must be >= 1".into()));
    }
    spec.truth.validate()?;
    let gallery = generate_gallery(&spec.gallery)?;
    let (w, h) = (gallery.image.width() as f64, gallery.image.height() as f64);
    let n = spec.script.len();
    let per_person: Vec<Result<(Stream, Vec<Point2>)>> = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(7919).wrapping_add(p as u64));
            let offset = rng.random_range(0..150);
            // idle spots: bare wall, above or below the paintings, distinct per person
            let idle = Point2::new(
                w * (p as f64 + 0.5) / n as f64,
                if p % 2 == 0 { h * 0.1 } else { h * 0.9 },
            );
            let mut frames = Vec::new();
            let mut focus = Vec::new();
            let mut poses = Vec::new();
            let mut t = 0;
            while t <= spec.duration_ms {
                let gaze = spec.gaze_at(p, t).unwrap_or(Gaze::Idle);
                let f = match gaze {
                    Gaze::Exhibit(k) => {
                        let c = gallery.exhibit_center(k);
                        Point2::new(c.x + rng.random_range(-10.0..10.0), c.y + rng.random_range(-8.0..8.0))
                    }
                    Gaze::Idle => Point2::new(idle.x + rng.random_range(-6.0..6.0), idle.y),
                };
                let params = TruthParams {
                    duration_ms: 2,
                    ..spec.truth
                };
                let (image, _, truth) = view_at(&gallery, f, 1.0, &params, &mut rng)?;
                let stamp = t + offset;
                let drift = truth.drift_rate * stamp as f64 / 1000.0;
                let (yaw, pitch) = gallery.geometry.unproject(f);
                let sensed = EulerAngles::new(crate::sensor::wrap_pi(yaw + drift), pitch, 0.0);
                poses.push(HeadPose::from_euler(stamp, sensed, spec.truth.reliability)?);
                frames.push(Frame {
                    timestamp_ms: stamp,
                    image: FrameImage::Memory(Arc::new(image)),
                });
                focus.push(f);
                t += spec.frame_interval_ms;
            }
            Ok((Stream::new(SessionSpec::person_id(p), frames, SensorTrace::new(poses)?)?, focus))
        })
        .collect();
    let mut streams = Vec::with_capacity(n);
    let mut focus = Vec::with_capacity(n);
    for r in per_person {
        let (s, f) = r?;
        streams.push(s);
        focus.push(f);
    }
    let floorplan = Floorplan {
        width: 400,
        height: 300,
        exhibits: (0..gallery.annotations.len())
            .map(|k| {
                let angle = 2.0 * PI * k as f64 / gallery.annotations.len() as f64;
                Exhibit {
                    id: gallery.annotations[k].label.clone(),
                    position: Point2::new(200.0 + 120.0 * angle.cos(), 150.0 + 100.0 * angle.sin()),
                }
            })
            .collect(),
    };
    Ok(SyntheticSession {
        spec: spec.clone(),
        gallery,
        streams,
        focus,
        floorplan,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a session as files: `gallery.pgm`, `manifest.json` (the annotated
/// gallery), `floorplan.json`, `session.json`, `frames/<person>/<ms>.pgm`,
/// `sensors/<person>.txt` and the scripted intervals in `script.txt`.
pub fn write_session(dir: impl AsRef<Path>, session: &SyntheticSession) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let gallery_path = dir.join("gallery.pgm");
    save_pgm(&session.gallery.image, &gallery_path)?;
    let corpus = Corpus::new(vec![session.gallery.entry("gallery", gallery_path)])?;
    crate::corpus::save_corpus(&corpus, dir.join("manifest.json"))?;
    let floorplan = serde_json::to_string_pretty(&session.floorplan).map_err(|e| Error::Session(e.to_string()))?;
    write_text(&dir.join("floorplan.json"), &floorplan)?;

    let sensors_dir = dir.join("sensors");
    std::fs::create_dir_all(&sensors_dir).map_err(|e| Error::io(&sensors_dir, e))?;
    let mut streams = Vec::new();
    for stream in &session.streams {
        let id = &stream.person_id;
        let frames_dir = dir.join("frames").join(id);
        std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
        for frame in &stream.frames {
            save_pgm(&frame.load()?, frames_dir.join(format!("{}.pgm", frame.timestamp_ms)))?;
        }
        stream.poses.save(sensors_dir.join(format!("{id}.txt")))?;
        streams.push(serde_json::json!({
            "person_id": id,
            "frames": format!("frames/{id}"),
            "sensors": format!("sensors/{id}.txt"),
        }));
    }
    let file = serde_json::json!({ "streams": streams });
    write_text(&dir.join("session.json"), &format!("{file:#}\n"))?;

    let mut script = String::new();
    let n = session.streams.len();
    for i in 0..n {
        for j in i + 1..n {
            for iv in session.spec.scripted_intervals(i, j) {
                let _ = writeln!(
                    script,
                    "{} {} {} {}",
                    session.streams[i].person_id, session.streams[j].person_id, iv.start_ms, iv.end_ms
                );
            }
        }
    }
    write_text(&dir.join("script.txt"), &script)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoSpec {
    pub seed: u64,
    pub cameras: usize,
    pub frames: usize,
    pub frame_interval_ms: i64,
    /// Consecutive frames facing the same camera.
    pub segment_frames: usize,
    pub camera_width: usize,
    pub camera_height: usize,
    pub truth: TruthParams,
}

impl Default for VideoSpec {
    fn default() -> Self {
        Self {
            seed: 3,
            cameras: 2,
            frames: 40,
            frame_interval_ms: 100,
            segment_frames: 5,
            camera_width: 480,
            camera_height: 320,
            truth: TruthParams {
                max_drift_rate: 0.5f64.to_radians(),
                ..TruthParams::default()
            },
        }
    }
}

/// Fixed cameras and a POV video that alternates between them.
#[derive(Debug, Clone)]
pub struct CameraVideo {
    pub cameras: Vec<(GrayImage, ReferenceGeometry)>,
    pub frames: Vec<Frame>,
    pub sensors: SensorTrace,
    /// Camera each frame faces.
    pub script: Vec<usize>,
    pub focus: Vec<Point2>,
}

pub fn generate_camera_video(spec: &VideoSpec) -> Result<CameraVideo> {
    use rayon::prelude::*;
    if spec.cameras == 0 || spec.segment_frames == 0 || spec.frame_interval_ms < 1 {
        return Err(Error::Parameter("video needs cameras, segment_frames and frame_interval_ms >= 1".into()));
    }
    spec.truth.validate()?;
    let cameras: Vec<(GrayImage, ReferenceGeometry)> = (0..spec.cameras)
        .map(|c| {
            let scene = SceneSpec {
                seed: spec.seed.wrapping_mul(101).wrapping_add(c as u64),
                texture: Texture::ALL[c % 2],
                width: spec.camera_width,
                height: spec.camera_height,
                kind: ReferenceKind::Flat,
                ..SceneSpec::default()
            };
            let heading = crate::sensor::wrap_pi(2.0 * PI * c as f64 / spec.cameras as f64);
            let geometry = ReferenceGeometry::Flat(FlatGeometry {
                width: spec.camera_width,
                height: spec.camera_height,
                heading,
                pitch: 0.0,
                hfov: FRAC_PI_2,
            });
            (render_scene(&scene), geometry)
        })
        .collect();
    let script: Vec<usize> = (0..spec.frames).map(|k| (k / spec.segment_frames) % spec.cameras).collect();
    let views: Vec<Result<(GrayImage, GroundTruth)>> = script
        .par_iter()
        .enumerate()
        .map(|(k, &c)| {
            let (image, geometry) = &cameras[c];
            let params = TruthParams { duration_ms: 2, ..spec.truth };
            let seed = spec.seed.wrapping_mul(7777).wrapping_add(k as u64);
            let (pov, _, truth) = random_view(image, *geometry, Texture::Glyphs, &params, seed)?;
            Ok((pov, truth))
        })
        .collect();
    let mut frames = Vec::with_capacity(spec.frames);
    let mut poses = Vec::with_capacity(spec.frames);
    let mut focus = Vec::with_capacity(spec.frames);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xD21F7);
    let drift_rate = if spec.truth.max_drift_rate > 0.0 {
        rng.random_range(-spec.truth.max_drift_rate..=spec.truth.max_drift_rate)
    } else {
        0.0
    };
    for (k, view) in views.into_iter().enumerate() {
        let (pov, truth) = view?;
        let t = k as i64 * spec.frame_interval_ms;
        let (yaw, pitch) = truth.geometry.unproject(truth.focus);
        let drift = drift_rate * t as f64 / 1000.0;
        let sensed = EulerAngles::new(crate::sensor::wrap_pi(yaw + drift), pitch, 0.0);
        poses.push(HeadPose::from_euler(t, sensed, spec.truth.reliability)?);
        frames.push(Frame {
            timestamp_ms: t,
            image: FrameImage::Memory(Arc::new(pov)),
        });
        focus.push(truth.focus);
    }
    Ok(CameraVideo {
        cameras,
        frames,
        sensors: SensorTrace::new(poses)?,
        script,
        focus,
    })
}

/// Writes `cam<k>.pgm`, `manifest.json` listing the cameras in order,
/// `frames/<ms>.pgm`, `sensors.txt` and the facing camera per frame in `script.txt`.
pub fn write_camera_video(dir: impl AsRef<Path>, video: &CameraVideo) -> Result<()> {
    let dir = dir.as_ref();
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let mut entries = Vec::new();
    for (k, (image, geometry)) in video.cameras.iter().enumerate() {
        let path = dir.join(format!("cam{k}.pgm"));
        save_pgm(image, &path)?;
        entries.push(ReferenceEntry {
            id: format!("cam{k}"),
            image_path: path,
            geometry: *geometry,
            geo: None,
            annotations: Vec::new(),
        });
    }
    crate::corpus::save_corpus(&Corpus::new(entries)?, dir.join("manifest.json"))?;
    for frame in &video.frames {
        save_pgm(&frame.load()?, frames_dir.join(format!("{}.pgm", frame.timestamp_ms)))?;
    }
    video.sensors.save(dir.join("sensors.txt"))?;
    let mut script = String::new();
    for (frame, c) in video.frames.iter().zip(&video.script) {
        let _ = writeln!(script, "{} {c}", frame.timestamp_ms);
    }
    write_text(&dir.join("script.txt"), &script)
}
