//! Global GIST descriptors and the localization score.
//!
//! The descriptor is the grid-averaged magnitude of a bank of analytic
//! Gabor filters (log-Gaussian radial profile, Gaussian angular profile)
//! applied in the frequency domain to a contrast-normalized,
//! square-resized copy of the image.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{crop, resize_bilinear, EdgeMode, GrayImage, Point2, Window};
use crate::matching::{AffineMap, MatchResult};
use crate::sensor::{wrap_pi, ReferenceGeometry};

const NORM_EPS: f64 = 1e-3;
const HIGHEST_FREQUENCY: f64 = 0.25;
const RADIAL_SIGMA: f64 = 0.35;
const ANGULAR_SPREAD: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GistParams {
    pub canonical_size: usize,
    pub scales: usize,
    pub orientations: usize,
    pub grid: usize,
}

impl Default for GistParams {
    fn default() -> Self {
        Self {
            canonical_size: 128,
            scales: 4,
            orientations: 8,
            grid: 4,
        }
    }
}

impl GistParams {
    pub fn descriptor_len(&self) -> usize {
        self.scales * self.orientations * self.grid * self.grid
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales == 0 || self.orientations == 0 || self.grid == 0 {
            return Err(Error::Parameter("gist counts must be >= 1".into()));
        }
        if self.canonical_size < 16 || self.canonical_size < self.grid {
            return Err(Error::Parameter("gist canonical_size too small".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GistDescriptor {
    pub values: Vec<f64>,
}

impl GistDescriptor {
    /// L2 distance between the unit-normalized descriptors. All-zero
    /// descriptors stay zero.
    pub fn distance(&self, other: &GistDescriptor) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "descriptor lengths differ");
        let na = norm(&self.values);
        let nb = norm(&other.values);
        let inv = |n: f64| if n > 0.0 { 1.0 / n } else { 0.0 };
        let (ia, ib) = (inv(na), inv(nb));
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                let d = a * ia - b * ib;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Precomputed filter bank for one parameter set. Immutable and shareable.
pub struct GistExtractor {
    params: GistParams,
    padded: usize,
    pad: usize,
    filters: Vec<Vec<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GistExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GistExtractor").field("params", &self.params).finish()
    }
}

impl GistExtractor {
    pub fn new(params: GistParams) -> Result<Self> {
        params.validate()?;
        let n = params.canonical_size;
        let pad = n / 4;
        let m = n + 2 * pad;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let mut filters = Vec::with_capacity(params.scales * params.orientations);
        let angular_sigma = ANGULAR_SPREAD * PI / params.orientations as f64;
        let freq = |i: usize| {
            let k = if i < m.div_ceil(2) { i as f64 } else { i as f64 - m as f64 };
            k / m as f64
        };
        for s in 0..params.scales {
            let center = HIGHEST_FREQUENCY / 2f64.powi(s as i32);
            for o in 0..params.orientations {
                let theta = o as f64 * PI / params.orientations as f64;
                let mut h = vec![0.0; m * m];
                for v in 0..m {
                    let fy = freq(v);
                    for u in 0..m {
                        let fx = freq(u);
                        let r = fx.hypot(fy);
                        if r == 0.0 {
                            continue;
                        }
                        let radial = (r / center).ln();
                        let dtheta = wrap_pi(fy.atan2(fx) - theta);
                        h[v * m + u] = (-radial * radial / (2.0 * RADIAL_SIGMA * RADIAL_SIGMA)
                            - dtheta * dtheta / (2.0 * angular_sigma * angular_sigma))
                            .exp();
                    }
                }
                filters.push(h);
            }
        }
        Ok(Self {
            params,
            padded: m,
            pad,
            filters,
            forward,
            inverse,
        })
    }

    pub fn params(&self) -> &GistParams {
        &self.params
    }

    pub fn describe(&self, image: &GrayImage) -> GistDescriptor {
        let n = self.params.canonical_size;
        let resized = resize_bilinear(image, n, n);
        let normalized = contrast_normalize(&resized);
        let m = self.padded;
        let mut spectrum: Vec<Complex<f64>> = (0..m * m)
            .map(|i| {
                let x = reflect(i % m, self.pad, n);
                let y = reflect(i / m, self.pad, n);
                Complex::new(normalized[y * n + x], 0.0)
            })
            .collect();
        fft2(&mut spectrum, m, &self.forward);

        let g = self.params.grid;
        let mut values = Vec::with_capacity(self.params.descriptor_len());
        let mut work = vec![Complex::new(0.0, 0.0); m * m];
        let bounds: Vec<usize> = (0..=g).map(|i| i * n / g).collect();
        for filter in &self.filters {
            for (w, (s, h)) in work.iter_mut().zip(spectrum.iter().zip(filter)) {
                *w = s * *h;
            }
            fft2(&mut work, m, &self.inverse);
            let scale = 1.0 / (m * m) as f64;
            for cy in 0..g {
                for cx in 0..g {
                    let mut sum = 0.0;
                    for y in bounds[cy]..bounds[cy + 1] {
                        let row = (y + self.pad) * m + self.pad;
                        for x in bounds[cx]..bounds[cx + 1] {
                            sum += work[row + x].norm();
                        }
                    }
                    let cells = (bounds[cy + 1] - bounds[cy]) * (bounds[cx + 1] - bounds[cx]);
                    values.push(sum * scale / cells as f64);
                }
            }
        }
        GistDescriptor { values }
    }
}

fn reflect(i: usize, pad: usize, n: usize) -> usize {
    let k = i as i64 - pad as i64;
    let period = 2 * n as i64;
    let r = k.rem_euclid(period);
    (if r < n as i64 { r } else { period - 1 - r }) as usize
}

fn fft2(data: &mut [Complex<f64>], m: usize, fft: &Arc<dyn Fft<f64>>) {
    for row in data.chunks_mut(m) {
        fft.process(row);
    }
    let mut column = vec![Complex::new(0.0, 0.0); m];
    for x in 0..m {
        for y in 0..m {
            column[y] = data[y * m + x];
        }
        fft.process(&mut column);
        for y in 0..m {
            data[y * m + x] = column[y];
        }
    }
}

/// Subtracts the local mean and divides by local standard deviation + eps,
/// on intensities scaled to `[0, 1]`.
fn contrast_normalize(image: &GrayImage) -> Vec<f64> {
    let (w, h) = (image.width(), image.height());
    let sigma = (w.max(h) as f64 / 32.0).max(1.0);
    let values: Vec<f64> = image.data().iter().map(|&v| v as f64 / 255.0).collect();
    let mean = gaussian_blur(&values, w, h, sigma);
    let centered: Vec<f64> = values.iter().zip(&mean).map(|(v, m)| v - m).collect();
    let sq: Vec<f64> = centered.iter().map(|c| c * c).collect();
    let var = gaussian_blur(&sq, w, h, sigma);
    centered
        .iter()
        .zip(&var)
        .map(|(c, v)| c / (v.max(0.0).sqrt() + NORM_EPS))
        .collect()
}

fn gaussian_blur(values: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / total).collect();
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (ki, k) in kernel.iter().enumerate() {
                    let off = ki as i64 - radius;
                    let (sx, sy) = if horizontal {
                        ((x as i64 + off).clamp(0, w as i64 - 1) as usize, y)
                    } else {
                        (x, (y as i64 + off).clamp(0, h as i64 - 1) as usize)
                    };
                    acc += k * src[sy * w + sx];
                }
                out[y * w + x] = acc;
            }
        }
        out
    };
    pass(&pass(values, true), false)
}

/// How the match window's extent in the reference is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowPolicy {
    /// Size the window by the estimated affine scale when a match exists.
    pub from_affine: bool,
    /// Window width as a fraction of panorama width otherwise.
    pub panorama_fraction: f64,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        Self {
            from_affine: true,
            panorama_fraction: 0.25,
        }
    }
}

impl WindowPolicy {
    /// Window width in reference pixels; the height follows the POV aspect.
    pub fn window_width(
        &self,
        pov: &GrayImage,
        reference: &GrayImage,
        geometry: Option<&ReferenceGeometry>,
        affine: Option<&AffineMap>,
    ) -> usize {
        let width = match affine {
            Some(a) if self.from_affine && a.is_valid() => pov.width() as f64 * a.scale(),
            _ => match geometry {
                Some(ReferenceGeometry::Panorama(_)) => reference.width() as f64 * self.panorama_fraction,
                _ => pov.width() as f64,
            },
        };
        (width.round() as usize).clamp(1, 4 * reference.width().max(pov.width()))
    }
}

/// The match window `W_ref` centered on `f`.
pub fn match_window(pov: &GrayImage, f: Point2, width: usize) -> Window {
    let height = ((width as f64 * pov.height() as f64 / pov.width() as f64).round() as usize).max(1);
    Window::new(f, width, height)
}

/// GIST distance between the POV image and the reference window around `f`.
pub fn localization_score(
    extractor: &GistExtractor,
    pov: &GrayImage,
    reference: &GrayImage,
    f: Point2,
    window_width: usize,
    edge: EdgeMode,
) -> f64 {
    let q_pov = extractor.describe(pov);
    score_against(extractor, &q_pov, pov, reference, f, window_width, edge)
}

/// As [`localization_score`] with a precomputed POV descriptor.
pub fn score_against(
    extractor: &GistExtractor,
    q_pov: &GistDescriptor,
    pov: &GrayImage,
    reference: &GrayImage,
    f: Point2,
    window_width: usize,
    edge: EdgeMode,
) -> f64 {
    let window = match_window(pov, f, window_width);
    let q_ref = extractor.describe(&crop(reference, &window, edge));
    q_pov.distance(&q_ref)
}

/// Accept iff `score <= threshold` (inclusive).
pub fn accept(score: f64, threshold: f64) -> bool {
    score <= threshold
}

pub const DEFAULT_ACCEPT_THRESHOLD: f64 = 0.55;

/// One reference stream offered for camera selection.
#[derive(Debug, Clone)]
pub struct ReferenceCandidate<'a> {
    pub image: &'a GrayImage,
    pub geometry: Option<ReferenceGeometry>,
    /// `None` when matching against this reference failed.
    pub outcome: Option<MatchResult>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub index: usize,
    /// Score of the selected candidate, when it matched.
    pub score: Option<f64>,
    /// No candidate matched; chosen by heading only.
    pub sensor_only: bool,
}

/// Picks the matched candidate with the lowest localization score (ties to
/// the lower index). With no match at all, falls back to the candidate whose
/// heading is angularly closest to `pose_yaw`.
pub fn select_reference(
    extractor: &GistExtractor,
    pov: &GrayImage,
    candidates: &[ReferenceCandidate<'_>],
    pose_yaw: Option<f64>,
    policy: &WindowPolicy,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::Parameter("select_reference needs at least one candidate".into()));
    }
    let q_pov = extractor.describe(pov);
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let Some(m) = &c.outcome else { continue };
        let width = policy.window_width(pov, c.image, c.geometry.as_ref(), Some(&m.affine));
        let edge = edge_mode_for(c.geometry.as_ref());
        let score = score_against(extractor, &q_pov, pov, c.image, m.f_ref, width, edge);
        if best.is_none_or(|(_, s)| score < s) {
            best = Some((i, score));
        }
    }
    if let Some((index, score)) = best {
        return Ok(Selection {
            index,
            score: Some(score),
            sensor_only: false,
        });
    }
    let geometries: Vec<_> = candidates.iter().map(|c| c.geometry).collect();
    let index = crate::pipeline::closest_heading(&geometries, pose_yaw);
    Ok(Selection {
        index,
        score: None,
        sensor_only: true,
    })
}

pub fn edge_mode_for(geometry: Option<&ReferenceGeometry>) -> EdgeMode {
    match geometry {
        Some(g) if g.is_panorama() => EdgeMode::WrapX,
        _ => EdgeMode::Clamp,
    }
}
