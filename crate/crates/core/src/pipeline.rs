//! End-to-end localization of one POV image against one or more references.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureParams, ImageFeatures};
use crate::gist::{
    edge_mode_for, score_against, GistDescriptor, GistExtractor, GistParams, WindowPolicy,
    DEFAULT_ACCEPT_THRESHOLD,
};
use crate::imaging::{GrayImage, Point2};
use crate::matching::{
    build_index, match_descriptors, ransac_affine, DescriptorIndex, MatchResult, RansacParams,
};
use crate::sensor::{alpha_from_reliability, blend_focus, wrap_pi, HeadPose, ReferenceGeometry, DEFAULT_ALPHA_MAX};

/// Diagonal at which `ransac.inlier_threshold` applies unscaled.
pub const THRESHOLD_REFERENCE_DIAGONAL: f64 = 4096.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizerConfig {
    pub features: FeatureParams,
    pub ratio: f64,
    pub ransac: RansacParams,
    /// Lower bound on the diagonal-scaled inlier threshold, pixels.
    pub min_inlier_threshold: f64,
    pub alpha_max: f64,
    pub gist: GistParams,
    pub window: WindowPolicy,
    pub accept_threshold: f64,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            features: FeatureParams::default(),
            ratio: 0.8,
            ransac: RansacParams::default(),
            min_inlier_threshold: 1.0,
            alpha_max: DEFAULT_ALPHA_MAX,
            gist: GistParams::default(),
            window: WindowPolicy::default(),
            accept_threshold: DEFAULT_ACCEPT_THRESHOLD,
        }
    }
}

impl LocalizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.ransac.validate()?;
        self.gist.validate()?;
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::Parameter("ratio must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha_max) {
            return Err(Error::Parameter("alpha_max must be in [0, 1]".into()));
        }
        if !(self.accept_threshold > 0.0) {
            return Err(Error::Parameter("accept_threshold must be > 0".into()));
        }
        if !(self.min_inlier_threshold >= 0.0) {
            return Err(Error::Parameter("min_inlier_threshold must be >= 0".into()));
        }
        if !(self.window.panorama_fraction > 0.0) {
            return Err(Error::Parameter("window.panorama_fraction must be > 0".into()));
        }
        Ok(())
    }

    /// RANSAC inlier threshold for a reference of the given diagonal.
    pub fn inlier_threshold_for(&self, diagonal: f64) -> f64 {
        (self.ransac.inlier_threshold * diagonal / THRESHOLD_REFERENCE_DIAGONAL).max(self.min_inlier_threshold)
    }
}

/// An image with everything the pipeline needs precomputed, usable on
/// either side of a match.
#[derive(Debug, Clone)]
pub struct PreparedImage {
    pub image: GrayImage,
    pub geometry: Option<ReferenceGeometry>,
    pub features: ImageFeatures,
    pub index: Option<DescriptorIndex>,
    pub gist: GistDescriptor,
}

impl PreparedImage {
    pub fn points(&self) -> Vec<Point2> {
        self.features.regions.iter().map(|r| r.centroid).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocusSource {
    /// Vision match, possibly blended with the sensor prediction.
    Vision,
    /// Matching failed; the sensor prediction is used as is.
    SensorOnly,
    /// Neither vision nor sensor produced an estimate; `f` is the reference center.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub f_pov: Point2,
    pub f_ref: Option<Point2>,
    pub f_s: Option<Point2>,
    pub f: Point2,
    pub alpha: f64,
    pub score: f64,
    pub inliers: usize,
    pub accepted: bool,
    pub source: FocusSource,
    /// No sensor pose was available for this frame.
    pub vision_only: bool,
    /// Reason matching failed, if it did.
    pub match_error: Option<String>,
}

pub struct Localizer {
    config: LocalizerConfig,
    gist: GistExtractor,
}

impl std::fmt::Debug for Localizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Localizer").field("config", &self.config).finish()
    }
}

impl Localizer {
    pub fn new(config: LocalizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            gist: GistExtractor::new(config.gist)?,
            config,
        })
    }

    pub fn config(&self) -> &LocalizerConfig {
        &self.config
    }

    pub fn gist(&self) -> &GistExtractor {
        &self.gist
    }

    pub fn prepare(&self, image: GrayImage, geometry: Option<ReferenceGeometry>) -> PreparedImage {
        let features = extract_features(&image, &self.config.features);
        let index = build_index(&features.descriptors).ok();
        let gist = self.gist.describe(&image);
        PreparedImage {
            image,
            geometry,
            features,
            index,
            gist,
        }
    }

    /// Vision-only match of `pov` into `reference`.
    pub fn match_images(&self, pov: &PreparedImage, reference: &PreparedImage) -> Result<MatchResult> {
        let index = reference.index.as_ref().ok_or(Error::InsufficientMatches { found: 0, needed: 3 })?;
        let correspondences = match_descriptors(index, &pov.features.descriptors, self.config.ratio)?;
        let params = RansacParams {
            inlier_threshold: self.config.inlier_threshold_for(reference.image.diagonal()),
            ..self.config.ransac
        };
        let fit = ransac_affine(&correspondences, &pov.points(), &reference.points(), &params)?;
        Ok(MatchResult::from_fit(fit, pov.image.center()))
    }

    /// Sensor-predicted focus for `pose` on the reference, if it has a geometry.
    pub fn sensor_focus(&self, reference: &PreparedImage, pose: &HeadPose) -> Option<Point2> {
        let e = pose.euler();
        reference.geometry.map(|g| g.project(e.yaw, e.pitch))
    }

    /// Full pipeline: match, blend with the sensor focus, score and accept.
    /// `alpha` overrides the reliability-derived blend weight.
    pub fn localize(
        &self,
        pov: &PreparedImage,
        reference: &PreparedImage,
        pose: Option<&HeadPose>,
        alpha: Option<f64>,
    ) -> Result<LocalizationResult> {
        let matched = self.match_images(pov, reference);
        self.finish(pov, reference, matched, pose, alpha)
    }

    /// Completes a localization from an already computed match outcome.
    pub fn finish(
        &self,
        pov: &PreparedImage,
        reference: &PreparedImage,
        matched: Result<MatchResult>,
        pose: Option<&HeadPose>,
        alpha: Option<f64>,
    ) -> Result<LocalizationResult> {
        if let Some(a) = alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Parameter(format!("alpha must be in [0, 1], got {a}")));
            }
        }
        let f_pov = pov.image.center();
        let f_s = pose.and_then(|p| self.sensor_focus(reference, p));
        let wrap = reference.geometry.and_then(|g| g.wrap_width());
        let (f, used_alpha, source, affine, inliers, f_ref, match_error) = match matched {
            Ok(m) => {
                let a = match (f_s, pose) {
                    (Some(_), Some(p)) => alpha.unwrap_or_else(|| alpha_from_reliability(p.reliability, self.config.alpha_max)),
                    _ => 0.0,
                };
                let f = match f_s {
                    Some(fs) => blend_focus(fs, m.f_ref, a, wrap)?,
                    None => m.f_ref,
                };
                (f, a, FocusSource::Vision, Some(m.affine), m.inlier_indices.len(), Some(m.f_ref), None)
            }
            Err(e) => match f_s {
                Some(fs) => (fs, 1.0, FocusSource::SensorOnly, None, 0, None, Some(e.to_string())),
                None => (reference.image.center(), 0.0, FocusSource::None, None, 0, None, Some(e.to_string())),
            },
        };
        let width = self.config.window.window_width(
            &pov.image,
            &reference.image,
            reference.geometry.as_ref(),
            affine.as_ref(),
        );
        let edge = edge_mode_for(reference.geometry.as_ref());
        let score = score_against(&self.gist, &pov.gist, &pov.image, &reference.image, f, width, edge);
        let accepted = source != FocusSource::None && score <= self.config.accept_threshold;
        Ok(LocalizationResult {
            f_pov,
            f_ref,
            f_s,
            f,
            alpha: used_alpha,
            score,
            inliers,
            accepted,
            source,
            vision_only: f_s.is_none(),
            match_error,
        })
    }

    /// Localizes against every candidate and keeps the vision match with the
    /// lowest score (ties to the lower index). Without any vision match the
    /// candidate whose heading is closest to the pose yaw is used.
    pub fn localize_best(
        &self,
        pov: &PreparedImage,
        candidates: &[&PreparedImage],
        pose: Option<&HeadPose>,
        alpha: Option<f64>,
    ) -> Result<(usize, LocalizationResult)> {
        if candidates.is_empty() {
            return Err(Error::Parameter("no reference candidates".into()));
        }
        let mut results = Vec::with_capacity(candidates.len());
        for c in candidates {
            results.push(self.localize(pov, c, pose, alpha)?);
        }
        let best = results
            .iter()
            .enumerate()
            .filter(|(_, r)| r.source == FocusSource::Vision)
            .min_by(|a, b| a.1.score.total_cmp(&b.1.score).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i);
        let index = best.unwrap_or_else(|| {
            let geometries: Vec<_> = candidates.iter().map(|c| c.geometry).collect();
            closest_heading(&geometries, pose.map(|p| p.euler().yaw))
        });
        Ok((index, results.swap_remove(index)))
    }
}

/// Index of the geometry whose heading is angularly closest to `yaw`; 0
/// when there is no yaw or no geometry.
pub fn closest_heading(geometries: &[Option<ReferenceGeometry>], yaw: Option<f64>) -> usize {
    let Some(yaw) = yaw else { return 0 };
    let mut index = 0;
    let mut best = f64::INFINITY;
    for (i, g) in geometries.iter().enumerate() {
        if let Some(g) = g {
            let gap = wrap_pi(yaw - g.heading()).abs();
            if gap < best {
                best = gap;
                index = i;
            }
        }
    }
    index
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{crop, EdgeMode, Window};
    use crate::sensor::{EulerAngles, PanoramaGeometry};
    use rand::{Rng, SeedableRng};

    fn scene(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut img = GrayImage::from_fn(w, h, |x, y| (90 + (x + 2 * y) % 40) as u8);
        for _ in 0..160 {
            let (cx, cy) = (rng.random_range(0..w), rng.random_range(0..h));
            let (rw, rh) = (rng.random_range(4..14), rng.random_range(4..14));
            let v: u8 = if rng.random_bool(0.5) { rng.random_range(0..60) } else { rng.random_range(180..=255) };
            for y in cy..(cy + rh).min(h) {
                for x in cx..(cx + rw).min(w) {
                    img.set(x, y, v);
                }
            }
        }
        img
    }

    fn panorama(w: usize, h: usize) -> Option<ReferenceGeometry> {
        Some(ReferenceGeometry::Panorama(PanoramaGeometry {
            width: w,
            height: h,
            yaw_at_left_edge: 0.0,
        }))
    }

    #[test]
    fn crop_is_localized_exactly() {
        let loc = Localizer::new(LocalizerConfig::default()).unwrap();
        let reference = scene(480, 240, 1);
        let pov = crop(&reference, &Window::new(Point2::new(201.0, 121.0), 160, 120), EdgeMode::Clamp);
        let reference = loc.prepare(reference, panorama(480, 240));
        let pov = loc.prepare(pov, None);
        let r = loc.localize(&pov, &reference, None, None).unwrap();
        assert_eq!(r.source, FocusSource::Vision);
        assert!(r.vision_only);
        assert!(r.f.distance(&Point2::new(201.0, 121.0)) < 1e-6, "{r:?}");
        assert!(r.accepted);
        assert!(r.score <= 1e-6);
    }

    #[test]
    fn alpha_endpoints_and_fallback() {
        let loc = Localizer::new(LocalizerConfig::default()).unwrap();
        let reference = scene(480, 240, 2);
        let pov = crop(&reference, &Window::new(Point2::new(260.0, 100.0), 160, 120), EdgeMode::Clamp);
        let geometry = panorama(480, 240);
        let reference = loc.prepare(reference, geometry);
        let (yaw, pitch) = geometry.unwrap().unproject(Point2::new(270.0, 110.0));
        let pose = HeadPose::from_euler(0, EulerAngles::new(yaw, pitch, 0.0), 1.0).unwrap();
        let pov = loc.prepare(pov, None);

        let r0 = loc.localize(&pov, &reference, Some(&pose), Some(0.0)).unwrap();
        assert_eq!(r0.f, r0.f_ref.unwrap());
        let r1 = loc.localize(&pov, &reference, Some(&pose), Some(1.0)).unwrap();
        assert_eq!(r1.f, r1.f_s.unwrap());
        let rd = loc.localize(&pov, &reference, Some(&pose), None).unwrap();
        assert_eq!(rd.alpha, 0.5);

        let blank = loc.prepare(GrayImage::filled(160, 120, 128), None);
        let fallback = loc.localize(&blank, &reference, Some(&pose), Some(0.0)).unwrap();
        assert_eq!(fallback.source, FocusSource::SensorOnly);
        assert_eq!(fallback.f, fallback.f_s.unwrap());
        assert_eq!(fallback.alpha, 1.0);
        let nothing = loc.localize(&blank, &reference, None, None).unwrap();
        assert_eq!(nothing.source, FocusSource::None);
        assert!(!nothing.accepted);
    }

    #[test]
    fn best_candidate_is_the_one_containing_the_view() {
        let loc = Localizer::new(LocalizerConfig::default()).unwrap();
        let a = loc.prepare(scene(320, 240, 3), None);
        let b_img = scene(320, 240, 4);
        let pov = loc.prepare(crop(&b_img, &Window::new(Point2::new(150.0, 110.0), 160, 120), EdgeMode::Clamp), None);
        let b = loc.prepare(b_img, None);
        let (index, r) = loc.localize_best(&pov, &[&a, &b], None, None).unwrap();
        assert_eq!(index, 1);
        assert!(r.accepted);
    }

    #[test]
    fn closest_heading_rules() {
        let flat = |heading| {
            Some(ReferenceGeometry::Flat(crate::sensor::FlatGeometry {
                width: 10,
                height: 10,
                heading,
                pitch: 0.0,
                hfov: 1.0,
            }))
        };
        assert_eq!(closest_heading(&[flat(0.0), flat(3.0)], Some(-3.0)), 1);
        assert_eq!(closest_heading(&[flat(0.0), flat(3.0)], None), 0);
        assert_eq!(closest_heading(&[None, flat(1.0)], Some(0.0)), 1);
    }

    #[test]
    fn threshold_scaling() {
        let c = LocalizerConfig::default();
        assert_eq!(c.inlier_threshold_for(4096.0), 3.0);
        assert_eq!(c.inlier_threshold_for(8192.0), 6.0);
        assert_eq!(c.inlier_threshold_for(100.0), 1.0);
    }
}
