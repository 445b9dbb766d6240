//! Interest regions and local descriptors.

pub mod mser;
pub mod region;
pub mod sift;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imaging::GrayImage;

pub use mser::{detect_mser, region_pixels, InterestRegion, MserParams, Polarity, SecondMoments};
pub use region::{normalize_patch, region_ellipse, Ellipse};
pub use sift::{sift_descriptor, Descriptor, DESCRIPTOR_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    pub mser: MserParams,
    pub patch_size: usize,
    /// Dilation of the region ellipse before normalization.
    pub measurement_scale: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            mser: MserParams::default(),
            patch_size: 32,
            measurement_scale: 2.0,
        }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<()> {
        self.mser.validate()?;
        if self.patch_size < 16 {
            return Err(crate::Error::Parameter("patch_size must be >= 16".into()));
        }
        if !(self.measurement_scale > 0.0) {
            return Err(crate::Error::Parameter("measurement_scale must be > 0".into()));
        }
        Ok(())
    }
}

/// Regions of one image paired index-for-index with their descriptors.
/// Regions with degenerate ellipses are dropped.
#[derive(Debug, Clone, Default)]
pub struct ImageFeatures {
    pub regions: Vec<InterestRegion>,
    pub descriptors: Vec<Descriptor>,
}

impl ImageFeatures {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

pub fn extract_features(image: &GrayImage, params: &FeatureParams) -> ImageFeatures {
    let mut out = ImageFeatures::default();
    for region in detect_mser(image, &params.mser) {
        let Ok(ellipse) = region_ellipse(&region) else {
            continue;
        };
        let patch = normalize_patch(image, &ellipse, params.patch_size, params.measurement_scale);
        out.descriptors.push(sift_descriptor(&patch));
        out.regions.push(region);
    }
    out
}
