//! Measurement ellipses for regions and affine patch normalization.

use crate::error::{Error, Result};
use crate::imaging::{round_u8, EdgeMode, GrayImage, Point2};

use super::mser::{InterestRegion, SecondMoments};

/// Ellipse with semi-axes `major >= minor`, major axis at `angle` radians
/// from the +x axis, in `(-pi/2, pi/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: Point2,
    pub major: f64,
    pub minor: f64,
    pub angle: f64,
}

impl Ellipse {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.major * self.minor
    }
}

/// Ellipse with the region's second moments, scaled to the region's area.
pub fn region_ellipse(region: &InterestRegion) -> Result<Ellipse> {
    ellipse_from_moments(region.centroid, &region.second_moments, region.pixel_count as f64)
}

pub fn ellipse_from_moments(center: Point2, m: &SecondMoments, area: f64) -> Result<Ellipse> {
    let det = m.determinant();
    if !(det > 1e-12) || !det.is_finite() {
        return Err(Error::DegenerateRegion);
    }
    let mean = 0.5 * (m.xx + m.yy);
    let half_diff = 0.5 * (m.xx - m.yy);
    let root = half_diff.hypot(m.xy);
    let l1 = mean + root;
    let l2 = mean - root;
    if !(l2 > 0.0) {
        return Err(Error::DegenerateRegion);
    }
    let mut angle = 0.5 * (2.0 * m.xy).atan2(m.xx - m.yy);
    if angle <= -std::f64::consts::FRAC_PI_2 {
        angle += std::f64::consts::PI;
    }
    let k = (area / (std::f64::consts::PI * (l1 * l2).sqrt())).sqrt();
    Ok(Ellipse {
        center,
        major: k * l1.sqrt(),
        minor: k * l2.sqrt(),
        angle,
    })
}

/// Warps the ellipse, dilated by `measurement_scale`, onto a square
/// `patch_size` patch with its major axis along the patch x axis.
pub fn normalize_patch(
    image: &GrayImage,
    ellipse: &Ellipse,
    patch_size: usize,
    measurement_scale: f64,
) -> GrayImage {
    assert!(patch_size >= 8, "patch_size must be >= 8");
    let half = patch_size as f64 / 2.0;
    let mid = (patch_size as f64 - 1.0) / 2.0;
    let (sin, cos) = ellipse.angle.sin_cos();
    let ax = measurement_scale * ellipse.major / half;
    let ay = measurement_scale * ellipse.minor / half;
    GrayImage::from_fn(patch_size, patch_size, |i, j| {
        let lx = (i as f64 - mid) * ax;
        let ly = (j as f64 - mid) * ay;
        let x = ellipse.center.x + cos * lx - sin * ly;
        let y = ellipse.center.y + sin * lx + cos * ly;
        round_u8(image.sample_bilinear(x, y, EdgeMode::Clamp))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::mser::Polarity;
    use crate::imaging::{crop, Window};

    fn region(moments: SecondMoments, area: usize) -> InterestRegion {
        InterestRegion {
            pixel_count: area,
            centroid: Point2::new(10.0, 12.0),
            second_moments: moments,
            polarity: Polarity::Bright,
            representative_intensity: 100,
            seed: (10, 12),
            variation: 0.0,
        }
    }

    #[test]
    fn isotropic_moments_give_circle() {
        let e = region_ellipse(&region(SecondMoments { xx: 3.0, xy: 0.0, yy: 3.0 }, 50)).unwrap();
        assert!((e.major - e.minor).abs() < 1e-12);
        assert_eq!(e.angle, 0.0);
        assert!((e.area() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn square_region_is_near_circle() {
        // 10x10 square: per-axis variance (100 - 1) / 12, no covariance
        let var = 99.0 / 12.0;
        let r = region(SecondMoments { xx: var, xy: 0.0, yy: var }, 100);
        let e = region_ellipse(&r).unwrap();
        assert!((e.major - (100.0 / std::f64::consts::PI).sqrt()).abs() < 1e-9);
        assert_eq!(e.center, r.centroid);
    }

    #[test]
    fn anisotropic_axis_ratio() {
        let e = region_ellipse(&region(SecondMoments { xx: 8.0, xy: 0.0, yy: 2.0 }, 40)).unwrap();
        assert!((e.major / e.minor - 2.0).abs() < 1e-12);
        assert_eq!(e.angle, 0.0);
        let e = region_ellipse(&region(SecondMoments { xx: 2.0, xy: 0.0, yy: 8.0 }, 40)).unwrap();
        assert!((e.angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn degenerate_moments_rejected() {
        let r = region(SecondMoments { xx: 4.0, xy: 2.0, yy: 1.0 }, 40);
        assert!(matches!(region_ellipse(&r), Err(Error::DegenerateRegion)));
    }

    #[test]
    fn constant_image_gives_constant_patch() {
        let img = GrayImage::filled(40, 40, 123);
        let e = Ellipse { center: Point2::new(20.0, 20.0), major: 5.0, minor: 5.0, angle: 0.3 };
        assert_eq!(normalize_patch(&img, &e, 32, 2.0), GrayImage::filled(32, 32, 123));
    }

    #[test]
    fn circle_of_matching_radius_is_a_translation() {
        let img = GrayImage::from_fn(80, 70, |x, y| ((x * 7 + y * 13) % 251) as u8);
        let center = Point2::new(40.5, 30.5);
        let e = Ellipse { center, major: 8.0, minor: 8.0, angle: 0.0 };
        let patch = normalize_patch(&img, &e, 32, 2.0);
        let direct = crop(&img, &Window::new(Point2::new(41.0, 31.0), 32, 32), EdgeMode::Clamp);
        assert_eq!(patch, direct);
    }

    #[test]
    fn elongated_ellipse_compresses_x() {
        // period-8 grating along x; the dilated major axis spans 64 image
        // px over 32 patch columns, 2 px per column
        let img = GrayImage::from_fn(200, 200, |x, _| if (x / 4) % 2 == 0 { 0 } else { 200 });
        let center = Point2::new(100.0, 100.0);
        let e = Ellipse { center, major: 16.0, minor: 8.0, angle: 0.0 };
        let patch = normalize_patch(&img, &e, 32, 2.0);
        let mid = 15.5;
        for i in 0..32 {
            let x = center.x + (i as f64 - mid) * 2.0;
            let expected = round_u8(img.sample_bilinear(x, center.y, EdgeMode::Clamp));
            assert_eq!(patch.get(i, 10), expected, "column {i}");
        }
        // the patch holds two grating periods per 8 patch columns
        assert_eq!(patch.get(1, 0), patch.get(5, 0));
    }
}
