//! SIFT descriptor of a normalized patch: 4x4 spatial cells by 8
//! orientation bins of Gaussian-weighted gradient magnitude.

use std::f64::consts::PI;

use crate::imaging::GrayImage;

pub const DESCRIPTOR_LEN: usize = 128;
const CELLS: usize = 4;
const BINS: usize = 8;
const CLAMP: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: [f32; DESCRIPTOR_LEN],
    /// Set when the patch had no gradient energy; `values` is then all zero.
    pub degenerate: bool,
}

impl Descriptor {
    pub fn from_values(values: [f32; DESCRIPTOR_LEN]) -> Self {
        let degenerate = values.iter().all(|&v| v == 0.0);
        Self { values, degenerate }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }
}

/// Raw trilinearly-binned histogram, before any normalization.
pub(crate) fn gradient_histogram(patch: &GrayImage) -> [f64; DESCRIPTOR_LEN] {
    let n = patch.width();
    assert_eq!(n, patch.height(), "descriptor patch must be square");
    assert!(n >= 16, "descriptor patch side must be >= 16");
    let mut hist = [0.0f64; DESCRIPTOR_LEN];
    let mid = (n as f64 - 1.0) / 2.0;
    let cell = n as f64 / CELLS as f64;
    let sigma = n as f64 / 2.0;
    let inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
    let at = |x: i64, y: i64| patch.get_edge(x, y, crate::imaging::EdgeMode::Clamp) as f64;
    for y in 0..n {
        for x in 0..n {
            let (xi, yi) = (x as i64, y as i64);
            let gx = at(xi + 1, yi) - at(xi - 1, yi);
            let gy = at(xi, yi + 1) - at(xi, yi - 1);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let dx = x as f64 - mid;
            let dy = y as f64 - mid;
            let weight = mag * (-(dx * dx + dy * dy) * inv_two_sigma2).exp();
            let bx = dx / cell + CELLS as f64 / 2.0 - 0.5;
            let by = dy / cell + CELLS as f64 / 2.0 - 0.5;
            let bo = (gy.atan2(gx) / (2.0 * PI) * BINS as f64).rem_euclid(BINS as f64);
            let (x0, y0, o0) = (bx.floor(), by.floor(), bo.floor());
            let (fx, fy, fo) = (bx - x0, by - y0, bo - o0);
            for (cy, wy) in [(y0 as i64, 1.0 - fy), (y0 as i64 + 1, fy)] {
                if !(0..CELLS as i64).contains(&cy) || wy == 0.0 {
                    continue;
                }
                for (cx, wx) in [(x0 as i64, 1.0 - fx), (x0 as i64 + 1, fx)] {
                    if !(0..CELLS as i64).contains(&cx) || wx == 0.0 {
                        continue;
                    }
                    for (o, wo) in [(o0 as usize % BINS, 1.0 - fo), ((o0 as usize + 1) % BINS, fo)] {
                        let idx = (cy as usize * CELLS + cx as usize) * BINS + o;
                        hist[idx] += weight * wy * wx * wo;
                    }
                }
            }
        }
    }
    hist
}

/// Unit-normalizes and clamps each bin at 0.2. Returns `None` for an
/// all-zero histogram.
pub(crate) fn normalize_and_clamp(hist: &mut [f64; DESCRIPTOR_LEN]) -> Option<()> {
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 1e-12) {
        return None;
    }
    for v in hist.iter_mut() {
        *v = (*v / norm).min(CLAMP);
    }
    Some(())
}

pub fn sift_descriptor(patch: &GrayImage) -> Descriptor {
    let mut hist = gradient_histogram(patch);
    if normalize_and_clamp(&mut hist).is_none() {
        return Descriptor {
            values: [0.0; DESCRIPTOR_LEN],
            degenerate: true,
        };
    }
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut values = [0.0f32; DESCRIPTOR_LEN];
    for (out, v) in values.iter_mut().zip(hist.iter()) {
        *out = (v / norm) as f32;
    }
    Descriptor {
        values,
        degenerate: false,
    }
}
