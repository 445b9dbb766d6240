use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Point2;

/// 2x3 affine map `[a b tx; c d ty]` from POV to reference coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub m: [[f64; 3]; 2],
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    };

    pub fn new(a: f64, b: f64, tx: f64, c: f64, d: f64, ty: f64) -> Self {
        Self {
            m: [[a, b, tx], [c, d, ty]],
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self::new(1.0, 0.0, tx, 0.0, 1.0, ty)
    }

    /// Rotation by `angle` and isotropic `scale` about the origin, then translation.
    pub fn similarity(scale: f64, angle: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(scale * c, -scale * s, tx, scale * s, scale * c, ty)
    }

    pub fn determinant(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn is_valid(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite()) && self.determinant().abs() > 1e-12
    }

    #[inline]
    pub fn apply(&self, p: Point2) -> Point2 {
        let m = &self.m;
        Point2::new(
            m[0][0] * p.x + m[0][1] * p.y + m[0][2],
            m[1][0] * p.x + m[1][1] * p.y + m[1][2],
        )
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &AffineMap) -> AffineMap {
        let a = &self.m;
        let b = &other.m;
        let mut m = [[0.0; 3]; 2];
        for r in 0..2 {
            m[r][0] = a[r][0] * b[0][0] + a[r][1] * b[1][0];
            m[r][1] = a[r][0] * b[0][1] + a[r][1] * b[1][1];
            m[r][2] = a[r][0] * b[0][2] + a[r][1] * b[1][2] + a[r][2];
        }
        AffineMap { m }
    }

    pub fn inverse(&self) -> Option<AffineMap> {
        let det = self.determinant();
        if det.abs() <= 1e-12 {
            return None;
        }
        let [[a, b, tx], [c, d, ty]] = self.m;
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        Some(AffineMap::new(ia, ib, -(ia * tx + ib * ty), ic, id, -(ic * tx + id * ty)))
    }

    /// Geometric-mean scale factor, `sqrt(|det|)`.
    pub fn scale(&self) -> f64 {
        self.determinant().abs().sqrt()
    }

    pub fn residual(&self, from: Point2, to: Point2) -> f64 {
        self.apply(from).distance(&to)
    }
}

/// Exact affine map through three point pairs.
pub fn estimate_affine(pov: [Point2; 3], reference: [Point2; 3]) -> Result<AffineMap> {
    let (p0, p1, p2) = (pov[0], pov[1], pov[2]);
    let (u1, v1) = (p1.x - p0.x, p1.y - p0.y);
    let (u2, v2) = (p2.x - p0.x, p2.y - p0.y);
    let det = u1 * v2 - u2 * v1;
    if !(det.abs() / 2.0 > 1e-9) {
        return Err(Error::DegenerateSample);
    }
    let (q0, q1, q2) = (reference[0], reference[1], reference[2]);
    let (s1, t1) = (q1.x - q0.x, q1.y - q0.y);
    let (s2, t2) = (q2.x - q0.x, q2.y - q0.y);
    // linear part L solves L [u1 u2; v1 v2] = [s1 s2; t1 t2]
    let a = (s1 * v2 - s2 * v1) / det;
    let b = (s2 * u1 - s1 * u2) / det;
    let c = (t1 * v2 - t2 * v1) / det;
    let d = (t2 * u1 - t1 * u2) / det;
    let tx = q0.x - a * p0.x - b * p0.y;
    let ty = q0.y - c * p0.x - d * p0.y;
    Ok(AffineMap::new(a, b, tx, c, d, ty))
}

/// Least-squares affine fit over any number (>= 3) of point pairs.
pub fn fit_affine_least_squares(pairs: &[(Point2, Point2)]) -> Result<AffineMap> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientMatches {
            found: pairs.len(),
            needed: 3,
        });
    }
    let n = pairs.len() as f64;
    let (mut px, mut py, mut qx, mut qy) = (0.0, 0.0, 0.0, 0.0);
    for (p, q) in pairs {
        px += p.x;
        py += p.y;
        qx += q.x;
        qy += q.y;
    }
    let (px, py, qx, qy) = (px / n, py / n, qx / n, qy / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let (mut ux, mut uy, mut vx, mut vy) = (0.0, 0.0, 0.0, 0.0);
    for (p, q) in pairs {
        let (dx, dy) = (p.x - px, p.y - py);
        let (ex, ey) = (q.x - qx, q.y - qy);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        ux += ex * dx;
        uy += ex * dy;
        vx += ey * dx;
        vy += ey * dy;
    }
    let det = sxx * syy - sxy * sxy;
    let scale = (sxx + syy).max(f64::MIN_POSITIVE);
    if !(det > 1e-12 * scale * scale) {
        return Err(Error::DegenerateSample);
    }
    let a = (ux * syy - uy * sxy) / det;
    let b = (uy * sxx - ux * sxy) / det;
    let c = (vx * syy - vy * sxy) / det;
    let d = (vy * sxx - vx * sxy) / det;
    Ok(AffineMap::new(a, b, qx - a * px - b * py, c, d, qy - c * px - d * py))
}

/// `f_ref = A · f_pov`; no clamping or wrapping.
pub fn transfer_focus(affine: &AffineMap, f_pov: Point2) -> Point2 {
    affine.apply(f_pov)
}
