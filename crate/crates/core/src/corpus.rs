//! Reference corpus: manifest loading, nearest-reference lookup by location
//! and annotated-region queries.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{image_dimensions, Point2};
use crate::sensor::{FlatGeometry, PanoramaGeometry, ReferenceGeometry};

pub const EARTH_RADIUS_KM: f64 = 6371.0;
pub const DEFAULT_FLAT_HFOV_DEG: f64 = 90.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

/// Great-circle distance in kilometres.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedRegion {
    pub label: String,
    pub polygon: Vec<Point2>,
    #[serde(default)]
    pub info: String,
}

impl AnnotatedRegion {
    pub fn area(&self) -> f64 {
        polygon_area(&self.polygon)
    }

    /// Even-odd containment; points on the boundary count as inside.
    pub fn contains(&self, p: Point2) -> bool {
        polygon_contains(&self.polygon, p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceEntry {
    pub id: String,
    pub image_path: PathBuf,
    pub geometry: ReferenceGeometry,
    pub geo: Option<GeoPoint>,
    pub annotations: Vec<AnnotatedRegion>,
}

impl ReferenceEntry {
    /// Smallest annotation containing `f`. Panorama polygons are also tested
    /// one width to either side so that wrapped outlines match.
    pub fn annotation_at(&self, f: Point2) -> Option<&AnnotatedRegion> {
        annotation_at(self, f)
    }
}

pub fn annotation_at(entry: &ReferenceEntry, f: Point2) -> Option<&AnnotatedRegion> {
    let shifts: &[f64] = match entry.geometry {
        ReferenceGeometry::Panorama(g) => &[0.0, g.width as f64, -(g.width as f64)],
        ReferenceGeometry::Flat(_) => &[0.0],
    };
    let mut best: Option<(&AnnotatedRegion, f64)> = None;
    for a in &entry.annotations {
        let hit = shifts.iter().any(|dx| a.contains(Point2::new(f.x + dx, f.y)));
        if hit {
            let area = a.area();
            if best.is_none_or(|(_, b)| area < b) {
                best = Some((a, area));
            }
        }
    }
    best.map(|(a, _)| a)
}

pub fn polygon_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum();
    twice.abs() / 2.0
}

fn on_segment(p: Point2, a: Point2, b: Point2) -> bool {
    let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    let len = a.distance(&b).max(1.0);
    cross.abs() <= 1e-9 * len
        && p.x >= a.x.min(b.x) - 1e-9
        && p.x <= a.x.max(b.x) + 1e-9
        && p.y >= a.y.min(b.y) - 1e-9
        && p.y <= a.y.max(b.y) + 1e-9
}

pub fn polygon_contains(poly: &[Point2], p: Point2) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + n - 1) % n]);
        if on_segment(p, a, b) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(a, c, d))
        || (d2 == 0.0 && on_segment(b, c, d))
        || (d3 == 0.0 && on_segment(c, a, b))
        || (d4 == 0.0 && on_segment(d, a, b))
}

/// No two non-adjacent edges touch and the polygon has non-zero area.
pub fn polygon_is_simple(poly: &[Point2]) -> bool {
    let n = poly.len();
    if n < 3 || polygon_area(poly) <= 0.0 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// Immutable set of reference entries sorted by id, with a latitude-ordered
/// index over the geo-tagged ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    entries: Vec<ReferenceEntry>,
    geo_index: Vec<usize>,
}

impl Corpus {
    pub fn new(mut entries: Vec<ReferenceEntry>) -> Result<Self> {
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = entries.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Manifest(format!("duplicate entry id `{}`", w[0].id)));
        }
        for e in &entries {
            validate_entry(e)?;
        }
        let mut geo_index: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].geo.is_some()).collect();
        geo_index.sort_by(|&a, &b| {
            let (ga, gb) = (entries[a].geo.unwrap(), entries[b].geo.unwrap());
            ga.lat.total_cmp(&gb.lat).then(a.cmp(&b))
        });
        Ok(Self { entries, geo_index })
    }

    pub fn entries(&self) -> &[ReferenceEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, id: &str) -> Option<&ReferenceEntry> {
        self.entries
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn geo_tagged(&self) -> impl Iterator<Item = &ReferenceEntry> {
        self.geo_index.iter().map(|&i| &self.entries[i])
    }

    /// Entry with the smallest great-circle distance; ties go to the
    /// smallest id.
    pub fn nearest_reference(&self, lat: f64, lon: f64) -> Result<&ReferenceEntry> {
        if self.geo_index.is_empty() {
            return Err(Error::Lookup("corpus has no geo-tagged entries".into()));
        }
        let q = GeoPoint { lat, lon };
        let start = self
            .geo_index
            .partition_point(|&i| self.entries[i].geo.unwrap().lat < lat);
        let mut best: Option<(f64, usize)> = None;
        let mut consider = |i: usize| -> bool {
            let g = self.entries[i].geo.unwrap();
            // any point at this latitude gap is at least this far away
            let bound = EARTH_RADIUS_KM * (g.lat - lat).abs().to_radians();
            if best.is_some_and(|(d, _)| bound > d) {
                return false;
            }
            let d = haversine_km(q, g);
            let better = match best {
                None => true,
                Some((bd, bi)) => d < bd || (d == bd && i < bi),
            };
            if better {
                best = Some((d, i));
            }
            true
        };
        for &i in &self.geo_index[start..] {
            if !consider(i) {
                break;
            }
        }
        for &i in self.geo_index[..start].iter().rev() {
            if !consider(i) {
                break;
            }
        }
        Ok(&self.entries[best.unwrap().1])
    }

    /// The `k` closest geo-tagged entries, nearest first.
    pub fn nearest_k(&self, lat: f64, lon: f64, k: usize) -> Result<Vec<&ReferenceEntry>> {
        if self.geo_index.is_empty() {
            return Err(Error::Lookup("corpus has no geo-tagged entries".into()));
        }
        let q = GeoPoint { lat, lon };
        let mut scored: Vec<(f64, usize)> = self
            .geo_index
            .iter()
            .map(|&i| (haversine_km(q, self.entries[i].geo.unwrap()), i))
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(scored.into_iter().take(k.max(1)).map(|(_, i)| &self.entries[i]).collect())
    }
}

fn validate_entry(e: &ReferenceEntry) -> Result<()> {
    let bad = |msg: String| Error::Entry { id: e.id.clone(), msg };
    if e.id.is_empty() {
        return Err(Error::Manifest("entry with empty id".into()));
    }
    let (w, h) = (e.geometry.width() as f64, e.geometry.height() as f64);
    if w < 1.0 || h < 1.0 {
        return Err(bad("image has zero size".into()));
    }
    if let ReferenceGeometry::Flat(g) = e.geometry {
        if !(g.hfov > 0.0 && g.hfov < std::f64::consts::PI) {
            return Err(bad(format!("hfov must be in (0, 180) degrees, got {}", g.hfov.to_degrees())));
        }
    }
    if let Some(g) = e.geo {
        if !(-90.0..=90.0).contains(&g.lat) || !(-180.0..=180.0).contains(&g.lon) {
            return Err(bad(format!("geo ({}, {}) out of range", g.lat, g.lon)));
        }
    }
    let x_range = if e.geometry.is_panorama() { (-w, 2.0 * w) } else { (0.0, w) };
    for a in &e.annotations {
        if a.polygon.len() < 3 {
            return Err(bad(format!("annotation `{}` needs at least 3 vertices", a.label)));
        }
        if let Some(p) = a
            .polygon
            .iter()
            .find(|p| !p.is_finite() || p.x < x_range.0 || p.x > x_range.1 || p.y < 0.0 || p.y > h)
        {
            return Err(bad(format!("annotation `{}` vertex ({}, {}) outside image", a.label, p.x, p.y)));
        }
        if !polygon_is_simple(&a.polygon) {
            return Err(bad(format!("annotation `{}` polygon is not simple", a.label)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Kind {
    Panorama,
    Flat,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    entries: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    id: String,
    image: PathBuf,
    kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    yaw_at_left_edge_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    heading_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pitch_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hfov_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    geo: Option<GeoPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    annotations: Vec<AnnotatedRegion>,
}

/// Degrees value that converts back to exactly `radians`, when one exists
/// (always the case for angles that came from degrees).
fn exact_degrees(radians: f64) -> f64 {
    let mut d = radians.to_degrees();
    for _ in 0..8 {
        let r = d.to_radians();
        if r == radians {
            break;
        }
        d = if r < radians { d.next_up() } else { d.next_down() };
    }
    d
}

fn entry_from_manifest(m: ManifestEntry, base: &Path) -> Result<ReferenceEntry> {
    let bad = |msg: String| Error::Entry { id: m.id.clone(), msg };
    let image_path = if m.image.is_absolute() { m.image.clone() } else { base.join(&m.image) };
    let (width, height) = image_dimensions(&image_path).map_err(|e| bad(e.to_string()))?;
    let geometry = match m.kind {
        Kind::Panorama => {
            let yaw = m
                .yaw_at_left_edge_deg
                .ok_or_else(|| bad("panorama entry needs yaw_at_left_edge_deg".into()))?;
            if m.heading_deg.is_some() || m.hfov_deg.is_some() || m.pitch_deg.is_some() {
                return Err(bad("panorama entry takes no heading/pitch/hfov".into()));
            }
            ReferenceGeometry::Panorama(PanoramaGeometry {
                width,
                height,
                yaw_at_left_edge: yaw.to_radians(),
            })
        }
        Kind::Flat => {
            let heading = m.heading_deg.ok_or_else(|| bad("flat entry needs heading_deg".into()))?;
            if m.yaw_at_left_edge_deg.is_some() {
                return Err(bad("flat entry takes no yaw_at_left_edge_deg".into()));
            }
            ReferenceGeometry::Flat(FlatGeometry {
                width,
                height,
                heading: heading.to_radians(),
                pitch: m.pitch_deg.unwrap_or(0.0).to_radians(),
                hfov: m.hfov_deg.unwrap_or(DEFAULT_FLAT_HFOV_DEG).to_radians(),
            })
        }
    };
    Ok(ReferenceEntry {
        id: m.id,
        image_path,
        geometry,
        geo: m.geo,
        annotations: m.annotations,
    })
}

fn entry_to_manifest(e: &ReferenceEntry, base: &Path) -> ManifestEntry {
    let image = e
        .image_path
        .strip_prefix(base)
        .map(Path::to_path_buf)
        .unwrap_or_else(|_| e.image_path.clone());
    let mut m = ManifestEntry {
        id: e.id.clone(),
        image,
        kind: Kind::Flat,
        yaw_at_left_edge_deg: None,
        heading_deg: None,
        pitch_deg: None,
        hfov_deg: None,
        geo: e.geo,
        annotations: e.annotations.clone(),
    };
    match e.geometry {
        ReferenceGeometry::Panorama(g) => {
            m.kind = Kind::Panorama;
            m.yaw_at_left_edge_deg = Some(exact_degrees(g.yaw_at_left_edge));
        }
        ReferenceGeometry::Flat(g) => {
            m.heading_deg = Some(exact_degrees(g.heading));
            m.pitch_deg = Some(exact_degrees(g.pitch));
            m.hfov_deg = Some(exact_degrees(g.hfov));
        }
    }
    m
}

/// Parses manifest text. Relative image paths resolve against `base`.
pub fn parse_corpus(text: &str, base: &Path) -> Result<Corpus> {
    let file: ManifestFile = serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
    let mut seen = BTreeSet::new();
    for e in &file.entries {
        if !seen.insert(e.id.as_str()) {
            return Err(Error::Manifest(format!("duplicate entry id `{}`", e.id)));
        }
    }
    let entries = file
        .entries
        .into_iter()
        .map(|m| entry_from_manifest(m, base))
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(entries)
}

pub fn load_corpus(manifest_path: impl AsRef<Path>) -> Result<Corpus> {
    let path = manifest_path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_corpus(&text, base)
}

/// Serializes the corpus; image paths under the manifest's directory are
/// written relative to it.
pub fn format_corpus(corpus: &Corpus, base: &Path) -> String {
    let file = ManifestFile {
        entries: corpus.entries.iter().map(|e| entry_to_manifest(e, base)).collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("manifest serializes");
    s.push('\n');
    s
}

pub fn save_corpus(corpus: &Corpus, manifest_path: impl AsRef<Path>) -> Result<()> {
    let path = manifest_path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    std::fs::write(path, format_corpus(corpus, base)).map_err(|e| Error::io(path, e))
}
