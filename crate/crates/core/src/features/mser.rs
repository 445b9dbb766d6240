//! Maximally stable extremal regions.
//!
//! Extremal regions are the connected components (4-connectivity) of the
//! upper level sets `{I >= t}` (bright) or lower level sets `{I <= t}`
//! (dark). They form a component tree which is built bottom-up with a
//! union-find over pixels sorted by intensity.
//!
//! Thresholds are indexed on a ladder of the intensity levels that occur in
//! the image, so `delta` counts ladder steps. Every quantity the detector
//! looks at (ladder positions, areas, pixel order) depends only on the
//! ordering of intensities, which makes the output invariant to any
//! strictly increasing intensity remap.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{GrayImage, Point2};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MserParams {
    /// Half-window of the stability test, in threshold-ladder steps.
    pub delta: usize,
    /// Smallest accepted region, in pixels.
    pub min_area: usize,
    /// Largest accepted region, as a fraction of the image area.
    pub max_area: f64,
    /// Upper bound on the relative area growth across `delta` steps.
    pub max_variation: f64,
    /// Nested stable regions whose areas differ by less than this fraction
    /// are collapsed to the more stable one.
    pub min_diversity: f64,
    pub bright: bool,
    pub dark: bool,
    /// Drop regions containing an image border pixel; their extent is cut
    /// off by the frame and their shape is not repeatable.
    pub exclude_border: bool,
}

impl Default for MserParams {
    fn default() -> Self {
        Self {
            delta: 5,
            min_area: 30,
            max_area: 0.25,
            max_variation: 0.5,
            min_diversity: 0.1,
            bright: true,
            dark: true,
            exclude_border: true,
        }
    }
}

impl MserParams {
    pub fn validate(&self) -> Result<()> {
        if self.delta < 1 {
            return Err(Error::Parameter("mser delta must be >= 1".into()));
        }
        if self.min_area == 0 {
            return Err(Error::Parameter("mser min_area must be > 0".into()));
        }
        if !(self.max_area > 0.0 && self.max_area <= 1.0) {
            return Err(Error::Parameter("mser max_area must be in (0, 1]".into()));
        }
        if !(self.max_variation > 0.0) {
            return Err(Error::Parameter("mser max_variation must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.min_diversity) {
            return Err(Error::Parameter("mser min_diversity must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Region brighter than its outer boundary.
    Bright,
    /// Region darker than its outer boundary.
    Dark,
}

/// Symmetric 2x2 covariance of region pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondMoments {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SecondMoments {
    pub fn determinant(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestRegion {
    pub pixel_count: usize,
    pub centroid: Point2,
    pub second_moments: SecondMoments,
    pub polarity: Polarity,
    /// Threshold defining the region: all its pixels are `>= t` (bright)
    /// or `<= t` (dark).
    pub representative_intensity: u8,
    /// Any pixel of the region; with the threshold it identifies the pixel
    /// set uniquely.
    pub seed: (usize, usize),
    /// Stability score at the defining threshold (lower is more stable).
    pub variation: f64,
}

struct Node {
    ladder: usize,
    area: u64,
    sums: [u64; 5],
    seed: u32,
    parent: u32,
    border: bool,
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    /// Links two roots, returning the surviving root.
    fn link(&mut self, a: u32, b: u32) -> u32 {
        let (big, small) = if self.size[a as usize] >= self.size[b as usize] {
            (a, b)
        } else {
            (b, a)
        };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
        big
    }
}

/// Component tree of the upper level sets of `key`.
struct ComponentTree {
    nodes: Vec<Node>,
    levels: Vec<u8>,
}

fn build_tree(key: &[u8], width: usize, height: usize) -> ComponentTree {
    let n = key.len();
    // counting sort: descending key, ascending index within a level
    let mut counts = [0usize; 256];
    for &k in key {
        counts[k as usize] += 1;
    }
    let mut start = [0usize; 256];
    let mut acc = 0;
    for level in (0..256).rev() {
        start[level] = acc;
        acc += counts[level];
    }
    let mut order = vec![0u32; n];
    let mut cursor = start;
    for (i, &k) in key.iter().enumerate() {
        order[cursor[k as usize]] = i as u32;
        cursor[k as usize] += 1;
    }
    let levels: Vec<u8> = (0..256usize)
        .rev()
        .filter(|&l| counts[l] > 0)
        .map(|l| l as u8)
        .collect();

    let mut uf = UnionFind::new(n);
    let mut added = vec![false; n];
    let mut sums = vec![[0u64; 5]; n];
    let mut border = vec![false; n];
    let mut last_node = vec![NONE; n];
    let mut nodes: Vec<Node> = Vec::new();
    let mut absorbed: Vec<u32> = Vec::new();
    let mut touched: Vec<(u32, u32)> = Vec::new();

    let mut pos = 0;
    for (ladder, &level) in levels.iter().enumerate() {
        let count = counts[level as usize];
        let batch = &order[pos..pos + count];
        pos += count;
        absorbed.clear();
        for &p in batch {
            let (x, y) = (p as usize % width, p as usize / width);
            added[p as usize] = true;
            let (xu, yu) = (x as u64, y as u64);
            sums[p as usize] = [xu, yu, xu * xu, xu * yu, yu * yu];
            border[p as usize] = x == 0 || y == 0 || x + 1 == width || y + 1 == height;
            let mut root = p;
            let neighbors = [
                (x > 0).then(|| p - 1),
                (x + 1 < width).then(|| p + 1),
                (y > 0).then(|| p - width as u32),
                (y + 1 < height).then(|| p + width as u32),
            ];
            for q in neighbors.into_iter().flatten() {
                if !added[q as usize] {
                    continue;
                }
                let rq = uf.find(q);
                if rq == root {
                    continue;
                }
                for r in [root, rq] {
                    let stale = std::mem::replace(&mut last_node[r as usize], NONE);
                    if stale != NONE {
                        absorbed.push(stale);
                    }
                }
                let (sa, sb) = (sums[root as usize], sums[rq as usize]);
                let touches = border[root as usize] || border[rq as usize];
                let merged = uf.link(root, rq);
                sums[merged as usize] = std::array::from_fn(|k| sa[k] + sb[k]);
                border[merged as usize] = touches;
                root = merged;
            }
        }
        // one new node per component that gained pixels at this level
        touched.clear();
        for &p in batch {
            touched.push((uf.find(p), p));
        }
        for &(root, seed) in &touched {
            if last_node[root as usize] != NONE
                && nodes[last_node[root as usize] as usize].ladder == ladder
            {
                continue;
            }
            let s = sums[root as usize];
            last_node[root as usize] = nodes.len() as u32;
            nodes.push(Node {
                ladder,
                area: uf.size[root as usize] as u64,
                sums: s,
                seed,
                parent: NONE,
                border: border[root as usize],
            });
        }
        for &child in &absorbed {
            let root = uf.find(nodes[child as usize].seed);
            nodes[child as usize].parent = last_node[root as usize];
        }
    }
    ComponentTree { nodes, levels }
}

fn detect_polarity(
    image: &GrayImage,
    params: &MserParams,
    polarity: Polarity,
    out: &mut Vec<InterestRegion>,
) {
    let key: Vec<u8> = match polarity {
        Polarity::Bright => image.data().to_vec(),
        Polarity::Dark => image.data().iter().map(|&v| 255 - v).collect(),
    };
    let (width, height) = (image.width(), image.height());
    let tree = build_tree(&key, width, height);
    let k = tree.levels.len();
    if k < 2 {
        return;
    }
    let nodes = &tree.nodes;
    // the bottom rung always yields the whole image; the ladder stops one above it
    let top_rung = k - 2;
    let variation: Vec<f64> = nodes
        .iter()
        .map(|node| {
            if node.parent == NONE {
                return f64::INFINITY;
            }
            let target = (node.ladder + params.delta).min(top_rung);
            let mut a = node;
            while a.parent != NONE && nodes[a.parent as usize].ladder <= target {
                a = &nodes[a.parent as usize];
            }
            (a.area - node.area) as f64 / node.area as f64
        })
        .collect();

    let mut children: Vec<Vec<u32>> = vec![Vec::new(); nodes.len()];
    for (i, node) in nodes.iter().enumerate() {
        if node.parent != NONE {
            children[node.parent as usize].push(i as u32);
        }
    }

    let total = (width * height) as f64;
    let max_area = params.max_area * total;
    let stable: Vec<bool> = nodes
        .iter()
        .enumerate()
        .map(|(i, node)| {
            let v = variation[i];
            node.parent != NONE
                && node.area as usize >= params.min_area
                && node.area as f64 <= max_area
                && v <= params.max_variation
                && v <= variation[node.parent as usize]
                && children[i].iter().all(|&c| v <= variation[c as usize])
        })
        .collect();

    let mut keep = stable.clone();
    for (i, node) in nodes.iter().enumerate() {
        if !stable[i] {
            continue;
        }
        let mut a = node.parent;
        while a != NONE && !stable[a as usize] {
            a = nodes[a as usize].parent;
        }
        if a == NONE {
            continue;
        }
        let outer = &nodes[a as usize];
        let gap = (outer.area - node.area) as f64 / outer.area as f64;
        if gap < params.min_diversity {
            if variation[a as usize] <= variation[i] {
                keep[i] = false;
            } else {
                keep[a as usize] = false;
            }
        }
    }

    for (i, node) in nodes.iter().enumerate() {
        if !keep[i] || (params.exclude_border && node.border) {
            continue;
        }
        let a = node.area as f64;
        let [sx, sy, sxx, sxy, syy] = node.sums.map(|s| s as f64);
        let (cx, cy) = (sx / a, sy / a);
        let level = tree.levels[node.ladder];
        out.push(InterestRegion {
            pixel_count: node.area as usize,
            centroid: Point2::new(cx, cy),
            second_moments: SecondMoments {
                xx: (sxx / a - cx * cx).max(0.0),
                xy: sxy / a - cx * cy,
                yy: (syy / a - cy * cy).max(0.0),
            },
            polarity,
            representative_intensity: match polarity {
                Polarity::Bright => level,
                Polarity::Dark => 255 - level,
            },
            seed: (node.seed as usize % width, node.seed as usize / width),
            variation: variation[i],
        });
    }
}

/// Detects bright and dark maximally stable extremal regions.
///
/// Bright regions come first, then dark ones; within a polarity regions are
/// ordered by the component tree's construction order.
pub fn detect_mser(image: &GrayImage, params: &MserParams) -> Vec<InterestRegion> {
    let mut out = Vec::new();
    if image.width() < 3 || image.height() < 3 {
        return out;
    }
    if params.bright {
        detect_polarity(image, params, Polarity::Bright, &mut out);
    }
    if params.dark {
        detect_polarity(image, params, Polarity::Dark, &mut out);
    }
    out
}

/// Reconstructs a region's pixel set (sorted linear indices) by flood fill
/// from its seed over the defining level set.
pub fn region_pixels(image: &GrayImage, region: &InterestRegion) -> Vec<usize> {
    let (w, h) = (image.width(), image.height());
    let t = region.representative_intensity;
    let inside = |v: u8| match region.polarity {
        Polarity::Bright => v >= t,
        Polarity::Dark => v <= t,
    };
    let data = image.data();
    let seed = region.seed.1 * w + region.seed.0;
    let mut seen = vec![false; w * h];
    let mut stack = vec![seed];
    let mut pixels = Vec::new();
    seen[seed] = true;
    while let Some(p) = stack.pop() {
        pixels.push(p);
        let (x, y) = (p % w, p / w);
        let neighbors = [
            (x > 0).then(|| p - 1),
            (x + 1 < w).then(|| p + 1),
            (y > 0).then(|| p - w),
            (y + 1 < h).then(|| p + w),
        ];
        for q in neighbors.into_iter().flatten() {
            if !seen[q] && inside(data[q]) {
                seen[q] = true;
                stack.push(q);
            }
        }
    }
    pixels.sort_unstable();
    pixels
}

/// Debug dump, one region per line: `cx cy area m11 m12 m22 polarity t`.
pub fn format_regions(regions: &[InterestRegion]) -> String {
    let mut s = String::new();
    for r in regions {
        let pol = match r.polarity {
            Polarity::Bright => "bright",
            Polarity::Dark => "dark",
        };
        let m = &r.second_moments;
        let _ = writeln!(
            s,
            "{:.4} {:.4} {} {:.6} {:.6} {:.6} {} {}",
            r.centroid.x, r.centroid.y, r.pixel_count, m.xx, m.xy, m.yy, pol, r.representative_intensity
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeSet, HashSet};

    /// Brute-force MSER: threshold at every level, label components with a
    /// BFS per threshold, and evaluate stability on the ladder of present
    /// levels. Quadratic, only for tiny images.
    fn brute_force(image: &GrayImage, params: &MserParams) -> Vec<(Polarity, Vec<usize>)> {
        let (w, h) = (image.width(), image.height());
        let mut found = Vec::new();
        for polarity in [Polarity::Bright, Polarity::Dark] {
            let key: Vec<u8> = match polarity {
                Polarity::Bright => image.data().to_vec(),
                Polarity::Dark => image.data().iter().map(|v| 255 - v).collect(),
            };
            let mut levels: Vec<u8> = key.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            levels.reverse();
            let k = levels.len();
            if k < 2 {
                continue;
            }
            // component label per rung
            let label_rung = |t: u8| -> Vec<usize> {
                let mut label = vec![usize::MAX; w * h];
                let mut next = 0;
                for s in 0..w * h {
                    if key[s] < t || label[s] != usize::MAX {
                        continue;
                    }
                    let mut stack = vec![s];
                    label[s] = next;
                    while let Some(p) = stack.pop() {
                        let (x, y) = (p % w, p / w);
                        let mut push = |q: usize| {
                            if key[q] >= t && label[q] == usize::MAX {
                                label[q] = next;
                                stack.push(q);
                            }
                        };
                        if x > 0 { push(p - 1) }
                        if x + 1 < w { push(p + 1) }
                        if y > 0 { push(p - w) }
                        if y + 1 < h { push(p + w) }
                    }
                    next += 1;
                }
                label
            };
            let labels: Vec<Vec<usize>> = levels.iter().map(|&t| label_rung(t)).collect();
            // distinct pixel sets with the rung at which they first appear
            let mut sets: Vec<(usize, Vec<usize>)> = Vec::new();
            let mut seen: HashSet<Vec<usize>> = HashSet::new();
            for (j, lab) in labels.iter().enumerate() {
                let mut comps: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
                for (p, &l) in lab.iter().enumerate() {
                    if l != usize::MAX {
                        comps.entry(l).or_default().push(p);
                    }
                }
                for (_, c) in comps {
                    if seen.insert(c.clone()) {
                        sets.push((j, c));
                    }
                }
            }
            let area_at = |seed: usize, rung: usize| -> usize {
                let l = labels[rung][seed];
                labels[rung].iter().filter(|&&x| x == l).count()
            };
            let var = |j: usize, set: &Vec<usize>| -> f64 {
                if set.len() == w * h {
                    return f64::INFINITY;
                }
                let target = (j + params.delta).min(k - 2);
                (area_at(set[0], target) - set.len()) as f64 / set.len() as f64
            };
            let vars: Vec<f64> = sets.iter().map(|(j, s)| var(*j, s)).collect();
            let parent_of = |i: usize| -> Option<usize> {
                let (j, set) = &sets[i];
                if set.len() == w * h {
                    return None;
                }
                (j + 1..k).find_map(|r| {
                    let l = labels[r][set[0]];
                    let comp: Vec<usize> = (0..w * h).filter(|&p| labels[r][p] == l).collect();
                    (comp.len() > set.len()).then(|| sets.iter().position(|(_, s)| *s == comp).unwrap())
                })
            };
            let parents: Vec<Option<usize>> = (0..sets.len()).map(parent_of).collect();
            let stable: Vec<bool> = (0..sets.len())
                .map(|i| {
                    let n = sets[i].1.len();
                    let Some(p) = parents[i] else { return false };
                    n >= params.min_area
                        && n as f64 <= params.max_area * (w * h) as f64
                        && vars[i] <= params.max_variation
                        && vars[i] <= vars[p]
                        && (0..sets.len()).filter(|&c| parents[c] == Some(i)).all(|c| vars[i] <= vars[c])
                })
                .collect();
            let mut keep = stable.clone();
            for i in 0..sets.len() {
                if !stable[i] {
                    continue;
                }
                let mut a = parents[i];
                while let Some(x) = a {
                    if stable[x] {
                        break;
                    }
                    a = parents[x];
                }
                if let Some(a) = a {
                    let (na, ni) = (sets[a].1.len() as f64, sets[i].1.len() as f64);
                    if (na - ni) / na < params.min_diversity {
                        if vars[a] <= vars[i] { keep[i] = false } else { keep[a] = false }
                    }
                }
            }
            let on_border = |p: &usize| p.is_multiple_of(w) || p / w == 0 || p % w + 1 == w || p / w + 1 == h;
            for i in 0..sets.len() {
                if keep[i] && !(params.exclude_border && sets[i].1.iter().any(on_border)) {
                    found.push((polarity, sets[i].1.clone()));
                }
            }
        }
        found.sort();
        found
    }

    fn pixel_sets(image: &GrayImage, regions: &[InterestRegion]) -> Vec<(Polarity, Vec<usize>)> {
        let mut v: Vec<_> = regions.iter().map(|r| (r.polarity, region_pixels(image, r))).collect();
        v.sort();
        v
    }

    fn patch_image() -> GrayImage {
        GrayImage::from_fn(64, 64, |x, y| {
            if (27..37).contains(&x) && (27..37).contains(&y) { 200 } else { 0 }
        })
    }

    #[test]
    fn constant_image_has_no_regions() {
        assert!(detect_mser(&GrayImage::filled(20, 20, 90), &MserParams::default()).is_empty());
    }

    #[test]
    fn single_bright_patch() {
        let img = patch_image();
        let regions = detect_mser(&img, &MserParams::default());
        assert_eq!(regions.len(), 1);
        let r = &regions[0];
        assert_eq!(r.polarity, Polarity::Bright);
        assert_eq!(r.pixel_count, 100);
        assert_eq!(r.centroid, Point2::new(31.5, 31.5));
        assert_eq!(r.representative_intensity, 200);
        assert_eq!(pixel_sets(&img, &regions), brute_force(&img, &MserParams::default()));
    }

    #[test]
    fn monotone_remap_preserves_patch() {
        let img = patch_image();
        let remapped = img.map(|v| if v == 0 { 17 } else { 18 });
        let a = pixel_sets(&img, &detect_mser(&img, &MserParams::default()));
        let b = pixel_sets(&remapped, &detect_mser(&remapped, &MserParams::default()));
        assert_eq!(a, b);
    }

    #[test]
    fn matches_brute_force_on_small_random_images() {
        use rand::{Rng, SeedableRng};
        for exclude_border in [false, true] {
            let params = MserParams { delta: 2, min_area: 3, max_area: 0.5, exclude_border, ..Default::default() };
            for seed in 0..40 {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let levels = rng.random_range(2..9u8);
                let img = GrayImage::from_fn(9, 8, |_, _| rng.random_range(0..levels) * 30);
                let fast = pixel_sets(&img, &detect_mser(&img, &params));
                assert_eq!(fast, brute_force(&img, &params), "seed {seed}");
            }
        }
    }

    #[test]
    fn regions_are_boundary_extremal_and_connected() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let img = GrayImage::from_fn(48, 40, |x, y| {
            let base = ((x / 8 + y / 6) % 3) as u8 * 70;
            base.saturating_add(rng.random_range(0..20))
        });
        let regions = detect_mser(&img, &MserParams::default());
        assert!(!regions.is_empty());
        let w = img.width();
        for r in &regions {
            let px = region_pixels(&img, r);
            assert_eq!(px.len(), r.pixel_count);
            let set: HashSet<usize> = px.iter().copied().collect();
            for &p in &px {
                let (x, y) = (p % w, p / w);
                let nbrs = [
                    (x > 0).then(|| p - 1),
                    (x + 1 < w).then(|| p + 1),
                    (y > 0).then(|| p - w),
                    (y + 1 < img.height()).then(|| p + w),
                ];
                for q in nbrs.into_iter().flatten() {
                    if set.contains(&q) {
                        continue;
                    }
                    let v = img.data()[q];
                    match r.polarity {
                        Polarity::Bright => assert!(v < r.representative_intensity),
                        Polarity::Dark => assert!(v > r.representative_intensity),
                    }
                }
            }
            let m = r.second_moments;
            assert!(m.xx >= 0.0 && m.yy >= 0.0 && m.determinant() >= -1e-9);
            assert!(r.pixel_count >= 30);
        }
    }

    #[test]
    fn detection_is_deterministic() {
        let img = GrayImage::from_fn(50, 30, |x, y| ((x * 37 + y * 11) % 97) as u8 * 2);
        let a = detect_mser(&img, &MserParams::default());
        let b = detect_mser(&img, &MserParams::default());
        assert_eq!(a, b);
    }

    #[test]
    fn dump_format() {
        let img = patch_image();
        let text = format_regions(&detect_mser(&img, &MserParams::default()));
        assert_eq!(text.lines().count(), 1);
        let fields: Vec<&str> = text.split_whitespace().collect();
        assert_eq!(fields.len(), 8);
        assert_eq!(fields[2], "100");
        assert_eq!(fields[6], "bright");
        assert_eq!(fields[7], "200");
    }

    #[test]
    fn rejects_bad_params() {
        assert!(MserParams { delta: 0, ..Default::default() }.validate().is_err());
        assert!(MserParams { max_area: 1.5, ..Default::default() }.validate().is_err());
        assert!(MserParams::default().validate().is_ok());
    }
}
