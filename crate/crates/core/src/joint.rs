//! Multi-stream joint attention: synchronization, pairwise timelines,
//! group events, exhibit attribution and floorplan heatmaps.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::ReferenceEntry;
use crate::error::{Error, Result};
use crate::imaging::{load_image, save_ppm, GrayImage, Point2};
use crate::pipeline::{FocusSource, Localizer, PreparedImage};
use crate::sensor::{HeadPose, SensorTrace};

pub const DEFAULT_TICK_MS: i64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointParams {
    pub tick_ms: i64,
    pub tolerance_ms: i64,
    /// Use every `stride`-th synchronized sample.
    pub stride: usize,
    pub joint_threshold: f64,
    pub min_duration_ms: i64,
    /// Pose lookup tolerance when attributing exhibits.
    pub sensor_tolerance_ms: i64,
}

impl Default for JointParams {
    fn default() -> Self {
        Self {
            tick_ms: DEFAULT_TICK_MS,
            tolerance_ms: 500,
            stride: 1,
            joint_threshold: crate::gist::DEFAULT_ACCEPT_THRESHOLD,
            min_duration_ms: 3000,
            sensor_tolerance_ms: 100,
        }
    }
}

impl JointParams {
    pub fn validate(&self) -> Result<()> {
        if self.tick_ms < 1 || self.stride < 1 {
            return Err(Error::Parameter("tick_ms and stride must be >= 1".into()));
        }
        if self.tolerance_ms < 0 || self.min_duration_ms < 0 || self.sensor_tolerance_ms < 0 {
            return Err(Error::Parameter("joint tolerances and durations must be >= 0".into()));
        }
        if !(self.joint_threshold > 0.0) {
            return Err(Error::Parameter("joint_threshold must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum FrameImage {
    Path(PathBuf),
    Memory(Arc<GrayImage>),
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub timestamp_ms: i64,
    pub image: FrameImage,
}

impl Frame {
    pub fn load(&self) -> Result<GrayImage> {
        match &self.image {
            FrameImage::Path(p) => load_image(p),
            FrameImage::Memory(img) => Ok((**img).clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stream {
    pub person_id: String,
    pub frames: Vec<Frame>,
    pub poses: SensorTrace,
}

impl Stream {
    pub fn new(person_id: impl Into<String>, frames: Vec<Frame>, poses: SensorTrace) -> Result<Self> {
        let person_id = person_id.into();
        if let Some(w) = frames.windows(2).find(|w| w[1].timestamp_ms <= w[0].timestamp_ms) {
            return Err(Error::Session(format!(
                "stream `{person_id}`: frame timestamps must increase ({} after {})",
                w[1].timestamp_ms, w[0].timestamp_ms
            )));
        }
        Ok(Self { person_id, frames, poses })
    }

    /// Index of the frame nearest `t` within `tolerance_ms`; ties go to the earlier frame.
    pub fn nearest_frame(&self, t: i64, tolerance_ms: i64) -> Option<usize> {
        let i = self.frames.partition_point(|f| f.timestamp_ms < t);
        [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter(|&k| k < self.frames.len())
            .map(|k| ((self.frames[k].timestamp_ms - t).abs(), k))
            .filter(|&(d, _)| d <= tolerance_ms)
            .min()
            .map(|(_, k)| k)
    }
}

/// Frames whose file stem is an integer millisecond timestamp, sorted.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<Frame>> {
    let dir = dir.as_ref();
    let mut frames = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        let Ok(timestamp_ms) = stem.parse::<i64>() else { continue };
        frames.push(Frame {
            timestamp_ms,
            image: FrameImage::Path(path),
        });
    }
    frames.sort_by_key(|f| f.timestamp_ms);
    if let Some(w) = frames.windows(2).find(|w| w[0].timestamp_ms == w[1].timestamp_ms) {
        return Err(Error::Session(format!("duplicate frame timestamp {} in {}", w[0].timestamp_ms, dir.display())));
    }
    Ok(frames)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionStream {
    person_id: String,
    frames: PathBuf,
    #[serde(default)]
    sensors: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionFile {
    streams: Vec<SessionStream>,
}

/// Reads a session file: `{"streams": [{"person_id", "frames", "sensors"?}]}`,
/// paths relative to the session file.
pub fn load_session(path: impl AsRef<Path>) -> Result<Vec<Stream>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SessionFile = serde_json::from_str(&text).map_err(|e| Error::Session(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut ids = BTreeSet::new();
    let mut streams = Vec::new();
    for s in file.streams {
        if !ids.insert(s.person_id.clone()) {
            return Err(Error::Session(format!("duplicate person_id `{}`", s.person_id)));
        }
        let frames = list_frames(base.join(&s.frames))?;
        let poses = match &s.sensors {
            Some(p) => SensorTrace::load(base.join(p))?,
            None => SensorTrace::default(),
        };
        streams.push(Stream::new(s.person_id, frames, poses)?);
    }
    if streams.len() < 2 {
        return Err(Error::Session(format!("need at least 2 streams, found {}", streams.len())));
    }
    Ok(streams)
}

/// One synchronized instant: per stream, the matched frame index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedSample {
    pub timestamp_ms: i64,
    pub frames: Vec<Option<usize>>,
}

fn quantize(t: i64, tick: i64) -> i64 {
    (t + tick / 2).div_euclid(tick) * tick
}

/// Samples at the union of all frame timestamps rounded to `tick_ms`.
pub fn synchronize(streams: &[Stream], tick_ms: i64, tolerance_ms: i64) -> Result<Vec<AlignedSample>> {
    if streams.len() < 2 {
        return Err(Error::Session(format!("need at least 2 streams, found {}", streams.len())));
    }
    if tick_ms < 1 {
        return Err(Error::Parameter("tick_ms must be >= 1".into()));
    }
    let times: BTreeSet<i64> = streams
        .iter()
        .flat_map(|s| s.frames.iter().map(|f| quantize(f.timestamp_ms, tick_ms)))
        .collect();
    Ok(times
        .into_iter()
        .map(|t| AlignedSample {
            timestamp_ms: t,
            frames: streams.iter().map(|s| s.nearest_frame(t, tolerance_ms)).collect(),
        })
        .collect())
}

/// Frames used by the selected samples, prepared once and shared.
#[derive(Debug, Default)]
pub struct PreparedFrames {
    frames: HashMap<(usize, usize), PreparedImage>,
}

impl PreparedFrames {
    pub fn get(&self, stream: usize, frame: usize) -> Option<&PreparedImage> {
        self.frames.get(&(stream, frame))
    }
}

/// Every `stride`-th sample, starting with the first.
pub fn strided(samples: &[AlignedSample], stride: usize) -> Vec<AlignedSample> {
    samples.iter().step_by(stride.max(1)).cloned().collect()
}

pub fn prepare_frames(localizer: &Localizer, streams: &[Stream], samples: &[AlignedSample]) -> Result<PreparedFrames> {
    let keys: BTreeSet<(usize, usize)> = samples
        .iter()
        .flat_map(|s| s.frames.iter().enumerate().filter_map(|(i, f)| f.map(|f| (i, f))))
        .collect();
    let prepared = keys
        .into_par_iter()
        .map(|(s, f)| {
            let image = streams[s].frames[f].load()?;
            Ok(((s, f), localizer.prepare(image, None)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedFrames {
        frames: prepared.into_iter().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub timestamp_ms: i64,
    /// Best score over the two match directions; infinite when neither matched.
    pub score: f64,
    pub joint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTimeline {
    pub pair: (String, String),
    pub samples: Vec<PairSample>,
}

impl PairTimeline {
    /// `timestamp_ms score joint` records, one per line.
    pub fn format(&self) -> String {
        let mut s = String::new();
        for p in &self.samples {
            let _ = writeln!(s, "{} {} {}", p.timestamp_ms, p.score, u8::from(p.joint));
        }
        s
    }
}

fn direction(localizer: &Localizer, pov: &PreparedImage, reference: &PreparedImage, threshold: f64) -> Option<f64> {
    let r = localizer.localize(pov, reference, None, None).ok()?;
    (r.source == FocusSource::Vision).then_some(r.score).filter(|&s| s <= threshold)
}

/// Timeline for streams `i` and `j`. Each sample is joint when either
/// direction (i as POV against j, or j against i) matches and scores at or
/// below the threshold.
pub fn pairwise_match(
    localizer: &Localizer,
    streams: &[Stream],
    prepared: &PreparedFrames,
    samples: &[AlignedSample],
    i: usize,
    j: usize,
    joint_threshold: f64,
) -> PairTimeline {
    let samples = samples
        .par_iter()
        .map(|s| {
            let frames = (s.frames[i].and_then(|f| prepared.get(i, f)), s.frames[j].and_then(|f| prepared.get(j, f)));
            let score = match frames {
                (Some(a), Some(b)) => [direction(localizer, a, b, joint_threshold), direction(localizer, b, a, joint_threshold)]
                    .into_iter()
                    .flatten()
                    .min_by(f64::total_cmp),
                _ => None,
            };
            PairSample {
                timestamp_ms: s.timestamp_ms,
                score: score.unwrap_or(f64::INFINITY),
                joint: score.is_some(),
            }
        })
        .collect();
    PairTimeline {
        pair: (streams[i].person_id.clone(), streams[j].person_id.clone()),
        samples,
    }
}

/// All `n(n-1)/2` pair timelines in lexicographic pair order.
pub fn all_pair_timelines(
    localizer: &Localizer,
    streams: &[Stream],
    samples: &[AlignedSample],
    params: &JointParams,
) -> Result<Vec<PairTimeline>> {
    params.validate()?;
    let samples = strided(samples, params.stride);
    let prepared = prepare_frames(localizer, streams, &samples)?;
    let n = streams.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    Ok(pairs
        .into_par_iter()
        .map(|(i, j)| pairwise_match(localizer, streams, &prepared, &samples, i, j, params.joint_threshold))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start_ms: i64,
    pub end_ms: i64,
}

impl Interval {
    pub fn duration_ms(&self) -> i64 {
        self.end_ms - self.start_ms
    }

    pub fn middle_ms(&self) -> i64 {
        self.start_ms + self.duration_ms() / 2
    }
}

/// Maximal runs of joint samples. A single non-joint sample between two
/// joint ones is bridged; runs spanning less than `min_duration_ms` are dropped.
pub fn joint_intervals(timeline: &PairTimeline, min_duration_ms: i64) -> Vec<Interval> {
    let mut out = Vec::new();
    let mut run: Option<Interval> = None;
    let mut gap = 0usize;
    let close = |run: Interval, out: &mut Vec<Interval>| {
        if run.duration_ms() >= min_duration_ms {
            out.push(run);
        }
    };
    for s in &timeline.samples {
        if s.joint {
            run = Some(match run {
                Some(r) => Interval { end_ms: s.timestamp_ms, ..r },
                None => Interval { start_ms: s.timestamp_ms, end_ms: s.timestamp_ms },
            });
            gap = 0;
        } else if let Some(r) = run {
            gap += 1;
            if gap > 1 {
                close(r, &mut out);
                run = None;
            }
        }
    }
    if let Some(r) = run {
        close(r, &mut out);
    }
    out
}

fn pair_table(timelines: &[PairTimeline]) -> BTreeMap<(String, String), BTreeMap<i64, bool>> {
    let mut table = BTreeMap::new();
    for t in timelines {
        let key = ordered(&t.pair.0, &t.pair.1);
        let flags: BTreeMap<i64, bool> = t.samples.iter().map(|s| (s.timestamp_ms, s.joint)).collect();
        table.insert(key, flags);
    }
    table
}

fn ordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Partition query: timestamps where every pair inside each group is joint
/// and every pair across groups is not. A single group is the full-group query.
pub fn partition_events(timelines: &[PairTimeline], groups: &[Vec<String>]) -> Result<Vec<i64>> {
    let table = pair_table(timelines);
    let lookup = |a: &str, b: &str| {
        table
            .get(&ordered(a, b))
            .ok_or_else(|| Error::Session(format!("no timeline for pair ({a}, {b})")))
    };
    let mut within = Vec::new();
    let mut across = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        for (k, a) in g.iter().enumerate() {
            for b in &g[k + 1..] {
                within.push(lookup(a, b)?);
            }
            for h in &groups[gi + 1..] {
                for b in h {
                    across.push(lookup(a, b)?);
                }
            }
        }
    }
    let Some(first) = within.first().or(across.first()) else {
        return Ok(Vec::new());
    };
    Ok(first
        .keys()
        .copied()
        .filter(|t| {
            within.iter().all(|m| m.get(t) == Some(&true)) && across.iter().all(|m| m.get(t) != Some(&true))
        })
        .collect())
}

/// Timestamps at which every pair within `group` is joint.
pub fn group_events(timelines: &[PairTimeline], group: &[String]) -> Result<Vec<i64>> {
    if group.len() < 2 {
        return Err(Error::Parameter("a group needs at least 2 people".into()));
    }
    partition_events(timelines, &[group.to_vec()])
}

/// One participant's view at the attributed instant.
#[derive(Debug, Clone, Copy)]
pub struct ParticipantView<'a> {
    pub person_id: &'a str,
    pub frame: &'a PreparedImage,
    pub pose: Option<&'a HeadPose>,
}

#[derive(Debug, Clone, Copy)]
pub struct ReferenceView<'a> {
    pub entry: &'a ReferenceEntry,
    pub prepared: &'a PreparedImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vote {
    pub person_id: String,
    pub reference_id: Option<String>,
    pub label: Option<String>,
    pub score: f64,
    pub accepted: bool,
    pub focus: Point2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    /// `None` when no participant produced an accepted, annotated localization.
    pub label: Option<String>,
    pub score: f64,
    pub low_confidence: bool,
    pub votes: Vec<Vote>,
}

/// Localizes each participant against the candidate references and takes
/// the majority annotation label over accepted localizations; ties go to
/// the label with the lowest score.
pub fn attribute_exhibit(
    localizer: &Localizer,
    views: &[ParticipantView<'_>],
    references: &[ReferenceView<'_>],
) -> Result<Attribution> {
    if views.is_empty() {
        return Err(Error::Parameter("attribution needs at least one participant".into()));
    }
    if references.is_empty() {
        return Err(Error::Parameter("attribution needs at least one reference".into()));
    }
    let candidates: Vec<&PreparedImage> = references.iter().map(|r| r.prepared).collect();
    let mut votes = Vec::with_capacity(views.len());
    for v in views {
        let (index, result) = localizer.localize_best(v.frame, &candidates, v.pose, None)?;
        let entry = references[index].entry;
        let label = result
            .accepted
            .then(|| entry.annotation_at(result.f).map(|a| a.label.clone()))
            .flatten();
        votes.push(Vote {
            person_id: v.person_id.to_string(),
            reference_id: Some(entry.id.clone()),
            label,
            score: result.score,
            accepted: result.accepted,
            focus: result.f,
        });
    }
    let mut tally: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for v in &votes {
        if let Some(l) = &v.label {
            let e = tally.entry(l.as_str()).or_insert((0, f64::INFINITY));
            e.0 += 1;
            e.1 = e.1.min(v.score);
        }
    }
    let winner = tally
        .iter()
        .min_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.total_cmp(&b.1 .1)).then(a.0.cmp(b.0)));
    let low_confidence = votes.iter().any(|v| !v.accepted) || winner.is_none();
    Ok(Attribution {
        label: winner.map(|(l, _)| l.to_string()),
        score: winner.map_or(f64::INFINITY, |(_, s)| s.1),
        low_confidence,
        votes,
    })
}

/// Distinct viewers per exhibit: each person counts once per label.
pub fn count_viewers<'a>(attributions: impl IntoIterator<Item = (&'a str, &'a [String])>) -> BTreeMap<String, usize> {
    let mut seen: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    for (label, people) in attributions {
        seen.entry(label.to_string())
            .or_default()
            .extend(people.iter().map(String::as_str));
    }
    seen.into_iter().map(|(k, v)| (k, v.len())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exhibit {
    pub id: String,
    pub position: Point2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Floorplan {
    pub width: usize,
    pub height: usize,
    pub exhibits: Vec<Exhibit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub exhibits: Vec<(Exhibit, usize)>,
}

/// Sum of unit-peak Gaussians at exhibit positions, each scaled by its
/// viewer count. Cell `(x, y)` is evaluated at its integer coordinate.
pub fn build_heatmap(counts: &BTreeMap<String, usize>, floorplan: &Floorplan, sigma: f64) -> Result<HeatmapGrid> {
    if !(sigma > 0.0) {
        return Err(Error::Parameter("heatmap sigma must be > 0".into()));
    }
    if floorplan.width == 0 || floorplan.height == 0 {
        return Err(Error::Parameter("floorplan must be at least 1x1".into()));
    }
    let (w, h) = (floorplan.width, floorplan.height);
    for e in &floorplan.exhibits {
        let p = e.position;
        if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= (w - 1) as f64 && p.y <= (h - 1) as f64) {
            return Err(Error::Parameter(format!("exhibit `{}` lies outside the floorplan", e.id)));
        }
    }
    let exhibits: Vec<(Exhibit, usize)> = floorplan
        .exhibits
        .iter()
        .map(|e| (e.clone(), counts.get(&e.id).copied().unwrap_or(0)))
        .collect();
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut values = vec![0.0; w * h];
    for (e, count) in &exhibits {
        if *count == 0 {
            continue;
        }
        let c = *count as f64;
        for (y, row) in values.chunks_mut(w).enumerate() {
            let dy = y as f64 - e.position.y;
            for (x, v) in row.iter_mut().enumerate() {
                let dx = x as f64 - e.position.x;
                *v += c * (-(dx * dx + dy * dy) * inv).exp();
            }
        }
    }
    Ok(HeatmapGrid {
        width: w,
        height: h,
        values,
        exhibits,
    })
}

impl HeatmapGrid {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Coordinates and value of the largest cell (first in row-major order).
    pub fn max_cell(&self) -> (usize, usize, f64) {
        let (i, v) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        (i % self.width, i / self.width, v)
    }

    /// Black-red-yellow-white ramp over `[0, max]`.
    pub fn render_rgb(&self) -> Vec<u8> {
        let max = self.max_cell().2;
        let mut rgb = Vec::with_capacity(self.values.len() * 3);
        for &v in &self.values {
            let t = if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 };
            rgb.extend_from_slice(&heat_ramp(t));
        }
        rgb
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_ppm(self.width, self.height, &self.render_rgb(), path)
    }

    /// `id x y count` sidecar records.
    pub fn format_counts(&self) -> String {
        let mut s = String::new();
        for (e, c) in &self.exhibits {
            let _ = writeln!(s, "{} {} {} {}", e.id, e.position.x, e.position.y, c);
        }
        s
    }
}

pub fn heat_ramp(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * 3.0;
    let ch = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    [ch(t), ch(t - 1.0), ch(t - 2.0)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(id: &str, times: &[i64]) -> Stream {
        let img = Arc::new(GrayImage::filled(4, 4, 0));
        let frames = times
            .iter()
            .map(|&t| Frame { timestamp_ms: t, image: FrameImage::Memory(img.clone()) })
            .collect();
        Stream::new(id, frames, SensorTrace::default()).unwrap()
    }

    fn timeline(pair: (&str, &str), flags: &[bool]) -> PairTimeline {
        PairTimeline {
            pair: (pair.0.into(), pair.1.into()),
            samples: flags
                .iter()
                .enumerate()
                .map(|(i, &j)| PairSample {
                    timestamp_ms: i as i64 * 1000,
                    score: if j { 0.1 } else { f64::INFINITY },
                    joint: j,
                })
                .collect(),
        }
    }

    #[test]
    fn synchronization_examples() {
        let t: Vec<i64> = (0..10).map(|i| i * 1000).collect();
        let s = synchronize(&[stream("a", &t), stream("b", &t)], 1000, 500).unwrap();
        assert!(s.iter().enumerate().all(|(i, x)| x.frames == vec![Some(i), Some(i)]));

        let shifted: Vec<i64> = t.iter().map(|x| x + 200).collect();
        let s = synchronize(&[stream("a", &t), stream("b", &shifted)], 1000, 500).unwrap();
        assert_eq!(s.len(), 10);
        assert!(s.iter().enumerate().all(|(i, x)| x.frames == vec![Some(i), Some(i)]));

        let gappy: Vec<i64> = t.iter().copied().filter(|&x| !(2000..=7000).contains(&x)).collect();
        let s = synchronize(&[stream("a", &t), stream("b", &gappy)], 1000, 500).unwrap();
        for x in &s {
            assert_eq!(x.frames[1].is_none(), (2000..=7000).contains(&x.timestamp_ms));
        }
        assert!(matches!(synchronize(&[stream("a", &t)], 1000, 500), Err(Error::Session(_))));
    }

    #[test]
    fn frame_timestamps_must_increase() {
        let img = Arc::new(GrayImage::filled(2, 2, 0));
        let f = |t| Frame { timestamp_ms: t, image: FrameImage::Memory(img.clone()) };
        assert!(Stream::new("x", vec![f(10), f(10)], SensorTrace::default()).is_err());
    }

    #[test]
    fn interval_examples() {
        assert!(joint_intervals(&timeline(("a", "b"), &[false; 8]), 3000).is_empty());
        let ten = joint_intervals(&timeline(("a", "b"), &[true; 10]), 3000);
        assert_eq!(ten, vec![Interval { start_ms: 0, end_ms: 9000 }]);
        assert_eq!(ten[0].duration_ms(), 9000);
        let bridged = joint_intervals(&timeline(("a", "b"), &[true, true, false, true, true]), 3000);
        assert_eq!(bridged, vec![Interval { start_ms: 0, end_ms: 4000 }]);
        let split = joint_intervals(&timeline(("a", "b"), &[true, true, true, true, false, false, true, true, true, true]), 3000);
        assert_eq!(split.len(), 2);
        let short = joint_intervals(&timeline(("a", "b"), &[true, true, true, false, false]), 3000);
        assert!(short.is_empty());
    }

    #[test]
    fn intervals_are_ordered_disjoint_and_long_enough() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let flags: Vec<bool> = (0..60).map(|_| rng.random_bool(0.6)).collect();
            let iv = joint_intervals(&timeline(("a", "b"), &flags), 3000);
            for w in iv.windows(2) {
                assert!(w[0].end_ms < w[1].start_ms);
            }
            assert!(iv.iter().all(|i| i.duration_ms() >= 3000));
        }
    }

    fn four_people(joint_at: impl Fn(&str, &str, usize) -> bool) -> Vec<PairTimeline> {
        let ids = ["P1", "P2", "P3", "P4"];
        let mut out = Vec::new();
        for i in 0..4 {
            for j in i + 1..4 {
                let flags: Vec<bool> = (0..5).map(|t| joint_at(ids[i], ids[j], t)).collect();
                out.push(timeline((ids[i], ids[j]), &flags));
            }
        }
        out
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn group_and_partition_events() {
        let tl = four_people(|a, b, t| match t {
            1 => true,
            3 => matches!((a, b), ("P1", "P4") | ("P2", "P3")),
            _ => false,
        });
        assert_eq!(tl.len(), 6);
        let all = names(&["P1", "P2", "P3", "P4"]);
        assert_eq!(group_events(&tl, &all).unwrap(), vec![1000]);
        let split = [names(&["P1", "P4"]), names(&["P2", "P3"])];
        assert_eq!(partition_events(&tl, &split).unwrap(), vec![3000]);
        let none = four_people(|_, _, _| false);
        assert!(group_events(&none, &all).unwrap().is_empty());
        assert!(group_events(&tl, &names(&["P1", "P9"])).is_err());
    }

    fn floorplan() -> Floorplan {
        Floorplan {
            width: 100,
            height: 60,
            exhibits: vec![
                Exhibit { id: "a".into(), position: Point2::new(20.0, 30.0) },
                Exhibit { id: "b".into(), position: Point2::new(70.0, 30.0) },
            ],
        }
    }

    #[test]
    fn heatmap_examples() {
        let zero = build_heatmap(&BTreeMap::new(), &floorplan(), 5.0).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
        assert!(zero.render_rgb().iter().all(|&c| c == 0));

        let single = build_heatmap(&BTreeMap::from([("a".to_string(), 4)]), &floorplan(), 5.0).unwrap();
        assert_eq!(single.max_cell(), (20, 30, 4.0));

        let sigma = 8.0;
        let two = build_heatmap(&BTreeMap::from([("a".to_string(), 1), ("b".to_string(), 3)]), &floorplan(), sigma).unwrap();
        let kernel_a_at_b = (-(50.0f64 * 50.0) / (2.0 * sigma * sigma)).exp();
        assert!(two.get(70, 30) >= 3.0 * kernel_a_at_b);
        assert_eq!((two.max_cell().0, two.max_cell().1), (70, 30));
        assert!(build_heatmap(&BTreeMap::new(), &floorplan(), 0.0).is_err());
    }

    #[test]
    fn heatmap_mass() {
        let sigma = 4.0;
        let g = build_heatmap(&BTreeMap::from([("a".to_string(), 2), ("b".to_string(), 5)]), &floorplan(), sigma).unwrap();
        let total: f64 = g.values.iter().sum();
        let expected = 7.0 * 2.0 * std::f64::consts::PI * sigma * sigma;
        assert!((total - expected).abs() / expected < 0.01, "{total} vs {expected}");
    }

    #[test]
    fn distinct_viewer_counting() {
        let a = names(&["P1", "P2"]);
        let b = names(&["P2", "P1"]);
        let c = names(&["P3"]);
        let counts = count_viewers([("x", a.as_slice()), ("x", b.as_slice()), ("y", c.as_slice())]);
        assert_eq!(counts, BTreeMap::from([("x".to_string(), 2), ("y".to_string(), 1)]));
    }

    #[test]
    fn ramp_is_monotone() {
        let mut prev = heat_ramp(0.0);
        assert_eq!(prev, [0, 0, 0]);
        for k in 1..=100 {
            let c = heat_ramp(k as f64 / 100.0);
            assert!(c.iter().zip(&prev).all(|(a, b)| a >= b));
            prev = c;
        }
        assert_eq!(prev, [255, 255, 255]);
    }
}
