use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use egofov::corpus::load_corpus;
use egofov::joint::{
    all_pair_timelines, attribute_exhibit, build_heatmap, count_viewers, group_events, joint_intervals, load_session,
    partition_events, synchronize, Attribution, Floorplan, Interval, ParticipantView, PairTimeline, ReferenceView, Stream,
};
use egofov::pipeline::Localizer;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::localize::Reference;
use crate::output::{write_file, Records};

#[derive(Debug, Args)]
pub struct JointArgs {
    /// Session file listing each person's frames and sensors.
    #[arg(long)]
    pub session: PathBuf,
    /// Corpus manifest used to attribute joint intervals to exhibits.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Group size for pairwise matching; only 2 is supported.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Floorplan JSON; enables the heatmap.
    #[arg(long)]
    pub floorplan: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Extra partition query, e.g. `P1,P4;P2,P3`. Repeatable.
    #[arg(long)]
    pub partition: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    /// JSON object of viewer counts per exhibit; an empty file means none.
    #[arg(long)]
    pub attributions: PathBuf,
    #[arg(long)]
    pub floorplan: PathBuf,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Output image (PPM); per-exhibit counts go next to it as `.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct IntervalRecord<'a> {
    pair: [&'a str; 2],
    start_ms: i64,
    end_ms: i64,
    duration_ms: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    attribution_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    low_confidence: Option<bool>,
}

#[derive(Debug, Serialize)]
struct EventRecord<'a> {
    groups: &'a [Vec<String>],
    timestamp_ms: i64,
}

pub fn parse_partition(spec: &str) -> Result<Vec<Vec<String>>> {
    let groups: Vec<Vec<String>> = spec
        .split(';')
        .map(|g| g.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect())
        .collect();
    if groups.iter().any(Vec::is_empty) {
        bail!("partition `{spec}` has an empty group");
    }
    Ok(groups)
}

fn read_floorplan(path: &Path) -> Result<Floorplan> {
    let text = std::fs::read_to_string(path).with_context(|| format!("floorplan: cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("floorplan {}", path.display()))
}

fn attribute(
    loc: &Localizer,
    config: &RunConfig,
    streams: &[Stream],
    people: [usize; 2],
    interval: &Interval,
    references: &[Reference],
) -> Result<Attribution> {
    let mid = interval.middle_ms();
    let mut frames = Vec::new();
    for p in people {
        let s = &streams[p];
        let Some(f) = s.nearest_frame(mid, config.joint.tolerance_ms) else { continue };
        let frame = &s.frames[f];
        let image = frame.load().with_context(|| format!("{} frame {}", s.person_id, frame.timestamp_ms))?;
        let pose = s.poses.nearest(frame.timestamp_ms, config.joint.sensor_tolerance_ms).cloned();
        frames.push((p, loc.prepare(image, None), pose));
    }
    let views: Vec<ParticipantView> = frames
        .iter()
        .map(|(p, img, pose)| ParticipantView {
            person_id: &streams[*p].person_id,
            frame: img,
            pose: pose.as_ref(),
        })
        .collect();
    let refs: Vec<ReferenceView> = references
        .iter()
        .filter_map(|r| r.entry.as_ref().map(|entry| ReferenceView { entry, prepared: &r.prepared }))
        .collect();
    Ok(attribute_exhibit(loc, &views, &refs)?)
}

fn write_heatmap(counts: &BTreeMap<String, usize>, floorplan: &Floorplan, sigma: f64, out: &Path) -> Result<()> {
    let grid = build_heatmap(counts, floorplan, sigma).context("heatmap")?;
    crate::output::create_parent(out)?;
    grid.save(out).context("heatmap")?;
    write_file(&out.with_extension("txt"), &grid.format_counts())
}

pub fn run(config: &RunConfig, args: JointArgs) -> Result<u8> {
    if args.k != 2 {
        bail!("--k {}: only pairwise matching (k = 2) is supported; larger groups are found from pair timelines", args.k);
    }
    let partitions: Vec<Vec<Vec<String>>> = args.partition.iter().map(|p| parse_partition(p)).collect::<Result<_>>()?;
    let loc = Localizer::new(config.localizer).context("config")?;
    let streams = load_session(&args.session).with_context(|| format!("session {}", args.session.display()))?;
    let samples = synchronize(&streams, config.joint.tick_ms, config.joint.tolerance_ms).context("synchronization")?;
    let timelines = all_pair_timelines(&loc, &streams, &samples, &config.joint).context("pair matching")?;

    let timeline_dir = args.out.join("timelines");
    for t in &timelines {
        write_file(&timeline_dir.join(format!("{}-{}.txt", t.pair.0, t.pair.1)), &t.format())?;
    }

    let references: Vec<Reference> = match &args.corpus {
        Some(m) => {
            let corpus = load_corpus(m).with_context(|| format!("corpus {}", m.display()))?;
            corpus.entries().iter().map(|e| Reference::from_entry(&loc, e)).collect::<Result<_>>()?
        }
        None => Vec::new(),
    };
    let index: BTreeMap<&str, usize> = streams.iter().enumerate().map(|(i, s)| (s.person_id.as_str(), i)).collect();
    let intervals: Vec<(&PairTimeline, Interval)> = timelines
        .iter()
        .flat_map(|t| joint_intervals(t, config.joint.min_duration_ms).into_iter().map(move |iv| (t, iv)))
        .collect();
    let attributions: Vec<Option<Attribution>> = intervals
        .par_iter()
        .map(|(t, iv)| {
            if references.is_empty() {
                return Ok(None);
            }
            let people = [index[t.pair.0.as_str()], index[t.pair.1.as_str()]];
            attribute(&loc, config, &streams, people, iv, &references)
                .with_context(|| format!("attribution {}-{} at {} ms", t.pair.0, t.pair.1, iv.middle_ms()))
                .map(Some)
        })
        .collect::<Result<_>>()?;

    let mut records = Records::open(Some(&args.out.join("intervals.jsonl")))?;
    let mut viewers: Vec<(String, Vec<String>)> = Vec::new();
    for ((t, iv), a) in intervals.iter().zip(&attributions) {
        let label = a.as_ref().and_then(|a| a.label.clone());
        if let Some(l) = &label {
            viewers.push((l.clone(), vec![t.pair.0.clone(), t.pair.1.clone()]));
        }
        records.write(&IntervalRecord {
            pair: [&t.pair.0, &t.pair.1],
            start_ms: iv.start_ms,
            end_ms: iv.end_ms,
            duration_ms: iv.duration_ms(),
            label,
            attribution_score: a.as_ref().map(|a| a.score).filter(|s| s.is_finite()),
            low_confidence: a.as_ref().map(|a| a.low_confidence),
        })?;
    }
    records.finish()?;

    let everyone: Vec<String> = streams.iter().map(|s| s.person_id.clone()).collect();
    let mut queries = vec![vec![everyone.clone()]];
    queries.extend(partitions);
    let mut events = Records::open(Some(&args.out.join("events.jsonl")))?;
    for groups in &queries {
        let times = if groups.len() == 1 {
            group_events(&timelines, &groups[0])
        } else {
            partition_events(&timelines, groups)
        }
        .context("group events")?;
        for timestamp_ms in times {
            events.write(&EventRecord { groups, timestamp_ms })?;
        }
    }
    events.finish()?;

    let counts = count_viewers(viewers.iter().map(|(l, p)| (l.as_str(), p.as_slice())));
    write_file(&args.out.join("attributions.json"), &format!("{}\n", serde_json::to_string_pretty(&counts)?))?;
    if let Some(fp) = &args.floorplan {
        let floorplan = read_floorplan(fp)?;
        write_heatmap(&counts, &floorplan, args.sigma.unwrap_or(config.heatmap_sigma), &args.out.join("heatmap.ppm"))?;
    }
    Ok(0)
}

pub fn heatmap(config: &RunConfig, args: HeatmapArgs) -> Result<u8> {
    let path = &args.attributions;
    let text = std::fs::read_to_string(path).with_context(|| format!("attributions: cannot read {}", path.display()))?;
    let counts: BTreeMap<String, usize> = if text.trim().is_empty() {
        BTreeMap::new()
    } else {
        serde_json::from_str(&text).with_context(|| format!("attributions {}", path.display()))?
    };
    let floorplan = read_floorplan(&args.floorplan)?;
    write_heatmap(&counts, &floorplan, args.sigma.unwrap_or(config.heatmap_sigma), &args.out)?;
    Ok(0)
}
