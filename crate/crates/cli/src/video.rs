use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use egofov::corpus::load_corpus;
use egofov::gist::{select_reference, ReferenceCandidate};
use egofov::joint::{list_frames, Frame};
use egofov::pipeline::{LocalizationResult, Localizer};
use egofov::sensor::SensorTrace;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::localize::{load_trace, Reference};
use crate::output::Records;

#[derive(Debug, Args)]
pub struct VideoArgs {
    /// Directory of frames named `<timestamp_ms>.<ext>`.
    #[arg(long)]
    pub frames: PathBuf,
    /// Single reference image.
    #[arg(long = "ref", conflicts_with = "refs", required_unless_present = "refs")]
    pub reference: Option<PathBuf>,
    /// Geometry of `--ref`, as for `localize`.
    #[arg(long, requires = "reference")]
    pub geometry: Option<String>,
    /// Corpus manifest listing the reference streams to select from.
    #[arg(long)]
    pub refs: Option<PathBuf>,
    #[arg(long)]
    pub sensors: Option<PathBuf>,
    /// Use every n-th frame.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Record {
    timestamp_ms: i64,
    frame: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<String>,
    /// Score of the selected reference, when any reference matched.
    #[serde(skip_serializing_if = "Option::is_none")]
    selection_score: Option<f64>,
    /// No reference matched; the one facing the sensor yaw was taken.
    sensor_selected: bool,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    result: Option<LocalizationResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Frames at indices 0, n, 2n, ...
pub fn sample_frames(frames: Vec<Frame>, stride: usize) -> Vec<Frame> {
    frames.into_iter().step_by(stride.max(1)).collect()
}

fn process(
    loc: &Localizer,
    config: &RunConfig,
    references: &[Reference],
    trace: Option<&SensorTrace>,
    frame: &Frame,
    alpha: Option<f64>,
) -> Result<(usize, Option<f64>, bool, LocalizationResult)> {
    let pov = loc.prepare(frame.load().context("frame")?, None);
    let pose = trace.and_then(|t| t.nearest(frame.timestamp_ms, config.joint.sensor_tolerance_ms));
    let mut outcomes: Vec<_> = references.iter().map(|r| loc.match_images(&pov, &r.prepared)).collect();
    let candidates: Vec<ReferenceCandidate> = references
        .iter()
        .zip(&outcomes)
        .map(|(r, m)| ReferenceCandidate {
            image: &r.prepared.image,
            geometry: r.prepared.geometry,
            outcome: m.as_ref().ok().cloned(),
        })
        .collect();
    let selection = select_reference(
        loc.gist(),
        &pov.image,
        &candidates,
        pose.map(|p| p.euler().yaw),
        &config.localizer.window,
    )
    .context("camera selection")?;
    let matched = outcomes.swap_remove(selection.index);
    let result = loc
        .finish(&pov, &references[selection.index].prepared, matched, pose, alpha)
        .context("localization")?;
    Ok((selection.index, selection.score, selection.sensor_only, result))
}

pub fn run(config: &RunConfig, args: VideoArgs) -> Result<u8> {
    if args.stride == 0 {
        bail!("--stride must be at least 1");
    }
    let loc = Localizer::new(config.localizer).context("config")?;
    let references: Vec<Reference> = match (&args.reference, &args.refs) {
        (Some(path), None) => vec![Reference::from_path(&loc, path, args.geometry.as_deref())?],
        (None, Some(manifest)) => {
            let corpus = load_corpus(manifest).with_context(|| format!("references {}", manifest.display()))?;
            corpus.entries().iter().map(|e| Reference::from_entry(&loc, e)).collect::<Result<_>>()?
        }
        _ => bail!("give either --ref or --refs"),
    };
    let trace = load_trace(args.sensors.as_ref())?;
    let frames = list_frames(&args.frames).with_context(|| format!("frames {}", args.frames.display()))?;
    let frames = sample_frames(frames, args.stride);
    let records: Vec<Record> = frames
        .par_iter()
        .map(|frame| {
            let name = match &frame.image {
                egofov::joint::FrameImage::Path(p) => p.display().to_string(),
                _ => frame.timestamp_ms.to_string(),
            };
            match process(&loc, config, &references, trace.as_ref(), frame, args.alpha) {
                Ok((index, score, sensor_selected, result)) => Record {
                    timestamp_ms: frame.timestamp_ms,
                    frame: name,
                    reference_index: Some(index),
                    reference: Some(references[index].name.clone()),
                    selection_score: score,
                    sensor_selected,
                    result: Some(result),
                    error: None,
                },
                Err(e) => Record {
                    timestamp_ms: frame.timestamp_ms,
                    frame: name,
                    reference_index: None,
                    reference: None,
                    selection_score: None,
                    sensor_selected: false,
                    result: None,
                    error: Some(format!("{e:#}")),
                },
            }
        })
        .collect();
    let mut out = Records::open(args.out.as_deref())?;
    for r in &records {
        out.write(r)?;
    }
    out.finish()?;
    Ok(0)
}
