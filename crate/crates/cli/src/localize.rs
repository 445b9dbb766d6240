use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use egofov::corpus::{load_corpus, ReferenceEntry, DEFAULT_FLAT_HFOV_DEG};
use egofov::imaging::{load_image, GrayImage, Point2};
use egofov::pipeline::{FocusSource, LocalizationResult, Localizer, PreparedImage};
use egofov::sensor::{FlatGeometry, HeadPose, PanoramaGeometry, ReferenceGeometry, SensorTrace};
use egofov::synth::read_times;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::Records;

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    /// POV image.
    #[arg(long, required_unless_present = "dataset", conflicts_with = "dataset")]
    pub pov: Option<PathBuf>,
    /// Reference image.
    #[arg(long = "ref", conflicts_with = "corpus")]
    pub reference: Option<PathBuf>,
    /// Geometry of `--ref`: `panorama:<yaw at left edge>` or
    /// `flat:<heading>[:<pitch>[:<hfov>]]`, degrees. Needed for sensor fusion.
    #[arg(long, requires = "reference")]
    pub geometry: Option<String>,
    /// Corpus manifest; the reference is the entry nearest to `--lat/--lon`.
    #[arg(long, requires_all = ["lat", "lon"])]
    pub corpus: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub lat: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lon: Option<f64>,
    /// Score the N nearest corpus entries and keep the best.
    #[arg(long, default_value_t = 1)]
    pub candidates: usize,
    /// Sensor trace (`timestamp_ms r11 .. r33 reliability` per line).
    #[arg(long)]
    pub sensors: Option<PathBuf>,
    /// POV capture time; defaults to the numeric file stem.
    #[arg(long)]
    pub time: Option<i64>,
    /// Fixed blend weight instead of the reliability-derived one.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Print the info text of the annotation at the focus.
    #[arg(long)]
    pub show_info: bool,
    /// Synthetic dataset directory: localize every pair in it.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output records (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Record<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<&'a str>,
    pov: String,
    reference: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp_ms: Option<i64>,
    #[serde(flatten)]
    result: &'a LocalizationResult,
    /// Same frame localized without the sensor pose.
    #[serde(skip_serializing_if = "Option::is_none")]
    f_without: Option<Point2>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    info: Option<String>,
}

pub fn parse_geometry(spec: &str, image: &GrayImage) -> Result<ReferenceGeometry> {
    let mut parts = spec.split(':');
    let kind = parts.next().unwrap_or_default();
    let values: Vec<f64> = parts
        .map(|p| p.trim().parse::<f64>().map_err(|_| anyhow!("bad number `{p}` in geometry `{spec}`")))
        .collect::<Result<_>>()?;
    let (width, height) = (image.width(), image.height());
    match (kind, values.as_slice()) {
        ("panorama", [yaw]) => Ok(ReferenceGeometry::Panorama(PanoramaGeometry {
            width,
            height,
            yaw_at_left_edge: yaw.to_radians(),
        })),
        ("flat", [heading, rest @ ..]) if rest.len() <= 2 => {
            let hfov = rest.get(1).copied().unwrap_or(DEFAULT_FLAT_HFOV_DEG);
            if !(hfov > 0.0 && hfov < 180.0) {
                bail!("hfov must be in (0, 180) degrees, got {hfov}");
            }
            Ok(ReferenceGeometry::Flat(FlatGeometry {
                width,
                height,
                heading: heading.to_radians(),
                pitch: rest.first().copied().unwrap_or(0.0).to_radians(),
                hfov: hfov.to_radians(),
            }))
        }
        _ => bail!("geometry must be `panorama:<yaw>` or `flat:<heading>[:<pitch>[:<hfov>]]`, got `{spec}`"),
    }
}

/// Timestamp encoded in a file stem such as `frames/1200.pgm`.
pub fn stem_timestamp(path: &Path) -> Option<i64> {
    path.file_stem()?.to_str()?.parse().ok()
}

pub struct Reference {
    pub name: String,
    pub entry: Option<ReferenceEntry>,
    pub prepared: PreparedImage,
}

impl Reference {
    pub fn from_entry(loc: &Localizer, entry: &ReferenceEntry) -> Result<Self> {
        let image = load_image(&entry.image_path).with_context(|| format!("reference `{}`", entry.id))?;
        Ok(Self {
            name: entry.id.clone(),
            prepared: loc.prepare(image, Some(entry.geometry)),
            entry: Some(entry.clone()),
        })
    }

    pub fn from_path(loc: &Localizer, path: &Path, geometry: Option<&str>) -> Result<Self> {
        let image = load_image(path).with_context(|| format!("reference {}", path.display()))?;
        let geometry = geometry.map(|g| parse_geometry(g, &image)).transpose().context("reference geometry")?;
        Ok(Self {
            name: path.display().to_string(),
            entry: None,
            prepared: loc.prepare(image, geometry),
        })
    }
}

pub fn load_trace(path: Option<&PathBuf>) -> Result<Option<SensorTrace>> {
    path.map(|p| SensorTrace::load(p).with_context(|| format!("sensors {}", p.display())))
        .transpose()
}

struct Outcome {
    index: usize,
    result: LocalizationResult,
    f_without: Option<Point2>,
}

fn localize_one(
    loc: &Localizer,
    pov: &PreparedImage,
    references: &[Reference],
    pose: Option<&HeadPose>,
    alpha: Option<f64>,
) -> Result<Outcome> {
    let candidates: Vec<&PreparedImage> = references.iter().map(|r| &r.prepared).collect();
    let (index, result) = loc.localize_best(pov, &candidates, pose, alpha).context("localization")?;
    let f_without = match pose {
        Some(_) => Some(loc.localize(pov, candidates[index], None, None).context("localization")?.f),
        None => None,
    };
    Ok(Outcome { index, result, f_without })
}

fn annotation(reference: &Reference, result: &LocalizationResult) -> (Option<String>, Option<String>) {
    if !result.accepted {
        return (None, None);
    }
    match reference.entry.as_ref().and_then(|e| e.annotation_at(result.f)) {
        Some(a) => (Some(a.label.clone()), Some(a.info.clone())),
        None => (None, None),
    }
}

fn exit_code(result: &LocalizationResult) -> u8 {
    if result.accepted && result.source == FocusSource::Vision {
        0
    } else {
        2
    }
}

pub fn run(config: &RunConfig, args: LocalizeArgs) -> Result<u8> {
    let loc = Localizer::new(config.localizer).context("config")?;
    if let Some(dir) = &args.dataset {
        return run_dataset(config, &loc, dir, &args);
    }
    let pov_path = args.pov.as_ref().expect("clap requires --pov without --dataset");
    let references: Vec<Reference> = match (&args.reference, &args.corpus) {
        (Some(path), None) => vec![Reference::from_path(&loc, path, args.geometry.as_deref())?],
        (None, Some(manifest)) => {
            anyhow::ensure!(args.candidates >= 1, "--candidates must be at least 1");
            let corpus = load_corpus(manifest).with_context(|| format!("corpus {}", manifest.display()))?;
            let (lat, lon) = (args.lat.unwrap_or_default(), args.lon.unwrap_or_default());
            let nearest = corpus.nearest_k(lat, lon, args.candidates).context("corpus lookup")?;
            nearest.into_iter().map(|e| Reference::from_entry(&loc, e)).collect::<Result<_>>()?
        }
        _ => bail!("give either --ref or --corpus with --lat/--lon"),
    };
    let pov_image = load_image(pov_path).with_context(|| format!("POV {}", pov_path.display()))?;
    let pov = loc.prepare(pov_image, None);
    let trace = load_trace(args.sensors.as_ref())?;
    let timestamp = args.time.or_else(|| stem_timestamp(pov_path));
    let pose = match (&trace, timestamp) {
        (Some(t), Some(ts)) => t.nearest(ts, config.joint.sensor_tolerance_ms),
        (Some(_), None) => bail!("sensors: POV time unknown; pass --time or name the file by its timestamp"),
        (None, _) => None,
    };

    let o = localize_one(&loc, &pov, &references, pose, args.alpha)?;
    let reference = &references[o.index];
    let (label, info) = annotation(reference, &o.result);
    if args.show_info {
        if let (Some(l), Some(i)) = (&label, &info) {
            eprintln!("{l}: {i}");
        }
    }
    let mut out = Records::open(args.out.as_deref())?;
    out.write(&Record {
        id: None,
        pov: pov_path.display().to_string(),
        reference: reference.name.clone(),
        timestamp_ms: timestamp,
        result: &o.result,
        f_without: o.f_without,
        label,
        info: info.filter(|_| args.show_info),
    })?;
    out.finish()?;
    Ok(exit_code(&o.result))
}

fn run_dataset(config: &RunConfig, loc: &Localizer, dir: &Path, args: &LocalizeArgs) -> Result<u8> {
    let corpus = load_corpus(dir.join("manifest.json")).context("dataset manifest")?;
    let times = read_times(dir).context("dataset times")?;
    let rows: Vec<(String, String, LocalizationResult, Option<Point2>)> = corpus
        .entries()
        .par_iter()
        .map(|entry| {
            let id = &entry.id;
            let references = [Reference::from_entry(loc, entry)?];
            let pov_path = dir.join("pov").join(format!("{id}.pgm"));
            let pov = loc.prepare(load_image(&pov_path).with_context(|| format!("POV {id}"))?, None);
            let sensors = dir.join("sensors").join(format!("{id}.txt"));
            let trace = load_trace(sensors.is_file().then_some(&sensors))?;
            let t = *times.get(id).ok_or_else(|| anyhow!("dataset times: no entry for `{id}`"))?;
            let pose = trace.as_ref().and_then(|tr| tr.nearest(t, config.joint.sensor_tolerance_ms));
            let o = localize_one(loc, &pov, &references, pose, args.alpha).with_context(|| format!("pair {id}"))?;
            Ok((id.clone(), pov_path.display().to_string(), o.result, o.f_without))
        })
        .collect::<Result<_>>()?;
    let mut out = Records::open(args.out.as_deref())?;
    let mut code = 0;
    for (id, pov, result, f_without) in &rows {
        code = code.max(exit_code(result));
        out.write(&Record {
            id: Some(id),
            pov: pov.clone(),
            reference: id.clone(),
            timestamp_ms: times.get(id).copied(),
            result,
            f_without: *f_without,
            label: None,
            info: None,
        })?;
    }
    out.finish()?;
    Ok(code)
}
