use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use egofov::synth::{
    evaluate, generate_camera_video, generate_dataset, generate_session, read_truths, write_camera_video, write_dataset,
    write_session, DatasetSpec, EvalRecord, SessionSpec, VideoSpec,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::output::{write_file, Records};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    /// POV/reference pairs with ground truth.
    Pairs,
    /// Multi-person gallery session.
    Session,
    /// POV video alternating between fixed cameras.
    Video,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = Kind::Pairs)]
    pub kind: Kind,
    /// JSON spec; missing keys take defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Pairs to generate (pairs), or frames (video).
    #[arg(long)]
    pub count: Option<usize>,
    /// Overrides the spec seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Localization records: a `.jsonl` file or a directory of them.
    #[arg(long)]
    pub results: PathBuf,
    /// Ground-truth directory (a dataset or its `truth/` folder).
    #[arg(long)]
    pub truth: PathBuf,
    /// Correctness radius in reference pixels (default: from the truth files).
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read_spec<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("spec: cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("spec {}", path.display()))
}

fn save_spec<T: Serialize>(dir: &Path, spec: &T) -> Result<()> {
    write_file(&dir.join("spec.json"), &format!("{}\n", serde_json::to_string_pretty(spec)?))
}

pub fn run(args: SynthArgs) -> Result<u8> {
    match args.kind {
        Kind::Pairs => {
            let mut spec: DatasetSpec = read_spec(args.spec.as_ref())?;
            if let Some(s) = args.seed {
                spec.scene.seed = s;
            }
            let pairs = generate_dataset(&spec, args.count.unwrap_or(200)).context("synthesis")?;
            write_dataset(&args.out, &pairs).context("writing dataset")?;
            save_spec(&args.out, &spec)?;
        }
        Kind::Session => {
            if args.count.is_some() {
                bail!("--count does not apply to sessions; set duration_ms in the spec");
            }
            let mut spec: SessionSpec = read_spec(args.spec.as_ref())?;
            if let Some(s) = args.seed {
                spec.seed = s;
            }
            let session = generate_session(&spec).context("synthesis")?;
            write_session(&args.out, &session).context("writing session")?;
            save_spec(&args.out, &spec)?;
        }
        Kind::Video => {
            let mut spec: VideoSpec = read_spec(args.spec.as_ref())?;
            if let Some(s) = args.seed {
                spec.seed = s;
            }
            if let Some(n) = args.count {
                spec.frames = n;
            }
            let video = generate_camera_video(&spec).context("synthesis")?;
            write_camera_video(&args.out, &video).context("writing video")?;
            save_spec(&args.out, &spec)?;
        }
    }
    Ok(0)
}

fn read_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .with_context(|| format!("results: cannot read {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut records = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(&f).with_context(|| format!("results: cannot read {}", f.display()))?;
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r: EvalRecord =
                serde_json::from_str(line).with_context(|| format!("results {} line {}", f.display(), n + 1))?;
            records.push(r);
        }
    }
    Ok(records)
}

pub fn eval(args: EvalArgs) -> Result<u8> {
    let records = read_records(&args.results)?;
    let dir = if args.truth.join("truth").is_dir() { args.truth.join("truth") } else { args.truth.clone() };
    let truths = read_truths(&dir).with_context(|| format!("truth {}", dir.display()))?;
    let radius = match args.radius {
        Some(r) => r,
        None => {
            let Some((_, first)) = truths.first() else { bail!("truth: no files in {}", dir.display()) };
            if truths.iter().any(|(_, t)| t.radius != first.radius) {
                bail!("truth files disagree on the radius; pass --radius");
            }
            first.radius
        }
    };
    let report = evaluate(&records, &truths, radius).context("evaluation")?;
    let mut out = Records::open(args.out.as_deref())?;
    out.write(&report)?;
    out.finish()?;
    Ok(0)
}
