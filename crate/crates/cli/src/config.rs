use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use egofov::joint::JointParams;
use egofov::pipeline::LocalizerConfig;
use serde::{Deserialize, Serialize};

pub const CONFIG_ENV: &str = "EGOFOV_CONFIG";

/// Every tunable, loadable from a JSON file. Missing keys take defaults,
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub localizer: LocalizerConfig,
    pub joint: JointParams,
    /// Gaussian kernel width of exhibit heatmaps, floorplan pixels.
    pub heatmap_sigma: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            localizer: LocalizerConfig::default(),
            joint: JointParams::default(),
            heatmap_sigma: 30.0,
        }
    }
}

/// Flags that override single config fields.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Descriptor ratio-test bound.
    #[arg(long, global = true)]
    pub ratio: Option<f64>,
    /// RANSAC iterations.
    #[arg(long, global = true)]
    pub ransac_iterations: Option<usize>,
    /// RANSAC inlier threshold at a 4096 px reference diagonal.
    #[arg(long, global = true)]
    pub inlier_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub min_inliers: Option<usize>,
    #[arg(long, global = true)]
    pub ransac_seed: Option<u64>,
    /// Blend weight at full sensor reliability.
    #[arg(long, global = true)]
    pub alpha_max: Option<f64>,
    /// Largest accepted localization score.
    #[arg(long, global = true)]
    pub accept_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub tick_ms: Option<i64>,
    #[arg(long, global = true)]
    pub tolerance_ms: Option<i64>,
    #[arg(long, global = true)]
    pub joint_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub min_duration_ms: Option<i64>,
    #[arg(long, global = true)]
    pub sensor_tolerance_ms: Option<i64>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("config: cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("config: {}", path.display()))
    }

    /// Defaults, then the config file (explicit path or `EGOFOV_CONFIG`), then flags.
    pub fn resolve(path: Option<&PathBuf>, overrides: &Overrides) -> Result<Self> {
        let env = std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        let mut config = match path.or(env.as_ref()) {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        config.apply(overrides);
        config.localizer.validate().context("config")?;
        config.joint.validate().context("config")?;
        if !(config.heatmap_sigma > 0.0) {
            anyhow::bail!("config: heatmap_sigma must be > 0");
        }
        Ok(config)
    }

    fn apply(&mut self, o: &Overrides) {
        let l = &mut self.localizer;
        let j = &mut self.joint;
        macro_rules! set {
            ($($flag:ident => $field:expr),* $(,)?) => {
                $(if let Some(v) = o.$flag { $field = v; })*
            };
        }
        set! {
            ratio => l.ratio,
            ransac_iterations => l.ransac.iterations,
            inlier_threshold => l.ransac.inlier_threshold,
            min_inliers => l.ransac.min_inliers,
            ransac_seed => l.ransac.seed,
            alpha_max => l.alpha_max,
            accept_threshold => l.accept_threshold,
            tick_ms => j.tick_ms,
            tolerance_ms => j.tolerance_ms,
            joint_threshold => j.joint_threshold,
            min_duration_ms => j.min_duration_ms,
            sensor_tolerance_ms => j.sensor_tolerance_ms,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"localizer": {"ratio": 0.7}}"#).is_ok());
        assert!(serde_json::from_str::<RunConfig>(r#"{"ratoi": 0.7}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"localizer": {"ransac": {"iters": 5}}}"#).is_err());
    }

    #[test]
    fn flags_beat_file_values() {
        let mut c: RunConfig = serde_json::from_str(r#"{"localizer": {"ratio": 0.7, "accept_threshold": 0.9}}"#).unwrap();
        c.apply(&Overrides { ratio: Some(0.6), ..Default::default() });
        assert_eq!(c.localizer.ratio, 0.6);
        assert_eq!(c.localizer.accept_threshold, 0.9);
        assert_eq!(c.joint, JointParams::default());
    }
}
