//! Run configuration: one TOML file, optionally patched by `--set key=value`.
//!
//! Relative paths inside the configuration resolve against the directory of
//! the configuration file (the working directory when no file is given).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use forcegp::basis::{CutoffRule, Oscillator};
use forcegp::gp::FitConfig;
use forcegp::metrics::MetricConfig;
use forcegp::signal::Kind;
use forcegp::simulate::{BroadbandShape, MdofFixture, StudyConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it by labelled hashing.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub inputs: Vec<InputSpec>,
    /// Name of the reference dataset; the first dataset when absent.
    pub reference: Option<String>,
    pub frequency: CutoffRule,
    /// Remove the least-squares line from every training dataset.
    pub detrend: bool,
    pub fit: FitConfig,
    pub modes: Option<ModesSpec>,
    pub oscillator: Option<Oscillator>,
    pub predict: PredictSpec,
    pub metrics: MetricConfig,
    pub study: StudyConfig,
    pub fixture: FixtureSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("."),
            inputs: Vec::new(),
            reference: None,
            frequency: CutoffRule::default(),
            detrend: true,
            fit: FitConfig::default(),
            modes: None,
            oscillator: None,
            predict: PredictSpec::default(),
            metrics: MetricConfig::default(),
            study: StudyConfig::default(),
            fixture: FixtureSpec::default(),
        }
    }
}

/// One time-indexed CSV file; its metadata applies to every selected column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub file: PathBuf,
    pub kind: Kind,
    #[serde(default)]
    pub unit: String,
    /// Noise group; defaults to the index of this input.
    pub group: Option<usize>,
    /// Columns to use; all channel columns when absent.
    pub columns: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesSpec {
    /// CSV with one header row, sensors as rows and modes as columns.
    pub shapes: PathBuf,
    pub masses: Vec<f64>,
    pub zetas: Vec<f64>,
    pub frequencies: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceChoice {
    /// Full covariance up to [`FULL_COVARIANCE_LIMIT`] prediction times, diagonal beyond.
    #[default]
    Auto,
    Full,
    Diagonal,
}

pub const FULL_COVARIANCE_LIMIT: usize = 5000;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSpec {
    /// 1-based mode whose oscillator comes from `[modes]`; otherwise `[oscillator]` is used.
    pub mode: Option<usize>,
    /// Prediction grid `start + i·step`, `i < count`; the reference time vector when absent.
    pub start: Option<f64>,
    pub step: Option<f64>,
    pub count: Option<usize>,
    pub covariance: CovarianceChoice,
}

/// Cantilever fixture settings; the seed is the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSpec {
    pub n_sensors: usize,
    pub fs: f64,
    pub duration: f64,
    pub load: BroadbandShape,
    /// Per-channel sensor noise; clean output when absent.
    pub snr: Option<f64>,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        let MdofFixture { n_sensors, fs, duration, load, .. } = MdofFixture::default();
        Self { n_sensors, fs, duration, load, snr: None }
    }
}

impl FixtureSpec {
    pub fn fixture(&self, seed: u64) -> MdofFixture {
        MdofFixture { n_sensors: self.n_sensors, fs: self.fs, duration: self.duration, load: self.load, seed }
    }
}

/// A parsed configuration plus the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base: PathBuf,
}

impl Loaded {
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Loaded> {
    let (mut table, base) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (table, base)
        }
        None => (toml::Table::new(), PathBuf::new()),
    };
    for item in overrides {
        apply_override(&mut table, item)?;
    }
    let source = path.map_or("configuration".to_string(), |p| p.display().to_string());
    let config = RunConfig::deserialize(toml::Value::Table(table)).with_context(|| format!("invalid {source}"))?;
    let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
    Ok(Loaded { config, base })
}

/// Sets a dotted key, creating tables on the way. Numeric segments index arrays.
/// The value is parsed as TOML and falls back to a plain string.
pub fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let Some((key, raw)) = item.split_once('=') else {
        bail!("override `{item}` is not of the form key=value");
    };
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let segments: Vec<&str> = key.trim().split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        bail!("override key `{key}` has an empty segment");
    }
    let mut slot = table
        .entry(segments[0].to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    for segment in &segments[1..] {
        slot = match slot {
            toml::Value::Table(t) => t.entry(segment.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())),
            toml::Value::Array(a) => {
                let index: usize = segment.parse().with_context(|| format!("`{segment}` in `{key}` is not an index"))?;
                let len = a.len();
                a.get_mut(index).with_context(|| format!("index {index} in `{key}` out of range (length {len})"))?
            }
            _ => bail!("`{key}` descends into a value that is not a table"),
        };
    }
    *slot = value;
    Ok(())
}
