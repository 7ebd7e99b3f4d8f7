//! Run configuration: built-in defaults, an optional config file, and
//! command-line flags, merged in that order of increasing precedence.
//!
//! The config file is TOML restricted to top-level `key = value` pairs:
//!
//! ```toml
//! gray = "lab_l"            # luma601 | lab_l
//! intensity_bins = 32
//! mean_bins = 16
//! std_bins = 8
//! std_ceiling = 64.0
//! mask_background = "off"  # off | <threshold 0-255>
//! normalize = "sum"         # sum | mean
//! k_l = 1.0
//! k_c = 1.0
//! k_h = 1.0
//! colormap_range = "0:50"   # lo:hi | auto
//! methods = "ciede2000,hist,l2,ssim"
//! seed = 0
//! jobs = 4
//! manifest = "data/manifest.json"
//! model = "model.cdam"
//! data_root = "data"
//! ```
//!
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cda_core::{
    BackgroundRule, BinConfig, ColormapRange, ColormapSpec, GrayMode, Method, Normalize,
    WeightingFactors,
};
use clap::Args;
use serde::Deserialize;

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Config file (TOML key = value pairs).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Manifest JSON written by `split`.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Model file written by `train`.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Directory manifest paths are relative to; defaults to the manifest's directory.
    #[arg(long, global = true)]
    pub data_root: Option<PathBuf>,
    /// luma601 | lab_l
    #[arg(long, global = true)]
    pub gray: Option<String>,
    /// sum | mean
    #[arg(long, global = true)]
    pub normalize: Option<String>,
    /// Background threshold on max(R,G,B), or `off`.
    #[arg(long, global = true)]
    pub mask_background: Option<String>,
    /// Comma-separated subset of ciede2000,hist,l2,ssim.
    #[arg(long, global = true)]
    pub methods: Option<String>,
    /// Seed for `synth` and `split`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for train/score/heatmap; defaults to available parallelism.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// `lo:hi` or `auto` (per-image max).
    #[arg(long, global = true)]
    pub colormap_range: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub gray: Option<String>,
    pub intensity_bins: Option<u16>,
    pub mean_bins: Option<u16>,
    pub std_bins: Option<u16>,
    pub std_ceiling: Option<f64>,
    pub mask_background: Option<toml::Value>,
    pub normalize: Option<String>,
    pub k_l: Option<f64>,
    pub k_c: Option<f64>,
    pub k_h: Option<f64>,
    pub colormap_range: Option<String>,
    pub methods: Option<String>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub manifest: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub data_root: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config file {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }
}

/// Fully validated settings for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub gray: GrayMode,
    pub bins: BinConfig,
    pub background: BackgroundRule,
    pub normalize: Normalize,
    pub k: WeightingFactors,
    pub colormap: ColormapSpec,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub jobs: usize,
    pub manifest: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub data_root: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gray: GrayMode::default(),
            bins: BinConfig::default(),
            background: BackgroundRule::Include,
            normalize: Normalize::Sum,
            k: WeightingFactors::default(),
            colormap: ColormapSpec::default(),
            methods: Method::ALL.to_vec(),
            seed: 0,
            jobs: std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
            manifest: None,
            model: None,
            data_root: None,
        }
    }
}

pub fn parse_background(s: &str) -> Result<BackgroundRule> {
    if s == "off" {
        return Ok(BackgroundRule::Include);
    }
    let t: u8 = s
        .parse()
        .with_context(|| format!("mask-background must be `off` or 0-255, got `{s}`"))?;
    Ok(BackgroundRule::ExcludeBelow(t))
}

pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let m: Method = part.parse().map_err(anyhow::Error::msg)?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        bail!("no scoring methods selected");
    }
    out.sort();
    Ok(out)
}

pub fn parse_colormap_range(s: &str) -> Result<ColormapRange> {
    if s == "auto" {
        return Ok(ColormapRange::PerImageMax);
    }
    let (lo, hi) = s
        .split_once(':')
        .with_context(|| format!("colormap range must be `lo:hi` or `auto`, got `{s}`"))?;
    let lo: f64 = lo
        .trim()
        .parse()
        .with_context(|| format!("bad colormap lower bound `{lo}`"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .with_context(|| format!("bad colormap upper bound `{hi}`"))?;
    Ok(ColormapRange::Fixed { lo, hi })
}

impl RunConfig {
    /// Merges defaults, the config file named by `--config` and the flags.
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Self::merge(&file, args).context("invalid configuration")
    }

    pub fn merge(file: &FileConfig, args: &CommonArgs) -> Result<Self> {
        let mut c = RunConfig::default();

        if let Some(g) = args.gray.as_ref().or(file.gray.as_ref()) {
            c.gray = g.parse().map_err(anyhow::Error::msg)?;
        }
        if let Some(v) = file.intensity_bins {
            c.bins.intensity_bins = v;
        }
        if let Some(v) = file.mean_bins {
            c.bins.mean_bins = v;
        }
        if let Some(v) = file.std_bins {
            c.bins.std_bins = v;
        }
        if let Some(v) = file.std_ceiling {
            c.bins.std_ceiling = v;
        }
        c.bins.validate()?;

        let file_bg = match &file.mask_background {
            None => None,
            Some(toml::Value::String(s)) => Some(s.clone()),
            Some(toml::Value::Integer(i)) => Some(i.to_string()),
            Some(other) => bail!("mask_background must be a string or integer, got {other}"),
        };
        if let Some(s) = args.mask_background.clone().or(file_bg) {
            c.background = parse_background(&s)?;
        }
        if let Some(n) = args.normalize.as_ref().or(file.normalize.as_ref()) {
            c.normalize = n.parse().map_err(anyhow::Error::msg)?;
        }
        c.k = WeightingFactors {
            kl: file.k_l.unwrap_or(1.0),
            kc: file.k_c.unwrap_or(1.0),
            kh: file.k_h.unwrap_or(1.0),
        };
        c.k.validate()?;
        if let Some(r) = args
            .colormap_range
            .as_ref()
            .or(file.colormap_range.as_ref())
        {
            c.colormap = ColormapSpec::with_range(parse_colormap_range(r)?)?;
        }
        if let Some(m) = args.methods.as_ref().or(file.methods.as_ref()) {
            c.methods = parse_methods(m)?;
        }
        if let Some(s) = args.seed.or(file.seed) {
            c.seed = s;
        }
        if let Some(j) = args.jobs.or(file.jobs) {
            if j == 0 {
                bail!("jobs must be at least 1");
            }
            c.jobs = j;
        }
        c.manifest = args.manifest.clone().or(file.manifest.clone());
        c.model = args.model.clone().or(file.model.clone());
        c.data_root = args.data_root.clone().or(file.data_root.clone());
        Ok(c)
    }

    pub fn require_manifest(&self) -> Result<&Path> {
        self.manifest
            .as_deref()
            .context("no manifest given (use --manifest or `manifest` in the config file)")
    }

    pub fn require_model(&self) -> Result<&Path> {
        self.model
            .as_deref()
            .context("no model given (use --model or `model` in the config file)")
    }

    /// Root that manifest entries are relative to.
    pub fn data_root(&self) -> Result<PathBuf> {
        if let Some(r) = &self.data_root {
            return Ok(r.clone());
        }
        let m = self.require_manifest()?;
        Ok(m.parent().map(Path::to_path_buf).unwrap_or_default())
    }
}
