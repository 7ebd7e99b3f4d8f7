use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cda_core::dataset::{FixtureParams, ManifestEntry};
use cda_core::eval::{evaluate, EvalOptions};
use cda_core::reconstruct::ChromaAccumulator;
use cda_core::render::composite;
use cda_core::scoring::{read_scores_csv, write_scores_csv};
use cda_core::{
    build_manifest, build_reference_histogram, ciede_score, diff_map, hist_score, l2_score,
    load_external_pair, load_image, reconstruct, render_heatmap, ssim_score, AnomalyScore,
    ChromaLookupModel, HealthyHistogram, Manifest, Method, ReconstructionPair, Split,
};
use clap::Args;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::write_atomic;

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub n_train: usize,
    #[arg(long, default_value_t = 40)]
    pub n_test: usize,
    #[arg(long, default_value_t = 40)]
    pub n_diseased: usize,
    #[arg(long, default_value_t = 128)]
    pub size: u32,
}

pub fn synth(cfg: &RunConfig, a: &SynthArgs) -> Result<()> {
    if a.n_train == 0 || a.n_test == 0 || a.n_diseased == 0 || a.size == 0 {
        bail!("fixture counts and size must be positive");
    }
    let params = FixtureParams {
        seed: cfg.seed,
        n_healthy_train: a.n_train,
        n_healthy_test: a.n_test,
        n_diseased_test: a.n_diseased,
        size: a.size,
    };
    let s = cda_core::synth_fixture(&a.out, &params)
        .with_context(|| format!("cannot write fixture to {}", a.out.display()))?;
    println!(
        "wrote {} healthy, {} diseased images and {} masks to {} (healthy train fraction {})",
        s.healthy.len(),
        s.diseased.len(),
        s.masks.len(),
        a.out.display(),
        params.healthy_train_fraction()
    );
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    /// Dataset root holding healthy/ and diseased/.
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub fraction: f64,
    /// Number of diseased test images, or `all`.
    #[arg(long, default_value = "all")]
    pub diseased_count: String,
    /// Defaults to `<root>/manifest.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn split(cfg: &RunConfig, a: &SplitArgs) -> Result<()> {
    let count =
        match a.diseased_count.as_str() {
            "all" => None,
            n => Some(n.parse::<usize>().with_context(|| {
                format!("diseased-count must be an integer or `all`, got `{n}`")
            })?),
        };
    let m = build_manifest(&a.root, a.fraction, count, cfg.seed)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| a.root.join("manifest.json"));
    write_atomic(&out, m.to_json()?.as_bytes())?;
    println!(
        "manifest {}: {} train healthy, {} test healthy, {} test diseased",
        out.display(),
        m.counts.healthy_train,
        m.counts.healthy_test,
        m.counts.diseased_test
    );
    Ok(())
}

pub(crate) fn load_manifest(cfg: &RunConfig) -> Result<Manifest> {
    let p = cfg.require_manifest()?;
    Manifest::load(p).with_context(|| format!("cannot load manifest {}", p.display()))
}

pub(crate) fn load_model(cfg: &RunConfig) -> Result<ChromaLookupModel> {
    let p = cfg.require_model()?;
    if !p.exists() {
        bail!(
            "model file {} does not exist (run `train` first)",
            p.display()
        );
    }
    ChromaLookupModel::load(p).with_context(|| format!("cannot load model {}", p.display()))
}

fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()?)
}

fn entry_path(root: &Path, e: &ManifestEntry) -> PathBuf {
    root.join(&e.path)
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {}

pub fn train(cfg: &RunConfig, _: &TrainArgs) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    let out = cfg.require_model()?;
    let root = cfg.data_root()?;
    let entries = manifest.training_entries()?;
    if entries.is_empty() {
        bail!("manifest has no training images");
    }
    let acc = pool(cfg)?.install(|| {
        entries
            .par_iter()
            .map(|e| -> Result<ChromaAccumulator> {
                let img = load_image(&entry_path(&root, e))?;
                let mut acc = ChromaAccumulator::new(cfg.bins, cfg.gray)?;
                acc.add_image(&img, cfg.background);
                Ok(acc)
            })
            .try_reduce_with(|mut a, b| {
                a.merge(b);
                Ok(a)
            })
            .expect("at least one training entry")
    })?;
    let model = acc.finish()?;
    write_atomic(out, &model.to_bytes())?;
    println!(
        "model {}: {} training images, {} of {} bins populated",
        out.display(),
        entries.len(),
        model.populated_bins().count(),
        model.table().len()
    );
    Ok(())
}

/// Supplies reconstruction pairs, internally or from a directory of
/// externally produced reconstructions mirroring the dataset layout.
pub(crate) enum PairSourceCtx {
    Model(ChromaLookupModel),
    External(PathBuf),
}

impl PairSourceCtx {
    pub(crate) fn new(cfg: &RunConfig, reconstructions: Option<&Path>) -> Result<Self> {
        Ok(match reconstructions {
            Some(dir) => PairSourceCtx::External(dir.to_path_buf()),
            None => PairSourceCtx::Model(load_model(cfg)?),
        })
    }

    pub(crate) fn pair(
        &self,
        cfg: &RunConfig,
        root: &Path,
        e: &ManifestEntry,
    ) -> Result<ReconstructionPair> {
        let original = entry_path(root, e);
        match self {
            PairSourceCtx::Model(m) => {
                let img = load_image(&original)?;
                Ok(reconstruct(m, &img, cfg.gray)?)
            }
            PairSourceCtx::External(dir) => Ok(load_external_pair(&original, &dir.join(&e.path))?),
        }
    }
}

fn reference_histogram(
    cfg: &RunConfig,
    manifest: &Manifest,
    root: &Path,
) -> Result<HealthyHistogram> {
    let imgs = pool(cfg)?.install(|| {
        manifest
            .training_entries()?
            .par_iter()
            .map(|e| Ok(load_image(&entry_path(root, e))?))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(build_reference_histogram(&imgs, "manifest-train")?)
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory of external reconstructions laid out like the dataset root.
    #[arg(long)]
    pub reconstructions: Option<PathBuf>,
    /// Also dump each ΔE00 map as raw little-endian f64 (`.dmap`).
    #[arg(long)]
    pub diffmaps: Option<PathBuf>,
}

pub fn score(cfg: &RunConfig, a: &ScoreArgs) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    let root = cfg.data_root()?;
    let needs_pair = cfg.methods.iter().any(|&m| m != Method::Hist);
    let source = if needs_pair {
        Some(PairSourceCtx::new(cfg, a.reconstructions.as_deref())?)
    } else {
        None
    };
    let reference = if cfg.methods.contains(&Method::Hist) {
        Some(reference_histogram(cfg, &manifest, &root)?)
    } else {
        None
    };

    let tests: Vec<&ManifestEntry> = manifest.split(Split::Test).collect();
    let per_image = pool(cfg)?.install(|| {
        tests
            .par_iter()
            .map(|e| -> Result<Vec<AnomalyScore>> {
                let label = e.class.label();
                let mut out = Vec::new();
                let push = |out: &mut Vec<AnomalyScore>, method, score| {
                    out.push(AnomalyScore {
                        image_id: e.path.clone(),
                        label,
                        method,
                        score,
                    })
                };
                let pair = match &source {
                    Some(src) => Some(
                        src.pair(cfg, &root, e)
                            .with_context(|| format!("scoring {}", e.path))?,
                    ),
                    None => None,
                };
                for &m in &cfg.methods {
                    match m {
                        Method::Ciede2000 => {
                            let pair = pair.as_ref().expect("pair loaded for residual methods");
                            let map = diff_map(pair, cfg.k)?;
                            if let Some(dir) = &a.diffmaps {
                                let mut buf = Vec::new();
                                map.write_raw(&mut buf)?;
                                write_atomic(&dir.join(format!("{}.dmap", e.path)), &buf)?;
                            }
                            push(&mut out, m, ciede_score(&map, None, cfg.normalize)?);
                        }
                        Method::Hist => {
                            let img = match &pair {
                                Some(p) => p.original().clone(),
                                None => load_image(&entry_path(&root, e))?,
                            };
                            push(
                                &mut out,
                                m,
                                hist_score(
                                    &img,
                                    reference.as_ref().expect("reference built for hist"),
                                ),
                            );
                        }
                        Method::L2 => {
                            push(&mut out, m, l2_score(pair.as_ref().expect("pair loaded")))
                        }
                        Method::Ssim => push(
                            &mut out,
                            m,
                            ssim_score(pair.as_ref().expect("pair loaded"))?,
                        ),
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let scores: Vec<AnomalyScore> = per_image.into_iter().flatten().collect();
    let mut buf = Vec::new();
    write_scores_csv(&scores, &mut buf)?;
    write_atomic(&a.out, &buf)?;
    println!(
        "scored {} test images with {} method(s) -> {}",
        tests.len(),
        cfg.methods.len(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Score CSV written by `score`.
    #[arg(long)]
    pub scores: PathBuf,
    /// Output JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// Top-K cutoff; defaults to the number of anomalous images.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Decision threshold for the confusion counts.
    #[arg(long)]
    pub threshold: Option<f64>,
}

pub fn eval(_: &RunConfig, a: &EvalArgs) -> Result<()> {
    let file = std::fs::File::open(&a.scores)
        .with_context(|| format!("cannot open scores {}", a.scores.display()))?;
    let scores = read_scores_csv(file)
        .with_context(|| format!("cannot read scores {}", a.scores.display()))?;
    if a.bins == 0 {
        bail!("bins must be at least 1");
    }
    let report = evaluate(
        &scores,
        &EvalOptions {
            k: a.k,
            bins: a.bins,
            theta: a.threshold,
        },
    )?;
    write_atomic(&a.out, report.to_json()?.as_bytes())?;
    for m in &report.methods {
        println!(
            "{:<10} AUC {:.4}  top-{} P {:.3} R {:.3} F1 {:.3}",
            m.method.as_str(),
            m.auc,
            m.top_k.k,
            m.top_k.precision,
            m.top_k.recall,
            m.top_k.f1
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct HeatmapArgs {
    /// Output directory; files mirror the dataset layout.
    #[arg(long)]
    pub out: PathBuf,
    /// Emit original | reconstruction | heat map side by side.
    #[arg(long)]
    pub composite: bool,
    #[arg(long)]
    pub reconstructions: Option<PathBuf>,
}

pub fn heatmap(cfg: &RunConfig, a: &HeatmapArgs) -> Result<()> {
    let manifest = load_manifest(cfg)?;
    let root = cfg.data_root()?;
    let source = PairSourceCtx::new(cfg, a.reconstructions.as_deref())?;
    let tests: Vec<&ManifestEntry> = manifest.split(Split::Test).collect();
    pool(cfg)?.install(|| {
        tests.par_iter().try_for_each(|e| -> Result<()> {
            let pair = source
                .pair(cfg, &root, e)
                .with_context(|| format!("rendering {}", e.path))?;
            let map = diff_map(&pair, cfg.k)?;
            let mut img = render_heatmap(&map, &cfg.colormap);
            if a.composite {
                img = composite(pair.original(), pair.reconstructed(), &img)?;
            }
            let out = a.out.join(&e.path).with_extension("png");
            write_atomic(&out, &img.to_png_bytes()?)
        })
    })?;
    println!("rendered {} heat maps -> {}", tests.len(), a.out.display());
    Ok(())
}
