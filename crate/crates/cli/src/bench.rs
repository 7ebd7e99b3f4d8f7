//! Per-image latency of the anomaly score.
//!
//! Each sample times reconstruction, the ΔE00 map and the summed score for
//! one already-decoded test image on the calling thread. A second pass
//! times cumulative batches of increasing size and fits total time against
//! image count; with no per-query iterative optimization the slope matches
//! the per-image mean.

use std::hint::black_box;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Result};
use cda_core::{
    ciede_score, diff_map, load_image, reconstruct, ChromaLookupModel, ColorImage, ImageClass,
    Split,
};
use clap::Args;
use serde::Serialize;

use crate::commands::{load_manifest, load_model};
use crate::config::RunConfig;
use crate::write_atomic;

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// At most this many test images per class.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Measurement rounds; each sample keeps its median round.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Number of batch sizes in the scaling pass.
    #[arg(long, default_value_t = 8)]
    pub steps: usize,
    /// Optional JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassTiming {
    pub n: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub samples_ms: Vec<f64>,
}

impl ClassTiming {
    fn from_samples(samples_ms: Vec<f64>) -> Self {
        let n = samples_ms.len();
        let mean_ms = if n == 0 {
            0.0
        } else {
            samples_ms.iter().sum::<f64>() / n as f64
        };
        let std_ms = if n < 2 {
            0.0
        } else {
            (samples_ms
                .iter()
                .map(|v| (v - mean_ms).powi(2))
                .sum::<f64>()
                / (n - 1) as f64)
                .sqrt()
        };
        Self {
            n,
            mean_ms,
            std_ms,
            samples_ms,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Scaling {
    pub counts: Vec<usize>,
    pub totals_ms: Vec<f64>,
    pub slope_ms: f64,
    pub intercept_ms: f64,
    pub per_image_mean_ms: f64,
    /// |slope − per-image mean| / per-image mean.
    pub relative_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub healthy: ClassTiming,
    pub diseased: ClassTiming,
    pub scaling: Scaling,
}

/// Ordinary least squares `(slope, intercept)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn score_once(model: &ChromaLookupModel, img: &ColorImage, cfg: &RunConfig) -> Result<f64> {
    let pair = reconstruct(model, img, cfg.gray)?;
    let map = diff_map(&pair, cfg.k)?;
    Ok(ciede_score(&map, None, cfg.normalize)?)
}

fn time_ms(f: impl FnOnce() -> Result<f64>) -> Result<f64> {
    let t = Instant::now();
    black_box(f()?);
    Ok(t.elapsed().as_secs_f64() * 1e3)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Per-column medians of `rounds[r][i]`.
fn column_medians(rounds: &[Vec<f64>]) -> Vec<f64> {
    (0..rounds[0].len())
        .map(|i| median(&mut rounds.iter().map(|r| r[i]).collect::<Vec<_>>()))
        .collect()
}

pub fn run_bench(
    model: &ChromaLookupModel,
    images: &[(ImageClass, ColorImage)],
    cfg: &RunConfig,
    a: &BenchArgs,
) -> Result<BenchReport> {
    if images.len() < 2 {
        bail!("need at least two test images to benchmark");
    }
    if a.repeats == 0 || a.steps < 2 {
        bail!("repeats must be >= 1 and steps >= 2");
    }
    let n = images.len();
    let steps = a.steps.min(n);
    let mut counts: Vec<usize> = (1..=steps).map(|s| (s * n).div_ceil(steps)).collect();
    counts.dedup();

    // warm caches and the model's fallback table
    score_once(model, &images[0].1, cfg)?;

    // Batches alternate with slices of the single-image pass, and batch
    // order flips every round, so slow phases of a shared machine hit both
    // measurements alike. Each measurement keeps its median round.
    let chunk = n.div_ceil(counts.len());
    let mut image_rounds = Vec::with_capacity(a.repeats);
    let mut total_rounds = Vec::with_capacity(a.repeats);
    for r in 0..a.repeats {
        let mut singles = vec![0.0; n];
        let mut totals = vec![0.0; counts.len()];
        for step in 0..counts.len() {
            let j = if r % 2 == 0 {
                step
            } else {
                counts.len() - 1 - step
            };
            totals[j] = time_ms(|| {
                let mut acc = 0.0;
                for (_, img) in &images[..counts[j]] {
                    acc += score_once(model, img, cfg)?;
                }
                Ok(acc)
            })?;
            for i in (step * chunk..n).take(chunk) {
                singles[i] = time_ms(|| score_once(model, &images[i].1, cfg))?;
            }
        }
        image_rounds.push(singles);
        total_rounds.push(totals);
    }
    let per_image = column_medians(&image_rounds);
    let totals_ms = column_medians(&total_rounds);

    let mut healthy = Vec::new();
    let mut diseased = Vec::new();
    for ((class, _), t) in images.iter().zip(&per_image) {
        match class {
            ImageClass::Healthy => healthy.push(*t),
            ImageClass::Diseased => diseased.push(*t),
        }
    }
    let per_image_mean_ms = per_image.iter().sum::<f64>() / n as f64;
    let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let (slope_ms, intercept_ms) = linear_fit(&xs, &totals_ms);

    Ok(BenchReport {
        healthy: ClassTiming::from_samples(healthy),
        diseased: ClassTiming::from_samples(diseased),
        scaling: Scaling {
            counts,
            totals_ms,
            slope_ms,
            intercept_ms,
            per_image_mean_ms,
            relative_deviation: (slope_ms - per_image_mean_ms).abs() / per_image_mean_ms,
        },
    })
}

pub fn bench(cfg: &RunConfig, a: &BenchArgs) -> Result<BenchReport> {
    let manifest = load_manifest(cfg)?;
    let model = load_model(cfg)?;
    let root = cfg.data_root()?;

    let mut images = Vec::new();
    for class in [ImageClass::Healthy, ImageClass::Diseased] {
        let entries = manifest.split(Split::Test).filter(|e| e.class == class);
        for e in entries.take(a.limit.unwrap_or(usize::MAX)) {
            images.push((class, load_image(&root.join(&e.path))?));
        }
    }
    let report = run_bench(&model, &images, cfg, a)?;
    println!(
        "healthy:  {:.2} ± {:.2} ms (n={})",
        report.healthy.mean_ms, report.healthy.std_ms, report.healthy.n
    );
    println!(
        "diseased: {:.2} ± {:.2} ms (n={})",
        report.diseased.mean_ms, report.diseased.std_ms, report.diseased.n
    );
    println!(
        "scaling:  slope {:.2} ms/image vs mean {:.2} ms (deviation {:.1}%)",
        report.scaling.slope_ms,
        report.scaling.per_image_mean_ms,
        100.0 * report.scaling.relative_deviation
    );
    if let Some(out) = &a.out {
        let mut s = serde_json::to_string_pretty(&report)?;
        s.push('\n');
        write_atomic(out, s.as_bytes())?;
    }
    Ok(report)
}
