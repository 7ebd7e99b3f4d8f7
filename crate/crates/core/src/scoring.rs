//! Per-pixel CIEDE2000 maps, image-level anomaly scores and the baseline
//! scorers (color histogram, L2, SSIM).

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::colorspace::{delta_e_2000_value, srgb_to_lab, WeightingFactors};
use crate::error::{Error, Result};
use crate::image::{check_dims, ColorImage, GrayImage, Mask};
use crate::reconstruct::{to_gray, GrayMode, ReconstructionPair};

/// Per-pixel ΔE00 between an original and its reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl DiffMap {
    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[(y * self.width + x) as usize]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Little-endian f64 dump preceded by width and height as u32.
    pub fn write_raw(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&self.width.to_le_bytes())?;
        w.write_all(&self.height.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_raw(mut r: impl Read) -> std::io::Result<Self> {
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let width = u32::from_le_bytes(b4);
        r.read_exact(&mut b4)?;
        let height = u32::from_le_bytes(b4);
        let mut values = Vec::with_capacity(width as usize * height as usize);
        let mut b8 = [0u8; 8];
        for _ in 0..width as usize * height as usize {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }
}

pub fn diff_map(pair: &ReconstructionPair, k: WeightingFactors) -> Result<DiffMap> {
    diff_images(pair.original(), pair.reconstructed(), k)
}

pub fn diff_images(a: &ColorImage, b: &ColorImage, k: WeightingFactors) -> Result<DiffMap> {
    check_dims(a.dims(), b.dims())?;
    k.validate()?;
    let values = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&p, &q)| {
            if p == q {
                0.0
            } else {
                delta_e_2000_value(srgb_to_lab(p), srgb_to_lab(q), k)
            }
        })
        .collect();
    Ok(DiffMap {
        width: a.width(),
        height: a.height(),
        values,
    })
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "lowercase")]
pub enum Normalize {
    #[default]
    Sum,
    Mean,
}

impl FromStr for Normalize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sum" => Ok(Normalize::Sum),
            "mean" => Ok(Normalize::Mean),
            other => Err(format!(
                "unknown normalization `{other}` (expected sum or mean)"
            )),
        }
    }
}

impl fmt::Display for Normalize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalize::Sum => "sum",
            Normalize::Mean => "mean",
        })
    }
}

/// Sum (or mean) of the map over pixels selected by `include`.
pub fn ciede_score(map: &DiffMap, include: Option<&Mask>, normalize: Normalize) -> Result<f64> {
    let (sum, n) = match include {
        None => (map.values.iter().sum::<f64>(), map.values.len()),
        Some(m) => {
            check_dims(map.dims(), (m.width, m.height))?;
            map.values
                .iter()
                .zip(&m.values)
                .filter(|(_, &keep)| keep)
                .fold((0.0, 0), |(s, n), (&v, _)| (s + v, n + 1))
        }
    };
    match normalize {
        Normalize::Sum => Ok(sum),
        Normalize::Mean if n == 0 => Err(Error::FullyMasked),
        Normalize::Mean => Ok(sum / n as f64),
    }
}

pub const HIST_LEVELS: usize = 8;
const HIST_BINS: usize = HIST_LEVELS * HIST_LEVELS * HIST_LEVELS;

/// Joint 8×8×8 RGB histogram normalized to unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct HealthyHistogram {
    pub freq: Vec<f64>,
    pub training_id: String,
}

pub fn hist_bin(c: [u8; 3]) -> usize {
    let q = |v: u8| (v >> 5) as usize;
    (q(c[0]) * HIST_LEVELS + q(c[1])) * HIST_LEVELS + q(c[2])
}

fn counts(images: &[&ColorImage]) -> (Vec<u64>, u64) {
    let mut counts = vec![0u64; HIST_BINS];
    let mut total = 0;
    for img in images {
        for &c in img.pixels() {
            counts[hist_bin(c)] += 1;
        }
        total += img.len() as u64;
    }
    (counts, total)
}

fn normalize_counts(counts: &[u64], total: u64) -> Vec<f64> {
    counts.iter().map(|&n| n as f64 / total as f64).collect()
}

impl HealthyHistogram {
    /// Index of the heaviest bin; ties go to the lowest index.
    pub fn top_bin(&self) -> usize {
        let mut best = 0;
        for (i, &f) in self.freq.iter().enumerate() {
            if f > self.freq[best] {
                best = i;
            }
        }
        best
    }
}

pub fn build_reference_histogram(
    healthy: &[ColorImage],
    training_id: impl Into<String>,
) -> Result<HealthyHistogram> {
    let refs: Vec<&ColorImage> = healthy.iter().collect();
    let (c, total) = counts(&refs);
    if total == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    Ok(HealthyHistogram {
        freq: normalize_counts(&c, total),
        training_id: training_id.into(),
    })
}

/// One minus histogram intersection with the healthy reference.
pub fn hist_score(query: &ColorImage, reference: &HealthyHistogram) -> f64 {
    let (c, total) = counts(&[query]);
    if total == 0 {
        return 0.0;
    }
    let q = normalize_counts(&c, total);
    let inter: f64 = q.iter().zip(&reference.freq).map(|(a, b)| a.min(*b)).sum();
    (1.0 - inter).clamp(0.0, 1.0)
}

/// Mean squared channel difference with values scaled to `[0,1]`.
pub fn l2_score(pair: &ReconstructionPair) -> f64 {
    let a = pair.original().pixels();
    let b = pair.reconstructed().pixels();
    let sum: f64 = a
        .iter()
        .zip(b)
        .flat_map(|(p, q)| {
            p.iter()
                .zip(q)
                .map(|(&x, &y)| ((x as f64 - y as f64) / 255.0).powi(2))
        })
        .sum();
    sum / (3 * a.len()) as f64
}

pub const SSIM_WINDOW: u32 = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_RANGE: f64 = 255.0;

fn gaussian_kernel() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as i32;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filter keeping only positions where the window fits.
fn filter_valid(img: &GrayImage, kernel: &[f64]) -> (usize, usize, Vec<f64>) {
    let (w, h) = (img.width as usize, img.height as usize);
    let n = kernel.len();
    let ow = w - n + 1;
    let oh = h - n + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &img.values[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = kernel.iter().zip(&row[x..x + n]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * tmp[(y + i) * ow + x])
                .sum();
        }
    }
    (ow, oh, out)
}

/// Mean SSIM of two grayscale images over all valid 11×11 windows.
pub fn mean_ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    check_dims((a.width, a.height), (b.width, b.height))?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::TooSmall {
            width: a.width,
            height: a.height,
            window: SSIM_WINDOW,
        });
    }
    let kernel = gaussian_kernel();
    let prod = |f: fn(f64, f64) -> f64| GrayImage {
        width: a.width,
        height: a.height,
        values: a
            .values
            .iter()
            .zip(&b.values)
            .map(|(&x, &y)| f(x, y))
            .collect(),
    };
    let (_, _, mu_a) = filter_valid(a, &kernel);
    let (_, _, mu_b) = filter_valid(b, &kernel);
    let (_, _, aa) = filter_valid(&prod(|x, _| x * x), &kernel);
    let (_, _, bb) = filter_valid(&prod(|_, y| y * y), &kernel);
    let (_, _, ab) = filter_valid(&prod(|x, y| x * y), &kernel);

    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total +=
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// `1 − mean SSIM` on the luma601 grayscale of both images, clamped to `[0,1]`.
pub fn ssim_score(pair: &ReconstructionPair) -> Result<f64> {
    let a = to_gray(pair.original(), GrayMode::Luma601);
    let b = to_gray(pair.reconstructed(), GrayMode::Luma601);
    Ok((1.0 - mean_ssim(&a, &b)?).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ciede2000,
    Hist,
    L2,
    Ssim,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ciede2000, Method::Hist, Method::L2, Method::Ssim];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ciede2000 => "ciede2000",
            Method::Hist => "hist",
            Method::L2 => "l2",
            Method::Ssim => "ssim",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected ciede2000, hist, l2 or ssim)"))
    }
}

/// Image-level score, higher means more anomalous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScore {
    pub image_id: String,
    /// 1 anomalous, -1 normal.
    pub label: i8,
    pub method: Method,
    pub score: f64,
}

pub const SCORE_CSV_HEADER: [&str; 4] = ["image_id", "label", "method", "score"];

/// Writes `image_id,label,method,score` rows sorted by image id then method.
pub fn write_scores_csv(scores: &[AnomalyScore], w: impl Write) -> Result<()> {
    let mut sorted: Vec<&AnomalyScore> = scores.iter().collect();
    sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id).then(a.method.cmp(&b.method)));
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SCORE_CSV_HEADER)?;
    for s in sorted {
        if !s.score.is_finite() {
            return Err(Error::NonFiniteScore(s.image_id.clone()));
        }
        out.write_record([
            s.image_id.as_str(),
            &s.label.to_string(),
            s.method.as_str(),
            &s.score.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::ScoreFile(e.to_string()))?;
    Ok(())
}

pub fn read_scores_csv(r: impl Read) -> Result<Vec<AnomalyScore>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != SCORE_CSV_HEADER {
        return Err(Error::ScoreFile(format!("unexpected header {:?}", header)));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let label: i8 = rec[1]
            .parse()
            .map_err(|_| Error::ScoreFile(format!("bad label `{}`", &rec[1])))?;
        if label != 1 && label != -1 {
            return Err(Error::ScoreFile(format!(
                "label must be 1 or -1, got {label}"
            )));
        }
        let method = rec[2].parse().map_err(Error::ScoreFile)?;
        let score: f64 = rec[3]
            .parse()
            .map_err(|_| Error::ScoreFile(format!("bad score `{}`", &rec[3])))?;
        if !score.is_finite() {
            return Err(Error::NonFiniteScore(rec[0].to_owned()));
        }
        out.push(AnomalyScore {
            image_id: rec[0].to_owned(),
            label,
            method,
            score,
        });
    }
    Ok(out)
}
