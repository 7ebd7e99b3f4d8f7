//! Grayscale-to-color reconstruction.
//!
//! The colorizer quantizes three grayscale features per pixel (intensity,
//! 5×5 local mean, 5×5 local standard deviation) into a dense bin table and
//! stores, for each bin, the coordinate-wise median (a*, b*) observed over
//! the healthy training pixels. Reconstruction keeps the query's lightness
//! and replaces its chroma with the table lookup.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use crate::colorspace::{lab_to_srgb, linear_rgb_to_lab, srgb_to_lab, Lab};
use crate::error::{io_err, Error, Result};
use crate::image::{check_dims, ColorImage, GrayImage, Rgb};

pub const MODEL_MAGIC: &[u8; 8] = b"CDAMODEL";
pub const MODEL_VERSION: u32 = 1;

const WINDOW_RADIUS: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum GrayMode {
    /// 0.299 R + 0.587 G + 0.114 B on the 8-bit sRGB values.
    Luma601,
    /// CIELAB L* scaled from `[0,100]` to `[0,255]`.
    #[default]
    LabL,
}

impl GrayMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GrayMode::Luma601 => "luma601",
            GrayMode::LabL => "lab_l",
        }
    }

    fn code(self) -> u8 {
        match self {
            GrayMode::Luma601 => 0,
            GrayMode::LabL => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(GrayMode::Luma601),
            1 => Ok(GrayMode::LabL),
            other => Err(Error::ModelFormat(format!(
                "unknown gray mode code {other}"
            ))),
        }
    }

    /// Gray value of one sRGB pixel.
    pub fn gray_of(self, c: Rgb) -> f64 {
        match self {
            GrayMode::Luma601 => 0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64,
            GrayMode::LabL => srgb_to_lab(c).l * 2.55,
        }
    }

    /// L* implied by a gray value alone.
    pub fn lightness_of(self, gray: f64) -> f64 {
        match self {
            GrayMode::LabL => gray / 2.55,
            GrayMode::Luma601 => {
                let v = gray / 255.0;
                let lin = if v <= 0.04045 {
                    v / 12.92
                } else {
                    ((v + 0.055) / 1.055).powf(2.4)
                };
                linear_rgb_to_lab([lin; 3]).l
            }
        }
    }
}

impl fmt::Display for GrayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GrayMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "luma601" => Ok(GrayMode::Luma601),
            "lab_l" => Ok(GrayMode::LabL),
            other => Err(format!(
                "unknown gray mode `{other}` (expected luma601 or lab_l)"
            )),
        }
    }
}

pub fn to_gray(img: &ColorImage, mode: GrayMode) -> GrayImage {
    GrayImage {
        width: img.width(),
        height: img.height(),
        values: img.pixels().iter().map(|&c| mode.gray_of(c)).collect(),
    }
}

/// Quantization of the three grayscale features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinConfig {
    pub intensity_bins: u16,
    pub mean_bins: u16,
    pub std_bins: u16,
    /// Local standard deviations at or above this land in the last bin.
    pub std_ceiling: f64,
}

impl Default for BinConfig {
    fn default() -> Self {
        Self {
            intensity_bins: 32,
            mean_bins: 16,
            std_bins: 8,
            std_ceiling: 64.0,
        }
    }
}

impl BinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.intensity_bins == 0 || self.mean_bins == 0 || self.std_bins == 0 {
            return Err(Error::BinConfig("bin counts must be positive".into()));
        }
        if !(self.std_ceiling.is_finite() && self.std_ceiling > 0.0) {
            return Err(Error::BinConfig(format!(
                "std ceiling must be positive, got {}",
                self.std_ceiling
            )));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        self.intensity_bins as usize * self.mean_bins as usize * self.std_bins as usize
    }

    pub fn index(&self, f: FeatureVector) -> usize {
        (f.intensity as usize * self.mean_bins as usize + f.mean as usize) * self.std_bins as usize
            + f.std as usize
    }

    pub fn feature(&self, index: usize) -> FeatureVector {
        let std = index % self.std_bins as usize;
        let rest = index / self.std_bins as usize;
        let mean = rest % self.mean_bins as usize;
        let intensity = rest / self.mean_bins as usize;
        FeatureVector {
            intensity: intensity as u16,
            mean: mean as u16,
            std: std as u16,
        }
    }

    fn quantize(value: f64, range: f64, bins: u16) -> u16 {
        let q = (value / range * bins as f64).floor();
        q.clamp(0.0, (bins - 1) as f64) as u16
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureVector {
    pub intensity: u16,
    pub mean: u16,
    pub std: u16,
}

/// Per-pixel features with clamp-to-edge 5×5 windows.
pub fn features(gray: &GrayImage, cfg: &BinConfig) -> Vec<FeatureVector> {
    let (w, h) = (gray.width as i64, gray.height as i64);
    let at = |x: i64, y: i64| gray.values[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize];

    // horizontal pass
    let mut row_sum = vec![0.0; gray.values.len()];
    let mut row_sq = vec![0.0; gray.values.len()];
    for y in 0..h {
        for x in 0..w {
            let (mut s, mut q) = (0.0, 0.0);
            for dx in -WINDOW_RADIUS..=WINDOW_RADIUS {
                let v = at(x + dx, y);
                s += v;
                q += v * v;
            }
            row_sum[(y * w + x) as usize] = s;
            row_sq[(y * w + x) as usize] = q;
        }
    }

    let n = ((2 * WINDOW_RADIUS + 1) * (2 * WINDOW_RADIUS + 1)) as f64;
    let mut out = Vec::with_capacity(gray.values.len());
    for y in 0..h {
        for x in 0..w {
            let (mut s, mut q) = (0.0, 0.0);
            for dy in -WINDOW_RADIUS..=WINDOW_RADIUS {
                let i = ((y + dy).clamp(0, h - 1) * w + x) as usize;
                s += row_sum[i];
                q += row_sq[i];
            }
            let mean = s / n;
            let std = (q / n - mean * mean).max(0.0).sqrt();
            out.push(FeatureVector {
                intensity: BinConfig::quantize(at(x, y), 256.0, cfg.intensity_bins),
                mean: BinConfig::quantize(mean, 256.0, cfg.mean_bins),
                std: BinConfig::quantize(std, cfg.std_ceiling, cfg.std_bins),
            });
        }
    }
    out
}

/// Optional exclusion of dark background pixels from training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackgroundRule {
    #[default]
    Include,
    /// Skip pixels whose max(R,G,B) is below the threshold.
    ExcludeBelow(u8),
}

impl BackgroundRule {
    pub fn keeps(self, c: Rgb) -> bool {
        match self {
            BackgroundRule::Include => true,
            BackgroundRule::ExcludeBelow(t) => c.iter().copied().max().unwrap_or(0) >= t,
        }
    }
}

/// Multiset of training colors per feature bin. Merging is associative and
/// commutative, so partial accumulators may be built in any order.
#[derive(Debug, Clone)]
pub struct ChromaAccumulator {
    cfg: BinConfig,
    mode: GrayMode,
    bins: Vec<HashMap<Rgb, u64>>,
    image_digests: Vec<[u8; 32]>,
}

impl ChromaAccumulator {
    pub fn new(cfg: BinConfig, mode: GrayMode) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            mode,
            bins: vec![HashMap::new(); cfg.bin_count()],
            image_digests: Vec::new(),
        })
    }

    pub fn add_image(&mut self, img: &ColorImage, background: BackgroundRule) {
        let gray = to_gray(img, self.mode);
        for (f, &c) in features(&gray, &self.cfg).into_iter().zip(img.pixels()) {
            if background.keeps(c) {
                *self.bins[self.cfg.index(f)].entry(c).or_insert(0) += 1;
            }
        }
        self.image_digests.push(image_digest(img));
    }

    pub fn merge(&mut self, other: ChromaAccumulator) {
        assert_eq!(
            self.cfg, other.cfg,
            "merging accumulators with different bin configs"
        );
        assert_eq!(
            self.mode, other.mode,
            "merging accumulators with different gray modes"
        );
        for (dst, src) in self.bins.iter_mut().zip(other.bins) {
            for (c, n) in src {
                *dst.entry(c).or_insert(0) += n;
            }
        }
        self.image_digests.extend(other.image_digests);
    }

    pub fn finish(mut self) -> Result<ChromaLookupModel> {
        if self.image_digests.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        self.image_digests.sort_unstable();
        let mut hasher = Sha256::new();
        for d in &self.image_digests {
            hasher.update(d);
        }
        let training_id = hex(&hasher.finalize());

        let table = self
            .bins
            .iter()
            .map(|colors| {
                if colors.is_empty() {
                    return BinEntry::default();
                }
                let labs: Vec<(Lab, u64)> =
                    colors.iter().map(|(&c, &n)| (srgb_to_lab(c), n)).collect();
                let count = labs.iter().map(|&(_, n)| n).sum();
                BinEntry {
                    count,
                    a: weighted_median(labs.iter().map(|&(l, n)| (l.a, n)).collect()),
                    b: weighted_median(labs.iter().map(|&(l, n)| (l.b, n)).collect()),
                }
            })
            .collect();
        ChromaLookupModel::from_parts(self.cfg, self.mode, training_id, table)
    }
}

fn image_digest(img: &ColorImage) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(img.width().to_le_bytes());
    h.update(img.height().to_le_bytes());
    for p in img.pixels() {
        h.update(p);
    }
    h.finalize().into()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Median of a multiset given as (value, multiplicity); even totals take
/// the midpoint of the two central values.
pub(crate) fn weighted_median(mut values: Vec<(f64, u64)>) -> f64 {
    values.sort_by(|x, y| x.0.total_cmp(&y.0));
    let total: u64 = values.iter().map(|&(_, n)| n).sum();
    assert!(total > 0, "median of an empty multiset");
    let nth = |k: u64| {
        let mut seen = 0;
        for &(v, n) in &values {
            seen += n;
            if k < seen {
                return v;
            }
        }
        unreachable!()
    };
    if total % 2 == 1 {
        nth(total / 2)
    } else {
        (nth(total / 2 - 1) + nth(total / 2)) / 2.0
    }
}

/// Fits a lookup model on healthy images.
pub fn train_colorizer(
    healthy: &[ColorImage],
    cfg: BinConfig,
    mode: GrayMode,
    background: BackgroundRule,
) -> Result<ChromaLookupModel> {
    if healthy.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut acc = ChromaAccumulator::new(cfg, mode)?;
    for img in healthy {
        acc.add_image(img, background);
    }
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BinEntry {
    pub count: u64,
    pub a: f64,
    pub b: f64,
}

/// Trained grayscale-feature → chroma table.
#[derive(Debug)]
pub struct ChromaLookupModel {
    cfg: BinConfig,
    mode: GrayMode,
    training_id: String,
    table: Vec<BinEntry>,
    resolved: OnceLock<Vec<u32>>,
}

impl Clone for ChromaLookupModel {
    fn clone(&self) -> Self {
        Self {
            cfg: self.cfg,
            mode: self.mode,
            training_id: self.training_id.clone(),
            table: self.table.clone(),
            resolved: OnceLock::new(),
        }
    }
}

impl PartialEq for ChromaLookupModel {
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg
            && self.mode == other.mode
            && self.training_id == other.training_id
            && self.table == other.table
    }
}

impl ChromaLookupModel {
    pub fn from_parts(
        cfg: BinConfig,
        mode: GrayMode,
        training_id: String,
        table: Vec<BinEntry>,
    ) -> Result<Self> {
        cfg.validate()?;
        if table.len() != cfg.bin_count() {
            return Err(Error::ModelFormat(format!(
                "table has {} bins, config implies {}",
                table.len(),
                cfg.bin_count()
            )));
        }
        Ok(Self {
            cfg,
            mode,
            training_id,
            table,
            resolved: OnceLock::new(),
        })
    }

    pub fn bin_config(&self) -> &BinConfig {
        &self.cfg
    }

    pub fn gray_mode(&self) -> GrayMode {
        self.mode
    }

    pub fn training_id(&self) -> &str {
        &self.training_id
    }

    pub fn table(&self) -> &[BinEntry] {
        &self.table
    }

    pub fn populated_bins(&self) -> impl Iterator<Item = (usize, &BinEntry)> {
        self.table.iter().enumerate().filter(|(_, e)| e.count > 0)
    }

    /// For every bin, the populated bin whose chroma it uses.
    fn resolved(&self) -> Result<&[u32]> {
        if let Some(r) = self.resolved.get() {
            return Ok(r);
        }
        let populated: Vec<(usize, FeatureVector)> = self
            .populated_bins()
            .map(|(i, _)| (i, self.cfg.feature(i)))
            .collect();
        if populated.is_empty() {
            return Err(Error::EmptyModel);
        }
        Ok(self.resolved.get_or_init(|| {
            (0..self.table.len())
                .map(|i| {
                    if self.table[i].count > 0 {
                        return i as u32;
                    }
                    let f = self.cfg.feature(i);
                    // populated is in ascending index order, which is lexicographic
                    // (intensity, mean, std), so the first minimum wins ties.
                    let mut best = (u32::MAX, 0usize);
                    for &(j, g) in &populated {
                        let d = f.intensity.abs_diff(g.intensity) as u32
                            + f.mean.abs_diff(g.mean) as u32
                            + f.std.abs_diff(g.std) as u32;
                        if d < best.0 {
                            best = (d, j);
                        }
                    }
                    best.1 as u32
                })
                .collect()
        }))
    }

    /// Chroma for a feature vector, falling back to the nearest populated bin.
    pub fn lookup(&self, f: FeatureVector) -> Result<(f64, f64)> {
        let e = &self.table[self.resolved()?[self.cfg.index(f)] as usize];
        Ok((e.a, e.b))
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        w.write_all(&[self.mode.code()])?;
        w.write_all(&self.cfg.intensity_bins.to_le_bytes())?;
        w.write_all(&self.cfg.mean_bins.to_le_bytes())?;
        w.write_all(&self.cfg.std_bins.to_le_bytes())?;
        w.write_all(&self.cfg.std_ceiling.to_le_bytes())?;
        w.write_all(&(self.training_id.len() as u32).to_le_bytes())?;
        w.write_all(self.training_id.as_bytes())?;
        for e in &self.table {
            w.write_all(&e.count.to_le_bytes())?;
            w.write_all(&e.a.to_le_bytes())?;
            w.write_all(&e.b.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(39 + self.training_id.len() + 24 * self.table.len());
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let fmt_err = |e: std::io::Error| Error::ModelFormat(format!("truncated model: {e}"));
        let r = &mut bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(fmt_err)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::ModelFormat("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(r)?);
        if version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let [mode] = take::<1>(r)?;
        let mode = GrayMode::from_code(mode)?;
        let cfg = BinConfig {
            intensity_bins: u16::from_le_bytes(take(r)?),
            mean_bins: u16::from_le_bytes(take(r)?),
            std_bins: u16::from_le_bytes(take(r)?),
            std_ceiling: f64::from_le_bytes(take(r)?),
        };
        cfg.validate()?;
        let id_len = u32::from_le_bytes(take(r)?) as usize;
        if r.len() < id_len {
            return Err(Error::ModelFormat("truncated training id".into()));
        }
        let training_id = std::str::from_utf8(&r[..id_len])
            .map_err(|_| Error::ModelFormat("training id is not UTF-8".into()))?
            .to_owned();
        *r = &r[id_len..];
        if r.len() != 24 * cfg.bin_count() {
            return Err(Error::ModelFormat(format!(
                "expected {} table bytes, found {}",
                24 * cfg.bin_count(),
                r.len()
            )));
        }
        let table = r
            .chunks_exact(24)
            .map(|c| BinEntry {
                count: u64::from_le_bytes(c[0..8].try_into().unwrap()),
                a: f64::from_le_bytes(c[8..16].try_into().unwrap()),
                b: f64::from_le_bytes(c[16..24].try_into().unwrap()),
            })
            .collect();
        Self::from_parts(cfg, mode, training_id, table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(io_err(path))?)
    }
}

fn take<const N: usize>(r: &mut &[u8]) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| Error::ModelFormat("truncated header".into()))?;
    Ok(buf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSource {
    Internal,
    External,
}

/// A query image with its color reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionPair {
    original: ColorImage,
    reconstructed: ColorImage,
    source: PairSource,
}

impl ReconstructionPair {
    pub fn new(
        original: ColorImage,
        reconstructed: ColorImage,
        source: PairSource,
    ) -> Result<Self> {
        check_dims(original.dims(), reconstructed.dims())?;
        Ok(Self {
            original,
            reconstructed,
            source,
        })
    }

    pub fn original(&self) -> &ColorImage {
        &self.original
    }

    pub fn reconstructed(&self) -> &ColorImage {
        &self.reconstructed
    }

    pub fn source(&self) -> PairSource {
        self.source
    }

    pub fn dims(&self) -> (u32, u32) {
        self.original.dims()
    }
}

/// Recolors `query` from its grayscale form alone.
pub fn reconstruct(
    model: &ChromaLookupModel,
    query: &ColorImage,
    mode: GrayMode,
) -> Result<ReconstructionPair> {
    if mode != model.mode {
        return Err(Error::GrayModeMismatch {
            model: model.mode.as_str(),
            query: mode.as_str(),
        });
    }
    let resolved = model.resolved()?;
    let gray = to_gray(query, mode);
    let feats = features(&gray, &model.cfg);
    let pixels = feats
        .iter()
        .zip(&gray.values)
        .map(|(&f, &g)| {
            let e = &model.table[resolved[model.cfg.index(f)] as usize];
            lab_to_srgb(Lab::new(mode.lightness_of(g), e.a, e.b))
        })
        .collect();
    let reconstructed = ColorImage::new(query.width(), query.height(), pixels);
    ReconstructionPair::new(query.clone(), reconstructed, PairSource::Internal)
}

/// Pairs an original with a reconstruction produced elsewhere. No resampling.
pub fn load_external_pair(original: &Path, reconstructed: &Path) -> Result<ReconstructionPair> {
    let o = crate::dataset::load_image(original)?;
    let r = crate::dataset::load_image(reconstructed)?;
    ReconstructionPair::new(o, r, PairSource::External)
}
