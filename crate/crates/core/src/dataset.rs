//! Image ingestion, seeded train/test manifests and the synthetic leaf fixture.
//!
//! # Manifest format (version 1)
//!
//! JSON object with keys `format_version`, `shuffle`, `seed`,
//! `healthy_train_fraction`, `diseased_test_count` (integer or `null` for
//! all), `counts` and `entries`. Each entry is `{path, class, split}` with
//! `path` relative to the dataset root using `/` separators, `class` one of
//! `healthy`/`diseased`, `split` one of `train`/`test`. Diseased files not
//! drawn for the test split are omitted from `entries` and only counted.
//!
//! # Shuffle (`chacha8-fisher-yates-v1`)
//!
//! Paths are sorted byte-wise, then shuffled with a ChaCha8 stream seeded by
//! `ChaCha8Rng::seed_from_u64(seed)`: for `i` from `n-1` down to `1`, swap
//! element `i` with element `next_u64() % (i + 1)`. Healthy files are
//! shuffled first, then diseased files continue on the same stream.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageReader};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::colorspace::{lab_to_srgb, Lab};
use crate::error::{io_err, Error, Result};
use crate::image::{ColorImage, Mask};

pub const MANIFEST_VERSION: u32 = 1;
pub const SHUFFLE_ALGORITHM: &str = "chacha8-fisher-yates-v1";
pub const HEALTHY_DIR: &str = "healthy";
pub const DISEASED_DIR: &str = "diseased";
pub const MASKS_DIR: &str = "masks";

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

/// Decodes a PNG or JPEG into 8-bit RGB. Alpha is dropped, gray is
/// replicated, and 16-bit samples keep their high byte.
pub fn load_image(path: &Path) -> Result<ColorImage> {
    let decode_err = |source| Error::Decode {
        path: path.to_path_buf(),
        source,
    };
    let img = ImageReader::open(path)
        .map_err(io_err(path))?
        .with_guessed_format()
        .map_err(io_err(path))?
        .decode()
        .map_err(decode_err)?;
    let rgb = match img {
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => {
            let wide = img.to_rgb16();
            let (w, h) = wide.dimensions();
            let pixels = wide.pixels().map(|p| p.0.map(|v| (v >> 8) as u8)).collect();
            return Ok(ColorImage::new(w, h, pixels));
        }
        other => other.into_rgb8(),
    };
    Ok(ColorImage::from_rgb_image(&rgb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageClass {
    Healthy,
    Diseased,
}

impl ImageClass {
    /// Ground-truth label: 1 anomalous, -1 normal.
    pub fn label(self) -> i8 {
        match self {
            ImageClass::Healthy => -1,
            ImageClass::Diseased => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: String,
    pub class: ImageClass,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestCounts {
    pub healthy_train: usize,
    pub healthy_test: usize,
    pub diseased_test: usize,
    pub diseased_unused: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub shuffle: String,
    pub seed: u64,
    pub healthy_train_fraction: f64,
    pub diseased_test_count: Option<usize>,
    pub counts: ManifestCounts,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        if self.shuffle != SHUFFLE_ALGORITHM {
            return Err(Error::Manifest(format!(
                "unknown shuffle `{}`",
                self.shuffle
            )));
        }
        let mut seen = HashSet::new();
        let mut counts = ManifestCounts {
            diseased_unused: self.counts.diseased_unused,
            ..Default::default()
        };
        for e in &self.entries {
            if !seen.insert(e.path.as_str()) {
                return Err(Error::Manifest(format!("duplicate path {}", e.path)));
            }
            match (e.class, e.split) {
                (ImageClass::Diseased, Split::Train) => {
                    return Err(Error::DiseasedInTraining(e.path.clone()))
                }
                (ImageClass::Healthy, Split::Train) => counts.healthy_train += 1,
                (ImageClass::Healthy, Split::Test) => counts.healthy_test += 1,
                (ImageClass::Diseased, Split::Test) => counts.diseased_test += 1,
            }
        }
        if counts != self.counts {
            return Err(Error::Manifest(format!(
                "counts {:?} do not match entries {:?}",
                self.counts, counts
            )));
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Training entries, refusing any manifest that lets a diseased image in.
    pub fn training_entries(&self) -> Result<Vec<&ManifestEntry>> {
        self.validate()?;
        Ok(self.split(Split::Train).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }
}

/// Image files under `dir`, recursively, as sorted `/`-joined paths
/// relative to `root`.
pub fn list_images(root: &Path, dir: &str) -> Result<Vec<String>> {
    let base = root.join(dir);
    if !base.is_dir() {
        return Err(Error::MissingDirectory(base));
    }
    let mut out = Vec::new();
    let mut stack = vec![base];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(io_err(&d))? {
            let path = entry.map_err(io_err(&d))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if is_image(&path) {
                let rel = path.strip_prefix(root).expect("walk stays under root");
                let parts: Vec<_> = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect();
                out.push(parts.join("/"));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

pub fn fisher_yates<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

/// Splits file lists into a manifest; a pure function of the sorted lists,
/// the parameters and the seed.
pub fn split_files(
    mut healthy: Vec<String>,
    mut diseased: Vec<String>,
    healthy_train_fraction: f64,
    diseased_test_count: Option<usize>,
    seed: u64,
) -> Result<Manifest> {
    if !(healthy_train_fraction > 0.0 && healthy_train_fraction < 1.0) {
        return Err(Error::InvalidFraction(healthy_train_fraction));
    }
    let n_diseased = diseased_test_count.unwrap_or(diseased.len());
    if n_diseased > diseased.len() {
        return Err(Error::NotEnoughDiseased {
            requested: n_diseased,
            available: diseased.len(),
        });
    }
    healthy.sort();
    diseased.sort();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fisher_yates(&mut healthy, &mut rng);
    fisher_yates(&mut diseased, &mut rng);

    let n_train = (healthy_train_fraction * healthy.len() as f64).round() as usize;
    let mut entries = Vec::with_capacity(healthy.len() + n_diseased);
    for (i, path) in healthy.iter().enumerate() {
        let split = if i < n_train {
            Split::Train
        } else {
            Split::Test
        };
        entries.push(ManifestEntry {
            path: path.clone(),
            class: ImageClass::Healthy,
            split,
        });
    }
    for path in diseased.iter().take(n_diseased) {
        entries.push(ManifestEntry {
            path: path.clone(),
            class: ImageClass::Diseased,
            split: Split::Test,
        });
    }

    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        shuffle: SHUFFLE_ALGORITHM.to_owned(),
        seed,
        healthy_train_fraction,
        diseased_test_count,
        counts: ManifestCounts {
            healthy_train: n_train,
            healthy_test: healthy.len() - n_train,
            diseased_test: n_diseased,
            diseased_unused: diseased.len() - n_diseased,
        },
        entries,
    };
    manifest.validate()?;
    Ok(manifest)
}

/// Builds a manifest from `root/healthy` and `root/diseased`.
pub fn build_manifest(
    root: &Path,
    healthy_train_fraction: f64,
    diseased_test_count: Option<usize>,
    seed: u64,
) -> Result<Manifest> {
    if !(healthy_train_fraction > 0.0 && healthy_train_fraction < 1.0) {
        return Err(Error::InvalidFraction(healthy_train_fraction));
    }
    let healthy = list_images(root, HEALTHY_DIR)?;
    let diseased = list_images(root, DISEASED_DIR)?;
    if healthy.is_empty() {
        return Err(Error::NoHealthyImages(root.join(HEALTHY_DIR)));
    }
    split_files(
        healthy,
        diseased,
        healthy_train_fraction,
        diseased_test_count,
        seed,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureParams {
    pub seed: u64,
    pub n_healthy_train: usize,
    pub n_healthy_test: usize,
    pub n_diseased_test: usize,
    pub size: u32,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self {
            seed: 7,
            n_healthy_train: 40,
            n_healthy_test: 40,
            n_diseased_test: 40,
            size: 128,
        }
    }
}

impl FixtureParams {
    /// Fraction that `build_manifest` needs to reproduce the train/test counts.
    pub fn healthy_train_fraction(&self) -> f64 {
        self.n_healthy_train as f64 / (self.n_healthy_train + self.n_healthy_test) as f64
    }
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    /// Squared normalized radius; `< 1` inside.
    fn rho2(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        (u / self.rx).powi(2) + (v / self.ry).powi(2)
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        self.rho2(x, y) < 1.0
    }

    fn point_at(&self, r: f64, t: f64) -> (f64, f64) {
        let (u, v) = (r * self.rx * t.cos(), r * self.ry * t.sin());
        (
            self.cx + u * self.cos - v * self.sin,
            self.cy + u * self.sin + v * self.cos,
        )
    }
}

struct Uniform(ChaCha8Rng);

impl Uniform {
    fn for_image(seed: u64, class: ImageClass, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let class_code = match class {
            ImageClass::Healthy => 0u64,
            ImageClass::Diseased => 1,
        };
        rng.set_stream((class_code << 32) | index as u64);
        Self(rng)
    }

    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    fn int(&mut self, lo: u64, hi_inclusive: u64) -> u64 {
        lo + self.0.next_u64() % (hi_inclusive - lo + 1)
    }
}

/// One synthetic leaf: green ellipse with lightness texture on black,
/// optionally carrying brown/yellow blotches. Returns the image and the
/// blotch mask.
pub fn synth_leaf(seed: u64, class: ImageClass, index: usize, size: u32) -> (ColorImage, Mask) {
    let mut u = Uniform::for_image(seed, class, index);
    let s = size as f64;
    let angle = u.range(0.0, PI);
    let leaf = Ellipse {
        cx: s / 2.0 + u.range(-0.05, 0.05) * s,
        cy: s / 2.0 + u.range(-0.05, 0.05) * s,
        rx: u.range(0.34, 0.42) * s,
        ry: u.range(0.26, 0.34) * s,
        cos: angle.cos(),
        sin: angle.sin(),
    };
    let base = Lab::new(
        u.range(48.0, 56.0),
        u.range(-36.0, -31.0),
        u.range(36.0, 42.0),
    );
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let dir = u.range(0.0, 2.0 * PI);
            let freq = u.range(2.0, 6.0) * 2.0 * PI / s;
            (freq * dir.cos(), freq * dir.sin(), u.range(0.0, 2.0 * PI))
        })
        .collect();

    let blotches: Vec<(Ellipse, Lab)> = match class {
        ImageClass::Healthy => Vec::new(),
        ImageClass::Diseased => (0..u.int(1, 5))
            .map(|_| {
                let (cx, cy) = leaf.point_at(u.range(0.0, 0.6), u.range(0.0, 2.0 * PI));
                let a = u.range(0.0, PI);
                let e = Ellipse {
                    cx,
                    cy,
                    rx: u.range(0.05, 0.11) * s,
                    ry: u.range(0.05, 0.11) * s,
                    cos: a.cos(),
                    sin: a.sin(),
                };
                let color = if u.unit() < 0.5 {
                    Lab::new(u.range(34.0, 42.0), u.range(9.0, 15.0), u.range(24.0, 32.0))
                } else {
                    Lab::new(u.range(68.0, 76.0), u.range(-5.0, 1.0), u.range(56.0, 66.0))
                };
                (e, color)
            })
            .collect(),
    };

    let mut mask = Mask::from_fn(size, size, |_, _| false);
    let mut pixels = Vec::with_capacity((size * size) as usize);
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            if !leaf.contains(px, py) {
                pixels.push([0, 0, 0]);
                continue;
            }
            let texture: f64 = waves
                .iter()
                .map(|&(fx, fy, ph)| (fx * px + fy * py + ph).sin())
                .sum::<f64>()
                / 3.0;
            let l = base.l + 6.0 * texture + u.range(-1.0, 1.0);
            let mut c = Lab::new(
                l,
                base.a + 0.2 * (l - base.l) + u.range(-0.8, 0.8),
                base.b + u.range(-0.8, 0.8),
            );
            if let Some((_, color)) = blotches.iter().find(|(e, _)| e.contains(px, py)) {
                c = Lab::new(
                    color.l + u.range(-1.5, 1.5),
                    color.a + u.range(-1.0, 1.0),
                    color.b + u.range(-1.0, 1.0),
                );
                mask.values[(y * size + x) as usize] = true;
            }
            pixels.push(lab_to_srgb(c));
        }
    }
    (ColorImage::new(size, size, pixels), mask)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureSummary {
    pub healthy: Vec<PathBuf>,
    pub diseased: Vec<PathBuf>,
    pub masks: Vec<PathBuf>,
}

pub fn healthy_name(i: usize) -> String {
    format!("h_{i:04}.png")
}

pub fn diseased_name(i: usize) -> String {
    format!("d_{i:04}.png")
}

/// Writes `root/{healthy,diseased,masks}`; masks share the diseased file names.
pub fn synth_fixture(root: &Path, params: &FixtureParams) -> Result<FixtureSummary> {
    for dir in [HEALTHY_DIR, DISEASED_DIR, MASKS_DIR] {
        let d = root.join(dir);
        std::fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let mut summary = FixtureSummary {
        healthy: Vec::new(),
        diseased: Vec::new(),
        masks: Vec::new(),
    };
    for i in 0..params.n_healthy_train + params.n_healthy_test {
        let (img, _) = synth_leaf(params.seed, ImageClass::Healthy, i, params.size);
        let p = root.join(HEALTHY_DIR).join(healthy_name(i));
        img.save_png(&p)?;
        summary.healthy.push(p);
    }
    for i in 0..params.n_diseased_test {
        let (img, mask) = synth_leaf(params.seed, ImageClass::Diseased, i, params.size);
        let p = root.join(DISEASED_DIR).join(diseased_name(i));
        img.save_png(&p)?;
        let m = root.join(MASKS_DIR).join(diseased_name(i));
        mask.save_png(&m)?;
        summary.diseased.push(p);
        summary.masks.push(m);
    }
    Ok(summary)
}
