//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Runs without the libtest harness so criteria execute one at a time (two
//! of them are timing checks) and every line is printed. Exits non-zero if
//! any criterion fails.
//!
//! Criterion 9 needs real data: set `CDA_PLANTVILLAGE_DIR` to a directory
//! holding `healthy/`, `diseased/` and `reconstructions/`, the last
//! mirroring the first two with externally produced reconstructions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use cda_core::colorspace::delta_e_2000_value;
use cda_core::eval::ranked;
use cda_core::scoring::DiffMap;
use cda_core::{roc_auc, top_k_metrics, Lab, LabeledScore, Mask, WeightingFactors};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const SEED: &str = "7";
const DATA_ENV: &str = "CDA_PLANTVILLAGE_DIR";

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(pass: bool, detail: String) -> Outcome {
    if pass {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn random_lab(rng: &mut ChaCha8Rng) -> Lab {
    Lab {
        l: uniform(rng, 0.0, 100.0),
        a: uniform(rng, -128.0, 128.0),
        b: uniform(rng, -128.0, 128.0),
    }
}

/// Runs the `cda` binary with its output captured.
fn cda(args: &[&str]) -> Result<()> {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_cda"))
        .args(args)
        .output()?;
    ensure!(
        out.status.success(),
        "cda {}: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr).trim()
    );
    Ok(())
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn read_json(p: &Path) -> Result<Value> {
    Ok(serde_json::from_str(
        &std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
    )?)
}

fn method<'a>(report: &'a Value, name: &str) -> Result<&'a Value> {
    report["methods"]
        .as_array()
        .and_then(|ms| ms.iter().find(|m| m["method"] == name))
        .with_context(|| format!("report has no `{name}` method"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn c1_sharma() -> Result<Outcome> {
    let path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/sharma_ciede2000.csv");
    let mut rows = Vec::new();
    for rec in csv::Reader::from_path(&path)
        .with_context(|| format!("opening {}", path.display()))?
        .records()
    {
        let v: Vec<f64> = rec?.iter().map(str::parse).collect::<Result<_, _>>()?;
        rows.push(v);
    }
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for v in &rows {
        let p = Lab {
            l: v[0],
            a: v[1],
            b: v[2],
        };
        let q = Lab {
            l: v[3],
            a: v[4],
            b: v[5],
        };
        let k = WeightingFactors::default();
        worst = worst.max((delta_e_2000_value(p, q, k) - v[6]).abs());
        worst = worst.max((delta_e_2000_value(q, p, k) - v[6]).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    Ok(verdict(
        rows.len() == 34 && worst <= 1e-4 && secs < 1.0,
        format!(
            "{} pairs, max |error| {worst:.2e}, {:.3} ms",
            rows.len(),
            secs * 1e3
        ),
    ))
}

fn c2_properties() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let k = WeightingFactors::default();
    let mut violations = 0usize;
    for _ in 0..10_000 {
        let p = random_lab(&mut rng);
        let q = random_lab(&mut rng);
        let d = delta_e_2000_value(p, q, k);
        let r = delta_e_2000_value(q, p, k);
        if delta_e_2000_value(p, p, k) != 0.0
            || (d - r).abs() > 1e-9
            || d < 0.0
            || !d.is_finite()
            || (d == 0.0) != (p == q)
        {
            violations += 1;
        }
        let (l1, l2) = (uniform(&mut rng, 0.0, 100.0), uniform(&mut rng, 0.0, 100.0));
        let lm = (l1 + l2) / 2.0 - 50.0;
        let sl = 1.0 + 0.015 * lm * lm / (20.0 + lm * lm).sqrt();
        let neutral = delta_e_2000_value(
            Lab {
                l: l1,
                a: 0.0,
                b: 0.0,
            },
            Lab {
                l: l2,
                a: 0.0,
                b: 0.0,
            },
            k,
        );
        if (neutral - (l1 - l2).abs() / sl).abs() > 1e-9 {
            violations += 1;
        }
    }
    Ok(verdict(
        violations == 0,
        format!("10000 random pairs + 10000 neutral pairs, {violations} violations"),
    ))
}

/// Random labeled instances of 2..=200 scores; half use a coarse grid to force ties.
fn random_instances(seed: u64, count: usize) -> Vec<Vec<LabeledScore>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|inst| {
            let n = 2 + (rng.next_u64() % 199) as usize;
            let mut v: Vec<LabeledScore> = (0..n)
                .map(|i| {
                    let x = uniform(&mut rng, 0.0, 1.0);
                    LabeledScore {
                        image_id: format!("img{i:03}"),
                        score: if inst % 2 == 0 { x } else { (x * 8.0).floor() },
                        label: if rng.next_u64() % 2 == 0 { 1 } else { -1 },
                    }
                })
                .collect();
            v[0].label = 1;
            v[1].label = -1;
            v
        })
        .collect()
}

fn brute_force_auc(v: &[LabeledScore]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for p in v.iter().filter(|s| s.label == 1) {
        for q in v.iter().filter(|s| s.label == -1) {
            den += 1.0;
            num += if p.score > q.score {
                1.0
            } else if p.score == q.score {
                0.5
            } else {
                0.0
            };
        }
    }
    num / den
}

fn c3_auc_oracle() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for v in random_instances(3, 100) {
        worst = worst.max((roc_auc(&v)?.auc - brute_force_auc(&v)).abs());
    }
    let hand: Vec<LabeledScore> = [(0.9, 1), (0.6, 1), (0.7, -1), (0.2, -1)]
        .iter()
        .enumerate()
        .map(|(i, &(score, label))| LabeledScore {
            image_id: i.to_string(),
            score,
            label,
        })
        .collect();
    let hand_auc = roc_auc(&hand)?.auc;
    Ok(verdict(
        worst <= 1e-9 && hand_auc == 0.75,
        format!("100 instances, max |trapezoid - brute force| {worst:.1e}; hand case {hand_auc}"),
    ))
}

fn c4_top_k() -> Result<Outcome> {
    let mut bad = 0;
    let instances = random_instances(4, 100);
    for v in &instances {
        let k = v.iter().filter(|s| s.label == 1).count();
        let r = top_k_metrics(v, k)?;
        if r.precision != r.recall {
            bad += 1;
        }
        // independent count over the ranking
        let tp = ranked(v).iter().take(k).filter(|s| s.label == 1).count();
        if r.precision != tp as f64 / k as f64 {
            bad += 1;
        }
    }
    Ok(verdict(
        bad == 0,
        format!(
            "{} instances with K = #anomalies, {bad} mismatches",
            instances.len()
        ),
    ))
}

/// Output locations of one full fixture run.
struct Run {
    root: PathBuf,
    data: PathBuf,
    manifest: PathBuf,
    model: PathBuf,
    report: PathBuf,
    diffmaps: PathBuf,
}

impl Run {
    fn new(root: &Path) -> Self {
        let data = root.join("data");
        Run {
            root: root.to_path_buf(),
            manifest: data.join("manifest.json"),
            data,
            model: root.join("model.cdam"),
            report: root.join("report.json"),
            diffmaps: root.join("diffmaps"),
        }
    }

    /// synth → split → train → score → eval; returns elapsed seconds.
    fn pipeline(&self, jobs: &str) -> Result<f64> {
        let t = Instant::now();
        let common = [
            "--seed",
            SEED,
            "--jobs",
            jobs,
            "--manifest",
            s(&self.manifest),
            "--model",
            s(&self.model),
        ];
        let with = |rest: &[&str]| -> Result<()> { cda(&[&common[..], rest].concat()) };
        with(&[
            "synth",
            "--out",
            s(&self.data),
            "--n-train",
            "40",
            "--n-test",
            "40",
            "--n-diseased",
            "40",
            "--size",
            "128",
        ])?;
        with(&["split", "--root", s(&self.data), "--fraction", "0.5"])?;
        with(&["train"])?;
        let scores = self.root.join("scores.csv");
        with(&[
            "score",
            "--out",
            s(&scores),
            "--diffmaps",
            s(&self.diffmaps),
        ])?;
        with(&["eval", "--scores", s(&scores), "--out", s(&self.report)])?;
        let elapsed = t.elapsed().as_secs_f64();
        with(&[
            "heatmap",
            "--out",
            s(&self.root.join("heatmaps")),
            "--composite",
        ])?;
        Ok(elapsed)
    }
}

fn c5_fixture_separation(run: &Run) -> Result<Outcome> {
    let secs = run.pipeline("1")?;
    let report = read_json(&run.report)?;
    let m = method(&report, "ciede2000")?;
    let auc = m["auc"].as_f64().context("auc")?;
    let k = m["top_k"]["k"].as_u64().context("k")?;
    let precision = m["top_k"]["precision"].as_f64().context("precision")?;
    Ok(verdict(
        auc >= 0.95 && k == 40 && precision >= 0.90 && secs <= 60.0,
        format!("AUC {auc:.4}, top-{k} precision {precision:.3}, pipeline {secs:.1} s with 1 job"),
    ))
}

fn c6_localization(run: &Run) -> Result<Outcome> {
    let (mut inside, mut outside, mut leaf_outside) = (Vec::new(), Vec::new(), Vec::new());
    let manifest = cda_core::Manifest::load(&run.manifest)?;
    let mut images = 0;
    for e in manifest
        .entries
        .iter()
        .filter(|e| e.class == cda_core::ImageClass::Diseased)
    {
        let name = Path::new(&e.path).file_name().context("entry file name")?;
        let mask = Mask::load_png(&run.data.join("masks").join(name))?;
        let original = cda_core::load_image(&run.data.join(&e.path))?;
        let raw = std::fs::read(run.diffmaps.join(format!("{}.dmap", e.path)))?;
        let map = DiffMap::read_raw(raw.as_slice())?;
        ensure!(
            map.dims() == (mask.width, mask.height),
            "mask and diff map sizes differ for {}",
            e.path
        );
        for (i, (&v, &m)) in map.values.iter().zip(&mask.values).enumerate() {
            if m {
                inside.push(v);
            } else {
                outside.push(v);
                if original.pixels()[i] != [0, 0, 0] {
                    leaf_outside.push(v);
                }
            }
        }
        images += 1;
    }
    let (mi, mo, ml) = (median(inside), median(outside), median(leaf_outside));
    // the black background reconstructs exactly, so also hold the ratio on leaf pixels alone
    Ok(verdict(
        images == 40 && mi >= 3.0 * mo && mi >= 3.0 * ml,
        format!("{images} images: median ΔE00 inside masks {mi:.2}, outside {mo:.2}, leaf outside {ml:.2} (ratio {:.1})", mi / ml),
    ))
}

fn c7_latency(run: &Run) -> Result<Outcome> {
    let json = run.root.join("bench.json");
    let mut detail = String::new();
    // a shared machine can change speed mid-measurement; allow re-measuring
    for attempt in 1..=3 {
        cda(&[
            "--jobs",
            "1",
            "--manifest",
            s(&run.manifest),
            "--model",
            s(&run.model),
            "bench",
            "--out",
            s(&json),
        ])?;
        let b = read_json(&json)?;
        let h = b["healthy"]["mean_ms"].as_f64().context("healthy mean")?;
        let d = b["diseased"]["mean_ms"].as_f64().context("diseased mean")?;
        let slope = b["scaling"]["slope_ms"].as_f64().context("slope")?;
        let dev = b["scaling"]["relative_deviation"]
            .as_f64()
            .context("deviation")?;
        let (hs, ds) = (
            b["healthy"]["std_ms"].as_f64().unwrap_or(0.0),
            b["diseased"]["std_ms"].as_f64().unwrap_or(0.0),
        );
        detail = format!(
            "healthy {h:.2} ± {hs:.2} ms, diseased {d:.2} ± {ds:.2} ms, slope {slope:.2} ms/image, deviation {:.1}% (attempt {attempt})",
            dev * 100.0
        );
        if h <= 100.0 && d <= 100.0 && dev <= 0.10 {
            return Ok(Outcome::Pass(detail));
        }
    }
    Ok(Outcome::Fail(detail))
}

fn tree(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for ent in std::fs::read_dir(&dir)? {
            let p = ent?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name() != Some("bench.json".as_ref()) {
                out.insert(p.strip_prefix(root)?.to_path_buf(), std::fs::read(&p)?);
            }
        }
    }
    Ok(out)
}

fn c8_determinism(first: &Run) -> Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let second = Run::new(dir.path());
    second.pipeline("3")?;
    let (a, b) = (tree(&first.root)?, tree(&second.root)?);
    let differing: Vec<_> = a
        .keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .collect();
    let pngs = a
        .keys()
        .filter(|k| k.extension() == Some("png".as_ref()))
        .count();
    Ok(verdict(
        differing.is_empty() && pngs > 0,
        if differing.is_empty() {
            format!(
                "{} files identical across runs with 1 and 3 jobs ({pngs} PNGs)",
                a.len()
            )
        } else {
            format!(
                "{} files differ, first {}",
                differing.len(),
                differing[0].display()
            )
        },
    ))
}

fn c9_real_data() -> Result<Outcome> {
    let Some(dir) = std::env::var_os(DATA_ENV).map(PathBuf::from) else {
        return Ok(Outcome::Skip(format!("{DATA_ENV} not set")));
    };
    let recon = dir.join("reconstructions");
    if !dir.join("healthy").is_dir() || !dir.join("diseased").is_dir() || !recon.is_dir() {
        return Ok(Outcome::Skip(format!(
            "{} lacks healthy/, diseased/ or reconstructions/",
            dir.display()
        )));
    }
    let out = tempfile::tempdir()?;
    let manifest = out.path().join("manifest.json");
    let scores = out.path().join("scores.csv");
    let report = out.path().join("report.json");
    cda(&[
        "--seed",
        "0",
        "split",
        "--root",
        s(&dir),
        "--fraction",
        "0.5",
        "--diseased-count",
        "100",
        "--out",
        s(&manifest),
    ])?;
    let data = [
        "--manifest",
        s(&manifest),
        "--data-root",
        s(&dir),
        "--methods",
        "ciede2000,hist",
    ];
    cda(&[
        &data[..],
        &["score", "--reconstructions", s(&recon), "--out", s(&scores)],
    ]
    .concat())?;
    cda(&["eval", "--scores", s(&scores), "--out", s(&report)])?;
    let r = read_json(&report)?;
    let ciede = method(&r, "ciede2000")?["auc"].as_f64().context("auc")?;
    let hist = method(&r, "hist")?["auc"].as_f64().context("auc")?;
    Ok(verdict(
        ciede > hist,
        format!("AUC ciede2000 {ciede:.4} vs histogram {hist:.4}"),
    ))
}

type Check<'a> = Box<dyn Fn() -> Result<Outcome> + 'a>;

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let run = Run::new(dir.path());
    let criteria: Vec<(&str, Check)> = vec![
        ("CIEDE2000 reference pairs", Box::new(c1_sharma)),
        ("color-difference properties", Box::new(c2_properties)),
        ("AUC oracle equivalence", Box::new(c3_auc_oracle)),
        ("top-K precision equals recall", Box::new(c4_top_k)),
        (
            "fixture separation",
            Box::new(|| c5_fixture_separation(&run)),
        ),
        (
            "pixel-level localization",
            Box::new(|| c6_localization(&run)),
        ),
        ("latency protocol", Box::new(|| c7_latency(&run))),
        ("determinism", Box::new(|| c8_determinism(&run))),
        ("real-data ordering", Box::new(c9_real_data)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let line = match check() {
            Ok(Outcome::Pass(d)) => format!("PASS  {d}"),
            Ok(Outcome::Skip(d)) => format!("SKIP  {d}"),
            Ok(Outcome::Fail(d)) => {
                failed += 1;
                format!("FAIL  {d}")
            }
            Err(e) => {
                failed += 1;
                format!("FAIL  error: {e:#}")
            }
        };
        println!("criterion {} ({name}): {line}", i + 1);
    }
    if failed == 0 {
        println!("acceptance: all required criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
