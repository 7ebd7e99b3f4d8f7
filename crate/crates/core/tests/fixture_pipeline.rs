//! Reconstruction and scoring behavior on the synthetic leaf fixture.

use cda_core::colorspace::{srgb_to_lab, WeightingFactors};
use cda_core::dataset::synth_leaf;
use cda_core::eval::{score_histogram, LabeledScore};
use cda_core::scoring::{build_reference_histogram, hist_bin, ssim_score};
use cda_core::{
    ciede_score, diff_map, reconstruct, train_colorizer, BackgroundRule, BinConfig,
    ChromaLookupModel, ColorImage, GrayMode, ImageClass, Mask, Normalize,
};

const SEED: u64 = 7;
const SIZE: u32 = 128;

/// Largest mean leaf-pixel ΔE00 over the 40 held-out healthy images was 1.87
/// when this bound was recorded.
const HEALTHY_MEAN_DE_BOUND: f64 = 2.5;

fn healthy(range: std::ops::Range<usize>) -> Vec<ColorImage> {
    range
        .map(|i| synth_leaf(SEED, ImageClass::Healthy, i, SIZE).0)
        .collect()
}

fn model() -> ChromaLookupModel {
    train_colorizer(
        &healthy(0..40),
        BinConfig::default(),
        GrayMode::LabL,
        BackgroundRule::Include,
    )
    .unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn leaf_mask(img: &ColorImage) -> Mask {
    Mask::from_fn(img.width(), img.height(), |x, y| img.get(x, y) != [0, 0, 0])
}

#[test]
fn training_is_order_independent() {
    let mut imgs = healthy(0..12);
    let a = train_colorizer(
        &imgs,
        BinConfig::default(),
        GrayMode::LabL,
        BackgroundRule::Include,
    )
    .unwrap();
    imgs.reverse();
    imgs.swap(2, 7);
    let b = train_colorizer(
        &imgs,
        BinConfig::default(),
        GrayMode::LabL,
        BackgroundRule::Include,
    )
    .unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
}

#[test]
fn adding_images_never_removes_bins() {
    let imgs = healthy(0..10);
    let mut prev: Vec<usize> = Vec::new();
    for n in 1..=imgs.len() {
        let m = train_colorizer(
            &imgs[..n],
            BinConfig::default(),
            GrayMode::Luma601,
            BackgroundRule::Include,
        )
        .unwrap();
        let bins: Vec<usize> = m.populated_bins().map(|(i, _)| i).collect();
        assert!(
            prev.iter().all(|b| bins.contains(b)),
            "bin vanished after adding image {n}"
        );
        prev = bins;
    }
}

#[test]
fn healthy_holdout_reconstructs_closely() {
    let model = model();
    for (i, q) in healthy(40..80).iter().enumerate() {
        let pair = reconstruct(&model, q, GrayMode::LabL).unwrap();
        let map = diff_map(&pair, WeightingFactors::default()).unwrap();
        let mean = ciede_score(&map, Some(&leaf_mask(q)), Normalize::Mean).unwrap();
        assert!(
            mean < HEALTHY_MEAN_DE_BOUND,
            "healthy image {} mean ΔE {mean}",
            40 + i
        );
    }
}

#[test]
fn lightness_is_preserved() {
    let model = model();
    for i in 0..5 {
        let (q, _) = synth_leaf(SEED, ImageClass::Diseased, i, SIZE);
        let pair = reconstruct(&model, &q, GrayMode::LabL).unwrap();
        for (&a, &b) in q.pixels().iter().zip(pair.reconstructed().pixels()) {
            let dl = (srgb_to_lab(a).l - srgb_to_lab(b).l).abs();
            assert!(dl <= 2.0, "{a:?} -> {b:?}: ΔL* {dl}");
        }
    }
}

#[test]
fn blotches_light_up_in_the_diff_map() {
    let model = model();
    for i in 0..40 {
        let (q, blotch) = synth_leaf(SEED, ImageClass::Diseased, i, SIZE);
        let pair = reconstruct(&model, &q, GrayMode::LabL).unwrap();
        let map = diff_map(&pair, WeightingFactors::default()).unwrap();
        let leaf = leaf_mask(&q);
        let pick = |sel: &dyn Fn(usize) -> bool| {
            median(
                (0..map.values.len())
                    .filter(|&k| sel(k))
                    .map(|k| map.values[k])
                    .collect(),
            )
        };
        let inside = pick(&|k| blotch.values[k]);
        let healthy_leaf = pick(&|k| leaf.values[k] && !blotch.values[k]);
        assert!(
            inside > healthy_leaf,
            "image {i}: blotch median {inside} vs leaf median {healthy_leaf}"
        );
    }
}

#[test]
fn baseline_scores_order_classes() {
    let model = model();
    let reference = build_reference_histogram(&healthy(0..40), "fixture").unwrap();
    let score_set = |class: ImageClass, range: std::ops::Range<usize>| {
        range
            .map(|i| {
                let (q, _) = synth_leaf(SEED, class, i, SIZE);
                let pair = reconstruct(&model, &q, GrayMode::LabL).unwrap();
                (
                    ssim_score(&pair).unwrap(),
                    cda_core::hist_score(&q, &reference),
                )
            })
            .collect::<Vec<_>>()
    };
    let h = score_set(ImageClass::Healthy, 40..80);
    let d = score_set(ImageClass::Diseased, 0..40);
    let med = |v: &[(f64, f64)], f: fn(&(f64, f64)) -> f64| median(v.iter().map(f).collect());
    assert!(med(&d, |p| p.0) > med(&h, |p| p.0), "ssim");
    assert!(med(&d, |p| p.1) > med(&h, |p| p.1), "hist");
}

#[test]
fn reference_histogram_of_fixture() {
    let h = build_reference_histogram(&healthy(0..40), "fixture").unwrap();
    // The black background outweighs any single leaf bin.
    assert_eq!(h.top_bin(), hist_bin([0, 0, 0]));
    let mut leaf_bins: Vec<(usize, f64)> = h.freq.iter().copied().enumerate().skip(1).collect();
    leaf_bins.sort_by(|a, b| b.1.total_cmp(&a.1));
    let top = leaf_bins[0].0;
    let (r, g, b) = (top / 64, (top / 8) % 8, top % 8);
    assert!(g > r && g > b, "top leaf bin {top} is not green");
    let green_mass: f64 = h
        .freq
        .iter()
        .enumerate()
        .filter(|(i, _)| (i / 8) % 8 > i / 64)
        .map(|(_, f)| f)
        .sum();
    assert!(green_mass > 0.9 * (1.0 - h.freq[0]), "{green_mass}");
}

#[test]
fn score_histograms_separate_classes() {
    let model = model();
    let mut scores = Vec::new();
    for (class, range) in [(ImageClass::Healthy, 40..80), (ImageClass::Diseased, 0..40)] {
        for i in range {
            let (q, _) = synth_leaf(SEED, class, i, SIZE);
            let map = diff_map(
                &reconstruct(&model, &q, GrayMode::LabL).unwrap(),
                WeightingFactors::default(),
            )
            .unwrap();
            scores.push(LabeledScore::new(
                format!("{class:?}{i}"),
                ciede_score(&map, None, Normalize::Sum).unwrap(),
                class.label(),
            ));
        }
    }
    let h = score_histogram(&scores, 20);
    assert_eq!(h.normal.iter().sum::<usize>(), 40);
    assert_eq!(h.anomalous.iter().sum::<usize>(), 40);
    let class_median_bin = |counts: &[usize]| {
        let mut seen = 0;
        counts.iter().position(|&c| {
            seen += c;
            seen * 2 >= 40
        })
    };
    assert!(class_median_bin(&h.anomalous) > class_median_bin(&h.normal));
}
