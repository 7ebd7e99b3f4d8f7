//! Shared inputs for the kernel benchmarks.

use cda_core::dataset::synth_leaf;
use cda_core::{
    train_colorizer, BackgroundRule, BinConfig, ChromaLookupModel, ColorImage, GrayMode,
    ImageClass, LabeledScore,
};

pub const SEED: u64 = 7;
pub const SIZE: u32 = 128;

/// Lookup model fitted on `n` synthetic healthy leaves.
pub fn fixture_model(n: usize) -> ChromaLookupModel {
    let imgs: Vec<ColorImage> = (0..n)
        .map(|i| synth_leaf(SEED, ImageClass::Healthy, i, SIZE).0)
        .collect();
    train_colorizer(
        &imgs,
        BinConfig::default(),
        GrayMode::default(),
        BackgroundRule::Include,
    )
    .expect("fixture trains")
}

pub fn diseased_leaf(index: usize) -> ColorImage {
    synth_leaf(SEED, ImageClass::Diseased, index, SIZE).0
}

/// `n` scores alternating labels on a deterministic sawtooth.
pub fn labeled_scores(n: usize) -> Vec<LabeledScore> {
    (0..n)
        .map(|i| LabeledScore {
            image_id: format!("{i:05}"),
            score: ((i * 7919) % 1000) as f64 / 1000.0,
            label: if i % 2 == 0 { 1 } else { -1 },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_are_usable() {
        assert!(fixture_model(2).populated_bins().count() > 0);
        assert_eq!(diseased_leaf(0).dims(), (SIZE, SIZE));
        let s = labeled_scores(10);
        assert!(s.iter().any(|x| x.label == 1) && s.iter().any(|x| x.label == -1));
    }
}
