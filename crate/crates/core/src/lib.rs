//! Color anomaly detection by grayscale-to-color reconstruction.
//!
//! A colorizer fitted only on healthy images predicts the chroma of a query
//! from its grayscale form. Regions whose colors the healthy data cannot
//! explain (lesions, discoloration) reconstruct poorly, and the per-pixel
//! CIEDE2000 difference between query and reconstruction both localizes
//! them and, summed, scores the image.
//!
//! ```
//! use cda_core::{
//!     ciede_score, diff_map, reconstruct, train_colorizer, BackgroundRule, BinConfig, ColorImage,
//!     GrayMode, Normalize, WeightingFactors,
//! };
//!
//! let healthy = ColorImage::filled(16, 16, [60, 140, 50]);
//! let model = train_colorizer(&[healthy], BinConfig::default(), GrayMode::LabL, BackgroundRule::Include)?;
//!
//! let query = ColorImage::filled(16, 16, [150, 100, 40]);
//! let pair = reconstruct(&model, &query, GrayMode::LabL)?;
//! let map = diff_map(&pair, WeightingFactors::default())?;
//! assert!(ciede_score(&map, None, Normalize::Mean)? > 10.0);
//! # Ok::<(), cda_core::Error>(())
//! ```

pub mod colorspace;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod image;
pub mod reconstruct;
pub mod render;
pub mod scoring;

pub use colorspace::{
    delta_e_2000, rgb_to_lab, srgb_to_lab, DeltaE2000Breakdown, Lab, LabImage, WeightingFactors,
};
pub use dataset::{
    build_manifest, load_image, synth_fixture, FixtureParams, ImageClass, Manifest, Split,
};
pub use error::{Error, Result};
pub use eval::{
    roc_auc, score_histogram, threshold_classify, top_k_metrics, EvalReport, LabeledScore,
    RocCurve, TopKReport,
};
pub use image::{ColorImage, GrayImage, Mask, Rgb};
pub use reconstruct::{
    load_external_pair, reconstruct, to_gray, train_colorizer, BackgroundRule, BinConfig,
    ChromaLookupModel, FeatureVector, GrayMode, PairSource, ReconstructionPair,
};
pub use render::{render_heatmap, ColormapRange, ColormapSpec};
pub use scoring::{
    build_reference_histogram, ciede_score, diff_map, hist_score, l2_score, ssim_score,
    AnomalyScore, DiffMap, HealthyHistogram, Method, Normalize,
};
