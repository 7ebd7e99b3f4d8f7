//! Image-level detection metrics: ROC/AUC, top-K retrieval, thresholding
//! and per-class score histograms.
//!
//! # Report format (version 1)
//!
//! [`EvalReport`] serializes to JSON as
//! `{format_version, methods: [MethodReport]}` where each method block holds
//! `method`, `n_anomalous`, `n_normal`, `auc`, `roc` (list of `[fpr, tpr]`),
//! `top_k` (`{k, precision, recall, f1}`), `histogram`
//! (`{bins, lo, hi, normal, anomalous}`) and `confusion`
//! (`{theta, tp, fp, tn, fn}`).

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{AnomalyScore, Method};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScore {
    pub image_id: String,
    pub score: f64,
    /// 1 anomalous, -1 normal.
    pub label: i8,
}

impl LabeledScore {
    pub fn new(image_id: impl Into<String>, score: f64, label: i8) -> Self {
        Self {
            image_id: image_id.into(),
            score,
            label,
        }
    }

    pub fn is_anomalous(&self) -> bool {
        self.label == 1
    }
}

fn check_finite(scores: &[LabeledScore]) -> Result<()> {
    match scores.iter().find(|s| !s.score.is_finite()) {
        Some(s) => Err(Error::NonFiniteScore(s.image_id.clone())),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0,0)` to `(1,1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Threshold sweep over distinct scores in descending order; tied scores
/// move together. AUC by the trapezoidal rule.
pub fn roc_auc(scores: &[LabeledScore]) -> Result<RocCurve> {
    check_finite(scores)?;
    let n_pos = scores.iter().filter(|s| s.is_anomalous()).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut sorted: Vec<&LabeledScore> = scores.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].score;
        while i < sorted.len() && sorted[i].score == t {
            if sorted[i].is_anomalous() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = *points.last().unwrap();
        let p = (fp as f64 / n_neg as f64, tp as f64 / n_pos as f64);
        auc += (p.0 - x0) * (p.1 + y0) / 2.0;
        points.push(p);
    }
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopKReport {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Descending by score, ties broken by image id ascending.
pub fn ranked(scores: &[LabeledScore]) -> Vec<&LabeledScore> {
    let mut sorted: Vec<&LabeledScore> = scores.iter().collect();
    sorted.sort_by(|a, b| match b.score.total_cmp(&a.score) {
        Ordering::Equal => a.image_id.cmp(&b.image_id),
        o => o,
    });
    sorted
}

pub fn top_k_metrics(scores: &[LabeledScore], k: usize) -> Result<TopKReport> {
    check_finite(scores)?;
    if k == 0 || k > scores.len() {
        return Err(Error::KOutOfRange { k, n: scores.len() });
    }
    let total_pos = scores.iter().filter(|s| s.is_anomalous()).count();
    let hits = ranked(scores)
        .iter()
        .take(k)
        .filter(|s| s.is_anomalous())
        .count();
    let precision = hits as f64 / k as f64;
    let recall = if total_pos == 0 {
        0.0
    } else {
        hits as f64 / total_pos as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(TopKReport {
        k,
        precision,
        recall,
        f1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Predicts anomalous (1) iff `score > theta`.
pub fn threshold_classify(scores: &[LabeledScore], theta: f64) -> (Vec<i8>, Confusion) {
    let mut c = Confusion::default();
    let predicted = scores
        .iter()
        .map(|s| {
            let p = s.score > theta;
            match (p, s.is_anomalous()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
            if p {
                1
            } else {
                -1
            }
        })
        .collect();
    (predicted, c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
    pub normal: Vec<usize>,
    pub anomalous: Vec<usize>,
}

/// Per-class counts over the shared `[min, max]` score range. A degenerate
/// range puts everything in the first bin.
pub fn score_histogram(scores: &[LabeledScore], bins: usize) -> ScoreHistogram {
    let bins = bins.max(1);
    let lo = scores.iter().map(|s| s.score).fold(f64::INFINITY, f64::min);
    let hi = scores
        .iter()
        .map(|s| s.score)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut h = ScoreHistogram {
        bins,
        lo: if scores.is_empty() { 0.0 } else { lo },
        hi: if scores.is_empty() { 0.0 } else { hi },
        normal: vec![0; bins],
        anomalous: vec![0; bins],
    };
    for s in scores {
        let idx = if hi > lo {
            (((s.score - lo) / (hi - lo)) * bins as f64).floor() as usize
        } else {
            0
        };
        let idx = idx.min(bins - 1);
        if s.is_anomalous() {
            h.anomalous[idx] += 1;
        } else {
            h.normal[idx] += 1;
        }
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionReport {
    pub theta: f64,
    #[serde(flatten)]
    pub counts: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub n_anomalous: usize,
    pub n_normal: usize,
    pub auc: f64,
    pub roc: Vec<(f64, f64)>,
    pub top_k: TopKReport,
    pub histogram: ScoreHistogram,
    pub confusion: ConfusionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub methods: Vec<MethodReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    /// Defaults to the number of anomalous images.
    pub k: Option<usize>,
    pub bins: usize,
    /// Defaults to the (K+1)-th highest score, so the top K are flagged.
    pub theta: Option<f64>,
}

pub fn evaluate_method(
    method: Method,
    scores: &[LabeledScore],
    opts: &EvalOptions,
) -> Result<MethodReport> {
    let roc = roc_auc(scores)?;
    let n_anomalous = scores.iter().filter(|s| s.is_anomalous()).count();
    let k = opts.k.unwrap_or(n_anomalous);
    let top_k = top_k_metrics(scores, k)?;
    let theta = opts.theta.unwrap_or_else(|| {
        let r = ranked(scores);
        r.get(k).map(|s| s.score).unwrap_or(f64::NEG_INFINITY)
    });
    let (_, counts) = threshold_classify(scores, theta);
    Ok(MethodReport {
        method,
        n_anomalous,
        n_normal: scores.len() - n_anomalous,
        auc: roc.auc,
        roc: roc.points,
        top_k,
        histogram: score_histogram(scores, opts.bins.max(1)),
        confusion: ConfusionReport { theta, counts },
    })
}

/// Groups scores by method and evaluates each.
pub fn evaluate(scores: &[AnomalyScore], opts: &EvalOptions) -> Result<EvalReport> {
    let mut by_method: BTreeMap<Method, Vec<LabeledScore>> = BTreeMap::new();
    for s in scores {
        by_method
            .entry(s.method)
            .or_default()
            .push(LabeledScore::new(s.image_id.clone(), s.score, s.label));
    }
    let methods = by_method
        .iter()
        .map(|(&m, v)| evaluate_method(m, v, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        format_version: REPORT_VERSION,
        methods,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }
}
