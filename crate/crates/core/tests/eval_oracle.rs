use cda_core::eval::{roc_auc, top_k_metrics, LabeledScore};
use proptest::prelude::*;

/// P(s_pos > s_neg) + ½ P(s_pos = s_neg) over all pairs.
fn brute_force_auc(scores: &[LabeledScore]) -> f64 {
    let pos: Vec<f64> = scores
        .iter()
        .filter(|s| s.label == 1)
        .map(|s| s.score)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .filter(|s| s.label == -1)
        .map(|s| s.score)
        .collect();
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

#[test]
fn brute_force_hand_case() {
    let s = [
        LabeledScore::new("a", 0.9, 1),
        LabeledScore::new("b", 0.6, 1),
        LabeledScore::new("c", 0.7, -1),
        LabeledScore::new("d", 0.2, -1),
    ];
    assert_eq!(brute_force_auc(&s), 0.75);
    assert_eq!(roc_auc(&s).unwrap().auc, 0.75);
}

fn instance() -> impl Strategy<Value = Vec<LabeledScore>> {
    // coarse score grid so ties are common
    prop::collection::vec((0u8..20, prop::bool::ANY), 2..=200).prop_filter_map(
        "needs both classes",
        |v| {
            let s: Vec<LabeledScore> = v
                .iter()
                .enumerate()
                .map(|(i, &(q, pos))| {
                    LabeledScore::new(format!("{i:04}"), q as f64 / 4.0, if pos { 1 } else { -1 })
                })
                .collect();
            let pos = s.iter().filter(|x| x.label == 1).count();
            (pos > 0 && pos < s.len()).then_some(s)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn trapezoid_matches_pairwise(s in instance()) {
        let roc = roc_auc(&s).unwrap();
        prop_assert!((roc.auc - brute_force_auc(&s)).abs() < 1e-9);
        prop_assert_eq!(roc.points.first().copied(), Some((0.0, 0.0)));
        prop_assert_eq!(roc.points.last().copied(), Some((1.0, 1.0)));
        for w in roc.points.windows(2) {
            prop_assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn auc_is_rank_invariant(s in instance()) {
        let t: Vec<LabeledScore> = s.iter().map(|x| LabeledScore::new(x.image_id.clone(), (x.score * 3.0).exp() - 7.0, x.label)).collect();
        prop_assert!((roc_auc(&s).unwrap().auc - roc_auc(&t).unwrap().auc).abs() < 1e-12);
    }

    #[test]
    fn precision_equals_recall_at_k_positives(s in instance()) {
        let k = s.iter().filter(|x| x.label == 1).count();
        let r = top_k_metrics(&s, k).unwrap();
        prop_assert_eq!(r.precision, r.recall);
        if r.precision > 0.0 {
            prop_assert!((r.f1 - r.precision).abs() < 1e-12);
        }
    }
}
