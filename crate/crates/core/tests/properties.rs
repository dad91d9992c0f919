use std::collections::BTreeSet;

use holoverify::catalog::{resample_fps, AttackKind, ClipRecord, Label};
use holoverify::decision::{calibrate_threshold, decide_cumulative, prefix_scores, video_score, EmbeddingSequence, Strategy as Mode};
use holoverify::encoder::triplet_loss;
use holoverify::metrics::{f_score, roc_auc, Verdict};
use holoverify::splitter::{generate_splits, Subset};
use proptest::prelude::*;

fn embeddings(max_frames: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
    prop::collection::vec(prop::collection::vec(0.05f32..1.0, dim), 2..max_frames)
}

fn labelled_scores() -> impl Strategy<Value = Vec<(f64, Label)>> {
    prop::collection::vec((0u8..30, any::<bool>()), 2..40).prop_map(|v| {
        let mut out: Vec<(f64, Label)> =
            v.into_iter().map(|(s, a)| (s as f64 / 30.0, if a { Label::Attack } else { Label::Original })).collect();
        out[0].1 = Label::Attack;
        out[1].1 = Label::Original;
        out
    })
}

fn catalog(n_models: usize, n_ids: usize) -> Vec<ClipRecord> {
    let mut out = Vec::new();
    for m in 0..n_models {
        for i in 0..n_ids {
            for kind in [AttackKind::None, AttackKind::CopyWithoutHolo, AttackKind::PhotoReplacement] {
                out.push(ClipRecord {
                    clip_id: format!("{}/{m}/{i}", kind.as_str()),
                    document_model: format!("m{m}"),
                    identity: format!("i{i}"),
                    label: kind.label(),
                    attack_kind: kind,
                    fps: 5.0,
                    frames: Vec::new(),
                });
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn video_score_is_permutation_and_scale_invariant(v in embeddings(12, 6), shift in 0usize..12, scale in 0.1f32..10.0) {
        let base = video_score(&EmbeddingSequence::new("a", v.clone())).unwrap();
        let mut rotated = v.clone();
        rotated.rotate_left(shift % v.len());
        rotated[0].iter_mut().for_each(|x| *x *= scale);
        let moved = video_score(&EmbeddingSequence::new("b", rotated)).unwrap();
        prop_assert!((base - moved).abs() < 1e-6);
        prop_assert!((0.0..=2.0).contains(&base));
    }

    #[test]
    fn calibration_beats_constant_predictors(val in labelled_scores()) {
        let cal = calibrate_threshold(&val, Mode::Whole).unwrap();
        let labels: Vec<Label> = val.iter().map(|v| v.1).collect();
        let verdicts: Vec<Verdict> = val.iter().map(|v| cal.verdict(v.0)).collect();
        let achieved = f_score(&verdicts, &labels).fscore;
        prop_assert!((achieved - cal.validation_fscore).abs() < 1e-12);
        for constant in [Verdict::Attack, Verdict::Original] {
            prop_assert!(achieved >= f_score(&vec![constant; val.len()], &labels).fscore);
        }
    }

    #[test]
    fn cumulative_acceptance_implies_a_prefix_reaches_tau(v in embeddings(15, 4), tau in 0.0f64..0.3) {
        let mut cal = calibrate_threshold(&[(0.0, Label::Attack), (1.0, Label::Original)], Mode::Cumulative).unwrap();
        cal.threshold = tau;
        let prefix = prefix_scores(&EmbeddingSequence::new("c", v.clone())).unwrap();
        let short = v.len() < 5;
        let d = decide_cumulative(v, &cal, 5).unwrap();
        if short {
            prop_assert_eq!(d.stop_index, prefix.len() - 1);
        } else if d.verdict == Verdict::Original {
            prop_assert!(d.stop_index >= 4);
            prop_assert!(prefix[d.stop_index] >= tau);
        } else {
            prop_assert!(prefix.iter().skip(4).all(|&s| s < tau));
            prop_assert_eq!(d.stop_index, prefix.len() - 1);
        }
    }

    #[test]
    fn splits_are_identity_disjoint(n_models in 1usize..8, n_ids in 2usize..7, seed in any::<u64>()) {
        let cat = catalog(n_models, n_ids);
        for plan in generate_splits(&cat, 5, seed).unwrap() {
            let p = plan.partition(&cat);
            let ids = |v: &[&ClipRecord]| v.iter().map(|c| c.identity_key()).collect::<BTreeSet<_>>();
            let (tr, va, te) = (ids(&p.train), ids(&p.validation), ids(&p.test_vanilla));
            prop_assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
            prop_assert!(p.train.iter().chain(&p.validation).all(|c| c.attack_kind != AttackKind::PhotoReplacement));
            for c in &p.test_photo_replacement {
                prop_assert_eq!(plan.subset_of(c), Some(Subset::Test));
            }
        }
    }

    #[test]
    fn triplet_loss_is_nonnegative_and_zero_for_far_negatives(a in prop::collection::vec(-1.0f64..1.0, 1..16)) {
        let p: Vec<f64> = a.iter().map(|x| x + 0.01).collect();
        let n: Vec<f64> = a.iter().map(|x| x + 10.0).collect();
        prop_assert_eq!(triplet_loss(&a, &p, &n, 1.0), 0.0);
        prop_assert!(triplet_loss(&a, &n, &p, 1.0) >= 0.0);
    }

    #[test]
    fn roc_auc_flips_with_score_sign(val in labelled_scores()) {
        let scores: Vec<f64> = val.iter().map(|v| v.0).collect();
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let labels: Vec<Label> = val.iter().map(|v| v.1).collect();
        let a = roc_auc(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a + roc_auc(&neg, &labels).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resampling_keeps_order_without_duplicates(n in 0usize..60, k in 1u32..5) {
        let frames: Vec<usize> = (0..n).collect();
        let out = resample_fps(&frames, 5.0 * k as f64, 5.0).unwrap();
        prop_assert!(out.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(out.len(), n.div_ceil(k as usize));
    }
}
