use hetmorph::metrics::{
    calibrate_threshold, compute_roc, equal_error_rate, macer_at_bpcer, mmpmr, prodavg_mmpmr, BpcerRule,
};
use hetmorph::model::{ClassifierRecord, ImposterScoreSet, Label, MediaProvenance, MorphScoreSet, SimilarityRecord};
use proptest::prelude::*;

fn score_set(max_samples: u32) -> impl Strategy<Value = MorphScoreSet> {
    prop::collection::vec(
        prop::collection::vec(prop::collection::vec(0.0f64..1.0, 1..=max_samples as usize), 1..=3),
        1..=20,
    )
    .prop_map(|morphs| {
        let mut records = Vec::new();
        for (m, subjects) in morphs.iter().enumerate() {
            for (n, samples) in subjects.iter().enumerate() {
                for (i, &score) in samples.iter().enumerate() {
                    records.push(SimilarityRecord {
                        morph_id: format!("m{m}"),
                        subject_index: n as u32 + 1,
                        sample_index: i as u32 + 1,
                        score,
                    });
                }
            }
        }
        MorphScoreSet::new(records).unwrap()
    })
}

fn classifier_set() -> impl Strategy<Value = Vec<ClassifierRecord>> {
    (
        prop::collection::vec(0u32..40, 1..60),
        prop::collection::vec(0u32..40, 1..60),
    )
        .prop_map(|(bf, morph)| {
            let rec = |i: usize, s: u32, label| ClassifierRecord {
                image_id: format!("{label:?}{i}"),
                label,
                detection_score: s as f64 / 40.0,
                morph_algorithm: None,
                provenance: MediaProvenance::Digital,
            };
            bf.iter()
                .enumerate()
                .map(|(i, &s)| rec(i, s, Label::BonaFide))
                .chain(morph.iter().enumerate().map(|(i, &s)| rec(i, s, Label::Morph)))
                .collect()
        })
}

proptest! {
    #[test]
    fn prodavg_non_increasing_in_delta(set in score_set(5), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(prodavg_mmpmr(&set, lo) >= prodavg_mmpmr(&set, hi));
    }

    #[test]
    fn prodavg_equals_mmpmr_with_single_samples(set in score_set(1), delta in 0.0f64..1.0) {
        prop_assert_eq!(prodavg_mmpmr(&set, delta), mmpmr(&set, delta).unwrap());
    }

    #[test]
    fn calibration_is_minimal(scores in prop::collection::vec(0u32..50, 1..200), target in prop::sample::select(vec![0.001, 0.01, 0.05, 0.1])) {
        let scores: Vec<f64> = scores.into_iter().map(|s| s as f64 / 10.0).collect();
        let cal = calibrate_threshold(&ImposterScoreSet::new(scores.clone()).unwrap(), target).unwrap();
        let fmr = |d: f64| scores.iter().filter(|&&s| s > d).count() as f64 / scores.len() as f64;
        prop_assert!(fmr(cal.delta) <= target);
        prop_assert_eq!(fmr(cal.delta), cal.achieved_fmr);
        prop_assert!(scores.contains(&cal.delta));
        for &s in scores.iter().filter(|&&s| s < cal.delta) {
            prop_assert!(fmr(s) > target);
        }
    }

    #[test]
    fn eer_invariant_under_increasing_maps(records in classifier_set()) {
        let eer = equal_error_rate(&records).unwrap();
        let maps: [fn(f64) -> f64; 3] = [|s| 3.0 * s - 1.0, |s| s.exp(), |s| s * s * s + s];
        for f in maps {
            let mapped: Vec<ClassifierRecord> = records
                .iter()
                .map(|r| ClassifierRecord { detection_score: f(r.detection_score), ..r.clone() })
                .collect();
            prop_assert!((equal_error_rate(&mapped).unwrap() - eer).abs() < 1e-12);
        }
    }

    #[test]
    fn macer_matches_threshold_enumeration(records in classifier_set()) {
        let targets = [0.001, 0.01, 0.05, 0.2];
        let report = macer_at_bpcer(&records, &targets, BpcerRule::AtMost).unwrap();
        let bf: Vec<f64> = records.iter().filter(|r| r.label == Label::BonaFide).map(|r| r.detection_score).collect();
        let mo: Vec<f64> = records.iter().filter(|r| r.label == Label::Morph).map(|r| r.detection_score).collect();
        let mut thresholds: Vec<f64> = bf.iter().chain(&mo).copied().collect();
        thresholds.push(f64::INFINITY);
        for &target in &targets {
            // smallest MACER over every threshold whose BPCER meets the target
            let best = thresholds
                .iter()
                .filter(|&&t| bf.iter().filter(|&&s| s >= t).count() as f64 / bf.len() as f64 <= target)
                .map(|&t| mo.iter().filter(|&&s| s < t).count() as f64 / mo.len() as f64)
                .fold(f64::INFINITY, f64::min);
            prop_assert_eq!(report.macer(target).unwrap(), best);
        }
        let m: Vec<f64> = targets.iter().map(|&t| report.macer(t).unwrap()).collect();
        prop_assert!(m.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn roc_rates_monotone(records in classifier_set()) {
        let roc = compute_roc(&records).unwrap();
        let pts = roc.points();
        prop_assert_eq!((pts[0].false_accept_rate, pts[0].false_reject_rate), (1.0, 0.0));
        let last = pts[pts.len() - 1];
        prop_assert_eq!((last.false_accept_rate, last.false_reject_rate), (0.0, 1.0));
        for w in pts.windows(2) {
            prop_assert!(w[0].false_accept_rate >= w[1].false_accept_rate);
            prop_assert!(w[0].false_reject_rate <= w[1].false_reject_rate);
        }
    }
}
