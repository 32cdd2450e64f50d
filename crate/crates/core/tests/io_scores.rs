use std::collections::BTreeMap;

use hetmorph::io::{
    parse_classifier_scores, parse_impostor_scores, parse_similarity_scores, write_classifier_scores,
    write_similarity_scores,
};
use hetmorph::model::{ClassifierRecord, Label, MediaProvenance, MorphScoreSet, SimilarityRecord};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn similarity_records() -> impl Strategy<Value = Vec<SimilarityRecord>> {
    prop::collection::btree_map((0u32..12, 1u32..4, 1u32..6), -1.0e3f64..1.0e3, 1..80).prop_map(|m| {
        m.into_iter()
            .map(|((morph, subject, sample), score)| SimilarityRecord {
                morph_id: format!("m{morph}"),
                subject_index: subject,
                sample_index: sample,
                score,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn similarity_csv_round_trip(records in similarity_records()) {
        let set = MorphScoreSet::new(records).unwrap();
        let mut buf = Vec::new();
        write_similarity_scores(&set, &mut buf).unwrap();
        let back = parse_similarity_scores(std::str::from_utf8(&buf).unwrap(), "rt").unwrap();
        prop_assert_eq!(back, set);
    }

    #[test]
    fn classifier_csv_round_trip(rows in prop::collection::vec((any::<bool>(), -50.0f64..50.0, any::<bool>(), prop::option::of("[a-z]{1,6}")), 1..60)) {
        let records: Vec<ClassifierRecord> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (morph, score, ps, alg))| ClassifierRecord {
                image_id: format!("img{i}"),
                label: if morph { Label::Morph } else { Label::BonaFide },
                detection_score: score,
                morph_algorithm: alg,
                provenance: if ps { MediaProvenance::PrintScanned } else { MediaProvenance::Digital },
            })
            .collect();
        let mut buf = Vec::new();
        write_classifier_scores(&records, &mut buf).unwrap();
        let back = parse_classifier_scores(std::str::from_utf8(&buf).unwrap(), "rt").unwrap();
        prop_assert_eq!(back, records);
    }
}

#[test]
fn grouping_matches_independent_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut text = String::from("morph_id,subject_index,sample_index,score\n");
    let mut expected: BTreeMap<(String, u32), usize> = BTreeMap::new();
    let mut next_sample: BTreeMap<(String, u32), u32> = BTreeMap::new();
    for _ in 0..1000 {
        let morph = format!("m{:03}", rng.random_range(0..150));
        let subject = rng.random_range(1..=3u32);
        let sample = next_sample.entry((morph.clone(), subject)).or_insert(0);
        *sample += 1;
        *expected.entry((morph.clone(), subject)).or_insert(0) += 1;
        text.push_str(&format!("{morph},{subject},{sample},{}\n", rng.random::<f64>()));
    }
    let set = parse_similarity_scores(&text, "generated").unwrap();
    assert_eq!(set.records().len(), 1000);
    assert_eq!(set.sample_counts(), expected);
    let morphs: std::collections::BTreeSet<&str> = expected.keys().map(|(m, _)| m.as_str()).collect();
    assert_eq!(set.morph_count(), morphs.len());
}

#[test]
fn classifier_file_matches_line_split_parse() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut text = String::from("# produced by a detector\nimage_id,label,score,algorithm,provenance\n");
    for i in 0..500 {
        let label = if rng.random_bool(0.4) { "morph" } else { "bonafide" };
        let alg = if label == "morph" { "opencv" } else { "" };
        let prov = if rng.random_bool(0.5) { "digital" } else { "print-scanned" };
        text.push_str(&format!("id{i},{label},{:.6},{alg},{prov}\n", rng.random::<f64>()));
    }
    let records = parse_classifier_scores(&text, "generated").unwrap();
    assert_eq!(records.len(), 500);
    for (line, r) in text.lines().skip(2).zip(&records) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(r.image_id, f[0]);
        assert_eq!(r.label.as_str(), f[1]);
        assert_eq!(r.detection_score, f[2].parse::<f64>().unwrap());
        assert_eq!(r.morph_algorithm.as_deref().unwrap_or(""), f[3]);
        assert_eq!(r.provenance.as_str(), f[4]);
    }
}

#[test]
fn descending_direction_negates() {
    let text = "# score_direction: desc\nscore\n0.2\n0.7\n";
    let set = parse_impostor_scores(text, "d").unwrap();
    assert_eq!(set.scores(), &[-0.2, -0.7]);
}

#[test]
fn malformed_rows_report_line() {
    let text = "morph_id,subject_index,sample_index,score\nm1,1,1,0.5\nm1,1,x,0.4\n";
    let err = parse_similarity_scores(text, "bad.csv").unwrap_err().to_string();
    assert!(err.contains("bad.csv") && err.contains("line 3"), "{err}");
    let text = "image_id,label,score,algorithm,provenance\na,fake,0.1,,digital\n";
    let err = parse_classifier_scores(text, "c").unwrap_err().to_string();
    assert!(err.contains("unknown label"), "{err}");
}
