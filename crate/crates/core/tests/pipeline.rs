use memore::attribution::{
    group_profile, parse_attribution_jsonl, profile, write_attribution_jsonl, AttributionDocument, AttributionError,
    BucketProfile, Label, ReadOptions,
};
use memore::severity::{aggregate_subjects, predictions_from_documents, severity_histogram, SeverityWeights};
use memore::synthscore::{make_fixture_corpus, score, CorpusSpec, DocMeta, FeatureWeights, SyntheticTranscript};
use memore::transcript::{parse_transcript, token_frequencies, TokenCategory};
use proptest::prelude::*;

fn corpus() -> Vec<SyntheticTranscript> {
    make_fixture_corpus(&CorpusSpec::default(), 42).unwrap()
}

fn scored(corpus: &[SyntheticTranscript], folds: u32) -> Vec<AttributionDocument> {
    let w = FeatureWeights::default();
    let mut docs = Vec::new();
    for t in corpus {
        let parsed = parse_transcript(&t.text, &t.doc_id).unwrap();
        let meta = DocMeta {
            subject_id: t.subject_id.clone(),
            task: t.task,
            label: Some(t.label),
        };
        for k in 0..folds {
            docs.push(score(&parsed, &meta, &w, k).unwrap());
        }
    }
    docs
}

#[test]
fn exact_filler_fraction_fixture() {
    // 319 fillers in 5000 tokens
    let mut words = vec!["cookie"; 5000 - 319];
    words.extend(["&uh"; 319]);
    let lines: Vec<String> = words.chunks(50).map(|c| format!("*PAR:\t{}", c.join(" "))).collect();
    let t = parse_transcript(&lines.join("\n"), "fx").unwrap();
    let f = token_frequencies(&t).unwrap();
    assert!((f[&TokenCategory::Filler] - 0.0638).abs() < 1e-12);
}

#[test]
fn synthetic_ad_filler_rate_near_target() {
    let mut fillers = 0usize;
    let mut total = 0usize;
    for t in corpus().iter().filter(|t| t.label == Label::AD) {
        let parsed = parse_transcript(&t.text, &t.doc_id).unwrap();
        for tok in parsed.participant_tokens() {
            total += 1;
            fillers += (tok.category == TokenCategory::Filler) as usize;
        }
    }
    let pct = 100.0 * fillers as f64 / total as f64;
    assert!((pct - 6.38).abs() <= 0.5, "AD filler frequency {pct:.3}%");
}

#[test]
fn ad_disfluency_ratio_exceeds_hc() {
    let c = corpus();
    let docs = scored(&c, 1);
    let profiles: Vec<BucketProfile> = docs.iter().map(|d| profile(d).unwrap()).collect();
    let mean = |label: Label| {
        let v: Vec<f64> = profiles
            .iter()
            .zip(&docs)
            .filter(|(_, d)| d.true_label == Some(label))
            .map(|(p, _)| p.disfluency_ratio)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(
        mean(Label::AD) > mean(Label::HC),
        "{} <= {}",
        mean(Label::AD),
        mean(Label::HC)
    );
}

#[test]
fn separated_classes_put_histogram_modes_on_opposite_halves() {
    let docs = scored(&corpus(), 5);
    let subjects = aggregate_subjects(&predictions_from_documents(&docs), &SeverityWeights::default()).unwrap();
    let h = severity_histogram(&subjects, 20).unwrap();
    let mode = |class: &str| {
        let row = &h.counts[class];
        (0..row.len()).max_by_key(|&i| (row[i], std::cmp::Reverse(i))).unwrap()
    };
    assert!(mode("AD") >= 10, "AD mode bin {}", mode("AD"));
    assert!(mode("HC") < 10, "HC mode bin {}", mode("HC"));
}

#[test]
fn group_mean_equals_naive_average() {
    let docs = scored(&corpus()[..40], 2);
    let profiles: Vec<BucketProfile> = docs.iter().map(|d| profile(d).unwrap()).collect();
    for class in [Label::AD, Label::HC] {
        let g = group_profile(&profiles, class, 0.5).unwrap();
        let members: Vec<&BucketProfile> = profiles
            .iter()
            .filter(|p| (p.pred_prob_ad >= 0.5) == (class == Label::AD))
            .collect();
        assert_eq!(g.n_docs, members.len());
        for c in TokenCategory::ALL {
            let naive = members.iter().map(|p| p.fine_mass[&c]).sum::<f64>() / members.len() as f64;
            assert!((g.attr[&c] - naive).abs() < 1e-12);
        }
    }
}

#[test]
fn attribution_file_round_trip() {
    let docs = scored(&corpus()[..5], 3);
    let mut buf = Vec::new();
    write_attribution_jsonl(&mut buf, &docs).unwrap();
    let back =
        parse_attribution_jsonl(std::str::from_utf8(&buf).unwrap(), ReadOptions { fold_count: Some(3) }).unwrap();
    assert_eq!(back, docs);
    match parse_attribution_jsonl(std::str::from_utf8(&buf).unwrap(), ReadOptions { fold_count: Some(2) }) {
        Err(AttributionError::InvalidRecords(errs)) => assert_eq!(errs.len(), 5),
        other => panic!("expected fold errors, got {other:?}"),
    }
}

#[test]
fn corpus_is_seed_stable() {
    let a = make_fixture_corpus(&CorpusSpec::default(), 9).unwrap();
    let b = make_fixture_corpus(&CorpusSpec::default(), 9).unwrap();
    let c = make_fixture_corpus(&CorpusSpec::default(), 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

proptest! {
    #[test]
    fn frequencies_sum_to_one(words in proptest::collection::vec("[a-z]{1,8}|&uh|\\(\\.\\)|\\.|she|\\[/\\]", 1..80)) {
        let t = parse_transcript(&format!("*PAR:\t{}", words.join(" ")), "p").unwrap();
        let f = token_frequencies(&t).unwrap();
        prop_assert!((f.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
