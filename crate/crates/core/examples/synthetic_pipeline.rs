//! The whole pipeline in memory: synthetic transcripts, stratified folds, a
//! deterministic scorer with token attributions, bucket profiles, subject
//! severity, and rule-based plans.
//!
//! Run: `cargo run --example synthetic_pipeline [seed]`

use memore::attribution::{profile, Label};
use memore::planner::{join_plan_requests, plan_rules};
use memore::severity::{aggregate_subjects, predictions_from_documents, subject_metrics, SeverityWeights};
use memore::synthscore::{make_fixture_corpus, score, stratified_kfold, CorpusSpec, DocMeta, FeatureWeights};
use memore::transcript::parse_transcript;
use std::collections::BTreeMap;

const FOLDS: u32 = 5;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(42);
    let corpus = make_fixture_corpus(&CorpusSpec::default(), seed)?;
    let labelled: Vec<(String, Label)> = corpus.iter().map(|t| (t.subject_id.clone(), t.label)).collect();
    let folds = stratified_kfold(&labelled, FOLDS, seed)?;
    let weights = FeatureWeights {
        seed,
        ..FeatureWeights::default()
    };

    let mut docs = Vec::new();
    for t in &corpus {
        let parsed = parse_transcript(&t.text, &t.doc_id)?;
        let meta = DocMeta {
            subject_id: t.subject_id.clone(),
            task: t.task,
            label: Some(t.label),
        };
        for k in 0..FOLDS {
            docs.push(score(&parsed, &meta, &weights, k)?);
        }
    }
    println!("{} transcripts, {} scored documents", corpus.len(), docs.len());
    let mut per_fold: BTreeMap<u32, usize> = BTreeMap::new();
    folds.values().for_each(|f| *per_fold.entry(*f).or_default() += 1);
    println!("held-out subjects per fold: {per_fold:?}");

    let profiles = docs.iter().map(profile).collect::<Result<Vec<_>, _>>()?;
    let subjects = aggregate_subjects(&predictions_from_documents(&docs), &SeverityWeights::default())?;
    let metrics = subject_metrics(&subjects, &[0.5, 0.75])?;
    println!("AUC {:.3}", metrics.auc.unwrap_or(f64::NAN));

    let requests = join_plan_requests(&subjects, &profiles)?;
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    for r in &requests {
        let plan = plan_rules(&r.request)?;
        let key: Vec<_> = plan.features.iter().map(|f| f.display_name()).collect();
        *tally.entry(key.join(" + ")).or_default() += 1;
    }
    for (plan, n) in tally {
        println!("{n:>4} subjects: {plan}");
    }
    Ok(())
}
