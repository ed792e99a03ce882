//! Cross-fold aggregation, the severity index, and threshold metrics.
//!
//! Every fold model scores every subject, so a subject carries `K` AD
//! probabilities. From these we take the mean, the fraction of folds voting
//! AD, and the population variance, and combine them as
//!
//! ```text
//! index = clamp(alpha * mean + beta * vote_rate - gamma * variance, 0, 1)
//! ```

use crate::attribution::{AttributionDocument, Label};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SeverityError {
    #[error("subject {0} has no fold predictions")]
    EmptyFolds(String),
    #[error("subject {subject_id}: probability {prob} outside [0, 1]")]
    ProbOutOfRange { subject_id: String, prob: f64 },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("no predictions")]
    EmptyInput,
    #[error("AUC needs at least one AD and one HC example")]
    OneClassOnly,
    #[error("duplicate prediction for subject {subject_id} fold {fold}")]
    DuplicatePrediction { subject_id: String, fold: u32 },
    #[error("subject {0} has conflicting labels")]
    ConflictingLabel(String),
    #[error("predictions CSV line {line}: {message}")]
    Csv { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// A fold votes AD when its probability is `>=` this.
    pub vote_threshold: f64,
    /// Subjects with variance at or below this are flagged stable.
    pub stability_cutoff: f64,
}

impl Default for SeverityWeights {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            beta: 0.4,
            gamma: 1.0,
            vote_threshold: 0.5,
            stability_cutoff: 0.05,
        }
    }
}

impl SeverityWeights {
    pub fn validate(&self) -> Result<(), SeverityError> {
        let all = [
            self.alpha,
            self.beta,
            self.gamma,
            self.vote_threshold,
            self.stability_cutoff,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(SeverityError::InvalidWeights("non-finite value".into()));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(SeverityError::InvalidWeights("alpha, beta, gamma must be >= 0".into()));
        }
        if self.alpha + self.beta <= 0.0 {
            return Err(SeverityError::InvalidWeights("alpha + beta must be > 0".into()));
        }
        if !(self.vote_threshold > 0.0 && self.vote_threshold < 1.0) {
            return Err(SeverityError::InvalidWeights(
                "vote threshold must lie in (0, 1)".into(),
            ));
        }
        if self.stability_cutoff < 0.0 {
            return Err(SeverityError::InvalidWeights("stability cutoff must be >= 0".into()));
        }
        Ok(())
    }

    /// The index before clamping.
    pub fn raw_index(&self, mean_prob: f64, vote_rate: f64, variance: f64) -> f64 {
        self.alpha * mean_prob + self.beta * vote_rate - self.gamma * variance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSeverity {
    pub subject_id: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub probs: Vec<f64>,
    pub mean_prob: f64,
    pub vote_rate: f64,
    pub variance: f64,
    pub severity_index: f64,
    pub stability_flag: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

/// Aggregate one subject's fold probabilities. Statistics are computed on a
/// sorted copy, so the result does not depend on fold order.
pub fn aggregate_subject(
    subject_id: &str,
    probs: &[f64],
    w: &SeverityWeights,
) -> Result<SubjectSeverity, SeverityError> {
    w.validate()?;
    if probs.is_empty() {
        return Err(SeverityError::EmptyFolds(subject_id.to_string()));
    }
    if let Some(&bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(SeverityError::ProbOutOfRange {
            subject_id: subject_id.to_string(),
            prob: bad,
        });
    }
    let mut sorted = probs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() as f64;
    let mean_prob = sorted.iter().sum::<f64>() / k;
    let votes = sorted.iter().filter(|p| **p >= w.vote_threshold).count();
    let vote_rate = votes as f64 / k;
    let variance = sorted.iter().map(|p| (p - mean_prob).powi(2)).sum::<f64>() / k;
    let severity_index = w.raw_index(mean_prob, vote_rate, variance).clamp(0.0, 1.0);
    Ok(SubjectSeverity {
        subject_id: subject_id.to_string(),
        k: probs.len(),
        probs: probs.to_vec(),
        mean_prob,
        vote_rate,
        variance,
        severity_index,
        stability_flag: variance <= w.stability_cutoff,
        label: None,
    })
}

/// One fold model's probability for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPrediction {
    pub subject_id: String,
    pub fold: u32,
    pub prob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

/// Parse `subject_id,fold,prob,label?` with a header row.
pub fn read_predictions_csv<R: Read>(input: R) -> Result<Vec<FoldPrediction>, SeverityError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let err = |message: String| SeverityError::Csv { line, message };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        if rec.len() < 3 || rec.len() > 4 {
            return Err(err(format!("expected 3 or 4 columns, found {}", rec.len())));
        }
        let fold = rec[1].parse::<u32>().map_err(|e| err(format!("fold: {e}")))?;
        let prob = rec[2].parse::<f64>().map_err(|e| err(format!("prob: {e}")))?;
        let label = match rec.get(3) {
            None | Some("") => None,
            Some(s) => Some(Label::parse(s).ok_or_else(|| err(format!("label must be AD or HC, got {s:?}")))?),
        };
        if rec[0].is_empty() {
            return Err(err("empty subject_id".into()));
        }
        out.push(FoldPrediction {
            subject_id: rec[0].to_string(),
            fold,
            prob,
            label,
        });
    }
    Ok(out)
}

pub fn write_predictions_csv<W: Write>(out: W, preds: &[FoldPrediction]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject_id", "fold", "prob", "label"])?;
    for p in preds {
        w.write_record([
            p.subject_id.clone(),
            p.fold.to_string(),
            p.prob.to_string(),
            p.label.map(|l| l.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One prediction per attribution document.
pub fn predictions_from_documents(docs: &[AttributionDocument]) -> Vec<FoldPrediction> {
    docs.iter()
        .map(|d| FoldPrediction {
            subject_id: d.subject_id.clone(),
            fold: d.fold,
            prob: d.pred_prob_ad,
            label: d.true_label,
        })
        .collect()
}

/// Group predictions by subject (fold order within a subject) and aggregate.
/// Output is sorted by subject id.
pub fn aggregate_subjects(
    preds: &[FoldPrediction],
    w: &SeverityWeights,
) -> Result<Vec<SubjectSeverity>, SeverityError> {
    if preds.is_empty() {
        return Err(SeverityError::EmptyInput);
    }
    struct Acc {
        folds: BTreeMap<u32, f64>,
        labels: BTreeSet<Label>,
    }
    let mut by_subject: BTreeMap<&str, Acc> = BTreeMap::new();
    for p in preds {
        let acc = by_subject.entry(&p.subject_id).or_insert_with(|| Acc {
            folds: BTreeMap::new(),
            labels: BTreeSet::new(),
        });
        if acc.folds.insert(p.fold, p.prob).is_some() {
            return Err(SeverityError::DuplicatePrediction {
                subject_id: p.subject_id.clone(),
                fold: p.fold,
            });
        }
        acc.labels.extend(p.label);
    }
    by_subject
        .into_iter()
        .map(|(id, acc)| {
            if acc.labels.len() > 1 {
                return Err(SeverityError::ConflictingLabel(id.to_string()));
            }
            let probs: Vec<f64> = acc.folds.values().copied().collect();
            let mut s = aggregate_subject(id, &probs, w)?;
            s.label = acc.labels.into_iter().next();
            Ok(s)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Metrics at one threshold. Ratios with a zero denominator are `None`
/// (serialised as `null`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    pub matrix: ConfusionMatrix,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Predict AD iff `prob >= threshold`; AD is the positive class.
pub fn confusion(preds: &[(f64, Label)], threshold: f64) -> Result<ThresholdMetrics, SeverityError> {
    if preds.is_empty() {
        return Err(SeverityError::EmptyInput);
    }
    let mut m = ConfusionMatrix {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for &(prob, label) in preds {
        match (Label::predicted(prob, threshold), label) {
            (Label::AD, Label::AD) => m.tp += 1,
            (Label::AD, Label::HC) => m.fp += 1,
            (Label::HC, Label::HC) => m.tn += 1,
            (Label::HC, Label::AD) => m.fn_ += 1,
        }
    }
    Ok(ThresholdMetrics {
        threshold,
        matrix: m,
        sensitivity: ratio(m.tp, m.tp + m.fn_),
        specificity: ratio(m.tn, m.tn + m.fp),
        precision: ratio(m.tp, m.tp + m.fp),
        accuracy: ratio(m.tp + m.tn, m.total()),
        f1: ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn_),
    })
}

/// Mann-Whitney AUC: P(score_AD > score_HC) + 0.5 * P(tie), via midranks.
pub fn auc(preds: &[(f64, Label)]) -> Result<f64, SeverityError> {
    if preds.is_empty() {
        return Err(SeverityError::EmptyInput);
    }
    let n_ad = preds.iter().filter(|p| p.1 == Label::AD).count();
    let n_hc = preds.len() - n_ad;
    if n_ad == 0 || n_hc == 0 {
        return Err(SeverityError::OneClassOnly);
    }
    let mut sorted: Vec<(f64, Label)> = preds.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum_ad = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].0 == sorted[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let midrank = (i + j + 2) as f64 / 2.0;
        let ads = sorted[i..=j].iter().filter(|p| p.1 == Label::AD).count();
        rank_sum_ad += midrank * ads as f64;
        i = j + 1;
    }
    let u = rank_sum_ad - (n_ad * (n_ad + 1)) as f64 / 2.0;
    Ok(u / (n_ad as f64 * n_hc as f64))
}

/// (mean probability, label) for every labelled subject.
pub fn labelled_means(subjects: &[SubjectSeverity]) -> Vec<(f64, Label)> {
    subjects
        .iter()
        .filter_map(|s| s.label.map(|l| (s.mean_prob, l)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityMetrics {
    pub n_subjects: usize,
    pub n_labelled: usize,
    pub auc: Option<f64>,
    pub thresholds: Vec<ThresholdMetrics>,
}

/// Subject-level metrics on mean probabilities. AUC is `None` when only one
/// class is present.
pub fn subject_metrics(subjects: &[SubjectSeverity], thresholds: &[f64]) -> Result<SeverityMetrics, SeverityError> {
    let preds = labelled_means(subjects);
    let auc = match auc(&preds) {
        Ok(a) => Some(a),
        Err(SeverityError::OneClassOnly) | Err(SeverityError::EmptyInput) => None,
        Err(e) => return Err(e),
    };
    let thresholds = if preds.is_empty() {
        Vec::new()
    } else {
        thresholds
            .iter()
            .map(|t| confusion(&preds, *t))
            .collect::<Result<_, _>>()?
    };
    Ok(SeverityMetrics {
        n_subjects: subjects.len(),
        n_labelled: preds.len(),
        auc,
        thresholds,
    })
}

/// Class key used in histogram and scatter outputs.
pub fn class_key(label: Option<Label>) -> &'static str {
    match label {
        Some(Label::AD) => "AD",
        Some(Label::HC) => "HC",
        None => "unlabelled",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges on [0, 1].
    pub edges: Vec<f64>,
    /// Counts per class; every vector has `bins` entries.
    pub counts: BTreeMap<String, Vec<usize>>,
}

pub const DEFAULT_BINS: usize = 20;

/// Bin index of `v` in `bins` equal-width bins on [0, 1]; the last bin is
/// closed. Compares against the same edge values that are reported.
pub fn bin_index(v: f64, bins: usize) -> usize {
    let edge = |i: usize| i as f64 / bins as f64;
    let mut i = ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1);
    if i + 1 < bins && v >= edge(i + 1) {
        i += 1;
    }
    if i > 0 && v < edge(i) {
        i -= 1;
    }
    i
}

/// Histogram of subject mean probabilities per class.
pub fn severity_histogram(subjects: &[SubjectSeverity], bins: usize) -> Result<Histogram, SeverityError> {
    if subjects.is_empty() || bins == 0 {
        return Err(SeverityError::EmptyInput);
    }
    let mut counts: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for s in subjects {
        let row = counts
            .entry(class_key(s.label).to_string())
            .or_insert_with(|| vec![0; bins]);
        row[bin_index(s.mean_prob, bins)] += 1;
    }
    Ok(Histogram {
        edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub subject_id: String,
    pub mean_prob: f64,
    pub vote_rate: f64,
    pub label: Option<Label>,
}

pub fn stability_scatter(subjects: &[SubjectSeverity]) -> Result<Vec<ScatterPoint>, SeverityError> {
    if subjects.is_empty() {
        return Err(SeverityError::EmptyInput);
    }
    Ok(subjects
        .iter()
        .map(|s| ScatterPoint {
            subject_id: s.subject_id.clone(),
            mean_prob: s.mean_prob,
            vote_rate: s.vote_rate,
            label: s.label,
        })
        .collect())
}

pub fn write_histogram_csv<W: Write>(out: W, h: &Histogram) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_start", "bin_end", "class", "count"])?;
    for (class, row) in &h.counts {
        for (i, c) in row.iter().enumerate() {
            w.write_record([
                format!("{:.2}", h.edges[i]),
                format!("{:.2}", h.edges[i + 1]),
                class.clone(),
                c.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_scatter_csv<W: Write>(out: W, points: &[ScatterPoint]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject_id", "mean_prob", "vote_rate", "label"])?;
    for p in points {
        w.write_record([
            p.subject_id.clone(),
            format!("{:.6}", p.mean_prob),
            format!("{:.6}", p.vote_rate),
            class_key(p.label).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
