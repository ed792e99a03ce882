//! Attribution documents and the bucket statistics derived from them.
//!
//! A document is one transcript scored by one fold model. All statistics work
//! on `|attribution|`; signs survive only as far as word reconstruction. The
//! outputs of this module ([`BucketProfile`], [`GroupRow`]) hold numbers and
//! enum keys only, never token text.

use crate::bucketing::{self, BucketingError, CoarseBucket, SubwordToken, WordUnit};
use crate::transcript::{Lexicons, TokenCategory};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Below this, content mass is treated as zero when forming the ratio.
pub const MIN_CONTENT_MASS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Cookie,
    Recall,
    Fluency,
    Sentence,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Cookie, Task::Recall, Task::Fluency, Task::Sentence];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Cookie => "cookie",
            Task::Recall => "recall",
            Task::Fluency => "fluency",
            Task::Sentence => "sentence",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Task::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    AD,
    HC,
}

impl Label {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "AD" => Some(Label::AD),
            "HC" => Some(Label::HC),
            _ => None,
        }
    }

    /// AD iff `prob >= threshold`.
    pub fn predicted(prob: f64, threshold: f64) -> Self {
        if prob >= threshold {
            Label::AD
        } else {
            Label::HC
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::AD => "AD",
            Label::HC => "HC",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionDocument {
    pub doc_id: String,
    pub subject_id: String,
    pub task: Task,
    pub fold: u32,
    pub pred_prob_ad: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_label: Option<Label>,
    pub tokens: Vec<SubwordToken>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecordError {
    Parse {
        line: usize,
        message: String,
    },
    Schema {
        line: usize,
        field: String,
        message: String,
    },
    DuplicateDoc {
        line: usize,
        doc_id: String,
        fold: u32,
    },
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordError::Parse { line, message } => write!(f, "line {line}: parse error: {message}"),
            RecordError::Schema { line, field, message } => {
                write!(f, "line {line}: field `{field}`: {message}")
            }
            RecordError::DuplicateDoc { line, doc_id, fold } => {
                write!(f, "line {line}: duplicate document ({doc_id}, fold {fold})")
            }
        }
    }
}

fn join_errors(errors: &[RecordError]) -> String {
    errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{} invalid record(s): {}", .0.len(), join_errors(.0))]
    InvalidRecords(Vec<RecordError>),
    #[error("document {doc_id}: {source}")]
    Bucketing {
        doc_id: String,
        #[source]
        source: BucketingError,
    },
    #[error("document {0} has no non-special word units")]
    NoContent(String),
    #[error("document {0} has zero lexical content mass")]
    ZeroContentMass(String),
    #[error("no documents predicted as {0}")]
    EmptyGroup(Label),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// When set, `fold` must be strictly below this.
    pub fold_count: Option<u32>,
}

pub fn read_attribution_file(path: impl AsRef<Path>) -> Result<Vec<AttributionDocument>, AttributionError> {
    read_attribution_file_with(path, ReadOptions::default())
}

pub fn read_attribution_file_with(
    path: impl AsRef<Path>,
    opts: ReadOptions,
) -> Result<Vec<AttributionDocument>, AttributionError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| AttributionError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_attribution_jsonl(&text, opts)
}

/// Parse newline-delimited records, collecting every invalid record before
/// failing.
pub fn parse_attribution_jsonl(text: &str, opts: ReadOptions) -> Result<Vec<AttributionDocument>, AttributionError> {
    let mut docs = Vec::new();
    let mut errors = Vec::new();
    let mut seen: BTreeSet<(String, u32)> = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = match serde_json::from_str(raw) {
            Ok(v) => v,
            Err(e) => {
                errors.push(RecordError::Parse {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        match validate_record(&value, line, opts) {
            Ok(doc) => {
                if !seen.insert((doc.doc_id.clone(), doc.fold)) {
                    errors.push(RecordError::DuplicateDoc {
                        line,
                        doc_id: doc.doc_id,
                        fold: doc.fold,
                    });
                } else {
                    docs.push(doc);
                }
            }
            Err(e) => errors.push(e),
        }
    }
    if errors.is_empty() {
        Ok(docs)
    } else {
        Err(AttributionError::InvalidRecords(errors))
    }
}

fn validate_record(v: &Value, line: usize, opts: ReadOptions) -> Result<AttributionDocument, RecordError> {
    let schema = |field: &str, message: &str| RecordError::Schema {
        line,
        field: field.to_string(),
        message: message.to_string(),
    };
    let obj = v
        .as_object()
        .ok_or_else(|| schema("<record>", "expected a JSON object"))?;

    let non_empty_str = |field: &str| -> Result<String, RecordError> {
        match obj.get(field) {
            Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
            Some(Value::String(_)) => Err(schema(field, "must be non-empty")),
            Some(_) => Err(schema(field, "expected a string")),
            None => Err(schema(field, "missing")),
        }
    };
    let doc_id = non_empty_str("doc_id")?;
    let subject_id = non_empty_str("subject_id")?;
    let task_str = non_empty_str("task")?;
    let task = Task::parse(&task_str).ok_or_else(|| schema("task", "expected cookie|recall|fluency|sentence"))?;

    let fold = obj
        .get("fold")
        .ok_or_else(|| schema("fold", "missing"))?
        .as_u64()
        .and_then(|f| u32::try_from(f).ok())
        .ok_or_else(|| schema("fold", "expected a non-negative integer"))?;
    if let Some(k) = opts.fold_count {
        if fold >= k {
            return Err(schema("fold", &format!("must be < fold count {k}")));
        }
    }

    let pred_prob_ad = obj
        .get("pred_prob_ad")
        .ok_or_else(|| schema("pred_prob_ad", "missing"))?
        .as_f64()
        .ok_or_else(|| schema("pred_prob_ad", "expected a number"))?;
    if !(0.0..=1.0).contains(&pred_prob_ad) {
        return Err(schema("pred_prob_ad", "must lie in [0, 1]"));
    }

    let true_label = match obj.get("true_label") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(Label::parse(s).ok_or_else(|| schema("true_label", "expected AD or HC"))?),
        Some(_) => return Err(schema("true_label", "expected AD or HC")),
    };

    let raw_tokens = obj
        .get("tokens")
        .ok_or_else(|| schema("tokens", "missing"))?
        .as_array()
        .ok_or_else(|| schema("tokens", "expected an array"))?;
    let mut tokens = Vec::with_capacity(raw_tokens.len());
    for (i, t) in raw_tokens.iter().enumerate() {
        let field = |name: &str| format!("tokens[{i}].{name}");
        let t = t
            .as_object()
            .ok_or_else(|| schema(&format!("tokens[{i}]"), "expected an object"))?;
        let text = t
            .get("t")
            .and_then(Value::as_str)
            .ok_or_else(|| schema(&field("t"), "expected a string"))?;
        let attribution = t
            .get("a")
            .and_then(Value::as_f64)
            .filter(|a| a.is_finite())
            .ok_or_else(|| schema(&field("a"), "expected a finite number"))?;
        let flag = |name: &str| -> Result<bool, RecordError> {
            match t.get(name) {
                None | Some(Value::Null) => Ok(false),
                Some(Value::Bool(b)) => Ok(*b),
                Some(_) => Err(schema(&field(name), "expected a boolean")),
            }
        };
        let is_special = flag("special")?;
        let continues_word = flag("cont")?;
        if is_special && continues_word {
            return Err(schema(&field("cont"), "special tokens cannot continue a word"));
        }
        tokens.push(SubwordToken {
            text: text.to_string(),
            attribution,
            is_special,
            continues_word,
        });
    }

    Ok(AttributionDocument {
        doc_id,
        subject_id,
        task,
        fold,
        pred_prob_ad,
        true_label,
        tokens,
    })
}

/// Serialise documents as newline-delimited JSON, one record per line.
pub fn write_attribution_jsonl<W: Write>(mut out: W, docs: &[AttributionDocument]) -> std::io::Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Normalised `|attribution|` mass per coarse bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketMasses {
    /// The four non-special buckets; sums to 1.
    pub mass: BTreeMap<CoarseBucket, f64>,
    /// Special-token `|attribution|` relative to the non-special total.
    /// Zero when the document is degenerate.
    pub special_share: f64,
    /// Per fine category; sums to 1 and refines `mass`.
    pub fine_mass: BTreeMap<TokenCategory, f64>,
    /// All non-special attributions were zero; masses fall back to uniform
    /// over occupied buckets.
    pub degenerate: bool,
}

pub fn document_units(doc: &AttributionDocument, lexicons: &Lexicons) -> Result<Vec<WordUnit>, AttributionError> {
    bucketing::word_units(&doc.tokens, lexicons).map_err(|source| AttributionError::Bucketing {
        doc_id: doc.doc_id.clone(),
        source,
    })
}

pub fn bucket_masses(doc: &AttributionDocument) -> Result<BucketMasses, AttributionError> {
    let units = document_units(doc, Lexicons::builtin())?;
    masses_of_units(&doc.doc_id, &units)
}

pub fn masses_of_units(doc_id: &str, units: &[WordUnit]) -> Result<BucketMasses, AttributionError> {
    let content: Vec<&WordUnit> = units.iter().filter(|u| !u.is_special).collect();
    if content.is_empty() {
        return Err(AttributionError::NoContent(doc_id.to_string()));
    }

    let mut coarse_abs: BTreeMap<CoarseBucket, f64> = CoarseBucket::NON_SPECIAL.iter().map(|b| (*b, 0.0)).collect();
    let mut coarse_count: BTreeMap<CoarseBucket, usize> = BTreeMap::new();
    let mut fine_abs: BTreeMap<TokenCategory, f64> = TokenCategory::ALL.iter().map(|c| (*c, 0.0)).collect();
    let mut fine_count: BTreeMap<TokenCategory, usize> = BTreeMap::new();
    for u in &content {
        let fine = u.fine_category.expect("non-special unit without fine category");
        let coarse = CoarseBucket::from_fine(fine);
        *coarse_abs.get_mut(&coarse).unwrap() += u.attribution.abs();
        *coarse_count.entry(coarse).or_default() += 1;
        *fine_abs.get_mut(&fine).unwrap() += u.attribution.abs();
        *fine_count.entry(fine).or_default() += 1;
    }
    let total: f64 = content.iter().map(|u| u.attribution.abs()).sum();
    let special_abs: f64 = units.iter().filter(|u| u.is_special).map(|u| u.attribution.abs()).sum();

    if total > 0.0 {
        Ok(BucketMasses {
            mass: coarse_abs.into_iter().map(|(b, m)| (b, m / total)).collect(),
            special_share: special_abs / total,
            fine_mass: fine_abs.into_iter().map(|(c, m)| (c, m / total)).collect(),
            degenerate: false,
        })
    } else {
        // uniform over occupied buckets; within a bucket, split by unit count
        let occupied = coarse_count.len() as f64;
        let mass = CoarseBucket::NON_SPECIAL
            .iter()
            .map(|b| {
                (
                    *b,
                    if coarse_count.contains_key(b) {
                        1.0 / occupied
                    } else {
                        0.0
                    },
                )
            })
            .collect();
        let fine_mass = TokenCategory::ALL
            .iter()
            .map(|c| {
                let n = fine_count.get(c).copied().unwrap_or(0) as f64;
                let coarse = CoarseBucket::from_fine(*c);
                let bucket_n = coarse_count.get(&coarse).copied().unwrap_or(0) as f64;
                let share = if n > 0.0 { n / bucket_n / occupied } else { 0.0 };
                (*c, share)
            })
            .collect();
        Ok(BucketMasses {
            mass,
            special_share: 0.0,
            fine_mass,
            degenerate: true,
        })
    }
}

/// Per-document statistics. Carries no token text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketProfile {
    pub doc_id: String,
    pub subject_id: String,
    pub task: Task,
    pub fold: u32,
    pub pred_prob_ad: f64,
    pub mass: BTreeMap<CoarseBucket, f64>,
    pub special_share: f64,
    pub fine_mass: BTreeMap<TokenCategory, f64>,
    /// Fraction of non-special word units per fine category.
    pub freq: BTreeMap<TokenCategory, f64>,
    pub disfluency_ratio: f64,
    pub content_mass: f64,
    pub evidence_entropy_bits: f64,
    pub concentration_top10: f64,
    pub concentration_gini: f64,
    pub degenerate: bool,
}

pub fn profile(doc: &AttributionDocument) -> Result<BucketProfile, AttributionError> {
    profile_with(doc, Lexicons::builtin())
}

pub fn profile_with(doc: &AttributionDocument, lexicons: &Lexicons) -> Result<BucketProfile, AttributionError> {
    let units = document_units(doc, lexicons)?;
    let masses = masses_of_units(&doc.doc_id, &units)?;

    let content_mass = masses.mass[&CoarseBucket::LexicalContent];
    if content_mass < MIN_CONTENT_MASS {
        return Err(AttributionError::ZeroContentMass(doc.doc_id.clone()));
    }
    let disfluency_ratio = masses.mass[&CoarseBucket::DisfluencyAnnotation] / content_mass;

    let magnitudes: Vec<f64> = units
        .iter()
        .filter(|u| !u.is_special)
        .map(|u| u.attribution.abs())
        .collect();
    let mut freq: BTreeMap<TokenCategory, f64> = TokenCategory::ALL.iter().map(|c| (*c, 0.0)).collect();
    for u in units.iter().filter(|u| !u.is_special) {
        *freq.get_mut(&u.fine_category.unwrap()).unwrap() += 1.0;
    }
    let n = magnitudes.len() as f64;
    freq.values_mut().for_each(|v| *v /= n);

    Ok(BucketProfile {
        doc_id: doc.doc_id.clone(),
        subject_id: doc.subject_id.clone(),
        task: doc.task,
        fold: doc.fold,
        pred_prob_ad: doc.pred_prob_ad,
        evidence_entropy_bits: entropy_bits(masses.mass.values().copied()),
        concentration_top10: top_share(&magnitudes, 0.10),
        concentration_gini: gini(&magnitudes),
        mass: masses.mass,
        special_share: masses.special_share,
        fine_mass: masses.fine_mass,
        freq,
        disfluency_ratio,
        content_mass,
        degenerate: masses.degenerate,
    })
}

/// Shannon entropy in bits over the strictly positive entries.
pub fn entropy_bits(masses: impl IntoIterator<Item = f64>) -> f64 {
    let h: f64 = masses.into_iter().filter(|m| *m > 0.0).map(|m| -m * m.log2()).sum();
    h.max(0.0)
}

/// Share of the total held by the largest `ceil(fraction * n)` values.
/// An all-zero input is treated as uniform.
pub fn top_share(magnitudes: &[f64], fraction: f64) -> f64 {
    let n = magnitudes.len();
    if n == 0 {
        return 0.0;
    }
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let total: f64 = magnitudes.iter().sum();
    if total <= 0.0 {
        return k as f64 / n as f64;
    }
    let mut sorted = magnitudes.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    (sorted[..k].iter().sum::<f64>() / total).clamp(0.0, 1.0)
}

/// Gini coefficient of non-negative values; 0 for equal or all-zero input.
pub fn gini(magnitudes: &[f64]) -> f64 {
    let n = magnitudes.len();
    let total: f64 = magnitudes.iter().sum();
    if n < 2 || total <= 0.0 {
        return 0.0;
    }
    let mut sorted = magnitudes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let weighted: f64 = sorted.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).sum();
    let n = n as f64;
    (2.0 * weighted / (n * total) - (n + 1.0) / n).clamp(0.0, 1.0)
}

/// Mean per-document frequency and attribution mass for one predicted class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub class: Label,
    pub n_docs: usize,
    pub freq: BTreeMap<TokenCategory, f64>,
    pub attr: BTreeMap<TokenCategory, f64>,
    pub mean_disfluency_ratio: f64,
    pub mean_content_mass: f64,
}

/// Averages profiles whose predicted class (`pred_prob_ad >= threshold`)
/// equals `class`. Each document is normalised on its own before averaging.
pub fn group_profile(
    profiles: &[BucketProfile],
    class: Label,
    threshold: f64,
) -> Result<GroupSummary, AttributionError> {
    let members: Vec<&BucketProfile> = profiles
        .iter()
        .filter(|p| Label::predicted(p.pred_prob_ad, threshold) == class)
        .collect();
    if members.is_empty() {
        return Err(AttributionError::EmptyGroup(class));
    }
    let n = members.len() as f64;
    let mean_of = |get: &dyn Fn(&BucketProfile) -> f64| members.iter().map(|p| get(p)).sum::<f64>() / n;
    let freq = TokenCategory::ALL
        .iter()
        .map(|c| (*c, mean_of(&|p| p.freq[c])))
        .collect();
    let attr = TokenCategory::ALL
        .iter()
        .map(|c| (*c, mean_of(&|p| p.fine_mass[c])))
        .collect();
    Ok(GroupSummary {
        class,
        n_docs: members.len(),
        freq,
        attr,
        mean_disfluency_ratio: mean_of(&|p| p.disfluency_ratio),
        mean_content_mass: mean_of(&|p| p.content_mass),
    })
}

/// One row of the frequency / attribution comparison table. Values are
/// fractions in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub category: TokenCategory,
    pub freq_hc: f64,
    pub freq_ad: f64,
    pub attr_hc: f64,
    pub attr_ad: f64,
}

pub fn group_table(profiles: &[BucketProfile], threshold: f64) -> Result<Vec<GroupRow>, AttributionError> {
    let hc = group_profile(profiles, Label::HC, threshold)?;
    let ad = group_profile(profiles, Label::AD, threshold)?;
    Ok(TokenCategory::ALL
        .iter()
        .map(|c| GroupRow {
            category: *c,
            freq_hc: hc.freq[c],
            freq_ad: ad.freq[c],
            attr_hc: hc.attr[c],
            attr_ad: ad.attr[c],
        })
        .collect())
}

/// CSV with header `Category,FreqHC,FreqAD,AttrHC,AttrAD`; values are
/// percentages with four decimals.
pub fn write_group_csv<W: Write>(out: W, rows: &[GroupRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["Category", "FreqHC", "FreqAD", "AttrHC", "AttrAD"])?;
    for r in rows {
        let pct = |v: f64| format!("{:.4}", 100.0 * v);
        w.write_record([
            r.category.as_str().to_string(),
            pct(r.freq_hc),
            pct(r.freq_ad),
            pct(r.attr_hc),
            pct(r.attr_ad),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(tokens: Vec<SubwordToken>) -> AttributionDocument {
        AttributionDocument {
            doc_id: "d1".into(),
            subject_id: "s1".into(),
            task: Task::Cookie,
            fold: 0,
            pred_prob_ad: 0.7,
            true_label: Some(Label::AD),
            tokens,
        }
    }

    const VALID: &str = r#"{"doc_id":"a","subject_id":"s","task":"cookie","fold":0,"pred_prob_ad":0.4,"true_label":"HC","tokens":[{"t":"<s>","a":0.0,"special":true},{"t":"cook","a":0.2},{"t":"ie","a":0.1,"cont":true}]}
{"doc_id":"b","subject_id":"s","task":"recall","fold":1,"pred_prob_ad":0.9,"tokens":[{"t":"um","a":-0.3}]}
"#;

    #[test]
    fn reads_valid_records() {
        let docs = parse_attribution_jsonl(VALID, ReadOptions::default()).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].tokens.len(), 3);
        assert!(docs[0].tokens[2].continues_word);
        assert_eq!(docs[1].true_label, None);
        assert_eq!(docs[1].task, Task::Recall);
    }

    #[test]
    fn probability_out_of_range() {
        let bad = VALID.replace("0.9", "1.3");
        match parse_attribution_jsonl(&bad, ReadOptions::default()) {
            Err(AttributionError::InvalidRecords(errs)) => {
                assert_eq!(errs.len(), 1);
                assert!(matches!(&errs[0], RecordError::Schema { line: 2, field, .. } if field == "pred_prob_ad"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_doc_and_fold() {
        let first = VALID.lines().next().unwrap();
        let dup = format!("{first}\n{first}\n");
        match parse_attribution_jsonl(&dup, ReadOptions::default()) {
            Err(AttributionError::InvalidRecords(errs)) => {
                assert_eq!(
                    errs,
                    vec![RecordError::DuplicateDoc {
                        line: 2,
                        doc_id: "a".into(),
                        fold: 0
                    }]
                );
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reports_all_bad_lines() {
        let text = "not json\n{\"doc_id\":\"x\"}\n";
        match parse_attribution_jsonl(text, ReadOptions::default()) {
            Err(AttributionError::InvalidRecords(errs)) => {
                assert!(matches!(errs[0], RecordError::Parse { line: 1, .. }));
                assert!(matches!(&errs[1], RecordError::Schema { line: 2, field, .. } if field == "subject_id"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fold_bound_and_special_continuation() {
        let opts = ReadOptions { fold_count: Some(1) };
        assert!(parse_attribution_jsonl(VALID, opts).is_err());
        let bad = VALID.replace(r#""special":true"#, r#""special":true,"cont":true"#);
        assert!(parse_attribution_jsonl(&bad, ReadOptions::default()).is_err());
    }

    #[test]
    fn writer_round_trips() {
        let docs = parse_attribution_jsonl(VALID, ReadOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_attribution_jsonl(&mut buf, &docs).unwrap();
        let again = parse_attribution_jsonl(std::str::from_utf8(&buf).unwrap(), ReadOptions::default()).unwrap();
        assert_eq!(docs, again);
    }

    #[test]
    fn masses_use_magnitudes() {
        let m = bucket_masses(&doc(vec![
            SubwordToken::word("um", 0.2),
            SubwordToken::word("cookie", -0.6),
        ]))
        .unwrap();
        assert!((m.mass[&CoarseBucket::DisfluencyAnnotation] - 0.25).abs() < 1e-12);
        assert!((m.mass[&CoarseBucket::LexicalContent] - 0.75).abs() < 1e-12);
        assert_eq!(m.mass[&CoarseBucket::Punctuation], 0.0);
        assert!(!m.degenerate);
    }

    #[test]
    fn zero_attribution_is_uniform_and_flagged() {
        let m = bucket_masses(&doc(vec![
            SubwordToken::special("<s>", 0.0),
            SubwordToken::word("um", 0.0),
            SubwordToken::word("cookie", 0.0),
            SubwordToken::word("jar", 0.0),
        ]))
        .unwrap();
        assert!(m.degenerate);
        assert_eq!(m.mass[&CoarseBucket::DisfluencyAnnotation], 0.5);
        assert_eq!(m.mass[&CoarseBucket::LexicalContent], 0.5);
        assert_eq!(m.fine_mass[&TokenCategory::Filler], 0.5);
    }

    #[test]
    fn only_special_tokens() {
        assert!(matches!(
            bucket_masses(&doc(vec![SubwordToken::special("<s>", 1.0)])),
            Err(AttributionError::NoContent(_))
        ));
    }

    #[test]
    fn no_content_mass() {
        assert!(matches!(
            profile(&doc(vec![SubwordToken::word("um", 1.0), SubwordToken::word(".", 1.0)])),
            Err(AttributionError::ZeroContentMass(_))
        ));
    }

    #[test]
    fn content_mass_seventy_percent() {
        let p = profile(&doc(vec![
            SubwordToken::word("cookie", 0.5),
            SubwordToken::word("jar", -0.2),
            SubwordToken::word("um", 0.18),
            SubwordToken::word(".", 0.12),
        ]))
        .unwrap();
        assert!((p.content_mass - 0.70).abs() < 1e-9);
    }

    #[test]
    fn ratio_and_entropy_formula() {
        // masses {disfl .2, content .68, punct .12}
        let p = profile(&doc(vec![
            SubwordToken::word("uh", 0.2),
            SubwordToken::word("cookie", 0.68),
            SubwordToken::word(".", -0.12),
        ]))
        .unwrap();
        let oracle_h = -(0.2f64 * 0.2f64.log2() + 0.68 * 0.68f64.log2() + 0.12 * 0.12f64.log2());
        assert!((p.disfluency_ratio - 0.2941).abs() < 1e-4);
        assert!((p.evidence_entropy_bits - oracle_h).abs() < 1e-12);
        assert!((p.evidence_entropy_bits - 1.2098).abs() < 1e-3);
    }

    #[test]
    fn entropy_and_gini_edges() {
        assert!((entropy_bits([0.25; 4]) - 2.0).abs() < 1e-12);
        assert_eq!(entropy_bits([1.0, 0.0]), 0.0);
        assert!(gini(&[0.3; 8]).abs() < 1e-12);
        assert!((gini(&[0.0, 0.0, 0.0, 1.0]) - 0.75).abs() < 1e-12);
        assert_eq!(top_share(&[1.0; 20], 0.10), 0.1);
        assert_eq!(
            top_share(&[5.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.10),
            6.0 / 10.0
        );
    }

    #[test]
    fn profile_has_no_text_fields() {
        let p = profile(&doc(vec![
            SubwordToken::word("secretword", 0.3),
            SubwordToken::word("um", 0.1),
        ]))
        .unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert!(!json.contains("secretword"));
    }

    #[test]
    fn identical_docs_group_mean() {
        let p = profile(&doc(vec![
            SubwordToken::word("cookie", 0.6),
            SubwordToken::word("um", 0.4),
        ]))
        .unwrap();
        let g = group_profile(&[p.clone(), p.clone()], Label::AD, 0.5).unwrap();
        assert_eq!(g.n_docs, 2);
        for c in TokenCategory::ALL {
            assert!((g.freq[&c] - p.freq[&c]).abs() < 1e-15);
            assert!((g.attr[&c] - p.fine_mass[&c]).abs() < 1e-15);
        }
        assert!(matches!(
            group_profile(&[p], Label::HC, 0.5),
            Err(AttributionError::EmptyGroup(Label::HC))
        ));
    }

    #[test]
    fn csv_layout() {
        let p = profile(&doc(vec![
            SubwordToken::word("cookie", 0.6),
            SubwordToken::word("um", 0.4),
        ]))
        .unwrap();
        let mut hc = p.clone();
        hc.pred_prob_ad = 0.1;
        let rows = group_table(&[p, hc], 0.5).unwrap();
        let mut buf = Vec::new();
        write_group_csv(&mut buf, &rows).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("Category,FreqHC,FreqAD,AttrHC,AttrAD"));
        assert_eq!(lines.next(), Some("filler,50.0000,50.0000,40.0000,40.0000"));
    }
}
