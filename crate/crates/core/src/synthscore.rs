//! Deterministic stand-ins for the trained classifier and its data.
//!
//! * [`score`] turns a parsed transcript into an [`AttributionDocument`] with a
//!   logistic model over four surface features and a hash-based per-fold
//!   jitter, so cross-fold disagreement exists without any ML dependency.
//! * [`make_fixture_corpus`] writes template transcripts whose marker rates
//!   are conditioned on class.
//! * [`stratified_kfold`] assigns subjects to folds with per-class balance.
//! * [`frequency_mass_fixture`] builds attribution documents whose group
//!   frequencies and masses hit exact target values.

use crate::attribution::{AttributionDocument, Label, Task};
use crate::bucketing::SubwordToken;
use crate::transcript::{AnnotatedTranscript, TokenCategory, TranscriptError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error("class {label} has {have} subjects, fewer than {k} folds")]
    TooFewPerClass { label: Label, have: usize, k: u32 },
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(u32),
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeights {
    pub w_filler: f64,
    pub w_pause: f64,
    pub w_pronoun: f64,
    pub w_ttr: f64,
    pub bias: f64,
    /// Half-width of the per-fold logit jitter; 0 disables it.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for FeatureWeights {
    fn default() -> Self {
        Self {
            w_filler: 40.0,
            w_pause: 150.0,
            w_pronoun: -50.0,
            w_ttr: -4.0,
            bias: -0.9,
            jitter: 0.1,
            seed: 0,
        }
    }
}

impl FeatureWeights {
    pub fn zero() -> Self {
        Self {
            w_filler: 0.0,
            w_pause: 0.0,
            w_pronoun: 0.0,
            w_ttr: 0.0,
            bias: 0.0,
            jitter: 0.0,
            seed: 0,
        }
    }

    pub fn logit(&self, f: &Features) -> f64 {
        self.w_filler * f.filler_rate
            + self.w_pause * f.pause_rate
            + self.w_pronoun * f.pronoun_rate
            + self.w_ttr * f.type_token_ratio
            + self.bias
    }
}

/// Surface features over participant tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub filler_rate: f64,
    pub pause_rate: f64,
    pub pronoun_rate: f64,
    /// Distinct / total over word-like tokens (content, pronouns, fragments).
    pub type_token_ratio: f64,
    pub n_tokens: usize,
}

pub fn features(t: &AnnotatedTranscript) -> Result<Features, SynthError> {
    let toks: Vec<_> = t.participant_tokens().collect();
    if toks.is_empty() {
        return Err(TranscriptError::EmptyTranscript.into());
    }
    let n = toks.len() as f64;
    let rate = |c: TokenCategory| toks.iter().filter(|t| t.category == c).count() as f64 / n;
    let words: Vec<String> = toks
        .iter()
        .filter(|t| {
            matches!(
                t.category,
                TokenCategory::LexicalContent | TokenCategory::Pronoun | TokenCategory::ShortFragment
            )
        })
        .map(|t| t.text.to_lowercase())
        .collect();
    let types: BTreeSet<&String> = words.iter().collect();
    let type_token_ratio = if words.is_empty() {
        0.0
    } else {
        types.len() as f64 / words.len() as f64
    };
    Ok(Features {
        filler_rate: rate(TokenCategory::Filler),
        pause_rate: rate(TokenCategory::Pause),
        pronoun_rate: rate(TokenCategory::Pronoun),
        type_token_ratio,
        n_tokens: toks.len(),
    })
}

/// Uniform value in [0, 1) from a SHA-256 of the seed and key.
fn unit_hash(seed: u64, key: &str, fold: u32) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    h.update(fold.to_le_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64
}

/// Deterministic logit perturbation in `[-jitter, jitter]`.
pub fn fold_jitter(w: &FeatureWeights, doc_id: &str, fold: u32) -> f64 {
    if w.jitter == 0.0 {
        return 0.0;
    }
    w.jitter * (2.0 * unit_hash(w.seed, doc_id, fold) - 1.0)
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Subject-level metadata attached to a scored document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocMeta {
    pub subject_id: String,
    pub task: Task,
    pub label: Option<Label>,
}

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
const SPECIAL_ATTRIBUTION: f64 = 1e-4;

/// Score one transcript for one fold model.
///
/// Marker tokens carry their feature weight over `n` (their exact share of
/// the linear logit), signed toward the predicted class. The remaining logit
/// (type-token term, bias and jitter) is spread over the other tokens,
/// weighted by category. Long words are split into two pieces to exercise
/// word reconstruction.
pub fn score(
    t: &AnnotatedTranscript,
    meta: &DocMeta,
    w: &FeatureWeights,
    fold: u32,
) -> Result<AttributionDocument, SynthError> {
    let f = features(t)?;
    let logit = w.logit(&f) + fold_jitter(w, &t.doc_id, fold);
    let sign = if logit < 0.0 { -1.0 } else { 1.0 };
    let n = f.n_tokens as f64;

    let residual_weight = |c: TokenCategory| match c {
        TokenCategory::LexicalContent => 1.0,
        TokenCategory::ShortFragment | TokenCategory::ChatAnnotation => 0.5,
        TokenCategory::Punctuation => 0.25,
        _ => 0.0,
    };
    let residual = w.w_ttr * f.type_token_ratio + w.bias + (logit - w.logit(&f));
    let residual_total: f64 = t.participant_tokens().map(|t| residual_weight(t.category)).sum();

    let mut tokens = vec![SubwordToken::special(BOS, sign * SPECIAL_ATTRIBUTION)];
    for tok in t.participant_tokens() {
        let a = sign
            * match tok.category {
                TokenCategory::Filler => w.w_filler / n,
                TokenCategory::Pause => w.w_pause / n,
                TokenCategory::Pronoun => w.w_pronoun / n,
                c if residual_total > 0.0 => residual * residual_weight(c) / residual_total,
                _ => 0.0,
            };
        push_pieces(&mut tokens, &tok.text, a);
    }
    tokens.push(SubwordToken::special(EOS, sign * SPECIAL_ATTRIBUTION));

    Ok(AttributionDocument {
        doc_id: t.doc_id.clone(),
        subject_id: meta.subject_id.clone(),
        task: meta.task,
        fold,
        pred_prob_ad: logistic(logit),
        true_label: meta.label,
        tokens,
    })
}

/// Words longer than six characters become a 4-character head plus a
/// continuation piece; attribution splits 60/40 with a shared sign.
fn push_pieces(out: &mut Vec<SubwordToken>, text: &str, a: f64) {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    if chars.len() > 6 && chars.iter().all(|(_, c)| c.is_alphabetic()) {
        let cut = chars[4].0;
        out.push(SubwordToken::word(&text[..cut], 0.6 * a));
        out.push(SubwordToken::piece(&text[cut..], a - 0.6 * a));
    } else {
        out.push(SubwordToken::word(text, a));
    }
}

// ---------------------------------------------------------------------------
// Fold assignment

/// Assign every subject to one of `k` folds so that, within each class,
/// fold sizes differ by at most one. Input order does not matter.
pub fn stratified_kfold(subjects: &[(String, Label)], k: u32, seed: u64) -> Result<BTreeMap<String, u32>, SynthError> {
    if k < 2 {
        return Err(SynthError::InvalidFoldCount(k));
    }
    let mut by_class: BTreeMap<Label, Vec<&str>> = BTreeMap::new();
    for (id, label) in subjects {
        by_class.entry(*label).or_default().push(id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    let mut offset = 0usize;
    for (label, mut ids) in by_class {
        if ids.len() < k as usize {
            return Err(SynthError::TooFewPerClass {
                label,
                have: ids.len(),
                k,
            });
        }
        ids.sort_unstable();
        ids.dedup();
        ids.shuffle(&mut rng);
        for (i, id) in ids.iter().enumerate() {
            out.insert(id.to_string(), ((i + offset) % k as usize) as u32);
        }
        // start the next class where this one stopped so fold totals stay even
        offset = (offset + ids.len()) % k as usize;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Template corpus

/// Per-class marker rates as fractions of participant tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerRates {
    pub filler: f64,
    pub pause: f64,
    pub pronoun: f64,
}

impl MarkerRates {
    pub const AD: MarkerRates = MarkerRates {
        filler: 0.064,
        pause: 0.015,
        pronoun: 0.034,
    };
    pub const HC: MarkerRates = MarkerRates {
        filler: 0.050,
        pause: 0.007,
        pronoun: 0.042,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskCount {
    pub task: Task,
    pub ad: usize,
    pub hc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub tasks: Vec<TaskCount>,
    #[serde(default = "default_tokens")]
    pub tokens_per_transcript: usize,
    #[serde(default = "default_ad_rates")]
    pub ad_rates: MarkerRates,
    #[serde(default = "default_hc_rates")]
    pub hc_rates: MarkerRates,
    /// Half-width of the uniform per-transcript spread around each rate.
    #[serde(default = "default_spread")]
    pub rate_spread: f64,
}

fn default_tokens() -> usize {
    160
}
fn default_ad_rates() -> MarkerRates {
    MarkerRates::AD
}
fn default_hc_rates() -> MarkerRates {
    MarkerRates::HC
}
fn default_spread() -> f64 {
    0.02
}

impl Default for CorpusSpec {
    /// Roughly a tenth of the real dataset sizes per task.
    fn default() -> Self {
        Self {
            tasks: vec![
                TaskCount {
                    task: Task::Cookie,
                    ad: 31,
                    hc: 24,
                },
                TaskCount {
                    task: Task::Recall,
                    ad: 26,
                    hc: 20,
                },
                TaskCount {
                    task: Task::Fluency,
                    ad: 24,
                    hc: 24,
                },
                TaskCount {
                    task: Task::Sentence,
                    ad: 24,
                    hc: 24,
                },
            ],
            tokens_per_transcript: default_tokens(),
            ad_rates: MarkerRates::AD,
            hc_rates: MarkerRates::HC,
            rate_spread: default_spread(),
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.tasks.is_empty() {
            return Err(SynthError::InvalidSpec("no tasks".into()));
        }
        for t in &self.tasks {
            if t.ad == 0 || t.hc == 0 {
                return Err(SynthError::InvalidSpec(format!(
                    "task {} needs at least one subject per class",
                    t.task.as_str()
                )));
            }
        }
        if self.tokens_per_transcript < 20 {
            return Err(SynthError::InvalidSpec("tokens_per_transcript must be >= 20".into()));
        }
        for r in [self.ad_rates, self.hc_rates] {
            let sum = r.filler + r.pause + r.pronoun;
            if [r.filler, r.pause, r.pronoun].iter().any(|v| !(0.0..1.0).contains(v)) || sum >= 0.5 {
                return Err(SynthError::InvalidSpec("marker rates must be small fractions".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTranscript {
    pub doc_id: String,
    pub subject_id: String,
    pub task: Task,
    pub label: Label,
    /// `.cha`-subset text.
    pub text: String,
}

const COOKIE_WORDS: &[&str] = &[
    "boy",
    "girl",
    "mother",
    "cookie",
    "cookies",
    "jar",
    "stool",
    "falling",
    "water",
    "sink",
    "overflowing",
    "dishes",
    "drying",
    "window",
    "curtains",
    "kitchen",
    "plate",
    "cupboard",
    "reaching",
    "standing",
    "washing",
    "spilling",
    "floor",
    "garden",
    "taking",
    "handing",
    "sister",
    "brother",
    "tipping",
    "counter",
    "faucet",
    "running",
    "open",
    "shelf",
    "laughing",
    "apron",
    "towel",
    "cups",
    "bushes",
    "lawn",
    "outside",
    "and",
    "the",
    "there",
];
const RECALL_WORDS: &[&str] = &[
    "woman", "walked", "store", "bought", "bread", "milk", "then", "went", "home", "cooked", "dinner", "family",
    "children", "evening", "after", "long", "morning", "bus", "arrived", "late", "friend", "called", "letter", "money",
    "found", "lost", "street", "police", "helped", "story", "remember", "village", "market", "and", "the", "later",
];
const FLUENCY_WORDS: &[&str] = &[
    "dog", "cat", "horse", "cow", "lion", "tiger", "elephant", "zebra", "monkey", "rabbit", "giraffe", "bear", "wolf",
    "fox", "sheep", "goat", "pig", "chicken", "duck", "goose", "eagle", "snake", "turtle", "frog", "whale", "dolphin",
    "shark", "mouse", "squirrel", "deer", "camel", "donkey", "and", "the",
];
const SENTENCE_WORDS: &[&str] = &[
    "people", "like", "walk", "park", "weather", "today", "sunny", "warm", "children", "play", "school", "teacher",
    "reads", "book", "every", "night", "garden", "flowers", "grow", "quickly", "water", "plants", "morning", "coffee",
    "table", "kitchen", "window", "open", "wind", "cold", "and", "the", "with",
];
const SHORT_WORDS: &[&str] = &["a", "is", "on", "to", "in", "of", "at", "up", "an", "so"];
const FILLER_FORMS: &[&str] = &["&uh", "&um", "uh", "um", "&er", "hmm"];
const PAUSE_FORMS: &[&str] = &["(.)", "(..)", "(...)"];
const PRONOUN_FORMS: &[&str] = &["he", "she", "it", "they", "this", "that", "her", "his"];

fn task_words(task: Task) -> &'static [&'static str] {
    match task {
        Task::Cookie => COOKIE_WORDS,
        Task::Recall => RECALL_WORDS,
        Task::Fluency => FLUENCY_WORDS,
        Task::Sentence => SENTENCE_WORDS,
    }
}

fn task_prompt(task: Task) -> &'static str {
    match task {
        Task::Cookie => "tell me everything you see going on in this picture .",
        Task::Recall => "tell me the story you just heard .",
        Task::Fluency => "name as many animals as you can .",
        Task::Sentence => "make a sentence using these words .",
    }
}

/// Participant tokens for one synthetic transcript.
fn template_tokens(rng: &mut ChaCha8Rng, task: Task, label: Label, spec: &CorpusSpec) -> Vec<&'static str> {
    let rates = match label {
        Label::AD => spec.ad_rates,
        Label::HC => spec.hc_rates,
    };
    let n = spec.tokens_per_transcript + rng.gen_range(0..=spec.tokens_per_transcript / 4);
    let mut draw_count = |rate: f64| {
        let r = (rate + rng.gen_range(-spec.rate_spread..=spec.rate_spread) * rate / 0.05).max(0.0);
        (r * n as f64).round() as usize
    };
    let fillers = draw_count(rates.filler);
    let pauses = draw_count(rates.pause);
    let pronouns = draw_count(rates.pronoun);
    let base_len = n - fillers - pauses - pronouns;

    // AD templates draw from a narrower slice of the vocabulary, which lowers
    // the type-token ratio
    let words = task_words(task);
    let vocab = match label {
        Label::AD => &words[..words.len() * 3 / 5],
        Label::HC => words,
    };

    let mut base: Vec<&'static str> = Vec::with_capacity(n);
    let mut since_stop = 0;
    while base.len() < base_len {
        if since_stop >= 6 && (rng.gen_bool(0.2) || since_stop >= 12) {
            base.push(".");
            since_stop = 0;
            continue;
        }
        let w = if rng.gen_bool(0.15) {
            SHORT_WORDS[rng.gen_range(0..SHORT_WORDS.len())]
        } else {
            vocab[rng.gen_range(0..vocab.len())]
        };
        base.push(w);
        since_stop += 1;
    }
    if base.last() != Some(&".") {
        *base.last_mut().unwrap() = ".";
    }

    let mut insert = |forms: &[&'static str], count: usize, base: &mut Vec<&'static str>| {
        for _ in 0..count {
            let pos = rng.gen_range(0..base.len());
            base.insert(pos, forms[rng.gen_range(0..forms.len())]);
        }
    };
    insert(FILLER_FORMS, fillers, &mut base);
    insert(PAUSE_FORMS, pauses, &mut base);
    insert(PRONOUN_FORMS, pronouns, &mut base);
    base
}

fn render_cha(task: Task, tokens: &[&str]) -> String {
    let mut out = String::new();
    out.push_str("@UTF8\n@Begin\n@Languages:\teng\n");
    out.push_str("@Participants:\tPAR Participant, INV Investigator\n");
    out.push_str(&format!(
        "@Comment:\tsynthetic template transcript, task {}\n",
        task.as_str()
    ));
    out.push_str(&format!("*INV:\t{}\n", task_prompt(task)));
    let mut line: Vec<&str> = Vec::new();
    for &tok in tokens {
        line.push(tok);
        if tok == "." {
            out.push_str(&format!("*PAR:\t{}\n", line.join(" ")));
            line.clear();
        }
    }
    if !line.is_empty() {
        out.push_str(&format!("*PAR:\t{}\n", line.join(" ")));
    }
    out.push_str("@End\n");
    out
}

/// Template transcripts for every (task, class) count in `spec`.
/// Subject ids look like `cookie-AD-007`; each subject has one transcript.
pub fn make_fixture_corpus(spec: &CorpusSpec, seed: u64) -> Result<Vec<SyntheticTranscript>, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for tc in &spec.tasks {
        for (label, count) in [(Label::AD, tc.ad), (Label::HC, tc.hc)] {
            for i in 0..count {
                let subject_id = format!("{}-{}-{:03}", tc.task.as_str(), label, i + 1);
                let tokens = template_tokens(&mut rng, tc.task, label, spec);
                out.push(SyntheticTranscript {
                    doc_id: subject_id.clone(),
                    subject_id,
                    task: tc.task,
                    label,
                    text: render_cha(tc.task, &tokens),
                });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Exact frequency / mass fixture

/// Target per-class frequency and attribution mass for one fine category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoryTarget {
    pub category: TokenCategory,
    pub freq_hc: f64,
    pub freq_ad: f64,
    pub attr_hc: f64,
    pub attr_ad: f64,
}

/// Pronoun, filler and pause frequency and mass per class, as fractions.
pub const REFERENCE_TARGETS: [CategoryTarget; 3] = [
    CategoryTarget {
        category: TokenCategory::Pronoun,
        freq_hc: 0.0418,
        freq_ad: 0.0343,
        attr_hc: 0.0451,
        attr_ad: 0.0266,
    },
    CategoryTarget {
        category: TokenCategory::Filler,
        freq_hc: 0.0504,
        freq_ad: 0.0638,
        attr_hc: 0.0249,
        attr_ad: 0.0415,
    },
    CategoryTarget {
        category: TokenCategory::Pause,
        freq_hc: 0.0072,
        freq_ad: 0.0148,
        attr_hc: 0.0024,
        attr_ad: 0.0124,
    },
];

const FIXTURE_DOCS_PER_CLASS: usize = 4;
const FIXTURE_UNITS_PER_DOC: usize = 2500;

/// (category, word forms, count per class, mass per doc) for the categories
/// outside [`REFERENCE_TARGETS`]. Lexical content takes whatever is left.
fn filler_categories(label: Label) -> [(TokenCategory, &'static [&'static str], usize, f64); 3] {
    match label {
        Label::AD => [
            (TokenCategory::ChatAnnotation, &["[/]", "[//]", "xxx"], 100, 0.0100),
            (TokenCategory::Punctuation, &[".", ",", "?"], 1000, 0.1500),
            (TokenCategory::ShortFragment, SHORT_WORDS, 1200, 0.0861),
        ],
        Label::HC => [
            (TokenCategory::ChatAnnotation, &["[/]", "[//]", "xxx"], 50, 0.0050),
            (TokenCategory::Punctuation, &[".", ",", "?"], 1000, 0.1600),
            (TokenCategory::ShortFragment, SHORT_WORDS, 1200, 0.1077),
        ],
    }
}

/// Split `total` into `parts` near-equal integers, larger parts first.
fn split_even(total: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|i| total / parts + usize::from(i < total % parts))
        .collect()
}

/// Attribution documents built so that per-class mean frequency and mass of
/// pronouns, fillers and pauses equal [`REFERENCE_TARGETS`] exactly (up to
/// float rounding), with lexical content near 70% of mass.
///
/// Four documents per class, 2,500 word units each; AD documents score 0.8
/// and HC documents 0.2.
pub fn frequency_mass_fixture(seed: u64) -> Vec<AttributionDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total_units = FIXTURE_DOCS_PER_CLASS * FIXTURE_UNITS_PER_DOC;
    let mut docs = Vec::new();
    for label in [Label::AD, Label::HC] {
        // (category, forms, per-doc counts, per-doc mass)
        let mut plan: Vec<(TokenCategory, &[&str], Vec<usize>, f64)> = Vec::new();
        for t in REFERENCE_TARGETS {
            let (freq, attr) = match label {
                Label::AD => (t.freq_ad, t.attr_ad),
                Label::HC => (t.freq_hc, t.attr_hc),
            };
            let forms: &[&str] = match t.category {
                TokenCategory::Pronoun => PRONOUN_FORMS,
                TokenCategory::Filler => FILLER_FORMS,
                _ => PAUSE_FORMS,
            };
            let count = (freq * total_units as f64).round() as usize;
            plan.push((t.category, forms, split_even(count, FIXTURE_DOCS_PER_CLASS), attr));
        }
        for (c, forms, count, mass) in filler_categories(label) {
            plan.push((c, forms, split_even(count, FIXTURE_DOCS_PER_CLASS), mass));
        }
        let used_mass: f64 = plan.iter().map(|p| p.3).sum();

        for d in 0..FIXTURE_DOCS_PER_CLASS {
            let used_units: usize = plan.iter().map(|p| p.2[d]).sum();
            let mut units: Vec<(&str, f64)> = Vec::with_capacity(FIXTURE_UNITS_PER_DOC);
            let mut add = |forms: &[&'static str], count: usize, mass: f64, signed: bool| {
                // varied magnitudes that still sum to `mass`; total doc mass is 2
                let weights: Vec<f64> = (0..count).map(|j| 1.0 + 0.25 * (j % 5) as f64).collect();
                let wsum: f64 = weights.iter().sum();
                for (j, wj) in weights.iter().enumerate() {
                    let sign = if signed && j % 3 == 1 { -1.0 } else { 1.0 };
                    units.push((forms[j % forms.len()], sign * 2.0 * mass * wj / wsum));
                }
            };
            for (_, forms, counts, mass) in &plan {
                add(forms, counts[d], *mass, false);
            }
            add(COOKIE_WORDS, FIXTURE_UNITS_PER_DOC - used_units, 1.0 - used_mass, true);
            units.shuffle(&mut rng);

            let mut tokens = vec![SubwordToken::special(BOS, SPECIAL_ATTRIBUTION)];
            for (text, a) in units {
                push_pieces(&mut tokens, text, a);
            }
            tokens.push(SubwordToken::special(EOS, SPECIAL_ATTRIBUTION));

            let id = format!("fixture-{label}-{:02}", d + 1);
            docs.push(AttributionDocument {
                doc_id: id.clone(),
                subject_id: id,
                task: Task::Cookie,
                fold: 0,
                pred_prob_ad: if label == Label::AD { 0.8 } else { 0.2 },
                true_label: Some(label),
                tokens,
            });
        }
    }
    docs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::parse_transcript;
    use proptest::prelude::*;

    fn meta() -> DocMeta {
        DocMeta {
            subject_id: "s".into(),
            task: Task::Cookie,
            label: None,
        }
    }

    #[test]
    fn zero_weights_give_half() {
        let t = parse_transcript("*PAR: the boy &uh is (.) falling .", "d").unwrap();
        let doc = score(&t, &meta(), &FeatureWeights::zero(), 3).unwrap();
        assert_eq!(doc.pred_prob_ad, 0.5);
    }

    #[test]
    fn more_fillers_raise_probability() {
        let w = FeatureWeights {
            w_ttr: 0.0,
            ..FeatureWeights::default()
        };
        let mut last = 0.0;
        for k in 0..6 {
            let mut words = vec!["cookie"; 20 - k];
            words.extend(vec!["um"; k]);
            let t = parse_transcript(&format!("*PAR: {}", words.join(" ")), "d").unwrap();
            let p = score(&t, &meta(), &w, 0).unwrap().pred_prob_ad;
            assert!(p > last, "{p} <= {last}");
            last = p;
        }
    }

    #[test]
    fn deterministic_and_fold_dependent() {
        let t = parse_transcript("*PAR: the mother is drying dishes (.) um .", "d").unwrap();
        let w = FeatureWeights::default();
        let a = score(&t, &meta(), &w, 1).unwrap();
        let b = score(&t, &meta(), &w, 1).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = score(&t, &meta(), &w, 2).unwrap();
        assert_ne!(a.pred_prob_ad, c.pred_prob_ad);
        // "drying" has six letters and stays whole; "mother" too
        assert!(a.tokens.iter().all(|t| !t.continues_word));
    }

    #[test]
    fn long_words_are_split() {
        let t = parse_transcript("*PAR: overflowing sink .", "d").unwrap();
        let doc = score(&t, &meta(), &FeatureWeights::default(), 0).unwrap();
        let texts: Vec<&str> = doc.tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, vec!["<s>", "over", "flowing", "sink", ".", "</s>"]);
        assert!(doc.tokens[2].continues_word);
    }

    #[test]
    fn jitter_is_bounded() {
        let w = FeatureWeights::default();
        for fold in 0..200 {
            let j = fold_jitter(&w, "doc", fold);
            assert!((-0.1..=0.1).contains(&j));
        }
    }

    #[test]
    fn kfold_balanced() {
        let mut subjects: Vec<(String, Label)> = (0..10).map(|i| (format!("a{i}"), Label::AD)).collect();
        subjects.extend((0..10).map(|i| (format!("h{i}"), Label::HC)));
        let folds = stratified_kfold(&subjects, 5, 7).unwrap();
        for f in 0..5 {
            for prefix in ["a", "h"] {
                let n = folds
                    .iter()
                    .filter(|(id, k)| **k == f && id.starts_with(prefix))
                    .count();
                assert_eq!(n, 2);
            }
        }
    }

    #[test]
    fn kfold_uneven_class() {
        let subjects: Vec<(String, Label)> = (0..11).map(|i| (format!("a{i}"), Label::AD)).collect();
        let folds = stratified_kfold(&subjects, 5, 1).unwrap();
        let mut sizes: Vec<usize> = (0..5).map(|f| folds.values().filter(|k| **k == f).count()).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![3, 2, 2, 2, 2]);
    }

    #[test]
    fn kfold_errors() {
        let subjects: Vec<(String, Label)> = (0..3).map(|i| (format!("a{i}"), Label::AD)).collect();
        assert!(matches!(
            stratified_kfold(&subjects, 5, 0),
            Err(SynthError::TooFewPerClass { have: 3, k: 5, .. })
        ));
        assert!(matches!(
            stratified_kfold(&subjects, 1, 0),
            Err(SynthError::InvalidFoldCount(1))
        ));
    }

    proptest! {
        #[test]
        fn kfold_partition(n_ad in 5usize..40, n_hc in 5usize..40, k in 2u32..6, seed in any::<u64>()) {
            let mut subjects: Vec<(String, Label)> = (0..n_ad).map(|i| (format!("a{i}"), Label::AD)).collect();
            subjects.extend((0..n_hc).map(|i| (format!("h{i}"), Label::HC)));
            let folds = stratified_kfold(&subjects, k, seed).unwrap();
            // every subject in exactly one fold
            let ids: BTreeSet<&String> = subjects.iter().map(|s| &s.0).collect();
            let assigned: BTreeSet<&String> = folds.keys().collect();
            prop_assert_eq!(ids, assigned);
            for prefix in ["a", "h"] {
                let sizes: Vec<usize> = (0..k)
                    .map(|f| folds.iter().filter(|(id, kk)| **kk == f && id.starts_with(prefix)).count())
                    .collect();
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            }
            prop_assert_eq!(&folds, &stratified_kfold(&subjects, k, seed).unwrap());
        }

        #[test]
        fn logit_monotone_in_filler_rate(base in 0.0f64..0.2, d in 0.001f64..0.1) {
            let w = FeatureWeights::default();
            let f = Features { filler_rate: base, pause_rate: 0.01, pronoun_rate: 0.03, type_token_ratio: 0.5, n_tokens: 100 };
            let g = Features { filler_rate: base + d, ..f };
            prop_assert!(logistic(w.logit(&g)) > logistic(w.logit(&f)));
        }
    }

    #[test]
    fn corpus_is_reproducible() {
        let spec = CorpusSpec::default();
        let a = make_fixture_corpus(&spec, 11).unwrap();
        let b = make_fixture_corpus(&spec, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 31 + 24 + 26 + 20 + 24 + 24 + 24 + 24);
        let c = make_fixture_corpus(&spec, 12).unwrap();
        assert_ne!(a, c);
        for t in &a {
            parse_transcript(&t.text, &t.doc_id).unwrap();
        }
    }

    #[test]
    fn corpus_spec_validation() {
        let mut spec = CorpusSpec::default();
        spec.tasks[0].hc = 0;
        assert!(make_fixture_corpus(&spec, 0).is_err());
    }
}
