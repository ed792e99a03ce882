//! Stage-conditioned persona probing, per-domain error aggregation, stage
//! estimation and categorizer evaluation.
//!
//! A session asks each probe item `trials` times. A patient client answers in
//! character; a categorizer client assigns a domain, a 0/0.5/1 score and a
//! severity flag. Both exist as live LLM clients and as playback over
//! recorded JSON-lines logs, which makes sessions fully deterministic.

use crate::llm::{ChatClient, LlmError};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DEFAULT_TRIALS: u32 = 5;

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {message}")]
    Format { context: String, message: String },
    #[error("probe must have exactly 2 items per domain and 10 in total: {0}")]
    InvalidProbe(String),
    #[error("response references unknown probe item {0:?}")]
    UnknownItem(String),
    #[error("group {group:?} has no responses in domain {domain}")]
    EmptyGroup { group: String, domain: Domain },
    #[error("persona ids differ between predicted and truth sets: {0}")]
    IdMismatch(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Episodic,
    Prospective,
    Working,
    Semantic,
    Sequencing,
}

impl Domain {
    pub const ALL: [Domain; 5] = [
        Domain::Episodic,
        Domain::Prospective,
        Domain::Working,
        Domain::Semantic,
        Domain::Sequencing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Episodic => "episodic",
            Domain::Prospective => "prospective",
            Domain::Working => "working",
            Domain::Semantic => "semantic",
            Domain::Sequencing => "sequencing",
        }
    }

    pub fn parse(s: &str) -> Option<Domain> {
        Domain::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    S1,
    S3,
    S5,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::S1, Stage::S3, Stage::S5];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::S1 => "S1",
            Stage::S3 => "S3",
            Stage::S5 => "S5",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// 0 = correct, 0.5 = correct but uncertain, 1 = incorrect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Score {
    Correct,
    Uncertain,
    Incorrect,
}

impl Score {
    pub fn value(self) -> f64 {
        match self {
            Score::Correct => 0.0,
            Score::Uncertain => 0.5,
            Score::Incorrect => 1.0,
        }
    }

    pub fn from_value(v: f64) -> Option<Score> {
        if v == 0.0 {
            Some(Score::Correct)
        } else if v == 0.5 {
            Some(Score::Uncertain)
        } else if v == 1.0 {
            Some(Score::Incorrect)
        } else {
            None
        }
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Score::Correct => s.serialize_u8(0),
            Score::Uncertain => s.serialize_f64(0.5),
            Score::Incorrect => s.serialize_u8(1),
        }
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Score::from_value(v).ok_or_else(|| de::Error::custom(format!("score must be 0, 0.5 or 1, got {v}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeItem {
    pub id: String,
    pub question: String,
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub items: Vec<ProbeItem>,
}

impl Probe {
    pub fn new(items: Vec<ProbeItem>) -> Result<Self, PersonaError> {
        let probe = Probe { items };
        probe.validate()?;
        Ok(probe)
    }

    /// The probe bundled with the crate.
    pub fn builtin() -> Probe {
        serde_json::from_str(include_str!("../data/probe.json")).expect("bundled probe is valid")
    }

    pub fn validate(&self) -> Result<(), PersonaError> {
        if self.items.len() != 10 {
            return Err(PersonaError::InvalidProbe(format!("{} items", self.items.len())));
        }
        let ids: BTreeSet<&str> = self.items.iter().map(|i| i.id.as_str()).collect();
        if ids.len() != self.items.len() {
            return Err(PersonaError::InvalidProbe("duplicate item id".into()));
        }
        for d in Domain::ALL {
            let n = self.items.iter().filter(|i| i.domain == d).count();
            if n != 2 {
                return Err(PersonaError::InvalidProbe(format!("{n} items in domain {d}")));
            }
        }
        Ok(())
    }

    pub fn item(&self, id: &str) -> Option<&ProbeItem> {
        self.items.iter().find(|i| i.id == id)
    }
}

pub fn read_probe(path: &Path) -> Result<Probe, PersonaError> {
    let text = read(path)?;
    let probe: Probe = serde_json::from_str(&text).map_err(|e| format_err(path, e))?;
    probe.validate()?;
    Ok(probe)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonaRole {
    Anchor,
    Evaluation,
}

/// A fictional persona. Biography fields beyond `id`, `stage` and `role`
/// are free-form and only feed the patient prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaSpec {
    pub id: String,
    pub stage: Stage,
    pub role: PersonaRole,
    #[serde(flatten)]
    pub biography: BTreeMap<String, Value>,
}

pub fn read_persona(path: &Path) -> Result<PersonaSpec, PersonaError> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e))
}

/// Every `*.json` in `dir`, sorted by persona id.
pub fn read_personas(dir: &Path) -> Result<Vec<PersonaSpec>, PersonaError> {
    let entries = std::fs::read_dir(dir).map_err(|source| PersonaError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|source| PersonaError::Io {
                path: dir.to_path_buf(),
                source,
            })?
            .path();
        if path.extension().is_some_and(|e| e == "json") {
            out.push(read_persona(&path)?);
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResponse {
    pub persona_id: String,
    pub stage_true: Stage,
    pub item_id: String,
    #[serde(default)]
    pub trial: u32,
    /// Domain the categorizer assigned; the probe item's domain when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    pub score: Score,
    pub severity_flag: bool,
}

/// One line of a recorded session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRecord {
    pub persona_id: String,
    pub item_id: String,
    #[serde(default)]
    pub trial: u32,
    pub answer_text: String,
    /// Kept as text so an out-of-vocabulary domain surfaces per item.
    pub domain: String,
    pub score: f64,
    pub severity_flag: bool,
}

pub fn parse_logs(text: &str, context: &str) -> Result<Vec<LogRecord>, PersonaError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PersonaError::Format {
                context: format!("{context}:{}", i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_logs(path: &Path) -> Result<Vec<LogRecord>, PersonaError> {
    parse_logs(&read(path)?, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Persona,
    Stage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainProfile {
    pub id: String,
    pub error_pct: BTreeMap<Domain, f64>,
    pub total_error_pct: f64,
    pub stage_pred: Stage,
}

/// Upper-exclusive boundaries between stages on total error percentage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageThresholds {
    pub s3_from: f64,
    pub s5_from: f64,
}

impl Default for StageThresholds {
    fn default() -> Self {
        Self {
            s3_from: 9.0,
            s5_from: 12.2,
        }
    }
}

pub fn estimate_stage(total_error_pct: f64) -> Stage {
    estimate_stage_with(total_error_pct, &StageThresholds::default())
}

pub fn estimate_stage_with(total_error_pct: f64, t: &StageThresholds) -> Stage {
    if total_error_pct < t.s3_from {
        Stage::S1
    } else if total_error_pct < t.s5_from {
        Stage::S3
    } else {
        Stage::S5
    }
}

pub fn aggregate_domain_errors(
    responses: &[ScoredResponse],
    probe: &Probe,
    group_by: GroupBy,
) -> Result<Vec<DomainProfile>, PersonaError> {
    aggregate_domain_errors_with(responses, probe, group_by, &StageThresholds::default())
}

/// Per-domain error percentage `100·Σscore/n` for each group; the total is
/// the unweighted mean of the five domains.
pub fn aggregate_domain_errors_with(
    responses: &[ScoredResponse],
    probe: &Probe,
    group_by: GroupBy,
    thresholds: &StageThresholds,
) -> Result<Vec<DomainProfile>, PersonaError> {
    let mut sums: BTreeMap<String, BTreeMap<Domain, (f64, usize)>> = BTreeMap::new();
    for r in responses {
        let item = probe
            .item(&r.item_id)
            .ok_or_else(|| PersonaError::UnknownItem(r.item_id.clone()))?;
        let domain = r.domain.unwrap_or(item.domain);
        let key = match group_by {
            GroupBy::Persona => r.persona_id.clone(),
            GroupBy::Stage => r.stage_true.to_string(),
        };
        let e = sums.entry(key).or_default().entry(domain).or_default();
        e.0 += r.score.value();
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(group, by_domain)| {
            let mut error_pct = BTreeMap::new();
            for d in Domain::ALL {
                let (s, n) = by_domain.get(&d).copied().ok_or_else(|| PersonaError::EmptyGroup {
                    group: group.clone(),
                    domain: d,
                })?;
                error_pct.insert(d, 100.0 * s / n as f64);
            }
            let total = error_pct.values().sum::<f64>() / Domain::ALL.len() as f64;
            Ok(DomainProfile {
                id: group,
                error_pct,
                total_error_pct: total,
                stage_pred: estimate_stage_with(total, thresholds),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorizerRow {
    pub persona_id: String,
    pub gt_stage: Stage,
    pub pred_stage: Stage,
    /// |pred − truth| in percentage points.
    pub delta: BTreeMap<Domain, f64>,
    /// Sum of the per-domain deltas.
    pub cat_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorizerReport {
    pub rows: Vec<CategorizerRow>,
    /// Fraction of personas whose predicted stage matches truth.
    pub stage_accuracy: f64,
}

/// Compare predicted profiles with ground-truth profiles of the same ids.
pub fn evaluate_categorizer(
    predicted: &[DomainProfile],
    truth: &[DomainProfile],
) -> Result<CategorizerReport, PersonaError> {
    let index = |ps: &[DomainProfile], which: &str| -> Result<BTreeMap<String, DomainProfile>, PersonaError> {
        let mut m = BTreeMap::new();
        for p in ps {
            if m.insert(p.id.clone(), p.clone()).is_some() {
                return Err(PersonaError::IdMismatch(format!("duplicate {which} id {:?}", p.id)));
            }
        }
        Ok(m)
    };
    let pred = index(predicted, "predicted")?;
    let gt = index(truth, "truth")?;
    if pred.is_empty() {
        return Err(PersonaError::IdMismatch("no personas".into()));
    }
    if let Some(id) = pred
        .keys()
        .find(|k| !gt.contains_key(*k))
        .or(gt.keys().find(|k| !pred.contains_key(*k)))
    {
        return Err(PersonaError::IdMismatch(format!("{id:?} missing on one side")));
    }
    let mut rows = Vec::with_capacity(pred.len());
    for (id, p) in &pred {
        let t = &gt[id];
        let mut delta = BTreeMap::new();
        for d in Domain::ALL {
            let pv = p.error_pct.get(&d).copied().unwrap_or(0.0);
            let tv = t.error_pct.get(&d).copied().unwrap_or(0.0);
            delta.insert(d, (pv - tv).abs());
        }
        rows.push(CategorizerRow {
            persona_id: id.clone(),
            gt_stage: t.stage_pred,
            pred_stage: p.stage_pred,
            cat_err: delta.values().sum(),
            delta,
        });
    }
    let correct = rows.iter().filter(|r| r.gt_stage == r.pred_stage).count();
    Ok(CategorizerReport {
        stage_accuracy: correct as f64 / rows.len() as f64,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorizerFixture {
    pub predicted: Vec<DomainProfile>,
    pub truth: Vec<DomainProfile>,
}

pub fn read_categorizer_fixture(path: &Path) -> Result<CategorizerFixture, PersonaError> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e))
}

// ---------------------------------------------------------------- sessions

/// Raw categorizer output, validated by the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Categorization {
    pub domain: String,
    pub score: f64,
    pub severity_flag: bool,
}

pub trait PatientClient {
    fn answer(&mut self, persona: &PersonaSpec, item: &ProbeItem, trial: u32) -> Result<String, PersonaError>;
}

pub trait CategorizerClient {
    fn categorize(
        &mut self,
        persona: &PersonaSpec,
        item: &ProbeItem,
        trial: u32,
        answer: &str,
    ) -> Result<Categorization, PersonaError>;
}

/// Recorded sessions keyed by (persona, item, trial); serves as both
/// patient and categorizer.
#[derive(Debug, Clone, Default)]
pub struct Playback {
    records: HashMap<(String, String, u32), LogRecord>,
}

impl Playback {
    pub fn new(records: impl IntoIterator<Item = LogRecord>) -> Self {
        Self {
            records: records
                .into_iter()
                .map(|r| ((r.persona_id.clone(), r.item_id.clone(), r.trial), r))
                .collect(),
        }
    }

    pub fn builtin() -> Self {
        let records = parse_logs(
            include_str!("../data/fixtures/persona_logs.jsonl"),
            "persona_logs.jsonl",
        )
        .expect("bundled logs are valid");
        Self::new(records)
    }

    fn get(&self, persona: &str, item: &str, trial: u32) -> Result<&LogRecord, PersonaError> {
        self.records
            .get(&(persona.to_string(), item.to_string(), trial))
            .ok_or_else(|| LlmError::MissingFixture(format!("{persona}/{item}/trial {trial}")).into())
    }
}

impl PatientClient for Playback {
    fn answer(&mut self, persona: &PersonaSpec, item: &ProbeItem, trial: u32) -> Result<String, PersonaError> {
        Ok(self.get(&persona.id, &item.id, trial)?.answer_text.clone())
    }
}

impl CategorizerClient for Playback {
    fn categorize(
        &mut self,
        persona: &PersonaSpec,
        item: &ProbeItem,
        trial: u32,
        _answer: &str,
    ) -> Result<Categorization, PersonaError> {
        let r = self.get(&persona.id, &item.id, trial)?;
        Ok(Categorization {
            domain: r.domain.clone(),
            score: r.score,
            severity_flag: r.severity_flag,
        })
    }
}

fn stage_description(stage: Stage) -> &'static str {
    match stage {
        Stage::S1 => "mild: occasional lapses with recent details, otherwise independent",
        Stage::S3 => "moderate: frequent lapses with recent events and plans, some confusion with multi-step tasks",
        Stage::S5 => "moderately severe: recent events and plans are often lost, sequencing is unreliable, long-held facts are mostly retained",
    }
}

pub fn patient_prompt(persona: &PersonaSpec, item: &ProbeItem) -> String {
    let bio = persona
        .biography
        .iter()
        .map(|(k, v)| match v {
            Value::String(s) => format!("{k}: {s}"),
            other => format!("{k}: {other}"),
        })
        .collect::<Vec<_>>()
        .join("\n");
    format!(
        "You are role-playing a fictional older adult for a software test. Stay in character and answer in one or two sentences.\n\
         Memory profile: {}.\n{bio}\n\nQuestion: {}\n",
        stage_description(persona.stage),
        item.question
    )
}

pub fn categorizer_prompt(item: &ProbeItem, answer: &str) -> String {
    format!(
        "Classify one question-answer pair from a memory probe.\n\
         Question: {}\nAnswer: {}\n\n\
         Reply with one JSON object and nothing else: {{\"domain\": one of \"episodic\", \"prospective\", \"working\", \"semantic\", \"sequencing\", \
         \"score\": 0 if correct, 0.5 if correct but uncertain, 1 if incorrect, \"severity_flag\": true if the error is severe}}.\n",
        item.question, answer
    )
}

/// Patient played by an LLM.
pub struct LlmPatient<C: ChatClient>(pub C);

impl<C: ChatClient> PatientClient for LlmPatient<C> {
    fn answer(&mut self, persona: &PersonaSpec, item: &ProbeItem, _trial: u32) -> Result<String, PersonaError> {
        Ok(self.0.complete(&patient_prompt(persona, item))?)
    }
}

/// Categorizer played by an LLM.
pub struct LlmCategorizer<C: ChatClient>(pub C);

impl<C: ChatClient> CategorizerClient for LlmCategorizer<C> {
    fn categorize(
        &mut self,
        _persona: &PersonaSpec,
        item: &ProbeItem,
        _trial: u32,
        answer: &str,
    ) -> Result<Categorization, PersonaError> {
        let reply = self.0.complete(&categorizer_prompt(item, answer))?;
        let start = reply.find('{');
        let end = reply.rfind('}');
        let obj = match (start, end) {
            (Some(s), Some(e)) if s < e => &reply[s..=e],
            _ => {
                return Err(PersonaError::SchemaViolation(
                    "no JSON object in categorizer reply".into(),
                ))
            }
        };
        serde_json::from_str(obj).map_err(|e| PersonaError::SchemaViolation(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub item_id: String,
    pub trial: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub persona_id: String,
    pub stage_true: Stage,
    pub trials: u32,
    pub responses: Vec<ScoredResponse>,
    /// Unscored items; excluded from all denominators.
    pub failures: Vec<ItemFailure>,
    /// `None` when failures left some domain without responses.
    pub profile: Option<DomainProfile>,
}

fn validate_categorization(c: &Categorization) -> Result<(Domain, Score), PersonaError> {
    let domain = Domain::parse(&c.domain)
        .ok_or_else(|| PersonaError::SchemaViolation(format!("unknown domain {:?}", c.domain)))?;
    let score = Score::from_value(c.score)
        .ok_or_else(|| PersonaError::SchemaViolation(format!("invalid score {}", c.score)))?;
    Ok((domain, score))
}

/// Ask every probe item `trials` times, in probe order within each trial.
pub fn run_persona_session(
    probe: &Probe,
    persona: &PersonaSpec,
    patient: &mut dyn PatientClient,
    categorizer: &mut dyn CategorizerClient,
    trials: u32,
) -> SessionReport {
    let mut responses = Vec::new();
    let mut failures = Vec::new();
    for trial in 0..trials {
        for item in &probe.items {
            let scored = patient
                .answer(persona, item, trial)
                .and_then(|answer| categorizer.categorize(persona, item, trial, &answer))
                .and_then(|c| validate_categorization(&c).map(|v| (v, c.severity_flag)));
            match scored {
                Ok(((domain, score), severity_flag)) => responses.push(ScoredResponse {
                    persona_id: persona.id.clone(),
                    stage_true: persona.stage,
                    item_id: item.id.clone(),
                    trial,
                    domain: Some(domain),
                    score,
                    severity_flag,
                }),
                Err(e) => failures.push(ItemFailure {
                    item_id: item.id.clone(),
                    trial,
                    error: e.to_string(),
                }),
            }
        }
    }
    let profile = aggregate_domain_errors(&responses, probe, GroupBy::Persona)
        .ok()
        .and_then(|mut v| v.pop());
    SessionReport {
        persona_id: persona.id.clone(),
        stage_true: persona.stage,
        trials,
        responses,
        failures,
        profile,
    }
}

fn read(path: &Path) -> Result<String, PersonaError> {
    std::fs::read_to_string(path).map_err(|source| PersonaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn format_err(path: &Path, e: serde_json::Error) -> PersonaError {
    PersonaError::Format {
        context: path.display().to_string(),
        message: e.to_string(),
    }
}
