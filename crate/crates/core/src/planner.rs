//! Assistive feature planning from numeric summaries only.
//!
//! [`PlanRequest`] has exactly five numeric fields and nothing else, so no
//! transcript text can reach a prompt. Plans come either from an LLM
//! ([`plan_llm`]) whose reply is checked against a closed feature vocabulary,
//! or from the deterministic band rules in [`plan_rules`], which also serve as
//! the fallback whenever the LLM path fails.

use crate::attribution::BucketProfile;
use crate::llm::{ChatClient, LlmConfig, LlmError};
use crate::severity::SubjectSeverity;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

pub const MAX_RATIONALE_CHARS: usize = 280;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("invalid plan request: {0}")]
    InvalidRequest(String),
    #[error("reply violates plan schema: {0}")]
    SchemaViolation(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRequest {
    pub severity_index: f64,
    pub vote_rate: f64,
    pub variance: f64,
    pub disfluency_ratio: f64,
    pub content_mass: f64,
}

impl PlanRequest {
    pub fn new(severity_index: f64, vote_rate: f64, variance: f64, disfluency_ratio: f64, content_mass: f64) -> Self {
        Self {
            severity_index,
            vote_rate,
            variance,
            disfluency_ratio,
            content_mass,
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let fields = [
            ("severity_index", self.severity_index),
            ("vote_rate", self.vote_rate),
            ("variance", self.variance),
            ("disfluency_ratio", self.disfluency_ratio),
            ("content_mass", self.content_mass),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(PlanError::InvalidRequest(format!("{name} is not finite")));
            }
            if v < 0.0 {
                return Err(PlanError::InvalidRequest(format!("{name} is negative")));
            }
        }
        for (name, v) in [
            ("severity_index", self.severity_index),
            ("vote_rate", self.vote_rate),
            ("content_mass", self.content_mass),
        ] {
            if v > 1.0 {
                return Err(PlanError::InvalidRequest(format!("{name} exceeds 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    DailyReminder,
    Scheduler,
    MatchTheFruit,
    XoxGame,
    MemoryCues,
}

impl Feature {
    pub const ALL: [Feature; 5] = [
        Feature::DailyReminder,
        Feature::Scheduler,
        Feature::MatchTheFruit,
        Feature::XoxGame,
        Feature::MemoryCues,
    ];

    pub fn display_name(self) -> &'static str {
        match self {
            Feature::DailyReminder => "Daily Reminder",
            Feature::Scheduler => "Scheduler",
            Feature::MatchTheFruit => "Match the Fruit",
            Feature::XoxGame => "XOX Game",
            Feature::MemoryCues => "Memory Cues",
        }
    }

    /// Map a free-form feature name to the closed vocabulary.
    pub fn normalize(name: &str) -> Option<Feature> {
        let mut key = String::new();
        for c in name.trim().chars() {
            if c.is_alphanumeric() {
                key.extend(c.to_lowercase());
            } else if !key.is_empty() && !key.ends_with('_') {
                key.push('_');
            }
        }
        let key = key.trim_end_matches('_');
        let f = match key {
            "daily_reminder" | "daily_reminders" | "routine_reminder" | "routine_reminders" | "reminder"
            | "reminders" => Feature::DailyReminder,
            "scheduler" | "schedule" | "scheduling" | "scheduling_support" | "optional_scheduling_support" => {
                Feature::Scheduler
            }
            "match_the_fruit" | "match_the_fruit_game" | "match_the_fruit_cognitive_game" | "match_fruit" => {
                Feature::MatchTheFruit
            }
            "xox_game" | "xox" | "tic_tac_toe" => Feature::XoxGame,
            "memory_cues" | "memory_cue" | "memory_cues_photos_videos" => Feature::MemoryCues,
            _ => return None,
        };
        Some(f)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSource {
    Llm,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssistivePlan {
    pub features: BTreeSet<Feature>,
    pub rationale: String,
    pub source: PlanSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Mild,
    Moderate,
    Elevated,
}

pub fn band(req: &PlanRequest) -> Band {
    let si = req.severity_index;
    if si >= 0.65 || (si >= 0.50 && req.disfluency_ratio >= 0.25) {
        Band::Elevated
    } else if si >= 0.45 {
        Band::Moderate
    } else {
        Band::Mild
    }
}

pub fn band_features(b: Band) -> BTreeSet<Feature> {
    let list: &[Feature] = match b {
        Band::Elevated => &[Feature::DailyReminder, Feature::MemoryCues, Feature::MatchTheFruit],
        Band::Moderate => &[Feature::DailyReminder, Feature::Scheduler, Feature::MatchTheFruit],
        Band::Mild => &[Feature::DailyReminder, Feature::XoxGame, Feature::Scheduler],
    };
    list.iter().copied().collect()
}

/// Deterministic plan from the severity band.
pub fn plan_rules(req: &PlanRequest) -> Result<AssistivePlan, PlanError> {
    req.validate()?;
    let b = band(req);
    let rationale = match b {
        Band::Elevated => format!(
            "Elevated band (severity_index {:.2}, disfluency_ratio {:.2}): daily prompts, memory cues and a matching game.",
            req.severity_index, req.disfluency_ratio
        ),
        Band::Moderate => format!(
            "Moderate band (severity_index {:.2}): daily prompts, scheduling support and a matching game.",
            req.severity_index
        ),
        Band::Mild => format!(
            "Mild band (severity_index {:.2}): routine reminders, a light game and optional scheduling.",
            req.severity_index
        ),
    };
    Ok(AssistivePlan {
        features: band_features(b),
        rationale,
        source: PlanSource::Fallback,
    })
}

const DEMO_1: PlanRequest = PlanRequest {
    severity_index: 0.72,
    vote_rate: 0.80,
    variance: 0.04,
    disfluency_ratio: 0.31,
    content_mass: 0.68,
};
const DEMO_1_OUTPUT: &str = "Assistive features: Daily Reminder, Memory Cues, Match-the-Fruit cognitive game";
const DEMO_2: PlanRequest = PlanRequest {
    severity_index: 0.38,
    vote_rate: 0.40,
    variance: 0.02,
    disfluency_ratio: 0.12,
    content_mass: 0.81,
};
const DEMO_2_OUTPUT: &str =
    "Assistive features: Routine reminders, light cognitive games, optional scheduling support.";

/// The two in-context demonstration requests.
pub fn demonstrations() -> [PlanRequest; 2] {
    [DEMO_1, DEMO_2]
}

fn demo_block(n: usize, req: &PlanRequest, output: &str) -> String {
    format!(
        "Example {n} (demonstration)\n\nInput features:\n\nseverity_index = {:.2}\nvote_rate = {:.2}\nvariance = {:.2}\ndisfluency_ratio = {:.2}\ncontent_mass = {:.2}\n\nModel output:\n\n{output}\n",
        req.severity_index, req.vote_rate, req.variance, req.disfluency_ratio, req.content_mass
    )
}

/// The query block for `req`, two lines of `name = value` pairs.
pub fn query_block(req: &PlanRequest) -> String {
    format!(
        "severity_index = {:.2}, vote_rate = {:.2}, variance = {:.2}\ndisfluency_ratio = {:.2}, content_mass = {:.2}",
        req.severity_index, req.vote_rate, req.variance, req.disfluency_ratio, req.content_mass
    )
}

/// Two demonstrations, the query, the task line, and the reply format.
/// Only the five numbers of `req` are interpolated.
pub fn build_prompt(req: &PlanRequest) -> Result<String, PlanError> {
    req.validate()?;
    let allowed = Feature::ALL.map(Feature::display_name).join(", ");
    Ok(format!(
        "{}\n{}\nNew Input (query)\n\n{}\n\nTask: Recommend appropriate assistive interaction features.\n\n\
         Reply with one JSON object and nothing else, of the form {{\"features\": [...], \"rationale\": \"...\"}}.\n\
         Allowed features: {allowed}.\n\
         Keep the rationale under {MAX_RATIONALE_CHARS} characters and do not state any diagnosis or stage.\n",
        demo_block(1, &DEMO_1, DEMO_1_OUTPUT),
        demo_block(2, &DEMO_2, DEMO_2_OUTPUT),
        query_block(req),
    ))
}

/// Find the first balanced `{...}` in `text` (models like code fences).
fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Validate an assistant reply into a plan with `source = llm`.
pub fn parse_plan_reply(reply: &str) -> Result<AssistivePlan, PlanError> {
    let violation = |m: &str| PlanError::SchemaViolation(m.to_string());
    let obj = extract_json_object(reply).ok_or_else(|| violation("no JSON object in reply"))?;
    let value: Value = serde_json::from_str(obj).map_err(|e| PlanError::SchemaViolation(e.to_string()))?;
    let names = value
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| violation("`features` must be an array"))?;
    let mut features = BTreeSet::new();
    for n in names {
        let s = n.as_str().ok_or_else(|| violation("feature names must be strings"))?;
        let f = Feature::normalize(s).ok_or_else(|| PlanError::SchemaViolation(format!("unknown feature {s:?}")))?;
        features.insert(f);
    }
    if features.is_empty() {
        return Err(violation("`features` is empty"));
    }
    let rationale = match value.get("rationale") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.chars().take(MAX_RATIONALE_CHARS).collect(),
        Some(_) => return Err(violation("`rationale` must be a string")),
    };
    Ok(AssistivePlan {
        features,
        rationale,
        source: PlanSource::Llm,
    })
}

/// The plan plus a record of how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub plan: AssistivePlan,
    pub attempts: u32,
    /// One entry per failed attempt.
    pub errors: Vec<String>,
}

/// Ask the LLM, retrying with exponential backoff; fall back to
/// [`plan_rules`] once `1 + retries` attempts have failed. Never fails on a
/// valid request.
pub fn plan_llm(req: &PlanRequest, client: &mut dyn ChatClient, cfg: &LlmConfig) -> Result<PlanOutcome, PlanError> {
    let prompt = build_prompt(req)?;
    let mut errors = Vec::new();
    let attempts = cfg.retries + 1;
    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(cfg.backoff_for(attempt - 1));
        }
        let result = client
            .complete(&prompt)
            .map_err(PlanError::from)
            .and_then(|reply| parse_plan_reply(&reply));
        match result {
            Ok(plan) => {
                return Ok(PlanOutcome {
                    plan,
                    attempts: attempt + 1,
                    errors,
                })
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    Ok(PlanOutcome {
        plan: plan_rules(req)?,
        attempts,
        errors,
    })
}

/// A request tagged with the subject it summarises.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectPlanRequest {
    pub subject_id: String,
    pub request: PlanRequest,
}

/// Join subject severities with bucket profiles by subject id. Disfluency
/// ratio and content mass are averaged over all of a subject's profiles
/// (every transcript and fold).
pub fn join_plan_requests(
    subjects: &[SubjectSeverity],
    profiles: &[BucketProfile],
) -> Result<Vec<SubjectPlanRequest>, PlanError> {
    let mut acc: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for p in profiles {
        let e = acc.entry(&p.subject_id).or_default();
        e.0 += p.disfluency_ratio;
        e.1 += p.content_mass;
        e.2 += 1;
    }
    subjects
        .iter()
        .map(|s| {
            let (dr, cm, n) = acc.get(s.subject_id.as_str()).copied().ok_or_else(|| {
                PlanError::InvalidRequest(format!("no bucket profile for subject {:?}", s.subject_id))
            })?;
            let request = PlanRequest::new(s.severity_index, s.vote_rate, s.variance, dr / n as f64, cm / n as f64);
            request.validate()?;
            Ok(SubjectPlanRequest {
                subject_id: s.subject_id.clone(),
                request,
            })
        })
        .collect()
}

/// Accepts a single request object, an array of requests, or an array of
/// subject-tagged requests. Untagged requests get ids `request-001`, ...
pub fn parse_plan_requests(text: &str) -> Result<Vec<SubjectPlanRequest>, PlanError> {
    let bad = |e: serde_json::Error| PlanError::InvalidRequest(e.to_string());
    let value: Value = serde_json::from_str(text).map_err(bad)?;
    let tag = |i: usize, request: PlanRequest| SubjectPlanRequest {
        subject_id: format!("request-{:03}", i + 1),
        request,
    };
    let out: Vec<SubjectPlanRequest> = match value {
        Value::Array(items) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                if v.get("request").is_some() {
                    serde_json::from_value(v).map_err(bad)
                } else {
                    serde_json::from_value(v).map(|r| tag(i, r)).map_err(bad)
                }
            })
            .collect::<Result<_, _>>()?,
        v => vec![tag(0, serde_json::from_value(v).map_err(bad)?)],
    };
    for r in &out {
        r.request.validate()?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedClient;
    use proptest::prelude::*;
    use std::time::Duration;
    use Feature::*;

    fn set(fs: &[Feature]) -> BTreeSet<Feature> {
        fs.iter().copied().collect()
    }

    fn fast() -> LlmConfig {
        LlmConfig {
            backoff: Duration::from_millis(1),
            ..LlmConfig::default()
        }
    }

    #[test]
    fn demonstration_bands() {
        let [d1, d2] = demonstrations();
        assert_eq!(
            plan_rules(&d1).unwrap().features,
            set(&[DailyReminder, MemoryCues, MatchTheFruit])
        );
        assert_eq!(
            plan_rules(&d2).unwrap().features,
            set(&[DailyReminder, XoxGame, Scheduler])
        );
        let q = PlanRequest::new(0.55, 0.63, 0.03, 0.21, 0.74);
        assert_eq!(
            plan_rules(&q).unwrap().features,
            set(&[DailyReminder, Scheduler, MatchTheFruit])
        );
        // escalation by disfluency
        let q = PlanRequest::new(0.55, 0.63, 0.03, 0.30, 0.74);
        assert_eq!(band(&q), Band::Elevated);
    }

    #[test]
    fn query_block_matches_demo_layout() {
        let q = PlanRequest::new(0.55, 0.63, 0.03, 0.21, 0.74);
        let p = build_prompt(&q).unwrap();
        assert!(p.contains(
            "New Input (query)\n\nseverity_index = 0.55, vote_rate = 0.63, variance = 0.03\ndisfluency_ratio = 0.21, content_mass = 0.74\n\nTask: Recommend appropriate assistive interaction features."
        ));
        assert!(p.contains("severity_index = 0.72"));
    }

    #[test]
    fn invalid_requests() {
        assert!(matches!(
            build_prompt(&PlanRequest::new(f64::NAN, 0.5, 0.0, 0.1, 0.7)),
            Err(PlanError::InvalidRequest(_))
        ));
        assert!(plan_rules(&PlanRequest::new(1.2, 0.5, 0.0, 0.1, 0.7)).is_err());
        assert!(plan_rules(&PlanRequest::new(0.5, 0.5, -0.1, 0.1, 0.7)).is_err());
        assert!(serde_json::from_str::<PlanRequest>(
            r#"{"severity_index":0.5,"vote_rate":0.5,"variance":0,"disfluency_ratio":0.1,"content_mass":0.7,"note":"x"}"#
        )
        .is_err());
    }

    #[test]
    fn normalization_table() {
        assert_eq!(Feature::normalize("Daily Reminder"), Some(DailyReminder));
        assert_eq!(
            Feature::normalize("Match-the-Fruit cognitive game"),
            Some(MatchTheFruit)
        );
        assert_eq!(Feature::normalize("Memory Cues (photos/videos)"), Some(MemoryCues));
        assert_eq!(Feature::normalize("xox_game"), Some(XoxGame));
        assert_eq!(Feature::normalize("medication_dispense"), None);
    }

    #[test]
    fn llm_reply_is_normalised() {
        let mut c = ScriptedClient::new([Ok(
            "```json\n{\"features\":[\"Daily Reminder\",\"Memory Cues\"],\"rationale\":\"cues help {recall}\"}\n```"
                .into(),
        )]);
        let out = plan_llm(&demonstrations()[0], &mut c, &fast()).unwrap();
        assert_eq!(out.plan.features, set(&[DailyReminder, MemoryCues]));
        assert_eq!(out.plan.source, PlanSource::Llm);
        assert_eq!(out.attempts, 1);
        assert_eq!(out.plan.rationale, "cues help {recall}");
    }

    #[test]
    fn unknown_feature_falls_back_after_retries() {
        let bad = r#"{"features":["medication_dispense"],"rationale":"x"}"#;
        let mut c = ScriptedClient::new(vec![Ok(bad.to_string()); 3]);
        let out = plan_llm(&demonstrations()[0], &mut c, &fast()).unwrap();
        assert_eq!(out.plan.source, PlanSource::Fallback);
        assert_eq!(out.attempts, 3);
        assert_eq!(c.prompts.len(), 3);
        assert!(out.errors[0].contains("medication_dispense"));
        assert_eq!(out.plan.features, set(&[DailyReminder, MemoryCues, MatchTheFruit]));
    }

    #[test]
    fn retry_then_success() {
        let mut c = ScriptedClient::new([
            Err(LlmError::Timeout),
            Ok(r#"{"features":["scheduler"],"rationale":""}"#.into()),
        ]);
        let out = plan_llm(&demonstrations()[1], &mut c, &fast()).unwrap();
        assert_eq!(out.plan.source, PlanSource::Llm);
        assert_eq!(out.attempts, 2);
    }

    #[test]
    fn long_rationale_is_truncated() {
        let long = "x".repeat(400);
        let plan = parse_plan_reply(&format!(r#"{{"features":["xox"],"rationale":"{long}"}}"#)).unwrap();
        assert_eq!(plan.rationale.chars().count(), MAX_RATIONALE_CHARS);
        assert!(parse_plan_reply(r#"{"features":[],"rationale":""}"#).is_err());
        assert!(parse_plan_reply("no json here").is_err());
    }

    #[test]
    fn request_file_shapes() {
        let one =
            r#"{"severity_index":0.72,"vote_rate":0.8,"variance":0.04,"disfluency_ratio":0.31,"content_mass":0.68}"#;
        let rs = parse_plan_requests(one).unwrap();
        assert_eq!(rs[0].subject_id, "request-001");
        assert_eq!(rs[0].request, demonstrations()[0]);
        let tagged = format!(r#"[{{"subject_id":"s9","request":{one}}}]"#);
        assert_eq!(parse_plan_requests(&tagged).unwrap()[0].subject_id, "s9");
        assert_eq!(parse_plan_requests(&format!("[{one},{one}]")).unwrap().len(), 2);
        assert!(parse_plan_requests(r#"{"severity_index":0.5,"transcript":"hello"}"#).is_err());
    }

    proptest! {
        #[test]
        fn band_never_moves_toward_mild(si in 0.0f64..1.0, d in 0.0f64..0.5, dr in 0.0f64..1.0) {
            let lo = PlanRequest::new(si, 0.5, 0.01, dr, 0.7);
            let hi = PlanRequest::new((si + d).min(1.0), 0.5, 0.01, dr, 0.7);
            prop_assert!(band(&hi) >= band(&lo));
        }

        #[test]
        fn rules_total_on_valid_requests(si in 0.0f64..=1.0, v in 0.0f64..=1.0, var in 0.0f64..0.3, dr in 0.0f64..5.0, cm in 0.0f64..=1.0) {
            let plan = plan_rules(&PlanRequest::new(si, v, var, dr, cm)).unwrap();
            prop_assert!(!plan.features.is_empty());
        }
    }
}
