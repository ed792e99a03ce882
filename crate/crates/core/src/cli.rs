//! Command-line front end. Each subcommand reads files, writes only under
//! `--out`, and produces byte-identical output for identical input.

use crate::attribution::{
    group_profile, group_table, profile, read_attribution_file_with, write_attribution_jsonl, write_group_csv,
    AttributionDocument, BucketProfile, Label, ReadOptions,
};
use crate::llm::{HttpChatClient, LlmConfig, URL_ENV};
use crate::persona::{
    aggregate_domain_errors, evaluate_categorizer, read_categorizer_fixture, read_logs, read_personas, read_probe,
    run_persona_session, CategorizerReport, Domain, DomainProfile, GroupBy, LlmCategorizer, LlmPatient, Playback,
    Probe, SessionReport, DEFAULT_TRIALS,
};
use crate::planner::{join_plan_requests, parse_plan_requests, plan_llm, plan_rules, PlanOutcome};
use crate::plot::{histogram_svg, scatter_svg};
use crate::severity::{
    aggregate_subjects, predictions_from_documents, read_predictions_csv, severity_histogram, stability_scatter,
    subject_metrics, write_histogram_csv, write_predictions_csv, write_scatter_csv, FoldPrediction, SeverityWeights,
    DEFAULT_BINS,
};
use crate::synthscore::{
    frequency_mass_fixture, make_fixture_corpus, score, stratified_kfold, CorpusSpec, DocMeta, FeatureWeights,
};
use crate::transcript::{parse_transcript, read_transcript, token_frequencies};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Debug, Parser)]
#[command(
    name = "memore",
    version,
    about = "Attribution profiling, severity indexing and assistive planning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse `.cha` transcripts into token/category JSON.
    Parse(ParseArgs),
    /// Bucket profiles and the class comparison table from attribution files.
    Profile(ProfileArgs),
    /// Subject severity, threshold metrics, histogram and scatter.
    Severity(SeverityArgs),
    /// Assistive plans from numeric plan requests.
    Plan(PlanArgs),
    /// Persona probe sessions and categorizer evaluation.
    Persona(PersonaArgs),
    /// Synthetic corpus, fold assignment, attributions and predictions.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Predicted class is AD when `pred_prob_ad >= threshold`.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Reject records whose fold is not below this.
    #[arg(long)]
    pub fold_count: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SeverityArgs {
    /// CSV with `subject_id,fold,prob,label`.
    #[arg(long, conflicts_with = "attributions", required_unless_present = "attributions")]
    pub predictions: Option<PathBuf>,
    /// Attribution JSONL files; also produces `plan_requests.json`.
    #[arg(long, num_args = 1..)]
    pub attributions: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.6)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.4)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub vote_threshold: f64,
    #[arg(long, default_value_t = 0.05)]
    pub stability_cutoff: f64,
    /// Comma-separated decision thresholds on mean probability.
    #[arg(long, default_value = "0.5,0.75")]
    pub thresholds: String,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Plan request JSON (single object, array, or `plan_requests.json`).
    #[arg(long, alias = "profile")]
    pub requests: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Skip the LLM and use the band rules.
    #[arg(long, conflicts_with = "llm_url")]
    pub rules_only: bool,
    #[arg(long, env = URL_ENV)]
    pub llm_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
    #[arg(long, default_value_t = 2)]
    pub retries: u32,
}

#[derive(Debug, Args)]
pub struct PersonaArgs {
    /// Probe JSON; the bundled probe when omitted.
    #[arg(long)]
    pub probe: Option<PathBuf>,
    /// Directory of persona spec files.
    #[arg(long)]
    pub personas: PathBuf,
    /// Recorded session log (JSON lines).
    #[arg(long, required_unless_present = "live", conflicts_with = "live")]
    pub fixtures: Option<PathBuf>,
    /// Query LLM endpoints instead of playing back logs.
    #[arg(long)]
    pub live: bool,
    #[arg(long, env = URL_ENV)]
    pub llm_url: Option<String>,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: u32,
    /// Predicted/truth profile file for the categorizer report.
    #[arg(long)]
    pub categorizer_eval: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Corpus spec JSON; built-in defaults when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub folds: u32,
    /// Also write the exact frequency/mass fixture.
    #[arg(long)]
    pub mass_fixture: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit code 2 for configuration problems, 1 for everything else.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Module { kind: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Module { .. } => 1,
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        let (kind, message) = match self {
            CliError::Config(m) => ("config", m.as_str()),
            CliError::Module { kind, message } => (*kind, message.as_str()),
        };
        serde_json::json!({ "error": kind, "message": message }).to_string()
    }
}

fn module<E: Display>(kind: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::Module {
        kind,
        message: e.to_string(),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Module {
        kind: "io",
        message: format!("{}: {e}", path.display()),
    }
}

fn write_file(out: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = out.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(&path, bytes).map_err(io_err(&path))
}

fn write_json<T: Serialize + ?Sized>(out: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(module("json"))?;
    bytes.push(b'\n');
    write_file(out, name, &bytes)
}

fn csv_bytes<F>(f: F) -> Result<Vec<u8>, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), csv::Error>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(module("csv"))?;
    Ok(buf)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Parse(a) => cmd_parse(&a),
        Command::Profile(a) => cmd_profile(&a),
        Command::Severity(a) => cmd_severity(&a),
        Command::Plan(a) => cmd_plan(&a),
        Command::Persona(a) => cmd_persona(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

/// Parse `args` (without the program name) and run. Returns the exit code;
/// errors are printed to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(std::iter::once("memore".into()).chain(args.into_iter().map(Into::into))) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

#[derive(Serialize)]
struct ParsedTranscript<'a> {
    doc_id: &'a str,
    metadata: &'a [String],
    utterances: &'a [crate::transcript::Utterance],
    frequencies: std::collections::BTreeMap<crate::transcript::TokenCategory, f64>,
}

pub fn cmd_parse(a: &ParseArgs) -> Result<(), CliError> {
    for path in &a.inputs {
        let t = read_transcript(path).map_err(module("transcript"))?;
        let frequencies = token_frequencies(&t).map_err(module("transcript"))?;
        let parsed = ParsedTranscript {
            doc_id: &t.doc_id,
            metadata: &t.metadata,
            utterances: &t.speaker_turns,
            frequencies,
        };
        write_json(&a.out, &format!("{}.json", t.doc_id), &parsed)?;
    }
    Ok(())
}

fn read_documents(paths: &[PathBuf], opts: ReadOptions) -> Result<Vec<AttributionDocument>, CliError> {
    let mut docs = Vec::new();
    for p in paths {
        docs.extend(read_attribution_file_with(p, opts).map_err(module("attribution"))?);
    }
    docs.sort_by(|a, b| (&a.doc_id, a.fold).cmp(&(&b.doc_id, b.fold)));
    Ok(docs)
}

fn profiles_of(docs: &[AttributionDocument]) -> Result<Vec<BucketProfile>, CliError> {
    docs.iter().map(|d| profile(d).map_err(module("attribution"))).collect()
}

fn check_unit(name: &str, v: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

pub fn cmd_profile(a: &ProfileArgs) -> Result<(), CliError> {
    check_unit("--threshold", a.threshold)?;
    let docs = read_documents(
        &a.inputs,
        ReadOptions {
            fold_count: a.fold_count,
        },
    )?;
    let profiles = profiles_of(&docs)?;
    write_json(&a.out, "profiles.json", &profiles)?;
    let hc = group_profile(&profiles, Label::HC, a.threshold);
    let ad = group_profile(&profiles, Label::AD, a.threshold);
    match (hc, ad) {
        (Ok(hc), Ok(ad)) => {
            write_json(&a.out, "group_summary.json", &[hc, ad])?;
            let rows = group_table(&profiles, a.threshold).map_err(module("attribution"))?;
            write_file(&a.out, "group_table.csv", &csv_bytes(|b| write_group_csv(b, &rows))?)?;
        }
        (hc, ad) => {
            let missing = if hc.is_err() { "HC" } else { "AD" };
            eprintln!(
                "note: no {missing} documents at threshold {}; group table skipped",
                a.threshold
            );
            if let Ok(s) = hc.or(ad) {
                write_json(&a.out, "group_summary.json", &[s])?;
            }
        }
    }
    Ok(())
}

pub fn parse_thresholds(s: &str) -> Result<Vec<f64>, CliError> {
    let ts: Vec<f64> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("--thresholds: {t:?}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    if ts.is_empty() {
        return Err(CliError::Config("--thresholds is empty".into()));
    }
    for t in &ts {
        check_unit("threshold", *t)?;
    }
    Ok(ts)
}

pub fn cmd_severity(a: &SeverityArgs) -> Result<(), CliError> {
    let weights = SeverityWeights {
        alpha: a.alpha,
        beta: a.beta,
        gamma: a.gamma,
        vote_threshold: a.vote_threshold,
        stability_cutoff: a.stability_cutoff,
    };
    weights.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let thresholds = parse_thresholds(&a.thresholds)?;
    if a.bins == 0 {
        return Err(CliError::Config("--bins must be positive".into()));
    }

    let (preds, docs): (Vec<FoldPrediction>, Option<Vec<AttributionDocument>>) = match &a.predictions {
        Some(p) => {
            let f = fs::File::open(p).map_err(io_err(p))?;
            (read_predictions_csv(f).map_err(module("severity"))?, None)
        }
        None => {
            let docs = read_documents(&a.attributions, ReadOptions::default())?;
            (predictions_from_documents(&docs), Some(docs))
        }
    };
    let subjects = aggregate_subjects(&preds, &weights).map_err(module("severity"))?;
    let metrics = subject_metrics(&subjects, &thresholds).map_err(module("severity"))?;
    let hist = severity_histogram(&subjects, a.bins).map_err(module("severity"))?;
    let scatter = stability_scatter(&subjects).map_err(module("severity"))?;

    write_json(&a.out, "subjects.json", &subjects)?;
    write_json(&a.out, "metrics.json", &metrics)?;
    write_file(&a.out, "histogram.csv", &csv_bytes(|b| write_histogram_csv(b, &hist))?)?;
    write_file(&a.out, "scatter.csv", &csv_bytes(|b| write_scatter_csv(b, &scatter))?)?;
    write_file(
        &a.out,
        "histogram.svg",
        histogram_svg(&hist, "Mean AD probability per subject").as_bytes(),
    )?;
    write_file(
        &a.out,
        "scatter.svg",
        scatter_svg(&scatter, "Cross-fold stability").as_bytes(),
    )?;
    if let Some(docs) = docs {
        let profiles = profiles_of(&docs)?;
        let requests = join_plan_requests(&subjects, &profiles).map_err(module("planner"))?;
        write_json(&a.out, "plan_requests.json", &requests)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SubjectPlan {
    subject_id: String,
    #[serde(flatten)]
    outcome: PlanOutcome,
}

pub fn cmd_plan(a: &PlanArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.requests).map_err(io_err(&a.requests))?;
    let requests = parse_plan_requests(&text).map_err(module("planner"))?;
    let mut client = if a.rules_only {
        None
    } else {
        let url = a
            .llm_url
            .clone()
            .ok_or_else(|| CliError::Config(format!("either --rules-only or --llm-url (or {URL_ENV}) is required")))?;
        let mut cfg = LlmConfig {
            url,
            timeout: Duration::from_secs(a.timeout_secs),
            retries: a.retries,
            ..LlmConfig::default()
        };
        if let Some(m) = &a.model {
            cfg.model = m.clone();
        }
        Some((HttpChatClient::new(cfg.clone()).map_err(module("llm"))?, cfg))
    };
    let mut plans = Vec::with_capacity(requests.len());
    for r in requests {
        let outcome = match client.as_mut() {
            None => PlanOutcome {
                plan: plan_rules(&r.request).map_err(module("planner"))?,
                attempts: 0,
                errors: Vec::new(),
            },
            Some((c, cfg)) => plan_llm(&r.request, c, cfg).map_err(module("planner"))?,
        };
        plans.push(SubjectPlan {
            subject_id: r.subject_id,
            outcome,
        });
    }
    write_json(&a.out, "plans.json", &plans)
}

fn stage_table_csv(profiles: &[DomainProfile]) -> Result<Vec<u8>, CliError> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        let mut header = vec!["Group".to_string()];
        header.extend(Domain::ALL.iter().map(|d| d.as_str().to_string()));
        header.extend(["total".to_string(), "stage_pred".to_string()]);
        w.write_record(&header)?;
        for p in profiles {
            let mut row = vec![p.id.clone()];
            row.extend(Domain::ALL.iter().map(|d| format!("{:.2}", p.error_pct[d])));
            row.push(format!("{:.2}", p.total_error_pct));
            row.push(p.stage_pred.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })
}

fn categorizer_csv(report: &CategorizerReport) -> Result<Vec<u8>, CliError> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        let mut header = vec!["Persona".to_string(), "GT".to_string(), "Pred".to_string()];
        header.extend(Domain::ALL.iter().map(|d| format!("delta_{}", d.as_str())));
        header.push("cat_err".to_string());
        w.write_record(&header)?;
        for r in &report.rows {
            let mut row = vec![r.persona_id.clone(), r.gt_stage.to_string(), r.pred_stage.to_string()];
            row.extend(Domain::ALL.iter().map(|d| format!("{:.2}", r.delta[d])));
            row.push(format!("{:.2}", r.cat_err));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn cmd_persona(a: &PersonaArgs) -> Result<(), CliError> {
    if a.trials == 0 {
        return Err(CliError::Config("--trials must be positive".into()));
    }
    let probe = match &a.probe {
        Some(p) => read_probe(p).map_err(module("persona"))?,
        None => Probe::builtin(),
    };
    let personas = read_personas(&a.personas).map_err(module("persona"))?;
    if personas.is_empty() {
        return Err(CliError::Config(format!(
            "no persona specs in {}",
            a.personas.display()
        )));
    }
    let mut sessions: Vec<SessionReport> = Vec::new();
    if a.live {
        let url = a
            .llm_url
            .clone()
            .ok_or_else(|| CliError::Config(format!("--live needs --llm-url or {URL_ENV}")))?;
        let cfg = LlmConfig {
            url,
            ..LlmConfig::default()
        };
        for p in &personas {
            let mut patient = LlmPatient(HttpChatClient::new(cfg.clone()).map_err(module("llm"))?);
            let mut cat = LlmCategorizer(HttpChatClient::new(cfg.clone()).map_err(module("llm"))?);
            sessions.push(run_persona_session(&probe, p, &mut patient, &mut cat, a.trials));
        }
    } else {
        let path = a.fixtures.as_ref().expect("clap enforces --fixtures without --live");
        let log = Playback::new(read_logs(path).map_err(module("persona"))?);
        for p in &personas {
            let (mut patient, mut cat) = (log.clone(), log.clone());
            sessions.push(run_persona_session(&probe, p, &mut patient, &mut cat, a.trials));
        }
    }
    let responses: Vec<_> = sessions.iter().flat_map(|s| s.responses.iter().cloned()).collect();
    let by_stage = aggregate_domain_errors(&responses, &probe, GroupBy::Stage).map_err(module("persona"))?;
    let by_persona = aggregate_domain_errors(&responses, &probe, GroupBy::Persona).map_err(module("persona"))?;

    write_json(&a.out, "sessions.json", &sessions)?;
    write_json(&a.out, "stage_profiles.json", &by_stage)?;
    write_json(&a.out, "persona_profiles.json", &by_persona)?;
    write_file(&a.out, "stage_errors.csv", &stage_table_csv(&by_stage)?)?;
    write_file(&a.out, "persona_errors.csv", &stage_table_csv(&by_persona)?)?;
    if let Some(path) = &a.categorizer_eval {
        let fx = read_categorizer_fixture(path).map_err(module("persona"))?;
        let report = evaluate_categorizer(&fx.predicted, &fx.truth).map_err(module("persona"))?;
        write_json(&a.out, "categorizer_report.json", &report)?;
        write_file(&a.out, "categorizer_report.csv", &categorizer_csv(&report)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ManifestEntry {
    subject_id: String,
    doc_id: String,
    task: crate::attribution::Task,
    label: Label,
    /// Fold in which this subject is held out.
    fold: u32,
}

#[derive(Serialize)]
struct Manifest {
    seed: u64,
    folds: u32,
    spec: CorpusSpec,
    weights: FeatureWeights,
    subjects: Vec<ManifestEntry>,
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => CorpusSpec::default(),
    };
    if a.folds < 2 {
        return Err(CliError::Config("--folds must be at least 2".into()));
    }
    let corpus = make_fixture_corpus(&spec, a.seed).map_err(module("synth"))?;
    let labelled: Vec<(String, Label)> = corpus.iter().map(|t| (t.subject_id.clone(), t.label)).collect();
    let folds = stratified_kfold(&labelled, a.folds, a.seed).map_err(module("synth"))?;
    let weights = FeatureWeights {
        seed: a.seed,
        ..FeatureWeights::default()
    };

    let mut docs = Vec::new();
    let mut subjects = Vec::new();
    for t in &corpus {
        write_file(&a.out, &format!("transcripts/{}.cha", t.doc_id), t.text.as_bytes())?;
        let parsed = parse_transcript(&t.text, &t.doc_id).map_err(module("transcript"))?;
        let meta = DocMeta {
            subject_id: t.subject_id.clone(),
            task: t.task,
            label: Some(t.label),
        };
        for k in 0..a.folds {
            docs.push(score(&parsed, &meta, &weights, k).map_err(module("synth"))?);
        }
        subjects.push(ManifestEntry {
            subject_id: t.subject_id.clone(),
            doc_id: t.doc_id.clone(),
            task: t.task,
            label: t.label,
            fold: folds[&t.subject_id],
        });
    }
    docs.sort_by(|a, b| (&a.doc_id, a.fold).cmp(&(&b.doc_id, b.fold)));
    subjects.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));

    let mut jsonl = Vec::new();
    write_attribution_jsonl(&mut jsonl, &docs).map_err(module("io"))?;
    write_file(&a.out, "attributions.jsonl", &jsonl)?;
    let preds = predictions_from_documents(&docs);
    write_file(
        &a.out,
        "predictions.csv",
        &csv_bytes(|b| write_predictions_csv(b, &preds))?,
    )?;
    write_json(
        &a.out,
        "manifest.json",
        &Manifest {
            seed: a.seed,
            folds: a.folds,
            spec,
            weights,
            subjects,
        },
    )?;
    if a.mass_fixture {
        let mut buf = Vec::new();
        write_attribution_jsonl(&mut buf, &frequency_mass_fixture(a.seed)).map_err(module("io"))?;
        write_file(&a.out, "mass_fixture_attributions.jsonl", &buf)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_list() {
        assert_eq!(parse_thresholds("0.5, 0.75").unwrap(), vec![0.5, 0.75]);
        assert!(matches!(parse_thresholds("0.5,x"), Err(CliError::Config(_))));
        assert!(matches!(parse_thresholds("1.5"), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_flag_exits_2() {
        assert_eq!(main_with_args(["severity", "--bogus"]), 2);
        assert_eq!(
            main_with_args([
                "plan",
                "--requests",
                "x.json",
                "--out",
                "o",
                "--rules-only",
                "--llm-url",
                "u"
            ]),
            2
        );
    }

    #[test]
    fn error_json_shape() {
        let e = CliError::Module {
            kind: "severity",
            message: "no predictions".into(),
        };
        assert_eq!(e.exit_code(), 1);
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["error"], "severity");
    }
}
