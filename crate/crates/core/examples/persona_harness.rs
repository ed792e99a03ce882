//! Replay recorded persona sessions, aggregate per-domain errors by stage,
//! and evaluate categorizer profiles against ground truth.
//!
//! Run: `cargo run --example persona_harness`

use memore::persona::{
    aggregate_domain_errors, evaluate_categorizer, read_categorizer_fixture, read_personas, run_persona_session,
    Domain, GroupBy, Playback, Probe, DEFAULT_TRIALS,
};
use std::path::Path;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let probe = Probe::builtin();
    let personas = read_personas(&data.join("personas"))?;
    let log = Playback::builtin();

    let mut responses = Vec::new();
    for p in &personas {
        let report = run_persona_session(&probe, p, &mut log.clone(), &mut log.clone(), DEFAULT_TRIALS);
        let prof = report.profile.as_ref().expect("complete session");
        println!(
            "{} ({:?}, {}): total {:.2}% -> {}",
            p.id, p.role, p.stage, prof.total_error_pct, prof.stage_pred
        );
        responses.extend(report.responses);
    }

    println!(
        "\n{:<6}{}",
        "stage",
        Domain::ALL.map(|d| format!("{:>12}", d.as_str())).concat()
    );
    for s in aggregate_domain_errors(&responses, &probe, GroupBy::Stage)? {
        let cells: String = Domain::ALL
            .iter()
            .map(|d| format!("{:>11.2}%", s.error_pct[d]))
            .collect();
        println!("{:<6}{cells}   total {:.2}%", s.id, s.total_error_pct);
    }

    let fx = read_categorizer_fixture(&data.join("fixtures/categorizer_eval.json"))?;
    let report = evaluate_categorizer(&fx.predicted, &fx.truth)?;
    println!();
    for r in &report.rows {
        println!(
            "{}: {} -> {}  error {:.0} pp",
            r.persona_id, r.gt_stage, r.pred_stage, r.cat_err
        );
    }
    println!("stage accuracy {:.1}%", 100.0 * report.stage_accuracy);
    Ok(())
}
