//! Plan assistive features from numeric summaries: the band rules, the exact
//! prompt an LLM would see, and the validated LLM path.
//!
//! Run: `cargo run --example assistive_plan`
//! Set `MEMOR_LLM_URL` to an OpenAI-compatible chat endpoint to query it.

use memore::llm::{HttpChatClient, LlmConfig, ScriptedClient, URL_ENV};
use memore::planner::{build_prompt, demonstrations, plan_llm, plan_rules, PlanRequest};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let query = PlanRequest::new(0.55, 0.63, 0.03, 0.21, 0.74);
    for req in demonstrations().iter().chain([&query]) {
        let plan = plan_rules(req)?;
        let names: Vec<_> = plan.features.iter().map(|f| f.display_name()).collect();
        println!("severity {:.2} -> {}", req.severity_index, names.join(", "));
    }

    println!("\n--- prompt ---\n{}", build_prompt(&query)?);

    let outcome = if std::env::var(URL_ENV).is_ok() {
        let cfg = LlmConfig::from_env();
        plan_llm(&query, &mut HttpChatClient::new(cfg.clone())?, &cfg)?
    } else {
        // A reply that names one feature outside the closed vocabulary, then a
        // valid one: the first is rejected and retried.
        let mut client = ScriptedClient::new([
            Ok(r#"{"features": ["Daily Reminder", "medication_dispense"], "rationale": "..."}"#.to_string()),
            Ok(r#"Sure! {"features": ["Daily Reminder", "Scheduler", "Match the Fruit"], "rationale": "Moderate scores suggest routine support and light cognitive play."}"#.to_string()),
        ]);
        let cfg = LlmConfig {
            backoff: std::time::Duration::from_millis(10),
            ..LlmConfig::default()
        };
        plan_llm(&query, &mut client, &cfg)?
    };
    println!("--- outcome ---\n{}", serde_json::to_string_pretty(&outcome)?);
    Ok(())
}
