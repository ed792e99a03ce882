//! Aggregate cross-fold predictions into per-subject severity and report
//! threshold metrics, writing the histogram and scatter as SVG.
//!
//! Run: `cargo run --example severity_report [predictions.csv] [out_dir]`

use memore::plot::{histogram_svg, scatter_svg};
use memore::severity::{
    aggregate_subjects, read_predictions_csv, severity_histogram, stability_scatter, subject_metrics, SeverityWeights,
    DEFAULT_BINS,
};
use std::fs::File;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let input = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/fixtures/synthetic_predictions.csv").into());
    let preds = read_predictions_csv(File::open(&input)?)?;
    let subjects = aggregate_subjects(&preds, &SeverityWeights::default())?;

    let metrics = subject_metrics(&subjects, &[0.5, 0.75])?;
    println!(
        "{} subjects, AUC {:.3}",
        metrics.n_subjects,
        metrics.auc.unwrap_or(f64::NAN)
    );
    for m in &metrics.thresholds {
        let show = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.3}"));
        println!(
            "t = {:.2}: sensitivity {}  specificity {}  (tp {} fp {} tn {} fn {})",
            m.threshold,
            show(m.sensitivity),
            show(m.specificity),
            m.matrix.tp,
            m.matrix.fp,
            m.matrix.tn,
            m.matrix.fn_
        );
    }
    let unstable = subjects.iter().filter(|s| !s.stability_flag).count();
    let split = subjects
        .iter()
        .filter(|s| s.vote_rate > 0.0 && s.vote_rate < 1.0)
        .count();
    println!("{unstable} unstable subjects, {split} with split fold votes");

    if let Some(out) = args.next() {
        std::fs::create_dir_all(&out)?;
        let h = severity_histogram(&subjects, DEFAULT_BINS)?;
        std::fs::write(format!("{out}/histogram.svg"), histogram_svg(&h, "Mean AD probability"))?;
        let s = stability_scatter(&subjects)?;
        std::fs::write(format!("{out}/scatter.svg"), scatter_svg(&s, "Cross-fold stability"))?;
        println!("wrote {out}/histogram.svg and {out}/scatter.svg");
    }
    Ok(())
}
