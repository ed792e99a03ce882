//! Reconstruct words from subword attributions, bucket them, and compare
//! predicted classes on the bundled frequency/mass fixture.
//!
//! Run: `cargo run --example bucket_profile`

use memore::attribution::{group_table, profile, read_attribution_file, write_group_csv};
use memore::bucketing::{word_units, SubwordToken};
use memore::transcript::Lexicons;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A single hand-made document: "the cookie jar &uh is falling" with a
    // two-piece word and BOS/EOS markers.
    let tokens = vec![
        SubwordToken::special("<s>", 0.01),
        SubwordToken::word("the", 0.02),
        SubwordToken::word("cook", 0.30),
        SubwordToken::piece("ie", 0.10),
        SubwordToken::word("jar", -0.05),
        SubwordToken::word("&uh", 0.25),
        SubwordToken::word("is", 0.01),
        SubwordToken::word("falling", 0.12),
        SubwordToken::special("</s>", 0.01),
    ];
    for u in word_units(&tokens, Lexicons::builtin())? {
        println!(
            "{:<8} {:>6.2}  {:?}",
            u.text,
            u.attribution,
            u.fine_category.map(|c| c.as_str())
        );
    }

    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/data/fixtures/mass_fixture_attributions.jsonl"
    );
    let docs = read_attribution_file(path)?;
    let profiles = docs.iter().map(profile).collect::<Result<Vec<_>, _>>()?;
    for p in &profiles {
        println!(
            "{}  entropy {:.3} bits  top10 {:.3}  gini {:.3}  disfluency/content {:.3}",
            p.doc_id, p.evidence_entropy_bits, p.concentration_top10, p.concentration_gini, p.disfluency_ratio
        );
    }
    println!();
    write_group_csv(std::io::stdout(), &group_table(&profiles, 0.5)?)?;
    Ok(())
}
