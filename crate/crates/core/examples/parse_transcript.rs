//! Parse a small CHAT transcript and show how each participant token is
//! categorised.
//!
//! Run: `cargo run --example parse_transcript [path/to/file.cha]`

use memore::transcript::{parse_transcript, read_transcript, token_frequencies, Speaker};

const SAMPLE: &str = "\
@Begin
@Participants:\tPAR Participant, INV Investigator
*INV:\ttell me everything you see going on in this picture .
*PAR:\twell &uh the boy is (.) getting cookies [/] cookies out of the jar .
*PAR:\tand she's &um washing the dishes and the water is &=laughs
\trunning over xxx .
%com:\tparticipant points at the sink
@End
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let transcript = match std::env::args().nth(1) {
        Some(path) => read_transcript(path)?,
        None => parse_transcript(SAMPLE, "sample")?,
    };

    for utt in transcript
        .speaker_turns
        .iter()
        .filter(|u| u.speaker == Speaker::Participant)
    {
        println!("{}", utt.normalized_line());
        for tok in &utt.tokens {
            println!("  {:<12} {}", tok.text, tok.category.as_str());
        }
    }

    println!("\nparticipant token frequencies:");
    for (category, f) in token_frequencies(&transcript)? {
        println!("  {:<16} {:>6.2}%", category.as_str(), 100.0 * f);
    }
    Ok(())
}
