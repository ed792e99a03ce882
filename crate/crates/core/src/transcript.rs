//! CHAT-subset transcript parsing.
//!
//! Only the parts of the CHAT convention that carry the marker classes used
//! downstream are understood: `*XXX:` speaker tiers, `%`/`@` metadata lines,
//! tab-indented continuation lines, and the filler / pause / annotation
//! markers recognised by [`Lexicons::categorize`]. Everything else in a line
//! is treated as an ordinary whitespace-delimited token.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;
use thiserror::Error;

const FILLERS: &str = include_str!("../data/lexicons/fillers.txt");
const PRONOUNS: &str = include_str!("../data/lexicons/pronouns.txt");
const PAUSES: &str = include_str!("../data/lexicons/pauses.txt");

/// CHAT untranscribed / unintelligible placeholders.
const CHAT_PLACEHOLDERS: [&str; 3] = ["xxx", "yyy", "www"];

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("line {line}: malformed line: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("transcript has no participant utterances")]
    EmptyTranscript,
    #[error("document id must be non-empty")]
    EmptyDocId,
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Participant,
    Investigator,
    Other,
}

impl Speaker {
    fn from_code(code: &str) -> Self {
        match code {
            "PAR" => Speaker::Participant,
            "INV" => Speaker::Investigator,
            _ => Speaker::Other,
        }
    }
}

/// Fine-grained token category. Declaration order is the order categories are
/// listed in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenCategory {
    Filler,
    Pause,
    ChatAnnotation,
    Pronoun,
    Punctuation,
    ShortFragment,
    LexicalContent,
}

impl TokenCategory {
    pub const ALL: [TokenCategory; 7] = [
        TokenCategory::Filler,
        TokenCategory::Pause,
        TokenCategory::ChatAnnotation,
        TokenCategory::Pronoun,
        TokenCategory::Punctuation,
        TokenCategory::ShortFragment,
        TokenCategory::LexicalContent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TokenCategory::Filler => "filler",
            TokenCategory::Pause => "pause",
            TokenCategory::ChatAnnotation => "chat_annotation",
            TokenCategory::Pronoun => "pronoun",
            TokenCategory::Punctuation => "punctuation",
            TokenCategory::ShortFragment => "short_fragment",
            TokenCategory::LexicalContent => "lexical_content",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    /// Original text, case preserved.
    pub text: String,
    pub category: TokenCategory,
    /// Byte range of `text` within the owning utterance's `raw_line`.
    pub char_span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub tokens: Vec<Token>,
    /// Tier content after the `*XXX:` prefix, with media bullets removed.
    pub raw_line: String,
}

impl Utterance {
    /// `raw_line` with runs of whitespace collapsed to single spaces.
    pub fn normalized_line(&self) -> String {
        self.raw_line.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    pub fn joined_tokens(&self) -> String {
        self.tokens
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedTranscript {
    pub doc_id: String,
    pub speaker_turns: Vec<Utterance>,
    /// `@` and `%` lines, kept verbatim and otherwise ignored.
    pub metadata: Vec<String>,
    pub source_path: String,
}

impl AnnotatedTranscript {
    pub fn participant_tokens(&self) -> impl Iterator<Item = &Token> {
        self.speaker_turns
            .iter()
            .filter(|u| u.speaker == Speaker::Participant)
            .flat_map(|u| u.tokens.iter())
    }
}

/// Closed word lists driving categorisation. Entries are stored lowercased.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicons {
    pub fillers: BTreeSet<String>,
    pub pronouns: BTreeSet<String>,
    pub pauses: BTreeSet<String>,
}

impl Default for Lexicons {
    fn default() -> Self {
        Self::builtin().clone()
    }
}

impl Lexicons {
    /// The lexicons shipped under `data/lexicons/`.
    pub fn builtin() -> &'static Lexicons {
        static BUILTIN: OnceLock<Lexicons> = OnceLock::new();
        BUILTIN.get_or_init(|| Lexicons {
            fillers: parse_list(FILLERS),
            pronouns: parse_list(PRONOUNS),
            pauses: parse_list(PAUSES),
        })
    }

    /// Load `fillers.txt`, `pronouns.txt` and `pauses.txt` from `dir`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, TranscriptError> {
        let dir = dir.as_ref();
        let load = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path)
                .map(|s| parse_list(&s))
                .map_err(|source| TranscriptError::Io {
                    path: path.display().to_string(),
                    source,
                })
        };
        Ok(Lexicons {
            fillers: load("fillers.txt")?,
            pronouns: load("pronouns.txt")?,
            pauses: load("pauses.txt")?,
        })
    }

    /// Ordered rule list; the first matching rule wins.
    pub fn categorize(&self, text: &str) -> TokenCategory {
        let lower = text.to_lowercase();
        if self.pauses.contains(&lower) {
            TokenCategory::Pause
        } else if is_chat_annotation(&lower) {
            TokenCategory::ChatAnnotation
        } else if (lower.starts_with('&') && lower.len() > 1) || self.fillers.contains(&lower) {
            TokenCategory::Filler
        } else if self.pronouns.contains(&lower) {
            TokenCategory::Pronoun
        } else if !text.is_empty() && text.chars().all(|c| !c.is_alphanumeric()) {
            TokenCategory::Punctuation
        } else if text.chars().filter(|c| c.is_alphabetic()).count() <= 2 {
            TokenCategory::ShortFragment
        } else {
            TokenCategory::LexicalContent
        }
    }
}

fn parse_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

fn is_chat_annotation(lower: &str) -> bool {
    if lower.starts_with("&=") || CHAT_PLACEHOLDERS.contains(&lower) {
        return true;
    }
    // retracing / error codes: [/] [//] [///] [*]; split codes such as "[*" "m]"
    if lower.len() >= 2 && (lower.starts_with('[') || lower.ends_with(']')) {
        return true;
    }
    // utterance terminators and linkers: +... +/. +//. +"/. +,
    if let Some(rest) = lower.strip_prefix('+') {
        return !rest.is_empty() && rest.chars().all(|c| !c.is_alphanumeric());
    }
    false
}

/// Categorise a single whitespace-delimited unit with the built-in lexicons.
pub fn categorize_token(text: &str) -> TokenCategory {
    Lexicons::builtin().categorize(text)
}

pub fn parse_transcript(text: &str, doc_id: &str) -> Result<AnnotatedTranscript, TranscriptError> {
    parse_transcript_with(text, doc_id, Lexicons::builtin())
}

pub fn parse_transcript_with(
    text: &str,
    doc_id: &str,
    lexicons: &Lexicons,
) -> Result<AnnotatedTranscript, TranscriptError> {
    if doc_id.trim().is_empty() {
        return Err(TranscriptError::EmptyDocId);
    }

    enum Tier {
        Speaker(Speaker, String),
        Meta(String),
    }

    // First pass: fold continuation lines into their tier.
    let mut tiers: Vec<Tier> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('\t') {
            match tiers.last_mut() {
                Some(Tier::Speaker(_, content)) | Some(Tier::Meta(content)) => {
                    content.push(' ');
                    content.push_str(line.trim());
                }
                None => {
                    return Err(TranscriptError::MalformedLine {
                        line: lineno,
                        reason: "continuation line before any tier".into(),
                    })
                }
            }
        } else if let Some(rest) = line.strip_prefix('*') {
            let (code, content) = rest.split_once(':').ok_or_else(|| TranscriptError::MalformedLine {
                line: lineno,
                reason: "speaker tier without ':'".into(),
            })?;
            let code = code.trim();
            if code.is_empty() {
                return Err(TranscriptError::MalformedLine {
                    line: lineno,
                    reason: "empty speaker code".into(),
                });
            }
            tiers.push(Tier::Speaker(Speaker::from_code(code), content.to_string()));
        } else if line.starts_with('%') || line.starts_with('@') {
            tiers.push(Tier::Meta(line.to_string()));
        } else {
            return Err(TranscriptError::MalformedLine {
                line: lineno,
                reason: "line is not a speaker tier, metadata or continuation".into(),
            });
        }
    }

    let mut speaker_turns = Vec::new();
    let mut metadata = Vec::new();
    for tier in tiers {
        match tier {
            Tier::Meta(m) => metadata.push(m),
            Tier::Speaker(speaker, content) => {
                let raw_line = strip_media_bullets(&content).trim().to_string();
                let tokens = tokenize(&raw_line, lexicons);
                speaker_turns.push(Utterance {
                    speaker,
                    tokens,
                    raw_line,
                });
            }
        }
    }

    let has_participant = speaker_turns
        .iter()
        .any(|u| u.speaker == Speaker::Participant && !u.tokens.is_empty());
    if !has_participant {
        return Err(TranscriptError::EmptyTranscript);
    }

    Ok(AnnotatedTranscript {
        doc_id: doc_id.to_string(),
        speaker_turns,
        metadata,
        source_path: String::new(),
    })
}

/// Parse a `.cha` file; the document id is the file stem.
pub fn read_transcript(path: impl AsRef<Path>) -> Result<AnnotatedTranscript, TranscriptError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TranscriptError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let doc_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut t = parse_transcript(&text, &doc_id)?;
    t.source_path = path.display().to_string();
    Ok(t)
}

/// Media time bullets look like `\u{15}1234_5678\u{15}`.
fn strip_media_bullets(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut inside = false;
    for c in s.chars() {
        if c == '\u{15}' {
            inside = !inside;
            out.push(' ');
        } else if !inside {
            out.push(c);
        }
    }
    out
}

fn tokenize(raw: &str, lexicons: &Lexicons) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    let mut push = |s: usize, e: usize| {
        let text = &raw[s..e];
        tokens.push(Token {
            text: text.to_string(),
            category: lexicons.categorize(text),
            char_span: (s, e),
        });
    };
    for (i, c) in raw.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                push(s, i);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        push(s, raw.len());
    }
    tokens
}

/// Fraction of participant tokens in each category. All seven categories are
/// present in the result.
pub fn token_frequencies(t: &AnnotatedTranscript) -> Result<BTreeMap<TokenCategory, f64>, TranscriptError> {
    let mut counts: BTreeMap<TokenCategory, usize> = TokenCategory::ALL.iter().map(|c| (*c, 0)).collect();
    let mut total = 0usize;
    for tok in t.participant_tokens() {
        *counts.entry(tok.category).or_default() += 1;
        total += 1;
    }
    if total == 0 {
        return Err(TranscriptError::EmptyTranscript);
    }
    Ok(counts.into_iter().map(|(c, n)| (c, n as f64 / total as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use TokenCategory::*;

    fn categories(line: &str) -> Vec<TokenCategory> {
        let t = parse_transcript(line, "d").unwrap();
        t.speaker_turns[0].tokens.iter().map(|t| t.category).collect()
    }

    #[test]
    fn cookie_line_hand_categorized() {
        // "is" has two letters and is not in any lexicon -> short fragment
        assert_eq!(
            categories("*PAR: the boy &uh is (.) falling ."),
            vec![
                LexicalContent,
                LexicalContent,
                Filler,
                ShortFragment,
                Pause,
                LexicalContent,
                Punctuation
            ]
        );
    }

    #[test]
    fn pronouns_take_precedence_over_short_fragments() {
        assert_eq!(
            categories("*PAR: he took it ."),
            vec![Pronoun, LexicalContent, Pronoun, Punctuation]
        );
    }

    #[test]
    fn rule_table() {
        assert_eq!(categorize_token("um"), Filler);
        assert_eq!(categorize_token("UM"), Filler);
        assert_eq!(categorize_token("&hmm"), Filler);
        assert_eq!(categorize_token("(..)"), Pause);
        assert_eq!(categorize_token("(...)"), Pause);
        assert_eq!(categorize_token("[//]"), ChatAnnotation);
        assert_eq!(categorize_token("[*]"), ChatAnnotation);
        assert_eq!(categorize_token("+..."), ChatAnnotation);
        assert_eq!(categorize_token("xxx"), ChatAnnotation);
        assert_eq!(categorize_token("&=laughs"), ChatAnnotation);
        assert_eq!(categorize_token("They"), Pronoun);
        assert_eq!(categorize_token("?"), Punctuation);
        assert_eq!(categorize_token("a"), ShortFragment);
        assert_eq!(categorize_token("cookie"), LexicalContent);
    }

    #[test]
    fn empty_input_is_error() {
        assert!(matches!(
            parse_transcript("", "d"),
            Err(TranscriptError::EmptyTranscript)
        ));
        assert!(matches!(
            parse_transcript("@Begin\n*INV: what do you see ?\n@End", "d"),
            Err(TranscriptError::EmptyTranscript)
        ));
    }

    #[test]
    fn speaker_line_without_colon() {
        let err = parse_transcript("@Begin\n*PAR the boy", "d").unwrap_err();
        assert!(matches!(err, TranscriptError::MalformedLine { line: 2, .. }));
    }

    #[test]
    fn metadata_and_continuations() {
        let text =
            "@UTF8\n@Begin\n*INV: tell me .\n*PAR: the boy\n\tis falling . \u{15}100_200\u{15}\n%mor: n|boy\n@End\n";
        let t = parse_transcript(text, "doc").unwrap();
        assert_eq!(t.metadata.len(), 4);
        assert_eq!(t.speaker_turns.len(), 2);
        assert_eq!(t.speaker_turns[0].speaker, Speaker::Investigator);
        let par = &t.speaker_turns[1];
        assert_eq!(par.joined_tokens(), "the boy is falling .");
        assert_eq!(par.joined_tokens(), par.normalized_line());
        for tok in &par.tokens {
            assert_eq!(&par.raw_line[tok.char_span.0..tok.char_span.1], tok.text);
        }
    }

    #[test]
    fn frequencies() {
        let t = parse_transcript("*PAR: he she it they", "d").unwrap();
        let f = token_frequencies(&t).unwrap();
        assert_eq!(f[&Pronoun], 1.0);
        assert_eq!(f[&Filler], 0.0);
        assert_eq!(f.len(), 7);

        let mut words = vec!["cookie"; 95];
        words.extend(["um"; 5]);
        let t = parse_transcript(&format!("*PAR: {}", words.join(" ")), "d").unwrap();
        assert_eq!(token_frequencies(&t).unwrap()[&Filler], 0.05);
    }

    #[test]
    fn investigator_tokens_not_counted() {
        let t = parse_transcript("*INV: um um um\n*PAR: cookie jar", "d").unwrap();
        assert_eq!(token_frequencies(&t).unwrap()[&Filler], 0.0);
    }

    #[test]
    fn custom_lexicon_dir() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("fillers.txt"), "well\n").unwrap();
        fs::write(dir.path().join("pronouns.txt"), "# none\n").unwrap();
        fs::write(dir.path().join("pauses.txt"), "(.)\n").unwrap();
        let lex = Lexicons::from_dir(dir.path()).unwrap();
        assert_eq!(lex.categorize("Well"), Filler);
        assert_eq!(lex.categorize("um"), ShortFragment);
        assert_eq!(lex.categorize("they"), LexicalContent);
    }
}
