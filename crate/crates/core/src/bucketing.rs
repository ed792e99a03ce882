//! Subword-to-word reconstruction and bucket assignment.

use crate::transcript::{Lexicons, TokenCategory};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BucketingError {
    #[error("subword {index} continues a word but no word precedes it")]
    DanglingContinuation { index: usize },
}

/// One tokenizer piece with its signed attribution.
///
/// Serialises to the compact interchange form `{"t","a","special"?,"cont"?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubwordToken {
    #[serde(rename = "t")]
    pub text: String,
    #[serde(rename = "a")]
    pub attribution: f64,
    #[serde(rename = "special", default, skip_serializing_if = "is_false")]
    pub is_special: bool,
    /// Joins the previous piece into the same word.
    #[serde(rename = "cont", default, skip_serializing_if = "is_false")]
    pub continues_word: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl SubwordToken {
    pub fn word(text: impl Into<String>, attribution: f64) -> Self {
        Self {
            text: text.into(),
            attribution,
            is_special: false,
            continues_word: false,
        }
    }

    pub fn piece(text: impl Into<String>, attribution: f64) -> Self {
        Self {
            continues_word: true,
            ..Self::word(text, attribution)
        }
    }

    pub fn special(text: impl Into<String>, attribution: f64) -> Self {
        Self {
            is_special: true,
            ..Self::word(text, attribution)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseBucket {
    DisfluencyAnnotation,
    LexicalContent,
    Punctuation,
    ShortFragment,
    Special,
}

impl CoarseBucket {
    /// Buckets that take part in mass normalisation.
    pub const NON_SPECIAL: [CoarseBucket; 4] = [
        CoarseBucket::DisfluencyAnnotation,
        CoarseBucket::LexicalContent,
        CoarseBucket::Punctuation,
        CoarseBucket::ShortFragment,
    ];

    pub fn from_fine(fine: TokenCategory) -> Self {
        match fine {
            TokenCategory::Filler | TokenCategory::Pause | TokenCategory::ChatAnnotation => {
                CoarseBucket::DisfluencyAnnotation
            }
            TokenCategory::Pronoun | TokenCategory::LexicalContent => CoarseBucket::LexicalContent,
            TokenCategory::Punctuation => CoarseBucket::Punctuation,
            TokenCategory::ShortFragment => CoarseBucket::ShortFragment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordUnit {
    pub text: String,
    /// Sum of the signed attributions of the pieces.
    pub attribution: f64,
    pub is_special: bool,
    /// `None` for special units and before [`assign_buckets`].
    pub fine_category: Option<TokenCategory>,
    pub coarse_bucket: Option<CoarseBucket>,
}

/// Merge continuation pieces into whole words, summing attributions.
pub fn reconstruct_words(tokens: &[SubwordToken]) -> Result<Vec<WordUnit>, BucketingError> {
    let mut units: Vec<WordUnit> = Vec::with_capacity(tokens.len());
    for (index, tok) in tokens.iter().enumerate() {
        if tok.continues_word && !tok.is_special {
            match units.last_mut() {
                Some(prev) if !prev.is_special => {
                    prev.text.push_str(&tok.text);
                    prev.attribution += tok.attribution;
                    continue;
                }
                _ => return Err(BucketingError::DanglingContinuation { index }),
            }
        }
        units.push(WordUnit {
            text: tok.text.clone(),
            attribution: tok.attribution,
            is_special: tok.is_special,
            fine_category: None,
            coarse_bucket: if tok.is_special {
                Some(CoarseBucket::Special)
            } else {
                None
            },
        });
    }
    Ok(units)
}

pub fn assign_buckets(units: Vec<WordUnit>) -> Vec<WordUnit> {
    assign_buckets_with(units, Lexicons::builtin())
}

/// (Re)derive fine and coarse labels from unit text. The special flag wins
/// over any text rule.
pub fn assign_buckets_with(mut units: Vec<WordUnit>, lexicons: &Lexicons) -> Vec<WordUnit> {
    for unit in &mut units {
        if unit.is_special {
            unit.fine_category = None;
            unit.coarse_bucket = Some(CoarseBucket::Special);
        } else {
            let fine = lexicons.categorize(&unit.text);
            unit.fine_category = Some(fine);
            unit.coarse_bucket = Some(CoarseBucket::from_fine(fine));
        }
    }
    units
}

/// [`reconstruct_words`] followed by [`assign_buckets_with`].
pub fn word_units(tokens: &[SubwordToken], lexicons: &Lexicons) -> Result<Vec<WordUnit>, BucketingError> {
    reconstruct_words(tokens).map(|u| assign_buckets_with(u, lexicons))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pieces_merge_by_sum() {
        let units = reconstruct_words(&[SubwordToken::word("cook", 0.3), SubwordToken::piece("ie", 0.2)]).unwrap();
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].text, "cookie");
        assert!((units[0].attribution - 0.5).abs() < 1e-15);
    }

    #[test]
    fn special_unit() {
        let units = assign_buckets(reconstruct_words(&[SubwordToken::special("<s>", 0.0)]).unwrap());
        assert_eq!(units[0].coarse_bucket, Some(CoarseBucket::Special));
        assert_eq!(units[0].attribution, 0.0);
        assert_eq!(units[0].fine_category, None);
    }

    #[test]
    fn dangling_continuations() {
        assert_eq!(
            reconstruct_words(&[SubwordToken::piece("ie", 0.1)]),
            Err(BucketingError::DanglingContinuation { index: 0 })
        );
        assert_eq!(
            reconstruct_words(&[SubwordToken::special("<s>", 0.0), SubwordToken::piece("ie", 0.1)]),
            Err(BucketingError::DanglingContinuation { index: 1 })
        );
    }

    #[test]
    fn mapping_table() {
        let units = assign_buckets(
            reconstruct_words(&[
                SubwordToken::word("uh", 0.1),
                SubwordToken::word("he", 0.1),
                SubwordToken::special("</s>", 0.1),
                SubwordToken::word(",", 0.1),
                SubwordToken::word("a", 0.1),
            ])
            .unwrap(),
        );
        let labels: Vec<_> = units.iter().map(|u| (u.fine_category, u.coarse_bucket)).collect();
        assert_eq!(
            labels,
            vec![
                (Some(TokenCategory::Filler), Some(CoarseBucket::DisfluencyAnnotation)),
                (Some(TokenCategory::Pronoun), Some(CoarseBucket::LexicalContent)),
                (None, Some(CoarseBucket::Special)),
                (Some(TokenCategory::Punctuation), Some(CoarseBucket::Punctuation)),
                (Some(TokenCategory::ShortFragment), Some(CoarseBucket::ShortFragment)),
            ]
        );
    }

    #[test]
    fn six_pieces_to_four_words_conserves_mass() {
        let toks = vec![
            SubwordToken::special("<s>", 0.013),
            SubwordToken::word("cook", -0.31),
            SubwordToken::piece("ie", 0.27),
            SubwordToken::word("um", 0.05),
            SubwordToken::word("fall", 0.4),
            SubwordToken::piece("ing", -0.125),
        ];
        let units = reconstruct_words(&toks).unwrap();
        assert_eq!(units.len(), 4);
        let before: f64 = toks.iter().map(|t| t.attribution).sum();
        let after: f64 = units.iter().map(|u| u.attribution).sum();
        assert!((before - after).abs() < 1e-12);
    }

    pub(crate) fn stream() -> impl Strategy<Value = Vec<SubwordToken>> {
        let piece = ("[a-z]{1,5}|um|uh|\\(\\.\\)|\\.|he", -1.0f64..1.0, 0u8..10).prop_map(|(t, a, kind)| match kind {
            0 => SubwordToken::special("<s>", a),
            1..=3 => SubwordToken::piece(t, a),
            _ => SubwordToken::word(t, a),
        });
        prop::collection::vec(piece, 1..60).prop_map(|mut v| {
            // first piece and anything after a special must start a word
            let mut prev_special = true;
            for t in &mut v {
                if prev_special && t.continues_word {
                    t.continues_word = false;
                }
                prev_special = t.is_special;
            }
            v
        })
    }

    proptest! {
        #[test]
        fn conservation(toks in stream()) {
            let units = reconstruct_words(&toks).unwrap();
            let before: f64 = toks.iter().map(|t| t.attribution).sum();
            let after: f64 = units.iter().map(|u| u.attribution).sum();
            prop_assert!((before - after).abs() < 1e-12);
            let words = toks.iter().filter(|t| !t.continues_word).count();
            prop_assert_eq!(units.len(), words);
        }

        #[test]
        fn assign_is_idempotent(toks in stream()) {
            let once = assign_buckets(reconstruct_words(&toks).unwrap());
            let twice = assign_buckets(once.clone());
            prop_assert_eq!(once, twice);
        }
    }
}
