//! Deterministic token accounting.
//!
//! The default [`RuleTokenizer`] (`rule-v1`) splits text with two rules:
//!
//! 1. Unicode whitespace separates tokens and is never part of one.
//! 2. Inside a whitespace-delimited word, every maximal run of alphanumeric
//!    characters is one token and every other character is a token by itself.
//!
//! So `"Vancomycin: 1/16-present"` is `Vancomycin`, `:`, `1`, `/`, `16`, `-`,
//! `present`. Counts are additive over whitespace-joined concatenation.

use std::ops::Range;

/// Byte range of one token inside the tokenized text.
pub type TokenSpan = Range<usize>;

pub trait Tokenizer: Send + Sync {
    /// Stable identifier, part of index cache keys and run ids.
    fn id(&self) -> &str;

    fn tokenize(&self, text: &str) -> Vec<TokenSpan>;

    fn count_tokens(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RuleTokenizer;

pub const RULE_TOKENIZER_ID: &str = "rule-v1";

impl Tokenizer for RuleTokenizer {
    fn id(&self) -> &str {
        RULE_TOKENIZER_ID
    }

    fn tokenize(&self, text: &str) -> Vec<TokenSpan> {
        let mut spans = Vec::new();
        let mut run_start: Option<usize> = None;
        for (i, c) in text.char_indices() {
            if c.is_alphanumeric() {
                run_start.get_or_insert(i);
                continue;
            }
            if let Some(s) = run_start.take() {
                spans.push(s..i);
            }
            if !c.is_whitespace() {
                spans.push(i..i + c.len_utf8());
            }
        }
        if let Some(s) = run_start {
            spans.push(s..text.len());
        }
        spans
    }

    fn count_tokens(&self, text: &str) -> usize {
        let mut n = 0;
        let mut in_run = false;
        for c in text.chars() {
            if c.is_alphanumeric() {
                if !in_run {
                    n += 1;
                    in_run = true;
                }
            } else {
                in_run = false;
                if !c.is_whitespace() {
                    n += 1;
                }
            }
        }
        n
    }
}

pub fn count_tokens(text: &str) -> usize {
    RuleTokenizer.count_tokens(text)
}

/// Looks up a tokenizer by id.
pub fn tokenizer_by_id(id: &str) -> Option<Box<dyn Tokenizer>> {
    match id {
        RULE_TOKENIZER_ID => Some(Box::new(RuleTokenizer)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_and_whitespace() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens(" \n\t "), 0);
    }

    #[test]
    fn antibiotic_line_fixture() {
        let text = "Vancomycin: 1/16-present";
        let toks: Vec<_> = RuleTokenizer.tokenize(text).into_iter().map(|r| &text[r]).collect();
        assert_eq!(toks, ["Vancomycin", ":", "1", "/", "16", "-", "present"]);
        assert_eq!(count_tokens(text), 7);
    }

    #[test]
    fn unicode_letters_stay_in_runs() {
        let text = "Ménière's café—ok";
        let toks: Vec<_> = RuleTokenizer.tokenize(text).into_iter().map(|r| &text[r]).collect();
        assert_eq!(toks, ["Ménière", "'", "s", "café", "—", "ok"]);
    }

    proptest! {
        #[test]
        fn doubling_with_space_doubles(text in "\\PC{0,80}") {
            let n = count_tokens(&text);
            prop_assert_eq!(count_tokens(&format!("{text} {text}")), 2 * n);
        }

        #[test]
        fn fast_count_matches_spans(text in "\\PC{0,120}") {
            prop_assert_eq!(count_tokens(&text), RuleTokenizer.tokenize(&text).len());
        }
    }
}
