//! Pluggable tokenizer contract.
//!
//! Thresholds in this crate (30K/15K scratchpad budgets, chunk caps) are
//! budget heuristics, so the default estimator is a model-free
//! ceil(chars / 4) approximation.

/// Counts tokens in a piece of text. Must be deterministic.
pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> usize;

    /// Longest prefix of `text` that fits in `max_tokens`, cut at a char boundary.
    fn truncate<'a>(&self, text: &'a str, max_tokens: usize) -> &'a str {
        if self.count(text) <= max_tokens {
            return text;
        }
        // Binary search on char count; count() is monotone in prefix length.
        let chars: Vec<usize> = text.char_indices().map(|(i, _)| i).collect();
        let (mut lo, mut hi) = (0usize, chars.len());
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            let end = if mid == chars.len() {
                text.len()
            } else {
                chars[mid]
            };
            if self.count(&text[..end]) <= max_tokens {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        let end = if lo == chars.len() {
            text.len()
        } else {
            chars[lo]
        };
        &text[..end]
    }
}

/// Default estimator: ceil(char_count / 4).
#[derive(Debug, Clone, Copy, Default)]
pub struct CharEstimateTokenizer;

impl Tokenizer for CharEstimateTokenizer {
    fn count(&self, text: &str) -> usize {
        text.chars().count().div_ceil(4)
    }
}

/// Token count under the default estimator.
pub fn token_count(text: &str) -> usize {
    CharEstimateTokenizer.count(text)
}
