//! Scratchpad: the semantic memory layer.
//!
//! After each exchange the model extracts salient notes which are appended
//! under a separator. When the pad grows past the compression threshold
//! (30K tokens) it is summarized down to the target (15K tokens), with hard
//! truncation if the model overshoots. At question time the pad is split
//! into semantically coherent chunks and each chunk gets a binary relevance
//! judgment; only relevant chunks are passed to the answerer.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::ExchangePair;
use crate::embedding::EmbeddingProvider;
use crate::episodic::cosine;
use crate::gateway::{CallKind, Decision, Gateway, GatewayError};
use crate::prompts;
use crate::token::Tokenizer;

/// Separator between merged notes.
pub const NOTE_SEPARATOR: &str = "\n\n---\n\n";

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Scratchpad {
    pub notes: String,
    pub token_count: usize,
}

impl Scratchpad {
    pub fn empty() -> Self {
        Scratchpad::default()
    }

    pub fn from_notes(notes: impl Into<String>, tok: &dyn Tokenizer) -> Self {
        let notes = notes.into();
        let token_count = tok.count(&notes);
        Scratchpad { notes, token_count }
    }

    /// Appends a note under a separator; empty notes leave the pad unchanged.
    pub fn merge(&self, note: &str, tok: &dyn Tokenizer) -> Scratchpad {
        if note.is_empty() {
            return self.clone();
        }
        let notes = if self.notes.is_empty() {
            note.to_string()
        } else {
            format!("{}{}{}", self.notes, NOTE_SEPARATOR, note)
        };
        Scratchpad::from_notes(notes, tok)
    }
}

/// Sidecar metadata persisted next to the pad text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ScratchpadMeta {
    pub token_count: usize,
    pub compressions_performed: u32,
    pub degraded: bool,
}

#[derive(Debug, Clone)]
pub struct ScratchpadConfig {
    /// Compression triggers when the pad exceeds this many tokens.
    pub compress_threshold: usize,
    /// Compression target; the hard cap after truncation.
    pub compress_target: usize,
    /// Breakpoint percentile over adjacent sentence distances.
    pub chunk_percentile: f64,
    pub chunk_min_sentences: usize,
    pub chunk_max_tokens: usize,
}

impl Default for ScratchpadConfig {
    fn default() -> Self {
        ScratchpadConfig {
            compress_threshold: 30_000,
            compress_target: 15_000,
            chunk_percentile: 95.0,
            chunk_min_sentences: 2,
            chunk_max_tokens: 2_000,
        }
    }
}

/// One chunk of the pad. Chunks partition the pad text in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScratchChunk {
    pub text: String,
    /// First sentence index (inclusive).
    pub start_sentence: usize,
    /// Last sentence index (exclusive).
    pub end_sentence: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ScratchpadError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("scratchpad io: {0}")]
    Io(#[from] std::io::Error),
    #[error("scratchpad meta: {0}")]
    Meta(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressOutcome {
    pub pad: Scratchpad,
    pub performed: bool,
    pub degraded: bool,
}

pub struct ScratchpadEngine {
    gateway: Arc<Gateway>,
    embedder: Arc<dyn EmbeddingProvider>,
    tokenizer: Arc<dyn Tokenizer>,
    config: ScratchpadConfig,
}

impl ScratchpadEngine {
    pub fn new(
        gateway: Arc<Gateway>,
        embedder: Arc<dyn EmbeddingProvider>,
        tokenizer: Arc<dyn Tokenizer>,
        config: ScratchpadConfig,
    ) -> Self {
        ScratchpadEngine {
            gateway,
            embedder,
            tokenizer,
            config,
        }
    }

    pub fn config(&self) -> &ScratchpadConfig {
        &self.config
    }

    /// Extracts salient notes for the current exchange, reasoning over the
    /// previous one when present. Empty result means nothing salient.
    pub fn extract_notes(
        &self,
        current: &ExchangePair,
        previous: Option<&ExchangePair>,
    ) -> Result<String, ScratchpadError> {
        let prompt = prompts::scratchpad_note(current, previous);
        let text = self.gateway.chat(CallKind::Analysis, &prompt)?;
        Ok(parse_notes(&text))
    }

    /// Compresses the pad when it exceeds the threshold. The summarization
    /// call targets the configured size; overshoot is hard-truncated. If the
    /// call fails the most recent target-size suffix is kept and the result
    /// is flagged degraded.
    pub fn maybe_compress(&self, pad: &Scratchpad) -> CompressOutcome {
        if pad.token_count <= self.config.compress_threshold {
            return CompressOutcome {
                pad: pad.clone(),
                performed: false,
                degraded: false,
            };
        }
        let prompt = prompts::scratchpad_summary(&pad.notes, self.config.compress_target);
        match self.gateway.chat(CallKind::Analysis, &prompt) {
            Ok(summary) => {
                let kept = self
                    .tokenizer
                    .truncate(&summary, self.config.compress_target);
                CompressOutcome {
                    pad: Scratchpad::from_notes(kept, self.tokenizer.as_ref()),
                    performed: true,
                    degraded: false,
                }
            }
            Err(err) => {
                log::warn!("scratchpad compression failed, keeping recent notes: {err}");
                let kept = truncate_suffix(
                    &pad.notes,
                    self.config.compress_target,
                    self.tokenizer.as_ref(),
                );
                CompressOutcome {
                    pad: Scratchpad::from_notes(kept, self.tokenizer.as_ref()),
                    performed: true,
                    degraded: true,
                }
            }
        }
    }

    /// Splits text into semantically coherent chunks: breakpoints where the
    /// cosine distance between adjacent sentence embeddings exceeds the
    /// configured percentile, then min-size merge and max-size hard split.
    pub fn semantic_chunk(&self, text: &str) -> Vec<ScratchChunk> {
        semantic_chunk(
            text,
            self.embedder.as_ref(),
            self.tokenizer.as_ref(),
            &self.config,
        )
    }

    /// Binary relevance filter over the pad's chunks. Relevant chunks are
    /// concatenated in original order; unparseable verdicts fail open
    /// (the chunk is retained).
    pub fn filter_for_query(
        &self,
        pad: &Scratchpad,
        query: &str,
    ) -> Result<String, ScratchpadError> {
        let chunks = self.semantic_chunk(&pad.notes);
        if chunks.is_empty() {
            return Ok(String::new());
        }
        let reqs: Vec<_> = chunks
            .iter()
            .map(|c| {
                self.gateway.request(
                    CallKind::Analysis,
                    vec![crate::gateway::ChatMessage::user(prompts::noise_filter(
                        &c.text, query,
                    ))],
                )
            })
            .collect();
        let mut retained = String::new();
        for (chunk, result) in chunks.iter().zip(self.gateway.generate_batch(&reqs)) {
            let keep = match result {
                Ok(resp) => match crate::gateway::parse_decision(&resp.text) {
                    Some(Decision::Yes) => true,
                    Some(Decision::No) => false,
                    None => true,
                },
                Err(GatewayError::Unparseable(_)) => true,
                Err(err) => return Err(err.into()),
            };
            if keep {
                retained.push_str(&chunk.text);
            }
        }
        Ok(retained)
    }
}

/// Strips the `NOTES:` prefix and maps "nothing salient" markers to empty.
fn parse_notes(text: &str) -> String {
    let trimmed = text.trim();
    let body = if trimmed.len() >= 6 && trimmed[..6].eq_ignore_ascii_case("notes:") {
        trimmed[6..].trim()
    } else {
        trimmed
    };
    if body.is_empty() || body.eq_ignore_ascii_case("(none)") || body.eq_ignore_ascii_case("none") {
        String::new()
    } else {
        body.to_string()
    }
}

/// Longest suffix of `text` that fits in `max_tokens`, cut at a char boundary.
fn truncate_suffix<'a>(text: &'a str, max_tokens: usize, tok: &dyn Tokenizer) -> &'a str {
    if tok.count(text) <= max_tokens {
        return text;
    }
    let starts: Vec<usize> = text.char_indices().map(|(i, _)| i).collect();
    // Find the smallest start index (largest suffix) that fits.
    let (mut lo, mut hi) = (0usize, starts.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if tok.count(&text[starts[mid]..]) <= max_tokens {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    if lo == starts.len() {
        ""
    } else {
        &text[starts[lo]..]
    }
}

/// Byte ranges of sentences, partitioning the whole text (each range keeps
/// its trailing whitespace). Splits after `.`/`!`/`?` runs followed by
/// whitespace, and at newlines.
pub fn split_sentences(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut ranges = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i].1;
        let boundary_end = if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?' | ')' | '"' | '\'') {
                j += 1;
            }
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            // Only a boundary when whitespace (or end of text) follows.
            if k > j || j == chars.len() {
                Some(k)
            } else {
                None
            }
        } else if c == '\n' {
            let mut k = i + 1;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            Some(k)
        } else {
            None
        };
        if let Some(k) = boundary_end {
            let end = if k < chars.len() {
                chars[k].0
            } else {
                text.len()
            };
            ranges.push((start, end));
            start = end;
            i = k;
        } else {
            i += 1;
        }
    }
    if start < text.len() {
        ranges.push((start, text.len()));
    }
    ranges
}

/// Linear-interpolation percentile over unsorted values.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.len() == 1 {
        return sorted[0];
    }
    let rank = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
    }
}

pub fn semantic_chunk(
    text: &str,
    embedder: &dyn EmbeddingProvider,
    tokenizer: &dyn Tokenizer,
    config: &ScratchpadConfig,
) -> Vec<ScratchChunk> {
    if text.is_empty() {
        return Vec::new();
    }
    let sentences = split_sentences(text);

    // Breakpoint detection needs at least two boundaries to rank; tiny
    // inputs stay one group (the size caps below still apply).
    let groups: Vec<(usize, usize)> = if sentences.len() <= config.chunk_min_sentences.max(1) {
        vec![(0, sentences.len())]
    } else {
        let embeddings: Vec<Vec<f32>> = sentences
            .iter()
            .map(|(s, e)| embedder.embed(text[*s..*e].trim()))
            .collect();
        let distances: Vec<f64> = embeddings
            .windows(2)
            .map(|w| 1.0 - cosine(&w[0], &w[1]).expect("equal dimensions from one embedder"))
            .collect();
        let threshold = percentile(&distances, config.chunk_percentile);

        // Sentence-index boundaries: a break between sentence i and i+1.
        let mut groups = Vec::new();
        let mut group_start = 0usize;
        for (i, d) in distances.iter().enumerate() {
            if *d > threshold {
                groups.push((group_start, i + 1));
                group_start = i + 1;
            }
        }
        groups.push((group_start, sentences.len()));
        groups
    };

    // Min size: merge short groups into the following one (the last merges backward).
    let mut merged: Vec<(usize, usize)> = Vec::new();
    let mut pending: Option<(usize, usize)> = None;
    for (s, e) in groups {
        let (s, e) = match pending.take() {
            Some((ps, _)) => (ps, e),
            None => (s, e),
        };
        if e - s < config.chunk_min_sentences {
            pending = Some((s, e));
        } else {
            merged.push((s, e));
        }
    }
    if let Some((s, e)) = pending {
        match merged.last_mut() {
            Some(last) => last.1 = e,
            None => merged.push((s, e)),
        }
    }

    // Max size: hard split oversized groups at sentence boundaries, and
    // oversized single sentences at token boundaries.
    let mut chunks: Vec<ScratchChunk> = Vec::new();
    for (s, e) in merged {
        let mut cur_start = s;
        while cur_start < e {
            let mut cur_end = cur_start;
            let mut tokens = 0usize;
            while cur_end < e {
                let (bs, be) = sentences[cur_end];
                let sentence_tokens = tokenizer.count(&text[bs..be]);
                if cur_end > cur_start && tokens + sentence_tokens > config.chunk_max_tokens {
                    break;
                }
                tokens += sentence_tokens;
                cur_end += 1;
                if tokens > config.chunk_max_tokens {
                    break;
                }
            }
            let byte_start = sentences[cur_start].0;
            let byte_end = sentences[cur_end - 1].1;
            let slice = &text[byte_start..byte_end];
            if tokenizer.count(slice) > config.chunk_max_tokens && cur_end - cur_start == 1 {
                // One sentence alone exceeds the cap: split it in pieces.
                let mut rest = slice;
                loop {
                    let piece = tokenizer.truncate(rest, config.chunk_max_tokens);
                    if piece.is_empty() {
                        break;
                    }
                    chunks.push(ScratchChunk {
                        text: piece.to_string(),
                        start_sentence: cur_start,
                        end_sentence: cur_end,
                    });
                    rest = &rest[piece.len()..];
                    if rest.is_empty() {
                        break;
                    }
                }
            } else {
                chunks.push(ScratchChunk {
                    text: slice.to_string(),
                    start_sentence: cur_start,
                    end_sentence: cur_end,
                });
            }
            cur_start = cur_end;
        }
    }
    chunks
}

/// Writes the pad text plus its metadata sidecar.
pub fn save_scratchpad(
    text_path: &Path,
    meta_path: &Path,
    pad: &Scratchpad,
    meta: &ScratchpadMeta,
) -> Result<(), ScratchpadError> {
    std::fs::write(text_path, &pad.notes)?;
    std::fs::write(
        meta_path,
        serde_json::to_string_pretty(meta).expect("meta serializes"),
    )?;
    Ok(())
}

pub fn load_scratchpad(
    text_path: &Path,
    meta_path: &Path,
    tok: &dyn Tokenizer,
) -> Result<(Scratchpad, ScratchpadMeta), ScratchpadError> {
    let notes = std::fs::read_to_string(text_path)?;
    let meta: ScratchpadMeta = serde_json::from_str(&std::fs::read_to_string(meta_path)?)
        .map_err(|e| ScratchpadError::Meta(e.to_string()))?;
    Ok((Scratchpad::from_notes(notes, tok), meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashEmbedder;
    use crate::gateway::mock::MockScript;
    use crate::token::CharEstimateTokenizer;
    use std::time::Duration;

    fn engine(script: MockScript) -> ScratchpadEngine {
        engine_with_embedder(script, Arc::new(HashEmbedder::new(32)))
    }

    fn engine_with_embedder(
        script: MockScript,
        embedder: Arc<dyn EmbeddingProvider>,
    ) -> ScratchpadEngine {
        let gw = Arc::new(
            Gateway::new(Box::new(script.into_provider()), "m").with_retries(0, Duration::ZERO),
        );
        ScratchpadEngine::new(
            gw,
            embedder,
            Arc::new(CharEstimateTokenizer),
            ScratchpadConfig::default(),
        )
    }

    /// Stub embedder mapping needle-bearing sentences to e0, the rest to e1.
    struct TopicStub;
    impl EmbeddingProvider for TopicStub {
        fn dimension(&self) -> usize {
            2
        }
        fn embed(&self, text: &str) -> Vec<f32> {
            if text.contains("alpha") {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            }
        }
    }

    fn pair(i: usize, user: &str, assistant: &str) -> ExchangePair {
        use crate::domain::{Role, Turn};
        let tok = CharEstimateTokenizer;
        ExchangePair {
            user_turn: Turn::new(2 * i, Role::User, user, &tok),
            assistant_turn: Turn::new(2 * i + 1, Role::Assistant, assistant, &tok),
        }
    }

    #[test]
    fn extract_notes_strips_prefix() {
        let eng = engine(
            MockScript::builder()
                .catch_all("NOTES: user's birthday is March 3")
                .build()
                .unwrap(),
        );
        let note = eng
            .extract_notes(&pair(0, "my birthday is March 3", "noted"), None)
            .unwrap();
        assert_eq!(note, "user's birthday is March 3");
    }

    #[test]
    fn extract_notes_none_is_empty() {
        let eng = engine(
            MockScript::builder()
                .catch_all("NOTES: (none)")
                .build()
                .unwrap(),
        );
        assert_eq!(
            eng.extract_notes(&pair(0, "hi", "hello"), None).unwrap(),
            ""
        );
    }

    #[test]
    fn merge_examples() {
        let tok = CharEstimateTokenizer;
        let pad = Scratchpad::empty().merge("A", &tok);
        assert_eq!(pad.notes, "A");
        let unchanged = pad.merge("", &tok);
        assert_eq!(unchanged, pad);
        let note = "B".repeat(50);
        let merged = pad.merge(&note, &tok);
        let sep_overhead = tok.count(NOTE_SEPARATOR) + 1;
        assert!(merged.token_count <= pad.token_count + tok.count(&note) + sep_overhead);
        assert_eq!(merged.token_count, tok.count(&merged.notes));
    }

    #[test]
    fn merge_groupings_preserve_note_multiset() {
        let tok = CharEstimateTokenizer;
        let notes = ["alpha", "beta", "gamma"];
        let one_by_one = notes
            .iter()
            .fold(Scratchpad::empty(), |pad, n| pad.merge(n, &tok));
        let pre_joined = Scratchpad::empty()
            .merge(&format!("alpha{NOTE_SEPARATOR}beta"), &tok)
            .merge("gamma", &tok);
        let split = |p: &Scratchpad| -> Vec<String> {
            p.notes.split(NOTE_SEPARATOR).map(str::to_string).collect()
        };
        assert_eq!(split(&one_by_one), notes.to_vec());
        assert_eq!(split(&pre_joined), notes.to_vec());
    }

    #[test]
    fn compress_identity_below_threshold() {
        let eng = engine(
            MockScript::builder()
                .catch_all("should never be called")
                .build()
                .unwrap(),
        );
        let tok = CharEstimateTokenizer;
        let pad = Scratchpad::from_notes("x".repeat(29_999 * 4), &tok);
        assert_eq!(pad.token_count, 29_999);
        let out = eng.maybe_compress(&pad);
        assert!(!out.performed);
        assert_eq!(out.pad, pad);
    }

    #[test]
    fn compress_uses_model_summary() {
        let summary = "s".repeat(10_000 * 4);
        let eng = engine(
            MockScript::builder()
                .on(prompts::SCRATCH_SUMMARY_MARKER, summary)
                .catch_all("x")
                .build()
                .unwrap(),
        );
        let tok = CharEstimateTokenizer;
        let pad = Scratchpad::from_notes("y".repeat(30_001 * 4), &tok);
        let out = eng.maybe_compress(&pad);
        assert!(out.performed && !out.degraded);
        assert_eq!(out.pad.token_count, 10_000);
    }

    #[test]
    fn compress_truncates_overshoot() {
        let summary = "s".repeat(16_000 * 4);
        let eng = engine(
            MockScript::builder()
                .on(prompts::SCRATCH_SUMMARY_MARKER, summary)
                .catch_all("x")
                .build()
                .unwrap(),
        );
        let tok = CharEstimateTokenizer;
        let pad = Scratchpad::from_notes("y".repeat(30_001 * 4), &tok);
        let out = eng.maybe_compress(&pad);
        assert!(out.performed);
        assert_eq!(out.pad.token_count, 15_000);
    }

    #[test]
    fn compress_failure_keeps_recent_suffix_degraded() {
        let script = MockScript::builder()
            .fail_times(prompts::SCRATCH_SUMMARY_MARKER, 100, "never")
            .catch_all("x")
            .build()
            .unwrap();
        let eng = engine(script);
        let tok = CharEstimateTokenizer;
        let old = "o".repeat(20_000 * 4);
        let recent = "r".repeat(15_000 * 4);
        let pad = Scratchpad::from_notes(format!("{old}{recent}"), &tok);
        let out = eng.maybe_compress(&pad);
        assert!(out.performed && out.degraded);
        assert_eq!(out.pad.token_count, 15_000);
        assert!(out.pad.notes.chars().all(|c| c == 'r'));
    }

    #[test]
    fn one_sentence_is_one_chunk() {
        let eng = engine(MockScript::builder().catch_all("x").build().unwrap());
        let chunks = eng.semantic_chunk("just one sentence");
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, "just one sentence");
    }

    #[test]
    fn chunks_partition_the_input() {
        let eng = engine(MockScript::builder().catch_all("x").build().unwrap());
        let text = "First sentence. Second one! Third?\nFourth line here. Fifth sentence. \
                    Sixth statement. Seventh remark. Eighth note. Ninth item. Tenth point.";
        let chunks = eng.semantic_chunk(text);
        let rebuilt: String = chunks.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(rebuilt, text);
        for w in chunks.windows(2) {
            assert!(w[0].end_sentence <= w[1].start_sentence + 1);
        }
    }

    #[test]
    fn two_topic_blocks_split_into_two_chunks() {
        let a = "alpha one. alpha two. alpha three. alpha four. alpha five. ";
        let b = "beta one. beta two. beta three. beta four. beta five.";
        let text = format!("{a}{b}");
        let tok = CharEstimateTokenizer;
        let cfg = ScratchpadConfig::default();
        let chunks = semantic_chunk(&text, &TopicStub, &tok, &cfg);

        // Direct computation of the percentile rule: distances are 0 within a
        // topic and 1 at the boundary, so the 95th percentile interpolates
        // strictly below 1 and exactly one breakpoint fires.
        let sentences = split_sentences(&text);
        let distances: Vec<f64> = sentences
            .windows(2)
            .map(|w| {
                let ea = TopicStub.embed(text[w[0].0..w[0].1].trim());
                let eb = TopicStub.embed(text[w[1].0..w[1].1].trim());
                1.0 - (ea[0] as f64 * eb[0] as f64 + ea[1] as f64 * eb[1] as f64)
            })
            .collect();
        let threshold = percentile(&distances, 95.0);
        assert_eq!(distances.iter().filter(|d| **d > threshold).count(), 1);

        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].text, a);
        assert_eq!(chunks[1].text, b);
    }

    #[test]
    fn oversized_single_sentence_is_hard_split() {
        let tok = CharEstimateTokenizer;
        let cfg = ScratchpadConfig {
            chunk_max_tokens: 10,
            ..ScratchpadConfig::default()
        };
        // One 200-char sentence (50 tokens), no internal boundaries.
        let text = "x".repeat(200);
        let chunks = semantic_chunk(&text, &TopicStub, &tok, &cfg);
        assert!(chunks.len() > 1);
        assert!(chunks.iter().all(|c| tok.count(&c.text) <= 10));
        let rebuilt: String = chunks.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(rebuilt, text);
    }

    #[test]
    fn filter_yes_for_all_keeps_full_pad() {
        let eng = engine(MockScript::builder().catch_all("yes").build().unwrap());
        let tok = CharEstimateTokenizer;
        let pad = Scratchpad::from_notes(
            "Topic one sentence. More on one. Topic two sentence. More on two.",
            &tok,
        );
        assert_eq!(eng.filter_for_query(&pad, "anything").unwrap(), pad.notes);
    }

    #[test]
    fn filter_no_for_all_is_empty() {
        let eng = engine(MockScript::builder().catch_all("no").build().unwrap());
        let tok = CharEstimateTokenizer;
        let pad = Scratchpad::from_notes(
            "Topic one sentence. More on one. Topic two sentence. More on two.",
            &tok,
        );
        assert_eq!(eng.filter_for_query(&pad, "anything").unwrap(), "");
    }

    #[test]
    fn filter_keeps_matching_chunks_in_order() {
        // The topic stub puts a chunk boundary between the alpha and beta
        // blocks; the script answers yes only for chunks carrying the query
        // string, which appears in the CHUNK section of the filter prompt.
        let eng = engine_with_embedder(
            MockScript::builder()
                .on("CHUNK:\nneedle", "yes")
                .catch_all("no")
                .build()
                .unwrap(),
            Arc::new(TopicStub),
        );
        let tok = CharEstimateTokenizer;
        let a = "needle alpha one. needle alpha two. needle alpha three. needle alpha four. ";
        let b = "plain beta one. plain beta two. plain beta three. plain beta four.";
        let pad = Scratchpad::from_notes(format!("{a}{b}"), &tok);
        let kept = eng.filter_for_query(&pad, "needle").unwrap();
        assert_eq!(kept, a);
    }

    #[test]
    fn unparseable_verdict_fails_open() {
        let eng = engine(MockScript::builder().catch_all("shrug").build().unwrap());
        let tok = CharEstimateTokenizer;
        let pad = Scratchpad::from_notes("Some sentence here. Another sentence there.", &tok);
        assert_eq!(eng.filter_for_query(&pad, "q").unwrap(), pad.notes);
    }

    #[test]
    fn save_load_round_trip() {
        let tok = CharEstimateTokenizer;
        let dir = tempfile::tempdir().unwrap();
        let pad = Scratchpad::from_notes("remember this", &tok);
        let meta = ScratchpadMeta {
            token_count: pad.token_count,
            compressions_performed: 2,
            degraded: true,
        };
        let text_path = dir.path().join("scratchpad.txt");
        let meta_path = dir.path().join("scratchpad_meta.json");
        save_scratchpad(&text_path, &meta_path, &pad, &meta).unwrap();
        let (pad2, meta2) = load_scratchpad(&text_path, &meta_path, &tok).unwrap();
        assert_eq!(pad2, pad);
        assert_eq!(meta2, meta);
    }
}
