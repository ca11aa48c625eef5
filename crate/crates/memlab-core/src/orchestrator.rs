//! Composes the three memory systems into answers.
//!
//! Ingestion feeds each exchange into the episodic index, the scratchpad,
//! and the sliding working-memory window. Answering retrieves episodic
//! segments, filters the scratchpad for the question, and renders one prompt
//! with the sections in a fixed order. Four ablation flags switch each
//! component on or off independently.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;

use crate::domain::ExchangePair;
use crate::embedding::EmbeddingProvider;
use crate::episodic::{EpisodicError, EpisodicMemory, VectorIndex};
use crate::gateway::{CallKind, Gateway, GatewayError};
use crate::prompts::{self, AnswerSections};
use crate::scratchpad::{
    load_scratchpad, save_scratchpad, Scratchpad, ScratchpadConfig, ScratchpadEngine,
    ScratchpadError, ScratchpadMeta,
};
use crate::token::Tokenizer;

pub const INDEX_SNAPSHOT_FILE: &str = "index.snapshot";
pub const SCRATCHPAD_FILE: &str = "scratchpad.txt";
pub const SCRATCHPAD_META_FILE: &str = "scratchpad_meta.json";
pub const WORKING_WINDOW_FILE: &str = "working.jsonl";

/// Sliding window over the most recent exchanges, oldest evicted first.
#[derive(Debug, Clone)]
pub struct WorkingMemory {
    window: VecDeque<ExchangePair>,
    z: usize,
}

impl WorkingMemory {
    pub fn new(z: usize) -> Self {
        WorkingMemory {
            window: VecDeque::new(),
            z: z.max(1),
        }
    }

    pub fn push(&mut self, pair: ExchangePair) {
        self.window.push_back(pair);
        while self.window.len() > self.z {
            self.window.pop_front();
        }
    }

    /// Pairs oldest to newest.
    pub fn pairs(&self) -> Vec<ExchangePair> {
        self.window.iter().cloned().collect()
    }

    pub fn last(&self) -> Option<&ExchangePair> {
        self.window.back()
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }
}

/// Component switches. All sixteen combinations are legal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationConfig {
    pub use_retrieval: bool,
    pub use_scratchpad: bool,
    pub use_working: bool,
    pub use_noise_filter: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            use_retrieval: true,
            use_scratchpad: true,
            use_working: true,
            use_noise_filter: true,
        }
    }
}

/// The assembled context for one question. A section is `None` exactly when
/// its ablation flag is off; `use_noise_filter = false` keeps the full,
/// unfiltered pad.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedContext {
    pub episodic: Option<Vec<String>>,
    pub working: Option<Vec<ExchangePair>>,
    pub scratch: Option<String>,
    pub question: String,
}

impl ComposedContext {
    /// Renders the answer prompt, sections in fixed order:
    /// scratchpad, episodic, working, question.
    pub fn render(&self) -> String {
        prompts::compose_answer(&AnswerSections {
            scratchpad: self.scratch.as_deref(),
            episodic: self.episodic.as_deref(),
            working: self.working.as_deref(),
            question: &self.question,
        })
    }

    /// Per-section rendering for structural comparison.
    pub fn sections(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("scratchpad", self.scratch.clone()),
            (
                "episodic",
                self.episodic.as_ref().map(|e| e.join("\n---\n")),
            ),
            (
                "working",
                self.working.as_ref().map(|w| {
                    w.iter()
                        .map(|p| p.segment())
                        .collect::<Vec<_>>()
                        .join("\n---\n")
                }),
            ),
            ("question", Some(self.question.clone())),
        ]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("non-monotonic ingest: pair {got} after pair {last}")]
    NonMonotonicIngest { last: usize, got: usize },
    #[error(transparent)]
    Episodic(#[from] EpisodicError),
    #[error(transparent)]
    Scratchpad(#[from] ScratchpadError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("memory store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("memory store parse: {0}")]
    Store(String),
}

#[derive(Debug, Clone)]
pub struct OrchestratorConfig {
    /// Working-memory window size in pairs.
    pub z: usize,
    /// Default retrieval budget.
    pub k: usize,
    pub scratchpad: ScratchpadConfig,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig {
            z: 5,
            k: 5,
            scratchpad: ScratchpadConfig::default(),
        }
    }
}

/// What one ingest actually accomplished; extraction failures degrade
/// rather than abort.
#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub record_ids: Vec<u64>,
    pub kv_indexed: bool,
    pub note_merged: bool,
    pub compressed: bool,
}

/// Per-conversation memory state plus the engines that maintain it.
pub struct MemoryEngine {
    episodic: EpisodicMemory,
    scratch_engine: ScratchpadEngine,
    pad: Scratchpad,
    pad_meta: ScratchpadMeta,
    working: WorkingMemory,
    gateway: Arc<Gateway>,
    tokenizer: Arc<dyn Tokenizer>,
    last_pair_index: Option<usize>,
    config: OrchestratorConfig,
}

impl MemoryEngine {
    pub fn new(
        gateway: Arc<Gateway>,
        embedder: Arc<dyn EmbeddingProvider>,
        tokenizer: Arc<dyn Tokenizer>,
        config: OrchestratorConfig,
    ) -> Self {
        MemoryEngine {
            episodic: EpisodicMemory::new(embedder.clone(), gateway.clone()),
            scratch_engine: ScratchpadEngine::new(
                gateway.clone(),
                embedder,
                tokenizer.clone(),
                config.scratchpad.clone(),
            ),
            pad: Scratchpad::empty(),
            pad_meta: ScratchpadMeta::default(),
            working: WorkingMemory::new(config.z),
            gateway,
            tokenizer,
            last_pair_index: None,
            config,
        }
    }

    pub fn pad(&self) -> &Scratchpad {
        &self.pad
    }

    pub fn pad_meta(&self) -> &ScratchpadMeta {
        &self.pad_meta
    }

    pub fn working(&self) -> &WorkingMemory {
        &self.working
    }

    pub fn index(&self) -> &VectorIndex {
        &self.episodic.index
    }

    pub fn default_k(&self) -> usize {
        self.config.k
    }

    /// Feeds one exchange into all three memory systems. Pair indices must
    /// strictly increase across calls. A failed key–value extraction is
    /// logged and skipped; scratchpad and working memory still update.
    pub fn ingest(&mut self, pair: &ExchangePair) -> Result<IngestReport, OrchestratorError> {
        let idx = pair.pair_index();
        if let Some(last) = self.last_pair_index {
            if idx <= last {
                return Err(OrchestratorError::NonMonotonicIngest { last, got: idx });
            }
        }
        let mut report = IngestReport::default();

        match self.episodic.index_pair(pair) {
            Ok(ids) => {
                report.record_ids = ids;
                report.kv_indexed = true;
            }
            Err(err) => {
                log::warn!("kv extraction failed for pair {idx}, continuing: {err}");
            }
        }

        let previous = self.working.last().cloned();
        let note = self.scratch_engine.extract_notes(pair, previous.as_ref())?;
        if !note.is_empty() {
            self.pad = self.pad.merge(&note, self.tokenizer.as_ref());
            report.note_merged = true;
        }
        let outcome = self.scratch_engine.maybe_compress(&self.pad);
        if outcome.performed {
            self.pad_meta.compressions_performed += 1;
            self.pad_meta.degraded |= outcome.degraded;
            report.compressed = true;
        }
        self.pad = outcome.pad;
        self.pad_meta.token_count = self.pad.token_count;

        self.working.push(pair.clone());
        self.last_pair_index = Some(idx);
        Ok(report)
    }

    /// Assembles the context for a question under the given ablation flags.
    pub fn compose(
        &self,
        question: &str,
        k: usize,
        ab: AblationConfig,
    ) -> Result<ComposedContext, OrchestratorError> {
        let episodic = if ab.use_retrieval {
            Some(self.episodic.retrieve(question, k)?)
        } else {
            None
        };
        let working = if ab.use_working {
            Some(self.working.pairs())
        } else {
            None
        };
        let scratch = if ab.use_scratchpad {
            Some(if ab.use_noise_filter {
                self.scratch_engine.filter_for_query(&self.pad, question)?
            } else {
                self.pad.notes.clone()
            })
        } else {
            None
        };
        Ok(ComposedContext {
            episodic,
            working,
            scratch,
            question: question.to_string(),
        })
    }

    /// Composes the context and asks the answering model.
    pub fn answer(
        &self,
        question: &str,
        k: usize,
        ab: AblationConfig,
    ) -> Result<String, OrchestratorError> {
        let prompt = self.compose(question, k, ab)?.render();
        Ok(self.gateway.chat(CallKind::Analysis, &prompt)?)
    }

    /// Pass-through baseline: the whole transcript plus the question.
    pub fn answer_vanilla(
        &self,
        turns: &[crate::domain::Turn],
        question: &str,
    ) -> Result<String, OrchestratorError> {
        Ok(self.gateway.chat(
            CallKind::Analysis,
            &prompts::vanilla_answer(turns, question),
        )?)
    }

    /// Persists the full memory state into one directory.
    pub fn save(&self, dir: &Path) -> Result<(), OrchestratorError> {
        std::fs::create_dir_all(dir)?;
        self.episodic.index.save(&dir.join(INDEX_SNAPSHOT_FILE))?;
        save_scratchpad(
            &dir.join(SCRATCHPAD_FILE),
            &dir.join(SCRATCHPAD_META_FILE),
            &self.pad,
            &self.pad_meta,
        )?;
        let file = std::fs::File::create(dir.join(WORKING_WINDOW_FILE))?;
        let mut w = std::io::BufWriter::new(file);
        use std::io::Write;
        for pair in self.working.pairs() {
            writeln!(
                w,
                "{}",
                serde_json::to_string(&pair).expect("pair serializes")
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Restores a previously saved memory state.
    pub fn load(
        dir: &Path,
        gateway: Arc<Gateway>,
        embedder: Arc<dyn EmbeddingProvider>,
        tokenizer: Arc<dyn Tokenizer>,
        config: OrchestratorConfig,
    ) -> Result<Self, OrchestratorError> {
        let index = VectorIndex::load(&dir.join(INDEX_SNAPSHOT_FILE))?;
        let (pad, pad_meta) = load_scratchpad(
            &dir.join(SCRATCHPAD_FILE),
            &dir.join(SCRATCHPAD_META_FILE),
            tokenizer.as_ref(),
        )?;
        let mut working = WorkingMemory::new(config.z);
        let content = std::fs::read_to_string(dir.join(WORKING_WINDOW_FILE))?;
        for line in content.lines().filter(|l| !l.trim().is_empty()) {
            let pair: ExchangePair = serde_json::from_str(line)
                .map_err(|e| OrchestratorError::Store(format!("bad working pair: {e}")))?;
            working.push(pair);
        }
        let last_pair_index = working.last().map(|p| p.pair_index());
        Ok(MemoryEngine {
            episodic: EpisodicMemory::with_index(index, embedder.clone(), gateway.clone()),
            scratch_engine: ScratchpadEngine::new(
                gateway.clone(),
                embedder,
                tokenizer.clone(),
                config.scratchpad.clone(),
            ),
            pad,
            pad_meta,
            working,
            gateway,
            tokenizer,
            last_pair_index,
            config,
        })
    }
}
