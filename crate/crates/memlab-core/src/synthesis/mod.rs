//! Conversation and probe synthesis.
//!
//! Pipeline: seed → profile/relationships → plan(s) → scripted user
//! questions → role-played dialogue with bounded counter-question and
//! follow-up loops → probe candidates → probes. Everything is resumable
//! from a per-conversation checkpoint and byte-reproducible on the mock
//! provider with a fixed rng seed.

pub mod dialogue;
pub mod plan;
pub mod probe;
pub mod profile;

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use crate::domain::{Category, TargetLength};
use crate::domain::{
    Conversation, ConversationMeta, MemoryAbility, Plan, RelationshipGraph, Seed, UserProfile,
};
use crate::formats::{read_conversation_jsonl, write_conversation_jsonl};
use crate::gateway::{CallKind, Gateway, GatewayError};
use crate::prompts;
use crate::token::Tokenizer;

use dialogue::{DialogueProgress, QuestionAlignment, ScriptedQuestion};

/// Strategy for plan construction. Single plan below 10M; ten interlocking
/// plans at 10M, derived sequentially or by decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    Single,
    SequentialExpansion,
    HierarchicalDecomposition,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub target_length: TargetLength,
    pub category: Category,
    /// N: sub-plans per plan.
    pub n_sub_plans: usize,
    /// M: base bullets per sub-plan (before the three special bullets).
    pub m_bullets: usize,
    /// K: contiguous equal batches per sub-plan; must divide M.
    pub batches_per_subplan: usize,
    /// I: questions generated per batch.
    pub questions_per_batch: usize,
    /// δ1: bound on assistant-question/user-answer cycles per question.
    pub delta1: usize,
    /// δ2: bound on user follow-up cycles per question.
    pub delta2: usize,
    /// Recent-pair window for dialogue prompt conditioning.
    pub summary_window: usize,
    pub plan_mode: PlanMode,
    pub seed_rng: u64,
    /// Stop after this many scripted questions (smoke runs, interrupts).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_questions: Option<usize>,
    /// Sliding window (in plans) for 10M probe candidate selection.
    pub probe_window_plans: usize,
}

impl SynthesisConfig {
    /// Batch configuration per chat size and category, plus bullet counts
    /// sized so K divides M.
    pub fn preset(target_length: TargetLength, category: Category) -> Self {
        let (n, m, k, i) = match (target_length, category) {
            (TargetLength::L128K, Category::General) => (5, 20, 10, 2),
            (TargetLength::L128K, Category::Coding) => (3, 23, 23, 1),
            (TargetLength::L128K, Category::Math) => (3, 25, 25, 1),
            (TargetLength::L500K, Category::General) => (10, 20, 10, 4),
            (TargetLength::L500K, Category::Coding) => (10, 20, 10, 3),
            (TargetLength::L500K, Category::Math) => (10, 20, 10, 4),
            (TargetLength::L1M | TargetLength::L10M, Category::General) => (10, 20, 10, 9),
            (TargetLength::L1M | TargetLength::L10M, Category::Coding | Category::Math) => {
                (10, 20, 10, 6)
            }
        };
        SynthesisConfig {
            target_length,
            category,
            n_sub_plans: n,
            m_bullets: m,
            batches_per_subplan: k,
            questions_per_batch: i,
            delta1: 2,
            delta2: 2,
            summary_window: 10,
            plan_mode: if target_length == TargetLength::L10M {
                PlanMode::SequentialExpansion
            } else {
                PlanMode::Single
            },
            seed_rng: 42,
            max_questions: None,
            probe_window_plans: 2,
        }
    }

    /// Desk-scale profile for CI: N=2, M=4, K=2, I=1.
    pub fn mini() -> Self {
        SynthesisConfig {
            n_sub_plans: 2,
            m_bullets: 4,
            batches_per_subplan: 2,
            questions_per_batch: 1,
            ..SynthesisConfig::preset(TargetLength::L128K, Category::General)
        }
    }

    pub fn validate(&self) -> Result<(), SynthesisError> {
        if self.n_sub_plans == 0 || self.m_bullets == 0 || self.questions_per_batch == 0 {
            return Err(SynthesisError::InvalidConfig(
                "counts must be positive".into(),
            ));
        }
        if self.batches_per_subplan == 0 || !self.m_bullets.is_multiple_of(self.batches_per_subplan)
        {
            return Err(SynthesisError::InvalidConfig(format!(
                "bullets per sub-plan ({}) must divide evenly into {} batches",
                self.m_bullets, self.batches_per_subplan
            )));
        }
        let single = self.plan_mode == PlanMode::Single;
        if single == (self.target_length == TargetLength::L10M) {
            return Err(SynthesisError::InvalidConfig(
                "10M targets need a ten-plan mode; smaller targets need the single-plan mode"
                    .into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthesisError {
    #[error("count out of range: expected {expected}, got {got}")]
    CountOutOfRange { expected: String, got: usize },
    #[error("malformed model output: {0}")]
    Malformed(String),
    #[error("no valid probe candidates for {0}")]
    EmptyCandidates(MemoryAbility),
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("synthesis io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint/plan file: {0}")]
    State(String),
}

/// Everything persisted about a synthesis run besides the conversation:
/// persona, plans, scripted questions, and question→turn alignments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanFile {
    pub profile: UserProfile,
    pub relationships: RelationshipGraph,
    pub plans: Vec<Plan>,
    pub questions: Vec<ScriptedQuestion>,
    pub alignments: Vec<QuestionAlignment>,
}

pub fn save_plan_file(path: &Path, plan_file: &PlanFile) -> Result<(), SynthesisError> {
    let json = serde_json::to_string_pretty(plan_file).expect("plan file serializes");
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_plan_file(path: &Path) -> Result<PlanFile, SynthesisError> {
    serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| SynthesisError::State(format!("bad plan file: {e}")))
}

/// Dialogue resume point: the last completed scripted question plus the
/// alignments recorded so far.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Checkpoint {
    pub completed_questions: usize,
    pub alignments: Vec<QuestionAlignment>,
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), SynthesisError> {
    let json = serde_json::to_string(checkpoint).expect("checkpoint serializes");
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, SynthesisError> {
    serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| SynthesisError::State(format!("bad checkpoint: {e}")))
}

/// One seed-candidate pass: proposes a seed for a domain/category.
pub fn propose_seed(
    gateway: &Gateway,
    domain: &str,
    category: Category,
) -> Result<Seed, SynthesisError> {
    let category_name = match category {
        Category::General => "general",
        Category::Coding => "coding",
        Category::Math => "math",
    };
    let text = gateway.chat(
        CallKind::Synthesis,
        &prompts::seed_candidate(domain, category_name),
    )?;
    let seed: Seed = serde_json::from_str(plan::extract_json(&text))
        .map_err(|e| SynthesisError::Malformed(format!("seed is not valid JSON: {e}")))?;
    if !seed.timeline.is_valid() || seed.subtopics.is_empty() {
        return Err(SynthesisError::Malformed(
            "seed has an invalid timeline or no subtopics".into(),
        ));
    }
    Ok(seed)
}

pub const CONVERSATION_FILE: &str = "conversation.jsonl";
pub const PLAN_FILE: &str = "plan.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

pub struct SynthesisOutput {
    pub conversation: Conversation,
    pub plan_file: PlanFile,
}

pub struct SynthesisPipeline {
    gateway: Arc<Gateway>,
    tokenizer: Arc<dyn Tokenizer>,
    config: SynthesisConfig,
}

impl SynthesisPipeline {
    pub fn new(
        gateway: Arc<Gateway>,
        tokenizer: Arc<dyn Tokenizer>,
        config: SynthesisConfig,
    ) -> Self {
        SynthesisPipeline {
            gateway,
            tokenizer,
            config,
        }
    }

    pub fn config(&self) -> &SynthesisConfig {
        &self.config
    }

    /// Runs (or resumes) a full synthesis into `out_dir`, writing
    /// `conversation.jsonl`, `plan.json`, and `checkpoint.json` after every
    /// completed question. An existing plan file is reused so interrupted
    /// runs continue where they stopped.
    pub fn run(
        &self,
        seed: Seed,
        conversation_id: &str,
        out_dir: &Path,
    ) -> Result<SynthesisOutput, SynthesisError> {
        self.config.validate()?;
        std::fs::create_dir_all(out_dir)?;
        let conv_path = out_dir.join(CONVERSATION_FILE);
        let plan_path = out_dir.join(PLAN_FILE);
        let ckpt_path = out_dir.join(CHECKPOINT_FILE);
        let metadata = ConversationMeta {
            target_length: self.config.target_length,
            category: self.config.category,
        };

        let (plan_file, progress) = if plan_path.exists() {
            let plan_file = load_plan_file(&plan_path)?;
            let progress = if ckpt_path.exists() && conv_path.exists() {
                let checkpoint = load_checkpoint(&ckpt_path)?;
                let conversation = read_conversation_jsonl(
                    &conv_path,
                    conversation_id,
                    metadata.clone(),
                    self.tokenizer.as_ref(),
                )
                .map_err(|e| SynthesisError::State(format!("bad partial conversation: {e}")))?;
                log::info!(
                    "resuming {conversation_id} at question {}",
                    checkpoint.completed_questions
                );
                DialogueProgress {
                    turns: conversation.turns,
                    alignments: checkpoint.alignments,
                    completed_questions: checkpoint.completed_questions,
                }
            } else {
                DialogueProgress::default()
            };
            (plan_file, progress)
        } else {
            let plan_file = self.plan_stage(&seed)?;
            save_plan_file(&plan_path, &plan_file)?;
            (plan_file, DialogueProgress::default())
        };

        let progress = dialogue::generate_dialogue(
            &self.gateway,
            self.tokenizer.as_ref(),
            &plan_file.plans,
            &plan_file.questions,
            &self.config,
            progress,
            |p| {
                let conversation = Conversation {
                    id: conversation_id.to_string(),
                    turns: p.turns.clone(),
                    metadata: metadata.clone(),
                };
                write_conversation_jsonl(&conv_path, &conversation)
                    .map_err(|e| SynthesisError::State(e.to_string()))?;
                save_checkpoint(
                    &ckpt_path,
                    &Checkpoint {
                        completed_questions: p.completed_questions,
                        alignments: p.alignments.clone(),
                    },
                )
            },
        )?;

        let conversation = Conversation {
            id: conversation_id.to_string(),
            turns: progress.turns,
            metadata,
        };
        write_conversation_jsonl(&conv_path, &conversation)
            .map_err(|e| SynthesisError::State(e.to_string()))?;
        let plan_file = PlanFile {
            alignments: progress.alignments,
            ..plan_file
        };
        save_plan_file(&plan_path, &plan_file)?;
        save_checkpoint(
            &ckpt_path,
            &Checkpoint {
                completed_questions: progress.completed_questions,
                alignments: plan_file.alignments.clone(),
            },
        )?;
        Ok(SynthesisOutput {
            conversation,
            plan_file,
        })
    }

    /// Profile, relationships, plans, and scripted questions for a fresh run.
    fn plan_stage(&self, seed: &Seed) -> Result<PlanFile, SynthesisError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed_rng);
        let user_profile = profile::sample_profile(&mut rng, &self.gateway)?;
        let relationships = profile::sample_relationships(&mut rng, &user_profile, 15);
        let plans = match self.config.plan_mode {
            PlanMode::Single => {
                let narratives = plan::generate_narratives(&self.gateway, seed)?;
                let base = plan::generate_plan(
                    &self.gateway,
                    seed,
                    &user_profile,
                    &relationships,
                    &narratives,
                    &self.config,
                )?;
                vec![plan::augment_plan(&self.gateway, &base)?]
            }
            mode => {
                let seeds = plan::derive_seeds(&self.gateway, seed, &user_profile, mode)?;
                plan::generate_plans_10m(
                    &self.gateway,
                    seed,
                    &seeds,
                    mode,
                    &user_profile,
                    &relationships,
                    &self.config,
                )?
            }
        };
        let questions = dialogue::generate_user_questions(&self.gateway, &plans, &self.config)?;
        Ok(PlanFile {
            profile: user_profile,
            relationships,
            plans,
            questions,
            alignments: Vec::new(),
        })
    }
}
