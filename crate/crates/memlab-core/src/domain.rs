//! Shared vocabulary: conversations, plans, probes, and memory abilities.
//!
//! Every other module speaks in these types. They are immutable value types
//! and safe to share across threads.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::token::Tokenizer;

/// Speaker of a dialogue turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

impl Role {
    pub fn other(self) -> Role {
        match self {
            Role::User => Role::Assistant,
            Role::Assistant => Role::User,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::User => write!(f, "user"),
            Role::Assistant => write!(f, "assistant"),
        }
    }
}

/// One utterance in a conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub role: Role,
    pub content: String,
    pub token_count: usize,
}

impl Turn {
    pub fn new(index: usize, role: Role, content: impl Into<String>, tok: &dyn Tokenizer) -> Self {
        let content = content.into();
        let token_count = tok.count(&content);
        Turn {
            index,
            role,
            content,
            token_count,
        }
    }
}

/// Target size class of a synthesized conversation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetLength {
    #[serde(rename = "128k")]
    L128K,
    #[serde(rename = "500k")]
    L500K,
    #[serde(rename = "1m")]
    L1M,
    #[serde(rename = "10m")]
    L10M,
}

/// Topical category, selecting the question-generation prompt family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    General,
    Coding,
    Math,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationMeta {
    pub target_length: TargetLength,
    pub category: Category,
}

/// A user/assistant dialogue: strictly alternating turns beginning with the user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub turns: Vec<Turn>,
    pub metadata: ConversationMeta,
}

impl Conversation {
    pub fn new(id: impl Into<String>, metadata: ConversationMeta) -> Self {
        Conversation {
            id: id.into(),
            turns: Vec::new(),
            metadata,
        }
    }

    /// Appends a turn with the next index, computing its token count.
    pub fn push(&mut self, role: Role, content: impl Into<String>, tok: &dyn Tokenizer) {
        let index = self.turns.len();
        self.turns.push(Turn::new(index, role, content, tok));
    }
}

/// One user question plus the assistant reply that answered it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangePair {
    pub user_turn: Turn,
    pub assistant_turn: Turn,
}

impl ExchangePair {
    /// 0-based ordinal of this pair within its conversation.
    pub fn pair_index(&self) -> usize {
        self.user_turn.index / 2
    }

    /// The pair rendered as a dialogue segment, role-labelled, content verbatim.
    pub fn segment(&self) -> String {
        format!(
            "User: {}\nAssistant: {}",
            self.user_turn.content, self.assistant_turn.content
        )
    }
}

/// The ten memory abilities probed by the benchmark. Closed set; serialized
/// names are stable across every file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryAbility {
    Abstention,
    ContradictionResolution,
    EventOrdering,
    InformationExtraction,
    InstructionFollowing,
    KnowledgeUpdate,
    MultiHopReasoning,
    PreferenceFollowing,
    Summarization,
    TemporalReasoning,
}

impl MemoryAbility {
    pub const ALL: [MemoryAbility; 10] = [
        MemoryAbility::Abstention,
        MemoryAbility::ContradictionResolution,
        MemoryAbility::EventOrdering,
        MemoryAbility::InformationExtraction,
        MemoryAbility::InstructionFollowing,
        MemoryAbility::KnowledgeUpdate,
        MemoryAbility::MultiHopReasoning,
        MemoryAbility::PreferenceFollowing,
        MemoryAbility::Summarization,
        MemoryAbility::TemporalReasoning,
    ];

    /// Stable serialized name (snake_case), identical to the serde rename.
    pub fn as_str(self) -> &'static str {
        match self {
            MemoryAbility::Abstention => "abstention",
            MemoryAbility::ContradictionResolution => "contradiction_resolution",
            MemoryAbility::EventOrdering => "event_ordering",
            MemoryAbility::InformationExtraction => "information_extraction",
            MemoryAbility::InstructionFollowing => "instruction_following",
            MemoryAbility::KnowledgeUpdate => "knowledge_update",
            MemoryAbility::MultiHopReasoning => "multi_hop_reasoning",
            MemoryAbility::PreferenceFollowing => "preference_following",
            MemoryAbility::Summarization => "summarization",
            MemoryAbility::TemporalReasoning => "temporal_reasoning",
        }
    }

    /// Human-readable name for report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            MemoryAbility::Abstention => "Abstention",
            MemoryAbility::ContradictionResolution => "Contradiction Resolution",
            MemoryAbility::EventOrdering => "Event Ordering",
            MemoryAbility::InformationExtraction => "Information Extraction",
            MemoryAbility::InstructionFollowing => "Instruction Following",
            MemoryAbility::KnowledgeUpdate => "Knowledge Update",
            MemoryAbility::MultiHopReasoning => "Multi-Hop Reasoning",
            MemoryAbility::PreferenceFollowing => "Preference Following",
            MemoryAbility::Summarization => "Summarization",
            MemoryAbility::TemporalReasoning => "Temporal Reasoning",
        }
    }
}

impl std::str::FromStr for MemoryAbility {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MemoryAbility::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown memory ability: {s}"))
    }
}

impl fmt::Display for MemoryAbility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inclusive date span, ISO-8601 `YYYY-MM-DD` strings so ordering is lexicographic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub start: String,
    pub end: String,
}

impl Timeline {
    pub fn is_valid(&self) -> bool {
        is_iso_date(&self.start) && is_iso_date(&self.end) && self.start <= self.end
    }
}

/// Checks the `YYYY-MM-DD` shape (digits and dashes only; no calendar math).
pub fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter().enumerate().all(|(i, c)| {
            if i == 4 || i == 7 {
                *c == b'-'
            } else {
                c.is_ascii_digit()
            }
        })
}

/// Conversation seed: the topical scaffold every plan grows from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seed {
    pub domain: String,
    pub title: String,
    pub theme: String,
    pub subtopics: Vec<String>,
    pub timeline: Timeline,
}

/// Simulated user persona.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub name: String,
    pub age: u32,
    pub gender: String,
    pub location: String,
    pub profession: String,
    pub personality: String,
    /// Exactly six of the sixteen MBTI codes, sorted.
    pub mbti_combination: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Parent,
    Partner,
    Child,
    Friend,
    Acquaintance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelatedPerson {
    pub name: String,
    pub relation: Relation,
    pub age: u32,
}

/// People around the user, constrained for realism (parents older by a gap).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct RelationshipGraph {
    pub persons: Vec<RelatedPerson>,
}

impl RelationshipGraph {
    /// Realism check: every parent at least `min_parent_gap` years older than the user.
    pub fn is_plausible(&self, user_age: u32, min_parent_gap: u32) -> bool {
        self.persons
            .iter()
            .filter(|p| p.relation == Relation::Parent)
            .all(|p| p.age >= user_age + min_parent_gap)
    }
}

/// Bullet flavor. Base plans carry only `Normal`; the special kinds are
/// injected by plan augmentation, one of each per sub-plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BulletKind {
    Normal,
    Contradiction,
    Update,
    Instruction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BulletPoint {
    pub narrative_label: String,
    pub description: String,
    pub kind: BulletKind,
}

/// One stage of the storyline: a time anchor plus its bullet points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubPlan {
    /// ISO date or a period string starting with an ISO date.
    pub time_anchor: String,
    pub bullets: Vec<BulletPoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub seed: Seed,
    pub sub_plans: Vec<SubPlan>,
    /// Digest used when later plans condition on this one; empty for single-plan runs.
    #[serde(default)]
    pub summary: String,
}

/// One atomic criterion a correct answer must satisfy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Nugget(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatus {
    #[default]
    Unreviewed,
    Accepted,
    Rejected,
}

/// Turn indices backing a probe. Either a flat list or named groups
/// (e.g. `first_statement`/`second_statement` for contradictions).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceTurnIds {
    Flat(Vec<usize>),
    Grouped(BTreeMap<String, Vec<usize>>),
}

impl Default for SourceTurnIds {
    fn default() -> Self {
        SourceTurnIds::Flat(Vec::new())
    }
}

impl SourceTurnIds {
    pub fn iter_ids(&self) -> Box<dyn Iterator<Item = usize> + '_> {
        match self {
            SourceTurnIds::Flat(v) => Box::new(v.iter().copied()),
            SourceTurnIds::Grouped(m) => Box::new(m.values().flatten().copied()),
        }
    }
}

/// A memory-probing question with its ideal answer and scoring rubric.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeQuestion {
    pub ability: MemoryAbility,
    pub question: String,
    pub ideal_answer: String,
    /// Ordered reference events; present only for event-ordering probes.
    #[serde(
        rename = "ordering_tested",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub events: Option<Vec<String>>,
    pub rubric: Vec<Nugget>,
    #[serde(rename = "source_chat_ids", default)]
    pub source_turn_ids: SourceTurnIds,
    #[serde(default)]
    pub review_status: ReviewStatus,
}

impl ProbeQuestion {
    /// Structural validity: rubric non-empty (event ordering may carry an
    /// event list instead) and every source id resolving to a real turn.
    pub fn check(&self, conversation_len: usize) -> Result<(), String> {
        let has_events = self.events.as_ref().map(|e| !e.is_empty()).unwrap_or(false);
        if self.rubric.is_empty() && !(self.ability == MemoryAbility::EventOrdering && has_events) {
            return Err("probe rubric is empty".into());
        }
        for id in self.source_turn_ids.iter_ids() {
            if id >= conversation_len {
                return Err(format!(
                    "source turn id {id} out of range ({conversation_len} turns)"
                ));
            }
        }
        Ok(())
    }
}

/// A single conversation-structure violation. Violations are data, not errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConversationViolation {
    MustBeginWithUser,
    RolesMustAlternate { index: usize },
    IndexMismatch { index: usize, expected: usize },
    EmptyContent { index: usize },
}

impl fmt::Display for ConversationViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConversationViolation::MustBeginWithUser => write!(f, "must begin with User"),
            ConversationViolation::RolesMustAlternate { index } => {
                write!(f, "roles must alternate (turn {index})")
            }
            ConversationViolation::IndexMismatch { index, expected } => {
                write!(f, "turn index {index} does not match position {expected}")
            }
            ConversationViolation::EmptyContent { index } => {
                write!(f, "turn {index} has empty content")
            }
        }
    }
}

/// Checks alternation, indexing, and non-emptiness. Empty report == valid.
pub fn validate_conversation(conv: &Conversation) -> Vec<ConversationViolation> {
    let mut report = Vec::new();
    if let Some(first) = conv.turns.first() {
        if first.role != Role::User {
            report.push(ConversationViolation::MustBeginWithUser);
        }
    }
    for (pos, turn) in conv.turns.iter().enumerate() {
        if turn.index != pos {
            report.push(ConversationViolation::IndexMismatch {
                index: turn.index,
                expected: pos,
            });
        }
        if turn.content.is_empty() {
            report.push(ConversationViolation::EmptyContent { index: pos });
        }
        if pos > 0 && turn.role == conv.turns[pos - 1].role {
            report.push(ConversationViolation::RolesMustAlternate { index: pos });
        }
    }
    report
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DomainError {
    #[error("conversation has an odd number of turns ({0})")]
    OddTurnCount(usize),
}

/// Splits a valid conversation into ordered user/assistant pairs.
pub fn group_exchanges(conv: &Conversation) -> Result<Vec<ExchangePair>, DomainError> {
    if !conv.turns.len().is_multiple_of(2) {
        return Err(DomainError::OddTurnCount(conv.turns.len()));
    }
    Ok(conv
        .turns
        .chunks_exact(2)
        .map(|pair| ExchangePair {
            user_turn: pair[0].clone(),
            assistant_turn: pair[1].clone(),
        })
        .collect())
}

/// Inverse of [`group_exchanges`]: reassembles the flat turn list.
pub fn flatten_exchanges(pairs: &[ExchangePair]) -> Vec<Turn> {
    pairs
        .iter()
        .flat_map(|p| [p.user_turn.clone(), p.assistant_turn.clone()])
        .collect()
}
