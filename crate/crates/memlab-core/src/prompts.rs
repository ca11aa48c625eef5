//! Prompt templates for every model call.
//!
//! Each template opens with a stable marker line (the `*_MARKER` consts) so
//! scripted mock providers can route on substrings. Rendering is pure
//! formatting: identical inputs produce byte-identical prompts.

use crate::domain::{
    BulletKind, ExchangePair, MemoryAbility, Plan, RelationshipGraph, Seed, SubPlan, Turn,
    UserProfile,
};

pub const KV_EXTRACTION_MARKER: &str =
    "Extract key: value lines describing the exchange, then one SUMMARY: line.";
pub const SCRATCH_NOTE_MARKER: &str =
    "Record the salient notes from the current exchange for long-term memory.";
pub const SCRATCH_SUMMARY_MARKER: &str = "Compress the notes below";
pub const NOISE_FILTER_MARKER: &str =
    "Decide whether the chunk is relevant to the question. Answer yes or no.";
pub const COMPOSE_ANSWER_MARKER: &str =
    "Answer the question using only the provided memory sections.";
pub const VANILLA_ANSWER_MARKER: &str =
    "Answer the question using the full conversation transcript below.";
pub const SEED_CANDIDATE_MARKER: &str = "Propose a conversation seed as a single JSON object.";
pub const PROFILE_MARKER: &str = "Compose a third-person personality sketch";
pub const NARRATIVES_MARKER: &str =
    "Produce between 15 and 20 narrative lines, one per line, formatted as Label: description.";
pub const PLAN_MARKER: &str = "Produce the conversation plan as a single JSON object.";
pub const PLAN_SUMMARY_MARKER: &str = "Summarize the conversation plan below in one paragraph.";
pub const AUGMENT_MARKER: &str =
    "Add exactly three special bullet points to the sub-plan as a JSON array.";
pub const SEEDS_SEQUENTIAL_MARKER: &str =
    "Derive ten successive conversation seeds as a JSON array.";
pub const SEEDS_HIERARCHICAL_MARKER: &str =
    "Decompose the conversation seed into ten sub-seeds as a JSON array.";
pub const QUESTIONS_MARKER: &str = "user questions as a JSON array of strings.";
pub const ASSISTANT_REPLY_MARKER: &str = "You are the assistant in a long-running conversation.";
pub const USER_REPLY_MARKER: &str =
    "You are role-playing the user. Answer the assistant's question in character.";
pub const USER_FOLLOWUP_MARKER: &str =
    "You are role-playing the user. Ask one clarifying or elaborative follow-up question.";
pub const CHECK_QUESTION_MARKER: &str =
    "Does the assistant message ask the user a question that needs an answer? Answer yes or no.";
pub const CHECK_FOLLOWUP_MARKER: &str =
    "Would the user naturally ask a clarifying follow-up now? Answer yes or no.";
pub const PROBE_SELECTION_MARKER: &str = "Select candidate bullet points for";
pub const PROBE_GENERATION_MARKER: &str = "probing question as a single JSON object.";
pub const JUDGE_MARKER: &str =
    "Decide whether the response satisfies the criterion. Reply with exactly one of: 0, 0.5, 1.";
pub const EQUIVALENCE_MARKER: &str =
    "Do snippets A and B describe the same event or topic? Answer yes or no.";

fn section(title: &str, body: &str) -> String {
    format!("{title}:\n{body}\n\n")
}

fn kind_tag(kind: BulletKind) -> &'static str {
    match kind {
        BulletKind::Normal => "normal",
        BulletKind::Contradiction => "contradiction",
        BulletKind::Update => "update",
        BulletKind::Instruction => "instruction",
    }
}

pub fn render_seed(seed: &Seed) -> String {
    format!(
        "Domain: {}\nTitle: {}\nTheme: {}\nSubtopics: {}\nTimeline: {} to {}",
        seed.domain,
        seed.title,
        seed.theme,
        seed.subtopics.join("; "),
        seed.timeline.start,
        seed.timeline.end
    )
}

pub fn render_profile(profile: &UserProfile) -> String {
    format!(
        "Name: {}\nAge: {}\nGender: {}\nLocation: {}\nProfession: {}\nPersonality: {}",
        profile.name,
        profile.age,
        profile.gender,
        profile.location,
        profile.profession,
        profile.personality
    )
}

pub fn render_relationships(graph: &RelationshipGraph) -> String {
    if graph.persons.is_empty() {
        return "(none)".to_string();
    }
    graph
        .persons
        .iter()
        .map(|p| format!("- {} ({:?}, {})", p.name, p.relation, p.age))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_subplan(sp: &SubPlan, ordinal: usize) -> String {
    let mut out = format!("Sub-plan {} — {}\n", ordinal + 1, sp.time_anchor);
    for b in &sp.bullets {
        out.push_str(&format!(
            "- [{}] {}: {}\n",
            kind_tag(b.kind),
            b.narrative_label,
            b.description
        ));
    }
    out
}

pub fn render_plan(plan: &Plan) -> String {
    plan.sub_plans
        .iter()
        .enumerate()
        .map(|(i, sp)| render_subplan(sp, i))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_turns(turns: &[Turn]) -> String {
    if turns.is_empty() {
        return "(none)".to_string();
    }
    turns
        .iter()
        .map(|t| format!("[turn {}] {}: {}", t.index, t.role, t.content))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_pairs(pairs: &[ExchangePair]) -> String {
    if pairs.is_empty() {
        return "(none)".to_string();
    }
    pairs
        .iter()
        .map(|p| p.segment())
        .collect::<Vec<_>>()
        .join("\n---\n")
}

// --- episodic indexing ---

pub fn kv_extraction(pair: &ExchangePair) -> String {
    format!(
        "{KV_EXTRACTION_MARKER}\n\
         Keys name entities, values capture their attributes or details.\n\n{}",
        section("EXCHANGE PAIR", &pair.segment())
    )
}

// --- scratchpad ---

pub fn scratchpad_note(current: &ExchangePair, previous: Option<&ExchangePair>) -> String {
    let mut out = format!(
        "{SCRATCH_NOTE_MARKER}\n\
         Capture facts, life events, intentions, and time or place context.\n\
         Start the reply with NOTES: and write (none) if nothing is worth keeping.\n\n"
    );
    if let Some(prev) = previous {
        out.push_str(&section("PREVIOUS EXCHANGE", &prev.segment()));
    }
    out.push_str(&section("CURRENT EXCHANGE", &current.segment()));
    out
}

pub fn scratchpad_summary(notes: &str, target_tokens: usize) -> String {
    format!(
        "{SCRATCH_SUMMARY_MARKER} into at most {target_tokens} tokens, keeping every \
         fact, date, instruction, and update that could matter later.\n\n{}",
        section("NOTES", notes)
    )
}

pub fn noise_filter(chunk: &str, question: &str) -> String {
    format!(
        "{NOISE_FILTER_MARKER}\n\n{}{}",
        section("QUESTION", question),
        section("CHUNK", chunk)
    )
}

// --- answering ---

pub struct AnswerSections<'a> {
    pub scratchpad: Option<&'a str>,
    pub episodic: Option<&'a [String]>,
    pub working: Option<&'a [ExchangePair]>,
    pub question: &'a str,
}

/// Renders the answer prompt with its sections in fixed order:
/// scratchpad, episodic segments, working window, question.
pub fn compose_answer(sections: &AnswerSections<'_>) -> String {
    let mut out = format!("{COMPOSE_ANSWER_MARKER}\n\n");
    if let Some(pad) = sections.scratchpad {
        out.push_str(&section("SCRATCHPAD NOTES", pad));
    }
    if let Some(segments) = sections.episodic {
        let body = if segments.is_empty() {
            "(none)".to_string()
        } else {
            segments.join("\n---\n")
        };
        out.push_str(&section("RETRIEVED DIALOGUE SEGMENTS", &body));
    }
    if let Some(pairs) = sections.working {
        out.push_str(&section("RECENT DIALOGUE", &render_pairs(pairs)));
    }
    out.push_str(&section("QUESTION", sections.question));
    out
}

pub fn vanilla_answer(turns: &[Turn], question: &str) -> String {
    format!(
        "{VANILLA_ANSWER_MARKER}\n\n{}{}",
        section("TRANSCRIPT", &render_turns(turns)),
        section("QUESTION", question)
    )
}

// --- synthesis: seeds, profile, narratives, plans ---

pub fn seed_candidate(domain: &str, category: &str) -> String {
    format!(
        "{SEED_CANDIDATE_MARKER}\n\
         Fields: domain, title, theme, subtopics (array of strings), \
         timeline ({{\"start\": \"YYYY-MM-DD\", \"end\": \"YYYY-MM-DD\"}}).\n\n\
         Domain: {domain}\nCategory: {category}\n"
    )
}

pub fn profile_personality(mbti: &[String]) -> String {
    format!(
        "{PROFILE_MARKER} blending these six MBTI types into one coherent person: {}.\n\
         Write one paragraph, no headings.\n",
        mbti.join(", ")
    )
}

pub fn narratives(seed: &Seed) -> String {
    format!(
        "{NARRATIVES_MARKER}\n\
         Narratives are evolving aspects of the storyline (goals, progress, setbacks).\n\n{}",
        section("SEED", &render_seed(seed))
    )
}

pub struct PlanContext<'a> {
    pub seed: &'a Seed,
    pub profile: &'a UserProfile,
    pub relationships: &'a RelationshipGraph,
    pub narratives: &'a [String],
    pub n_sub_plans: usize,
    pub m_bullets: usize,
}

fn plan_contract(n: usize, m: usize) -> String {
    format!(
        "{PLAN_MARKER}\n\
         Shape: {{\"sub_plans\": [{{\"time_anchor\": \"YYYY-MM-DD\", \"bullets\": \
         [{{\"label\": \"...\", \"description\": \"...\"}}]}}]}}.\n\
         Exactly {n} sub_plans, each with exactly {m} bullets. Time anchors must be \
         ISO dates inside the timeline, in non-decreasing order.\n\n"
    )
}

pub fn plan_single(ctx: &PlanContext<'_>) -> String {
    format!(
        "{}{}{}{}{}",
        plan_contract(ctx.n_sub_plans, ctx.m_bullets),
        section("SEED", &render_seed(ctx.seed)),
        section("USER PROFILE", &render_profile(ctx.profile)),
        section("RELATIONSHIPS", &render_relationships(ctx.relationships)),
        section("NARRATIVES", &ctx.narratives.join("\n"))
    )
}

pub struct TenMillionPlanContext<'a> {
    pub base: PlanContext<'a>,
    pub plan_index: usize,
    pub is_first: bool,
    /// Sequential mode: full text of the predecessor plan.
    pub previous_plan: Option<String>,
    /// Hierarchical mode: summaries of all earlier plans.
    pub prior_summaries: &'a [String],
    /// Hierarchical mode: neighbouring seeds (previous, next).
    pub neighbor_seeds: (Option<&'a Seed>, Option<&'a Seed>),
    pub main_seed: Option<&'a Seed>,
}

pub fn plan_ten_million(ctx: &TenMillionPlanContext<'_>) -> String {
    let mut out = plan_contract(ctx.base.n_sub_plans, ctx.base.m_bullets);
    out.push_str(&format!(
        "This is plan {} of 10 in an interlocking series.{}\n\n",
        ctx.plan_index + 1,
        if ctx.is_first {
            " Introduce the user in the opening stage."
        } else {
            ""
        }
    ));
    if let Some(main) = ctx.main_seed {
        out.push_str(&section("MAIN SEED", &render_seed(main)));
    }
    out.push_str(&section("CURRENT SEED", &render_seed(ctx.base.seed)));
    if let Some(prev) = &ctx.previous_plan {
        out.push_str(&section("PREVIOUS PLAN", prev));
    }
    if !ctx.prior_summaries.is_empty() {
        out.push_str(&section(
            "SUMMARIES OF EARLIER PLANS",
            &ctx.prior_summaries.join("\n"),
        ));
    }
    if let Some(prev_seed) = ctx.neighbor_seeds.0 {
        out.push_str(&section("PRECEDING SEED", &render_seed(prev_seed)));
    }
    if let Some(next_seed) = ctx.neighbor_seeds.1 {
        out.push_str(&section("FOLLOWING SEED", &render_seed(next_seed)));
    }
    out.push_str(&section("USER PROFILE", &render_profile(ctx.base.profile)));
    out.push_str(&section(
        "RELATIONSHIPS",
        &render_relationships(ctx.base.relationships),
    ));
    out.push_str(&section("NARRATIVES", &ctx.base.narratives.join("\n")));
    out
}

pub fn plan_summary(plan: &Plan) -> String {
    format!(
        "{PLAN_SUMMARY_MARKER}\n\n{}",
        section("PLAN", &render_plan(plan))
    )
}

pub fn augment_subplan(seed: &Seed, sp: &SubPlan, ordinal: usize) -> String {
    format!(
        "{AUGMENT_MARKER}\n\
         Shape: [{{\"kind\": \"contradiction\"|\"update\"|\"instruction\", \
         \"label\": \"...\", \"description\": \"...\"}}]. One bullet of each kind: a \
         statement contradicting something established, a revision of an earlier fact, \
         and a standing user instruction.\n\n{}{}",
        section("SEED", &render_seed(seed)),
        section("SUB-PLAN", &render_subplan(sp, ordinal))
    )
}

pub fn seeds_sequential(main_seed: &Seed, profile: &UserProfile) -> String {
    format!(
        "{SEEDS_SEQUENTIAL_MARKER}\n\
         The first seed is the main seed; later seeds are successive life stages. \
         Each seed: {{\"domain\", \"title\", \"theme\", \"subtopics\", \"timeline\": \
         {{\"start\", \"end\"}}}}. Timeline slices must not overlap and must cover the \
         main timeline from start to end.\n\n{}{}",
        section("MAIN SEED", &render_seed(main_seed)),
        section("USER PROFILE", &render_profile(profile))
    )
}

pub fn seeds_hierarchical(main_seed: &Seed, profile: &UserProfile) -> String {
    format!(
        "{SEEDS_HIERARCHICAL_MARKER}\n\
         Sub-seeds are topical and temporal slices that together span the storyline. \
         Each seed: {{\"domain\", \"title\", \"theme\", \"subtopics\", \"timeline\": \
         {{\"start\", \"end\"}}}}. Timeline slices must not overlap and must cover the \
         main timeline from start to end.\n\n{}{}",
        section("MAIN SEED", &render_seed(main_seed)),
        section("USER PROFILE", &render_profile(profile))
    )
}

// --- synthesis: user questions ---

pub struct QuestionBatchContext<'a> {
    pub seed: &'a Seed,
    pub batch_bullets: &'a [(usize, String)],
    pub prior_batches: &'a [String],
    pub prior_subplans: &'a [String],
    pub special_bullets: &'a [String],
    pub questions_per_batch: usize,
}

fn question_preamble(style: &str, count: usize) -> String {
    format!(
        "Write exactly {count} {QUESTIONS_MARKER}\n\
         {style}\n\
         Questions continue the storyline chronologically and stay grounded \
         in the current batch of bullet points.\n\n"
    )
}

pub fn user_questions_general(ctx: &QuestionBatchContext<'_>) -> String {
    render_question_prompt(ctx, "Questions are natural, first-person user messages.")
}

pub fn user_questions_coding(ctx: &QuestionBatchContext<'_>) -> String {
    render_question_prompt(
        ctx,
        "This is a programming conversation: where natural, share code snippets to \
         debug, ask for optimization of working code, or describe functionality and \
         request an implementation.",
    )
}

pub fn user_questions_math(ctx: &QuestionBatchContext<'_>) -> String {
    render_question_prompt(
        ctx,
        "This is a mathematics conversation: where natural, share worked steps to \
         check, ask for the next step of a derivation, or pose a problem to solve.",
    )
}

fn render_question_prompt(ctx: &QuestionBatchContext<'_>, style: &str) -> String {
    let batch = ctx
        .batch_bullets
        .iter()
        .map(|(i, b)| format!("[bullet {i}] {b}"))
        .collect::<Vec<_>>()
        .join("\n");
    let mut out = question_preamble(style, ctx.questions_per_batch);
    out.push_str(&section("SEED", &render_seed(ctx.seed)));
    out.push_str(&section("CURRENT BATCH", &batch));
    if !ctx.special_bullets.is_empty() {
        out.push_str(&section(
            "SPECIAL CONSIDERATIONS (weave in where natural)",
            &ctx.special_bullets.join("\n"),
        ));
    }
    if !ctx.prior_batches.is_empty() {
        out.push_str(&section(
            "EARLIER BATCHES IN THIS SUB-PLAN",
            &ctx.prior_batches.join("\n"),
        ));
    }
    if !ctx.prior_subplans.is_empty() {
        out.push_str(&section(
            "EARLIER SUB-PLANS",
            &ctx.prior_subplans.join("\n"),
        ));
    }
    out
}

// --- synthesis: dialogue role-play ---

pub struct DialogueContext<'a> {
    pub seed: &'a Seed,
    pub current_subplan: Option<&'a str>,
    pub prior_subplans: &'a [String],
    pub plan_summaries: &'a [String],
    pub recent_pairs: &'a [ExchangePair],
    pub older_summary: &'a str,
}

fn dialogue_sections(ctx: &DialogueContext<'_>) -> String {
    let mut out = section("SEED", &render_seed(ctx.seed));
    if !ctx.plan_summaries.is_empty() {
        out.push_str(&section(
            "SUMMARIES OF EARLIER PLANS",
            &ctx.plan_summaries.join("\n"),
        ));
    }
    if !ctx.prior_subplans.is_empty() {
        out.push_str(&section(
            "EARLIER SUB-PLANS",
            &ctx.prior_subplans.join("\n"),
        ));
    }
    if let Some(current) = ctx.current_subplan {
        out.push_str(&section("CURRENT SUB-PLAN", current));
    }
    if !ctx.older_summary.is_empty() {
        out.push_str(&section("SUMMARY OF OLDER TURNS", ctx.older_summary));
    }
    out.push_str(&section("RECENT DIALOGUE", &render_pairs(ctx.recent_pairs)));
    out
}

pub fn assistant_reply(ctx: &DialogueContext<'_>, user_message: &str) -> String {
    format!(
        "{ASSISTANT_REPLY_MARKER}\n\
         Reply helpfully and consistently with everything established so far.\n\n{}{}",
        dialogue_sections(ctx),
        section("USER MESSAGE", user_message)
    )
}

pub fn user_reply(ctx: &DialogueContext<'_>, assistant_message: &str) -> String {
    format!(
        "{USER_REPLY_MARKER}\n\
         Stay consistent with the storyline and profile.\n\n{}{}",
        dialogue_sections(ctx),
        section("ASSISTANT MESSAGE", assistant_message)
    )
}

pub fn user_followup(ctx: &DialogueContext<'_>, assistant_message: &str) -> String {
    format!(
        "{USER_FOLLOWUP_MARKER}\n\
         Ground it in the assistant's last message.\n\n{}{}",
        dialogue_sections(ctx),
        section("ASSISTANT MESSAGE", assistant_message)
    )
}

pub fn check_includes_question(assistant_message: &str) -> String {
    format!(
        "{CHECK_QUESTION_MARKER}\n\n{}",
        section("ASSISTANT MESSAGE", assistant_message)
    )
}

pub fn check_needs_followup(ctx: &DialogueContext<'_>, assistant_message: &str) -> String {
    format!(
        "{CHECK_FOLLOWUP_MARKER}\n\
         Consider subject complexity, ambiguity, and completeness of the reply.\n\n{}{}",
        dialogue_sections(ctx),
        section("ASSISTANT MESSAGE", assistant_message)
    )
}

// --- probes ---

pub fn probe_selection(ability: MemoryAbility, indexed_bullets: &str) -> String {
    let guidance = match ability {
        MemoryAbility::KnowledgeUpdate => {
            "Each candidate must pair an initial fact with its later revision: \
             exactly two bullet_refs, [initial, revised]."
        }
        MemoryAbility::ContradictionResolution => {
            "Each candidate must pair two bullets that contradict each other: \
             exactly two bullet_refs."
        }
        MemoryAbility::TemporalReasoning => {
            "Each candidate must pair two dated events: exactly two bullet_refs."
        }
        MemoryAbility::EventOrdering | MemoryAbility::Summarization => {
            "Each candidate spans several bullets in chronological order."
        }
        _ => "Each candidate lists the bullets a probe would draw on.",
    };
    format!(
        "{PROBE_SELECTION_MARKER} {} probes.\n\
         {guidance}\n\
         Reply with JSON: {{\"candidates\": [{{\"bullet_refs\": [[plan, sub_plan, bullet]]}}]}}.\n\n{}",
        ability.as_str(),
        section("PLAN BULLETS", indexed_bullets)
    )
}

pub fn probe_generation(ability: MemoryAbility, bullets: &str, snippets: &str) -> String {
    let extra = match ability {
        MemoryAbility::EventOrdering => {
            "Include \"ordering_tested\": an ordered array of short event descriptions."
        }
        MemoryAbility::Abstention => {
            "Ask about plausible details that were never discussed; the ideal answer \
             states that the chat contains no such information."
        }
        _ => "",
    };
    format!(
        "Write one {} {PROBE_GENERATION_MARKER}\n\
         Keys: \"question\", \"ideal_answer\", \"rubric\" (array of atomic criteria). {extra}\n\n{}{}",
        ability.as_str(),
        section("CANDIDATE BULLETS", bullets),
        section("DIALOGUE SNIPPETS", snippets)
    )
}

// --- evaluation ---

pub fn judge(response: &str, nugget: &str) -> String {
    format!(
        "{JUDGE_MARKER}\n\
         0 = unsatisfied, 0.5 = partially satisfied, 1 = fully satisfied.\n\n{}{}",
        section("RESPONSE", response),
        section("CRITERION", nugget)
    )
}

pub fn equivalence(reference: &str, candidate: &str) -> String {
    format!(
        "{EQUIVALENCE_MARKER}\n\n{}{}",
        section("Event A", reference),
        section("Event B", candidate)
    )
}
