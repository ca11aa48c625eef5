//! User-question batching and the role-played dialogue loop.
//!
//! Each sub-plan's base bullets split into K contiguous equal batches; every
//! batch yields I scripted user questions. For each scripted question the
//! assistant answers, then two threshold-bounded loops run: while the
//! assistant's reply itself asks a question (δ1 bound) the user answers, and
//! while a clarifying follow-up is warranted (δ2 bound) the user asks one.
//! Question-to-turn alignment is recorded at emission for probe provenance.

use serde::{Deserialize, Serialize};

use crate::domain::{ExchangePair, Plan, Role, Turn};
use crate::gateway::{CallKind, Decision, Gateway, GatewayError};
use crate::prompts::{self, DialogueContext, QuestionBatchContext};
use crate::token::Tokenizer;

use super::{Category, SynthesisConfig, SynthesisError};

const QUESTION_RETRIES: usize = 2;

/// One scripted user question with its provenance in the plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedQuestion {
    pub plan: usize,
    pub sub_plan: usize,
    pub batch: usize,
    pub ordinal: usize,
    pub text: String,
    /// Base-bullet indices of the batch this question came from.
    pub bullet_refs: Vec<usize>,
}

/// (plan, sub-plan, batch, ordinal) → the turn span the question produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionAlignment {
    pub plan: usize,
    pub sub_plan: usize,
    pub batch: usize,
    pub ordinal: usize,
    pub first_turn: usize,
    pub last_turn: usize,
}

/// Generates all scripted user questions, ordered by
/// (plan, sub-plan, batch). A batch whose output stays malformed after
/// retries is skipped with a warning rather than aborting the run.
pub fn generate_user_questions(
    gateway: &Gateway,
    plans: &[Plan],
    config: &SynthesisConfig,
) -> Result<Vec<ScriptedQuestion>, SynthesisError> {
    let batch_size = config.m_bullets / config.batches_per_subplan;
    let mut questions = Vec::new();
    for (plan_idx, plan) in plans.iter().enumerate() {
        let mut prior_subplans: Vec<String> = Vec::new();
        for (sub_idx, sub_plan) in plan.sub_plans.iter().enumerate() {
            let special: Vec<String> = sub_plan
                .bullets
                .iter()
                .skip(config.m_bullets)
                .map(|b| format!("({:?}) {}: {}", b.kind, b.narrative_label, b.description))
                .collect();
            let mut prior_batches: Vec<String> = Vec::new();
            for batch in 0..config.batches_per_subplan {
                let bullet_range = batch * batch_size..(batch + 1) * batch_size;
                let batch_bullets: Vec<(usize, String)> = bullet_range
                    .clone()
                    .map(|i| {
                        let b = &sub_plan.bullets[i];
                        (i, format!("{}: {}", b.narrative_label, b.description))
                    })
                    .collect();
                let ctx = QuestionBatchContext {
                    seed: &plan.seed,
                    batch_bullets: &batch_bullets,
                    prior_batches: &prior_batches,
                    prior_subplans: &prior_subplans,
                    special_bullets: &special,
                    questions_per_batch: config.questions_per_batch,
                };
                let prompt = match config.category {
                    Category::General => prompts::user_questions_general(&ctx),
                    Category::Coding => prompts::user_questions_coding(&ctx),
                    Category::Math => prompts::user_questions_math(&ctx),
                };
                match generate_batch_questions(gateway, &prompt, config.questions_per_batch) {
                    Ok(texts) => {
                        for (ordinal, text) in texts.into_iter().enumerate() {
                            questions.push(ScriptedQuestion {
                                plan: plan_idx,
                                sub_plan: sub_idx,
                                batch,
                                ordinal,
                                text,
                                bullet_refs: bullet_range.clone().collect(),
                            });
                        }
                    }
                    Err(err) => {
                        log::warn!(
                            "skipping batch {batch} of sub-plan {sub_idx} (plan {plan_idx}): {err}"
                        );
                    }
                }
                prior_batches.push(
                    batch_bullets
                        .iter()
                        .map(|(_, b)| b.clone())
                        .collect::<Vec<_>>()
                        .join("\n"),
                );
            }
            prior_subplans.push(prompts::render_subplan(sub_plan, sub_idx));
        }
    }
    Ok(questions)
}

fn generate_batch_questions(
    gateway: &Gateway,
    prompt: &str,
    expected: usize,
) -> Result<Vec<String>, SynthesisError> {
    let mut last_err = String::new();
    for _ in 0..=QUESTION_RETRIES {
        let text = gateway.chat(CallKind::UserTurn, prompt)?;
        match serde_json::from_str::<Vec<String>>(super::plan::extract_json(&text)) {
            Ok(items) if items.len() == expected && items.iter().all(|q| !q.trim().is_empty()) => {
                return Ok(items);
            }
            Ok(items) => last_err = format!("expected {expected} questions, got {}", items.len()),
            Err(e) => last_err = format!("questions are not a JSON string array: {e}"),
        }
    }
    Err(SynthesisError::Malformed(last_err))
}

/// Detector: does the assistant's reply ask the user a question?
/// Unparseable verdicts fail closed (No) so loops always terminate.
pub fn detect_question(gateway: &Gateway, assistant_text: &str) -> Result<bool, SynthesisError> {
    decide(gateway, &prompts::check_includes_question(assistant_text))
}

/// Detector: is a clarifying user follow-up warranted? Fail-closed, as above.
pub fn detect_followup(
    gateway: &Gateway,
    ctx: &DialogueContext<'_>,
    assistant_text: &str,
) -> Result<bool, SynthesisError> {
    decide(gateway, &prompts::check_needs_followup(ctx, assistant_text))
}

fn decide(gateway: &Gateway, prompt: &str) -> Result<bool, SynthesisError> {
    let req = gateway.request(
        CallKind::Analysis,
        vec![crate::gateway::ChatMessage::user(prompt)],
    );
    match gateway.generate_decision(&req) {
        Ok(Decision::Yes) => Ok(true),
        Ok(Decision::No) => Ok(false),
        Err(GatewayError::Unparseable(raw)) => {
            log::warn!("unparseable detector output treated as No: {raw}");
            Ok(false)
        }
        Err(err) => Err(err.into()),
    }
}

/// Dialogue state carried across checkpoints.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DialogueProgress {
    pub turns: Vec<Turn>,
    pub alignments: Vec<QuestionAlignment>,
    pub completed_questions: usize,
}

/// Runs the dialogue loop from `progress` over the remaining scripted
/// questions. After every completed question `on_question_done` is invoked
/// so the caller can checkpoint. A failure inside one question's thread
/// rolls that thread back and moves on; it never aborts the run.
pub fn generate_dialogue(
    gateway: &Gateway,
    tokenizer: &dyn Tokenizer,
    plans: &[Plan],
    questions: &[ScriptedQuestion],
    config: &SynthesisConfig,
    mut progress: DialogueProgress,
    mut on_question_done: impl FnMut(&DialogueProgress) -> Result<(), SynthesisError>,
) -> Result<DialogueProgress, SynthesisError> {
    let start = progress.completed_questions;
    for question in questions.iter().skip(start) {
        if let Some(max) = config.max_questions {
            if progress.completed_questions >= max {
                break;
            }
        }
        let thread_start = progress.turns.len();
        match run_question_thread(
            gateway,
            tokenizer,
            plans,
            question,
            config,
            &mut progress.turns,
        ) {
            Ok(()) => {
                progress.alignments.push(QuestionAlignment {
                    plan: question.plan,
                    sub_plan: question.sub_plan,
                    batch: question.batch,
                    ordinal: question.ordinal,
                    first_turn: thread_start,
                    last_turn: progress.turns.len() - 1,
                });
            }
            Err(err) => {
                log::warn!(
                    "question thread failed (plan {}, sub-plan {}, batch {}, ordinal {}): {err}",
                    question.plan,
                    question.sub_plan,
                    question.batch,
                    question.ordinal
                );
                progress.turns.truncate(thread_start);
            }
        }
        progress.completed_questions += 1;
        on_question_done(&progress)?;
    }
    Ok(progress)
}

/// Borrowed thread-level conditioning; the recent window and older digest
/// are recomputed per call so they slide mid-thread.
struct ThreadContext<'a> {
    plan: &'a Plan,
    prior_subplans: Vec<String>,
    current_subplan: String,
    plan_summaries: Vec<String>,
    summary_window: usize,
    tokenizer: &'a dyn Tokenizer,
}

impl<'a> ThreadContext<'a> {
    fn render<R>(
        &self,
        turns: &[Turn],
        include_current: bool,
        f: impl FnOnce(&DialogueContext<'_>) -> R,
    ) -> R {
        let pairs = recent_pairs(turns, self.summary_window);
        let older = older_digest(turns, self.summary_window, self.tokenizer);
        f(&DialogueContext {
            seed: &self.plan.seed,
            current_subplan: include_current.then_some(self.current_subplan.as_str()),
            prior_subplans: &self.prior_subplans,
            plan_summaries: &self.plan_summaries,
            recent_pairs: &pairs,
            older_summary: &older,
        })
    }

    /// The assistant sees only prior sub-plans, never the upcoming storyline.
    fn assistant_reply(
        &self,
        gateway: &Gateway,
        turns: &[Turn],
        user_msg: &str,
    ) -> Result<String, SynthesisError> {
        // Exclude the just-pushed user turn from the window; it is passed
        // separately as the message being answered.
        let history = &turns[..turns.len() - 1];
        let prompt = self.render(history, false, |ctx| {
            prompts::assistant_reply(ctx, user_msg)
        });
        Ok(gateway.chat(CallKind::Synthesis, &prompt)?)
    }
}

fn run_question_thread(
    gateway: &Gateway,
    tokenizer: &dyn Tokenizer,
    plans: &[Plan],
    question: &ScriptedQuestion,
    config: &SynthesisConfig,
    turns: &mut Vec<Turn>,
) -> Result<(), SynthesisError> {
    let plan = &plans[question.plan];
    let ctx = ThreadContext {
        plan,
        prior_subplans: plan.sub_plans[..question.sub_plan]
            .iter()
            .enumerate()
            .map(|(i, sp)| prompts::render_subplan(sp, i))
            .collect(),
        current_subplan: prompts::render_subplan(
            &plan.sub_plans[question.sub_plan],
            question.sub_plan,
        ),
        plan_summaries: plans[..question.plan]
            .iter()
            .filter(|p| !p.summary.is_empty())
            .map(|p| p.summary.clone())
            .collect(),
        summary_window: config.summary_window,
        tokenizer,
    };

    let push_turn = |turns: &mut Vec<Turn>, role: Role, content: &str| {
        let index = turns.len();
        turns.push(Turn::new(index, role, content, tokenizer));
    };

    push_turn(turns, Role::User, &question.text);
    let mut assistant_msg = ctx.assistant_reply(gateway, turns, &question.text)?;
    push_turn(turns, Role::Assistant, &assistant_msg);

    // Counter-question loop, bounded by δ1.
    let mut count = 0;
    let mut includes_question = detect_question(gateway, &assistant_msg)?;
    while includes_question && count < config.delta1 {
        let user_msg = {
            let prompt = ctx.render(turns, true, |c| prompts::user_reply(c, &assistant_msg));
            gateway.chat(CallKind::UserTurn, &prompt)?
        };
        push_turn(turns, Role::User, &user_msg);
        assistant_msg = ctx.assistant_reply(gateway, turns, &user_msg)?;
        push_turn(turns, Role::Assistant, &assistant_msg);
        count += 1;
        includes_question = detect_question(gateway, &assistant_msg)?;
    }

    // Follow-up loop, bounded by δ2.
    let mut followups = 0;
    let mut needs_followup =
        ctx.render(turns, true, |c| detect_followup(gateway, c, &assistant_msg))?;
    while needs_followup && followups < config.delta2 {
        let followup_msg = {
            let prompt = ctx.render(turns, true, |c| prompts::user_followup(c, &assistant_msg));
            gateway.chat(CallKind::UserTurn, &prompt)?
        };
        push_turn(turns, Role::User, &followup_msg);
        assistant_msg = ctx.assistant_reply(gateway, turns, &followup_msg)?;
        push_turn(turns, Role::Assistant, &assistant_msg);
        followups += 1;
        needs_followup =
            ctx.render(turns, true, |c| detect_followup(gateway, c, &assistant_msg))?;
    }
    Ok(())
}

/// The last `window` complete pairs preceding the cursor.
fn recent_pairs(turns: &[Turn], window: usize) -> Vec<ExchangePair> {
    let complete = &turns[..turns.len() - turns.len() % 2];
    let pairs: Vec<ExchangePair> = complete
        .chunks_exact(2)
        .map(|c| ExchangePair {
            user_turn: c[0].clone(),
            assistant_turn: c[1].clone(),
        })
        .collect();
    let skip = pairs.len().saturating_sub(window);
    pairs.into_iter().skip(skip).collect()
}

/// Deterministic digest of turns older than the recent window: one clipped
/// line per user turn, newest-biased under a small token budget.
fn older_digest(turns: &[Turn], window: usize, tokenizer: &dyn Tokenizer) -> String {
    let complete = turns.len() - turns.len() % 2;
    let older_end = complete.saturating_sub(window * 2);
    if older_end == 0 {
        return String::new();
    }
    let mut lines: Vec<String> = turns[..older_end]
        .iter()
        .filter(|t| t.role == Role::User)
        .map(|t| {
            let clipped: String = t.content.chars().take(80).collect();
            format!("- {}", clipped)
        })
        .collect();
    // Keep the most recent lines within ~500 tokens.
    while lines.len() > 1 && tokenizer.count(&lines.join("\n")) > 500 {
        lines.remove(0);
    }
    lines.join("\n")
}
