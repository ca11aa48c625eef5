//! Probe candidate selection and probe synthesis.
//!
//! Selection asks the model for ability-appropriate bullet candidates over
//! the plan (with a sliding window over the ten plans of a 10M run), then
//! each candidate plus its aligned dialogue snippets becomes one probing
//! question with an ideal answer and rubric. Abstention skips selection:
//! its probes come straight from the plan.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::domain::{
    MemoryAbility, Nugget, Plan, ProbeQuestion, ReviewStatus, SourceTurnIds, Turn,
};
use crate::gateway::{CallKind, Gateway};
use crate::prompts;

use super::dialogue::QuestionAlignment;
use super::plan::extract_json;
use super::{SynthesisConfig, SynthesisError};

const PROBE_RETRIES: usize = 2;

/// (plan, sub-plan, bullet) reference into the plan set.
pub type BulletRef = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeCandidate {
    pub ability: MemoryAbility,
    pub bullet_refs: Vec<BulletRef>,
    /// Turn ids aligned to each bullet ref, parallel to `bullet_refs`.
    pub per_ref_turns: Vec<Vec<usize>>,
    /// Union of all aligned turn ids, sorted.
    pub aligned_turn_ids: Vec<usize>,
}

/// Turns produced by the batch containing this bullet. Special
/// (augmentation) bullets align to the whole sub-plan's turns.
pub fn aligned_turns_for_bullet(
    alignments: &[QuestionAlignment],
    config: &SynthesisConfig,
    bullet_ref: BulletRef,
) -> Vec<usize> {
    let (plan, sub_plan, bullet) = bullet_ref;
    let batch_size = config.m_bullets / config.batches_per_subplan;
    let batch = (bullet < config.m_bullets).then(|| bullet / batch_size);
    let mut turns: Vec<usize> = alignments
        .iter()
        .filter(|a| {
            a.plan == plan && a.sub_plan == sub_plan && batch.map(|b| a.batch == b).unwrap_or(true)
        })
        .flat_map(|a| a.first_turn..=a.last_turn)
        .collect();
    turns.sort_unstable();
    turns.dedup();
    turns
}

fn indexed_bullets(plans: &[Plan], plan_range: std::ops::Range<usize>) -> String {
    let mut out = String::new();
    for p in plan_range {
        for (s, sub_plan) in plans[p].sub_plans.iter().enumerate() {
            out.push_str(&format!(
                "Plan {p}, sub-plan {s} — {}\n",
                sub_plan.time_anchor
            ));
            for (b, bullet) in sub_plan.bullets.iter().enumerate() {
                out.push_str(&format!(
                    "[{p},{s},{b}] ({:?}) {}: {}\n",
                    bullet.kind, bullet.narrative_label, bullet.description
                ));
            }
        }
    }
    out
}

#[derive(Deserialize)]
struct SelectionJson {
    candidates: Vec<CandidateJson>,
}

#[derive(Deserialize)]
struct CandidateJson {
    bullet_refs: Vec<(usize, usize, usize)>,
}

fn needs_ref_pair(ability: MemoryAbility) -> bool {
    matches!(
        ability,
        MemoryAbility::KnowledgeUpdate
            | MemoryAbility::ContradictionResolution
            | MemoryAbility::TemporalReasoning
    )
}

/// Selects up to `want` candidates for an ability. With more plans than the
/// configured window, selection slides over consecutive plan windows and a
/// candidate may never span plans outside one window.
pub fn select_probe_candidates(
    gateway: &Gateway,
    plans: &[Plan],
    alignments: &[QuestionAlignment],
    config: &SynthesisConfig,
    ability: MemoryAbility,
    want: usize,
) -> Result<Vec<ProbeCandidate>, SynthesisError> {
    if ability == MemoryAbility::Abstention {
        // Created directly from the plan; no bullet selection.
        return Ok(vec![
            ProbeCandidate {
                ability,
                bullet_refs: Vec::new(),
                per_ref_turns: Vec::new(),
                aligned_turn_ids: Vec::new(),
            };
            want.max(1)
        ]);
    }

    let window = config.probe_window_plans.max(1).min(plans.len());
    let windows: Vec<std::ops::Range<usize>> =
        (0..=plans.len() - window).map(|i| i..i + window).collect();

    let mut candidates: Vec<ProbeCandidate> = Vec::new();
    for plan_range in windows {
        let prompt = prompts::probe_selection(ability, &indexed_bullets(plans, plan_range.clone()));
        let text = gateway.chat(CallKind::Analysis, &prompt)?;
        let parsed: SelectionJson = match serde_json::from_str(extract_json(&text)) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("unparseable candidate selection for {ability}: {e}");
                continue;
            }
        };
        for cand in parsed.candidates {
            match validate_candidate(plans, alignments, config, ability, &plan_range, cand) {
                Ok(candidate) => {
                    if !candidates
                        .iter()
                        .any(|c| c.bullet_refs == candidate.bullet_refs)
                    {
                        candidates.push(candidate);
                    }
                }
                Err(reason) => log::warn!("dropping {ability} candidate: {reason}"),
            }
        }
    }
    if candidates.is_empty() {
        return Err(SynthesisError::EmptyCandidates(ability));
    }
    Ok(candidates)
}

fn validate_candidate(
    plans: &[Plan],
    alignments: &[QuestionAlignment],
    config: &SynthesisConfig,
    ability: MemoryAbility,
    plan_range: &std::ops::Range<usize>,
    cand: CandidateJson,
) -> Result<ProbeCandidate, String> {
    if cand.bullet_refs.is_empty() {
        return Err("candidate has no bullet refs".into());
    }
    if needs_ref_pair(ability) && cand.bullet_refs.len() != 2 {
        return Err(format!(
            "{ability} candidates need exactly two bullet refs, got {}",
            cand.bullet_refs.len()
        ));
    }
    for (p, s, b) in &cand.bullet_refs {
        if !plan_range.contains(p) {
            return Err(format!(
                "ref ({p},{s},{b}) is outside the current plan window"
            ));
        }
        let sub = plans
            .get(*p)
            .and_then(|plan| plan.sub_plans.get(*s))
            .ok_or_else(|| format!("ref ({p},{s},{b}) does not resolve"))?;
        if *b >= sub.bullets.len() {
            return Err(format!("ref ({p},{s},{b}) does not resolve"));
        }
    }
    let per_ref_turns: Vec<Vec<usize>> = cand
        .bullet_refs
        .iter()
        .map(|r| aligned_turns_for_bullet(alignments, config, *r))
        .collect();
    let mut aligned: Vec<usize> = per_ref_turns.iter().flatten().copied().collect();
    aligned.sort_unstable();
    aligned.dedup();
    Ok(ProbeCandidate {
        ability,
        bullet_refs: cand.bullet_refs,
        per_ref_turns,
        aligned_turn_ids: aligned,
    })
}

fn render_candidate_bullets(plans: &[Plan], candidate: &ProbeCandidate) -> String {
    if candidate.bullet_refs.is_empty() {
        return plans
            .iter()
            .map(prompts::render_plan)
            .collect::<Vec<_>>()
            .join("\n");
    }
    candidate
        .bullet_refs
        .iter()
        .map(|(p, s, b)| {
            let bullet = &plans[*p].sub_plans[*s].bullets[*b];
            format!(
                "[{p},{s},{b}] ({:?}) {}: {}",
                bullet.kind, bullet.narrative_label, bullet.description
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_snippets(turns: &[Turn], ids: &[usize]) -> String {
    if ids.is_empty() {
        return "(none)".to_string();
    }
    ids.iter()
        .filter_map(|i| turns.get(*i))
        .map(|t| format!("[turn {}] {}: {}", t.index, t.role, t.content))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Groups source turn ids by the ability's provenance shape.
fn source_ids(ability: MemoryAbility, candidate: &ProbeCandidate) -> SourceTurnIds {
    let grouped = |keys: [&str; 2]| {
        let mut map = BTreeMap::new();
        map.insert(
            keys[0].to_string(),
            candidate.per_ref_turns.first().cloned().unwrap_or_default(),
        );
        map.insert(
            keys[1].to_string(),
            candidate.per_ref_turns.get(1).cloned().unwrap_or_default(),
        );
        SourceTurnIds::Grouped(map)
    };
    match ability {
        MemoryAbility::Abstention => SourceTurnIds::Grouped(BTreeMap::new()),
        MemoryAbility::KnowledgeUpdate => grouped(["original_info", "updated_info"]),
        MemoryAbility::ContradictionResolution => grouped(["first_statement", "second_statement"]),
        MemoryAbility::TemporalReasoning => grouped(["first_event", "second_event"]),
        _ => SourceTurnIds::Flat(candidate.aligned_turn_ids.clone()),
    }
}

fn parse_probe_json(text: &str, ability: MemoryAbility) -> Result<ParsedProbe, String> {
    let value: serde_json::Value = serde_json::from_str(extract_json(text))
        .map_err(|e| format!("probe output is not valid JSON: {e}"))?;
    let question = value["question"]
        .as_str()
        .filter(|q| !q.trim().is_empty())
        .ok_or("probe output has no question")?
        .to_string();
    let ideal_answer = [
        "ideal_answer",
        "ideal_response",
        "answer",
        "ideal_summary",
        "expected_compliance",
    ]
    .iter()
    .find_map(|key| value[*key].as_str())
    .filter(|a| !a.trim().is_empty())
    .ok_or("probe output has no ideal answer")?
    .to_string();
    let rubric: Vec<Nugget> = value["rubric"]
        .as_array()
        .map(|items| {
            items
                .iter()
                .filter_map(|v| v.as_str())
                .filter(|s| !s.trim().is_empty())
                .map(|s| Nugget(s.to_string()))
                .collect()
        })
        .unwrap_or_default();
    let events: Option<Vec<String>> = value["ordering_tested"].as_array().map(|items| {
        items
            .iter()
            .filter_map(|v| v.as_str())
            .map(str::to_string)
            .collect()
    });
    let has_events = events.as_ref().map(|e| !e.is_empty()).unwrap_or(false);
    if ability == MemoryAbility::EventOrdering {
        if !has_events {
            return Err("event-ordering probe is missing ordering_tested".into());
        }
    } else if rubric.is_empty() {
        return Err("probe rubric is empty".into());
    }
    Ok(ParsedProbe {
        question,
        ideal_answer,
        rubric,
        events,
    })
}

struct ParsedProbe {
    question: String,
    ideal_answer: String,
    rubric: Vec<Nugget>,
    events: Option<Vec<String>>,
}

/// Synthesizes one probe from a candidate and its dialogue snippets.
pub fn generate_probe(
    gateway: &Gateway,
    plans: &[Plan],
    conversation_turns: &[Turn],
    candidate: &ProbeCandidate,
    ability: MemoryAbility,
) -> Result<ProbeQuestion, SynthesisError> {
    let bullets = render_candidate_bullets(plans, candidate);
    let snippets = render_snippets(conversation_turns, &candidate.aligned_turn_ids);
    let prompt = prompts::probe_generation(ability, &bullets, &snippets);
    let mut last_err = String::new();
    for _ in 0..=PROBE_RETRIES {
        let text = gateway.chat(CallKind::Analysis, &prompt)?;
        match parse_probe_json(&text, ability) {
            Ok(parsed) => {
                return Ok(ProbeQuestion {
                    ability,
                    question: parsed.question,
                    ideal_answer: parsed.ideal_answer,
                    events: parsed.events,
                    rubric: parsed.rubric,
                    source_turn_ids: source_ids(ability, candidate),
                    review_status: ReviewStatus::Unreviewed,
                });
            }
            Err(e) => last_err = e,
        }
    }
    Err(SynthesisError::Malformed(format!(
        "probe generation failed for {ability}: {last_err}"
    )))
}

/// Full per-ability probe pass: select candidates, synthesize up to `cap`
/// probes, and drop any that fail structural checks against the
/// conversation.
pub fn generate_probes_for_ability(
    gateway: &Gateway,
    plans: &[Plan],
    alignments: &[QuestionAlignment],
    conversation_turns: &[Turn],
    config: &SynthesisConfig,
    ability: MemoryAbility,
    cap: usize,
) -> Result<Vec<ProbeQuestion>, SynthesisError> {
    let candidates = select_probe_candidates(gateway, plans, alignments, config, ability, cap)?;
    let mut probes = Vec::new();
    for candidate in candidates.iter().take(cap) {
        match generate_probe(gateway, plans, conversation_turns, candidate, ability) {
            Ok(probe) => match probe.check(conversation_turns.len()) {
                Ok(()) => probes.push(probe),
                Err(reason) => log::warn!("dropping invalid {ability} probe: {reason}"),
            },
            Err(err) => log::warn!("probe generation failed for {ability}: {err}"),
        }
    }
    Ok(probes)
}
