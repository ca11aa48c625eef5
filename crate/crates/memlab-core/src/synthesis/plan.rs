//! Plan generation: narratives, the plan scaffold itself, special-bullet
//! augmentation, and the ten-plan strategies for 10M-token conversations.

use serde::Deserialize;

use crate::domain::{
    is_iso_date, BulletKind, BulletPoint, Plan, RelationshipGraph, Seed, SubPlan, UserProfile,
};
use crate::gateway::{CallKind, Gateway};
use crate::prompts::{self, PlanContext, TenMillionPlanContext};

use super::{PlanMode, SynthesisConfig, SynthesisError};

const PLAN_RETRIES: usize = 2;

/// Asks for 15–20 labelled narrative lines, retrying once on a bad count.
pub fn generate_narratives(gateway: &Gateway, seed: &Seed) -> Result<Vec<String>, SynthesisError> {
    let prompt = prompts::narratives(seed);
    let mut last_count = 0;
    for _ in 0..2 {
        let text = gateway.chat(CallKind::Synthesis, &prompt)?;
        let lines: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && l.contains(':'))
            .map(str::to_string)
            .collect();
        if (15..=20).contains(&lines.len()) {
            return Ok(lines);
        }
        last_count = lines.len();
    }
    Err(SynthesisError::CountOutOfRange {
        expected: "15-20 narratives".into(),
        got: last_count,
    })
}

#[derive(Deserialize)]
struct PlanJson {
    sub_plans: Vec<SubPlanJson>,
}

#[derive(Deserialize)]
struct SubPlanJson {
    time_anchor: String,
    bullets: Vec<BulletJson>,
}

#[derive(Deserialize)]
struct BulletJson {
    label: String,
    description: String,
}

/// Parses and validates structured plan output: exactly `n` sub-plans of
/// `m` bullets, ISO time anchors in non-decreasing order, nothing empty.
fn parse_plan(text: &str, seed: &Seed, n: usize, m: usize) -> Result<Plan, String> {
    let parsed: PlanJson = serde_json::from_str(extract_json(text))
        .map_err(|e| format!("plan is not valid JSON: {e}"))?;
    if parsed.sub_plans.len() != n {
        return Err(format!(
            "expected {n} sub-plans, got {}",
            parsed.sub_plans.len()
        ));
    }
    let mut sub_plans = Vec::with_capacity(n);
    let mut prev_anchor: Option<String> = None;
    for (i, sp) in parsed.sub_plans.into_iter().enumerate() {
        let anchor_date = sp.time_anchor.get(..10).unwrap_or("");
        if !is_iso_date(anchor_date) {
            return Err(format!(
                "sub-plan {i} anchor {:?} is not an ISO date",
                sp.time_anchor
            ));
        }
        if let Some(prev) = &prev_anchor {
            if anchor_date < prev.as_str() {
                return Err(format!(
                    "sub-plan {i} anchor {anchor_date} decreases after {prev}"
                ));
            }
        }
        prev_anchor = Some(anchor_date.to_string());
        if sp.bullets.len() != m {
            return Err(format!(
                "sub-plan {i} has {} bullets, expected {m}",
                sp.bullets.len()
            ));
        }
        let bullets = sp
            .bullets
            .into_iter()
            .enumerate()
            .map(|(j, b)| {
                if b.description.trim().is_empty() {
                    Err(format!("sub-plan {i} bullet {j} has an empty description"))
                } else {
                    Ok(BulletPoint {
                        narrative_label: b.label,
                        description: b.description,
                        kind: BulletKind::Normal,
                    })
                }
            })
            .collect::<Result<Vec<_>, String>>()?;
        sub_plans.push(SubPlan {
            time_anchor: sp.time_anchor,
            bullets,
        });
    }
    Ok(Plan {
        seed: seed.clone(),
        sub_plans,
        summary: String::new(),
    })
}

/// Tolerates prose around a JSON payload by slicing from the first opening
/// delimiter (object or array, whichever comes first) to its matching
/// outermost closer.
pub(crate) fn extract_json(text: &str) -> &str {
    let trimmed = text.trim();
    let (start, close) = match (trimmed.find('{'), trimmed.find('[')) {
        (Some(o), Some(a)) if a < o => (a, ']'),
        (Some(o), _) => (o, '}'),
        (None, Some(a)) => (a, ']'),
        (None, None) => return trimmed,
    };
    match trimmed.rfind(close) {
        Some(end) if end > start => &trimmed[start..=end],
        _ => trimmed,
    }
}

fn generate_plan_from_prompt(
    gateway: &Gateway,
    prompt: &str,
    seed: &Seed,
    n: usize,
    m: usize,
) -> Result<Plan, SynthesisError> {
    let mut last_err = String::new();
    for _ in 0..=PLAN_RETRIES {
        let text = gateway.chat(CallKind::Synthesis, prompt)?;
        match parse_plan(&text, seed, n, m) {
            Ok(plan) => return Ok(plan),
            Err(e) => last_err = e,
        }
    }
    Err(SynthesisError::Malformed(format!(
        "plan generation failed: {last_err}"
    )))
}

/// Single-plan generation for 128K/500K/1M targets.
pub fn generate_plan(
    gateway: &Gateway,
    seed: &Seed,
    profile: &UserProfile,
    relationships: &RelationshipGraph,
    narratives: &[String],
    config: &SynthesisConfig,
) -> Result<Plan, SynthesisError> {
    let prompt = prompts::plan_single(&PlanContext {
        seed,
        profile,
        relationships,
        narratives,
        n_sub_plans: config.n_sub_plans,
        m_bullets: config.m_bullets,
    });
    generate_plan_from_prompt(gateway, &prompt, seed, config.n_sub_plans, config.m_bullets)
}

#[derive(Deserialize)]
struct SpecialBulletJson {
    kind: String,
    label: String,
    description: String,
}

fn parse_special_bullets(text: &str) -> Result<Vec<BulletPoint>, String> {
    let parsed: Vec<SpecialBulletJson> = serde_json::from_str(extract_json(text))
        .map_err(|e| format!("augmentation is not valid JSON: {e}"))?;
    if parsed.len() != 3 {
        return Err(format!("expected 3 special bullets, got {}", parsed.len()));
    }
    let mut bullets = Vec::with_capacity(3);
    for b in parsed {
        let kind = match b.kind.as_str() {
            "contradiction" => BulletKind::Contradiction,
            "update" => BulletKind::Update,
            "instruction" => BulletKind::Instruction,
            other => return Err(format!("unknown special bullet kind {other:?}")),
        };
        if b.description.trim().is_empty() {
            return Err("special bullet has an empty description".into());
        }
        bullets.push(BulletPoint {
            narrative_label: b.label,
            description: b.description,
            kind,
        });
    }
    let mut kinds: Vec<BulletKind> = bullets.iter().map(|b| b.kind).collect();
    kinds.sort_by_key(|k| format!("{k:?}"));
    kinds.dedup();
    if kinds.len() != 3 {
        return Err(
            "special bullets must contain one contradiction, one update, one instruction".into(),
        );
    }
    Ok(bullets)
}

/// Augments every sub-plan with exactly three special bullets, one of each
/// kind, leaving the base bullets untouched.
pub fn augment_plan(gateway: &Gateway, plan: &Plan) -> Result<Plan, SynthesisError> {
    let mut augmented = plan.clone();
    for (i, sub_plan) in augmented.sub_plans.iter_mut().enumerate() {
        let prompt = prompts::augment_subplan(&plan.seed, &plan.sub_plans[i], i);
        let mut last_err = String::new();
        let mut extra = None;
        for _ in 0..=PLAN_RETRIES {
            let text = gateway.chat(CallKind::Synthesis, &prompt)?;
            match parse_special_bullets(&text) {
                Ok(bullets) => {
                    extra = Some(bullets);
                    break;
                }
                Err(e) => last_err = e,
            }
        }
        match extra {
            Some(bullets) => sub_plan.bullets.extend(bullets),
            None => {
                return Err(SynthesisError::Malformed(format!(
                    "augmentation failed for sub-plan {i}: {last_err}"
                )))
            }
        }
    }
    Ok(augmented)
}

/// One-paragraph digest used when later plans or dialogue condition on this plan.
pub fn generate_plan_summary(gateway: &Gateway, plan: &Plan) -> Result<String, SynthesisError> {
    Ok(gateway
        .chat(CallKind::Synthesis, &prompts::plan_summary(plan))?
        .trim()
        .to_string())
}

/// Derives the ten seeds for a 10M-token conversation. Sequential expansion
/// extends the storyline chronologically; hierarchical decomposition slices
/// it topically and temporally. Slices must be non-overlapping and cover the
/// main timeline.
pub fn derive_seeds(
    gateway: &Gateway,
    main_seed: &Seed,
    profile: &UserProfile,
    mode: PlanMode,
) -> Result<Vec<Seed>, SynthesisError> {
    let prompt = match mode {
        PlanMode::SequentialExpansion => prompts::seeds_sequential(main_seed, profile),
        PlanMode::HierarchicalDecomposition => prompts::seeds_hierarchical(main_seed, profile),
        PlanMode::Single => {
            return Err(SynthesisError::InvalidConfig(
                "seed derivation applies only to 10M targets".into(),
            ))
        }
    };
    let text = gateway.chat(CallKind::Synthesis, &prompt)?;
    let seeds: Vec<Seed> = serde_json::from_str(extract_json(&text))
        .map_err(|e| SynthesisError::Malformed(format!("seeds are not valid JSON: {e}")))?;
    if seeds.len() != 10 {
        return Err(SynthesisError::CountOutOfRange {
            expected: "10 seeds".into(),
            got: seeds.len(),
        });
    }
    validate_seed_slices(&seeds, main_seed).map_err(SynthesisError::Malformed)?;
    Ok(seeds)
}

fn validate_seed_slices(seeds: &[Seed], main_seed: &Seed) -> Result<(), String> {
    for (i, s) in seeds.iter().enumerate() {
        if !s.timeline.is_valid() {
            return Err(format!("seed {i} has an invalid timeline"));
        }
        if s.subtopics.is_empty() {
            return Err(format!("seed {i} has no subtopics"));
        }
    }
    for i in 1..seeds.len() {
        if seeds[i].timeline.start < seeds[i - 1].timeline.end {
            return Err(format!("seed {i} timeline overlaps seed {}", i - 1));
        }
    }
    let first = seeds.first().expect("ten seeds");
    let last = seeds.last().expect("ten seeds");
    if first.timeline.start != main_seed.timeline.start
        || last.timeline.end != main_seed.timeline.end
    {
        return Err("seed slices do not cover the main timeline".into());
    }
    Ok(())
}

/// Generates the ten interlocking plans, each conditioned per strategy:
/// sequential plans see their predecessor; hierarchical plans see summaries
/// of all earlier plans plus the neighbouring seeds. Every plan is augmented
/// and summarized.
pub fn generate_plans_10m(
    gateway: &Gateway,
    main_seed: &Seed,
    seeds: &[Seed],
    mode: PlanMode,
    profile: &UserProfile,
    relationships: &RelationshipGraph,
    config: &SynthesisConfig,
) -> Result<Vec<Plan>, SynthesisError> {
    if seeds.len() != 10 {
        return Err(SynthesisError::CountOutOfRange {
            expected: "10 seeds".into(),
            got: seeds.len(),
        });
    }
    let mut plans: Vec<Plan> = Vec::with_capacity(10);
    let mut summaries: Vec<String> = Vec::new();
    for (i, seed) in seeds.iter().enumerate() {
        let narratives = generate_narratives(gateway, seed)?;
        let ctx = TenMillionPlanContext {
            base: PlanContext {
                seed,
                profile,
                relationships,
                narratives: &narratives,
                n_sub_plans: config.n_sub_plans,
                m_bullets: config.m_bullets,
            },
            plan_index: i,
            is_first: i == 0,
            previous_plan: match mode {
                PlanMode::SequentialExpansion if i > 0 => Some(prompts::render_plan(&plans[i - 1])),
                _ => None,
            },
            prior_summaries: match mode {
                PlanMode::HierarchicalDecomposition => &summaries,
                _ => &[],
            },
            neighbor_seeds: match mode {
                PlanMode::HierarchicalDecomposition => (
                    if i > 0 { seeds.get(i - 1) } else { None },
                    seeds.get(i + 1),
                ),
                _ => (None, None),
            },
            main_seed: matches!(mode, PlanMode::HierarchicalDecomposition).then_some(main_seed),
        };
        let prompt = prompts::plan_ten_million(&ctx);
        let plan = generate_plan_from_prompt(
            gateway,
            &prompt,
            seed,
            config.n_sub_plans,
            config.m_bullets,
        )?;
        let mut plan = augment_plan(gateway, &plan)?;
        plan.summary = generate_plan_summary(gateway, &plan)?;
        summaries.push(plan.summary.clone());
        plans.push(plan);
    }
    Ok(plans)
}
