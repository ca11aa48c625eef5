//! Acceptance suite: one test per criterion, each printing a pass line.
//!
//! Run with `cargo test -p memlab-cli --test acceptance -- --nocapture`.
//! Everything executes offline on the scripted mock provider and the
//! deterministic hash embedder.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use memlab_cli::commands::{self, AnswerFlags};
use memlab_cli::config::RunConfig;
use memlab_core::domain::{
    validate_conversation, Category, Conversation, ConversationMeta, MemoryAbility, TargetLength,
};
use memlab_core::embedding::{normalize, HashEmbedder};
use memlab_core::episodic::{MemoryRecord, VectorIndex};
use memlab_core::evaluator::{
    kendall_tau_b, mean_verdict, read_scores_jsonl, EvalError, NuggetVerdict,
};
use memlab_core::gateway::mock::MockScript;
use memlab_core::gateway::{wire, Gateway};
use memlab_core::orchestrator::{AblationConfig, MemoryEngine, OrchestratorConfig};
use memlab_core::prompts;
use memlab_core::scratchpad::{Scratchpad, ScratchpadConfig, ScratchpadEngine};
use memlab_core::synthesis::dialogue::{
    generate_dialogue, generate_user_questions, DialogueProgress,
};
use memlab_core::synthesis::{PlanMode, SynthesisConfig};
use memlab_core::token::CharEstimateTokenizer;

use common::{run_pipeline, snapshot, write_fixture, PROBES};

fn pass(n: u32, what: &str) {
    println!("PASS criterion {n:2}: {what}");
}

fn mock_gateway(script: MockScript) -> Arc<Gateway> {
    Arc::new(Gateway::new(Box::new(script.into_provider()), "mock").with_retries(0, Duration::ZERO))
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    let mut v: Vec<f32> = (0..dim).map(|_| rng.gen::<f32>() * 2.0 - 1.0).collect();
    normalize(&mut v);
    v
}

/// Criterion 1 oracle: exhaustive scan, full sort, first record per pair.
fn brute_force_knn(index: &VectorIndex, query: &[f32], k: usize) -> Vec<u64> {
    let dot = |a: &[f32], b: &[f32]| -> f64 {
        let mut acc = 0.0f64;
        for i in 0..a.len() {
            acc += a[i] as f64 * b[i] as f64;
        }
        acc
    };
    let mut scored: Vec<(f64, &MemoryRecord)> = index
        .records()
        .iter()
        .map(|r| (dot(query, &r.embedding), r))
        .collect();
    scored.sort_by(|(sa, ra), (sb, rb)| {
        sb.total_cmp(sa)
            .then(ra.pair_index.cmp(&rb.pair_index))
            .then(ra.record_id.cmp(&rb.record_id))
    });
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (_, r) in scored {
        if seen.insert(r.pair_index) {
            out.push(r.record_id);
            if out.len() == k {
                break;
            }
        }
    }
    out
}

#[test]
fn criterion_01_retrieval_exactness() {
    let started = Instant::now();
    let dim = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut index = VectorIndex::new(dim);
    for i in 0..1_000 {
        let pair = rng.gen_range(0..400);
        index
            .insert(
                pair,
                format!("key {i}"),
                format!("segment {pair}"),
                random_unit(&mut rng, dim),
            )
            .unwrap();
    }
    let mut checked = 0;
    for _ in 0..50 {
        let query = random_unit(&mut rng, dim);
        for k in [1usize, 5, 15] {
            let got: Vec<u64> = index
                .retrieve_embedded(&query, k)
                .unwrap()
                .into_iter()
                .map(|(_, r)| r.record_id)
                .collect();
            assert_eq!(
                got,
                brute_force_knn(&index, &query, k),
                "kNN mismatch at k={k}"
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 150);
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    pass(
        1,
        "1,000 records × 50 queries × k ∈ {1,5,15} match the brute-force oracle exactly",
    );
}

#[test]
fn criterion_02_kendall_tau_b() {
    let started = Instant::now();

    assert_eq!(
        kendall_tau_b(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(),
        -1.0
    );
    assert!(matches!(
        kendall_tau_b(&[4.0, 4.0, 4.0], &[1.0, 2.0, 3.0]),
        Err(EvalError::Degenerate)
    ));

    let oracle = |x: &[f64], y: &[f64]| -> f64 {
        let (mut c, mut d, mut tx, mut ty) = (0f64, 0f64, 0f64, 0f64);
        for i in 0..x.len() {
            for j in (i + 1)..x.len() {
                let dx = x[i] - x[j];
                let dy = y[i] - y[j];
                if dx == 0.0 && dy == 0.0 {
                } else if dx == 0.0 {
                    tx += 1.0;
                } else if dy == 0.0 {
                    ty += 1.0;
                } else if dx * dy > 0.0 {
                    c += 1.0;
                } else {
                    d += 1.0;
                }
            }
        }
        (c - d) / ((c + d + tx) * (c + d + ty)).sqrt()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut checked = 0;
    while checked < 500 {
        let n = rng.gen_range(2..=12);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=6) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(1..=6) as f64).collect();
        let all_tied = |v: &[f64]| v.iter().all(|a| *a == v[0]);
        if all_tied(&x) || all_tied(&y) {
            assert!(matches!(kendall_tau_b(&x, &y), Err(EvalError::Degenerate)));
            continue;
        }
        let got = kendall_tau_b(&x, &y).unwrap();
        assert!(
            (got - oracle(&x, &y)).abs() < 1e-12,
            "tau mismatch for x={x:?} y={y:?}"
        );
        checked += 1;
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    pass(
        2,
        "500 random rank pairs with ties match the pair-counting oracle within 1e-12",
    );
}

#[test]
fn criterion_03_nugget_scoring() {
    let exact = [1.0, 0.5, 0.0]
        .iter()
        .enumerate()
        .map(|(i, v)| NuggetVerdict {
            nugget_index: i,
            verdict: *v,
            flagged: false,
        })
        .collect::<Vec<_>>();
    assert_eq!(mean_verdict(&exact), 0.5);

    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=12);
        let verdicts: Vec<NuggetVerdict> = (0..n)
            .map(|i| NuggetVerdict {
                nugget_index: i,
                verdict: [0.0, 0.5, 1.0][rng.gen_range(0..3)],
                flagged: false,
            })
            .collect();
        let expected = verdicts.iter().map(|v| v.verdict).sum::<f64>() / n as f64;
        assert!((mean_verdict(&verdicts) - expected).abs() < 1e-12);
    }
    pass(
        3,
        "verdicts [1, 0.5, 0] → 0.5 exactly; 10,000 random vectors equal their mean",
    );
}

#[test]
fn criterion_04_scratchpad_thresholds() {
    let tok = CharEstimateTokenizer;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        // Summaries sometimes overshoot the 15K target to exercise truncation.
        let summary_tokens = rng.gen_range(8_000..20_000usize);
        let script = MockScript::builder()
            .on(
                prompts::SCRATCH_SUMMARY_MARKER,
                "s".repeat(summary_tokens * 4),
            )
            .catch_all("x")
            .build()
            .unwrap();
        let engine = ScratchpadEngine::new(
            mock_gateway(script),
            Arc::new(HashEmbedder::new(16)),
            Arc::new(CharEstimateTokenizer),
            ScratchpadConfig::default(),
        );
        let mut pad = Scratchpad::empty();
        loop {
            let note_tokens = rng.gen_range(500..4_000usize);
            pad = pad.merge(&"n".repeat(note_tokens * 4), &tok);
            let before = pad.token_count;
            let outcome = engine.maybe_compress(&pad);
            if before > 30_000 {
                assert!(
                    outcome.performed,
                    "trial {trial}: compression did not trigger"
                );
                assert!(
                    outcome.pad.token_count <= 15_000,
                    "trial {trial}: {} tokens after compression",
                    outcome.pad.token_count
                );
                break;
            }
            assert!(!outcome.performed);
            pad = outcome.pad;
            assert!(pad.token_count <= 30_000);
        }
    }
    pass(
        4,
        "100/100 randomized ingest streams trigger compression past 30K down to ≤ 15K",
    );
}

/// Twenty-question always-yes synthesis for the δ bounds.
#[test]
fn criterion_05_loop_bounds() {
    let config = SynthesisConfig {
        target_length: TargetLength::L128K,
        category: Category::General,
        n_sub_plans: 5,
        m_bullets: 4,
        batches_per_subplan: 2,
        questions_per_batch: 2,
        delta1: 2,
        delta2: 2,
        summary_window: 10,
        plan_mode: PlanMode::Single,
        seed_rng: 1,
        max_questions: None,
        probe_window_plans: 2,
    };
    let script = MockScript::builder()
        .on(
            "user questions as a JSON array",
            r#"["first question", "second question"]"#,
        )
        .on(prompts::CHECK_QUESTION_MARKER, "yes")
        .on(prompts::CHECK_FOLLOWUP_MARKER, "yes")
        .on(prompts::USER_REPLY_MARKER, "a scripted user answer")
        .on(prompts::USER_FOLLOWUP_MARKER, "a scripted follow-up")
        .on(
            prompts::ASSISTANT_REPLY_MARKER,
            "a scripted assistant reply",
        )
        .catch_all("x")
        .build()
        .unwrap();
    let gateway = mock_gateway(script);

    let seed = memlab_core::domain::Seed {
        domain: "general".into(),
        title: "t".into(),
        theme: "th".into(),
        subtopics: vec!["s".into()],
        timeline: memlab_core::domain::Timeline {
            start: "2024-01-01".into(),
            end: "2024-12-31".into(),
        },
    };
    let plan = memlab_core::domain::Plan {
        seed,
        sub_plans: (0..5)
            .map(|i| memlab_core::domain::SubPlan {
                time_anchor: format!("2024-0{}-01", i + 1),
                bullets: (0..4)
                    .map(|j| memlab_core::domain::BulletPoint {
                        narrative_label: format!("L{i}{j}"),
                        description: format!("bullet {i}-{j}"),
                        kind: memlab_core::domain::BulletKind::Normal,
                    })
                    .collect(),
            })
            .collect(),
        summary: String::new(),
    };
    let plans = vec![plan];
    let questions = generate_user_questions(&gateway, &plans, &config).unwrap();
    assert_eq!(questions.len(), 20, "expected a 20-question synthesis");

    let progress = generate_dialogue(
        &gateway,
        &CharEstimateTokenizer,
        &plans,
        &questions,
        &config,
        DialogueProgress::default(),
        |_| Ok(()),
    )
    .unwrap();
    assert_eq!(progress.alignments.len(), 20);
    for alignment in &progress.alignments {
        // 2 scripted turns + δ1 = 2 counter-question cycles + δ2 = 2
        // follow-up cycles, each cycle one user and one assistant turn.
        let span = alignment.last_turn - alignment.first_turn + 1;
        assert_eq!(
            span,
            2 + 2 * 2 + 2 * 2,
            "wrong cycle count for {alignment:?}"
        );
    }
    assert_eq!(progress.turns.len(), 20 * 10);
    pass(
        5,
        "always-yes detectors give exactly 2 counter-question and 2 follow-up cycles per question",
    );
}

#[test]
fn criterion_06_probe_cardinality() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = write_fixture(dir.path(), false, false, "");
    let conv_dir = run_pipeline(&fixture);

    let conversation = memlab_core::formats::read_conversation_jsonl(
        &conv_dir.join("conversation.jsonl"),
        "garden",
        ConversationMeta {
            target_length: TargetLength::L128K,
            category: Category::General,
        },
        &CharEstimateTokenizer,
    )
    .unwrap();
    let mut total = 0;
    for ability in MemoryAbility::ALL {
        let path = conv_dir
            .join("probes")
            .join(format!("{}.json", ability.as_str()));
        let probes = memlab_core::formats::read_probes_json(&path).unwrap();
        assert_eq!(probes.len(), 2, "expected 2 probes for {ability}");
        for probe in &probes {
            probe.check(conversation.turns.len()).unwrap();
        }
        total += probes.len();
    }
    assert_eq!(total, 20);
    pass(
        6,
        "a fully-covered mini conversation yields 2 probes × 10 abilities = 20",
    );
}

#[test]
fn criterion_07_conversation_well_formedness() {
    let mut checked = 0;
    for (detectors_yes, seed_rng) in [(false, 7u64), (false, 8), (true, 7), (true, 9)] {
        let dir = tempfile::tempdir().unwrap();
        let extra = format!("seed_rng = {seed_rng}\n");
        let fixture = write_fixture(dir.path(), detectors_yes, false, &extra);
        let config = RunConfig::load(&fixture.config_path).unwrap();
        let conv_dir = commands::synthesize(&config, None, None, None).unwrap();
        let conversation = memlab_core::formats::read_conversation_jsonl(
            &conv_dir.join("conversation.jsonl"),
            "check",
            ConversationMeta {
                target_length: TargetLength::L128K,
                category: Category::General,
            },
            &CharEstimateTokenizer,
        )
        .unwrap();
        assert!(!conversation.turns.is_empty());
        let violations = validate_conversation(&conversation);
        assert!(violations.is_empty(), "violations: {violations:?}");
        checked += 1;
    }
    assert_eq!(checked, 4);
    pass(
        7,
        "100% of mini-preset synthesized conversations pass validation",
    );
}

#[test]
fn criterion_08_ablation_soundness() {
    // Filter scripted to reject every chunk so the filtered pad differs
    // from the full pad and the noise-filter toggle is observable.
    let script = MockScript::builder()
        .on(
            prompts::KV_EXTRACTION_MARKER,
            "topic: gardens\nSUMMARY: a summary",
        )
        .on(
            prompts::SCRATCH_NOTE_MARKER,
            "NOTES: a salient note about the garden",
        )
        .on(prompts::NOISE_FILTER_MARKER, "no")
        .catch_all("ok")
        .build()
        .unwrap();
    let gateway = mock_gateway(script);
    let mut engine = MemoryEngine::new(
        gateway,
        Arc::new(HashEmbedder::new(32)),
        Arc::new(CharEstimateTokenizer),
        OrchestratorConfig::default(),
    );
    let tok = CharEstimateTokenizer;
    for i in 0..3 {
        let pair = memlab_core::domain::ExchangePair {
            user_turn: memlab_core::domain::Turn::new(
                2 * i,
                memlab_core::domain::Role::User,
                format!("question {i}"),
                &tok,
            ),
            assistant_turn: memlab_core::domain::Turn::new(
                2 * i + 1,
                memlab_core::domain::Role::Assistant,
                format!("answer {i}"),
                &tok,
            ),
        };
        engine.ingest(&pair).unwrap();
    }

    let baseline = AblationConfig::default();
    let base_sections = engine.compose("q?", 5, baseline).unwrap().sections();
    let toggles: [(&str, AblationConfig); 4] = [
        (
            "episodic",
            AblationConfig {
                use_retrieval: false,
                ..baseline
            },
        ),
        (
            "scratchpad",
            AblationConfig {
                use_scratchpad: false,
                ..baseline
            },
        ),
        (
            "working",
            AblationConfig {
                use_working: false,
                ..baseline
            },
        ),
        (
            "scratchpad",
            AblationConfig {
                use_noise_filter: false,
                ..baseline
            },
        ),
    ];
    for (expected_section, ablation) in toggles {
        let sections = engine.compose("q?", 5, ablation).unwrap().sections();
        let diffs: Vec<&str> = base_sections
            .iter()
            .zip(&sections)
            .filter(|(a, b)| a.1 != b.1)
            .map(|(a, _)| a.0)
            .collect();
        assert_eq!(
            diffs,
            vec![expected_section],
            "flag for {expected_section} leaked"
        );
    }
    pass(
        8,
        "each ablation flag changes exactly one section of the rendered answer prompt",
    );
}

#[test]
fn criterion_09_end_to_end_determinism() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let fixture_a = write_fixture(dir_a.path(), false, false, "");
    let fixture_b = write_fixture(dir_b.path(), false, false, "");
    run_pipeline(&fixture_a);
    run_pipeline(&fixture_b);
    let snap_a = snapshot(&fixture_a.workspace);
    let snap_b = snapshot(&fixture_b.workspace);
    assert!(!snap_a.is_empty());
    assert_eq!(
        snap_a.iter().map(|(p, _)| p.as_str()).collect::<Vec<_>>(),
        snap_b.iter().map(|(p, _)| p.as_str()).collect::<Vec<_>>()
    );
    for ((path_a, bytes_a), (_, bytes_b)) in snap_a.iter().zip(&snap_b) {
        assert_eq!(bytes_a, bytes_b, "file {path_a} differs between runs");
    }
    pass(
        9,
        "two end-to-end runs produce byte-identical workspace contents",
    );
}

#[test]
fn criterion_10_wire_conformance() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = write_fixture(dir.path(), false, true, "");
    run_pipeline(&fixture);
    let wire_log = dir.path().join("wire.jsonl");
    let schema: serde_json::Value =
        serde_json::from_str(include_str!("fixtures/wire_schema.json")).unwrap();
    let content = std::fs::read_to_string(&wire_log).unwrap();
    let mut checked = 0;
    for line in content.lines().filter(|l| !l.trim().is_empty()) {
        let body: serde_json::Value = serde_json::from_str(line).unwrap();
        wire::validate_body(&body, &schema).unwrap_or_else(|e| panic!("invalid body: {e}\n{body}"));
        checked += 1;
    }
    assert!(checked >= 50, "only {checked} requests recorded");
    pass(
        10,
        "100% of recorded gateway requests validate against the wire schema fixture",
    );
}

#[test]
fn criterion_11_fixture_scoring() {
    let dir = tempfile::tempdir().unwrap();
    let probes_path = dir.path().join("ability_probes.json");
    std::fs::write(&probes_path, include_str!("fixtures/ability_probes.json")).unwrap();

    // Judge keyed on response-anchored substrings: 1 for the good answers,
    // catch-all 0 for everything else.
    let judge_script = serde_json::json!([
        {"match": "RESPONSE:\nBased on the provided chat", "response": "1"},
        {"match": "allocation is now $60,000", "response": "1"},
        {"match": "RESPONSE:\nTwo banks: Halkbank and Ziraat Bank.", "response": "1"},
        {"match": "RESPONSE:\nThere are 2 days between", "response": "1"},
        {"match": "*", "response": "0"}
    ]);
    std::fs::write(dir.path().join("judge.json"), judge_script.to_string()).unwrap();
    let config_path = dir.path().join("memlab.toml");
    std::fs::write(
        &config_path,
        r#"
[providers.judge]
kind = "mock"
model = "mock-judge"
script = "judge.json"
"#,
    )
    .unwrap();
    let config = RunConfig::load(&config_path).unwrap();

    let good = [
        ("abstention:0", "Based on the provided chat, there is no information related to the specific advice Manuel gave about property management companies."),
        ("knowledge_update:0", "My initial capital allocation is now $60,000."),
        ("multi_hop_reasoning:0", "Two banks: Halkbank and Ziraat Bank."),
        ("temporal_reasoning:0", "There are 2 days between the first property viewing and the last one, from March 25, 2024 till March 27, 2024."),
    ];
    let write_answers = |name: &str, response_for: &dyn Fn(&str) -> String| {
        let path = dir.path().join(name);
        let lines: Vec<String> = good
            .iter()
            .map(|(id, _)| {
                serde_json::json!({"probe_id": id, "response": response_for(id)}).to_string()
            })
            .collect();
        std::fs::write(&path, lines.join("\n")).unwrap();
        path
    };

    let good_answers = write_answers("good.jsonl", &|id: &str| {
        good.iter().find(|(g, _)| *g == id).unwrap().1.to_string()
    });
    let good_scores = dir.path().join("good_scores.jsonl");
    commands::evaluate(&config, &probes_path, &good_answers, Some(&good_scores)).unwrap();
    let scores = read_scores_jsonl(&good_scores).unwrap();
    assert_eq!(scores.len(), 4);
    for score in &scores {
        assert_eq!(score.score, 1.0, "{} did not score 1.0", score.probe_id);
    }

    let bad_answers = write_answers("bad.jsonl", &|_| "I do not recall.".to_string());
    let bad_scores = dir.path().join("bad_scores.jsonl");
    commands::evaluate(&config, &probes_path, &bad_answers, Some(&bad_scores)).unwrap();
    for score in read_scores_jsonl(&bad_scores).unwrap() {
        assert_eq!(score.score, 0.0, "{} did not score 0.0", score.probe_id);
    }
    pass(
        11,
        "reference probes score 1.0 on matching responses and 0.0 on empty ones",
    );
}

/// The probe material table stays aligned with the ten abilities.
#[test]
fn fixture_covers_every_ability() {
    let mut names: Vec<&str> = PROBES.iter().map(|(a, ..)| *a).collect();
    names.sort_unstable();
    let mut expected: Vec<&str> = MemoryAbility::ALL.iter().map(|a| a.as_str()).collect();
    expected.sort_unstable();
    assert_eq!(names, expected);
}

/// Spot-check: answers produced under ablation flags still evaluate, and
/// flag plumbing changes the composed prompt (full pipeline variant of the
/// structural check in criterion 8).
#[test]
fn ablated_answers_flow_through_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = write_fixture(dir.path(), false, false, "");
    let conv_dir = run_pipeline(&fixture);
    let config = RunConfig::load(&fixture.config_path).unwrap();
    let store = conv_dir.join("memory");
    let ablated = AnswerFlags {
        k: Some(3),
        z: Some(2),
        no_retrieval: true,
        no_scratchpad: false,
        no_working: false,
        no_filter: true,
        vanilla: false,
    };
    let out = conv_dir.join("ablated_answers.jsonl");
    commands::answer(
        &config,
        &store,
        None,
        Some(&conv_dir.join("probes")),
        &ablated,
        None,
        Some(&out),
    )
    .unwrap();
    let scores_out = conv_dir.join("ablated_scores.jsonl");
    commands::evaluate(&config, &conv_dir.join("probes"), &out, Some(&scores_out)).unwrap();
    assert_eq!(read_scores_jsonl(&scores_out).unwrap().len(), 20);
}

/// Guard for the conversation metadata used across fixtures.
#[test]
fn fixture_conversation_is_mini_general() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = write_fixture(dir.path(), false, false, "");
    let config = RunConfig::load(&fixture.config_path).unwrap();
    let conv_dir = commands::synthesize(&config, None, None, None).unwrap();
    let conversation: Conversation = memlab_core::formats::read_conversation_jsonl(
        &conv_dir.join("conversation.jsonl"),
        "garden",
        ConversationMeta {
            target_length: TargetLength::L128K,
            category: Category::General,
        },
        &CharEstimateTokenizer,
    )
    .unwrap();
    // mini preset: 2 sub-plans × 2 batches × 1 question, 2 turns each.
    assert_eq!(conversation.turns.len(), 8);
}
