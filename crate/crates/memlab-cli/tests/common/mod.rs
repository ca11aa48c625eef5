//! Shared test support: a complete scripted-mock fixture that carries a
//! mini synthesis run through probes, ingest, answering, evaluation, and
//! reporting, plus config writing and workspace snapshotting.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub const CONVERSATION_ID: &str = "garden";

fn entry(matcher: &str, response: &str) -> Value {
    json!({"match": matcher, "response": response})
}

const PLAN_JSON: &str = r#"{"sub_plans": [
  {"time_anchor": "2024-03-01", "bullets": [
    {"label": "Soil survey", "description": "commissioned a soil survey of the walled beds for 180 euros"},
    {"label": "Budget", "description": "set the season budget at 2000 euros"},
    {"label": "Arborist", "description": "hired arborist Rosa Marin to assess the old plum trees"},
    {"label": "Greenhouse", "description": "repaired the victorian greenhouse glazing"}]},
  {"time_anchor": "2024-05-01", "bullets": [
    {"label": "Planting", "description": "planted native hedgerows along the north wall"},
    {"label": "Budget check", "description": "reviewed spending against the revised budget"},
    {"label": "Pond", "description": "installed a small wildlife pond near the orchard"},
    {"label": "Fair", "description": "prepared stall plans for the june harvest fair"}]}
]}"#;

const AUGMENT_JSON: &str = r#"[
  {"kind": "contradiction", "label": "No contractors", "description": "claims to have never hired any outside specialist for the garden"},
  {"kind": "update", "label": "Budget update", "description": "raised the season budget from 2000 euros to 2600 euros"},
  {"kind": "instruction", "label": "List format", "description": "asked that plant suggestions always be given as a bulleted list"}
]"#;

/// Scripted dialogue: (batch matcher, question, assistant reply).
const DIALOGUE: [(&str, &str, &str); 4] = [
    (
        "[bullet 0] Soil survey",
        "How should I read the soil survey results for the walled beds?",
        "The survey shows slightly acidic loam; add lime before spring planting.",
    ),
    (
        "[bullet 2] Arborist",
        "What should I ask arborist Rosa Marin about the old plum trees?",
        "Ask Rosa Marin whether the plum trees need crown thinning this year.",
    ),
    (
        "[bullet 0] Planting",
        "Which native hedgerow species suit the north wall?",
        "Hawthorn and blackthorn establish quickly along a north wall.",
    ),
    (
        "[bullet 2] Pond",
        "How big should the wildlife pond near the orchard be?",
        "A pond of two by three metres suits the orchard corner.",
    ),
];

/// Per-ability probe material: (ability, selection JSON, generation JSON,
/// probe question, good answer, judge matcher).
pub const PROBES: [(&str, &str, &str, &str, &str, &str); 10] = [
    (
        "abstention",
        "",
        r#"{"question": "What did the landscape architect recommend for the east terrace?",
            "ideal_response": "Based on the provided chat, there is no information about recommendations for the east terrace.",
            "rubric": ["Based on the provided chat, there is no information about recommendations for the east terrace."]}"#,
        "What did the landscape architect recommend for the east terrace?",
        "Based on the provided chat, there is no information about recommendations for the east terrace.",
        "no information about recommendations for the east terrace",
    ),
    (
        "contradiction_resolution",
        r#"{"candidates": [{"bullet_refs": [[0,0,2],[0,0,4]]}, {"bullet_refs": [[0,1,2],[0,1,4]]}]}"#,
        r#"{"question": "Have I ever hired outside specialists for the garden?",
            "ideal_answer": "There is contradictory information: you hired arborist Rosa Marin, but you also said you never hired any outside specialist. Which statement is correct?",
            "rubric": ["Response should state: there is contradictory information",
                       "Response should mention: hired arborist Rosa Marin",
                       "Response should mention: never hired any outside specialist",
                       "Response should ask: which statement is correct"]}"#,
        "Have I ever hired outside specialists for the garden?",
        "I notice contradictory information: you hired arborist Rosa Marin, yet you also said you never hired any outside specialist. Which statement is correct?",
        "yet you also said you never hired",
    ),
    (
        "event_ordering",
        r#"{"candidates": [{"bullet_refs": [[0,0,0],[0,0,3],[0,1,0]]}, {"bullet_refs": [[0,0,2],[0,1,2],[0,1,3]]}]}"#,
        r#"{"question": "List the garden milestones in order.",
            "answer": "1) soil survey, 2) greenhouse repair, 3) hedgerow planting",
            "ordering_tested": ["soil survey", "greenhouse repair", "hedgerow planting"],
            "rubric": ["Response should mention: soil survey"]}"#,
        "List the garden milestones in order.",
        "1) soil survey, 2) greenhouse repair, 3) hedgerow planting",
        "",
    ),
    (
        "information_extraction",
        r#"{"candidates": [{"bullet_refs": [[0,0,0]]}, {"bullet_refs": [[0,0,2]]}]}"#,
        r#"{"question": "How much did the soil survey cost?",
            "ideal_answer": "180 euros",
            "rubric": ["Response should state: 180 euros"]}"#,
        "How much did the soil survey cost?",
        "The soil survey cost 180 euros.",
        "soil survey cost 180 euros",
    ),
    (
        "instruction_following",
        r#"{"candidates": [{"bullet_refs": [[0,0,6]]}, {"bullet_refs": [[0,1,6]]}]}"#,
        r#"{"question": "Which shrubs should I add near the pond?",
            "instruction_being_tested": "always give plant suggestions as a bulleted list",
            "expected_compliance": "Suggestions appear as a bulleted list.",
            "rubric": ["Response should contain: a bulleted list of shrubs"]}"#,
        "Which shrubs should I add near the pond?",
        "- viburnum\n- dogwood\n- elder",
        "- viburnum",
    ),
    (
        "knowledge_update",
        r#"{"candidates": [{"bullet_refs": [[0,0,1],[0,0,5]]}, {"bullet_refs": [[0,1,1],[0,1,5]]}]}"#,
        r#"{"question": "What is the current season budget for the garden?",
            "answer": "2600 euros",
            "rubric": ["Response should state: 2600 euros"]}"#,
        "What is the current season budget for the garden?",
        "The current season budget is 2600 euros.",
        "season budget is 2600 euros",
    ),
    (
        "multi_hop_reasoning",
        r#"{"candidates": [{"bullet_refs": [[0,0,1],[0,1,1]]}, {"bullet_refs": [[0,0,0],[0,1,2]]}]}"#,
        r#"{"question": "How many outside specialists did I bring in overall?",
            "answer": "Two: the soil surveyor and arborist Rosa Marin.",
            "rubric": ["Response should state: two specialists", "Response should mention: Rosa Marin"]}"#,
        "How many outside specialists did I bring in overall?",
        "You brought in two specialists overall: the surveyor and Rosa Marin.",
        "two specialists overall",
    ),
    (
        "preference_following",
        r#"{"candidates": [{"bullet_refs": [[0,0,2]]}, {"bullet_refs": [[0,1,0]]}]}"#,
        r#"{"question": "Suggest some shade plants for the north border.",
            "expected_compliance": "Plant suggestions formatted as a bulleted list.",
            "rubric": ["Response should contain: a bulleted list of plants"]}"#,
        "Suggest some shade plants for the north border.",
        "- hostas\n- ferns\n- hellebores",
        "- hostas",
    ),
    (
        "summarization",
        r#"{"candidates": [{"bullet_refs": [[0,0,0],[0,0,1],[0,1,1]]}, {"bullet_refs": [[0,0,3],[0,1,0],[0,1,3]]}]}"#,
        r#"{"question": "Summarize the garden project so far.",
            "ideal_summary": "The project began with a soil survey and a 2000 euro budget, continued with greenhouse repairs, and moved to hedgerow planting under a revised 2600 euro budget.",
            "rubric": ["Response should mention: soil survey", "Response should mention: revised 2600 euro budget"]}"#,
        "Summarize the garden project so far.",
        "The project began with a soil survey and a 2000 euro budget, then greenhouse repairs, then hedgerow planting under a revised 2600 euro budget.",
        "began with a soil survey",
    ),
    (
        "temporal_reasoning",
        r#"{"candidates": [{"bullet_refs": [[0,0,0],[0,1,0]]}, {"bullet_refs": [[0,0,3],[0,1,2]]}]}"#,
        r#"{"question": "How many weeks passed between the soil survey and the hedgerow planting?",
            "answer": "About nine weeks, from early March to early May.",
            "rubric": ["Response should state: about nine weeks"]}"#,
        "How many weeks passed between the soil survey and the hedgerow planting?",
        "About nine weeks passed between them.",
        "nine weeks passed",
    ),
];

fn narrative_lines() -> String {
    (0..15)
        .map(|i| format!("Thread {i}: an evolving aspect of the restoration"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The full mock script. With `detectors_yes` the question/follow-up
/// detectors always answer yes, exercising the δ bounds.
pub fn fixture_entries(detectors_yes: bool) -> Vec<Value> {
    let detector = if detectors_yes { "yes" } else { "no" };
    let mut entries = vec![
        entry(
            "Compose a third-person personality sketch",
            "Steady, practical, and fond of long-term projects.",
        ),
        entry(
            "Produce between 15 and 20 narrative lines",
            &narrative_lines(),
        ),
        entry(
            "Produce the conversation plan as a single JSON object.",
            PLAN_JSON,
        ),
        entry("Add exactly three special bullet points", AUGMENT_JSON),
    ];
    for (batch_matcher, question, _) in DIALOGUE {
        entries.push(entry(batch_matcher, &format!("[\"{question}\"]")));
    }
    for (_, question, reply) in DIALOGUE {
        entries.push(entry(&format!("USER MESSAGE:\n{question}"), reply));
    }
    entries.push(entry(
        "USER MESSAGE:\nHere are the details you asked for.",
        "Understood, continuing with the plan.",
    ));
    entries.push(entry(
        "USER MESSAGE:\nCould you expand on that?",
        "Certainly: here is more depth on the topic.",
    ));
    entries.push(entry(
        "Does the assistant message ask the user a question",
        detector,
    ));
    entries.push(entry(
        "Would the user naturally ask a clarifying follow-up",
        detector,
    ));
    entries.push(entry(
        "You are role-playing the user. Answer the assistant's question",
        "Here are the details you asked for.",
    ));
    entries.push(entry(
        "You are role-playing the user. Ask one clarifying or elaborative follow-up",
        "Could you expand on that?",
    ));
    entries.push(entry(
        "Extract key: value lines",
        "garden: heritage restoration project\nSUMMARY: progress on the garden restoration",
    ));
    entries.push(entry(
        "Record the salient notes",
        "NOTES: the garden project advanced; budget and specialists were discussed.",
    ));
    entries.push(entry(
        "Compress the notes below",
        "A compressed record of the garden project.",
    ));
    entries.push(entry("Decide whether the chunk is relevant", "yes"));
    for (ability, selection, generation, ..) in PROBES {
        if !selection.is_empty() {
            entries.push(entry(
                &format!("Select candidate bullet points for {ability} probes"),
                selection,
            ));
        }
        entries.push(entry(
            &format!("Write one {ability} probing question"),
            generation,
        ));
    }
    for (_, _, _, question, answer, _) in PROBES {
        entries.push(entry(&format!("QUESTION:\n{question}"), answer));
    }
    for event in ["soil survey", "greenhouse repair", "hedgerow planting"] {
        entries.push(entry(
            &format!("Event A:\n{event}\n\nEvent B:\n{event}"),
            "yes",
        ));
    }
    entries.push(entry(
        "Do snippets A and B describe the same event or topic?",
        "no",
    ));
    for (_, _, _, _, _, judge_matcher) in PROBES {
        if !judge_matcher.is_empty() {
            entries.push(entry(judge_matcher, "1"));
        }
    }
    entries.push(entry(
        "Decide whether the response satisfies the criterion.",
        "0",
    ));
    entries.push(entry("*", "ok"));
    entries
}

pub struct Fixture {
    pub config_path: PathBuf,
    pub workspace: PathBuf,
}

/// Writes script + config into `dir`. `record_wire` adds request recording;
/// `extra_synthesis` lines append to the `[synthesis]` section.
pub fn write_fixture(
    dir: &Path,
    detectors_yes: bool,
    record_wire: bool,
    extra_synthesis: &str,
) -> Fixture {
    let script_path = dir.join("script.json");
    std::fs::write(
        &script_path,
        serde_json::to_string_pretty(&fixture_entries(detectors_yes)).unwrap(),
    )
    .unwrap();
    let workspace = dir.join("workspace");
    let record = if record_wire {
        "record_wire = \"wire.jsonl\"\n"
    } else {
        ""
    };
    let seed_line = if extra_synthesis.contains("seed_rng") {
        ""
    } else {
        "seed_rng = 7\n"
    };
    let config = format!(
        r#"workspace = "{workspace}"
parallelism = 1
{record}
[providers.synthesis]
kind = "mock"
model = "mock-synth"
script = "script.json"

[providers.answering]
kind = "mock"
model = "mock-memory"
script = "script.json"

[providers.judge]
kind = "mock"
model = "mock-judge"
script = "script.json"

[embedder]
dimension = 64

[synthesis]
length = "mini"
category = "general"
conversation_id = "{id}"
{seed_line}{extra_synthesis}
[synthesis.seed]
domain = "gardening"
title = "Restoring a heritage garden"
theme = "a season of planning and planting"
subtopics = ["soil", "trees", "budget"]
timeline = {{ start = "2024-03-01", end = "2024-07-01" }}

[orchestrator]
k = 5
z = 5
"#,
        workspace = workspace.display(),
        id = CONVERSATION_ID,
    );
    let config_path = dir.join("memlab.toml");
    std::fs::write(&config_path, config).unwrap();
    Fixture {
        config_path,
        workspace,
    }
}

/// Every file under `dir` as (relative path, bytes), sorted, for
/// byte-identical comparisons.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                let rel = path
                    .strip_prefix(base)
                    .unwrap()
                    .to_string_lossy()
                    .to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out
}

/// Runs the whole pipeline against a fixture: synthesize → probe → ingest →
/// answer → evaluate → report. Returns the conversation directory.
pub fn run_pipeline(fixture: &Fixture) -> PathBuf {
    use memlab_cli::commands::{self, AnswerFlags};
    use memlab_cli::config::RunConfig;

    let config = RunConfig::load(&fixture.config_path).unwrap();
    let conv_dir = commands::synthesize(&config, None, None, None).unwrap();
    let conversation = conv_dir.join("conversation.jsonl");
    let plan = conv_dir.join("plan.json");
    let probes_dir = commands::probe(&config, &conversation, &plan, "all", 2, None).unwrap();
    let store = conv_dir.join("memory");
    commands::ingest(&config, &conversation, &store).unwrap();
    let flags = AnswerFlags {
        k: None,
        z: None,
        no_retrieval: false,
        no_scratchpad: false,
        no_working: false,
        no_filter: false,
        vanilla: false,
    };
    let answers = commands::answer(&config, &store, None, Some(&probes_dir), &flags, None, None)
        .unwrap()
        .expect("answers file");
    commands::evaluate(&config, &probes_dir, &answers, None).unwrap();
    commands::report(&conv_dir, "md", None).unwrap();
    commands::report(&conv_dir, "csv", Some(&conv_dir.join("report.csv"))).unwrap();
    conv_dir
}
