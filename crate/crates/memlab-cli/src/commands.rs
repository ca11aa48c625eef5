//! The six pipeline commands.
//!
//! Workspace layout, one directory per conversation:
//! `<workspace>/<id>/{conversation.jsonl, plan.json, checkpoint.json,
//! probes/, memory/, answers.jsonl, scores.jsonl, report.md}`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use memlab_core::domain::{
    group_exchanges, validate_conversation, Category, Conversation, ConversationMeta,
    MemoryAbility, ProbeQuestion, ReviewStatus, TargetLength,
};
use memlab_core::evaluator::{
    aggregate, read_answers_jsonl, read_scores_jsonl, score_event_ordering, score_response,
    write_answers_jsonl, write_scores_jsonl, AnswerRecord, MethodReport, ProbeScore, ReportTable,
};
use memlab_core::formats::{read_conversation_jsonl, read_probes_json, write_probes_json};
use memlab_core::gateway::WireRecorder;
use memlab_core::orchestrator::{AblationConfig, MemoryEngine, OrchestratorConfig};
use memlab_core::synthesis::{
    load_plan_file, probe::generate_probes_for_ability, propose_seed, PlanFile, SynthesisPipeline,
};
use memlab_core::token::CharEstimateTokenizer;

use crate::config::{ProviderRole, RunConfig};
use crate::CliError;

fn tokenizer() -> Arc<CharEstimateTokenizer> {
    Arc::new(CharEstimateTokenizer)
}

/// Maps `f` over `items` with at most `limit` worker threads, returning
/// results in input order.
fn parallel_map<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if limit <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<R>>> =
        items.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..limit.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                *slots[i].lock().expect("slot poisoned") = Some(f(&items[i]));
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("slot poisoned")
                .expect("slot filled")
        })
        .collect()
}

/// Shared wire recorder when the config asks for request recording; flushed
/// by [`flush_recorder`] at command end.
pub fn recorder_for(config: &RunConfig) -> Option<WireRecorder> {
    config.record_wire.as_ref().map(|_| WireRecorder::default())
}

pub fn flush_recorder(config: &RunConfig, recorder: Option<WireRecorder>) -> Result<(), CliError> {
    let (Some(path), Some(recorder)) = (&config.record_wire, recorder) else {
        return Ok(());
    };
    let bodies = recorder.lock().expect("recorder poisoned");
    let mut out = String::new();
    for body in bodies.iter() {
        out.push_str(&serde_json::to_string(body).expect("body serializes"));
        out.push('\n');
    }
    use std::io::Write;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("cannot open {}: {e}", path.display())))?;
    file.write_all(out.as_bytes())
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// `synthesize`: plan, questions, dialogue, checkpointed and resumable.
pub fn synthesize(
    config: &RunConfig,
    length: Option<&str>,
    category: Option<&str>,
    out: Option<&Path>,
) -> Result<PathBuf, CliError> {
    let recorder = recorder_for(config);
    let gateway = config.gateway(ProviderRole::Synthesis, recorder.clone())?;
    let synth_config = config.synthesis_config(length, category)?;

    let seed = match &config.synthesis.seed {
        Some(seed) => {
            if !seed.timeline.is_valid() || seed.subtopics.is_empty() {
                return Err(CliError::Config(
                    "[synthesis.seed] has an invalid timeline or no subtopics".into(),
                ));
            }
            seed.clone()
        }
        None => {
            let domain = config
                .synthesis
                .domain
                .as_deref()
                .unwrap_or("everyday assistance");
            propose_seed(&gateway, domain, synth_config.category)
                .map_err(|e| CliError::Runtime(e.into()))?
        }
    };
    let conversation_id = config
        .synthesis
        .conversation_id
        .clone()
        .unwrap_or_else(|| slugify(&seed.title));
    let workspace = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.workspace.clone());
    let conversation_dir = workspace.join(&conversation_id);

    let pipeline = SynthesisPipeline::new(gateway, tokenizer(), synth_config);
    let output = pipeline
        .run(seed, &conversation_id, &conversation_dir)
        .map_err(|e| CliError::Runtime(e.into()))?;

    let violations = validate_conversation(&output.conversation);
    if !violations.is_empty() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "synthesized conversation is ill-formed: {}",
            violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    println!(
        "synthesized {} turns over {} questions into {}",
        output.conversation.turns.len(),
        output.plan_file.alignments.len(),
        conversation_dir.display()
    );
    flush_recorder(config, recorder)?;
    Ok(conversation_dir)
}

fn slugify(title: &str) -> String {
    let slug: String = title
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { '-' })
        .collect();
    let trimmed = slug.trim_matches('-');
    let mut out = String::new();
    let mut last_dash = false;
    for c in trimmed.chars() {
        if c == '-' {
            if !last_dash {
                out.push(c);
            }
            last_dash = true;
        } else {
            out.push(c);
            last_dash = false;
        }
    }
    if out.is_empty() {
        "conversation".to_string()
    } else {
        out
    }
}

fn load_conversation(path: &Path) -> Result<Conversation, CliError> {
    // Turn-level structure is all downstream stages need; the metadata on
    // the in-memory value is nominal.
    let metadata = ConversationMeta {
        target_length: TargetLength::L128K,
        category: Category::General,
    };
    let id = path
        .parent()
        .and_then(Path::file_name)
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_else(|| "conversation".to_string());
    read_conversation_jsonl(path, id, metadata, &CharEstimateTokenizer)
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("cannot read conversation: {e}")))
}

/// `probe`: up to `cap` probes per requested ability, one JSON file each.
pub fn probe(
    config: &RunConfig,
    conversation_path: &Path,
    plan_path: &Path,
    ability: &str,
    cap: usize,
    out: Option<&Path>,
) -> Result<PathBuf, CliError> {
    let recorder = recorder_for(config);
    let gateway = config.gateway(ProviderRole::Synthesis, recorder.clone())?;
    let synth_config = config.synthesis_config(None, None)?;
    let conversation = load_conversation(conversation_path)?;
    let plan_file: PlanFile = load_plan_file(plan_path).map_err(|e| CliError::Runtime(e.into()))?;

    let abilities: Vec<MemoryAbility> = if ability == "all" {
        MemoryAbility::ALL.to_vec()
    } else {
        vec![ability.parse().map_err(|e: String| CliError::Config(e))?]
    };

    let probes_dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_sibling(conversation_path, "probes"));
    std::fs::create_dir_all(&probes_dir)
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("cannot create probes dir: {e}")))?;

    let mut total = 0;
    for ability in abilities {
        let probes = match generate_probes_for_ability(
            &gateway,
            &plan_file.plans,
            &plan_file.alignments,
            &conversation.turns,
            &synth_config,
            ability,
            cap,
        ) {
            Ok(probes) => probes,
            Err(memlab_core::synthesis::SynthesisError::EmptyCandidates(a)) => {
                log::warn!("no probe candidates for {a}; skipping");
                continue;
            }
            Err(e) => return Err(CliError::Runtime(e.into())),
        };
        if probes.len() < cap {
            log::warn!(
                "only {} of {cap} probes generated for {ability}",
                probes.len()
            );
        }
        total += probes.len();
        let path = probes_dir.join(format!("{}.json", ability.as_str()));
        write_probes_json(&path, &probes).map_err(|e| CliError::Runtime(e.into()))?;
    }
    println!("wrote {total} probes into {}", probes_dir.display());
    flush_recorder(config, recorder)?;
    Ok(probes_dir)
}

fn default_sibling(file: &Path, name: &str) -> PathBuf {
    file.parent().unwrap_or_else(|| Path::new(".")).join(name)
}

fn orchestrator_config(
    config: &RunConfig,
    k: Option<usize>,
    z: Option<usize>,
) -> OrchestratorConfig {
    OrchestratorConfig {
        z: z.unwrap_or(config.orchestrator.z),
        k: k.unwrap_or(config.orchestrator.k),
        ..OrchestratorConfig::default()
    }
}

/// `ingest`: builds the memory store from a conversation.
pub fn ingest(config: &RunConfig, conversation_path: &Path, store: &Path) -> Result<(), CliError> {
    let recorder = recorder_for(config);
    let gateway = config.gateway(ProviderRole::Answering, recorder.clone())?;
    let conversation = load_conversation(conversation_path)?;
    let pairs = group_exchanges(&conversation)
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("cannot pair conversation: {e}")))?;

    let mut engine = MemoryEngine::new(
        gateway,
        config.embedder(),
        tokenizer(),
        orchestrator_config(config, None, None),
    );
    for pair in &pairs {
        engine
            .ingest(pair)
            .map_err(|e| CliError::Runtime(e.into()))?;
    }
    engine
        .save(store)
        .map_err(|e| CliError::Runtime(e.into()))?;
    println!(
        "ingested {} pairs: {} index records, {}-token scratchpad, window of {}",
        pairs.len(),
        engine.index().len(),
        engine.pad().token_count,
        engine.working().len()
    );
    flush_recorder(config, recorder)?;
    Ok(())
}

pub struct AnswerFlags {
    pub k: Option<usize>,
    pub z: Option<usize>,
    pub no_retrieval: bool,
    pub no_scratchpad: bool,
    pub no_working: bool,
    pub no_filter: bool,
    pub vanilla: bool,
}

impl AnswerFlags {
    fn ablation(&self, base: AblationConfig) -> AblationConfig {
        AblationConfig {
            use_retrieval: base.use_retrieval && !self.no_retrieval,
            use_scratchpad: base.use_scratchpad && !self.no_scratchpad,
            use_working: base.use_working && !self.no_working,
            use_noise_filter: base.use_noise_filter && !self.no_filter,
        }
    }
}

/// `answer`: one ad-hoc question (printed) or a probes file/dir (answers JSONL).
pub fn answer(
    config: &RunConfig,
    store: &Path,
    question: Option<&str>,
    probes_path: Option<&Path>,
    flags: &AnswerFlags,
    conversation_path: Option<&Path>,
    out: Option<&Path>,
) -> Result<Option<PathBuf>, CliError> {
    let recorder = recorder_for(config);
    let gateway = config.gateway(ProviderRole::Answering, recorder.clone())?;
    let engine = MemoryEngine::load(
        store,
        gateway,
        config.embedder(),
        tokenizer(),
        orchestrator_config(config, flags.k, flags.z),
    )
    .map_err(|e| CliError::Runtime(e.into()))?;
    let ablation = flags.ablation(config.ablation());
    let k = flags.k.unwrap_or(config.orchestrator.k);

    let answer_one = |q: &str| -> Result<String, CliError> {
        if flags.vanilla {
            let conv_path = conversation_path.ok_or_else(|| {
                CliError::Config("--vanilla needs --conversation for the transcript".into())
            })?;
            let conversation = load_conversation(conv_path)?;
            engine
                .answer_vanilla(&conversation.turns, q)
                .map_err(|e| CliError::Runtime(e.into()))
        } else {
            engine
                .answer(q, k, ablation)
                .map_err(|e| CliError::Runtime(e.into()))
        }
    };

    match (question, probes_path) {
        (Some(q), None) => {
            println!("{}", answer_one(q)?);
            flush_recorder(config, recorder)?;
            Ok(None)
        }
        (None, Some(probes_path)) => {
            let probes = read_probe_files(probes_path)?;
            // answer() is read-only, so probes fan out under the parallelism limit.
            let answers: Vec<AnswerRecord> =
                parallel_map(&probes, config.parallelism, |(probe_id, probe)| {
                    answer_one(&probe.question).map(|response| AnswerRecord {
                        probe_id: probe_id.clone(),
                        response,
                    })
                })
                .into_iter()
                .collect::<Result<_, _>>()?;
            let out_path = out
                .map(Path::to_path_buf)
                .unwrap_or_else(|| default_sibling(store, "answers.jsonl"));
            write_answers_jsonl(&out_path, &answers).map_err(|e| CliError::Runtime(e.into()))?;
            println!("wrote {} answers to {}", answers.len(), out_path.display());
            flush_recorder(config, recorder)?;
            Ok(Some(out_path))
        }
        _ => Err(CliError::Config(
            "provide exactly one of --question or --probes".into(),
        )),
    }
}

/// Reads one probes JSON file or every `*.json` in a directory, assigning
/// stable ids `<ability>:<index within its ability in that file>`.
pub fn read_probe_files(path: &Path) -> Result<Vec<(String, ProbeQuestion)>, CliError> {
    let mut files = Vec::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| CliError::Runtime(anyhow::anyhow!("cannot read {}: {e}", path.display())))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        entries.sort();
        files.extend(entries);
    } else {
        files.push(path.to_path_buf());
    }
    let mut out = Vec::new();
    for file in files {
        let probes = read_probes_json(&file).map_err(|e| CliError::Runtime(e.into()))?;
        let mut per_ability: std::collections::BTreeMap<MemoryAbility, usize> = Default::default();
        for probe in probes {
            let n = per_ability.entry(probe.ability).or_insert(0);
            let id = format!("{}:{}", probe.ability.as_str(), n);
            *n += 1;
            out.push((id, probe));
        }
    }
    Ok(out)
}

/// `evaluate`: scores answers against probes; probes without answers are
/// skipped with a warning, rejected probes are excluded.
pub fn evaluate(
    config: &RunConfig,
    probes_path: &Path,
    answers_path: &Path,
    out: Option<&Path>,
) -> Result<PathBuf, CliError> {
    let recorder = recorder_for(config);
    let gateway = config.gateway(ProviderRole::Judge, recorder.clone())?;
    let probes = read_probe_files(probes_path)?;
    let answers = read_answers_jsonl(answers_path).map_err(|e| CliError::Runtime(e.into()))?;
    let by_id: std::collections::HashMap<&str, &str> = answers
        .iter()
        .map(|a| (a.probe_id.as_str(), a.response.as_str()))
        .collect();

    let scorable: Vec<(&String, &ProbeQuestion, &str)> = probes
        .iter()
        .filter(|(_, probe)| probe.review_status != ReviewStatus::Rejected)
        .filter_map(|(probe_id, probe)| match by_id.get(probe_id.as_str()) {
            Some(response) => Some((probe_id, probe, *response)),
            None => {
                log::warn!("no answer for {probe_id}; skipping");
                None
            }
        })
        .collect();
    // Probes score independently; fan out under the parallelism limit.
    let scores: Vec<ProbeScore> = parallel_map(
        &scorable,
        config.parallelism,
        |(probe_id, probe, response)| {
            if probe.ability == MemoryAbility::EventOrdering {
                score_event_ordering(&gateway, probe_id, response, probe)
            } else {
                score_response(&gateway, probe_id, response, probe)
            }
        },
    )
    .into_iter()
    .collect::<Result<Vec<_>, _>>()
    .map_err(|e| CliError::Runtime(e.into()))?;
    let out_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_sibling(answers_path, "scores.jsonl"));
    write_scores_jsonl(&out_path, &scores).map_err(|e| CliError::Runtime(e.into()))?;
    println!("wrote {} scores to {}", scores.len(), out_path.display());
    flush_recorder(config, recorder)?;
    Ok(out_path)
}

/// `report`: aggregates score files under a directory into an
/// ability × method table (CSV or markdown).
pub fn report(input: &Path, format: &str, out: Option<&Path>) -> Result<PathBuf, CliError> {
    if !matches!(format, "md" | "csv") {
        return Err(CliError::Config(format!(
            "unknown report format {format:?}"
        )));
    }
    let mut score_files: Vec<PathBuf> = Vec::new();
    if input.is_dir() {
        collect_score_files(input, &mut score_files).map_err(|e| {
            CliError::Runtime(anyhow::anyhow!("cannot scan {}: {e}", input.display()))
        })?;
        score_files.sort();
    } else {
        score_files.push(input.to_path_buf());
    }
    if score_files.is_empty() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "no scores.jsonl files under {}",
            input.display()
        )));
    }
    let mut methods: Vec<MethodReport> = Vec::new();
    for file in &score_files {
        let scores = read_scores_jsonl(file).map_err(|e| CliError::Runtime(e.into()))?;
        methods.push(aggregate(method_name(file), &scores));
    }
    let table = ReportTable { methods };
    let (rendered, extension) = match format {
        "md" => (table.to_markdown(), "md"),
        _ => (table.to_csv(), "csv"),
    };
    let out_path = out.map(Path::to_path_buf).unwrap_or_else(|| {
        let dir = if input.is_dir() {
            input
        } else {
            input.parent().unwrap_or(Path::new("."))
        };
        dir.join(format!("report.{extension}"))
    });
    std::fs::write(&out_path, rendered).map_err(|e| {
        CliError::Runtime(anyhow::anyhow!("cannot write {}: {e}", out_path.display()))
    })?;
    println!("wrote report to {}", out_path.display());
    Ok(out_path)
}

fn collect_score_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_score_files(&path, out)?;
        } else if path
            .file_name()
            .is_some_and(|n| n.to_string_lossy().ends_with("scores.jsonl"))
        {
            out.push(path);
        }
    }
    Ok(())
}

/// Column name for a score file: the file stem, or the parent directory for
/// a plain `scores.jsonl`.
fn method_name(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_default();
    if stem == "scores" {
        path.parent()
            .and_then(Path::file_name)
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or(stem)
    } else {
        stem.trim_end_matches(".scores").to_string()
    }
}
