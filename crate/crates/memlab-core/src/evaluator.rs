//! Scoring of system answers against probes.
//!
//! Nine abilities use nugget rubrics: an LLM judge marks each nugget
//! 0 / 0.5 / 1 and the probe score is the mean. Event ordering instead
//! aligns the response's event list against the reference order with an
//! LLM equivalence detector and scores the alignment with Kendall tau-b,
//! so both recall and order count. Unmatched reference events enter the
//! statistic as one tied block ranked after the last matched position.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{MemoryAbility, ProbeQuestion};
use crate::gateway::{CallKind, ChatMessage, Decision, Gateway, GatewayError};
use crate::prompts;
use crate::scratchpad::split_sentences;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("rank lists have different lengths: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("kendall tau-b is undefined: fewer than two items or all ranks tied in one list")]
    Degenerate,
    #[error("probe has an empty rubric")]
    EmptyRubric,
    #[error("event-ordering probe has no reference events")]
    MissingEvents,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
}

/// Judge outcome for one nugget. `flagged` marks an unparseable judge reply
/// scored as 0 rather than trusted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuggetVerdict {
    pub nugget_index: usize,
    pub verdict: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
}

/// Event-alignment record for event-ordering probes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Alignment {
    /// (reference index, response snippet position) pairs, reference order.
    pub matched: Vec<(usize, usize)>,
    pub unmatched_refs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictRecord {
    Nuggets(Vec<NuggetVerdict>),
    Alignment(Alignment),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeScore {
    pub probe_id: String,
    pub ability: MemoryAbility,
    pub score: f64,
    pub verdicts: VerdictRecord,
}

/// Judges one nugget against a response at temperature 0. An unparseable
/// judge reply scores 0 and is flagged, so adversarial output cannot
/// inflate scores.
pub fn judge_nugget(
    gateway: &Gateway,
    response: &str,
    nugget: &str,
    nugget_index: usize,
) -> Result<NuggetVerdict, EvalError> {
    let req = gateway.request(
        CallKind::Analysis,
        vec![ChatMessage::user(prompts::judge(response, nugget))],
    );
    match gateway.generate_verdict(&req) {
        Ok(verdict) => Ok(NuggetVerdict {
            nugget_index,
            verdict,
            flagged: false,
        }),
        Err(GatewayError::Unparseable(raw)) => {
            log::warn!("unparseable judge verdict for nugget {nugget_index}: {raw}");
            Ok(NuggetVerdict {
                nugget_index,
                verdict: 0.0,
                flagged: true,
            })
        }
        Err(err) => Err(err.into()),
    }
}

pub fn mean_verdict(verdicts: &[NuggetVerdict]) -> f64 {
    verdicts.iter().map(|v| v.verdict).sum::<f64>() / verdicts.len() as f64
}

/// Scores a nugget-rubric probe: the mean of all nugget verdicts.
pub fn score_response(
    gateway: &Gateway,
    probe_id: &str,
    response: &str,
    probe: &ProbeQuestion,
) -> Result<ProbeScore, EvalError> {
    if probe.rubric.is_empty() {
        return Err(EvalError::EmptyRubric);
    }
    let mut verdicts = Vec::with_capacity(probe.rubric.len());
    for (i, nugget) in probe.rubric.iter().enumerate() {
        verdicts.push(judge_nugget(gateway, response, &nugget.0, i)?);
    }
    Ok(ProbeScore {
        probe_id: probe_id.to_string(),
        ability: probe.ability,
        score: mean_verdict(&verdicts),
        verdicts: VerdictRecord::Nuggets(verdicts),
    })
}

/// Splits a response into candidate event snippets: bulleted or numbered
/// lines first, then inline enumerations like `1) ... 2) ...`, then
/// sentences as the fallback.
pub fn split_event_snippets(response: &str) -> Vec<String> {
    // Line-start bullets / numbering.
    let mut items: Vec<String> = Vec::new();
    for line in response.lines() {
        let trimmed = line.trim_start();
        if let Some(rest) = strip_bullet(trimmed) {
            items.push(rest.trim().trim_end_matches([',', ';']).to_string());
        } else if !trimmed.is_empty() {
            if let Some(last) = items.last_mut() {
                last.push(' ');
                last.push_str(trimmed);
            }
        }
    }
    if items.len() >= 2 {
        return items;
    }

    // Inline enumeration.
    let markers = inline_enumeration_spans(response);
    if markers.len() >= 2 {
        let mut out = Vec::new();
        for (i, (_, body_start)) in markers.iter().enumerate() {
            let end = if i + 1 < markers.len() {
                markers[i + 1].0
            } else {
                response.len()
            };
            let item = response[*body_start..end]
                .trim()
                .trim_end_matches([',', ';', '.'])
                .trim();
            if !item.is_empty() {
                out.push(item.to_string());
            }
        }
        if out.len() >= 2 {
            return out;
        }
    }

    // Sentence fallback.
    split_sentences(response)
        .into_iter()
        .map(|(s, e)| response[s..e].trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// `- item`, `* item`, `• item`, `3. item`, `3) item` at line start.
fn strip_bullet(line: &str) -> Option<&str> {
    if let Some(rest) = line.strip_prefix("- ").or_else(|| line.strip_prefix("* ")) {
        return Some(rest);
    }
    if let Some(rest) = line.strip_prefix("• ") {
        return Some(rest);
    }
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 && digits <= 3 {
        let rest = &line[digits..];
        if let Some(rest) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            if rest.starts_with(' ') {
                return Some(rest.trim_start());
            }
        }
    }
    None
}

/// Byte spans of inline `N)` / `N.` markers: (marker start, body start).
fn inline_enumeration_spans(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() && (i == 0 || !bytes[i - 1].is_ascii_alphanumeric()) {
            let start = i;
            let mut j = i;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            if j - start <= 3
                && j < bytes.len()
                && (bytes[j] == b')' || bytes[j] == b'.')
                && j + 1 < bytes.len()
                && bytes[j + 1] == b' '
            {
                spans.push((start, j + 2));
                i = j + 2;
                continue;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    spans
}

/// Greedy in-order alignment: for each reference event in order, the first
/// unconsumed response snippet judged equivalent is matched; every snippet
/// matches at most once.
pub fn align_events(
    gateway: &Gateway,
    response_text: &str,
    reference_events: &[String],
) -> Result<Alignment, EvalError> {
    let snippets = split_event_snippets(response_text);
    let mut consumed = vec![false; snippets.len()];
    let mut alignment = Alignment::default();
    for (ref_idx, reference) in reference_events.iter().enumerate() {
        let mut found = None;
        for (pos, snippet) in snippets.iter().enumerate() {
            if consumed[pos] {
                continue;
            }
            let req = gateway.request(
                CallKind::Analysis,
                vec![ChatMessage::user(prompts::equivalence(reference, snippet))],
            );
            if gateway.generate_decision(&req)? == Decision::Yes {
                found = Some(pos);
                break;
            }
        }
        match found {
            Some(pos) => {
                consumed[pos] = true;
                alignment.matched.push((ref_idx, pos));
            }
            None => alignment.unmatched_refs.push(ref_idx),
        }
    }
    Ok(alignment)
}

/// Kendall tau-b with tie correction:
/// `(C − D) / sqrt((C + D + Tx)(C + D + Ty))` where C/D count concordant and
/// discordant pairs and Tx/Ty count pairs tied in exactly one list.
/// Computed by the sort-and-count-inversions route.
pub fn kendall_tau_b(x_ranks: &[f64], y_ranks: &[f64]) -> Result<f64, EvalError> {
    if x_ranks.len() != y_ranks.len() {
        return Err(EvalError::LengthMismatch {
            x: x_ranks.len(),
            y: y_ranks.len(),
        });
    }
    let n = x_ranks.len();
    if n < 2 {
        return Err(EvalError::Degenerate);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        x_ranks[a]
            .total_cmp(&x_ranks[b])
            .then(y_ranks[a].total_cmp(&y_ranks[b]))
    });

    let pairs = |t: u64| t * (t - 1) / 2;
    let n0 = pairs(n as u64);

    // Tie pair counts: n1 over x groups, n2 over y groups, n3 over joint groups.
    let mut n1 = 0u64;
    let mut n3 = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && x_ranks[order[j]] == x_ranks[order[i]] {
            j += 1;
        }
        n1 += pairs((j - i) as u64);
        let mut k = i;
        while k < j {
            let mut m = k;
            while m < j && y_ranks[order[m]] == y_ranks[order[k]] {
                m += 1;
            }
            n3 += pairs((m - k) as u64);
            k = m;
        }
        i = j;
    }
    let mut y_sorted: Vec<f64> = y_ranks.to_vec();
    y_sorted.sort_by(f64::total_cmp);
    let mut n2 = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && y_sorted[j] == y_sorted[i] {
            j += 1;
        }
        n2 += pairs((j - i) as u64);
        i = j;
    }

    if n0 == n1 || n0 == n2 {
        return Err(EvalError::Degenerate);
    }

    // Discordant pairs: inversions of y in x-order (ties don't count).
    let mut y_in_x_order: Vec<f64> = order.iter().map(|&i| y_ranks[i]).collect();
    let discordant = count_inversions(&mut y_in_x_order);

    let numerator = n0 as i128 - n1 as i128 - n2 as i128 + n3 as i128 - 2 * discordant as i128;
    let denominator = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    Ok(numerator as f64 / denominator)
}

/// Counts strict inversions (a[i] > a[j] for i < j) via merge sort.
fn count_inversions(values: &mut [f64]) -> u64 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = values.split_at_mut(mid);
    let mut count = count_inversions(left) + count_inversions(right);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, 0);
    while i < left.len() && j < right.len() {
        if left[i] <= right[j] {
            merged.push(left[i]);
            i += 1;
        } else {
            count += (left.len() - i) as u64;
            merged.push(right[j]);
            j += 1;
        }
    }
    merged.extend_from_slice(&left[i..]);
    merged.extend_from_slice(&right[j..]);
    values.copy_from_slice(&merged);
    count
}

/// Scores an event-ordering probe. Reference ranks are 1..n; matched events
/// take their response positions; unmatched events all take the tied rank
/// `max matched position + 1`. Zero matches score 0.
pub fn score_event_ordering(
    gateway: &Gateway,
    probe_id: &str,
    response_text: &str,
    probe: &ProbeQuestion,
) -> Result<ProbeScore, EvalError> {
    let events = probe
        .events
        .as_ref()
        .filter(|e| !e.is_empty())
        .ok_or(EvalError::MissingEvents)?;
    let alignment = align_events(gateway, response_text, events)?;
    let score = event_ordering_score(events.len(), &alignment)?;
    Ok(ProbeScore {
        probe_id: probe_id.to_string(),
        ability: probe.ability,
        score,
        verdicts: VerdictRecord::Alignment(alignment),
    })
}

/// The tau-b value for an alignment under the tie-block rule.
pub fn event_ordering_score(n_refs: usize, alignment: &Alignment) -> Result<f64, EvalError> {
    if alignment.matched.is_empty() {
        return Ok(0.0);
    }
    if n_refs < 2 {
        // A single reference event cannot form a pair; full credit iff matched.
        return Ok(1.0);
    }
    let max_position = alignment
        .matched
        .iter()
        .map(|(_, pos)| *pos)
        .max()
        .expect("non-empty matched");
    let tie_rank = (max_position + 1) as f64;
    let mut y = vec![tie_rank; n_refs];
    for (ref_idx, pos) in &alignment.matched {
        y[*ref_idx] = *pos as f64;
    }
    let x: Vec<f64> = (1..=n_refs).map(|i| i as f64).collect();
    kendall_tau_b(&x, &y)
}

/// Per-ability mean over scored probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbilityReport {
    pub ability: MemoryAbility,
    pub mean: f64,
    pub count: usize,
}

/// One method's (model/configuration's) aggregated column.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    pub name: String,
    pub by_ability: BTreeMap<MemoryAbility, AbilityReport>,
}

impl MethodReport {
    /// Unweighted mean of the ability means, with a flag when some of the
    /// ten abilities are missing.
    pub fn average(&self) -> (Option<f64>, bool) {
        if self.by_ability.is_empty() {
            return (None, true);
        }
        let mean =
            self.by_ability.values().map(|r| r.mean).sum::<f64>() / self.by_ability.len() as f64;
        (Some(mean), self.by_ability.len() < MemoryAbility::ALL.len())
    }
}

/// Folds probe scores into one method column.
pub fn aggregate(name: impl Into<String>, scores: &[ProbeScore]) -> MethodReport {
    let mut sums: BTreeMap<MemoryAbility, (f64, usize)> = BTreeMap::new();
    for s in scores {
        let entry = sums.entry(s.ability).or_insert((0.0, 0));
        entry.0 += s.score;
        entry.1 += 1;
    }
    MethodReport {
        name: name.into(),
        by_ability: sums
            .into_iter()
            .map(|(ability, (sum, count))| {
                (
                    ability,
                    AbilityReport {
                        ability,
                        mean: sum / count as f64,
                        count,
                    },
                )
            })
            .collect(),
    }
}

/// Ability × method matrix with a trailing Average row. Missing cells render
/// blank and flag the method's average with a footnote.
pub struct ReportTable {
    pub methods: Vec<MethodReport>,
}

impl ReportTable {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Memory Ability |");
        for m in &self.methods {
            out.push_str(&format!(" {} |", m.name));
        }
        out.push('\n');
        out.push_str("| --- |");
        for _ in &self.methods {
            out.push_str(" --- |");
        }
        out.push('\n');
        for ability in MemoryAbility::ALL {
            out.push_str(&format!("| {} |", ability.display_name()));
            for m in &self.methods {
                match m.by_ability.get(&ability) {
                    Some(r) => out.push_str(&format!(" {:.3} |", r.mean)),
                    None => out.push_str("  |"),
                }
            }
            out.push('\n');
        }
        out.push_str("| **Average** |");
        let mut any_flag = false;
        for m in &self.methods {
            let (avg, flagged) = m.average();
            any_flag |= flagged;
            match avg {
                Some(v) if flagged => out.push_str(&format!(" {v:.3}* |")),
                Some(v) => out.push_str(&format!(" {v:.3} |")),
                None => out.push_str("  |"),
            }
        }
        out.push('\n');
        if any_flag {
            out.push_str("\n\\* average over the abilities present, not all ten.\n");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("Memory Ability");
        for m in &self.methods {
            out.push(',');
            out.push_str(&csv_escape(&m.name));
        }
        out.push('\n');
        for ability in MemoryAbility::ALL {
            out.push_str(ability.display_name());
            for m in &self.methods {
                out.push(',');
                if let Some(r) = m.by_ability.get(&ability) {
                    out.push_str(&format!("{:.3}", r.mean));
                }
            }
            out.push('\n');
        }
        out.push_str("Average");
        for m in &self.methods {
            out.push(',');
            if let (Some(v), _) = m.average() {
                out.push_str(&format!("{v:.3}"));
            }
        }
        out.push('\n');
        out
    }
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// One line of the answers file: `{"probe_id", "response"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub probe_id: String,
    pub response: String,
}

pub fn write_answers_jsonl(path: &Path, answers: &[AnswerRecord]) -> Result<(), EvalError> {
    write_jsonl(path, answers)
}

pub fn read_answers_jsonl(path: &Path) -> Result<Vec<AnswerRecord>, EvalError> {
    read_jsonl(path)
}

pub fn write_scores_jsonl(path: &Path, scores: &[ProbeScore]) -> Result<(), EvalError> {
    write_jsonl(path, scores)
}

pub fn read_scores_jsonl(path: &Path) -> Result<Vec<ProbeScore>, EvalError> {
    read_jsonl(path)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), EvalError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for record in records {
        writeln!(
            w,
            "{}",
            serde_json::to_string(record).expect("record serializes")
        )?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, EvalError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| EvalError::Parse(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}
