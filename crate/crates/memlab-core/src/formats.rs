//! File formats: conversation JSONL and probe JSON.
//!
//! Conversation lines are `{"idx": int, "role": "user"|"assistant",
//! "content": string}`. Probe files are JSON arrays of probe objects.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Conversation, ConversationMeta, ProbeQuestion, Role, Turn};
use crate::token::Tokenizer;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("parse error: {0}")]
    Json(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct TurnLine {
    idx: usize,
    role: Role,
    content: String,
}

/// Writes one turn per line.
pub fn write_conversation_jsonl(path: &Path, conv: &Conversation) -> Result<(), FormatError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for turn in &conv.turns {
        let line = TurnLine {
            idx: turn.index,
            role: turn.role,
            content: turn.content.clone(),
        };
        writeln!(
            w,
            "{}",
            serde_json::to_string(&line).expect("turn serializes")
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a conversation, recomputing token counts under `tok`.
pub fn read_conversation_jsonl(
    path: &Path,
    id: impl Into<String>,
    metadata: ConversationMeta,
    tok: &dyn Tokenizer,
) -> Result<Conversation, FormatError> {
    let file = std::fs::File::open(path)?;
    let mut conv = Conversation::new(id, metadata);
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TurnLine = serde_json::from_str(&line).map_err(|e| FormatError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        conv.turns
            .push(Turn::new(parsed.idx, parsed.role, parsed.content, tok));
    }
    Ok(conv)
}

pub fn write_probes_json(path: &Path, probes: &[ProbeQuestion]) -> Result<(), FormatError> {
    let json = serde_json::to_string_pretty(probes).expect("probes serialize");
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read_probes_json(path: &Path) -> Result<Vec<ProbeQuestion>, FormatError> {
    let content = std::fs::read_to_string(path)?;
    serde_json::from_str(&content).map_err(|e| FormatError::Json(e.to_string()))
}
