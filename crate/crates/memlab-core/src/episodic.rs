//! Long-term episodic index.
//!
//! After each exchange the model extracts entity–attribute keys and a
//! summary; those strings are embedded and stored as keys in an exact-scan
//! vector index, while the verbatim dialogue segment is kept as the value.
//! Retrieval embeds the query, scans every record by cosine, and returns the
//! top-k distinct segments.
//!
//! The index is exact, not approximate: at desk scale a full scan is cheap
//! and the retriever stays a swappable contract.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::ExchangePair;
use crate::embedding::{normalize, EmbeddingProvider};
use crate::gateway::{CallKind, Gateway, GatewayError};
use crate::prompts;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    #[serde(rename = "id")]
    pub record_id: u64,
    pub pair_index: usize,
    #[serde(rename = "key")]
    pub key_text: String,
    #[serde(rename = "value")]
    pub value_text: String,
    pub embedding: Vec<f32>,
}

#[derive(Debug, thiserror::Error)]
pub enum EpisodicError {
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed extraction output: {0}")]
    Malformed(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("snapshot io: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot parse: {0}")]
    Snapshot(String),
}

/// Append-only exact-cosine vector index.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    dimension: usize,
    records: Vec<MemoryRecord>,
    next_id: u64,
}

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    dimension: usize,
    count: usize,
}

impl VectorIndex {
    pub fn new(dimension: usize) -> Self {
        VectorIndex {
            dimension,
            records: Vec::new(),
            next_id: 0,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[MemoryRecord] {
        &self.records
    }

    /// Inserts a record, normalizing its embedding so cosine == dot product.
    pub fn insert(
        &mut self,
        pair_index: usize,
        key_text: impl Into<String>,
        value_text: impl Into<String>,
        mut embedding: Vec<f32>,
    ) -> Result<u64, EpisodicError> {
        if embedding.len() != self.dimension {
            return Err(EpisodicError::DimensionMismatch {
                expected: self.dimension,
                got: embedding.len(),
            });
        }
        normalize(&mut embedding);
        let record_id = self.next_id;
        self.next_id += 1;
        self.records.push(MemoryRecord {
            record_id,
            pair_index,
            key_text: key_text.into(),
            value_text: value_text.into(),
            embedding,
        });
        Ok(record_id)
    }

    /// Exact kNN over all records, deduplicated so at most one record per
    /// pair survives (the best-scoring one). Ties break by
    /// (score desc, pair_index asc, record_id asc). Returns ≤ k records.
    pub fn retrieve_embedded(
        &self,
        query: &[f32],
        k: usize,
    ) -> Result<Vec<(f64, &MemoryRecord)>, EpisodicError> {
        if k == 0 || self.records.is_empty() {
            return Ok(Vec::new());
        }
        let mut best: std::collections::HashMap<usize, (f64, &MemoryRecord)> =
            std::collections::HashMap::new();
        for record in &self.records {
            let score = cosine(query, &record.embedding)?;
            match best.get(&record.pair_index) {
                Some((s, r)) if *s > score || (*s == score && r.record_id < record.record_id) => {}
                _ => {
                    best.insert(record.pair_index, (score, record));
                }
            }
        }
        let mut ranked: Vec<(f64, &MemoryRecord)> = best.into_values().collect();
        ranked.sort_by(|(sa, ra), (sb, rb)| {
            sb.total_cmp(sa)
                .then(ra.pair_index.cmp(&rb.pair_index))
                .then(ra.record_id.cmp(&rb.record_id))
        });
        ranked.truncate(k);
        Ok(ranked)
    }

    /// Snapshot: one header line `{dimension, count}` then one record per line.
    pub fn save(&self, path: &Path) -> Result<(), EpisodicError> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        let header = SnapshotHeader {
            dimension: self.dimension,
            count: self.records.len(),
        };
        writeln!(
            w,
            "{}",
            serde_json::to_string(&header).expect("header serializes")
        )?;
        for record in &self.records {
            writeln!(
                w,
                "{}",
                serde_json::to_string(record).expect("record serializes")
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EpisodicError> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| EpisodicError::Snapshot("empty snapshot file".into()))??;
        let header: SnapshotHeader = serde_json::from_str(&header_line)
            .map_err(|e| EpisodicError::Snapshot(format!("bad header: {e}")))?;
        let mut records = Vec::with_capacity(header.count);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: MemoryRecord = serde_json::from_str(&line)
                .map_err(|e| EpisodicError::Snapshot(format!("bad record: {e}")))?;
            if record.embedding.len() != header.dimension {
                return Err(EpisodicError::DimensionMismatch {
                    expected: header.dimension,
                    got: record.embedding.len(),
                });
            }
            records.push(record);
        }
        if records.len() != header.count {
            return Err(EpisodicError::Snapshot(format!(
                "record count {} does not match header count {}",
                records.len(),
                header.count
            )));
        }
        let next_id = records.iter().map(|r| r.record_id + 1).max().unwrap_or(0);
        Ok(VectorIndex {
            dimension: header.dimension,
            records,
            next_id,
        })
    }
}

/// Cosine similarity of two equal-dimension vectors, accumulated in f64.
/// For unit vectors this is the dot product.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, EpisodicError> {
    if a.len() != b.len() {
        return Err(EpisodicError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum())
}

/// Parsed output of a key–value extraction call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvExtraction {
    pub pairs: Vec<(String, String)>,
    pub summary: String,
}

/// Parses `key: value` lines plus one `SUMMARY:` line. Well-formed lines are
/// kept, the rest discarded; it is an error only when nothing parses at all.
pub fn parse_kv_output(text: &str) -> Result<KvExtraction, EpisodicError> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut summary = String::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = strip_prefix_ci(line, "summary:") {
            summary = rest.trim().to_string();
            continue;
        }
        if let Some((key, value)) = line.split_once(':') {
            let key = key.trim();
            let value = value.trim();
            if !key.is_empty() && !value.is_empty() {
                // Deduplicate case-insensitively, keeping the first occurrence.
                if !pairs.iter().any(|(k, _)| k.eq_ignore_ascii_case(key)) {
                    pairs.push((key.to_string(), value.to_string()));
                }
            }
        }
    }
    if pairs.is_empty() && summary.is_empty() {
        return Err(EpisodicError::Malformed(format!(
            "no key: value lines and no summary in {:?}",
            text.lines().next().unwrap_or("")
        )));
    }
    Ok(KvExtraction { pairs, summary })
}

fn strip_prefix_ci<'a>(line: &'a str, prefix: &str) -> Option<&'a str> {
    if line.len() >= prefix.len() && line[..prefix.len()].eq_ignore_ascii_case(prefix) {
        Some(&line[prefix.len()..])
    } else {
        None
    }
}

/// Episodic memory: extraction + index + retrieval behind one handle.
pub struct EpisodicMemory {
    pub index: VectorIndex,
    embedder: Arc<dyn EmbeddingProvider>,
    gateway: Arc<Gateway>,
}

impl EpisodicMemory {
    pub fn new(embedder: Arc<dyn EmbeddingProvider>, gateway: Arc<Gateway>) -> Self {
        EpisodicMemory {
            index: VectorIndex::new(embedder.dimension()),
            embedder,
            gateway,
        }
    }

    pub fn with_index(
        index: VectorIndex,
        embedder: Arc<dyn EmbeddingProvider>,
        gateway: Arc<Gateway>,
    ) -> Self {
        EpisodicMemory {
            index,
            embedder,
            gateway,
        }
    }

    /// Extracts entity–attribute pairs and a summary for one exchange.
    pub fn extract_kv(&self, pair: &ExchangePair) -> Result<KvExtraction, EpisodicError> {
        let text = self
            .gateway
            .chat(CallKind::Analysis, &prompts::kv_extraction(pair))?;
        parse_kv_output(&text)
    }

    /// Indexes one exchange: one record per extracted key plus one for the
    /// summary, all sharing the pair's verbatim segment as value.
    pub fn index_pair(&mut self, pair: &ExchangePair) -> Result<Vec<u64>, EpisodicError> {
        let extraction = self.extract_kv(pair)?;
        let segment = pair.segment();
        let mut ids = Vec::new();
        for (key, value) in &extraction.pairs {
            let key_text = format!("{key}: {value}");
            let embedding = self.embedder.embed(&key_text);
            ids.push(
                self.index
                    .insert(pair.pair_index(), key_text, segment.clone(), embedding)?,
            );
        }
        if !extraction.summary.is_empty() {
            let embedding = self.embedder.embed(&extraction.summary);
            ids.push(self.index.insert(
                pair.pair_index(),
                extraction.summary.clone(),
                segment.clone(),
                embedding,
            )?);
        }
        Ok(ids)
    }

    /// Top-k distinct dialogue segments for a query, best first.
    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<String>, EpisodicError> {
        let query_vec = self.embedder.embed(query);
        Ok(self
            .index
            .retrieve_embedded(&query_vec, k)?
            .into_iter()
            .map(|(_, r)| r.value_text.clone())
            .collect())
    }
}
