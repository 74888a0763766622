//! Line-oriented file formats: raw and tokenized pair JSONL, decode output
//! JSONL, and content hashing for run manifests.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{CorpusError, EquationSpan, RawPair, Token, TokenKind, TokenizedPair};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {source}")]
    Record {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}:{line}: {source}")]
    Invalid {
        path: String,
        line: usize,
        #[source]
        source: CorpusError,
    },
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.display().to_string(),
        source,
    }
}

/// Reads one serde-deserializable JSON object per non-empty line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = File::open(path).map_err(file_err(path))?;
    let mut items = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(file_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|source| IoError::Record {
            path: path.display().to_string(),
            line: idx + 1,
            source,
        })?;
        items.push(item);
    }
    Ok(items)
}

/// Writes one compact JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    let file = File::create(path).map_err(file_err(path))?;
    let mut out = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).expect("serializable record");
        writeln!(out, "{line}").map_err(file_err(path))?;
    }
    out.flush().map_err(file_err(path))
}

/// One tokenized pair as serialized: tokens are `[kind, surface]` arrays and
/// spans are `[start, end)` index pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenizedRecord {
    pub id: String,
    pub src: Vec<(TokenKind, String)>,
    pub tgt: Vec<(TokenKind, String)>,
    pub src_spans: Vec<(usize, usize)>,
    pub tgt_spans: Vec<(usize, usize)>,
}

fn to_wire(tokens: &[Token]) -> Vec<(TokenKind, String)> {
    tokens.iter().map(|t| (t.kind, t.surface.clone())).collect()
}

fn from_wire(tokens: Vec<(TokenKind, String)>) -> Vec<Token> {
    tokens
        .into_iter()
        .map(|(kind, surface)| Token::new(kind, surface))
        .collect()
}

impl From<&TokenizedPair> for TokenizedRecord {
    fn from(pair: &TokenizedPair) -> Self {
        let span = |s: &EquationSpan| (s.start, s.end);
        TokenizedRecord {
            id: pair.id.clone(),
            src: to_wire(&pair.source),
            tgt: to_wire(&pair.target),
            src_spans: pair.source_spans.iter().map(span).collect(),
            tgt_spans: pair.target_spans.iter().map(span).collect(),
        }
    }
}

impl From<TokenizedRecord> for TokenizedPair {
    fn from(rec: TokenizedRecord) -> Self {
        let span = |&(start, end): &(usize, usize)| EquationSpan { start, end };
        TokenizedPair {
            id: rec.id,
            source: from_wire(rec.src),
            target: from_wire(rec.tgt),
            source_spans: rec.src_spans.iter().map(span).collect(),
            target_spans: rec.tgt_spans.iter().map(span).collect(),
        }
    }
}

/// Reads raw (untokenized) pairs.
pub fn read_raw_pairs(path: &Path) -> Result<Vec<RawPair>, IoError> {
    read_jsonl(path)
}

/// Reads tokenized pairs, validating the span/marker invariants of each.
pub fn read_tokenized_pairs(path: &Path) -> Result<Vec<TokenizedPair>, IoError> {
    let records: Vec<TokenizedRecord> = read_jsonl(path)?;
    let mut pairs = Vec::with_capacity(records.len());
    for (idx, rec) in records.into_iter().enumerate() {
        let pair = TokenizedPair::from(rec);
        pair.validate().map_err(|source| IoError::Invalid {
            path: path.display().to_string(),
            line: idx + 1,
            source,
        })?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Writes tokenized pairs.
pub fn write_tokenized_pairs(path: &Path, pairs: &[TokenizedPair]) -> Result<(), IoError> {
    let records: Vec<TokenizedRecord> = pairs.iter().map(TokenizedRecord::from).collect();
    write_jsonl(path, &records)
}

/// One decoded (or baseline-selected) headline hypothesis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub id: String,
    /// Surface string with equation markers, tokens separated by spaces.
    pub hypothesis: String,
    pub log_prob: f64,
}

/// SHA-256 of a file's bytes as lowercase hex, for run manifests.
pub fn sha256_hex(path: &Path) -> Result<String, IoError> {
    let mut file = File::open(path).map_err(file_err(path))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 8192];
    loop {
        let n = file.read(&mut buf).map_err(file_err(path))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    Ok(hex)
}
