//! Corpus ingestion: tokenization of mixed text/math pairs, equation span
//! tracking, untokenizable-pair filtering, splits, and corpus statistics.

mod latex;
mod text;

pub use latex::tokenize_math;
pub use text::tokenize_text;

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opening equation marker inserted around every math region.
pub const MARKER_OPEN: &str = "<m>";
/// Closing equation marker.
pub const MARKER_CLOSE: &str = "</m>";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unlexable math character {found:?} at byte offset {offset}")]
    MathTokenize { found: char, offset: usize },
    #[error("unbalanced math delimiter {delimiter:?} in field {field:?}")]
    UnbalancedDelimiter { delimiter: String, field: String },
    #[error("field {field:?} is empty")]
    EmptyField { field: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid pair {id:?}: {reason}")]
    InvalidPair { id: String, reason: String },
    #[error("invalid split fractions: {0}")]
    InvalidSplit(String),
}

/// Lexical category of one token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Text,
    Math,
    Marker,
}

/// One lexical unit: a word/punctuation token, a math token, or an
/// equation marker.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub kind: TokenKind,
    pub surface: String,
}

impl Token {
    pub fn new(kind: TokenKind, surface: impl Into<String>) -> Self {
        Token {
            kind,
            surface: surface.into(),
        }
    }

    pub fn text(surface: impl Into<String>) -> Self {
        Token::new(TokenKind::Text, surface)
    }

    pub fn math(surface: impl Into<String>) -> Self {
        Token::new(TokenKind::Math, surface)
    }

    pub fn marker_open() -> Self {
        Token::new(TokenKind::Marker, MARKER_OPEN)
    }

    pub fn marker_close() -> Self {
        Token::new(TokenKind::Marker, MARKER_CLOSE)
    }
}

/// A raw question/headline pair before tokenization. Math is delimited by
/// `$$…$$` or `<m>…</m>` in both fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawPair {
    pub id: String,
    pub question: String,
    pub headline: String,
}

/// Half-open index range `[start, end)` over the math tokens of one equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquationSpan {
    pub start: usize,
    pub end: usize,
}

impl EquationSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn contains(&self, index: usize) -> bool {
        index >= self.start && index < self.end
    }
}

/// A tokenized question/headline pair with equation spans on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedPair {
    pub id: String,
    pub source: Vec<Token>,
    pub target: Vec<Token>,
    pub source_spans: Vec<EquationSpan>,
    pub target_spans: Vec<EquationSpan>,
}

impl TokenizedPair {
    /// Checks the structural invariants: spans are sorted, disjoint, within
    /// bounds, cover exactly the math tokens, and markers alternate.
    pub fn validate(&self) -> Result<(), CorpusError> {
        validate_side(&self.id, &self.source, &self.source_spans)?;
        validate_side(&self.id, &self.target, &self.target_spans)
    }

    pub fn source_surfaces(&self) -> Vec<&str> {
        self.source.iter().map(|t| t.surface.as_str()).collect()
    }

    pub fn target_surfaces(&self) -> Vec<&str> {
        self.target.iter().map(|t| t.surface.as_str()).collect()
    }
}

fn validate_side(
    id: &str,
    tokens: &[Token],
    spans: &[EquationSpan],
) -> Result<(), CorpusError> {
    let fail = |reason: String| CorpusError::InvalidPair {
        id: id.to_string(),
        reason,
    };
    let mut covered = vec![false; tokens.len()];
    let mut prev_end = 0usize;
    for span in spans {
        if span.is_empty() || span.end > tokens.len() {
            return Err(fail(format!("bad span {}..{}", span.start, span.end)));
        }
        if span.start < prev_end {
            return Err(fail("spans overlap or are unsorted".into()));
        }
        prev_end = span.end;
        for i in span.start..span.end {
            if tokens[i].kind != TokenKind::Math {
                return Err(fail(format!("span covers non-math token at {i}")));
            }
            covered[i] = true;
        }
    }
    let mut open = false;
    for (i, tok) in tokens.iter().enumerate() {
        if tok.kind == TokenKind::Math && !covered[i] {
            return Err(fail(format!("math token at {i} outside every span")));
        }
        if tok.kind == TokenKind::Marker {
            match tok.surface.as_str() {
                MARKER_OPEN if !open => open = true,
                MARKER_CLOSE if open => open = false,
                _ => return Err(fail(format!("marker imbalance at {i}"))),
            }
        }
        if tok.surface.is_empty() || tok.surface.chars().any(char::is_whitespace) {
            return Err(fail(format!("bad surface at {i}")));
        }
    }
    if open {
        return Err(fail("unclosed marker".into()));
    }
    Ok(())
}

/// Per-pair observations from parsing that do not affect the tokens, e.g.
/// lone `$` characters outside any recognized math region.
#[derive(Debug, Clone, Copy, Default)]
pub struct PairFlags {
    pub lone_dollars: usize,
}

enum Segment<'a> {
    Text(&'a str),
    Math(&'a str),
}

/// Splits a raw field into alternating text and math segments, recognizing
/// `$$…$$` and `<m>…</m>` regions.
fn segment_field<'a>(field_name: &str, s: &'a str) -> Result<Vec<Segment<'a>>, CorpusError> {
    let unbalanced = |delim: &str| CorpusError::UnbalancedDelimiter {
        delimiter: delim.to_string(),
        field: field_name.to_string(),
    };
    let mut segments = Vec::new();
    let mut rest = s;
    loop {
        let dollar = rest.find("$$");
        let marker = rest.find(MARKER_OPEN);
        let (at, opener, closer) = match (dollar, marker) {
            (None, None) => break,
            (Some(d), None) => (d, "$$", "$$"),
            (None, Some(m)) => (m, MARKER_OPEN, MARKER_CLOSE),
            (Some(d), Some(m)) if d < m => (d, "$$", "$$"),
            (_, Some(m)) => (m, MARKER_OPEN, MARKER_CLOSE),
        };
        if at > 0 {
            segments.push(Segment::Text(&rest[..at]));
        }
        let after_open = &rest[at + opener.len()..];
        let close_at = after_open.find(closer).ok_or_else(|| unbalanced(opener))?;
        segments.push(Segment::Math(&after_open[..close_at]));
        rest = &after_open[close_at + closer.len()..];
    }
    if !rest.is_empty() {
        segments.push(Segment::Text(rest));
    }
    // A close marker with no opener would otherwise pass through as text.
    for seg in &segments {
        if let Segment::Text(t) = seg {
            if t.contains(MARKER_CLOSE) {
                return Err(unbalanced(MARKER_CLOSE));
            }
        }
    }
    Ok(segments)
}

fn tokenize_field(
    field_name: &str,
    s: &str,
    flags: &mut PairFlags,
) -> Result<(Vec<Token>, Vec<EquationSpan>), CorpusError> {
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    for segment in segment_field(field_name, s)? {
        match segment {
            Segment::Text(t) => {
                flags.lone_dollars += t.matches('$').count();
                tokens.extend(tokenize_text(t));
            }
            Segment::Math(m) => {
                let math_tokens = tokenize_math(m)?;
                if math_tokens.is_empty() {
                    continue;
                }
                tokens.push(Token::marker_open());
                let start = tokens.len();
                tokens.extend(math_tokens);
                spans.push(EquationSpan {
                    start,
                    end: tokens.len(),
                });
                tokens.push(Token::marker_close());
            }
        }
    }
    Ok((tokens, spans))
}

/// Tokenizes one raw pair, replacing each math region with
/// `<m> … </m>` and recording the equation spans. Also reports parse flags
/// used by ingestion accounting.
pub fn build_pair_flagged(raw: &RawPair) -> Result<(TokenizedPair, PairFlags), CorpusError> {
    for (name, value) in [("question", &raw.question), ("headline", &raw.headline)] {
        if value.trim().is_empty() {
            return Err(CorpusError::EmptyField {
                field: name.to_string(),
            });
        }
    }
    let mut flags = PairFlags::default();
    let (source, source_spans) = tokenize_field("question", &raw.question, &mut flags)?;
    let (target, target_spans) = tokenize_field("headline", &raw.headline, &mut flags)?;
    let pair = TokenizedPair {
        id: raw.id.clone(),
        source,
        target,
        source_spans,
        target_spans,
    };
    Ok((pair, flags))
}

/// Tokenizes one raw pair. See [`build_pair_flagged`] for the variant that
/// also reports parse flags.
pub fn build_pair(raw: &RawPair) -> Result<TokenizedPair, CorpusError> {
    build_pair_flagged(raw).map(|(pair, _)| pair)
}

/// Counters from a full ingestion run, mirroring the collected-pairs vs
/// correct-pairs accounting of the dataset construction.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub total: usize,
    pub kept: usize,
    pub dropped_math_tokenize: usize,
    pub dropped_unbalanced: usize,
    pub dropped_invalid: usize,
    pub flagged_lone_dollar: usize,
}

/// Tokenizes a batch of raw pairs, dropping (and counting) the ones whose
/// math cannot be lexed or whose delimiters are unbalanced.
pub fn ingest(raw_pairs: &[RawPair]) -> (Vec<TokenizedPair>, IngestReport) {
    let mut report = IngestReport::default();
    let mut kept = Vec::new();
    for raw in raw_pairs {
        report.total += 1;
        match build_pair_flagged(raw) {
            Ok((pair, flags)) => {
                report.kept += 1;
                report.flagged_lone_dollar += flags.lone_dollars;
                kept.push(pair);
            }
            Err(CorpusError::MathTokenize { .. }) => report.dropped_math_tokenize += 1,
            Err(CorpusError::UnbalancedDelimiter { .. }) => report.dropped_unbalanced += 1,
            Err(_) => report.dropped_invalid += 1,
        }
    }
    (kept, report)
}

/// Splits a token sequence into sentences. Boundaries fall after the text
/// tokens `.`, `?`, `!`; math-internal punctuation never ends a sentence.
pub fn split_sentences(tokens: &[Token]) -> Vec<&[Token]> {
    let mut sentences = Vec::new();
    let mut start = 0;
    for (i, tok) in tokens.iter().enumerate() {
        if tok.kind == TokenKind::Text && matches!(tok.surface.as_str(), "." | "?" | "!") {
            sentences.push(&tokens[start..=i]);
            start = i + 1;
        }
    }
    if start < tokens.len() {
        sentences.push(&tokens[start..]);
    }
    sentences
}

/// Per-side aggregate statistics over a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideStats {
    pub avg_math_num: f64,
    pub avg_text_tokens: f64,
    pub avg_math_tokens: f64,
    pub avg_sent_num: f64,
    pub text_vocab_size: usize,
    pub math_vocab_size: usize,
}

/// Corpus statistics for the source (question) and target (headline) sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub pairs: usize,
    pub source: SideStats,
    pub target: SideStats,
}

fn side_stats<'a>(sides: impl Iterator<Item = (&'a [Token], &'a [EquationSpan])>) -> SideStats {
    let mut n = 0usize;
    let mut math_num = 0usize;
    let mut text_tokens = 0usize;
    let mut math_tokens = 0usize;
    let mut sent_num = 0usize;
    let mut text_vocab = HashSet::new();
    let mut math_vocab = HashSet::new();
    for (tokens, spans) in sides {
        n += 1;
        math_num += spans.len();
        sent_num += split_sentences(tokens).len();
        for tok in tokens {
            match tok.kind {
                TokenKind::Text => {
                    text_tokens += 1;
                    text_vocab.insert(tok.surface.clone());
                }
                TokenKind::Math => {
                    math_tokens += 1;
                    math_vocab.insert(tok.surface.clone());
                }
                TokenKind::Marker => {}
            }
        }
    }
    let denom = n.max(1) as f64;
    SideStats {
        avg_math_num: math_num as f64 / denom,
        avg_text_tokens: text_tokens as f64 / denom,
        avg_math_tokens: math_tokens as f64 / denom,
        avg_sent_num: sent_num as f64 / denom,
        text_vocab_size: text_vocab.len(),
        math_vocab_size: math_vocab.len(),
    }
}

/// Computes the per-side corpus statistics (means are over pairs; vocabulary
/// sizes count distinct surfaces per token kind).
pub fn corpus_stats(pairs: &[TokenizedPair]) -> Result<CorpusStats, CorpusError> {
    if pairs.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(CorpusStats {
        pairs: pairs.len(),
        source: side_stats(
            pairs
                .iter()
                .map(|p| (p.source.as_slice(), p.source_spans.as_slice())),
        ),
        target: side_stats(
            pairs
                .iter()
                .map(|p| (p.target.as_slice(), p.target_spans.as_slice())),
        ),
    })
}

/// Fraction of target n-grams (over surfaces, markers included) absent from
/// the paired source, averaged per pair. Targets shorter than `n` contribute
/// zero.
pub fn novel_ngram_proportion(pairs: &[TokenizedPair], n: usize) -> f64 {
    assert!(n >= 1, "n-gram order must be at least 1");
    if pairs.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for pair in pairs {
        let source = pair.source_surfaces();
        let target = pair.target_surfaces();
        if target.len() < n {
            continue; // contributes 0
        }
        let source_ngrams: HashSet<&[&str]> = source.windows(n).collect();
        let total = target.len() - n + 1;
        let novel = target
            .windows(n)
            .filter(|gram| !source_ngrams.contains(*gram))
            .count();
        sum += novel as f64 / total as f64;
    }
    sum / pairs.len() as f64
}

/// Fractions and seed for a deterministic train/validation/test split.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fracs = [self.train_frac, self.val_frac, self.test_frac];
        if fracs.iter().any(|f| *f <= 0.0) {
            return Err(CorpusError::InvalidSplit(
                "all fractions must be positive".into(),
            ));
        }
        let sum: f64 = fracs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidSplit(format!(
                "fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Deterministically shuffles and partitions a corpus. Partition sizes are
/// floor-based with the remainder assigned to train.
pub type CorpusSplit = (Vec<TokenizedPair>, Vec<TokenizedPair>, Vec<TokenizedPair>);

pub fn split_corpus(pairs: Vec<TokenizedPair>, spec: &SplitSpec) -> Result<CorpusSplit, CorpusError> {
    spec.validate()?;
    let n = pairs.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    indices.shuffle(&mut rng);

    let val_size = (spec.val_frac * n as f64).floor() as usize;
    let test_size = (spec.test_frac * n as f64).floor() as usize;
    let train_size = n - val_size - test_size;

    let mut shuffled: Vec<Option<TokenizedPair>> = pairs.into_iter().map(Some).collect();
    let mut take = |slots: &[usize]| -> Vec<TokenizedPair> {
        slots
            .iter()
            .map(|&i| shuffled[i].take().expect("each index used once"))
            .collect()
    };
    let train = take(&indices[..train_size]);
    let val = take(&indices[train_size..train_size + val_size]);
    let test = take(&indices[train_size + val_size..]);
    Ok((train, val, test))
}
