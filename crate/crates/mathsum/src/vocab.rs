//! Shared text+math vocabulary, encoding with per-example extended ids for
//! the copy mechanism, and the TSV on-disk format.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::corpus::TokenizedPair;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;

/// Surfaces of the four reserved ids, in id order.
pub const SPECIAL_SURFACES: [&str; 4] = ["<pad>", "<unk>", "<bos>", "<eos>"];

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("id {id} out of range (vocabulary {vocab_size} + {oov_len} example OOVs)")]
    IdOutOfRange {
        id: usize,
        vocab_size: usize,
        oov_len: usize,
    },
    #[error("{path}:{line}: invalid vocabulary file: {reason}")]
    InvalidFile {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Bidirectional surface/id table shared by both sides and both token kinds.
/// The equation markers are ordinary entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    surface_of: Vec<String>,
    id_of: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_surfaces(surfaces: Vec<String>) -> Self {
        let id_of = surfaces
            .iter()
            .enumerate()
            .map(|(id, s)| (s.clone(), id))
            .collect();
        Vocabulary {
            surface_of: surfaces,
            id_of,
        }
    }

    /// Total number of entries, specials included.
    pub fn size(&self) -> usize {
        self.surface_of.len()
    }

    pub fn id(&self, surface: &str) -> Option<usize> {
        self.id_of.get(surface).copied()
    }

    /// Id of `surface`, or [`UNK`].
    pub fn id_or_unk(&self, surface: &str) -> usize {
        self.id(surface).unwrap_or(UNK)
    }

    pub fn surface(&self, id: usize) -> Option<&str> {
        self.surface_of.get(id).map(String::as_str)
    }

    /// Encodes one pair. Source OOVs get stable extended ids
    /// `size() + index-in-oov_list`; the target gets BOS/EOS wrapping and may
    /// reference source OOVs in its extended ids (UNK when uncopyable).
    pub fn encode(&self, pair: &TokenizedPair) -> EncodedExample {
        let mut oov_list: Vec<String> = Vec::new();
        let mut src_ids = Vec::with_capacity(pair.source.len());
        let mut src_ext_ids = Vec::with_capacity(pair.source.len());
        for tok in &pair.source {
            match self.id(&tok.surface) {
                Some(id) => {
                    src_ids.push(id);
                    src_ext_ids.push(id);
                }
                None => {
                    let oov_idx = oov_list
                        .iter()
                        .position(|s| *s == tok.surface)
                        .unwrap_or_else(|| {
                            oov_list.push(tok.surface.clone());
                            oov_list.len() - 1
                        });
                    src_ids.push(UNK);
                    src_ext_ids.push(self.size() + oov_idx);
                }
            }
        }
        let mut tgt_ids = vec![BOS];
        let mut tgt_ext_ids = vec![BOS];
        for tok in &pair.target {
            match self.id(&tok.surface) {
                Some(id) => {
                    tgt_ids.push(id);
                    tgt_ext_ids.push(id);
                }
                None => {
                    tgt_ids.push(UNK);
                    let ext = oov_list
                        .iter()
                        .position(|s| *s == tok.surface)
                        .map_or(UNK, |idx| self.size() + idx);
                    tgt_ext_ids.push(ext);
                }
            }
        }
        tgt_ids.push(EOS);
        tgt_ext_ids.push(EOS);
        EncodedExample {
            src_ids,
            src_ext_ids,
            tgt_ids,
            tgt_ext_ids,
            oov_list,
        }
    }

    /// Resolves ids back to surfaces, stopping at the first EOS. Ids at or
    /// above `size()` index into `oov_list`.
    pub fn decode_ids(&self, ids: &[usize], oov_list: &[String]) -> Result<Vec<String>, VocabError> {
        let mut out = Vec::new();
        for &id in ids {
            if id == EOS {
                break;
            }
            let surface = if id < self.size() {
                self.surface_of[id].clone()
            } else {
                oov_list
                    .get(id - self.size())
                    .cloned()
                    .ok_or(VocabError::IdOutOfRange {
                        id,
                        vocab_size: self.size(),
                        oov_len: oov_list.len(),
                    })?
            };
            out.push(surface);
        }
        Ok(out)
    }

    /// Serializes as "surface<TAB>id" lines, specials first, ids ascending.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, surface) in self.surface_of.iter().enumerate() {
            out.push_str(surface);
            out.push('\t');
            out.push_str(&id.to_string());
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), VocabError> {
        fs::write(path, self.to_tsv()).map_err(|source| VocabError::File {
            path: path.display().to_string(),
            source,
        })
    }

    /// Loads and validates a TSV vocabulary: contiguous ids from 0, the four
    /// specials in place, and no duplicate surfaces.
    pub fn load(path: &Path) -> Result<Self, VocabError> {
        let text = fs::read_to_string(path).map_err(|source| VocabError::File {
            path: path.display().to_string(),
            source,
        })?;
        let invalid = |line: usize, reason: String| VocabError::InvalidFile {
            path: path.display().to_string(),
            line,
            reason,
        };
        let mut surfaces = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let (surface, id_str) = line
                .split_once('\t')
                .ok_or_else(|| invalid(lineno, "expected surface<TAB>id".into()))?;
            let id: usize = id_str
                .parse()
                .map_err(|_| invalid(lineno, format!("bad id {id_str:?}")))?;
            if id != idx {
                return Err(invalid(lineno, format!("id {id} out of order, expected {idx}")));
            }
            if surface.is_empty() {
                return Err(invalid(lineno, "empty surface".into()));
            }
            surfaces.push(surface.to_string());
        }
        for (id, expected) in SPECIAL_SURFACES.iter().enumerate() {
            if surfaces.get(id).map(String::as_str) != Some(*expected) {
                return Err(invalid(id + 1, format!("special id {id} must be {expected:?}")));
            }
        }
        let vocab = Vocabulary::from_surfaces(surfaces);
        if vocab.id_of.len() != vocab.surface_of.len() {
            return Err(invalid(0, "duplicate surface breaks the bijection".into()));
        }
        Ok(vocab)
    }
}

/// One pair in id space, with the per-example extended (copy) id space.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub src_ids: Vec<usize>,
    /// Like `src_ids` but OOV positions carry `vocab_size + oov_index`.
    pub src_ext_ids: Vec<usize>,
    /// BOS ... EOS.
    pub tgt_ids: Vec<usize>,
    /// BOS ... EOS; OOV targets use an extended id only when copyable.
    pub tgt_ext_ids: Vec<usize>,
    /// Distinct source OOV surfaces in first-occurrence order.
    pub oov_list: Vec<String>,
}

impl EncodedExample {
    /// Size of this example's extended distribution given the base vocabulary.
    pub fn extended_size(&self, vocab_size: usize) -> usize {
        vocab_size + self.oov_list.len()
    }
}

/// Builds the shared vocabulary from the most frequent surfaces across both
/// sides, ties broken lexicographically, capped at `max_size` plus specials.
pub fn build_vocab(pairs: &[TokenizedPair], max_size: usize) -> Result<Vocabulary, VocabError> {
    if pairs.is_empty() {
        return Err(VocabError::EmptyCorpus);
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for pair in pairs {
        for tok in pair.source.iter().chain(pair.target.iter()) {
            *counts.entry(tok.surface.as_str()).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|(s, _)| !SPECIAL_SURFACES.contains(s))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size);
    let mut surfaces: Vec<String> = SPECIAL_SURFACES.iter().map(|s| s.to_string()).collect();
    surfaces.extend(ranked.into_iter().map(|(s, _)| s.to_string()));
    Ok(Vocabulary::from_surfaces(surfaces))
}
