//! Parameter storage, deterministic per-name initialization, and the binary
//! checkpoint format.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Hyperparams, ModelError};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MSUM";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named parameter tensors in a stable insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    tensors: IndexMap<String, Array2<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            tensors: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: String, value: Array2<f64>) {
        let prev = self.tensors.insert(name.clone(), value);
        assert!(prev.is_none(), "duplicate parameter {name}");
    }

    pub fn get(&self, name: &str) -> &Array2<f64> {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Array2<f64> {
        self.tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Array2<f64>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> Vec<&str> {
        self.tensors.keys().map(String::as_str).collect()
    }

    /// Number of tensors.
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar element count across all tensors.
    pub fn element_count(&self) -> usize {
        self.tensors.values().map(Array2::len).sum()
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        ParamStore::new()
    }
}

#[derive(Debug, Clone, Copy)]
pub(super) enum Init {
    /// Uniform in (-limit, limit).
    Uniform(f64),
    /// Xavier-style uniform with limit sqrt(6 / (rows + cols)).
    Xavier,
    Zeros,
    Ones,
    /// LSTM bias: zeros with the forget-gate block (gate order i,f,g,o)
    /// initialized to one.
    LstmBias { hidden: usize },
}

/// Full tensor inventory for a configuration: (name, rows, cols, init).
/// Ablation flags control which tensors exist at all.
pub(super) fn inventory(hp: &Hyperparams, vocab_size: usize) -> Vec<(String, usize, usize, Init)> {
    let d = hp.emb_dim;
    let e = hp.enc_hidden;
    let hdir = e / 2;
    let dd = hp.dec_hidden;
    let a = hp.dec_hidden; // attention projection width
    let f = hp.ffn_dim;
    let xw = d + e; // decoder input: [embedding; previous context]
    let mut inv: Vec<(String, usize, usize, Init)> = Vec::new();
    let mut t = |name: &str, rows: usize, cols: usize, init: Init| {
        inv.push((name.to_string(), rows, cols, init));
    };
    t("embed.table", vocab_size, d, Init::Uniform(0.1));
    if hp.enable_math_block {
        for p in ["q", "k", "v", "o"] {
            t(&format!("block.w{p}"), d, d, Init::Xavier);
            t(&format!("block.b{p}"), 1, d, Init::Zeros);
        }
        t("block.ln1.gain", 1, d, Init::Ones);
        t("block.ln1.bias", 1, d, Init::Zeros);
        t("block.ffn.w1", d, f, Init::Xavier);
        t("block.ffn.b1", 1, f, Init::Zeros);
        t("block.ffn.w2", f, d, Init::Xavier);
        t("block.ffn.b2", 1, d, Init::Zeros);
        t("block.ln2.gain", 1, d, Init::Ones);
        t("block.ln2.bias", 1, d, Init::Zeros);
    }
    for dir in ["fwd", "bwd"] {
        t(&format!("enc.{dir}.wx"), d, 4 * hdir, Init::Xavier);
        t(&format!("enc.{dir}.wh"), hdir, 4 * hdir, Init::Xavier);
        t(&format!("enc.{dir}.b"), 1, 4 * hdir, Init::LstmBias { hidden: hdir });
    }
    t("bridge.wh", e, dd, Init::Xavier);
    t("bridge.bh", 1, dd, Init::Zeros);
    t("bridge.wc", e, dd, Init::Xavier);
    t("bridge.bc", 1, dd, Init::Zeros);
    t("dec.wx", xw, 4 * dd, Init::Xavier);
    t("dec.wh", dd, 4 * dd, Init::Xavier);
    t("dec.b", 1, 4 * dd, Init::LstmBias { hidden: dd });
    t("attn.w_enc", e, a, Init::Xavier);
    t("attn.w_dec", dd, a, Init::Xavier);
    t("attn.bias", 1, a, Init::Zeros);
    t("attn.v", a, 1, Init::Xavier);
    t("out.w", dd + e, vocab_size, Init::Xavier);
    t("out.b", 1, vocab_size, Init::Zeros);
    if hp.enable_copy {
        let cw = e + dd + xw; // [context; decoder state; decoder input]
        t("copy.w", cw, 1, Init::Xavier);
        t("copy.b", 1, 1, Init::Zeros);
    }
    inv
}

/// RNG for one tensor, derived from the master seed and the tensor name so
/// initial values do not depend on creation order or on which other tensors
/// exist (ablated configurations share initializations).
fn param_rng(seed: u64, name: &str) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(key)
}

pub(super) fn init_store(hp: &Hyperparams, vocab_size: usize, seed: u64) -> ParamStore {
    let mut store = ParamStore::new();
    for (name, rows, cols, init) in inventory(hp, vocab_size) {
        let mut rng = param_rng(seed, &name);
        let mut value = Array2::zeros((rows, cols));
        match init {
            Init::Uniform(limit) => {
                for i in 0..rows {
                    for j in 0..cols {
                        value[(i, j)] = rng.random_range(-limit..limit);
                    }
                }
            }
            Init::Xavier => {
                let limit = (6.0 / (rows + cols) as f64).sqrt();
                for i in 0..rows {
                    for j in 0..cols {
                        value[(i, j)] = rng.random_range(-limit..limit);
                    }
                }
            }
            Init::Zeros => {}
            Init::Ones => value.fill(1.0),
            Init::LstmBias { hidden } => {
                for j in hidden..2 * hidden {
                    value[(0, j)] = 1.0;
                }
            }
        }
        store.insert(name, value);
    }
    store
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    rows: usize,
    cols: usize,
    /// Byte offset into the data section.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    hyperparams: Hyperparams,
    vocab_size: usize,
    tensors: Vec<TensorMeta>,
}

/// Writes a checkpoint: `MSUM` magic, u32 LE version, u64 LE manifest
/// length, JSON manifest, then each tensor's elements row-major as
/// little-endian f32.
pub fn save_checkpoint(
    path: &Path,
    hp: &Hyperparams,
    vocab_size: usize,
    store: &ParamStore,
) -> Result<(), ModelError> {
    let mut tensors = Vec::new();
    let mut data: Vec<u8> = Vec::new();
    for (name, arr) in store.iter() {
        tensors.push(TensorMeta {
            name: name.to_string(),
            rows: arr.nrows(),
            cols: arr.ncols(),
            offset: data.len(),
        });
        for &v in arr.iter() {
            data.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let manifest = Manifest {
        hyperparams: hp.clone(),
        vocab_size,
        tensors,
    };
    let manifest_json = serde_json::to_vec(&manifest).expect("serializable manifest");
    let mut bytes = Vec::with_capacity(16 + manifest_json.len() + data.len());
    bytes.extend_from_slice(&CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&manifest_json);
    bytes.extend_from_slice(&data);
    fs::write(path, bytes).map_err(|source| ModelError::File {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a checkpoint back. Tensor values round-trip exactly at f32
/// precision.
pub fn load_checkpoint(path: &Path) -> Result<(Hyperparams, usize, ParamStore), ModelError> {
    let bytes = fs::read(path).map_err(|source| ModelError::File {
        path: path.display().to_string(),
        source,
    })?;
    let corrupt = |reason: &str| ModelError::Checkpoint {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    if bytes.len() < 16 {
        return Err(corrupt("truncated header"));
    }
    if bytes[..4] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let data_start = 16 + manifest_len;
    if bytes.len() < data_start {
        return Err(corrupt("truncated manifest"));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[16..data_start])
        .map_err(|e| corrupt(&format!("manifest parse: {e}")))?;
    let data = &bytes[data_start..];
    let mut store = ParamStore::new();
    for meta in &manifest.tensors {
        let n_bytes = meta.rows * meta.cols * 4;
        let end = meta
            .offset
            .checked_add(n_bytes)
            .ok_or_else(|| corrupt("tensor offset overflow"))?;
        if end > data.len() {
            return Err(corrupt(&format!("tensor {} out of bounds", meta.name)));
        }
        let mut value = Array2::zeros((meta.rows, meta.cols));
        let mut at = meta.offset;
        for i in 0..meta.rows {
            for j in 0..meta.cols {
                let raw: [u8; 4] = data[at..at + 4].try_into().expect("4 bytes");
                value[(i, j)] = f32::from_le_bytes(raw) as f64;
                at += 4;
            }
        }
        store.insert(meta.name.clone(), value);
    }
    Ok((manifest.hyperparams, manifest.vocab_size, store))
}
