//! The summarization network: shared embeddings, per-equation enrichment,
//! bidirectional LSTM encoding, attentive decoding with a pointer soft
//! switch, and the training loss. Ablation flags reduce it to a plain
//! pointer-generator or attention Seq2Seq.

mod block;
mod decoder;
mod lstm;
mod params;

pub use block::sinusoidal_pe;
pub use decoder::{combine_copy_distribution, feedback_id, DecState, StepOut, PROB_FLOOR};
pub use lstm::EncOut;
pub use params::{
    load_checkpoint, save_checkpoint, ParamStore, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use indexmap::IndexMap;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EquationSpan;
use crate::graph::{Graph, NodeId};
use crate::vocab::{EncodedExample, UNK};

/// Layer-normalization variance epsilon.
pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("token id {id} out of range (limit {limit})")]
    IdOutOfRange { id: usize, limit: usize },
    #[error("equation span {start}..{end} out of range for length {len}")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("source sequence is empty")]
    EmptySource,
    #[error("target has no supervised positions")]
    EmptyTarget,
    #[error("parameter {name}: {reason}")]
    ParamMismatch { name: String, reason: String },
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Architecture and regularization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub emb_dim: usize,
    /// Total across both directions (half per direction).
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
    pub vocab_cap: usize,
    pub enable_math_block: bool,
    pub enable_copy: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            emb_dim: 128,
            enc_hidden: 512,
            dec_hidden: 512,
            num_heads: 4,
            ffn_dim: 256,
            dropout: 0.3,
            vocab_cap: 50_000,
            enable_math_block: true,
            enable_copy: true,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::InvalidHyperparams(msg));
        if self.emb_dim == 0
            || self.enc_hidden == 0
            || self.dec_hidden == 0
            || self.num_heads == 0
            || self.ffn_dim == 0
            || self.vocab_cap == 0
        {
            return fail("all dimensions must be positive".into());
        }
        if !self.emb_dim.is_multiple_of(self.num_heads) {
            return fail(format!(
                "emb_dim {} not divisible by num_heads {}",
                self.emb_dim, self.num_heads
            ));
        }
        if !self.enc_hidden.is_multiple_of(2) {
            return fail(format!("enc_hidden {} must be even", self.enc_hidden));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

/// The model: hyperparameters plus named parameter tensors.
#[derive(Debug, Clone)]
pub struct MathSum {
    hp: Hyperparams,
    vocab_size: usize,
    store: ParamStore,
}

impl MathSum {
    /// Fresh model with per-tensor deterministic initialization. Tensor
    /// values depend only on `seed` and the tensor's name, so ablated
    /// configurations share the initialization of their common tensors.
    pub fn new(hp: Hyperparams, vocab_size: usize, seed: u64) -> Result<Self, ModelError> {
        hp.validate()?;
        if vocab_size < 4 {
            return Err(ModelError::InvalidHyperparams(format!(
                "vocab size {vocab_size} smaller than the specials"
            )));
        }
        let store = params::init_store(&hp, vocab_size, seed);
        Ok(MathSum {
            hp,
            vocab_size,
            store,
        })
    }

    /// Reassembles a model from loaded parts, validating the tensor
    /// inventory (names and shapes) against the hyperparameters.
    pub fn from_parts(
        hp: Hyperparams,
        vocab_size: usize,
        store: ParamStore,
    ) -> Result<Self, ModelError> {
        hp.validate()?;
        let inventory = params::inventory(&hp, vocab_size);
        if inventory.len() != store.len() {
            return Err(ModelError::ParamMismatch {
                name: "*".into(),
                reason: format!("expected {} tensors, found {}", inventory.len(), store.len()),
            });
        }
        for (name, rows, cols, _) in inventory {
            if !store.contains(&name) {
                return Err(ModelError::ParamMismatch {
                    name,
                    reason: "missing".into(),
                });
            }
            let got = store.get(&name).dim();
            if got != (rows, cols) {
                return Err(ModelError::ParamMismatch {
                    name,
                    reason: format!("shape {got:?}, expected ({rows}, {cols})"),
                });
            }
        }
        Ok(MathSum {
            hp,
            vocab_size,
            store,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ModelError> {
        params::save_checkpoint(path, &self.hp, self.vocab_size, &self.store)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ModelError> {
        let (hp, vocab_size, store) = params::load_checkpoint(path)?;
        MathSum::from_parts(hp, vocab_size, store)
    }

    pub fn hp(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Starts a forward pass. Pass a dropout RNG to enable training-mode
    /// dropout; `None` runs in evaluation mode.
    pub fn forward(&self, dropout_rng: Option<ChaCha20Rng>) -> ForwardPass<'_> {
        ForwardPass {
            model: self,
            graph: Graph::new(),
            bound: IndexMap::new(),
            rng: dropout_rng,
        }
    }

    /// Full teacher-forced pass over one example: per-step extended
    /// distributions, attentions, and the mean NLL.
    pub fn teacher_forced(
        &self,
        ex: &EncodedExample,
        src_spans: &[EquationSpan],
        dropout_rng: Option<ChaCha20Rng>,
    ) -> Result<TeacherForced<'_>, ModelError> {
        self.teacher_forced_inner(ex, src_spans, None, dropout_rng)
    }

    /// Teacher forcing with the source padded to `pad_to` tokens. PAD steps
    /// never enter the recurrence and their attention is masked to exact
    /// zero, so in evaluation mode the loss matches the unpadded pass.
    pub fn teacher_forced_padded(
        &self,
        ex: &EncodedExample,
        src_spans: &[EquationSpan],
        pad_to: usize,
        dropout_rng: Option<ChaCha20Rng>,
    ) -> Result<TeacherForced<'_>, ModelError> {
        self.teacher_forced_inner(ex, src_spans, Some(pad_to), dropout_rng)
    }

    fn teacher_forced_inner(
        &self,
        ex: &EncodedExample,
        src_spans: &[EquationSpan],
        pad_to: Option<usize>,
        dropout_rng: Option<ChaCha20Rng>,
    ) -> Result<TeacherForced<'_>, ModelError> {
        if ex.src_ids.is_empty() {
            return Err(ModelError::EmptySource);
        }
        if ex.tgt_ids.len() < 2 {
            return Err(ModelError::EmptyTarget);
        }
        let ext_size = ex.extended_size(self.vocab_size);
        for &gold in &ex.tgt_ext_ids {
            if gold >= ext_size {
                return Err(ModelError::IdOutOfRange {
                    id: gold,
                    limit: ext_size,
                });
            }
        }
        let src_len = ex.src_ids.len();
        let pad_len = pad_to.unwrap_or(src_len);
        assert!(pad_len >= src_len, "pad_to shorter than the source");

        let mut fp = self.forward(dropout_rng);
        let mut padded_ids = ex.src_ids.clone();
        padded_ids.resize(pad_len, crate::vocab::PAD);
        let emb = fp.embed(&padded_ids, self.vocab_size)?;
        let emb = fp.dropout(emb);
        let enriched = fp.enrich(emb, src_spans)?;
        // Skip-update masking: PAD rows are excluded from the recurrence,
        // zero-filled in the attention memory, and score-masked below.
        let (enc, src_ext_ids, mask) = if pad_len > src_len {
            let prefix = fp.graph.slice_rows(enriched, 0, src_len);
            let enc = fp.encode(prefix);
            let fill = fp.zeros(pad_len - src_len, self.hp.enc_hidden);
            let hidden = fp.graph.concat_rows(enc.hidden, fill);
            let mut ext = ex.src_ext_ids.clone();
            ext.resize(pad_len, crate::vocab::PAD);
            let mut m = Array2::zeros((1, pad_len));
            for j in src_len..pad_len {
                m[[0, j]] = -1e30;
            }
            (
                EncOut {
                    hidden,
                    h0: enc.h0,
                    c0: enc.c0,
                },
                ext,
                Some(m),
            )
        } else {
            (fp.encode(enriched), ex.src_ext_ids.clone(), None)
        };
        let ctx0 = fp.zeros(1, self.hp.enc_hidden);
        let mut state = DecState {
            h: enc.h0,
            c: enc.c0,
            ctx: ctx0,
        };
        let steps = ex.tgt_ids.len() - 1;
        let mut dists = Vec::with_capacity(steps);
        let mut attentions = Vec::with_capacity(steps);
        for t in 0..steps {
            let out = fp.decoder_step(
                ex.tgt_ids[t],
                &state,
                &enc,
                &src_ext_ids,
                ext_size,
                mask.as_ref(),
            )?;
            dists.push(out.dist);
            attentions.push(out.attention);
            state = out.state;
        }
        let loss = fp.nll_loss(&dists, &ex.tgt_ext_ids[1..]);
        Ok(TeacherForced {
            pass: fp,
            loss,
            dists,
            attentions,
        })
    }

    /// Scalar evaluation-mode loss for one example.
    pub fn example_loss(
        &self,
        ex: &EncodedExample,
        src_spans: &[EquationSpan],
    ) -> Result<f64, ModelError> {
        let tf = self.teacher_forced(ex, src_spans, None)?;
        Ok(tf.pass.graph.scalar(tf.loss))
    }

    /// Loss and parameter gradients for one example.
    pub fn example_grads(
        &self,
        ex: &EncodedExample,
        src_spans: &[EquationSpan],
        dropout_rng: Option<ChaCha20Rng>,
    ) -> Result<(f64, IndexMap<String, Array2<f64>>), ModelError> {
        let tf = self.teacher_forced(ex, src_spans, dropout_rng)?;
        let loss_value = tf.pass.graph.scalar(tf.loss);
        let mut grads = tf.pass.graph.backward(tf.loss);
        let mut by_name = IndexMap::new();
        for (name, &id) in &tf.pass.bound {
            if let Some(g) = grads.take(id) {
                by_name.insert(name.clone(), g);
            }
        }
        Ok((loss_value, by_name))
    }

    /// Encodes a source once for incremental decoding.
    pub fn start_inference(
        &self,
        src_ids: &[usize],
        src_ext_ids: &[usize],
        src_spans: &[EquationSpan],
        oov_count: usize,
    ) -> Result<InferenceSession<'_>, ModelError> {
        if src_ids.is_empty() {
            return Err(ModelError::EmptySource);
        }
        assert_eq!(src_ids.len(), src_ext_ids.len(), "parallel id tracks");
        let mut fp = self.forward(None);
        let emb = fp.embed(src_ids, self.vocab_size)?;
        let enriched = fp.enrich(emb, src_spans)?;
        let enc = fp.encode(enriched);
        Ok(InferenceSession {
            model: self,
            enc_hidden: fp.graph.value(enc.hidden).clone(),
            h0: fp.graph.value(enc.h0).clone(),
            c0: fp.graph.value(enc.c0).clone(),
            src_ext_ids: src_ext_ids.to_vec(),
            ext_size: self.vocab_size + oov_count,
        })
    }
}

/// One in-flight forward computation: a tape plus the parameters bound into
/// it so far.
pub struct ForwardPass<'m> {
    pub(crate) model: &'m MathSum,
    pub graph: Graph,
    bound: IndexMap<String, NodeId>,
    rng: Option<ChaCha20Rng>,
}

impl ForwardPass<'_> {
    /// Binds a parameter tensor into the graph (once; reuses the node).
    pub fn param(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.bound.get(name) {
            return id;
        }
        let id = self.graph.leaf(self.model.store.get(name).clone(), true);
        self.bound.insert(name.to_string(), id);
        id
    }

    /// `x @ w + b` with named parameters.
    pub(crate) fn affine_row(&mut self, x: NodeId, w_name: &str, b_name: &str) -> NodeId {
        let w = self.param(w_name);
        let b = self.param(b_name);
        let xw = self.graph.matmul(x, w);
        self.graph.add_row(xw, b)
    }

    pub(crate) fn zeros(&mut self, rows: usize, cols: usize) -> NodeId {
        self.graph.constant(Array2::zeros((rows, cols)))
    }

    /// Inverted dropout in training mode; identity in evaluation mode.
    pub(crate) fn dropout(&mut self, x: NodeId) -> NodeId {
        let p = self.model.hp.dropout;
        let Some(rng) = self.rng.as_mut() else {
            return x;
        };
        if p == 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let dim = self.graph.value(x).dim();
        let mask = Array2::from_shape_fn(dim, |_| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        self.graph.mul_const(x, mask)
    }

    /// Embedding lookup. Ids at or above the base vocabulary (extended copy
    /// ids) embed as UNK; ids at or above `ext_limit` are an error.
    pub fn embed(&mut self, ids: &[usize], ext_limit: usize) -> Result<NodeId, ModelError> {
        let vocab_size = self.model.vocab_size;
        let mut mapped = Vec::with_capacity(ids.len());
        for &id in ids {
            if id >= ext_limit.max(vocab_size) {
                return Err(ModelError::IdOutOfRange {
                    id,
                    limit: ext_limit.max(vocab_size),
                });
            }
            mapped.push(if id < vocab_size { id } else { UNK });
        }
        let table = self.param("embed.table");
        Ok(self.graph.gather_rows(table, &mapped))
    }
}

/// Outputs of a teacher-forced pass; the tape is kept alive for backward.
pub struct TeacherForced<'m> {
    pub pass: ForwardPass<'m>,
    pub loss: NodeId,
    pub dists: Vec<NodeId>,
    pub attentions: Vec<NodeId>,
}

/// Frozen encoder outputs for step-by-step decoding.
pub struct InferenceSession<'m> {
    model: &'m MathSum,
    enc_hidden: Array2<f64>,
    h0: Array2<f64>,
    c0: Array2<f64>,
    src_ext_ids: Vec<usize>,
    ext_size: usize,
}

/// Decoder state between inference steps.
#[derive(Debug, Clone)]
pub struct InferState {
    h: Array2<f64>,
    c: Array2<f64>,
    ctx: Array2<f64>,
}

/// Values produced by one inference step.
pub struct InferStep {
    /// Extended-vocabulary distribution.
    pub probs: Vec<f64>,
    /// Attention over source positions.
    pub attention: Vec<f64>,
    pub state: InferState,
}

impl InferenceSession<'_> {
    pub fn initial_state(&self) -> InferState {
        InferState {
            h: self.h0.clone(),
            c: self.c0.clone(),
            ctx: Array2::zeros((1, self.model.hp.enc_hidden)),
        }
    }

    pub fn ext_size(&self) -> usize {
        self.ext_size
    }

    pub fn vocab_size(&self) -> usize {
        self.model.vocab_size
    }

    pub fn src_len(&self) -> usize {
        self.src_ext_ids.len()
    }

    /// Runs one decoder step. `prev_id` may be an extended id; it embeds as
    /// UNK per the feedback rule.
    pub fn step(&self, prev_id: usize, state: &InferState) -> Result<InferStep, ModelError> {
        let mut fp = self.model.forward(None);
        let hidden = fp.graph.constant(self.enc_hidden.clone());
        let dec_state = DecState {
            h: fp.graph.constant(state.h.clone()),
            c: fp.graph.constant(state.c.clone()),
            ctx: fp.graph.constant(state.ctx.clone()),
        };
        let enc = EncOut {
            hidden,
            h0: dec_state.h,
            c0: dec_state.c,
        };
        let out = fp.decoder_step(
            feedback_id(prev_id, self.model.vocab_size),
            &dec_state,
            &enc,
            &self.src_ext_ids,
            self.ext_size,
            None,
        )?;
        Ok(InferStep {
            probs: fp.graph.value(out.dist).row(0).to_vec(),
            attention: fp.graph.value(out.attention).row(0).to_vec(),
            state: InferState {
                h: fp.graph.value(out.state.h).clone(),
                c: fp.graph.value(out.state.c).clone(),
                ctx: fp.graph.value(out.state.ctx).clone(),
            },
        })
    }
}
