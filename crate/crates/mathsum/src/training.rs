//! AdaGrad training with gradient clipping, length-bucketed batching,
//! validation-based checkpoint selection, and early stopping.

use std::io::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::EquationSpan;
use crate::model::{MathSum, ModelError, ParamStore};
use crate::vocab::EncodedExample;

/// Denominator guard inside the AdaGrad root.
pub const ADAGRAD_EPS: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch in optimizer update: param {param:?} vs grad {grad:?}")]
    ShapeMismatch {
        param: (usize, usize),
        grad: (usize, usize),
    },
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("training diverged at epoch {epoch}, batch {batch} (loss {loss})")]
    Divergence {
        epoch: usize,
        batch: usize,
        loss: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Optimizer and loop settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub adagrad_init_accum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub clip_norm: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.2,
            adagrad_init_accum: 0.1,
            batch_size: 16,
            max_epochs: 10,
            clip_norm: 2.0,
            patience: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |msg: String| Err(TrainError::InvalidConfig(msg));
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return fail(format!("lr {} must be positive", self.lr));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !self.clip_norm.is_finite() || self.clip_norm <= 0.0 {
            return fail(format!("clip_norm {} must be positive", self.clip_norm));
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be at least 1".into());
        }
        if self.adagrad_init_accum < 0.0 {
            return fail("adagrad_init_accum must be non-negative".into());
        }
        Ok(())
    }
}

/// One supervised pair ready for the model.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub encoded: EncodedExample,
    pub src_spans: Vec<EquationSpan>,
}

/// In-place AdaGrad step on one tensor.
pub fn adagrad_update(
    param: &mut Array2<f64>,
    grad: &Array2<f64>,
    accum: &mut Array2<f64>,
    lr: f64,
) -> Result<(), TrainError> {
    if param.dim() != grad.dim() || param.dim() != accum.dim() {
        return Err(TrainError::ShapeMismatch {
            param: param.dim(),
            grad: grad.dim(),
        });
    }
    for ((p, a), &g) in param.iter_mut().zip(accum.iter_mut()).zip(grad.iter()) {
        *a += g * g;
        *p -= lr * g / (*a + ADAGRAD_EPS).sqrt();
    }
    Ok(())
}

/// Per-tensor accumulators keyed like the parameter store.
pub struct AdaGrad {
    lr: f64,
    accum: IndexMap<String, Array2<f64>>,
}

impl AdaGrad {
    pub fn new(store: &ParamStore, lr: f64, init_accum: f64) -> Self {
        let accum = store
            .iter()
            .map(|(name, t)| (name.to_string(), Array2::from_elem(t.dim(), init_accum)))
            .collect();
        AdaGrad { lr, accum }
    }

    /// Applies one update for every tensor with a gradient. Tensors absent
    /// from `grads` had zero gradient and stay untouched, which is the
    /// AdaGrad fixed point.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &IndexMap<String, Array2<f64>>,
    ) -> Result<(), TrainError> {
        for (name, g) in grads {
            let accum = self
                .accum
                .get_mut(name)
                .unwrap_or_else(|| panic!("gradient for unknown tensor {name}"));
            adagrad_update(store.get_mut(name), g, accum, self.lr)?;
        }
        Ok(())
    }
}

/// Scales all gradients so the global L2 norm is at most `clip_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut IndexMap<String, Array2<f64>>, clip_norm: f64) -> f64 {
    let sq: f64 = grads
        .values()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > clip_norm {
        let scale = clip_norm / norm;
        for g in grads.values_mut() {
            g.mapv_inplace(|v| v * scale);
        }
    }
    norm
}

/// Length-bucketed batch plan for one epoch: indices are shuffled, stably
/// sorted by source length (so order within equal lengths stays random),
/// chunked, and the chunk order shuffled.
pub fn plan_epoch(
    lengths: &[usize],
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Vec<Vec<usize>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut idx: Vec<usize> = (0..lengths.len()).collect();
    idx.shuffle(&mut rng);
    idx.sort_by_key(|&i| lengths[i]);
    let mut batches: Vec<Vec<usize>> = idx.chunks(batch_size).map(<[usize]>::to_vec).collect();
    batches.shuffle(&mut rng);
    batches
}

/// One log row; `val_loss` is present on epoch-end rows only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    pub val_loss: Option<f64>,
}

/// Result of a training run; `model` carries the best-validation weights.
#[derive(Debug)]
pub struct TrainOutcome {
    pub model: MathSum,
    pub best_val_loss: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub log: Vec<LogRecord>,
}

/// Tracks best validation loss and patience exhaustion.
struct EarlyStopper {
    best: f64,
    bad_rounds: usize,
    patience: usize,
}

impl EarlyStopper {
    fn new(patience: usize) -> Self {
        EarlyStopper {
            best: f64::INFINITY,
            bad_rounds: 0,
            patience,
        }
    }

    /// Returns `(improved, stop)` for one validation round.
    fn observe(&mut self, val: f64) -> (bool, bool) {
        if val < self.best {
            self.best = val;
            self.bad_rounds = 0;
            (true, false)
        } else {
            self.bad_rounds += 1;
            (false, self.bad_rounds >= self.patience)
        }
    }
}

fn store_is_finite(store: &ParamStore) -> bool {
    store.iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
}

/// Mean evaluation-mode loss over a set.
pub fn mean_loss(model: &MathSum, set: &[TrainExample]) -> Result<f64, TrainError> {
    assert!(!set.is_empty(), "loss over an empty set");
    let mut total = 0.0;
    for ex in set {
        total += model.example_loss(&ex.encoded, &ex.src_spans)?;
    }
    Ok(total / set.len() as f64)
}

/// Full training loop. Validation runs once per epoch on `val_set`, or on
/// the training set itself when no validation split is given.
pub fn train(
    mut model: MathSum,
    train_set: &[TrainExample],
    val_set: &[TrainExample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    if !store_is_finite(model.params()) {
        return Err(TrainError::Divergence {
            epoch: 0,
            batch: 0,
            loss: f64::NAN,
        });
    }

    let lengths: Vec<usize> = train_set
        .iter()
        .map(|ex| ex.encoded.src_ids.len())
        .collect();
    let mut opt = AdaGrad::new(model.params(), cfg.lr, cfg.adagrad_init_accum);
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best_store = model.params().clone();
    let mut drop_seeds = ChaCha20Rng::seed_from_u64(cfg.seed);
    drop_seeds.set_stream(u64::MAX);
    let mut log = Vec::new();
    let mut epochs_run = 0;
    let mut stopped_early = false;

    'epochs: for epoch in 0..cfg.max_epochs {
        for (batch_no, batch) in plan_epoch(&lengths, cfg.batch_size, cfg.seed, epoch)
            .iter()
            .enumerate()
        {
            let mut summed: IndexMap<String, Array2<f64>> = IndexMap::new();
            let mut batch_loss = 0.0;
            for &i in batch {
                let ex = &train_set[i];
                let ex_rng = ChaCha20Rng::seed_from_u64(drop_seeds.random());
                let (loss, grads) =
                    model.example_grads(&ex.encoded, &ex.src_spans, Some(ex_rng))?;
                if !loss.is_finite() {
                    return Err(TrainError::Divergence {
                        epoch,
                        batch: batch_no,
                        loss,
                    });
                }
                batch_loss += loss;
                for (name, g) in grads {
                    match summed.entry(name) {
                        indexmap::map::Entry::Occupied(mut e) => *e.get_mut() += &g,
                        indexmap::map::Entry::Vacant(e) => {
                            e.insert(g);
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            batch_loss *= scale;
            for g in summed.values_mut() {
                g.mapv_inplace(|v| v * scale);
            }
            clip_global_norm(&mut summed, cfg.clip_norm);
            opt.step(model.params_mut(), &summed)?;
            if !store_is_finite(model.params()) {
                return Err(TrainError::Divergence {
                    epoch,
                    batch: batch_no,
                    loss: batch_loss,
                });
            }
            log.push(LogRecord {
                epoch,
                batch: batch_no,
                loss: batch_loss,
                val_loss: None,
            });
        }
        epochs_run = epoch + 1;

        let val = if val_set.is_empty() {
            mean_loss(&model, train_set)?
        } else {
            mean_loss(&model, val_set)?
        };
        if !val.is_finite() {
            return Err(TrainError::Divergence {
                epoch,
                batch: 0,
                loss: val,
            });
        }
        if let Some(last) = log.last_mut() {
            last.val_loss = Some(val);
        }
        let (improved, stop) = stopper.observe(val);
        if improved {
            best_store = model.params().clone();
        }
        if stop {
            stopped_early = true;
            break 'epochs;
        }
    }

    *model.params_mut() = best_store;
    Ok(TrainOutcome {
        model,
        best_val_loss: stopper.best,
        epochs_run,
        stopped_early,
        log,
    })
}

/// Writes the log as `epoch,batch,loss,val_loss` CSV.
pub fn write_log_csv(path: &Path, log: &[LogRecord]) -> Result<(), TrainError> {
    let wrap = |source| TrainError::File {
        path: path.display().to_string(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(wrap)?);
    let mut emit = |line: String| writeln!(out, "{line}").map_err(wrap);
    emit("epoch,batch,loss,val_loss".into())?;
    for rec in log {
        let val = rec.val_loss.map(|v| format!("{v}")).unwrap_or_default();
        emit(format!("{},{},{},{}", rec.epoch, rec.batch, rec.loss, val))?;
    }
    out.flush().map_err(wrap)
}
