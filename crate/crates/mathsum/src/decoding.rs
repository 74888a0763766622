//! Beam-search generation with a minimum-length constraint, plus attention
//! matrix export. Beam scores are unnormalized sums of log probabilities;
//! beam 1 degenerates to greedy decoding.

use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::model::{InferState, InferenceSession, ModelError};
use crate::vocab::{BOS, EOS};

pub const DEFAULT_BEAM: usize = 3;
pub const DEFAULT_MAX_LEN: usize = 50;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid decode settings: {0}")]
    InvalidSettings(String),
    #[error("no hypothesis produced")]
    NoHypothesis,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeSettings {
    pub beam: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        DecodeSettings {
            beam: DEFAULT_BEAM,
            min_len: 1,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

impl DecodeSettings {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.beam == 0 {
            return Err(DecodeError::InvalidSettings(
                "beam must be at least 1".into(),
            ));
        }
        if self.min_len >= self.max_len {
            return Err(DecodeError::InvalidSettings(format!(
                "min_len {} must be below max_len {}",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }
}

/// Values produced by one expansion of a partial hypothesis.
pub struct StepValues<S> {
    /// Distribution over the decoder's id space.
    pub probs: Vec<f64>,
    /// Attention over source positions for this step.
    pub attention: Vec<f64>,
    pub state: S,
}

/// Anything beam search can drive: the real model session or a toy table.
pub trait StepDecoder {
    type State: Clone;
    fn initial_state(&self) -> Self::State;
    fn step(
        &self,
        prev_id: usize,
        state: &Self::State,
    ) -> Result<StepValues<Self::State>, ModelError>;
}

impl StepDecoder for InferenceSession<'_> {
    type State = InferState;

    fn initial_state(&self) -> InferState {
        InferenceSession::initial_state(self)
    }

    fn step(
        &self,
        prev_id: usize,
        state: &InferState,
    ) -> Result<StepValues<InferState>, ModelError> {
        let out = InferenceSession::step(self, prev_id, state)?;
        Ok(StepValues {
            probs: out.probs,
            attention: out.attention,
            state: out.state,
        })
    }
}

/// A finished or max-length-forced decode.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    /// Emitted ids (extended space), EOS last when `done`.
    pub ids: Vec<usize>,
    /// Sum of per-step log probabilities of `ids`.
    pub log_prob: f64,
    /// One attention row per emitted id.
    pub attentions: Vec<Vec<f64>>,
    pub done: bool,
}

impl Hypothesis {
    /// Emitted ids without the terminating EOS.
    pub fn content_ids(&self) -> &[usize] {
        match self.ids.last() {
            Some(&EOS) => &self.ids[..self.ids.len() - 1],
            _ => &self.ids,
        }
    }
}

struct Partial<S> {
    ids: Vec<usize>,
    log_prob: f64,
    attentions: Vec<Vec<f64>>,
    state: S,
}

/// Length-wise beam expansion keeping the top `beam` partials by total log
/// probability. EOS is masked while a hypothesis is shorter than `min_len`;
/// hypotheses still open at `max_len` are returned unfinished.
pub fn beam_search<D: StepDecoder>(
    decoder: &D,
    settings: &DecodeSettings,
) -> Result<Hypothesis, DecodeError> {
    settings.validate()?;
    let beam = settings.beam;
    let mut live = vec![Partial {
        ids: Vec::new(),
        log_prob: 0.0,
        attentions: Vec::new(),
        state: decoder.initial_state(),
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..settings.max_len {
        let mut steps = Vec::with_capacity(live.len());
        // (index into live, token, extended log prob)
        let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
        for (pi, partial) in live.iter().enumerate() {
            let prev = *partial.ids.last().unwrap_or(&BOS);
            let vals = decoder.step(prev, &partial.state)?;
            let mut order: Vec<usize> = (0..vals.probs.len()).collect();
            order.sort_by(|&a, &b| vals.probs[b].total_cmp(&vals.probs[a]));
            // beam non-EOS tokens plus at most one EOS suffice to fill any
            // selection the global top-off below can make.
            let mut taken = 0;
            for tok in order {
                if taken > beam {
                    break;
                }
                if tok == EOS && partial.ids.len() < settings.min_len {
                    continue;
                }
                let lp = partial.log_prob + vals.probs[tok].ln();
                if !lp.is_finite() {
                    continue;
                }
                candidates.push((pi, tok, lp));
                taken += 1;
            }
            steps.push(vals);
        }
        candidates.sort_by(|a, b| b.2.total_cmp(&a.2));

        let mut next_live: Vec<Partial<D::State>> = Vec::with_capacity(beam);
        for &(pi, tok, lp) in &candidates {
            if next_live.len() >= beam {
                break;
            }
            let src = &live[pi];
            let step = &steps[pi];
            let mut ids = src.ids.clone();
            ids.push(tok);
            let mut attentions = src.attentions.clone();
            attentions.push(step.attention.clone());
            if tok == EOS {
                finished.push(Hypothesis {
                    ids,
                    log_prob: lp,
                    attentions,
                    done: true,
                });
            } else {
                next_live.push(Partial {
                    ids,
                    log_prob: lp,
                    attentions,
                    state: step.state.clone(),
                });
            }
        }
        live = next_live;
        if live.is_empty() {
            break;
        }
        // Scores only fall as length grows, so once the best finished
        // hypothesis outranks every live one no extension can win.
        if let Some(best_done) = finished.iter().map(|h| h.log_prob).max_by(f64::total_cmp) {
            if live.iter().all(|p| p.log_prob <= best_done) {
                break;
            }
        }
    }

    for p in live {
        finished.push(Hypothesis {
            ids: p.ids,
            log_prob: p.log_prob,
            attentions: p.attentions,
            done: false,
        });
    }
    finished
        .into_iter()
        .max_by(|a, b| a.log_prob.total_cmp(&b.log_prob))
        .ok_or(DecodeError::NoHypothesis)
}

/// Independent re-scoring of a token sequence: feeds `ids` through the
/// decoder and sums their step log probabilities.
pub fn rescore<D: StepDecoder>(decoder: &D, ids: &[usize]) -> Result<f64, DecodeError> {
    let mut state = decoder.initial_state();
    let mut prev = BOS;
    let mut total = 0.0;
    for &tok in ids {
        let vals = decoder.step(prev, &state)?;
        total += vals.probs[tok].ln();
        state = vals.state;
        prev = tok;
    }
    Ok(total)
}

/// Writes a TSV heatmap matrix: header row of source surfaces, then one row
/// per generated token with its attention weights.
pub fn export_attention(
    path: &Path,
    source_surfaces: &[String],
    generated_surfaces: &[String],
    attentions: &[Vec<f64>],
) -> Result<(), DecodeError> {
    assert!(
        attentions.len() >= generated_surfaces.len(),
        "one attention row per generated token"
    );
    let wrap = |source| DecodeError::File {
        path: path.display().to_string(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(wrap)?);
    let mut line = String::from("token");
    for s in source_surfaces {
        line.push('\t');
        line.push_str(s);
    }
    writeln!(out, "{line}").map_err(wrap)?;
    for (surface, row) in generated_surfaces.iter().zip(attentions) {
        assert_eq!(row.len(), source_surfaces.len(), "attention width");
        let mut line = surface.clone();
        for v in row {
            line.push('\t');
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}").map_err(wrap)?;
    }
    out.flush().map_err(wrap)
}
