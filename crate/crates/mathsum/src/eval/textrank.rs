//! Extractive baselines: random, lead, tail, and a TextRank sentence
//! ranking driven by damped power iteration over lexical similarity.

use std::collections::HashSet;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::corpus::{split_sentences, Token, TokenizedPair};

use super::EvalError;

pub const DAMPING: f64 = 0.85;
pub const CONVERGENCE: f64 = 1e-6;
pub const MAX_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Random,
    Lead,
    Tail,
    TextRank,
}

impl FromStr for BaselineMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "random" => Ok(BaselineMethod::Random),
            "lead" => Ok(BaselineMethod::Lead),
            "tail" => Ok(BaselineMethod::Tail),
            "textrank" => Ok(BaselineMethod::TextRank),
            other => Err(format!(
                "unknown method {other:?} (expected random|lead|tail|textrank)"
            )),
        }
    }
}

/// Lexical similarity: shared distinct surfaces over the log-length sum.
/// Sentences of length 1 contribute log 1 = 0, so a non-positive
/// denominator falls back to 1.
pub fn sentence_similarity(a: &[Token], b: &[Token]) -> f64 {
    let sa: HashSet<&str> = a.iter().map(|t| t.surface.as_str()).collect();
    let sb: HashSet<&str> = b.iter().map(|t| t.surface.as_str()).collect();
    let overlap = sa.intersection(&sb).count() as f64;
    let denom = (a.len() as f64).ln() + (b.len() as f64).ln();
    overlap / if denom > 0.0 { denom } else { 1.0 }
}

/// Damped weighted PageRank over the similarity matrix. Returns the score
/// vector and whether iteration converged within the budget.
pub fn power_iteration(sim: &[Vec<f64>]) -> (Vec<f64>, bool) {
    let n = sim.len();
    let out_sums: Vec<f64> = sim.iter().map(|row| row.iter().sum()).collect();
    let mut scores = vec![1.0; n];
    for _ in 0..MAX_ITERS {
        let mut next = vec![1.0 - DAMPING; n];
        for j in 0..n {
            if out_sums[j] == 0.0 {
                continue;
            }
            for i in 0..n {
                next[i] += DAMPING * sim[j][i] / out_sums[j] * scores[j];
            }
        }
        let delta = scores
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        scores = next;
        if delta < CONVERGENCE {
            return (scores, true);
        }
    }
    (scores, false)
}

/// Index of the maximum score; ties go to the first.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn pair_rng(seed: u64, pair_id: &str) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(pair_id.as_bytes());
    ChaCha20Rng::from_seed(hasher.finalize().into())
}

/// Selects one sentence of the question as the baseline headline.
pub fn baseline_select(
    pair: &TokenizedPair,
    method: BaselineMethod,
    seed: u64,
) -> Result<Vec<Token>, EvalError> {
    let sentences = split_sentences(&pair.source);
    if sentences.is_empty() {
        return Err(EvalError::NoSentence {
            id: pair.id.clone(),
        });
    }
    let chosen = match method {
        BaselineMethod::Lead => 0,
        BaselineMethod::Tail => sentences.len() - 1,
        BaselineMethod::Random => pair_rng(seed, &pair.id).random_range(0..sentences.len()),
        BaselineMethod::TextRank => {
            let sim: Vec<Vec<f64>> = sentences
                .iter()
                .map(|a| {
                    sentences
                        .iter()
                        .map(|b| sentence_similarity(a, b))
                        .collect()
                })
                .collect();
            let (scores, _) = power_iteration(&sim);
            argmax(&scores)
        }
    };
    Ok(sentences[chosen].to_vec())
}
