//! BLEU-4 with add-one smoothing on zero clipped counts and a brevity
//! penalty; corpus scores pool counts across sentences.

use std::collections::HashMap;
use std::hash::Hash;

const MAX_ORDER: usize = 4;

/// Pooled clipped/total n-gram counts plus lengths.
#[derive(Debug, Default, Clone)]
pub struct Bleu4Pool {
    clipped: [usize; MAX_ORDER],
    total: [usize; MAX_ORDER],
    cand_len: usize,
    ref_len: usize,
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

impl Bleu4Pool {
    pub fn new() -> Self {
        Bleu4Pool::default()
    }

    pub fn add<T: Eq + Hash>(&mut self, cand: &[T], reference: &[T]) {
        self.cand_len += cand.len();
        self.ref_len += reference.len();
        for n in 1..=MAX_ORDER {
            let cand_counts = ngram_counts(cand, n);
            let ref_counts = ngram_counts(reference, n);
            self.total[n - 1] += cand_counts.values().sum::<usize>();
            self.clipped[n - 1] += cand_counts
                .iter()
                .map(|(gram, &c)| c.min(*ref_counts.get(gram).unwrap_or(&0)))
                .sum::<usize>();
        }
    }

    /// Geometric mean of the four precisions times the brevity penalty.
    /// Orders with zero clipped count use (c+1)/(t+1); an empty candidate
    /// pool scores 0.
    pub fn score(&self) -> f64 {
        if self.cand_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 0..MAX_ORDER {
            let (c, t) = (self.clipped[n] as f64, self.total[n] as f64);
            let p = if self.clipped[n] == 0 {
                (c + 1.0) / (t + 1.0)
            } else {
                c / t
            };
            log_sum += p.ln();
        }
        let geo = (log_sum / MAX_ORDER as f64).exp();
        let bp = if self.cand_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.cand_len as f64).exp()
        } else {
            1.0
        };
        geo * bp
    }
}

/// Single-sentence BLEU-4.
pub fn bleu4<T: Eq + Hash>(cand: &[T], reference: &[T]) -> f64 {
    let mut pool = Bleu4Pool::new();
    pool.add(cand, reference);
    pool.score()
}
