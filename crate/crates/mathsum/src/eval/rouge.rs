//! ROUGE-N (clipped n-gram overlap) and ROUGE-L (LCS) F1 scores.

use std::collections::HashMap;
use std::hash::Hash;

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
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

/// Clipped n-gram overlap F1; 0 when either side lacks n-grams.
pub fn rouge_n_f1<T: Eq + Hash>(cand: &[T], reference: &[T], n: usize) -> f64 {
    assert!(n >= 1, "n-gram order must be positive");
    let cand_counts = ngram_counts(cand, n);
    let ref_counts = ngram_counts(reference, n);
    let cand_total: usize = cand_counts.values().sum();
    let ref_total: usize = ref_counts.values().sum();
    if cand_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let overlap: usize = cand_counts
        .iter()
        .map(|(gram, &c)| c.min(*ref_counts.get(gram).unwrap_or(&0)))
        .sum();
    f1(
        overlap as f64 / cand_total as f64,
        overlap as f64 / ref_total as f64,
    )
}

/// Longest common subsequence length.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F1 with equal precision/recall weighting.
pub fn rouge_l_f1<T: Eq>(cand: &[T], reference: &[T]) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let l = lcs_len(cand, reference) as f64;
    f1(l / cand.len() as f64, l / reference.len() as f64)
}
