//! Headline quality metrics: ROUGE-1/2/L, BLEU-4, math edit distances,
//! exact match, plus the extractive baselines and report assembly.

mod bleu;
mod rouge;
mod textrank;

pub use bleu::{bleu4, Bleu4Pool};
pub use rouge::{lcs_len, rouge_l_f1, rouge_n_f1};
pub use textrank::{
    baseline_select, power_iteration, sentence_similarity, BaselineMethod, CONVERGENCE, DAMPING,
    MAX_ITERS,
};

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{TokenizedPair, MARKER_CLOSE, MARKER_OPEN};
use crate::io::HypothesisRecord;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    EmptyCorpus,
    #[error("unbalanced markers: {0}")]
    UnbalancedMarker(String),
    #[error("pair {id} has no sentences")]
    NoSentence { id: String },
    #[error("hypotheses do not match gold ids: {0}")]
    IdMismatch(String),
}

/// Marker fixes applied to hypotheses before equation extraction.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RepairStats {
    pub appended_close: usize,
    pub dropped_stray_close: usize,
    pub dropped_nested_open: usize,
}

impl RepairStats {
    pub fn total(&self) -> usize {
        self.appended_close + self.dropped_stray_close + self.dropped_nested_open
    }

    fn absorb(&mut self, other: RepairStats) {
        self.appended_close += other.appended_close;
        self.dropped_stray_close += other.dropped_stray_close;
        self.dropped_nested_open += other.dropped_nested_open;
    }
}

/// Rebalances markers: an unclosed region is closed at the end, stray
/// closers and nested openers are dropped. Every fix is counted.
pub fn repair_markers(tokens: &[String]) -> (Vec<String>, RepairStats) {
    let mut out = Vec::with_capacity(tokens.len() + 1);
    let mut stats = RepairStats::default();
    let mut open = false;
    for t in tokens {
        match t.as_str() {
            MARKER_OPEN => {
                if open {
                    stats.dropped_nested_open += 1;
                } else {
                    open = true;
                    out.push(t.clone());
                }
            }
            MARKER_CLOSE => {
                if open {
                    open = false;
                    out.push(t.clone());
                } else {
                    stats.dropped_stray_close += 1;
                }
            }
            _ => out.push(t.clone()),
        }
    }
    if open {
        out.push(MARKER_CLOSE.to_string());
        stats.appended_close += 1;
    }
    (out, stats)
}

/// One math-token sequence per marker pair, in order; empty regions are
/// dropped. Expects repaired input and errors on any imbalance.
pub fn extract_equations(tokens: &[String]) -> Result<Vec<Vec<String>>, EvalError> {
    let mut equations = Vec::new();
    let mut current: Option<Vec<String>> = None;
    for t in tokens {
        match (t.as_str(), &mut current) {
            (MARKER_OPEN, None) => current = Some(Vec::new()),
            (MARKER_OPEN, Some(_)) => {
                return Err(EvalError::UnbalancedMarker(
                    "nested opening marker".into(),
                ))
            }
            (MARKER_CLOSE, Some(eq)) => {
                if !eq.is_empty() {
                    equations.push(std::mem::take(eq));
                }
                current = None;
            }
            (MARKER_CLOSE, None) => {
                return Err(EvalError::UnbalancedMarker(
                    "closing marker without an open region".into(),
                ))
            }
            (_, Some(eq)) => eq.push(t.clone()),
            (_, None) => {}
        }
    }
    if current.is_some() {
        return Err(EvalError::UnbalancedMarker("unclosed marker".into()));
    }
    Ok(equations)
}

/// Token-level edit distance with unit insert/delete/substitute costs.
pub fn levenshtein<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Per-sample minimum cross-pair distance and its count denominator.
/// Degenerate rules: both sides empty scores 0 over 1; one empty side
/// scores the shortest opposite equation's length (its distance from the
/// empty sequence) over the larger equation count.
fn min_md(gen: &[Vec<String>], gold: &[Vec<String>]) -> (f64, usize) {
    let denom = gen.len().max(gold.len()).max(1);
    match (gen.is_empty(), gold.is_empty()) {
        (true, true) => (0.0, 1),
        (true, false) => (
            gold.iter().map(Vec::len).min().unwrap() as f64,
            denom,
        ),
        (false, true) => (
            gen.iter().map(Vec::len).min().unwrap() as f64,
            denom,
        ),
        (false, false) => {
            let best = gen
                .iter()
                .flat_map(|p| gold.iter().map(move |g| levenshtein(p, g)))
                .min()
                .unwrap();
            (best as f64, denom)
        }
    }
}

/// Math-level score: mean over samples of minMd normalized by the larger
/// equation count.
pub fn edit_distance_m(
    gen: &[Vec<Vec<String>>],
    gold: &[Vec<Vec<String>>],
) -> Result<f64, EvalError> {
    assert_eq!(gen.len(), gold.len(), "paired sample lists");
    if gen.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let total: f64 = gen
        .iter()
        .zip(gold)
        .map(|(p, g)| {
            let (md, denom) = min_md(p, g);
            md / denom as f64
        })
        .sum();
    Ok(total / gen.len() as f64)
}

/// Sentence-level score: mean over samples of the unnormalized minMd.
pub fn edit_distance_s(
    gen: &[Vec<Vec<String>>],
    gold: &[Vec<Vec<String>>],
) -> Result<f64, EvalError> {
    assert_eq!(gen.len(), gold.len(), "paired sample lists");
    if gen.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let total: f64 = gen.iter().zip(gold).map(|(p, g)| min_md(p, g).0).sum();
    Ok(total / gen.len() as f64)
}

fn math_token_multiset(equations: &[Vec<String>]) -> std::collections::HashMap<&str, usize> {
    let mut counts = std::collections::HashMap::new();
    for eq in equations {
        for t in eq {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    counts
}

/// Mean per-sample cardinality of the multiset intersection of generated
/// and gold math tokens.
pub fn exact_match(
    gen: &[Vec<Vec<String>>],
    gold: &[Vec<Vec<String>>],
) -> Result<f64, EvalError> {
    assert_eq!(gen.len(), gold.len(), "paired sample lists");
    if gen.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let total: usize = gen
        .iter()
        .zip(gold)
        .map(|(p, g)| {
            let pm = math_token_multiset(p);
            let gm = math_token_multiset(g);
            pm.iter()
                .map(|(tok, &c)| c.min(*gm.get(tok).unwrap_or(&0)))
                .sum::<usize>()
        })
        .sum();
    Ok(total as f64 / gen.len() as f64)
}

/// Aggregated scores; overlap metrics live in [0, 1] internally and are
/// scaled by 100 on emission.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub rouge1_f1: f64,
    pub rouge2_f1: f64,
    pub rougel_f1: f64,
    pub bleu4: f64,
    pub edit_distance_m: f64,
    pub edit_distance_s: f64,
    pub exact_match: f64,
    pub n: usize,
}

impl MetricsReport {
    /// JSON view with ROUGE/BLEU multiplied by 100, as reported.
    pub fn scaled_json(&self) -> serde_json::Value {
        serde_json::json!({
            "rouge1_f1": 100.0 * self.rouge1_f1,
            "rouge2_f1": 100.0 * self.rouge2_f1,
            "rougel_f1": 100.0 * self.rougel_f1,
            "bleu4": 100.0 * self.bleu4,
            "edit_distance_m": self.edit_distance_m,
            "edit_distance_s": self.edit_distance_s,
            "exact_match": self.exact_match,
            "n": self.n,
        })
    }

    /// Aligned human-readable table with the same scaling.
    pub fn render_table(&self) -> String {
        let rows = [
            ("ROUGE-1 F1", 100.0 * self.rouge1_f1),
            ("ROUGE-2 F1", 100.0 * self.rouge2_f1),
            ("ROUGE-L F1", 100.0 * self.rougel_f1),
            ("BLEU-4", 100.0 * self.bleu4),
            ("Edit Distance (m)", self.edit_distance_m),
            ("Edit Distance (s)", self.edit_distance_s),
            ("Exact Match", self.exact_match),
        ];
        let mut out = format!("n = {}\n", self.n);
        for (name, value) in rows {
            out.push_str(&format!("{name:<18} {value:>8.2}\n"));
        }
        out
    }
}

/// One scored pair: candidate and reference token sequences.
#[derive(Debug, Clone)]
pub struct EvalSample {
    pub id: String,
    pub candidate: Vec<String>,
    pub reference: Vec<String>,
}

/// Pairs hypotheses with gold records by id, in gold order. Missing,
/// duplicate, or extra ids are hard errors.
pub fn align_hypotheses(
    gold: &[TokenizedPair],
    hyps: &[HypothesisRecord],
) -> Result<Vec<EvalSample>, EvalError> {
    let mut by_id = std::collections::HashMap::new();
    for h in hyps {
        if by_id.insert(h.id.as_str(), h).is_some() {
            return Err(EvalError::IdMismatch(format!("duplicate hypothesis {}", h.id)));
        }
    }
    let mut samples = Vec::with_capacity(gold.len());
    for pair in gold {
        let h = by_id.remove(pair.id.as_str()).ok_or_else(|| {
            EvalError::IdMismatch(format!("no hypothesis for gold id {}", pair.id))
        })?;
        samples.push(EvalSample {
            id: pair.id.clone(),
            candidate: h.hypothesis.split_whitespace().map(str::to_string).collect(),
            reference: pair.target.iter().map(|t| t.surface.clone()).collect(),
        });
    }
    if let Some(extra) = by_id.keys().next() {
        return Err(EvalError::IdMismatch(format!(
            "hypothesis {extra} has no gold record"
        )));
    }
    Ok(samples)
}

/// Scores a corpus of samples. Candidate markers are repaired (and the
/// repairs counted); reference imbalance is a hard error since gold data
/// is validated upstream. ROUGE scores are per-sample means; BLEU-4 pools
/// counts corpus-wide.
pub fn evaluate_corpus(samples: &[EvalSample]) -> Result<(MetricsReport, RepairStats), EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let n = samples.len() as f64;
    let mut repairs = RepairStats::default();
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    let mut rl = 0.0;
    let mut pool = Bleu4Pool::new();
    let mut gen_eqs = Vec::with_capacity(samples.len());
    let mut gold_eqs = Vec::with_capacity(samples.len());
    for s in samples {
        let (cand, stats) = repair_markers(&s.candidate);
        repairs.absorb(stats);
        r1 += rouge_n_f1(&cand, &s.reference, 1);
        r2 += rouge_n_f1(&cand, &s.reference, 2);
        rl += rouge_l_f1(&cand, &s.reference);
        pool.add(&cand, &s.reference);
        gen_eqs.push(extract_equations(&cand)?);
        gold_eqs.push(extract_equations(&s.reference)?);
    }
    let report = MetricsReport {
        rouge1_f1: r1 / n,
        rouge2_f1: r2 / n,
        rougel_f1: rl / n,
        bleu4: pool.score(),
        edit_distance_m: edit_distance_m(&gen_eqs, &gold_eqs)?,
        edit_distance_s: edit_distance_s(&gen_eqs, &gold_eqs)?,
        exact_match: exact_match(&gen_eqs, &gold_eqs)?,
        n: samples.len(),
    };
    Ok((report, repairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    /// Recursive memoized reference distance used as the oracle.
    fn lev_naive<T: Eq + Clone + std::hash::Hash>(a: &[T], b: &[T]) -> usize {
        fn go<T: Eq>(
            a: &[T],
            b: &[T],
            i: usize,
            j: usize,
            memo: &mut std::collections::HashMap<(usize, usize), usize>,
        ) -> usize {
            if i == 0 {
                return j;
            }
            if j == 0 {
                return i;
            }
            if let Some(&d) = memo.get(&(i, j)) {
                return d;
            }
            let sub = go(a, b, i - 1, j - 1, memo) + usize::from(a[i - 1] != b[j - 1]);
            let del = go(a, b, i - 1, j, memo) + 1;
            let ins = go(a, b, i, j - 1, memo) + 1;
            let d = sub.min(del).min(ins);
            memo.insert((i, j), d);
            d
        }
        go(a, b, a.len(), b.len(), &mut std::collections::HashMap::new())
    }

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein(&toks("a b c"), &toks("a b c")), 0);
        assert_eq!(levenshtein(&toks("a b c"), &[] as &[String]), 3);
        assert_eq!(levenshtein(&[] as &[String], &toks("x y")), 2);
    }

    #[test]
    fn kitten_to_sitting_is_three() {
        assert_eq!(levenshtein(&chars("kitten"), &chars("sitting")), 3);
    }

    #[test]
    fn extraction_examples() {
        assert_eq!(
            extract_equations(&toks("find <m> x </m>")).unwrap(),
            vec![toks("x")]
        );
        assert_eq!(
            extract_equations(&toks("no markers here")).unwrap(),
            Vec::<Vec<String>>::new()
        );
        assert_eq!(
            extract_equations(&toks("<m> x = 1 </m> and <m> y </m>")).unwrap(),
            vec![toks("x = 1"), toks("y")]
        );
        // Empty regions are dropped.
        assert_eq!(
            extract_equations(&toks("a <m> </m> b")).unwrap(),
            Vec::<Vec<String>>::new()
        );
    }

    #[test]
    fn extraction_rejects_imbalance() {
        assert!(extract_equations(&toks("<m> x")).is_err());
        assert!(extract_equations(&toks("x </m>")).is_err());
        assert!(extract_equations(&toks("<m> <m> x </m>")).is_err());
    }

    #[test]
    fn repair_appends_missing_close() {
        let (fixed, stats) = repair_markers(&toks("find <m> x"));
        assert_eq!(fixed, toks("find <m> x </m>"));
        assert_eq!(stats.appended_close, 1);
        assert_eq!(stats.total(), 1);
        extract_equations(&fixed).unwrap();
    }

    #[test]
    fn repair_drops_stray_close_and_nested_open() {
        let (fixed, stats) = repair_markers(&toks("a </m> b <m> x <m> y </m>"));
        assert_eq!(fixed, toks("a b <m> x y </m>"));
        assert_eq!(stats.dropped_stray_close, 1);
        assert_eq!(stats.dropped_nested_open, 1);
        assert_eq!(stats.appended_close, 0);
    }

    #[test]
    fn repair_leaves_balanced_sequences_alone() {
        let t = toks("find <m> x </m> now");
        let (fixed, stats) = repair_markers(&t);
        assert_eq!(fixed, t);
        assert_eq!(stats, RepairStats::default());
    }

    #[test]
    fn edit_distance_m_worked_examples() {
        // Identical single equations: 0.
        let same = vec![vec![toks("x = 1")]];
        assert_eq!(edit_distance_m(&same, &same).unwrap(), 0.0);
        // P=[[x,y]], G=[[x]]: minMd 1, denominator 1.
        let p = vec![vec![toks("x y")]];
        let g = vec![vec![toks("x")]];
        assert_eq!(edit_distance_m(&p, &g).unwrap(), 1.0);
        // One side empty: distance from empty = 3 over denominator 1.
        let p = vec![vec![]];
        let g = vec![vec![toks("x y z")]];
        assert_eq!(edit_distance_m(&p, &g).unwrap(), 3.0);
        // Both empty: 0 over 1.
        let p: Vec<Vec<Vec<String>>> = vec![vec![]];
        let g: Vec<Vec<Vec<String>>> = vec![vec![]];
        assert_eq!(edit_distance_m(&p, &g).unwrap(), 0.0);
    }

    #[test]
    fn normalization_uses_the_larger_equation_count() {
        // Two generated equations, one gold: best cross distance 1 over 2.
        let p = vec![vec![toks("x y"), toks("a b c")]];
        let g = vec![vec![toks("x")]];
        assert_eq!(edit_distance_m(&p, &g).unwrap(), 0.5);
        assert_eq!(edit_distance_s(&p, &g).unwrap(), 1.0);
    }

    #[test]
    fn edit_distance_s_is_a_plain_mean() {
        // minMds 2 and 4 average to 3.
        let p = vec![vec![toks("a b c")], vec![toks("a b c d e")]];
        let g = vec![vec![toks("a")], vec![toks("a")]];
        assert_eq!(edit_distance_s(&p, &g).unwrap(), 3.0);
    }

    #[test]
    fn exact_match_worked_examples() {
        // PM {x,x,y} vs GM {x,y,z}: min-multiplicity overlap 2.
        let p = vec![vec![toks("x x y")]];
        let g = vec![vec![toks("x"), toks("y z")]];
        assert_eq!(exact_match(&p, &g).unwrap(), 2.0);
        // Identical k-token math: k.
        let same = vec![vec![toks("a + b = c")]];
        assert_eq!(exact_match(&same, &same).unwrap(), 5.0);
        // Disjoint multisets: 0.
        let p = vec![vec![toks("x")]];
        let g = vec![vec![toks("y")]];
        assert_eq!(exact_match(&p, &g).unwrap(), 0.0);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            edit_distance_m(&[], &[]),
            Err(EvalError::EmptyCorpus)
        ));
        assert!(matches!(
            edit_distance_s(&[], &[]),
            Err(EvalError::EmptyCorpus)
        ));
        assert!(matches!(exact_match(&[], &[]), Err(EvalError::EmptyCorpus)));
        assert!(matches!(
            evaluate_corpus(&[]),
            Err(EvalError::EmptyCorpus)
        ));
    }

    fn sample(id: &str, cand: &str, refr: &str) -> EvalSample {
        EvalSample {
            id: id.into(),
            candidate: toks(cand),
            reference: toks(refr),
        }
    }

    #[test]
    fn self_evaluation_is_perfect() {
        let text = "find <m> x = 1 </m> quickly";
        let samples = vec![sample("a", text, text), sample("b", text, text)];
        let (report, repairs) = evaluate_corpus(&samples).unwrap();
        assert_eq!(report.rouge1_f1, 1.0);
        assert_eq!(report.rouge2_f1, 1.0);
        assert_eq!(report.rougel_f1, 1.0);
        assert!((report.bleu4 - 1.0).abs() < 1e-12);
        assert_eq!(report.edit_distance_m, 0.0);
        assert_eq!(report.edit_distance_s, 0.0);
        assert_eq!(report.exact_match, 3.0, "x, =, 1 per sample");
        assert_eq!(report.n, 2);
        assert_eq!(repairs.total(), 0);
    }

    #[test]
    fn unclosed_candidate_markers_are_repaired_and_counted() {
        let samples = vec![sample(
            "a",
            "find <m> x",
            "find <m> x </m>",
        )];
        let (report, repairs) = evaluate_corpus(&samples).unwrap();
        assert_eq!(repairs.appended_close, 1);
        assert_eq!(report.exact_match, 1.0);
    }

    #[test]
    fn scaled_emission_multiplies_overlap_metrics_only() {
        let report = MetricsReport {
            rouge1_f1: 2.0 / 3.0,
            rouge2_f1: 0.5,
            rougel_f1: 0.8,
            bleu4: 0.25,
            edit_distance_m: 1.5,
            edit_distance_s: 4.0,
            exact_match: 2.0,
            n: 3,
        };
        let v = report.scaled_json();
        assert!((v["rouge1_f1"].as_f64().unwrap() - 66.6667).abs() < 1e-3);
        assert!((v["bleu4"].as_f64().unwrap() - 25.0).abs() < 1e-12);
        assert_eq!(v["edit_distance_m"].as_f64().unwrap(), 1.5);
        assert_eq!(v["exact_match"].as_f64().unwrap(), 2.0);
        assert_eq!(v["n"].as_u64().unwrap(), 3);
        let table = report.render_table();
        assert!(table.contains("ROUGE-1 F1"));
        assert!(table.contains("66.67"));
        assert!(table.contains("Edit Distance (m)"));
    }

    #[test]
    fn alignment_follows_gold_order_and_rejects_mismatches() {
        use crate::corpus::{build_pair, RawPair};
        let gold: Vec<TokenizedPair> = [("p1", "Solve $$x$$."), ("p2", "Check $$y$$.")]
            .iter()
            .map(|(id, q)| {
                build_pair(&RawPair {
                    id: (*id).into(),
                    question: (*q).into(),
                    headline: format!("Answer {id}."),
                })
                .unwrap()
            })
            .collect();
        let hyp = |id: &str| HypothesisRecord {
            id: id.into(),
            hypothesis: "Answer .".into(),
            log_prob: -1.0,
        };
        let aligned = align_hypotheses(&gold, &[hyp("p2"), hyp("p1")]).unwrap();
        assert_eq!(aligned[0].id, "p1");
        assert_eq!(aligned[1].id, "p2");
        assert_eq!(aligned[0].candidate, toks("Answer ."));

        assert!(matches!(
            align_hypotheses(&gold, &[hyp("p1")]),
            Err(EvalError::IdMismatch(_))
        ));
        assert!(matches!(
            align_hypotheses(&gold, &[hyp("p1"), hyp("p1")]),
            Err(EvalError::IdMismatch(_))
        ));
        assert!(matches!(
            align_hypotheses(&gold, &[hyp("p1"), hyp("p2"), hyp("p3")]),
            Err(EvalError::IdMismatch(_))
        ));
    }

    fn eq_list_strategy() -> impl Strategy<Value = Vec<Vec<String>>> {
        proptest::collection::vec(
            proptest::collection::vec("[a-d]", 1..5).prop_map(|v| v),
            0..4,
        )
    }

    proptest! {
        #[test]
        fn levenshtein_matches_naive(
            a in proptest::collection::vec(0u8..4, 0..8),
            b in proptest::collection::vec(0u8..4, 0..8),
        ) {
            prop_assert_eq!(levenshtein(&a, &b), lev_naive(&a, &b));
        }

        #[test]
        fn levenshtein_is_a_metric(
            a in proptest::collection::vec(0u8..3, 0..7),
            b in proptest::collection::vec(0u8..3, 0..7),
            c in proptest::collection::vec(0u8..3, 0..7),
        ) {
            prop_assert_eq!(levenshtein(&a, &a), 0);
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            prop_assert!(
                levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c)
            );
        }

        #[test]
        fn normalized_distance_never_exceeds_sentence_distance(
            gen in proptest::collection::vec(eq_list_strategy(), 1..5),
            gold in proptest::collection::vec(eq_list_strategy(), 1..5),
        ) {
            let n = gen.len().min(gold.len());
            let gen = &gen[..n];
            let gold = &gold[..n];
            let m = edit_distance_m(gen, gold).unwrap();
            let s = edit_distance_s(gen, gold).unwrap();
            prop_assert!(m <= s + 1e-12, "m {} > s {}", m, s);
        }

        #[test]
        fn self_exact_match_counts_average_math_tokens(
            eqs in proptest::collection::vec(eq_list_strategy(), 1..5),
        ) {
            let em = exact_match(&eqs, &eqs).unwrap();
            let want: usize = eqs
                .iter()
                .map(|sample| sample.iter().map(Vec::len).sum::<usize>())
                .sum();
            prop_assert!((em - want as f64 / eqs.len() as f64).abs() < 1e-12);
        }
    }
}
