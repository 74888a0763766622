//! Shared helpers for the integration suites: synthetic corpora with
//! hand-computable properties, random example generators, and CLI runners.

#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use mathsum::corpus::{EquationSpan, RawPair};
use mathsum::vocab::{EncodedExample, BOS, EOS, UNK};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mathsum")
}

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("spawn mathsum binary")
}

pub fn run_cli_env(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn mathsum binary")
}

pub fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed (status {:?}):\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn write_raw_jsonl(path: &Path, pairs: &[RawPair]) {
    let mut text = String::new();
    for p in pairs {
        let line = serde_json::json!({
            "id": p.id,
            "question": p.question,
            "headline": p.headline,
        });
        text.push_str(&line.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).expect("write raw corpus");
}

pub fn read_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

fn raw(id: String, question: String, headline: String) -> RawPair {
    RawPair {
        id,
        question,
        headline,
    }
}

/// 32 short template pairs whose headline is exactly the question's
/// equation. Pair "m13" plants `\zeta`, the corpus's rarest surface, so a
/// one-below-full vocabulary cap leaves it out-of-vocabulary while keeping
/// it copyable.
pub fn memorization_corpus() -> Vec<RawPair> {
    let verbs = ["Simplify", "Expand", "Solve", "Check"];
    let letters = ["x", "y", "z", "u", "v", "w", "p", "q"];
    let ops = ["+", "-", "=", "/"];
    (0..32)
        .map(|i| {
            let verb = verbs[i % 4];
            let a = if i == 13 { "\\zeta" } else { letters[i % 8] };
            let op = ops[(i / 8) % 4];
            let b = letters[(i + 3) % 8];
            raw(
                format!("m{i:02}"),
                format!("{verb} $$ {a} {op} {b} $$ ."),
                format!("$$ {a} {op} {b} $$"),
            )
        })
        .collect()
}

/// Number of distinct non-special surfaces in `memorization_corpus`;
/// capping one below drops only `\zeta`, the unique rarest surface.
pub const MEMORIZATION_FULL_VOCAB: usize = 20;

/// Corpus with a planted copy-and-select structure: each question carries
/// two equations, one containing `\star` at a random position, and the
/// headline is the starred equation with the star removed. Every equation
/// also contains one rare atom that a capped vocabulary cannot hold, so the
/// headline is only reachable through copying.
pub fn select_copy_corpus(n: usize, rng: &mut ChaCha20Rng) -> Vec<RawPair> {
    // Atoms are LaTeX commands so each lexes as one math token.
    let two_letter = |prefix: char, i: usize| {
        let a = (b'a' + (i / 26) as u8) as char;
        let b = (b'a' + (i % 26) as u8) as char;
        format!("\\{prefix}{a}{b}")
    };
    let common: Vec<String> = (0..30).map(|i| two_letter('c', i)).collect();
    let rare: Vec<String> = (0..300).map(|i| two_letter('r', i)).collect();
    let eq = |rng: &mut ChaCha20Rng| -> Vec<String> {
        let mut toks: Vec<String> = (0..4)
            .map(|_| common[rng.random_range(0..common.len())].clone())
            .collect();
        let slot = rng.random_range(0..=toks.len());
        toks.insert(slot, rare[rng.random_range(0..rare.len())].clone());
        toks
    };
    (0..n)
        .map(|i| {
            let e1 = eq(rng);
            let e2 = eq(rng);
            let starred_first = rng.random_bool(0.5);
            let target = if starred_first { e1.clone() } else { e2.clone() };
            let mut star_eq = target.clone();
            star_eq.insert(rng.random_range(0..=star_eq.len()), "\\star".to_string());
            let (s1, s2) = if starred_first {
                (star_eq.join(" "), e2.join(" "))
            } else {
                (e1.join(" "), star_eq.join(" "))
            };
            raw(
                format!("s{i:04}"),
                format!("Given $$ {s1} $$ and $$ {s2} $$ ."),
                format!("$$ {} $$", target.join(" ")),
            )
        })
        .collect()
}

/// Ordinary-entry vocabulary cap for `select_copy_corpus`: markers, the
/// three text words, `\star`, and the 30 common atoms; every rare atom
/// stays out (specials ride on top of the cap).
pub const SELECT_COPY_VOCAB_CAP: usize = 2 + 3 + 1 + 30;

/// 20 pairs in two fixed shapes whose statistics are simple closed-form
/// counts (see the assertions where this corpus is consumed).
pub fn counted_stats_corpus() -> Vec<RawPair> {
    let mut pairs = Vec::with_capacity(20);
    for i in 0..10 {
        pairs.push(raw(
            format!("ca{i}"),
            "Solve $$ x + 1 $$ now .".to_string(),
            "Solve $$ x + 1 $$".to_string(),
        ));
    }
    for i in 0..10 {
        pairs.push(raw(
            format!("cb{i}"),
            "Check $$ y - 2 $$ and $$ z / 3 $$ here . Again quickly .".to_string(),
            "Check $$ y - 2 $$".to_string(),
        ));
    }
    pairs
}

/// Random but structurally valid encoded example over a base vocabulary of
/// `vocab` ids: parallel id tracks, optional copyable OOVs, BOS/EOS-wrapped
/// target, and non-overlapping spans.
pub fn random_encoded(
    rng: &mut ChaCha20Rng,
    vocab: usize,
    max_src: usize,
) -> (EncodedExample, Vec<EquationSpan>) {
    let src_len = rng.random_range(1..=max_src);
    let oov_count = rng.random_range(0..=2usize);
    let mut src_ids = Vec::with_capacity(src_len);
    let mut src_ext_ids = Vec::with_capacity(src_len);
    for _ in 0..src_len {
        if oov_count > 0 && rng.random_bool(0.2) {
            src_ids.push(UNK);
            src_ext_ids.push(vocab + rng.random_range(0..oov_count));
        } else {
            let id = rng.random_range(4..vocab);
            src_ids.push(id);
            src_ext_ids.push(id);
        }
    }
    let tgt_content = rng.random_range(1..=5usize);
    let mut tgt_ids = vec![BOS];
    let mut tgt_ext_ids = vec![BOS];
    for _ in 0..tgt_content {
        if oov_count > 0 && rng.random_bool(0.15) {
            tgt_ids.push(UNK);
            tgt_ext_ids.push(vocab + rng.random_range(0..oov_count));
        } else {
            let id = rng.random_range(4..vocab);
            tgt_ids.push(id);
            tgt_ext_ids.push(id);
        }
    }
    tgt_ids.push(EOS);
    tgt_ext_ids.push(EOS);

    let mut spans = Vec::new();
    let mut pos = 0;
    while pos + 1 < src_len && spans.len() < 3 {
        if rng.random_bool(0.5) {
            pos += 1;
            continue;
        }
        let end = (pos + 1 + rng.random_range(0..3usize)).min(src_len);
        spans.push(EquationSpan { start: pos, end });
        pos = end;
    }
    let oov_list: Vec<String> = (0..oov_count).map(|k| format!("\\oov{k}")).collect();
    (
        EncodedExample {
            src_ids,
            src_ext_ids,
            tgt_ids,
            tgt_ext_ids,
            oov_list,
        },
        spans,
    )
}

/// Prints the one-line verdict for an acceptance criterion and fails the
/// test when `ok` is false.
pub fn verdict(tag: &str, ok: bool, detail: &str) {
    let state = if ok { "PASS" } else { "FAIL" };
    println!("acceptance {tag}: {state} ({detail})");
    assert!(ok, "acceptance {tag} failed: {detail}");
}
