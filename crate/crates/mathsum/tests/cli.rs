//! Command-line behavior: exit codes, config precedence, drop accounting,
//! self-evaluation sanity, repairs, fine-tuning, and profile handling.

mod common;

use std::path::{Path, PathBuf};

use common::*;
use mathsum::corpus::RawPair;
use mathsum::io::HypothesisRecord;

fn sample_corpus() -> Vec<RawPair> {
    let mut pairs = counted_stats_corpus();
    pairs.push(RawPair {
        id: "broken".into(),
        question: "No closing marker $$ x + 1 here .".into(),
        headline: "Whatever".into(),
    });
    pairs
}

struct Workspace {
    raw: PathBuf,
    tok: PathBuf,
    vocab: PathBuf,
    ckpt: PathBuf,
}

/// Ingests, builds a vocabulary, and trains a tiny checkpoint under `dir`.
fn build_workspace(dir: &Path) -> Workspace {
    let ws = Workspace {
        raw: dir.join("raw.jsonl"),
        tok: dir.join("tok.jsonl"),
        vocab: dir.join("vocab.tsv"),
        ckpt: dir.join("model.ckpt"),
    };
    write_raw_jsonl(&ws.raw, &sample_corpus());
    assert_ok(
        &run_cli(&[
            "ingest",
            "--input",
            ws.raw.to_str().unwrap(),
            "--output",
            ws.tok.to_str().unwrap(),
        ]),
        "ingest",
    );
    assert_ok(
        &run_cli(&[
            "build-vocab",
            "--input",
            ws.tok.to_str().unwrap(),
            "--output",
            ws.vocab.to_str().unwrap(),
        ]),
        "build-vocab",
    );
    assert_ok(
        &run_cli(&[
            "train",
            "--train",
            ws.tok.to_str().unwrap(),
            "--vocab",
            ws.vocab.to_str().unwrap(),
            "--output",
            ws.ckpt.to_str().unwrap(),
            "--emb-dim",
            "8",
            "--enc-hidden",
            "8",
            "--dec-hidden",
            "8",
            "--num-heads",
            "2",
            "--ffn-dim",
            "16",
            "--dropout",
            "0.0",
            "--max-epochs",
            "2",
            "--batch-size",
            "8",
        ]),
        "train",
    );
    ws
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run_cli(&["--help"]).status.code(), Some(0));
    assert_eq!(run_cli(&["--version"]).status.code(), Some(0));
    assert_eq!(run_cli(&["decode", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run_cli(&[]).status.code(), Some(1));
    assert_eq!(run_cli(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run_cli(&["ingest", "--input"]).status.code(), Some(1));
}

#[test]
fn missing_input_file_exits_two() {
    let out = run_cli(&["stats", "--input", "/definitely/not/here.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn malformed_and_unknown_config_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");

    std::fs::write(&cfg, "lr = \"fast\"\n").unwrap();
    let out = run_cli(&["--config", cfg.to_str().unwrap(), "stats", "--input", "x"]);
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(&cfg, "not_a_setting = 1\n").unwrap();
    let out = run_cli(&["--config", cfg.to_str().unwrap(), "stats", "--input", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_a_setting"));
}

#[test]
fn seed_precedence_flag_over_config_over_default() {
    let dir = tempfile::tempdir().unwrap();
    let ws = build_workspace(dir.path());
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "seed = 11\n").unwrap();
    let base = dir.path().join("base.jsonl");

    let manifest_seed = |envs: &[(&str, &str)], extra: &[&str]| -> u64 {
        let mut args = vec![
            "baseline",
            "--input",
            ws.tok.to_str().unwrap(),
            "--method",
            "random",
            "--output",
            base.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        assert_ok(&run_cli_env(&args, envs), "baseline");
        let manifest: serde_json::Value = serde_json::from_slice(&read_bytes(&PathBuf::from(
            format!("{}.manifest.json", base.display()),
        )))
        .unwrap();
        manifest["seed"].as_u64().unwrap()
    };

    assert_eq!(manifest_seed(&[], &[]), 0);
    let env = [("MATHSUM_CONFIG", cfg.to_str().unwrap())];
    assert_eq!(manifest_seed(&env, &[]), 11);
    assert_eq!(manifest_seed(&env, &["--seed", "99"]), 99);
}

#[test]
fn ingest_counts_dropped_pairs_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.jsonl");
    let tok = dir.path().join("tok.jsonl");
    write_raw_jsonl(&raw, &sample_corpus());
    let out = run_cli(&[
        "ingest",
        "--input",
        raw.to_str().unwrap(),
        "--output",
        tok.to_str().unwrap(),
    ]);
    assert_ok(&out, "ingest");
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["total"], 21);
    assert_eq!(report["kept"], 20);
    assert_eq!(report["dropped_unbalanced"], 1);
    assert_eq!(std::fs::read_to_string(&tok).unwrap().lines().count(), 20);
}

#[test]
fn eval_of_gold_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let ws = build_workspace(dir.path());
    let hyp = dir.path().join("echo.jsonl");

    let pairs = mathsum::io::read_tokenized_pairs(&ws.tok).unwrap();
    let records: Vec<HypothesisRecord> = pairs
        .iter()
        .map(|p| HypothesisRecord {
            id: p.id.clone(),
            hypothesis: p.target_surfaces().join(" "),
            log_prob: 0.0,
        })
        .collect();
    mathsum::io::write_jsonl(&hyp, &records).unwrap();

    let metrics = dir.path().join("metrics.json");
    let out = run_cli(&[
        "eval",
        "--gold",
        ws.tok.to_str().unwrap(),
        "--hyp",
        hyp.to_str().unwrap(),
        "--output",
        metrics.to_str().unwrap(),
    ]);
    assert_ok(&out, "eval");
    let doc: serde_json::Value = serde_json::from_slice(&read_bytes(&metrics)).unwrap();
    for key in ["rouge1_f1", "rouge2_f1", "rougel_f1", "bleu4"] {
        assert_eq!(doc[key].as_f64().unwrap(), 100.0, "{key} on an echo run");
    }
    assert_eq!(doc["edit_distance_m"].as_f64().unwrap(), 0.0);
    assert_eq!(doc["edit_distance_s"].as_f64().unwrap(), 0.0);
    // Every target holds one three-token equation.
    assert_eq!(doc["exact_match"].as_f64().unwrap(), 3.0);
    assert_eq!(doc["n"], 20);
}

#[test]
fn eval_repairs_unbalanced_hypotheses_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let ws = build_workspace(dir.path());
    let pairs = mathsum::io::read_tokenized_pairs(&ws.tok).unwrap();
    let records: Vec<HypothesisRecord> = pairs
        .iter()
        .map(|p| HypothesisRecord {
            id: p.id.clone(),
            hypothesis: "<m> x +".into(),
            log_prob: 0.0,
        })
        .collect();
    let hyp = dir.path().join("open.jsonl");
    mathsum::io::write_jsonl(&hyp, &records).unwrap();
    let metrics = dir.path().join("metrics.json");
    let out = run_cli(&[
        "eval",
        "--gold",
        ws.tok.to_str().unwrap(),
        "--hyp",
        hyp.to_str().unwrap(),
        "--output",
        metrics.to_str().unwrap(),
    ]);
    assert_ok(&out, "eval");
    assert!(String::from_utf8_lossy(&out.stdout).contains("marker repairs: 20 closed"));
    let doc: serde_json::Value = serde_json::from_slice(&read_bytes(&metrics)).unwrap();
    assert_eq!(doc["repairs"]["appended_close"], 20);
}

#[test]
fn eval_id_mismatch_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let ws = build_workspace(dir.path());
    let hyp = dir.path().join("bad.jsonl");
    mathsum::io::write_jsonl(
        &hyp,
        &[HypothesisRecord {
            id: "nope".into(),
            hypothesis: "x".into(),
            log_prob: 0.0,
        }],
    )
    .unwrap();
    let out = run_cli(&[
        "eval",
        "--gold",
        ws.tok.to_str().unwrap(),
        "--hyp",
        hyp.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn decode_profile_feeds_min_len_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let ws = build_workspace(dir.path());
    let hyps = dir.path().join("hyps.jsonl");
    let shared: Vec<&str> = vec![
        "decode",
        "--model",
        ws.ckpt.to_str().unwrap(),
        "--vocab",
        ws.vocab.to_str().unwrap(),
        "--input",
        ws.tok.to_str().unwrap(),
        "--output",
        hyps.to_str().unwrap(),
        "--max-len",
        "10",
    ];

    // Profile minimum 20 collides with max-len 10.
    let mut with_profile = shared.clone();
    with_profile.extend_from_slice(&["--profile", "exeq"]);
    let out = run_cli(&with_profile);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("min_len"));

    // An explicit flag beats the profile and the run succeeds.
    let mut with_override = with_profile.clone();
    with_override.extend_from_slice(&["--min-len", "2"]);
    assert_ok(&run_cli(&with_override), "decode with explicit min-len");
    assert_eq!(
        std::fs::read_to_string(&hyps).unwrap().lines().count(),
        20
    );
}

#[test]
fn decode_sanitizes_attention_dump_names() {
    let dir = tempfile::tempdir().unwrap();
    let ws = build_workspace(dir.path());
    let weird = dir.path().join("weird.jsonl");
    write_raw_jsonl(
        &weird,
        &[RawPair {
            id: "a/b c".into(),
            question: "Solve $$ x + 1 $$ now .".into(),
            headline: "Solve $$ x + 1 $$".into(),
        }],
    );
    let tok = dir.path().join("weird_tok.jsonl");
    assert_ok(
        &run_cli(&[
            "ingest",
            "--input",
            weird.to_str().unwrap(),
            "--output",
            tok.to_str().unwrap(),
        ]),
        "ingest",
    );
    let attn = dir.path().join("attn");
    let hyps = dir.path().join("hyps.jsonl");
    assert_ok(
        &run_cli(&[
            "decode",
            "--model",
            ws.ckpt.to_str().unwrap(),
            "--vocab",
            ws.vocab.to_str().unwrap(),
            "--input",
            tok.to_str().unwrap(),
            "--output",
            hyps.to_str().unwrap(),
            "--max-len",
            "6",
            "--attn-dump",
            attn.to_str().unwrap(),
        ]),
        "decode",
    );
    assert!(attn.join("a_b_c.tsv").is_file());
}

#[test]
fn finetune_requires_matching_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let ws = build_workspace(dir.path());

    let small_vocab = dir.path().join("small.tsv");
    assert_ok(
        &run_cli(&[
            "build-vocab",
            "--input",
            ws.tok.to_str().unwrap(),
            "--output",
            small_vocab.to_str().unwrap(),
            "--cap",
            "5",
        ]),
        "build-vocab small",
    );
    let out2 = dir.path().join("tuned.ckpt");
    let out = run_cli(&[
        "train",
        "--train",
        ws.tok.to_str().unwrap(),
        "--vocab",
        small_vocab.to_str().unwrap(),
        "--output",
        out2.to_str().unwrap(),
        "--finetune-from",
        ws.ckpt.to_str().unwrap(),
        "--max-epochs",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));

    let out = run_cli(&[
        "train",
        "--train",
        ws.tok.to_str().unwrap(),
        "--vocab",
        ws.vocab.to_str().unwrap(),
        "--output",
        out2.to_str().unwrap(),
        "--finetune-from",
        ws.ckpt.to_str().unwrap(),
        "--max-epochs",
        "1",
    ]);
    assert_ok(&out, "finetune");
    assert!(PathBuf::from(format!("{}.log.csv", out2.display())).is_file());
}

#[test]
fn split_rejects_bad_fractions() {
    let dir = tempfile::tempdir().unwrap();
    let ws = build_workspace(dir.path());
    let out = run_cli(&[
        "split",
        "--input",
        ws.tok.to_str().unwrap(),
        "--out-dir",
        dir.path().join("sp").to_str().unwrap(),
        "--train-frac",
        "0.9",
        "--val-frac",
        "0.9",
        "--test-frac",
        "0.9",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn baseline_rejects_unknown_method() {
    let dir = tempfile::tempdir().unwrap();
    let ws = build_workspace(dir.path());
    let out = run_cli(&[
        "baseline",
        "--input",
        ws.tok.to_str().unwrap(),
        "--method",
        "oracle",
        "--output",
        dir.path().join("b.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn stats_reports_novel_ngrams() {
    let dir = tempfile::tempdir().unwrap();
    let ws = build_workspace(dir.path());
    let out = run_cli(&["stats", "--input", ws.tok.to_str().unwrap()]);
    assert_ok(&out, "stats");
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for n in ["1", "2", "3", "4"] {
        let v = doc["novel_ngram_proportion"][n].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "proportion {n} out of range: {v}");
    }
}
