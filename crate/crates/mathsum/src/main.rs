//! Pipeline command line: ingest, stats, split, build-vocab, train,
//! decode, eval, baseline. Exit codes: 0 success, 1 validation error,
//! 2 runtime error. All randomness flows from one --seed.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mathsum::corpus::{self, SplitSpec};
use mathsum::decoding::{self, DecodeSettings};
use mathsum::eval::{self, BaselineMethod};
use mathsum::io::{self, HypothesisRecord, IoError};
use mathsum::model::{Hyperparams, MathSum, ModelError};
use mathsum::training::{self, TrainConfig, TrainError, TrainExample};
use mathsum::vocab::{VocabError, Vocabulary};

const CONFIG_ENV: &str = "MATHSUM_CONFIG";

#[derive(Parser)]
#[command(name = "mathsum", version, about = "Math headline generation pipeline")]
struct Cli {
    /// Master seed for every random choice (splits, training, baselines).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat TOML config file; MATHSUM_CONFIG supplies a default path.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize raw question/headline JSONL, dropping unparseable pairs.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Also write the drop report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Corpus statistics: per-side averages and novel n-gram proportions.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Split a tokenized corpus into train/val/test files.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        train_frac: f64,
        #[arg(long, default_value_t = 0.1)]
        val_frac: f64,
        #[arg(long, default_value_t = 0.1)]
        test_frac: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Build the shared frequency vocabulary from a tokenized corpus.
    BuildVocab {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Maximum number of ordinary entries; the four specials ride on top.
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Train a model; supports fine-tuning from an existing checkpoint.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        vocab: PathBuf,
        /// Checkpoint path to write.
        #[arg(long)]
        output: PathBuf,
        /// Training log CSV (default: <output>.log.csv).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Start from this checkpoint instead of fresh initialization.
        #[arg(long)]
        finetune_from: Option<PathBuf>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        clip_norm: Option<f64>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        emb_dim: Option<usize>,
        #[arg(long)]
        enc_hidden: Option<usize>,
        #[arg(long)]
        dec_hidden: Option<usize>,
        #[arg(long)]
        num_heads: Option<usize>,
        #[arg(long)]
        ffn_dim: Option<usize>,
        #[arg(long)]
        dropout: Option<f64>,
        /// Ablation: drop the per-equation attention block.
        #[arg(long)]
        no_math_block: bool,
        /// Ablation: drop the copy mechanism.
        #[arg(long)]
        no_copy: bool,
    },
    /// Generate headlines with beam search.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        min_len: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        /// Dataset profile supplying a minimum output length.
        #[arg(long, value_enum)]
        profile: Option<Profile>,
        /// Directory for per-example attention TSV matrices.
        #[arg(long)]
        attn_dump: Option<PathBuf>,
    },
    /// Score hypotheses against gold headlines.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Emit extractive baseline headlines.
    Baseline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Profile {
    Exeq,
    Ofeq,
}

impl Profile {
    fn min_len(self) -> usize {
        match self {
            Profile::Exeq => 20,
            Profile::Ofeq => 15,
        }
    }
}

/// Flat key-value config mirroring the training, model, and decode
/// settings. Unknown keys are rejected.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    lr: Option<f64>,
    adagrad_init_accum: Option<f64>,
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    clip_norm: Option<f64>,
    patience: Option<usize>,
    seed: Option<u64>,
    emb_dim: Option<usize>,
    enc_hidden: Option<usize>,
    dec_hidden: Option<usize>,
    num_heads: Option<usize>,
    ffn_dim: Option<usize>,
    dropout: Option<f64>,
    vocab_cap: Option<usize>,
    enable_math_block: Option<bool>,
    enable_copy: Option<bool>,
    beam: Option<usize>,
    min_len: Option<usize>,
    max_len: Option<usize>,
}

struct CliError {
    code: i32,
    message: String,
}

/// Writes to stdout, exiting quietly when the reader hangs up (EPIPE)
/// so the tool can sit in shell pipelines.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_all(text.as_bytes()) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: stdout: {e}");
        std::process::exit(2);
    }
}

fn say(line: impl std::fmt::Display) {
    emit(&format!("{line}\n"));
}

fn validation(err: impl std::fmt::Display) -> CliError {
    CliError {
        code: 1,
        message: err.to_string(),
    }
}

fn runtime(err: impl std::fmt::Display) -> CliError {
    CliError {
        code: 2,
        message: err.to_string(),
    }
}

/// File-level failures are runtime errors; malformed content is a
/// validation error.
fn from_io(err: IoError) -> CliError {
    match err {
        IoError::File { .. } => runtime(err),
        _ => validation(err),
    }
}

fn from_vocab(err: VocabError) -> CliError {
    match err {
        VocabError::File { .. } => runtime(err),
        _ => validation(err),
    }
}

fn from_model(err: ModelError) -> CliError {
    match err {
        ModelError::File { .. } => runtime(err),
        _ => validation(err),
    }
}

fn from_train(err: TrainError) -> CliError {
    match err {
        TrainError::InvalidConfig(_) | TrainError::EmptyTrainSet => validation(err),
        _ => runtime(err),
    }
}

#[derive(Serialize)]
struct ManifestInput {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    subcommand: String,
    config: Option<String>,
    seed: u64,
    inputs: Vec<ManifestInput>,
    outputs: Vec<String>,
    unix_time: u64,
}

/// Records what a run read and wrote, at `<primary>.manifest.json`.
fn write_manifest(
    primary: &Path,
    subcommand: &str,
    config: Option<&Path>,
    seed: u64,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<(), CliError> {
    let mut resolved = Vec::with_capacity(inputs.len());
    for path in inputs {
        resolved.push(ManifestInput {
            path: path.display().to_string(),
            sha256: io::sha256_hex(path).map_err(from_io)?,
        });
    }
    let manifest = RunManifest {
        subcommand: subcommand.to_string(),
        config: config.map(|p| p.display().to_string()),
        seed,
        inputs: resolved,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        unix_time: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let path = PathBuf::from(format!("{}.manifest.json", primary.display()));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n")
        .map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {}", err.message);
        std::process::exit(err.code);
    }
}

fn load_config(cli: &Cli) -> Result<(FileConfig, Option<PathBuf>), CliError> {
    let path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let Some(path) = path else {
        return Ok((FileConfig::default(), None));
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| validation(format!("config {}: {e}", path.display())))?;
    let cfg: FileConfig = toml::from_str(&text)
        .map_err(|e| validation(format!("config {}: {e}", path.display())))?;
    Ok((cfg, Some(path)))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (config, config_path) = load_config(&cli)?;
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    let config_path = config_path.as_deref();
    match cli.command {
        Command::Ingest {
            ref input,
            ref output,
            ref report,
        } => cmd_ingest(input, output, report.as_deref(), config_path, seed),
        Command::Stats {
            ref input,
            ref output,
        } => cmd_stats(input, output.as_deref(), config_path, seed),
        Command::Split {
            ref input,
            train_frac,
            val_frac,
            test_frac,
            ref out_dir,
        } => cmd_split(
            input,
            SplitSpec {
                train_frac,
                val_frac,
                test_frac,
                seed,
            },
            out_dir,
            config_path,
        ),
        Command::BuildVocab {
            ref input,
            ref output,
            cap,
        } => {
            let cap = cap
                .or(config.vocab_cap)
                .unwrap_or(Hyperparams::default().vocab_cap);
            cmd_build_vocab(input, output, cap, config_path, seed)
        }
        Command::Train { .. } => cmd_train(&cli.command, &config, config_path, seed),
        Command::Decode { .. } => cmd_decode(&cli.command, &config, config_path, seed),
        Command::Eval {
            ref gold,
            ref hyp,
            ref output,
        } => cmd_eval(gold, hyp, output.as_deref(), config_path, seed),
        Command::Baseline {
            ref input,
            ref method,
            ref output,
        } => cmd_baseline(input, method, output, config_path, seed),
    }
}

fn cmd_ingest(
    input: &Path,
    output: &Path,
    report_path: Option<&Path>,
    config: Option<&Path>,
    seed: u64,
) -> Result<(), CliError> {
    let raw = io::read_raw_pairs(input).map_err(from_io)?;
    let (pairs, report) = corpus::ingest(&raw);
    io::write_tokenized_pairs(output, &pairs).map_err(from_io)?;
    let report_json = serde_json::to_string_pretty(&report).expect("report serializes");
    say(&report_json);
    let mut outputs: Vec<&Path> = vec![output];
    if let Some(path) = report_path {
        std::fs::write(path, report_json + "\n")
            .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        outputs.push(path);
    }
    write_manifest(output, "ingest", config, seed, &[input], &outputs)
}

fn cmd_stats(
    input: &Path,
    output: Option<&Path>,
    config: Option<&Path>,
    seed: u64,
) -> Result<(), CliError> {
    let pairs = io::read_tokenized_pairs(input).map_err(from_io)?;
    let stats = corpus::corpus_stats(&pairs).map_err(validation)?;
    let novel: std::collections::BTreeMap<String, f64> = (1..=4)
        .map(|n| {
            (
                n.to_string(),
                corpus::novel_ngram_proportion(&pairs, n),
            )
        })
        .collect();
    let doc = serde_json::json!({
        "pairs": stats.pairs,
        "source": stats.source,
        "target": stats.target,
        "novel_ngram_proportion": novel,
    });
    let text = serde_json::to_string_pretty(&doc).expect("stats serialize");
    say(&text);
    let mut outputs: Vec<&Path> = Vec::new();
    if let Some(path) = output {
        std::fs::write(path, text + "\n")
            .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        outputs.push(path);
    }
    let primary = output.unwrap_or(input);
    write_manifest(primary, "stats", config, seed, &[input], &outputs)
}

fn cmd_split(
    input: &Path,
    spec: SplitSpec,
    out_dir: &Path,
    config: Option<&Path>,
) -> Result<(), CliError> {
    let pairs = io::read_tokenized_pairs(input).map_err(from_io)?;
    let seed = spec.seed;
    let (train, val, test) = corpus::split_corpus(pairs, &spec).map_err(validation)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| runtime(format!("{}: {e}", out_dir.display())))?;
    let train_path = out_dir.join("train.jsonl");
    let val_path = out_dir.join("val.jsonl");
    let test_path = out_dir.join("test.jsonl");
    io::write_tokenized_pairs(&train_path, &train).map_err(from_io)?;
    io::write_tokenized_pairs(&val_path, &val).map_err(from_io)?;
    io::write_tokenized_pairs(&test_path, &test).map_err(from_io)?;
    say(format_args!(
        "split {} pairs into train {} / val {} / test {}",
        train.len() + val.len() + test.len(),
        train.len(),
        val.len(),
        test.len()
    ));
    write_manifest(
        &out_dir.join("split"),
        "split",
        config,
        seed,
        &[input],
        &[&train_path, &val_path, &test_path],
    )
}

fn cmd_build_vocab(
    input: &Path,
    output: &Path,
    cap: usize,
    config: Option<&Path>,
    seed: u64,
) -> Result<(), CliError> {
    let pairs = io::read_tokenized_pairs(input).map_err(from_io)?;
    let vocab = mathsum::vocab::build_vocab(&pairs, cap).map_err(from_vocab)?;
    vocab.save(output).map_err(from_vocab)?;
    say(format_args!("vocabulary of {} entries written", vocab.size()));
    write_manifest(output, "build-vocab", config, seed, &[input], &[output])
}

fn load_examples(path: &Path, vocab: &Vocabulary) -> Result<Vec<TrainExample>, CliError> {
    let pairs = io::read_tokenized_pairs(path).map_err(from_io)?;
    Ok(pairs
        .iter()
        .map(|pair| TrainExample {
            encoded: vocab.encode(pair),
            src_spans: pair.source_spans.clone(),
        })
        .collect())
}

fn cmd_train(
    cmd: &Command,
    config: &FileConfig,
    config_path: Option<&Path>,
    seed: u64,
) -> Result<(), CliError> {
    let Command::Train {
        train,
        val,
        vocab,
        output,
        log,
        finetune_from,
        lr,
        batch_size,
        max_epochs,
        clip_norm,
        patience,
        emb_dim,
        enc_hidden,
        dec_hidden,
        num_heads,
        ffn_dim,
        dropout,
        no_math_block,
        no_copy,
    } = cmd
    else {
        unreachable!()
    };
    let defaults = TrainConfig::default();
    let train_cfg = TrainConfig {
        lr: lr.or(config.lr).unwrap_or(defaults.lr),
        adagrad_init_accum: config
            .adagrad_init_accum
            .unwrap_or(defaults.adagrad_init_accum),
        batch_size: batch_size.or(config.batch_size).unwrap_or(defaults.batch_size),
        max_epochs: max_epochs.or(config.max_epochs).unwrap_or(defaults.max_epochs),
        clip_norm: clip_norm.or(config.clip_norm).unwrap_or(defaults.clip_norm),
        patience: patience.or(config.patience).unwrap_or(defaults.patience),
        seed,
    };
    train_cfg.validate().map_err(validation)?;

    let vocabulary = Vocabulary::load(vocab).map_err(from_vocab)?;
    let train_set = load_examples(train, &vocabulary)?;
    let val_set = match val {
        Some(path) => load_examples(path, &vocabulary)?,
        None => Vec::new(),
    };

    let model = match finetune_from {
        Some(ckpt) => {
            let model = MathSum::load(ckpt).map_err(from_model)?;
            if model.vocab_size() != vocabulary.size() {
                return Err(validation(format!(
                    "checkpoint vocabulary size {} does not match {} entries in {}",
                    model.vocab_size(),
                    vocabulary.size(),
                    vocab.display()
                )));
            }
            model
        }
        None => {
            let hp_defaults = Hyperparams::default();
            let hp = Hyperparams {
                emb_dim: emb_dim.or(config.emb_dim).unwrap_or(hp_defaults.emb_dim),
                enc_hidden: enc_hidden
                    .or(config.enc_hidden)
                    .unwrap_or(hp_defaults.enc_hidden),
                dec_hidden: dec_hidden
                    .or(config.dec_hidden)
                    .unwrap_or(hp_defaults.dec_hidden),
                num_heads: num_heads.or(config.num_heads).unwrap_or(hp_defaults.num_heads),
                ffn_dim: ffn_dim.or(config.ffn_dim).unwrap_or(hp_defaults.ffn_dim),
                dropout: dropout.or(config.dropout).unwrap_or(hp_defaults.dropout),
                vocab_cap: config.vocab_cap.unwrap_or(hp_defaults.vocab_cap),
                enable_math_block: if *no_math_block {
                    false
                } else {
                    config.enable_math_block.unwrap_or(true)
                },
                enable_copy: if *no_copy {
                    false
                } else {
                    config.enable_copy.unwrap_or(true)
                },
            };
            MathSum::new(hp, vocabulary.size(), seed).map_err(from_model)?
        }
    };

    let outcome = training::train(model, &train_set, &val_set, &train_cfg).map_err(from_train)?;
    outcome.model.save(output).map_err(from_model)?;
    let log_path = log
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.log.csv", output.display())));
    training::write_log_csv(&log_path, &outcome.log).map_err(from_train)?;
    say(format_args!(
        "trained {} epochs (best validation loss {:.6}{}); checkpoint at {}",
        outcome.epochs_run,
        outcome.best_val_loss,
        if outcome.stopped_early {
            ", stopped early"
        } else {
            ""
        },
        output.display()
    ));

    let mut inputs: Vec<&Path> = vec![train, vocab];
    if let Some(path) = val {
        inputs.push(path);
    }
    if let Some(path) = finetune_from {
        inputs.push(path);
    }
    write_manifest(
        output,
        "train",
        config_path,
        seed,
        &inputs,
        &[output, &log_path],
    )
}

/// Ids become file names for attention dumps; anything outside
/// [A-Za-z0-9._-] is mapped to '_'.
fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_decode(
    cmd: &Command,
    config: &FileConfig,
    config_path: Option<&Path>,
    seed: u64,
) -> Result<(), CliError> {
    let Command::Decode {
        model,
        vocab,
        input,
        output,
        beam,
        min_len,
        max_len,
        profile,
        attn_dump,
    } = cmd
    else {
        unreachable!()
    };
    let settings = DecodeSettings {
        beam: beam.or(config.beam).unwrap_or(decoding::DEFAULT_BEAM),
        min_len: min_len
            .or(profile.map(Profile::min_len))
            .or(config.min_len)
            .unwrap_or(1),
        max_len: max_len.or(config.max_len).unwrap_or(decoding::DEFAULT_MAX_LEN),
    };
    settings.validate().map_err(validation)?;

    let net = MathSum::load(model).map_err(from_model)?;
    let vocabulary = Vocabulary::load(vocab).map_err(from_vocab)?;
    if net.vocab_size() != vocabulary.size() {
        return Err(validation(format!(
            "checkpoint vocabulary size {} does not match {} entries in {}",
            net.vocab_size(),
            vocabulary.size(),
            vocab.display()
        )));
    }
    let pairs = io::read_tokenized_pairs(input).map_err(from_io)?;
    if let Some(dir) = attn_dump {
        std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    }

    let mut records = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        let encoded = vocabulary.encode(pair);
        let session = net
            .start_inference(
                &encoded.src_ids,
                &encoded.src_ext_ids,
                &pair.source_spans,
                encoded.oov_list.len(),
            )
            .map_err(runtime)?;
        let hyp = decoding::beam_search(&session, &settings).map_err(runtime)?;
        let surfaces = vocabulary
            .decode_ids(&hyp.ids, &encoded.oov_list)
            .map_err(runtime)?;
        if let Some(dir) = attn_dump {
            let dump = dir.join(format!("{}.tsv", sanitize_id(&pair.id)));
            let src: Vec<String> = pair.source.iter().map(|t| t.surface.clone()).collect();
            decoding::export_attention(&dump, &src, &surfaces, &hyp.attentions[..surfaces.len()])
                .map_err(runtime)?;
        }
        records.push(HypothesisRecord {
            id: pair.id.clone(),
            hypothesis: surfaces.join(" "),
            log_prob: hyp.log_prob,
        });
    }
    io::write_jsonl(output, &records).map_err(from_io)?;
    say(format_args!("decoded {} pairs to {}", records.len(), output.display()));
    write_manifest(
        output,
        "decode",
        config_path,
        seed,
        &[input, model, vocab],
        &[output],
    )
}

fn cmd_eval(
    gold: &Path,
    hyp: &Path,
    output: Option<&Path>,
    config: Option<&Path>,
    seed: u64,
) -> Result<(), CliError> {
    let gold_pairs = io::read_tokenized_pairs(gold).map_err(from_io)?;
    let hyps: Vec<HypothesisRecord> = io::read_jsonl(hyp).map_err(from_io)?;
    let samples = eval::align_hypotheses(&gold_pairs, &hyps).map_err(validation)?;
    let (report, repairs) = eval::evaluate_corpus(&samples).map_err(validation)?;
    emit(&report.render_table());
    if repairs.total() > 0 {
        say(format_args!(
            "marker repairs: {} closed, {} stray dropped, {} nested dropped",
            repairs.appended_close, repairs.dropped_stray_close, repairs.dropped_nested_open
        ));
    }
    let mut doc = report.scaled_json();
    doc["repairs"] = serde_json::to_value(repairs).expect("repairs serialize");
    let mut outputs: Vec<&Path> = Vec::new();
    if let Some(path) = output {
        let text = serde_json::to_string_pretty(&doc).expect("report serializes");
        std::fs::write(path, text + "\n")
            .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        outputs.push(path);
    }
    let primary = output.unwrap_or(hyp);
    write_manifest(primary, "eval", config, seed, &[gold, hyp], &outputs)
}

fn cmd_baseline(
    input: &Path,
    method: &str,
    output: &Path,
    config: Option<&Path>,
    seed: u64,
) -> Result<(), CliError> {
    let method: BaselineMethod = method.parse().map_err(validation)?;
    let pairs = io::read_tokenized_pairs(input).map_err(from_io)?;
    let mut records = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        let sentence = eval::baseline_select(pair, method, seed).map_err(validation)?;
        let surfaces: Vec<&str> = sentence.iter().map(|t| t.surface.as_str()).collect();
        records.push(HypothesisRecord {
            id: pair.id.clone(),
            hypothesis: surfaces.join(" "),
            log_prob: 0.0,
        });
    }
    io::write_jsonl(output, &records).map_err(from_io)?;
    say(format_args!(
        "{} baseline headlines for {} pairs at {}",
        records.len(),
        pairs.len(),
        output.display()
    ));
    write_manifest(output, "baseline", config, seed, &[input], &[output])
}
