//! `histruct` command-line tool.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use histruct::corpus::{
    corpus_stats, load_corpus, load_labeled_corpus, segment_plain_text, write_corpus, write_labeled_corpus,
    Hierarchy, LabeledDocument, TitleClassDictionary,
};
use histruct::encoder::build_vocab;
use histruct::pipeline::{
    evaluate_baseline, evaluate_models, generate_synthetic, label_corpus, train, EvalMode, EvaluationReport,
    ExperimentConfig, SelectionConfig, SyntheticSpec,
};
use histruct::summarizer::distribution_csv;
use histruct::HiStructModel;

#[derive(Parser)]
#[command(name = "histruct", version, about = "Hierarchical-structure-aware extractive summarization")]
struct Cli {
    /// Experiment configuration (TOML); for `synth`, a synthetic corpus spec.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file or directory; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment plain-text files into a JSONL corpus at `--out`.
    ///
    /// Blank lines separate paragraphs. A sibling file with the extension
    /// `.summary` supplies the gold summary.
    Preprocess {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Corpus statistics as CSV.
    Stats {
        corpus: PathBuf,
        #[arg(long, value_enum)]
        hierarchy: Option<HierarchyArg>,
    },
    /// Add greedy oracle labels to a corpus; writes to `--out`.
    Oracle {
        corpus: PathBuf,
        /// Maximum number of positive sentences per document.
        #[arg(long, default_value_t = 7)]
        max_sentences: usize,
    },
    /// Train a model; checkpoints go to the `--out` directory.
    Train,
    /// Score and select sentences, one JSON object per document.
    Predict {
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        selection: SelectionArgs,
    },
    /// ROUGE report of checkpoints, the oracle or a lead baseline.
    Evaluate {
        corpus: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        selection: SelectionArgs,
        /// Also write the position distribution CSV here.
        #[arg(long)]
        distribution: Option<PathBuf>,
    },
    /// Proportion of summaries selecting each sentence position.
    Distribution {
        corpus: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        selection: SelectionArgs,
    },
    /// Generate a synthetic corpus into the `--out` directory.
    Synth,
}

#[derive(Clone, Copy, ValueEnum)]
enum HierarchyArg {
    Sections,
    Paragraphs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Model,
    Oracle,
    Lead,
}

#[derive(Args)]
struct SourceArgs {
    #[arg(long, value_enum, default_value = "model")]
    mode: Mode,
    /// Checkpoints to evaluate; the report averages them.
    #[arg(long = "checkpoint")]
    checkpoints: Vec<PathBuf>,
    /// Sentences taken by the lead baseline.
    #[arg(long, default_value_t = 3)]
    lead_n: usize,
}

#[derive(Args)]
struct SelectionArgs {
    /// Sentences per summary.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trigram_blocking: bool,
    /// Positions at or beyond this index share one distribution bucket.
    #[arg(long)]
    max_index: Option<usize>,
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Usage(msg.into()).into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.chain().find_map(|e| e.downcast_ref::<histruct::Error>()) {
        return if e.is_numeric() {
            3
        } else if e.is_data() {
            2
        } else {
            1
        };
    }
    if err.chain().any(|e| e.is::<Usage>()) {
        1
    } else {
        2
    }
}

fn run(cli: Cli) -> Result<()> {
    let Cli {
        config,
        seed,
        out,
        command,
    } = cli;
    let out = out.as_deref();
    match command {
        Command::Preprocess { inputs } => {
            let Some(path) = out else {
                return usage("preprocess needs --out <corpus.jsonl>");
            };
            preprocess(&inputs, path)
        }
        Command::Stats { corpus, hierarchy } => {
            let docs = load_corpus(&corpus)?;
            let h = match hierarchy {
                Some(HierarchyArg::Sections) => Hierarchy::Sections,
                Some(HierarchyArg::Paragraphs) => Hierarchy::Paragraphs,
                None => Hierarchy::detect(&docs),
            };
            emit(out, &corpus_stats(&docs, h)?.to_csv())
        }
        Command::Oracle { corpus, max_sentences } => {
            if max_sentences == 0 {
                return usage("--max-sentences must be at least 1");
            }
            let Some(path) = out else {
                return usage("oracle needs --out <corpus.jsonl>");
            };
            let docs = load_corpus(&corpus)?;
            Ok(write_labeled_corpus(path, &label_corpus(&docs, max_sentences)?)?)
        }
        Command::Train => {
            let Some(dir) = out else {
                return usage("train needs --out <directory> for checkpoints");
            };
            let cfg = experiment(config.as_deref())?;
            train_command(&cfg, seed, dir)
        }
        Command::Predict {
            corpus,
            checkpoint,
            selection,
        } => {
            let sel = selection_config(config.as_deref(), &selection)?;
            let (model, _) = HiStructModel::load(&checkpoint)?;
            let docs = load_corpus(&corpus)?;
            let mut text = String::new();
            for d in &docs {
                let p = model.predict(d, sel.n, sel.trigram_blocking)?;
                text.push_str(&serde_json::to_string(&p)?);
                text.push('\n');
            }
            emit(out, &text)
        }
        Command::Evaluate {
            corpus,
            source,
            selection,
            distribution,
        } => {
            let sel = selection_config(config.as_deref(), &selection)?;
            let report = report(&corpus, &source, &sel)?;
            if let Some(p) = distribution {
                write_file(&p, &distribution_csv(&report.distribution))?;
            }
            emit(out, &report.to_csv())
        }
        Command::Distribution {
            corpus,
            source,
            selection,
        } => {
            let sel = selection_config(config.as_deref(), &selection)?;
            let report = report(&corpus, &source, &sel)?;
            emit(out, &distribution_csv(&report.distribution))
        }
        Command::Synth => {
            let Some(dir) = out else {
                return usage("synth needs --out <directory>");
            };
            let mut spec = match &config {
                Some(p) => {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    toml::from_str::<SyntheticSpec>(&text).map_err(|e| Usage(format!("{}: {e}", p.display())))?
                }
                None => SyntheticSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let corpus = generate_synthetic(&spec, &TitleClassDictionary::scientific())?;
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write_corpus(dir.join("train.jsonl"), &corpus.train)?;
            write_corpus(dir.join("valid.jsonl"), &corpus.valid)?;
            write_corpus(dir.join("test.jsonl"), &corpus.test)?;
            log::info!(
                "wrote {}/{}/{} documents to {}",
                corpus.train.len(),
                corpus.valid.len(),
                corpus.test.len(),
                dir.display()
            );
            Ok(())
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn experiment(path: Option<&Path>) -> Result<ExperimentConfig> {
    let Some(path) = path else {
        return usage("this command needs --config <experiment.toml>");
    };
    Ok(ExperimentConfig::load(path)?)
}

fn selection_config(config: Option<&Path>, args: &SelectionArgs) -> Result<SelectionConfig> {
    let mut sel = match config {
        Some(p) => experiment(Some(p))?.selection,
        None => SelectionConfig::default(),
    };
    if let Some(n) = args.n {
        sel.n = n;
    }
    if args.trigram_blocking {
        sel.trigram_blocking = true;
    }
    if let Some(m) = args.max_index {
        sel.max_index = m;
    }
    if sel.n == 0 {
        return usage("--n must be at least 1");
    }
    Ok(sel)
}

fn preprocess(inputs: &[PathBuf], out: &Path) -> Result<()> {
    let mut docs = Vec::with_capacity(inputs.len());
    for path in inputs {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let mut doc = segment_plain_text(&id, &text).with_context(|| format!("segmenting {}", path.display()))?;
        let sidecar = path.with_extension("summary");
        if sidecar.is_file() {
            let summary = fs::read_to_string(&sidecar).with_context(|| format!("reading {}", sidecar.display()))?;
            let gold = segment_plain_text(&id, &summary)?.sentence_texts();
            doc = doc.with_gold_summary(gold);
        }
        docs.push(doc);
    }
    Ok(write_corpus(out, &docs)?)
}

fn require_labels(docs: &[LabeledDocument], what: &str) -> Result<()> {
    if let Some(d) = docs.iter().find(|d| d.labels.is_none()) {
        bail!(
            "{what} document {:?} has no labels; run `histruct oracle` first",
            d.document.id()
        );
    }
    Ok(())
}

fn train_command(cfg: &ExperimentConfig, seed: Option<u64>, dir: &Path) -> Result<()> {
    let (Some(train_path), Some(valid_path)) = (&cfg.corpus.train, &cfg.corpus.valid) else {
        return usage("the configuration needs corpus.train and corpus.valid");
    };
    let train_docs = load_labeled_corpus(train_path)?;
    let valid_docs = load_labeled_corpus(valid_path)?;
    require_labels(&train_docs, "training")?;
    require_labels(&valid_docs, "validation")?;
    let titles = match &cfg.corpus.titles {
        Some(p) => TitleClassDictionary::load(p)?,
        None => TitleClassDictionary::scientific(),
    };
    let plain: Vec<_> = train_docs.iter().map(|d| d.document.clone()).collect();
    let vocab = build_vocab(&plain, cfg.corpus.min_freq)?;
    let mut tc = cfg.train.clone();
    if let Some(s) = seed {
        tc.seed = s;
    }
    let model = HiStructModel::new(cfg.model_config(), vocab, titles, tc.seed)?;
    for (group, count) in model.parameter_counts() {
        log::info!("{group}: {count} parameters");
    }
    let outcome = train(model, &train_docs, &valid_docs, &tc, Some(dir))?;
    let mut log_csv = String::from("step,validation_loss\n");
    for e in &outcome.evals {
        log_csv.push_str(&format!("{},{:.6}\n", e.step, e.validation_loss));
    }
    write_file(&dir.join("validation.csv"), &log_csv)?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?).context("writing config copy")?;
    for c in &outcome.checkpoints {
        if let Some(p) = &c.path {
            println!("{}\t{}\t{:.6}", p.display(), c.step, c.validation_loss);
        }
    }
    Ok(())
}

fn report(corpus: &Path, source: &SourceArgs, sel: &SelectionConfig) -> Result<EvaluationReport> {
    let docs = load_labeled_corpus(corpus)?;
    match source.mode {
        Mode::Oracle => Ok(evaluate_baseline(EvalMode::Oracle, &docs, sel)?),
        Mode::Lead => {
            if source.lead_n == 0 {
                return usage("--lead-n must be at least 1");
            }
            Ok(evaluate_baseline(EvalMode::Lead(source.lead_n), &docs, sel)?)
        }
        Mode::Model => {
            if source.checkpoints.is_empty() {
                return usage("model mode needs at least one --checkpoint");
            }
            let mut models = Vec::with_capacity(source.checkpoints.len());
            for p in &source.checkpoints {
                let (m, meta) = HiStructModel::load(p)?;
                let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                log::info!("loaded {name} (step {}, validation loss {:.4})", meta.step, meta.validation_loss);
                models.push((name, m));
            }
            let named: Vec<(String, &HiStructModel)> = models.iter().map(|(n, m)| (n.clone(), m)).collect();
            Ok(evaluate_models(&named, &docs, sel)?)
        }
    }
}
