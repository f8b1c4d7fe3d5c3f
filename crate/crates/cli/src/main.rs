use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(
    name = "chemlink",
    version,
    about = "Chemical mention tagging, evaluation and MeSH linking"
)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// More log output on stderr; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
pub struct CorpusIn {
    /// Corpus JSONL.
    pub corpus: PathBuf,
    /// Reject unknown keys instead of warning.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args)]
pub struct Output {
    /// Output file (default: stdout).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Strict,
    Approximate,
}

impl From<ModeArg> for chemlink::MatchMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Strict => chemlink::MatchMode::Strict,
            ModeArg::Approximate => chemlink::MatchMode::Approximate,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Ner,
    Linking,
    Indexing,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum StyleArg {
    Question,
    SpecialToken,
}

impl From<StyleArg> for chemlink::PromptStyle {
    fn from(s: StyleArg) -> Self {
        match s {
            StyleArg::Question => chemlink::PromptStyle::Question,
            StyleArg::SpecialToken => chemlink::PromptStyle::SpecialToken,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a corpus and print a JSON violation report; exits 1 on violations.
    Validate {
        #[command(flatten)]
        input: CorpusIn,
    },
    /// Sentence spans per document, with annotations that cross a boundary.
    Split {
        #[command(flatten)]
        input: CorpusIn,
        #[command(flatten)]
        out: Output,
    },
    /// Gold annotations to IOB2 labels over the given tokens.
    Encode {
        #[command(flatten)]
        input: CorpusIn,
        /// Token JSONL: {"doc_id", "tokens": [{"start", "length"}]}.
        #[arg(long)]
        tokens: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Label or probability JSONL back to a predicted corpus.
    Decode {
        /// Label JSONL or probability JSONL (detected by a "probs" key).
        input: PathBuf,
        /// Corpus supplying the document text.
        #[arg(long)]
        corpus: PathBuf,
        /// Ignore I- tags that do not continue an entity of the same type
        /// (default: treat them as B-).
        #[arg(long)]
        strict_decode: bool,
        #[command(flatten)]
        out: Output,
    },
    /// Weighted average of per-model token probabilities.
    Ensemble {
        /// Probability JSONL, one file per model; the file stem is the model id.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Comma-separated weights in input order (default: uniform).
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        #[command(flatten)]
        out: Output,
    },
    /// Mention-level precision, recall and F1.
    EvalNer {
        pred: PathBuf,
        gold: PathBuf,
        #[arg(long, value_enum, default_value = "strict")]
        mode: ModeArg,
    },
    /// Mention-level scores requiring the MeSH ids to match too.
    EvalLink {
        pred: PathBuf,
        gold: PathBuf,
        #[arg(long, value_enum, default_value = "strict")]
        mode: ModeArg,
    },
    /// Document-level topic scores over {"doc_id", "topics"} JSONL.
    EvalIndex {
        pred: PathBuf,
        gold: PathBuf,
        /// TSV mapping ids to a canonical id; makes matching approximate.
        #[arg(long)]
        equivalence: Option<PathBuf>,
    },
    /// Check an embedding TSV and rewrite it with unit vectors.
    IndexBuild {
        embeddings: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Nearest concepts for mention embeddings.
    Link {
        /// Concept embedding TSV.
        #[arg(long)]
        index: PathBuf,
        /// Query embedding TSV: query id, mention, vector.
        queries: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Leave mentions unlinked when the best score is below this.
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        out: Output,
    },
    /// Pull synonym embeddings of each concept together.
    Refine {
        embeddings: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        margin: f64,
        #[arg(long, default_value_t = 0.05)]
        learning_rate: f64,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the loss trace here, one value per line.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
    /// Corpus to prompt/target examples.
    Convert {
        #[command(flatten)]
        input: CorpusIn,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, value_enum, default_value = "question")]
        style: StyleArg,
        /// Gold topics JSONL, required for indexing.
        #[arg(long)]
        topics: Option<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
    /// Split generated answers into items.
    Parse {
        answers: PathBuf,
        /// Merge indexing answers into one topic list per document.
        #[arg(long)]
        aggregate: bool,
        #[command(flatten)]
        out: Output,
    },
    /// Place generated NER answers back into the documents as annotations.
    Recover {
        answers: PathBuf,
        #[command(flatten)]
        input: CorpusIn,
        #[arg(long, default_value = "Chemical")]
        entity_type: String,
        #[command(flatten)]
        out: Output,
    },
    /// Indexing windows per document.
    Windows {
        #[command(flatten)]
        input: CorpusIn,
        #[command(flatten)]
        out: Output,
    },
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        (false, _) => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()?;
    }
    use commands as c;
    match cli.command {
        Command::Validate { input } => c::validate(&input),
        Command::Split { input, out } => c::split(&input, &out),
        Command::Encode { input, tokens, out } => c::encode(&input, &tokens, &out),
        Command::Decode {
            input,
            corpus,
            strict_decode,
            out,
        } => c::decode(&input, &corpus, strict_decode, &out),
        Command::Ensemble {
            inputs,
            weights,
            out,
        } => c::ensemble(&inputs, weights, &out),
        Command::EvalNer { pred, gold, mode } => c::eval_mentions(&pred, &gold, mode.into(), false),
        Command::EvalLink { pred, gold, mode } => c::eval_mentions(&pred, &gold, mode.into(), true),
        Command::EvalIndex {
            pred,
            gold,
            equivalence,
        } => c::eval_index(&pred, &gold, equivalence.as_deref()),
        Command::IndexBuild { embeddings, out } => c::index_build(&embeddings, &out),
        Command::Link {
            index,
            queries,
            k,
            threshold,
            out,
        } => c::link(&index, &queries, k, threshold, &out),
        Command::Refine {
            embeddings,
            margin,
            learning_rate,
            epochs,
            batch_size,
            seed,
            trace,
            out,
        } => {
            let config = chemlink::RefineConfig {
                margin,
                learning_rate,
                epochs,
                batch_size,
                seed,
            };
            c::refine(&embeddings, &config, trace.as_deref(), &out)
        }
        Command::Convert {
            input,
            task,
            style,
            topics,
            out,
        } => c::convert(&input, task, style.into(), topics.as_deref(), &out),
        Command::Parse {
            answers,
            aggregate,
            out,
        } => c::parse(&answers, aggregate, &out),
        Command::Recover {
            answers,
            input,
            entity_type,
            out,
        } => c::recover(&answers, &input, &entity_type, &out),
        Command::Windows { input, out } => c::windows(&input, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose, cli.quiet);
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
