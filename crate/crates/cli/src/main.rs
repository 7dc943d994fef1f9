use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use leaning::corpus::SpeechFormat;
use leaning::evaluation::HyperParams;
use leaning::explain::ShapMode;
use leaning::features::NgramRange;
use leaning::pipeline::{Emit, Overrides, PipelineConfig, PipelineError, Workspace};

/// Classify parliamentary speeches by political leaning and explain the models.
///
/// Settings come from built-in defaults, overridden by `--config`, overridden
/// by command-line flags.
#[derive(Debug, Parser)]
#[command(name = "leaning", version)]
struct Cli {
    /// JSON pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding all artifacts of a run.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report formats to write, comma separated (csv, json, svg).
    #[arg(long, global = true, value_delimiter = ',')]
    emit: Option<Vec<Emit>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Jsonl,
    Tsv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Kernel,
    Linear,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate raw inputs and store normalized copies in the workdir.
    Ingest {
        #[arg(long)]
        speeches: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Party registry TSV (party_id, name, abbreviation, position).
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Topic keyword lexicon, one lemma per line.
        #[arg(long)]
        keywords: Option<PathBuf>,
        #[arg(long)]
        stopwords: Option<PathBuf>,
    },
    /// Label MP speeches by party leaning and keep those on the topic.
    Select,
    /// Corpus statistics and keyword shares of the selected dataset.
    Stats,
    /// Nested cross-validation for each n-gram range of the grid.
    Evaluate {
        /// N-gram ranges such as `1-1` or `1-3`; replaces the configured list.
        #[arg(long = "ngram", value_delimiter = ',')]
        ngram: Option<Vec<NgramRange>>,
        /// C values; replaces the configured list.
        #[arg(long = "c", value_delimiter = ',')]
        c: Option<Vec<f64>>,
    },
    /// Fit the final model on the whole dataset.
    Train {
        /// Use this n-gram range instead of the evaluated best.
        #[arg(long, requires = "c")]
        ngram: Option<NgramRange>,
        /// Use this C instead of the evaluated best.
        #[arg(long, requires = "ngram")]
        c: Option<f64>,
    },
    /// Weight importance and aggregated Shapley attributions of the model.
    Explain {
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Render tables and charts from existing artifacts.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Ingest { .. } => "ingest",
            Self::Select => "select",
            Self::Stats => "stats",
            Self::Evaluate { .. } => "evaluate",
            Self::Train { .. } => "train",
            Self::Explain { .. } => "explain",
            Self::Report => "report",
        }
    }
}

fn overrides(cli: &Cli) -> Overrides {
    let mut o = Overrides {
        seed: cli.seed,
        workdir: cli.workdir.clone(),
        emit: cli.emit.as_ref().map(|e| e.iter().copied().collect()),
        ..Overrides::default()
    };
    match &cli.command {
        Command::Ingest {
            speeches,
            format,
            registry,
            keywords,
            stopwords,
        } => {
            o.speeches = speeches.clone();
            o.speeches_format = format.map(|f| match f {
                Format::Jsonl => SpeechFormat::Jsonl,
                Format::Tsv => SpeechFormat::Tsv,
            });
            o.registry = registry.clone();
            o.keywords = keywords.clone();
            o.stopwords = stopwords.clone();
        }
        Command::Evaluate { ngram, c } => {
            o.ngram_ranges = ngram.clone();
            o.c_values = c.clone();
        }
        Command::Explain { top_k, mode } => {
            o.top_k = *top_k;
            o.shap_mode = mode.map(|m| match m {
                Mode::Exact => ShapMode::Exact,
                Mode::Kernel => ShapMode::Kernel,
                Mode::Linear => ShapMode::Linear,
            });
        }
        _ => {}
    }
    o
}

fn run_command(ws: &mut Workspace, command: &Command) -> Result<String, PipelineError> {
    Ok(match command {
        Command::Ingest { .. } => {
            let s = ws.ingest()?;
            format!(
                "ingested {} speeches ({} by MPs), {} parties, {} keywords from `{}`",
                s.n_speeches, s.n_mp_speeches, s.n_parties, s.n_keywords, s.lexicon_id
            )
        }
        Command::Select => {
            let d = ws.select()?;
            let p = &d.provenance;
            format!(
                "selected {} speeches (dropped: {} non-MP, {} centre, {} unknown party, {} off-topic)",
                d.len(),
                p.dropped_non_mp,
                p.dropped_center,
                p.dropped_unknown,
                p.dropped_off_topic
            )
        }
        Command::Stats => {
            let a = ws.stats()?;
            leaning::report::stats_table(&a.topic, &a.stats)
        }
        Command::Evaluate { .. } => {
            let e = ws.evaluate()?;
            leaning::report::accuracy_table(&e.rows)
        }
        Command::Train { ngram, c } => {
            let params = ngram.zip(*c).map(|(ngram_range, c)| HyperParams { ngram_range, c });
            let m = ws.train(params)?;
            format!(
                "trained on {} speeches with {}, C = {} ({} features)",
                m.n_train,
                m.params.ngram_range.label(),
                m.params.c,
                m.pipeline.tfidf.dims()
            )
        }
        Command::Explain { .. } => {
            let (imp, agg) = ws.explain()?;
            let names = |l: &[leaning::explain::RankedTerm]| l.iter().map(|t| t.term.as_str()).collect::<Vec<_>>().join(", ");
            format!(
                "left (weights): {}\nright (weights): {}\nleft (shapley): {}\nright (shapley): {}",
                names(&imp.left_terms),
                names(&imp.right_terms),
                names(&agg.report.left_tokens),
                names(&agg.report.right_tokens)
            )
        }
        Command::Report => format!("wrote {}", ws.report()?.join(", ")),
    })
}

fn run(cli: Cli) -> Result<String, PipelineError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    config.apply(overrides(&cli));
    let mut ws = Workspace::open(config)?;
    let result = run_command(&mut ws, &cli.command);
    ws.log_run(cli.command.name(), result.as_ref().map(|_| ()));
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(cli) {
        Ok(summary) => {
            println!("{}", summary.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
