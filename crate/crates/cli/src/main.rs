mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use authattr::disambig::{DbscanParams, DEFAULT_EPS, DEFAULT_MIN_PTS};
use authattr::encoder::NATIVE_DIM;
use authattr::error::SidecarError;
use authattr::evaluate::{DEFAULT_RATIO, DEFAULT_TOP_K};
use authattr::features::DEFAULT_MIN_COUNT;
use authattr::model::Mode;
use authattr::pipeline::{self, BuildOptions, EncoderSpec, EvalOptions, PredictOptions, TrainOptions, DEFAULT_TEST_RATIO};
use authattr::synth::SmokeConfig;
use authattr::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;

/// Authorship attribution from paper content and cited references.
#[derive(Debug, Parser)]
#[command(name = "authattr", version)]
struct Cli {
    /// Settings file with `key = value` lines; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a labeled dataset directory from a JSONL corpus.
    Build(BuildArgs),
    /// Train a classifier on a dataset.
    Train(TrainArgs),
    /// Score a checkpoint on the test split of a dataset.
    Eval(EvalArgs),
    /// Rank candidate authors of one plain-text manuscript.
    Predict(PredictArgs),
    /// Grid-search the name-disambiguation parameters on synthetic data.
    TuneDisambig(TuneArgs),
    /// Write a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EncoderKind {
    Native,
    Sidecar,
}

#[derive(Debug, Args)]
struct EncoderArgs {
    #[arg(long, value_enum)]
    encoder: Option<EncoderKind>,
    /// Dimension of the native encoder.
    #[arg(long)]
    encoder_dim: Option<usize>,
    /// `tcp://host:port` or `unix:/path`.
    #[arg(long)]
    sidecar_endpoint: Option<String>,
}

#[derive(Debug, Args)]
struct BuildArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Dataset directory to write.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    min_papers: Option<usize>,
    /// Cap on papers per author.
    #[arg(long)]
    trim: Option<usize>,
    /// Keep every content chunk instead of the first.
    #[arg(long)]
    chunked: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    test_ratio: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    min_pts: Option<usize>,
    /// Minimum citation count for the vocabulary written with the dataset.
    #[arg(long)]
    min_count: Option<usize>,
    #[command(flatten)]
    encoder: EncoderArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Checkpoint file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_count: Option<usize>,
    /// Scale each reference histogram to sum to one.
    #[arg(long)]
    normalize_hist: bool,
    #[arg(long)]
    workers: Option<usize>,
    /// Continue training from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[command(flatten)]
    encoder: EncoderArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Directory for the report files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Relative probability threshold for the author-count estimate.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Score only the first chunk of each paper.
    #[arg(long)]
    first_chunk_only: bool,
    #[arg(long)]
    sidecar_endpoint: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Plain-text manuscript.
    #[arg(long)]
    manuscript: Option<PathBuf>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    sidecar_endpoint: Option<String>,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    encoder: EncoderArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Directory for the corpus file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    authors: Option<usize>,
}

fn encoder_spec(args: EncoderArgs, cfg: &RunConfig) -> Result<EncoderSpec, Error> {
    let kind = match cfg.pick(args.encoder.map(|k| format!("{k:?}").to_lowercase()), "encoder")?.as_deref() {
        None | Some("native") => EncoderKind::Native,
        Some("sidecar") => EncoderKind::Sidecar,
        Some(other) => return Err(Error::config("encoder", format!("`{other}` is not native or sidecar"))),
    };
    match kind {
        EncoderKind::Native => Ok(EncoderSpec::Native {
            dim: cfg.pick(args.encoder_dim, "encoder-dim")?.unwrap_or(NATIVE_DIM),
            seed: 0,
        }),
        EncoderKind::Sidecar => Ok(EncoderSpec::Sidecar {
            endpoint: cfg.require(args.sidecar_endpoint, "sidecar-endpoint")?,
        }),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Build(a) => {
            let mut o = BuildOptions::new(
                cfg.require(a.corpus, "corpus")?,
                cfg.require(a.out, "out")?,
                cfg.require(a.min_papers, "min-papers")?,
            );
            o.trim = cfg.pick(a.trim, "trim")?;
            o.chunked = cfg.switch(a.chunked, "chunked")?;
            o.seed = cfg.pick(a.seed, "seed")?.unwrap_or(0);
            o.test_ratio = cfg.pick(a.test_ratio, "test-ratio")?.unwrap_or(DEFAULT_TEST_RATIO);
            o.workers = cfg.pick(a.workers, "workers")?.unwrap_or(1);
            o.dbscan = DbscanParams {
                eps: cfg.pick(a.eps, "eps")?.unwrap_or(DEFAULT_EPS),
                min_pts: cfg.pick(a.min_pts, "min-pts")?.unwrap_or(DEFAULT_MIN_PTS),
                ..DbscanParams::default()
            };
            o.min_count = cfg.pick(a.min_count, "min-count")?.unwrap_or(DEFAULT_MIN_COUNT);
            o.encoder = encoder_spec(a.encoder, &cfg)?;
            let s = pipeline::cmd_build(&o)?;
            println!("dataset {} at {}", s.name, o.out.display());
            println!("labels {}  train {}  test {}  dropped {}", s.labels, s.train, s.test, s.dropped);
            if !s.discarded_authors.is_empty() {
                println!("discarded as ambiguous: {}", s.discarded_authors.join(", "));
            }
        }
        Command::Train(a) => {
            let mut o = TrainOptions::new(
                cfg.require(a.dataset, "dataset")?,
                cfg.require(a.out, "out")?,
                cfg.require(a.mode, "mode")?,
            );
            o.learning_rate = cfg.pick(a.lr, "lr")?;
            o.epochs = cfg.pick(a.epochs, "epochs")?;
            o.batch_size = cfg.pick(a.batch_size, "batch-size")?;
            o.seed = cfg.pick(a.seed, "seed")?.unwrap_or(0);
            o.min_count = cfg.pick(a.min_count, "min-count")?.unwrap_or(DEFAULT_MIN_COUNT);
            o.normalize_hist = cfg.switch(a.normalize_hist, "normalize-hist")?;
            o.workers = cfg.pick(a.workers, "workers")?.unwrap_or(1);
            o.resume = cfg.pick(a.resume, "resume")?;
            o.encoder = encoder_spec(a.encoder, &cfg)?;
            let s = pipeline::cmd_train(&o)?;
            println!("checkpoint {}", s.checkpoint.display());
            println!("examples {}  vocabulary {}  learning rate {}", s.examples, s.vocab, s.learning_rate);
            for (i, l) in s.epoch_losses.iter().enumerate() {
                println!("epoch {:>3}  loss {l:.6}", i + 1);
            }
        }
        Command::Eval(a) => {
            let mut o = EvalOptions::new(
                cfg.require(a.checkpoint, "checkpoint")?,
                cfg.require(a.dataset, "dataset")?,
                cfg.require(a.out, "out")?,
            );
            o.ratio = cfg.pick(a.ratio, "ratio")?.unwrap_or(DEFAULT_RATIO);
            o.top_k = cfg.pick(a.top_k, "top-k")?.unwrap_or(DEFAULT_TOP_K);
            o.first_chunk_only = cfg.switch(a.first_chunk_only, "first-chunk-only")?;
            o.sidecar_endpoint = cfg.pick(a.sidecar_endpoint, "sidecar-endpoint")?;
            o.workers = cfg.pick(a.workers, "workers")?.unwrap_or(1);
            let report = pipeline::cmd_eval(&o)?;
            print!("{}", report.to_text());
        }
        Command::Predict(a) => {
            let o = PredictOptions {
                checkpoint: cfg.require(a.checkpoint, "checkpoint")?,
                manuscript: cfg.require(a.manuscript, "manuscript")?,
                top_k: cfg.pick(a.top_k, "top-k")?.unwrap_or(DEFAULT_TOP_K),
                ratio: cfg.pick(a.ratio, "ratio")?.unwrap_or(DEFAULT_RATIO),
                sidecar_endpoint: cfg.pick(a.sidecar_endpoint, "sidecar-endpoint")?,
            };
            let p = pipeline::cmd_predict(&o)?;
            for (i, r) in p.ranked.iter().enumerate() {
                println!("{:>2}  {:<32} {:.6}", i + 1, r.name, r.probability);
            }
            println!("estimated authors: {}", p.estimated_authors);
        }
        Command::TuneDisambig(a) => {
            let smoke = SmokeConfig {
                seed: cfg.pick(a.seed, "seed")?.unwrap_or(1),
                ..SmokeConfig::default()
            };
            let r = pipeline::cmd_tune_disambig(&smoke, &encoder_spec(a.encoder, &cfg)?)?;
            println!("eps {}  min-pts {}  correct {}/{}", r.params.eps, r.params.min_pts, r.correct, r.total);
        }
        Command::Synth(a) => {
            let mut smoke = SmokeConfig::default();
            smoke.seed = cfg.pick(a.seed, "seed")?.unwrap_or(smoke.seed);
            smoke.authors = cfg.pick(a.authors, "authors")?.unwrap_or(smoke.authors);
            let path = pipeline::cmd_synth(&cfg.require(a.out, "out")?, &smoke)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

/// 1 usage or configuration, 2 unusable data, 3 numeric failure, 4 i/o or an
/// unreachable embedding service.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 1,
        Error::FailFast { .. } | Error::Format { .. } | Error::Dataset(_) => 2,
        Error::Numeric(_) => 3,
        Error::Io { .. } | Error::Sidecar(SidecarError::Transport(_)) => 4,
        Error::Sidecar(_) => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
