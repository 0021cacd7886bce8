//! `dupscout`: ingest bug-report corpora, train retrieval artifacts, query for
//! duplicates, evaluate recall and serve the submission gate.
//!
//! Machine-readable output goes to stdout as JSON; diagnostics go to stderr.
//! Exit status is 0 on success, 1 on runtime errors and 2 on usage errors.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use dupscout_core::corpus::{self, Format};
use dupscout_core::metrics;
use dupscout_core::nominate::Algorithm;
use dupscout_core::pipeline::{read_artifact, write_artifact, RecentReports};
use dupscout_core::{Config, Pipeline, SplitSpec};
use dupscout_service::Gate;

const COLLECTION_FILE: &str = "collection.jsonl";
const SPLIT_FILE: &str = "split.json";
const CACHE_FILE: &str = "cache.json";

#[derive(Parser)]
#[command(name = "dupscout", version, about = "Duplicate bug-report retrieval")]
struct Cli {
    /// Flat key = value config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputFormat {
    Jsonl,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Auto,
    Brute,
    Kd,
    Ball,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus and write it as a JSONL collection.
    Ingest {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "jsonl")]
        format: InputFormat,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Split a collection, fit the feature space, build the index and train the pair classifier.
    Train {
        collection: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, value_enum)]
        algorithm: Option<AlgorithmArg>,
        #[arg(long)]
        holdout_fraction: Option<f64>,
    },
    /// Rank candidate duplicates for a report read as JSON from stdin.
    Query {
        artifacts: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        no_filter: bool,
        /// Register the report in the recent cache kept with the artifacts.
        #[arg(long)]
        submit: bool,
    },
    /// Score held-out duplicates and write metric artifacts.
    Evaluate {
        artifacts: PathBuf,
        /// Defaults to the split written by `train`.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        no_filter: bool,
        #[arg(long, default_value = "corpus")]
        dataset: String,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Serve the HTTP submission gate.
    Serve {
        artifacts: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli_config: Option<&Path>, seed: Option<u64>) -> Result<Config> {
    let mut config = match cli_config {
        Some(path) => Config::from_file(path).with_context(|| format!("loading config {}", path.display()))?,
        None => Config::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

/// A closed stdout (e.g. piped into `head`) is not an error.
fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("{n} {word}")
    } else {
        format!("{n} {word}s")
    }
}

fn run(cli: Cli) -> Result<()> {
    let config_path = cli.config.as_deref();
    match cli.command {
        Command::Ingest { input, format, output } => {
            let format = match format {
                InputFormat::Jsonl => Format::Jsonl,
                InputFormat::Csv => Format::Csv,
            };
            let (collection, load) =
                corpus::load_corpus(&input, format).with_context(|| format!("reading {}", input.display()))?;
            corpus::write_jsonl(&collection, &output)?;
            eprintln!(
                "{}, {}, {} cleared",
                plural(collection.len(), "report"),
                plural(collection.duplicate_links(), "duplicate link"),
                plural(load.cleared(), "dangling link")
            );
            print_json(&json!({
                "reports": collection.len(),
                "duplicate_links": collection.duplicate_links(),
                "dangling": load.dangling,
                "self_links": load.self_links,
                "output": output,
            }))
        }
        Command::Train {
            collection,
            output,
            algorithm,
            holdout_fraction,
        } => {
            let mut config = load_config(config_path, cli.seed)?;
            if let Some(a) = algorithm {
                config.algorithm = match a {
                    AlgorithmArg::Auto => None,
                    AlgorithmArg::Brute => Some(Algorithm::Brute),
                    AlgorithmArg::Kd => Some(Algorithm::KdTree),
                    AlgorithmArg::Ball => Some(Algorithm::BallTree),
                };
            }
            if let Some(f) = holdout_fraction {
                config.holdout_fraction = f;
            }
            config.validate()?;
            let (coll, _) = corpus::load_corpus(&collection, Format::Jsonl)
                .with_context(|| format!("reading {}", collection.display()))?;
            let split = match corpus::split_train_test(&coll, config.holdout_fraction, config.seed) {
                Ok(split) => split,
                Err(dupscout_core::Error::NoDuplicates) => {
                    eprintln!("warning: no duplicate links; every report is indexed and nothing is held out");
                    SplitSpec {
                        train_ids: coll.iter().map(|r| r.id.clone()).collect::<BTreeSet<_>>(),
                        test_pairs: Vec::new(),
                    }
                }
                Err(e) => return Err(e.into()),
            };
            let (pipeline, summary) = Pipeline::train(&coll, &split.train_ids, &config)?;
            pipeline.save(&output, &summary)?;
            corpus::write_jsonl(&coll, &output.join(COLLECTION_FILE))?;
            write_artifact(&output.join(SPLIT_FILE), &split)?;
            eprintln!("algorithm={}", summary.algorithm.algorithm);
            eprintln!("pairs: {} positive, {} negative", summary.positives, summary.negatives);
            match &summary.classifier_note {
                Some(note) if summary.classifier == "skipped" => eprintln!("classifier: skipped ({note})"),
                _ => eprintln!("classifier: {}", summary.classifier),
            }
            print_json(&json!({
                "summary": summary,
                "train_ids": split.train_ids.len(),
                "test_pairs": split.test_pairs.len(),
            }))
        }
        Command::Query {
            artifacts,
            k,
            no_filter,
            submit,
        } => {
            let (pipeline, _) = Pipeline::load(&artifacts)?;
            let k = k.unwrap_or(pipeline.config.k);
            if k == 0 {
                bail!("k must be at least 1");
            }
            let mut text = String::new();
            std::io::stdin()
                .read_to_string(&mut text)
                .context("reading report from stdin")?;
            let report = corpus::parse_draft(&text, "query")?;
            let cache_path = artifacts.join(CACHE_FILE);
            let mut recent = if cache_path.exists() {
                RecentReports::load(&cache_path, &pipeline)?
            } else {
                RecentReports::new(pipeline.config.cache_capacity)
            };
            let doc = pipeline.process(&report)?;
            let outcome = pipeline.query_recent(&doc, &recent, k, !no_filter)?;
            let degraded = outcome.filtered.as_ref().is_some_and(|f| f.degraded);
            if degraded {
                eprintln!("warning: pair classifier unavailable, candidates are unfiltered");
            }
            let candidates = outcome.candidates().to_vec();
            let mut submitted = None;
            if submit {
                let id = report.id.clone();
                if let Some(evicted) = recent.register(&pipeline, report)? {
                    eprintln!("evicted {evicted} from the recent cache");
                }
                recent.save(&cache_path)?;
                submitted = Some(id);
            }
            print_json(&json!({
                "candidates": candidates,
                "degraded": degraded,
                "submitted": submitted,
            }))
        }
        Command::Evaluate {
            artifacts,
            split,
            k,
            no_filter,
            dataset,
            output,
        } => {
            let (pipeline, _) = Pipeline::load(&artifacts)?;
            let k = k.unwrap_or(pipeline.config.k);
            if k == 0 {
                bail!("k must be at least 1");
            }
            let split_path = split.unwrap_or_else(|| artifacts.join(SPLIT_FILE));
            let split: SplitSpec =
                read_artifact(&split_path).with_context(|| format!("reading split {}", split_path.display()))?;
            if split.test_pairs.is_empty() {
                bail!("no test pairs in {}", split_path.display());
            }
            let (coll, _) = corpus::load_corpus(&artifacts.join(COLLECTION_FILE), Format::Jsonl)?;
            let eval = metrics::run_evaluation(&dataset, &split, &pipeline, &coll, k, !no_filter)?;
            metrics::write_csv_artifacts(&eval, &output)
                .with_context(|| format!("writing metrics to {}", output.display()))?;
            for n in 1..=k {
                eprintln!("recall@{n} {:.2}", eval.report.recall_at(n).unwrap_or(0.0));
            }
            print_json(&eval.report)
        }
        Command::Serve { artifacts, addr } => {
            let gate = match Gate::from_dir(&artifacts) {
                Ok(gate) => gate,
                Err(err) => {
                    eprintln!("warning: {err}; serving 503 until artifacts are trained");
                    Gate::unloaded()
                }
            };
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(dupscout_service::serve(addr, Arc::new(gate)))?;
            Ok(())
        }
    }
}
