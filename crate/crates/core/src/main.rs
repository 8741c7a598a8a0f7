use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vizlm::config::{AppConfig, SCRIPTED_STUDENT, SCRIPTED_TEACHER};
use vizlm::corpus::{import_corpus, write_corpus};
use vizlm::dataset::{load_csv, sketch};
use vizlm::enrichment::{
    enrich_all, export_corpus, join_records, write_quarantine, EnrichOutcome, EnrichedRecord, QuarantineEntry,
};
use vizlm::evallm::{
    comparison_html, comparison_table, evaluate_predictions, read_predictions, AggregatePlacement, Prediction,
    SyntaxMode,
};
use vizlm::gateway::Gateway;
use vizlm::recommend::recommend;
use vizlm::service::{serve, AppState};
use vizlm::study::{StudyResponse, StudySample};

/// Natural-language-to-visualization toolkit.
///
/// Backend API keys are read from the environment variable each backend
/// names in `api_key_ref`; they are never accepted on the command line.
#[derive(Debug, Parser)]
#[command(name = "vizlm", version)]
struct Cli {
    /// TOML settings file.
    #[arg(long, global = true, env = "VIZLM_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides `data_dir` from the settings file.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a CSV (prints its sketch) or a corpus index (prints statistics).
    Ingest {
        path: PathBuf,
        /// For a corpus: write the surviving triples and quarantine here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the three teacher tasks over a corpus.
    Enrich {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = SCRIPTED_TEACHER)]
        backend: String,
    },
    /// Split enriched samples by hardness and write the fine-tuning corpus.
    Export {
        #[arg(long)]
        enriched: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Train share per hardness class.
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Ask a backend for a recommendation on every corpus query.
    Predict {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = SCRIPTED_STUDENT)]
        backend: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against the corpus.
    Evaluate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// `model=path/to/predictions.jsonl`, repeatable.
        #[arg(long = "predictions", required = true, value_parser = parse_model_path)]
        predictions: Vec<(String, PathBuf)>,
        #[arg(long)]
        lenient: bool,
        #[arg(long)]
        partial_credit: bool,
        #[arg(long, value_enum)]
        aggregate_placement: Option<Placement>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a blind-study pool from two backends' answers to corpus queries.
    StudyPool {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        backend_a: String,
        #[arg(long)]
        backend_b: String,
        #[arg(long, default_value_t = 60)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
    /// Recommend a chart for one query over one CSV file.
    Recommend {
        #[arg(long)]
        query: String,
        /// CSV file.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = SCRIPTED_STUDENT)]
        backend: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Placement {
    Axes,
    DataMapping,
    Ignore,
}

fn parse_model_path(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((m, p)) if !m.is_empty() && !p.is_empty() => Ok((m.to_string(), PathBuf::from(p))),
        _ => Err(format!("expected model=path, got `{s}`")),
    }
}

/// A run-time failure; maps to exit code 2.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("VIZLM_LOG").unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    let mut config = match &cli.config {
        Some(p) => match AppConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        },
        None => AppConfig::default(),
    };
    if let Some(d) = cli.data_dir {
        config.data_dir = d;
    }

    match run(cli.command, config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn corpus_path(arg: Option<PathBuf>, config: &AppConfig) -> Result<PathBuf, Failure> {
    arg.or_else(|| config.corpus.clone())
        .ok_or_else(|| Failure("no corpus given (--corpus or `corpus` in the settings file)".into()))
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Outcome {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Outcome {
    emit(&format!("{}\n", serde_json::to_string_pretty(value)?))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Outcome {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for item in items {
        writeln!(f, "{}", serde_json::to_string(item)?)?;
    }
    f.flush()?;
    Ok(())
}

fn run(command: Command, config: AppConfig) -> Outcome {
    match command {
        Command::Ingest { path, out } => ingest(&path, out.as_deref()),
        Command::Enrich { corpus, out, backend } => {
            let imported = import_corpus(&corpus_path(corpus, &config)?)?;
            fs::create_dir_all(&out)?;
            let gw = Gateway::new(config.backend(&backend)?)?;
            let forge = config.forge()?;
            let result = enrich_all(&imported.triples, &gw, &forge);
            let mut quarantined = imported.quarantined;
            match result {
                Ok(o) => {
                    quarantined.extend(o.quarantined);
                    write_quarantine(&out.join("quarantine.jsonl"), &quarantined)?;
                    let records: Vec<EnrichedRecord> = o.samples.iter().map(EnrichedRecord::from).collect();
                    write_jsonl(&out.join("enriched.jsonl"), &records)?;
                    eprintln!("enriched {} samples, {} quarantined", records.len(), quarantined.len());
                    Ok(())
                }
                Err(e) => {
                    write_quarantine(&out.join("quarantine.jsonl"), &quarantined)?;
                    Err(Failure(format!("enrichment stopped: {e} (completed calls are cached; rerun to resume)")))
                }
            }
        }
        Command::Export { enriched, corpus, out, ratio, seed } => {
            let imported = import_corpus(&corpus_path(corpus, &config)?)?;
            let text = fs::read_to_string(&enriched).map_err(|e| Failure(format!("{}: {e}", enriched.display())))?;
            let mut records = Vec::new();
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let r: EnrichedRecord = serde_json::from_str(line)
                    .map_err(|e| Failure(format!("{}:{}: {e}", enriched.display(), i + 1)))?;
                records.push(r);
            }
            let (samples, orphans) = join_records(&imported.triples, records);
            let mut quarantined = imported.quarantined;
            let sibling = enriched.with_file_name("quarantine.jsonl");
            if sibling.exists() {
                for line in fs::read_to_string(&sibling)?.lines().filter(|l| !l.trim().is_empty()) {
                    let q: QuarantineEntry = serde_json::from_str(line)?;
                    if !quarantined.iter().any(|e| e.id == q.id && e.stage == q.stage) {
                        quarantined.push(q);
                    }
                }
            }
            quarantined.extend(orphans.into_iter().map(|id| QuarantineEntry {
                id,
                stage: "join".into(),
                reason: "enriched record has no corpus triple".into(),
                raw_text: None,
            }));
            let outcome = EnrichOutcome { samples, quarantined };
            let ratio = ratio.unwrap_or(config.train_ratio);
            let seed = seed.unwrap_or(config.split_seed);
            match export_corpus(&outcome, &out, &config.forge()?, ratio, seed) {
                Ok(manifest) => print_json(&manifest),
                Err(e) => {
                    fs::create_dir_all(&out)?;
                    write_quarantine(&out.join("quarantine.jsonl"), &outcome.quarantined)?;
                    Err(e.into())
                }
            }
        }
        Command::Predict { corpus, backend, out } => {
            let imported = import_corpus(&corpus_path(corpus, &config)?)?;
            let gw = Gateway::new(config.backend(&backend)?)?;
            let forge = config.forge()?;
            let mut preds = Vec::with_capacity(imported.triples.len());
            for t in &imported.triples {
                let prompt = forge.inference_prompt(&sketch(&t.table), &t.query)?;
                let c = gw.complete(&prompt)?;
                preds.push(Prediction {
                    sample_id: t.id.clone(),
                    completion: c.text,
                });
            }
            write_jsonl(&out, &preds)?;
            eprintln!("{} predictions from `{backend}`", preds.len());
            Ok(())
        }
        Command::Evaluate {
            corpus,
            predictions,
            lenient,
            partial_credit,
            aggregate_placement,
            out,
        } => {
            let imported = import_corpus(&corpus_path(corpus, &config)?)?;
            let mut cfg = config.eval;
            if lenient {
                cfg.syntax_mode = SyntaxMode::Lenient;
            }
            if partial_credit {
                cfg.partial_credit = true;
            }
            if let Some(p) = aggregate_placement {
                cfg.aggregate_placement = match p {
                    Placement::Axes => AggregatePlacement::Axes,
                    Placement::DataMapping => AggregatePlacement::DataMapping,
                    Placement::Ignore => AggregatePlacement::Ignore,
                };
            }
            fs::create_dir_all(&out)?;
            let mut reports = Vec::new();
            for (model, path) in predictions {
                let preds = read_predictions(&path)?;
                let (records, report) = evaluate_predictions(&model, &preds, &imported.triples, &cfg)?;
                write_jsonl(&out.join(format!("records_{model}.jsonl")), &records)?;
                fs::write(out.join(format!("report_{model}.json")), report.to_pretty_json())?;
                reports.push(report);
            }
            let table = comparison_table(&reports);
            fs::write(out.join("comparison.txt"), &table)?;
            fs::write(out.join("comparison.html"), comparison_html(&reports))?;
            emit(&table)
        }
        Command::StudyPool {
            corpus,
            backend_a,
            backend_b,
            size,
            out,
        } => {
            let imported = import_corpus(&corpus_path(corpus, &config)?)?;
            let forge = config.forge()?;
            let gws = [
                (backend_a.clone(), Gateway::new(config.backend(&backend_a)?)?),
                (backend_b.clone(), Gateway::new(config.backend(&backend_b)?)?),
            ];
            let mut samples = Vec::new();
            let mut skipped = 0usize;
            for t in &imported.triples {
                if samples.len() == size {
                    break;
                }
                let mut responses = Vec::new();
                for (tag, gw) in &gws {
                    match recommend(&t.table, &t.query, gw, &forge) {
                        Ok(o) => responses.push(StudyResponse {
                            model_tag: tag.clone(),
                            recommendation: o.recommendation,
                        }),
                        Err(e) => {
                            tracing::warn!(id = %t.id, backend = %tag, "skipped: {e}");
                            break;
                        }
                    }
                }
                let Ok(responses) = <[StudyResponse; 2]>::try_from(responses) else {
                    skipped += 1;
                    continue;
                };
                samples.push(StudySample {
                    id: t.id.clone(),
                    sketch: sketch(&t.table),
                    query: t.query.clone(),
                    responses,
                    assignment_count: 0,
                });
            }
            write_jsonl(&out, &samples)?;
            eprintln!("{} study samples written, {skipped} skipped", samples.len());
            Ok(())
        }
        Command::Serve { listen } => {
            let mut config = config;
            if let Some(l) = listen {
                config.listen = l;
            }
            let state = AppState::open(config).map_err(Failure)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(state))?;
            Ok(())
        }
        Command::Recommend { query, dataset, backend } => {
            let bytes = fs::read(&dataset).map_err(|e| Failure(format!("{}: {e}", dataset.display())))?;
            let name = dataset.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
            let table = load_csv(&bytes, name)?;
            let gw = Gateway::new(config.backend(&backend)?)?;
            match recommend(&table, &query, &gw, &config.forge()?) {
                Ok(out) => print_json(&out),
                Err(e) => {
                    if let Some(raw) = e.raw_text() {
                        eprintln!("raw model output:\n{raw}");
                    }
                    Err(e.into())
                }
            }
        }
    }
}

fn ingest(path: &Path, out: Option<&Path>) -> Outcome {
    let is_index = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("jsonl"));
    if !is_index {
        let bytes = fs::read(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
        return print_json(&sketch(&load_csv(&bytes, name)?));
    }
    let imported = import_corpus(path)?;
    if let Some(dir) = out {
        write_corpus(&imported.triples, dir)?;
        write_quarantine(&dir.join("quarantine.jsonl"), &imported.quarantined)?;
    }
    let mut by_stage: BTreeMap<&str, usize> = BTreeMap::new();
    for q in &imported.quarantined {
        *by_stage.entry(q.stage.as_str()).or_default() += 1;
    }
    print_json(&serde_json::json!({
        "stats": imported.stats,
        "quarantined": by_stage,
    }))
}
