//! Corpus import: a directory of CSV tables plus a JSON-lines index.
//!
//! Each index line needs `id`, `table_file`, `query`, `hardness` and
//! `vegazero`; `column_types` (column name to type) is optional and wins over
//! inference. Extra fields are ignored, and a few common alternative names
//! are accepted: `vega_zero` for `vegazero`, `nl_query` or `question` for
//! `query`, `csv_file` for `table_file`. Numeric ids are read as strings.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dataset::{load_csv_with, sketch, ColumnType, DataTable, LoadOptions};
use crate::enrichment::{CorpusTriple, Hardness, QuarantineEntry};
use crate::vegazero::{parse, render, validate, Mark};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("index line {line}: {message}")]
    IndexMalformed { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRecord {
    #[serde(deserialize_with = "string_or_number")]
    pub id: String,
    #[serde(alias = "csv_file")]
    pub table_file: String,
    #[serde(alias = "nl_query", alias = "question")]
    pub query: String,
    pub hardness: String,
    #[serde(alias = "vega_zero")]
    pub vegazero: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_types: Option<BTreeMap<String, ColumnType>>,
}

fn string_or_number<'de, D: serde::Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    match Value::deserialize(d)? {
        Value::String(s) => Ok(s),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(serde::de::Error::custom(format!("id must be a string or number, got {other}"))),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    /// Over every input record, surviving or not.
    pub hardness: BTreeMap<Hardness, usize>,
    pub parse_failures: usize,
    pub validation_failures: usize,
    /// Over surviving triples.
    pub marks: BTreeMap<Mark, usize>,
}

impl CorpusStats {
    pub fn survivors(&self) -> usize {
        self.total - self.parse_failures - self.validation_failures
    }
}

pub fn corpus_stats(triples: &[CorpusTriple]) -> CorpusStats {
    let mut stats = CorpusStats {
        total: triples.len(),
        ..CorpusStats::default()
    };
    for t in triples {
        *stats.hardness.entry(t.hardness).or_default() += 1;
        *stats.marks.entry(t.spec.mark).or_default() += 1;
    }
    stats
}

#[derive(Debug, Clone, Default)]
pub struct ImportResult {
    pub triples: Vec<CorpusTriple>,
    pub quarantined: Vec<QuarantineEntry>,
    pub stats: CorpusStats,
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CorpusError {
    CorpusError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Reads the index and its tables. Spec parse failures and specs that do not
/// validate against their table are quarantined, not fatal.
pub fn import_corpus(index_path: &Path) -> Result<ImportResult, CorpusError> {
    let text = fs::read_to_string(index_path).map_err(|e| io_error(index_path, e))?;
    let base = index_path.parent().unwrap_or(Path::new("."));
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: IndexRecord = serde_json::from_str(line).map_err(|e| CorpusError::IndexMalformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        let hardness: Hardness = rec.hardness.parse().map_err(|message| CorpusError::IndexMalformed {
            line: i + 1,
            message,
        })?;
        records.push((rec, hardness));
    }

    let mut tables: HashMap<(String, Option<BTreeMap<String, ColumnType>>), Result<Arc<DataTable>, String>> =
        HashMap::new();
    let mut out = ImportResult::default();
    out.stats.total = records.len();
    for (rec, hardness) in records {
        *out.stats.hardness.entry(hardness).or_default() += 1;
        let quarantine = |stage: &str, reason: String| QuarantineEntry {
            id: rec.id.clone(),
            stage: stage.to_string(),
            reason,
            raw_text: Some(rec.vegazero.clone()),
        };

        let spec = match parse(&rec.vegazero) {
            Ok(s) => s,
            Err(e) => {
                out.stats.parse_failures += 1;
                out.quarantined.push(quarantine("parse", e.to_string()));
                continue;
            }
        };
        let table = tables
            .entry((rec.table_file.clone(), rec.column_types.clone()))
            .or_insert_with(|| load_table(base, &rec.table_file, rec.column_types.clone()))
            .clone();
        let table = match table {
            Ok(t) => t,
            Err(reason) => {
                out.stats.validation_failures += 1;
                out.quarantined.push(quarantine("table", reason));
                continue;
            }
        };
        let violations = validate(&spec, &sketch(&table));
        if !violations.is_empty() {
            out.stats.validation_failures += 1;
            let reason = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
            out.quarantined.push(quarantine("validate", reason));
            continue;
        }
        *out.stats.marks.entry(spec.mark).or_default() += 1;
        out.triples.push(CorpusTriple {
            id: rec.id,
            table,
            query: rec.query,
            hardness,
            spec,
        });
    }
    tracing::info!(
        survivors = out.triples.len(),
        quarantined = out.quarantined.len(),
        "corpus imported"
    );
    Ok(out)
}

fn load_table(
    base: &Path,
    file: &str,
    types: Option<BTreeMap<String, ColumnType>>,
) -> Result<Arc<DataTable>, String> {
    let path = base.join(file);
    let bytes = fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let name = Path::new(file)
        .file_stem()
        .map_or_else(|| file.to_string(), |s| s.to_string_lossy().into_owned());
    let options = LoadOptions {
        type_overrides: types.unwrap_or_default(),
        ..LoadOptions::default()
    };
    load_csv_with(&bytes, &name, &options)
        .map(Arc::new)
        .map_err(|e| format!("{file}: {e}"))
}

/// Serializes a table back to CSV.
pub fn table_to_csv(table: &DataTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record(table.columns().iter().map(|c| c.name.as_str()));
    for row in table.rows() {
        let _ = w.write_record(row.iter().map(|v| v.to_string()));
    }
    String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
}

/// Writes triples as a corpus directory: one CSV per distinct table name and
/// an `index.jsonl` carrying explicit column types.
pub fn write_corpus(triples: &[CorpusTriple], dir: &Path) -> Result<PathBuf, CorpusError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut written: BTreeMap<String, ()> = BTreeMap::new();
    let mut index = String::new();
    for t in triples {
        let file = format!("{}.csv", t.table.name());
        if written.insert(file.clone(), ()).is_none() {
            let path = dir.join(&file);
            fs::write(&path, table_to_csv(&t.table)).map_err(|e| io_error(&path, e))?;
        }
        let rec = IndexRecord {
            id: t.id.clone(),
            table_file: file,
            query: t.query.clone(),
            hardness: t.hardness.to_string(),
            vegazero: render(&t.spec),
            column_types: Some(t.table.columns().iter().map(|c| (c.name.clone(), c.ty)).collect()),
        };
        index.push_str(&serde_json::to_string(&rec).unwrap_or_default());
        index.push('\n');
    }
    let path = dir.join("index.jsonl");
    fs::write(&path, index).map_err(|e| io_error(&path, e))?;
    Ok(path)
}

/// Location of the bundled 60-triple corpus.
pub fn mini_corpus_index() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/mini-corpus/index.jsonl")
}
