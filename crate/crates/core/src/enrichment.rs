//! Corpus enrichment: three teacher tasks per (table, query, spec) triple,
//! assembled into a narrative, then exported as a fine-tuning corpus.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, SecondsFormat, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::dataset::{sketch, DataTable};
use crate::gateway::{Gateway, GatewayError};
use crate::prompt::{PromptError, PromptForge, TeacherTask};
use crate::response::{find_sections, split_suggestions, Section};
use crate::vegazero::{render, validate, VegaZeroSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hardness {
    Easy,
    Medium,
    Hard,
    ExtraHard,
}

impl Hardness {
    pub const ALL: [Hardness; 4] = [Hardness::Easy, Hardness::Medium, Hardness::Hard, Hardness::ExtraHard];

    pub fn as_str(self) -> &'static str {
        match self {
            Hardness::Easy => "easy",
            Hardness::Medium => "medium",
            Hardness::Hard => "hard",
            Hardness::ExtraHard => "extra_hard",
        }
    }
}

impl fmt::Display for Hardness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Hardness {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Hardness::ALL
            .into_iter()
            .find(|h| h.as_str() == norm)
            .ok_or_else(|| format!("unknown hardness `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NarrativePart {
    E1,
    E2,
    C,
    S,
}

/// Explanation (two parts), caption and follow-up suggestions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Narrative {
    /// What the user is looking for.
    pub e1: String,
    /// Why these columns and transforms.
    pub e2: String,
    pub caption: String,
    pub suggestions: Vec<String>,
}

impl Narrative {
    pub fn missing_parts(&self) -> Vec<NarrativePart> {
        let mut out = Vec::new();
        if self.e1.trim().is_empty() {
            out.push(NarrativePart::E1);
        }
        if self.e2.trim().is_empty() {
            out.push(NarrativePart::E2);
        }
        if self.caption.trim().is_empty() {
            out.push(NarrativePart::C);
        }
        if self.suggestions.iter().all(|s| s.trim().is_empty()) {
            out.push(NarrativePart::S);
        }
        out
    }

    pub fn is_complete(&self) -> bool {
        self.missing_parts().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusTriple {
    pub id: String,
    pub table: Arc<DataTable>,
    pub query: String,
    pub hardness: Hardness,
    pub spec: VegaZeroSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherMeta {
    pub model_name: String,
    pub template_hash: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichedSample {
    pub triple: CorpusTriple,
    pub narrative: Narrative,
    pub teacher_meta: TeacherMeta,
}

/// The narrative half of an enriched sample, stored apart from the corpus
/// so enrichment and export can run as separate steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedRecord {
    pub id: String,
    pub narrative: Narrative,
    pub teacher_meta: TeacherMeta,
}

impl From<&EnrichedSample> for EnrichedRecord {
    fn from(s: &EnrichedSample) -> Self {
        EnrichedRecord {
            id: s.triple.id.clone(),
            narrative: s.narrative.clone(),
            teacher_meta: s.teacher_meta.clone(),
        }
    }
}

/// Pairs records with their triples by id. Records without a triple are
/// returned as the second element.
pub fn join_records(triples: &[CorpusTriple], records: Vec<EnrichedRecord>) -> (Vec<EnrichedSample>, Vec<String>) {
    let by_id: BTreeMap<&str, &CorpusTriple> = triples.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut samples = Vec::new();
    let mut orphans = Vec::new();
    for r in records {
        match by_id.get(r.id.as_str()) {
            Some(t) => samples.push(EnrichedSample {
                triple: (*t).clone(),
                narrative: r.narrative,
                teacher_meta: r.teacher_meta,
            }),
            None => orphans.push(r.id),
        }
    }
    (samples, orphans)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnrichError {
    #[error("teacher response for {task} lacks required sections")]
    TeacherParseFailure { task: TeacherTask, raw_text: String },
    #[error("triple does not validate: {0}")]
    InvalidTriple(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Why a sample was left out of the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantineEntry {
    pub id: String,
    pub stage: String,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
}

fn parse_failure(task: TeacherTask, raw: &str) -> EnrichError {
    EnrichError::TeacherParseFailure {
        task,
        raw_text: raw.to_string(),
    }
}

/// R1 must carry both explanation markers.
pub fn parse_explanation(raw: &str) -> Result<(String, String), EnrichError> {
    let s = find_sections(raw);
    match (s.get(&Section::Explanation1), s.get(&Section::Explanation2)) {
        (Some(e1), Some(e2)) if !e1.is_empty() && !e2.is_empty() => Ok((e1.clone(), e2.clone())),
        _ => Err(parse_failure(TeacherTask::Explain, raw)),
    }
}

/// R2 is the `[CAPTION]` section, or the whole text when the marker is absent.
pub fn parse_caption(raw: &str) -> Result<String, EnrichError> {
    let s = find_sections(raw);
    let caption = match s.get(&Section::Caption) {
        Some(c) => c.clone(),
        None if s.is_empty() => raw.trim().to_string(),
        None => String::new(),
    };
    if caption.is_empty() {
        return Err(parse_failure(TeacherTask::Caption, raw));
    }
    Ok(caption)
}

/// R3 is a numbered list, under `[SUGGESTIONS]` or bare. Keeps at most `max`.
pub fn parse_suggestions(raw: &str, max: usize) -> Result<Vec<String>, EnrichError> {
    let s = find_sections(raw);
    let body = match s.get(&Section::Suggestions) {
        Some(b) => b.as_str(),
        None if s.is_empty() => raw,
        None => "",
    };
    let mut items = split_suggestions(body);
    items.truncate(max);
    if items.is_empty() {
        return Err(parse_failure(TeacherTask::Suggest, raw));
    }
    Ok(items)
}

pub fn enrich(triple: &CorpusTriple, teacher: &Gateway, forge: &PromptForge) -> Result<EnrichedSample, EnrichError> {
    let sk = sketch(&triple.table);
    let violations = validate(&triple.spec, &sk);
    if let Some(v) = violations.first() {
        return Err(EnrichError::InvalidTriple(v.to_string()));
    }
    let started_at = Utc::now();
    let ask = |task| -> Result<String, EnrichError> {
        let prompt = forge.teacher_prompt(task, &sk, &triple.query, &triple.spec)?;
        Ok(teacher.complete(&prompt)?.text)
    };
    let r1 = ask(TeacherTask::Explain)?;
    let r2 = ask(TeacherTask::Caption)?;
    let r3 = ask(TeacherTask::Suggest)?;
    let (e1, e2) = parse_explanation(&r1)?;
    let narrative = Narrative {
        e1,
        e2,
        caption: parse_caption(&r2)?,
        suggestions: parse_suggestions(&r3, forge.suggestion_count())?,
    };
    tracing::debug!(id = %triple.id, "enriched");
    Ok(EnrichedSample {
        triple: triple.clone(),
        narrative,
        teacher_meta: TeacherMeta {
            model_name: teacher.config().model_name.clone(),
            template_hash: forge.templates().hash().to_string(),
            started_at,
            finished_at: Utc::now(),
        },
    })
}

#[derive(Debug, Clone, Default)]
pub struct EnrichOutcome {
    /// Sorted by id.
    pub samples: Vec<EnrichedSample>,
    pub quarantined: Vec<QuarantineEntry>,
}

/// An offline teacher that answers the three teacher prompts by echoing
/// pieces of the spec back in the expected layout. Good enough to exercise
/// the pipeline end to end without a model.
pub fn scripted_teacher() -> crate::gateway::BackendConfig {
    let mut cfg = crate::gateway::mock_backend([
        (
            r"(?s)^Task: Explain.*?\nQuery: ([^\n]*)\nVegaZero specification: mark (\w+) encoding x (\S+) y aggregate (\w+) (\S+)".to_string(),
            "Step 1. I read the features and the query.\n[EXPLANATION-1]\nThe user asks: $1\n[EXPLANATION-2]\n\
The column $3 goes on the x-axis and $5 on the y-axis with aggregate $4, which answers the question directly; a $2 mark suits this comparison and the other features are not needed.".to_string(),
        ),
        (
            r"(?s)^Task: Caption.*?\nVegaZero specification: mark (\w+) encoding x (\S+) y aggregate (\w+) (\S+)".to_string(),
            "[CAPTION]\nA $1 chart with $2 on the x-axis and the $3 of $4 on the y-axis.".to_string(),
        ),
        (
            r"(?s)^Task: Suggest.*?\nVegaZero specification: mark \w+ encoding x (\S+) y aggregate \w+ (\S+)".to_string(),
            "[SUGGESTIONS]\n1) Which $1 has the highest $2?\n2) Which $1 has the lowest $2?\n3) How is $2 distributed across $1?".to_string(),
        ),
    ]);
    cfg.model_name = "scripted-teacher".into();
    cfg
}

/// Enriches every triple, fanning out up to the gateway's concurrency bound.
/// Parse failures and invalid triples are quarantined; backend failures abort
/// the run (completed calls stay cached, so a rerun resumes).
pub fn enrich_all(
    triples: &[CorpusTriple],
    teacher: &Gateway,
    forge: &PromptForge,
) -> Result<EnrichOutcome, EnrichError> {
    let workers = teacher.config().concurrency.clamp(1, triples.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<EnrichedSample, EnrichError>)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(triple) = triples.get(i) else { break };
                let r = enrich(triple, teacher, forge);
                results.lock().unwrap().push((i, r));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by(|a, b| triples[a.0].id.cmp(&triples[b.0].id));

    let mut out = EnrichOutcome::default();
    for (i, r) in results {
        let id = triples[i].id.clone();
        match r {
            Ok(s) => out.samples.push(s),
            Err(EnrichError::TeacherParseFailure { task, raw_text }) => {
                tracing::warn!(%id, %task, "teacher response unparseable, quarantined");
                out.quarantined.push(QuarantineEntry {
                    id,
                    stage: format!("teacher_{}", task.label()),
                    reason: "response lacks required sections".into(),
                    raw_text: Some(raw_text),
                });
            }
            Err(EnrichError::InvalidTriple(reason)) => out.quarantined.push(QuarantineEntry {
                id,
                stage: "validate".into(),
                reason,
                raw_text: None,
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

// -- export

/// Fine-tuning settings handed to the external trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneHyperparameters {
    pub base_model: String,
    pub method: String,
    pub lora_r: u32,
    pub lora_alpha: u32,
    pub batch_size: u32,
    pub learning_rate: f64,
    pub optimizer: String,
}

impl Default for FineTuneHyperparameters {
    fn default() -> Self {
        FineTuneHyperparameters {
            base_model: "Llama-2-7B".into(),
            method: "QLoRA".into(),
            lora_r: 64,
            lora_alpha: 128,
            batch_size: 4,
            learning_rate: 1e-4,
            optimizer: "AdamW".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub total: usize,
    pub counts: BTreeMap<Hardness, usize>,
    pub template_hash: String,
    pub template_version: String,
    pub teacher_models: Vec<String>,
    pub hyperparameters: FineTuneHyperparameters,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub files: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitInfo>,
    #[serde(default)]
    pub quarantined: Vec<QuarantineEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub train_ratio: f64,
    pub eval_ratio: f64,
    pub seed: u64,
    pub train: BTreeMap<Hardness, usize>,
    pub eval: BTreeMap<Hardness, usize>,
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("nothing to export")]
    Empty,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Split(#[from] SplitError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One exported JSON line.
pub fn export_record(sample: &EnrichedSample, forge: &PromptForge) -> Result<serde_json::Value, PromptError> {
    let t = &sample.triple;
    let sk = sketch(&t.table);
    let inst = forge.training_instance(&sk, &t.query, &t.spec, &sample.narrative, t.hardness)?;
    Ok(json!({
        "id": t.id,
        "query": t.query,
        "hardness": t.hardness,
        "sketch": sk,
        "vegazero": render(&t.spec),
        "e1": sample.narrative.e1,
        "e2": sample.narrative.e2,
        "caption": sample.narrative.caption,
        "suggestions": sample.narrative.suggestions,
        "prompt": inst.prompt(),
        "completion": inst.completion(),
    }))
}

fn counts<'a>(samples: impl Iterator<Item = &'a EnrichedSample>) -> BTreeMap<Hardness, usize> {
    let mut m: BTreeMap<Hardness, usize> = Hardness::ALL.iter().map(|h| (*h, 0)).collect();
    for s in samples {
        *m.entry(s.triple.hardness).or_default() += 1;
    }
    m
}

fn write_lines(path: &Path, samples: &[&EnrichedSample], forge: &PromptForge) -> Result<(), ExportError> {
    let mut sorted: Vec<&EnrichedSample> = samples.to_vec();
    sorted.sort_by(|a, b| a.triple.id.cmp(&b.triple.id));
    let mut buf = String::new();
    for s in sorted {
        buf.push_str(&export_record(s, forge)?.to_string());
        buf.push('\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, buf).map_err(io_err(path))
}

fn manifest_for(samples: &[&EnrichedSample], forge: &PromptForge) -> ExportManifest {
    let mut teacher_models: Vec<String> = samples.iter().map(|s| s.teacher_meta.model_name.clone()).collect();
    teacher_models.sort();
    teacher_models.dedup();
    ExportManifest {
        total: samples.len(),
        counts: counts(samples.iter().copied()),
        template_hash: forge.templates().hash().to_string(),
        template_version: forge.templates().version().to_string(),
        teacher_models,
        hyperparameters: FineTuneHyperparameters::default(),
        files: BTreeMap::new(),
        split: None,
        quarantined: Vec::new(),
    }
}

/// Writes `samples` as JSON lines sorted by id, plus `manifest.json` next to
/// the file.
pub fn export_jsonl(samples: &[EnrichedSample], path: &Path, forge: &PromptForge) -> Result<ExportManifest, ExportError> {
    if samples.is_empty() {
        return Err(ExportError::Empty);
    }
    let refs: Vec<&EnrichedSample> = samples.iter().collect();
    write_lines(path, &refs, forge)?;
    let mut manifest = manifest_for(&refs, forge);
    let name = path.file_name().map_or_else(|| "corpus.jsonl".into(), |n| n.to_string_lossy().into_owned());
    manifest.files.insert(name, samples.len());
    let manifest_path = path.with_file_name("manifest.json");
    write_manifest(&manifest_path, &manifest)?;
    Ok(manifest)
}

fn write_manifest(path: &Path, manifest: &ExportManifest) -> Result<(), ExportError> {
    let text = serde_json::to_string_pretty(manifest).unwrap_or_default();
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Split and write `train.jsonl`, `eval.jsonl`, `quarantine.jsonl` and
/// `manifest.json` into `dir`.
pub fn export_corpus(
    outcome: &EnrichOutcome,
    dir: &Path,
    forge: &PromptForge,
    train_ratio: f64,
    seed: u64,
) -> Result<ExportManifest, ExportError> {
    if outcome.samples.is_empty() {
        return Err(ExportError::Empty);
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let refs: Vec<&EnrichedSample> = outcome.samples.iter().collect();
    let (train, eval) = split(refs.clone(), |s| s.triple.hardness, (train_ratio, 1.0 - train_ratio), seed)?;
    write_lines(&dir.join("train.jsonl"), &train, forge)?;
    write_lines(&dir.join("eval.jsonl"), &eval, forge)?;
    write_quarantine(&dir.join("quarantine.jsonl"), &outcome.quarantined)?;

    let mut manifest = manifest_for(&refs, forge);
    manifest.files.insert("train.jsonl".into(), train.len());
    manifest.files.insert("eval.jsonl".into(), eval.len());
    manifest.files.insert("quarantine.jsonl".into(), outcome.quarantined.len());
    manifest.split = Some(SplitInfo {
        train_ratio,
        eval_ratio: 1.0 - train_ratio,
        seed,
        train: counts(train.iter().copied()),
        eval: counts(eval.iter().copied()),
    });
    let mut q = outcome.quarantined.clone();
    q.sort_by(|a, b| a.id.cmp(&b.id));
    for e in &mut q {
        e.raw_text = None;
    }
    manifest.quarantined = q;
    write_manifest(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn write_quarantine(path: &Path, entries: &[QuarantineEntry]) -> Result<(), ExportError> {
    let mut sorted = entries.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    for e in sorted {
        writeln!(f, "{}", serde_json::to_string(&e).unwrap_or_default()).map_err(io_err(path))?;
    }
    Ok(())
}

// -- split

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("hardness class `{0}` has no samples")]
    InsufficientClass(Hardness),
    #[error("split ratios must be within [0, 1] and sum to 1, got ({0}, {1})")]
    InvalidRatio(f64, f64),
}

/// Stratified split: each hardness class contributes `round(n * train)`
/// items to the train side, picked by a seeded shuffle within the class.
pub fn split<T>(
    items: Vec<T>,
    hardness: impl Fn(&T) -> Hardness,
    ratios: (f64, f64),
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), SplitError> {
    let (train_ratio, eval_ratio) = ratios;
    if !(0.0..=1.0).contains(&train_ratio)
        || !(0.0..=1.0).contains(&eval_ratio)
        || (train_ratio + eval_ratio - 1.0).abs() > 1e-9
    {
        return Err(SplitError::InvalidRatio(train_ratio, eval_ratio));
    }
    let mut classes: BTreeMap<Hardness, Vec<T>> = Hardness::ALL.iter().map(|h| (*h, Vec::new())).collect();
    for item in items {
        classes.entry(hardness(&item)).or_default().push(item);
    }
    if let Some((h, _)) = classes.iter().find(|(_, v)| v.is_empty()) {
        return Err(SplitError::InsufficientClass(*h));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for (_, mut members) in classes {
        members.shuffle(&mut rng);
        let k = (members.len() as f64 * train_ratio).round() as usize;
        let rest = members.split_off(k.min(members.len()));
        train.extend(members);
        eval.extend(rest);
    }
    Ok((train, eval))
}

/// RFC 3339 timestamp with second precision.
pub fn timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}
