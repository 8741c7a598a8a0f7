//! Prompt construction from versioned template files.
//!
//! Every prompt is a pure function of its inputs and the [`TemplateSet`]; the
//! set's SHA-256 hash is recorded wherever a prompt's output is persisted.
//! Templates are plain text with `{{placeholder}}` slots, divided into named
//! blocks by `--- block: NAME ---` lines.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::TableSketch;
use crate::enrichment::{Hardness, Narrative, NarrativePart};
use crate::vegazero::{render, validate, VegaZeroSpec};

/// The zero-shot chain-of-thought cue present in every teacher and baseline prompt.
pub const COT_CUE: &str = "Let's think step by step.";

pub const DEFAULT_SUGGESTION_COUNT: usize = 3;

const BUILTIN: &[(&str, &str)] = &[
    ("VERSION", include_str!("../templates/VERSION")),
    ("baseline.txt", include_str!("../templates/baseline.txt")),
    ("response_format.txt", include_str!("../templates/response_format.txt")),
    ("student.txt", include_str!("../templates/student.txt")),
    ("teacher_caption.txt", include_str!("../templates/teacher_caption.txt")),
    ("teacher_explain.txt", include_str!("../templates/teacher_explain.txt")),
    ("teacher_suggest.txt", include_str!("../templates/teacher_suggest.txt")),
    ("vegazero_reference.txt", include_str!("../templates/vegazero_reference.txt")),
];

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PromptError {
    #[error("template `{0}` is missing from the template set")]
    MissingTemplate(String),
    #[error("template `{template}` uses unknown placeholder `{name}`")]
    UnknownPlaceholder { template: String, name: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("narrative is incomplete, missing {0:?}")]
    IncompleteNarrative(Vec<NarrativePart>),
    #[error("suggestion count must be between 1 and 5, got {0}")]
    SuggestionCount(usize),
    #[error("cannot read templates: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TeacherTask {
    #[serde(rename = "T1_explain")]
    Explain,
    #[serde(rename = "T2_caption")]
    Caption,
    #[serde(rename = "T3_suggest")]
    Suggest,
}

impl TeacherTask {
    pub const ALL: [TeacherTask; 3] = [TeacherTask::Explain, TeacherTask::Caption, TeacherTask::Suggest];

    fn template(self) -> &'static str {
        match self {
            TeacherTask::Explain => "teacher_explain.txt",
            TeacherTask::Caption => "teacher_caption.txt",
            TeacherTask::Suggest => "teacher_suggest.txt",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TeacherTask::Explain => "T1",
            TeacherTask::Caption => "T2",
            TeacherTask::Suggest => "T3",
        }
    }
}

impl fmt::Display for TeacherTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Teacher(TeacherTask),
    Inference,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionMarker {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub text: String,
    pub kind: PromptKind,
    /// Labeled, contiguous byte ranges covering `text` exactly.
    pub sections: Vec<SectionMarker>,
    pub template_hash: String,
}

impl PromptText {
    pub fn section(&self, label: &str) -> Option<&str> {
        self.sections
            .iter()
            .find(|s| s.label == label)
            .map(|s| &self.text[s.start..s.end])
    }
}

/// A loaded, hashed set of prompt templates.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    files: BTreeMap<String, String>,
    hash: String,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self::from_files(
            BUILTIN
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }

    /// Loads every `.txt` file plus `VERSION` from a directory.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut files = BTreeMap::new();
        let entries = fs::read_dir(dir).map_err(|e| PromptError::Io(e.to_string()))?;
        for entry in entries {
            let entry = entry.map_err(|e| PromptError::Io(e.to_string()))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name == "VERSION" || name.ends_with(".txt") {
                let body = fs::read_to_string(entry.path()).map_err(|e| PromptError::Io(e.to_string()))?;
                files.insert(name, body);
            }
        }
        Ok(Self::from_files(files))
    }

    fn from_files(files: BTreeMap<String, String>) -> Self {
        let mut hasher = Sha256::new();
        for (name, body) in &files {
            hasher.update(name.as_bytes());
            hasher.update([0]);
            hasher.update(body.as_bytes());
            hasher.update([0]);
        }
        let hash = hex::encode(hasher.finalize());
        TemplateSet { files, hash }
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn version(&self) -> &str {
        self.files.get("VERSION").map_or("unversioned", |v| v.trim())
    }

    fn get(&self, name: &str) -> Result<&str, PromptError> {
        self.files
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| PromptError::MissingTemplate(name.to_string()))
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

fn substitute(template_name: &str, text: &str, vars: &BTreeMap<&str, String>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let Some(close) = after.find("}}") else {
            out.push_str(&rest[open..]);
            rest = "";
            break;
        };
        let name = after[..close].trim();
        let value = vars.get(name).ok_or_else(|| PromptError::UnknownPlaceholder {
            template: template_name.to_string(),
            name: name.to_string(),
        })?;
        out.push_str(value);
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Splits a template into `(block label, body)` pairs.
fn blocks(text: &str) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if let Some(label) = trimmed
            .strip_prefix("--- block:")
            .and_then(|r| r.strip_suffix("---"))
        {
            out.push((label.trim().to_string(), String::new()));
        } else if let Some((_, body)) = out.last_mut() {
            body.push_str(line);
        }
    }
    out
}

/// Renders the named blocks of a template and concatenates them, recording
/// each block's byte range.
fn assemble(
    templates: &TemplateSet,
    name: &str,
    vars: &BTreeMap<&str, String>,
    only: Option<&[&str]>,
) -> Result<(String, Vec<SectionMarker>), PromptError> {
    let source = templates.get(name)?;
    let mut text = String::new();
    let mut sections = Vec::new();
    for (label, body) in blocks(source) {
        if only.is_some_and(|keep| !keep.contains(&label.as_str())) {
            continue;
        }
        let start = text.len();
        text.push_str(&substitute(name, &body, vars)?);
        sections.push(SectionMarker {
            label,
            start,
            end: text.len(),
        });
    }
    Ok((text, sections))
}

/// Knobs shared by all prompt builders.
#[derive(Debug, Clone)]
pub struct PromptForge {
    templates: TemplateSet,
    suggestion_count: usize,
}

impl Default for PromptForge {
    fn default() -> Self {
        PromptForge {
            templates: TemplateSet::builtin(),
            suggestion_count: DEFAULT_SUGGESTION_COUNT,
        }
    }
}

impl PromptForge {
    pub fn new(templates: TemplateSet, suggestion_count: usize) -> Result<Self, PromptError> {
        if !(1..=5).contains(&suggestion_count) {
            return Err(PromptError::SuggestionCount(suggestion_count));
        }
        Ok(PromptForge {
            templates,
            suggestion_count,
        })
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn suggestion_count(&self) -> usize {
        self.suggestion_count
    }

    fn base_vars(&self) -> Result<BTreeMap<&'static str, String>, PromptError> {
        let mut vars = BTreeMap::new();
        vars.insert(
            "vegazero_reference",
            self.templates.get("vegazero_reference.txt")?.trim_end().to_string(),
        );
        vars.insert("suggestion_count", self.suggestion_count.to_string());
        vars.insert(
            "suggestion_slots",
            (1..=self.suggestion_count)
                .map(|i| format!("{i}) <question>"))
                .collect::<Vec<_>>()
                .join("\n"),
        );
        let format = substitute(
            "response_format.txt",
            self.templates.get("response_format.txt")?,
            &vars,
        )?;
        vars.insert("response_format", format.trim_end().to_string());
        Ok(vars)
    }

    fn input_vars(vars: &mut BTreeMap<&'static str, String>, sketch: &TableSketch, query: &str) {
        vars.insert("table_name", sketch.table_name.clone());
        vars.insert("features", feature_lines(sketch));
        vars.insert("query", query.trim().to_string());
    }

    /// The response-format block shared by the inference, training and
    /// baseline prompts.
    pub fn response_format(&self) -> Result<String, PromptError> {
        Ok(self.base_vars()?.remove("response_format").unwrap_or_default())
    }

    pub fn teacher_prompt(
        &self,
        task: TeacherTask,
        sketch: &TableSketch,
        query: &str,
        spec: &VegaZeroSpec,
    ) -> Result<PromptText, PromptError> {
        if task == TeacherTask::Explain {
            let violations = validate(spec, sketch);
            if let Some(v) = violations
                .iter()
                .find(|v| v.code == crate::vegazero::ViolationCode::UnknownColumn)
            {
                return Err(PromptError::InvalidInput(v.to_string()));
            }
        }
        let mut vars = self.base_vars()?;
        Self::input_vars(&mut vars, sketch, query);
        vars.insert("vegazero", render(spec));
        let (text, sections) = assemble(&self.templates, task.template(), &vars, None)?;
        Ok(PromptText {
            text,
            kind: PromptKind::Teacher(task),
            sections,
            template_hash: self.templates.hash().to_string(),
        })
    }

    pub fn training_instance(
        &self,
        sketch: &TableSketch,
        query: &str,
        spec: &VegaZeroSpec,
        narrative: &Narrative,
        hardness: Hardness,
    ) -> Result<TrainingInstance, PromptError> {
        let missing = narrative.missing_parts();
        if !missing.is_empty() {
            return Err(PromptError::IncompleteNarrative(missing));
        }
        let mut vars = self.base_vars()?;
        Self::input_vars(&mut vars, sketch, query);
        vars.insert("vegazero", render(spec));
        vars.insert("e1", one_line(&narrative.e1));
        vars.insert("e2", one_line(&narrative.e2));
        vars.insert("caption", narrative.caption.trim().to_string());
        vars.insert("suggestions", numbered(&narrative.suggestions));

        let (text, sections) = assemble(&self.templates, "student.txt", &vars, None)?;
        let part = |label: &str| {
            sections
                .iter()
                .find(|s| s.label == label)
                .map(|s| text[s.start..s.end].to_string())
                .ok_or_else(|| PromptError::MissingTemplate(format!("student.txt block `{label}`")))
        };
        Ok(TrainingInstance {
            header: part("header")?,
            input: part("input")?,
            body: part("body")?,
            response: part("response")?,
            source: TrainingSource {
                sketch: sketch.clone(),
                query: query.to_string(),
                spec: spec.clone(),
                narrative: narrative.clone(),
            },
            hardness,
        })
    }

    /// The student's prompt at inference time: the training header and input
    /// with the body and response left for the model.
    pub fn inference_prompt(&self, sketch: &TableSketch, query: &str) -> Result<PromptText, PromptError> {
        let mut vars = self.base_vars()?;
        Self::input_vars(&mut vars, sketch, query);
        let (text, mut sections) =
            assemble(&self.templates, "student.txt", &vars, Some(&["header", "input"]))?;
        for label in ["body", "response"] {
            sections.push(SectionMarker {
                label: label.to_string(),
                start: text.len(),
                end: text.len(),
            });
        }
        Ok(PromptText {
            text,
            kind: PromptKind::Inference,
            sections,
            template_hash: self.templates.hash().to_string(),
        })
    }

    /// Zero-shot chain-of-thought prompt for an untuned model, mirroring the
    /// student's response format.
    pub fn baseline_cot_prompt(&self, sketch: &TableSketch, query: &str) -> Result<PromptText, PromptError> {
        let mut vars = self.base_vars()?;
        Self::input_vars(&mut vars, sketch, query);
        let (text, sections) = assemble(&self.templates, "baseline.txt", &vars, None)?;
        Ok(PromptText {
            text,
            kind: PromptKind::Baseline,
            sections,
            template_hash: self.templates.hash().to_string(),
        })
    }
}

fn feature_lines(sketch: &TableSketch) -> String {
    sketch
        .features
        .iter()
        .map(|c| format!("- {} ({})", c.name, c.ty))
        .collect::<Vec<_>>()
        .join("\n")
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub(crate) fn numbered(items: &[String]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}) {}", i + 1, one_line(s)))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSource {
    pub sketch: TableSketch,
    pub query: String,
    pub spec: VegaZeroSpec,
    pub narrative: Narrative,
}

/// A student fine-tuning example: header and input form the prompt, body
/// (reasoning) and response form the completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub header: String,
    pub input: String,
    pub body: String,
    pub response: String,
    pub source: TrainingSource,
    pub hardness: Hardness,
}

impl TrainingInstance {
    pub fn prompt(&self) -> String {
        format!("{}{}", self.header, self.input)
    }

    pub fn completion(&self) -> String {
        format!("{}{}", self.body, self.response)
    }
}
