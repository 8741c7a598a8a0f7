//! Inference path: table and query in, spec plus narrative plus chart out.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{sketch, DataTable};
use crate::gateway::{mock_backend, BackendConfig, Gateway, GatewayError};
use crate::prompt::{PromptError, PromptForge};
use crate::response::{parse_response, Recommendation, ResponseError};
use crate::vegazero::{compile, render, validate, CompileError, Violation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecommendError {
    #[error(transparent)]
    Response(#[from] ResponseError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl RecommendError {
    pub fn raw_text(&self) -> Option<&str> {
        match self {
            RecommendError::Response(e) => Some(e.raw_text()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendOutcome {
    pub vegazero: String,
    pub recommendation: Recommendation,
    /// Problems that kept the spec from compiling; reported, not fatal.
    pub warnings: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compile_error: Option<String>,
    pub backend: String,
    pub cached: bool,
}

/// Builds the inference prompt, asks the model, parses and compiles.
/// The table is only read.
pub fn recommend(
    table: &DataTable,
    query: &str,
    gateway: &Gateway,
    forge: &PromptForge,
) -> Result<RecommendOutcome, RecommendError> {
    let sk = sketch(table);
    let prompt = forge.inference_prompt(&sk, query)?;
    let completion = gateway.complete(&prompt)?;
    let mut rec = parse_response(&completion.text)?;
    let warnings = validate(&rec.spec, &sk);
    let mut compile_error = None;
    if warnings.is_empty() {
        match compile(&rec.spec, table) {
            Ok(doc) => rec.doc = Some(doc),
            Err(CompileError::Invalid(_)) => {}
            Err(e) => compile_error = Some(e.to_string()),
        }
    }
    Ok(RecommendOutcome {
        vegazero: render(&rec.spec),
        recommendation: rec,
        warnings,
        compile_error,
        backend: completion.backend,
        cached: completion.cached,
    })
}

/// An offline student for demos: charts the mean of the first quantitative
/// feature per value of the first nominal feature, whatever the query.
pub fn scripted_student() -> BackendConfig {
    let mut cfg = mock_backend([(
        r"(?s)### Input\n.*?Features:\n(?:- [^\n]*\n)*?- (\S+) \(nominal\)\n(?:- [^\n]*\n)*?- (\S+) \(quantitative\)\n.*?Query: ([^\n]*)".to_string(),
        "### Reasoning\nStep 1. Information need: $3\n\
Step 2. Column and transformation selection: $1 groups the rows and $2 is averaged.\n\
### Response\n[VEGAZERO]\nmark bar encoding x $1 y aggregate mean $2 transform group x\n\
[EXPLANATION-1]\nThe user asks: $3\n\
[EXPLANATION-2]\nThe chart groups by $1 and averages $2.\n\
[CAPTION]\nA bar chart with $1 on the x-axis and the mean of $2 on the y-axis.\n\
[SUGGESTIONS]\n1) Which $1 has the highest mean $2?\n2) Which $1 has the lowest mean $2?\n3) How many rows does each $1 have?\n"
            .to_string(),
    )]);
    cfg.model_name = "scripted-student".into();
    cfg
}
