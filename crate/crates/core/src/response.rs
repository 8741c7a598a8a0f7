//! Parsing of model completions into a spec plus narrative.
//!
//! Strict parsing requires the five labeled sections. The lenient fallback is
//! for models that drift from the format; its results are always flagged.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enrichment::Narrative;
use crate::vegazero::{parse, SyntaxError, VegaLiteDoc, VegaZeroSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Section {
    #[serde(rename = "VEGAZERO")]
    VegaZero,
    #[serde(rename = "EXPLANATION-1")]
    Explanation1,
    #[serde(rename = "EXPLANATION-2")]
    Explanation2,
    #[serde(rename = "CAPTION")]
    Caption,
    #[serde(rename = "SUGGESTIONS")]
    Suggestions,
}

impl Section {
    pub const ALL: [Section; 5] = [
        Section::VegaZero,
        Section::Explanation1,
        Section::Explanation2,
        Section::Caption,
        Section::Suggestions,
    ];

    pub fn marker(self) -> &'static str {
        match self {
            Section::VegaZero => "VEGAZERO",
            Section::Explanation1 => "EXPLANATION-1",
            Section::Explanation2 => "EXPLANATION-2",
            Section::Caption => "CAPTION",
            Section::Suggestions => "SUGGESTIONS",
        }
    }

    fn from_marker(s: &str) -> Option<Section> {
        Section::ALL
            .into_iter()
            .find(|sec| sec.marker().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.marker())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResponseError {
    #[error("response has no [{section}] section")]
    MissingSection { section: Section, raw_text: String },
    #[error("response spec does not parse: {error}")]
    SpecSyntaxError { error: SyntaxError, raw_text: String },
    #[error("no VegaZero spec found in response")]
    NoSpecFound { raw_text: String },
}

impl ResponseError {
    pub fn raw_text(&self) -> &str {
        match self {
            ResponseError::MissingSection { raw_text, .. }
            | ResponseError::SpecSyntaxError { raw_text, .. }
            | ResponseError::NoSpecFound { raw_text } => raw_text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub spec: VegaZeroSpec,
    pub narrative: Narrative,
    /// The completion exactly as received.
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc: Option<VegaLiteDoc>,
    /// Set when the result came from heuristic extraction.
    #[serde(default)]
    pub lenient: bool,
}

static MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\[\s*(vegazero|explanation-1|explanation-2|caption|suggestions)\s*\]").unwrap()
});
static LIST_ITEM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\d{1,2})[.)]").unwrap());
static SPEC_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bmark\s+\S+\s.*\bencoding\b").unwrap());

/// Locates labeled sections anywhere in `text`. The first occurrence of a
/// marker wins; content runs to the next marker of any kind.
pub(crate) fn find_sections(text: &str) -> BTreeMap<Section, String> {
    let hits: Vec<(Section, usize, usize)> = MARKER
        .captures_iter(text)
        .filter_map(|c| {
            let m = c.get(0)?;
            Some((Section::from_marker(&c[1])?, m.start(), m.end()))
        })
        .collect();
    let mut out = BTreeMap::new();
    for (i, (section, _, body_start)) in hits.iter().enumerate() {
        let body_end = hits.get(i + 1).map_or(text.len(), |h| h.1);
        out.entry(*section)
            .or_insert_with(|| clean_block(&text[*body_start..body_end]));
    }
    out
}

fn clean_block(s: &str) -> String {
    s.lines()
        .map(str::trim)
        .filter(|l| !l.starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string()
}

fn spec_text(section: &str) -> String {
    section
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_matches('`')
        .trim()
        .to_string()
}

/// Splits a suggestion block into questions. Numbered items must count up
/// from 1; otherwise each non-empty line (bullets stripped) is one item.
pub fn split_suggestions(text: &str) -> Vec<String> {
    let mut cuts: Vec<(usize, usize)> = Vec::new();
    let mut expected = 1u32;
    for m in LIST_ITEM.find_iter(text) {
        let before_ok = text[..m.start()]
            .chars()
            .next_back()
            .is_none_or(|c| c.is_whitespace() || c == '(' );
        let after_ok = text[m.end()..]
            .chars()
            .next()
            .is_none_or(|c| !c.is_ascii_digit());
        let n: u32 = m.as_str()[..m.as_str().len() - 1].parse().unwrap_or(0);
        if before_ok && after_ok && n == expected {
            let start = if text[..m.start()].ends_with('(') { m.start() - 1 } else { m.start() };
            cuts.push((start, m.end()));
            expected += 1;
        }
    }
    let items: Vec<String> = if cuts.is_empty() {
        text.lines()
            .map(|l| l.trim().trim_start_matches(['-', '*', '•']).trim().to_string())
            .collect()
    } else {
        cuts.iter()
            .enumerate()
            .map(|(i, (_, body))| {
                let end = cuts.get(i + 1).map_or(text.len(), |c| c.0);
                text[*body..end].split_whitespace().collect::<Vec<_>>().join(" ")
            })
            .collect()
    };
    items.into_iter().filter(|s| !s.is_empty()).collect()
}

/// Strict parser for the five-section response format.
pub fn parse_response(text: &str) -> Result<Recommendation, ResponseError> {
    let sections = find_sections(text);
    let get = |s: Section| {
        sections.get(&s).ok_or_else(|| ResponseError::MissingSection {
            section: s,
            raw_text: text.to_string(),
        })
    };
    let spec_section = get(Section::VegaZero)?;
    let e1 = get(Section::Explanation1)?.clone();
    let e2 = get(Section::Explanation2)?.clone();
    let caption = get(Section::Caption)?.clone();
    let suggestions = split_suggestions(get(Section::Suggestions)?);
    let spec = parse(&spec_text(spec_section)).map_err(|error| ResponseError::SpecSyntaxError {
        error,
        raw_text: text.to_string(),
    })?;
    Ok(Recommendation {
        spec,
        narrative: Narrative {
            e1,
            e2,
            caption,
            suggestions,
        },
        raw_text: text.to_string(),
        doc: None,
        lenient: false,
    })
}

fn mentions_axes(p: &str) -> bool {
    let l = p.to_lowercase();
    ["x-axis", "y-axis", "axis", "axes", "the chart", "this chart", "the visualization", "this visualization", "bar chart", "line chart", "pie chart", "scatter"]
        .iter()
        .any(|k| l.contains(k))
}

fn strip_label(p: &str) -> String {
    let trimmed = p.trim().trim_start_matches(['#', '*', ' ']);
    for label in ["explanation", "caption", "suggestions", "suggested questions", "reasoning", "answer"] {
        if trimmed.len() >= label.len() && trimmed[..label.len()].eq_ignore_ascii_case(label) {
            let rest = trimmed[label.len()..].trim_start_matches(['*', ' ']);
            if let Some(rest) = rest.strip_prefix(':') {
                return rest.trim().trim_start_matches('*').trim().to_string();
            }
        }
    }
    p.trim().to_string()
}

fn is_list(p: &str) -> bool {
    let first = p.trim_start();
    first.starts_with("1)") || first.starts_with("1.") || first.starts_with("(1)")
        || p.lines().filter(|l| {
            let t = l.trim_start();
            t.starts_with("- ") || t.starts_with("* ") || t.starts_with("• ")
        }).count() >= 2
}

/// Strict parse first; otherwise pulls the first `mark ... encoding` line out
/// of free text and buckets the remaining paragraphs.
pub fn lenient_extract(text: &str) -> Result<Recommendation, ResponseError> {
    if let Ok(rec) = parse_response(text) {
        return Ok(rec);
    }
    if let Some(spec_section) = find_sections(text).get(&Section::VegaZero) {
        if let Ok(spec) = parse(&spec_text(spec_section)) {
            return Ok(bucket(text, spec, Some(spec_section)));
        }
    }

    let mut first_error = None;
    for line in text.lines() {
        let Some(m) = SPEC_LINE.find(line) else { continue };
        let candidate = line[m.start()..]
            .trim()
            .trim_end_matches(['`', '"', '\'', '.', ';', ','])
            .trim();
        match parse_prefix(&spec_text(candidate)) {
            Ok(spec) => return Ok(bucket(text, spec, Some(line))),
            Err(error) => {
                first_error.get_or_insert(error);
            }
        }
    }
    Err(match first_error {
        Some(error) => ResponseError::SpecSyntaxError {
            error,
            raw_text: text.to_string(),
        },
        None => ResponseError::NoSpecFound {
            raw_text: text.to_string(),
        },
    })
}

/// Parses a spec that may run on into prose: on failure, retries with the
/// text cut at the error position. The first error is the one reported.
fn parse_prefix(candidate: &str) -> Result<VegaZeroSpec, SyntaxError> {
    let first = match parse(candidate) {
        Ok(spec) => return Ok(spec),
        Err(e) => e,
    };
    let cut = candidate.get(..first.position).map(str::trim).unwrap_or_default();
    if cut.is_empty() || cut.len() == candidate.len() {
        return Err(first);
    }
    parse(cut).map_err(|_| first)
}

fn bucket(text: &str, spec: VegaZeroSpec, spec_source: Option<&str>) -> Recommendation {
    let mut paragraphs: Vec<String> = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        let t = line.trim();
        let is_spec = spec_source.is_some_and(|s| s.trim() == t || (SPEC_LINE.is_match(t) && s.contains(t)));
        let is_marker = MARKER.is_match(t) && MARKER.replace_all(t, "").trim().is_empty();
        if t.is_empty() || is_spec || is_marker || t.starts_with("```") {
            if !current.trim().is_empty() {
                paragraphs.push(std::mem::take(&mut current));
            }
            current.clear();
            continue;
        }
        current.push_str(t);
        current.push('\n');
    }
    if !current.trim().is_empty() {
        paragraphs.push(current);
    }

    let mut explanations = Vec::new();
    let mut caption = String::new();
    let mut suggestions = Vec::new();
    for p in &paragraphs {
        let body = strip_label(p);
        if body.is_empty() {
            continue;
        }
        if suggestions.is_empty() && is_list(&body) {
            suggestions = split_suggestions(&body);
        } else if caption.is_empty() && mentions_axes(&body) {
            caption = one_line(&body);
        } else if explanations.len() < 2 {
            explanations.push(one_line(&body));
        } else if let Some(last) = explanations.last_mut() {
            last.push(' ');
            last.push_str(&one_line(&body));
        }
    }
    let mut explanations = explanations.into_iter();
    Recommendation {
        spec,
        narrative: Narrative {
            e1: explanations.next().unwrap_or_default(),
            e2: explanations.next().unwrap_or_default(),
            caption,
            suggestions,
        },
        raw_text: text.to_string(),
        doc: None,
        lenient: true,
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
