//! Layered evaluation of generated specs: syntax, data mapping, mark and
//! axes, plus rule-based error classification and per-model reports.
//!
//! Syntax gates everything above it: a record that fails syntax has no
//! data-mapping, mark or axes score, and is left out of those denominators.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{sketch, ColumnType};
use crate::enrichment::{CorpusTriple, Hardness};
use crate::response::{lenient_extract, parse_response, Recommendation};
use crate::vegazero::{compile, validate, Aggregate, ChannelType, VegaZeroSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorClass {
    IncorrectScaling,
    InvertedAxes,
    NonOptimalSpacing,
    Hallucination,
    MissingData,
    InputError,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 6] = [
        ErrorClass::IncorrectScaling,
        ErrorClass::InvertedAxes,
        ErrorClass::NonOptimalSpacing,
        ErrorClass::Hallucination,
        ErrorClass::MissingData,
        ErrorClass::InputError,
    ];

    /// Classes only a human reviewer can assign.
    pub fn human_only(self) -> bool {
        matches!(self, ErrorClass::NonOptimalSpacing | ErrorClass::Hallucination)
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Syntax,
    DataMapping,
    Mark,
    Axes,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::Syntax, Level::DataMapping, Level::Mark, Level::Axes];

    pub fn title(self) -> &'static str {
        match self {
            Level::Syntax => "Syntax",
            Level::DataMapping => "Data mapping",
            Level::Mark => "Mark",
            Level::Axes => "Axes",
        }
    }
}

/// Which level is charged for a wrong y aggregate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatePlacement {
    #[default]
    Axes,
    DataMapping,
    Ignore,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntaxMode {
    /// Only responses in the labeled format count.
    #[default]
    Strict,
    /// Heuristically extracted specs count too (and are flagged).
    Lenient,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub aggregate_placement: AggregatePlacement,
    pub syntax_mode: SyntaxMode,
    /// Also compute Jaccard partial credit for the data-mapping level.
    pub partial_credit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: String,
    pub model_name: String,
    pub hardness: Hardness,
    pub syntax: u8,
    pub data_mapping: Option<u8>,
    pub mark: Option<u8>,
    pub axes: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_mapping_partial: Option<f64>,
    pub errors: BTreeSet<ErrorClass>,
    pub lenient: bool,
}

impl EvalRecord {
    pub fn level(&self, level: Level) -> Option<u8> {
        match level {
            Level::Syntax => Some(self.syntax),
            Level::DataMapping => self.data_mapping,
            Level::Mark => self.mark,
            Level::Axes => self.axes,
        }
    }
}

/// Columns a spec draws from the table: x, y (unless counted), color, and
/// filter columns. Bins always apply to x.
pub fn data_columns(spec: &VegaZeroSpec) -> BTreeSet<&str> {
    let mut out = BTreeSet::from([spec.x.as_str()]);
    if spec.y.aggregate != Aggregate::Count {
        out.insert(spec.y.column.as_str());
    }
    if let Some(c) = &spec.color {
        out.insert(c.as_str());
    }
    if let Some(p) = &spec.filter {
        out.extend(p.comparisons().map(|c| c.column.as_str()));
    }
    out
}

/// 1 iff the response parses in strict mode.
pub fn eval_syntax(raw: &str) -> u8 {
    u8::from(parse_response(raw).is_ok())
}

pub fn eval_data_mapping(pred: &VegaZeroSpec, truth: &VegaZeroSpec) -> u8 {
    u8::from(data_columns(pred) == data_columns(truth))
}

pub fn data_mapping_jaccard(pred: &VegaZeroSpec, truth: &VegaZeroSpec) -> f64 {
    let (p, t) = (data_columns(pred), data_columns(truth));
    let union = p.union(&t).count();
    if union == 0 {
        return 1.0;
    }
    p.intersection(&t).count() as f64 / union as f64
}

pub fn eval_mark(pred: &VegaZeroSpec, truth: &VegaZeroSpec) -> u8 {
    u8::from(pred.mark == truth.mark)
}

/// Order-sensitive: x must match x and y must match y, including the y
/// aggregate.
pub fn eval_axes(pred: &VegaZeroSpec, truth: &VegaZeroSpec) -> u8 {
    eval_axes_with(pred, truth, AggregatePlacement::Axes)
}

fn eval_axes_with(pred: &VegaZeroSpec, truth: &VegaZeroSpec, placement: AggregatePlacement) -> u8 {
    let agg_ok = placement != AggregatePlacement::Axes || pred.y.aggregate == truth.y.aggregate;
    u8::from(pred.x == truth.x && pred.y.column == truth.y.column && agg_ok)
}

fn eval_data_mapping_with(pred: &VegaZeroSpec, truth: &VegaZeroSpec, placement: AggregatePlacement) -> u8 {
    let agg_ok = placement != AggregatePlacement::DataMapping || pred.y.aggregate == truth.y.aggregate;
    u8::from(eval_data_mapping(pred, truth) == 1 && agg_ok)
}

/// Automatic part of the error taxonomy. Hallucination and non-optimal
/// spacing are never produced here.
pub fn classify_errors(pred: &Recommendation, truth: &CorpusTriple) -> BTreeSet<ErrorClass> {
    let mut out = BTreeSet::new();
    if !validate(&truth.spec, &sketch(&truth.table)).is_empty() {
        out.insert(ErrorClass::InputError);
        return out;
    }
    let (p, t) = (&pred.spec, &truth.spec);
    if eval_axes(p, t) == 0 && p.x == t.y.column && p.y.column == t.x && p.x != p.y.column {
        out.insert(ErrorClass::InvertedAxes);
    }

    let doc = match &pred.doc {
        Some(d) => Some(d.clone()),
        None => compile(p, &truth.table).ok(),
    };
    if let Some(doc) = doc {
        let counted_y = p.y.aggregate == Aggregate::Count;
        for (channel, c) in doc.encoding.channels() {
            if counted_y && (channel == "y" || channel == "theta") {
                continue;
            }
            let source_temporal = truth.table.column(&c.field).is_some_and(|col| col.ty == ColumnType::Temporal);
            if source_temporal && c.ty == ChannelType::Quantitative {
                out.insert(ErrorClass::IncorrectScaling);
            }
        }
        if doc.row_count() == 0 && !truth.table.rows().is_empty() {
            out.insert(ErrorClass::MissingData);
        }
    }
    out
}

/// Scores one raw completion against its ground-truth triple.
pub fn evaluate_sample(
    sample_id: &str,
    model_name: &str,
    raw: &str,
    truth: &CorpusTriple,
    config: &EvalConfig,
) -> EvalRecord {
    let parsed = match config.syntax_mode {
        SyntaxMode::Strict => parse_response(raw).ok(),
        SyntaxMode::Lenient => lenient_extract(raw).ok(),
    };
    let mut record = EvalRecord {
        sample_id: sample_id.to_string(),
        model_name: model_name.to_string(),
        hardness: truth.hardness,
        syntax: 0,
        data_mapping: None,
        mark: None,
        axes: None,
        data_mapping_partial: None,
        errors: BTreeSet::new(),
        lenient: false,
    };
    let Some(rec) = parsed else {
        if !validate(&truth.spec, &sketch(&truth.table)).is_empty() {
            record.errors.insert(ErrorClass::InputError);
        }
        return record;
    };
    let (p, t) = (&rec.spec, &truth.spec);
    record.syntax = 1;
    record.lenient = rec.lenient;
    record.data_mapping = Some(eval_data_mapping_with(p, t, config.aggregate_placement));
    record.mark = Some(eval_mark(p, t));
    record.axes = Some(eval_axes_with(p, t, config.aggregate_placement));
    if config.partial_credit {
        record.data_mapping_partial = Some(data_mapping_jaccard(p, t));
    }
    record.errors = classify_errors(&rec, truth);
    record
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelScore {
    pub correct: usize,
    pub applicable: usize,
    /// `None` when no record reached this level.
    pub accuracy: Option<f64>,
}

impl LevelScore {
    fn add(&mut self, v: Option<u8>) {
        if let Some(v) = v {
            self.applicable += 1;
            self.correct += v as usize;
        }
    }

    fn finish(&mut self) {
        self.accuracy = (self.applicable > 0).then(|| self.correct as f64 / self.applicable as f64);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    pub n_samples: usize,
    pub levels: BTreeMap<Level, LevelScore>,
    pub per_hardness: BTreeMap<Hardness, BTreeMap<Level, LevelScore>>,
    pub errors: BTreeMap<ErrorClass, usize>,
    pub lenient_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_mapping_partial: Option<f64>,
}

impl EvalReport {
    pub fn accuracy(&self, level: Level) -> Option<f64> {
        self.levels.get(&level).and_then(|s| s.accuracy)
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no records to aggregate")]
    EmptyInput,
    #[error("records mix models {0:?}; aggregate one model per report")]
    MixedModels(Vec<String>),
    #[error("prediction for unknown sample `{0}`")]
    UnknownSample(String),
    #[error("predictions file, line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

fn level_map() -> BTreeMap<Level, LevelScore> {
    Level::ALL.iter().map(|l| (*l, LevelScore::default())).collect()
}

pub fn aggregate_report(records: &[EvalRecord]) -> Result<EvalReport, EvalError> {
    let first = records.first().ok_or(EvalError::EmptyInput)?;
    let models: BTreeSet<&str> = records.iter().map(|r| r.model_name.as_str()).collect();
    if models.len() > 1 {
        return Err(EvalError::MixedModels(models.into_iter().map(String::from).collect()));
    }
    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let mut levels = level_map();
    let mut per_hardness: BTreeMap<Hardness, BTreeMap<Level, LevelScore>> = BTreeMap::new();
    let mut errors: BTreeMap<ErrorClass, usize> = BTreeMap::new();
    let mut partial = (0.0, 0usize);
    for r in &sorted {
        let bucket = per_hardness.entry(r.hardness).or_insert_with(level_map);
        for level in Level::ALL {
            let v = r.level(level);
            levels.get_mut(&level).unwrap().add(v);
            bucket.get_mut(&level).unwrap().add(v);
        }
        for e in &r.errors {
            *errors.entry(*e).or_default() += 1;
        }
        if let Some(p) = r.data_mapping_partial {
            partial.0 += p;
            partial.1 += 1;
        }
    }
    levels.values_mut().for_each(LevelScore::finish);
    per_hardness
        .values_mut()
        .flat_map(|m| m.values_mut())
        .for_each(LevelScore::finish);
    Ok(EvalReport {
        model_name: first.model_name.clone(),
        n_samples: records.len(),
        levels,
        per_hardness,
        errors,
        lenient_count: records.iter().filter(|r| r.lenient).count(),
        data_mapping_partial: (partial.1 > 0).then(|| partial.0 / partial.1 as f64),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |a| format!("{a:.2}"))
}

/// Plain-text table: one row per level, one column per model.
pub fn comparison_table(reports: &[EvalReport]) -> String {
    let mut header = vec!["Level".to_string()];
    header.extend(reports.iter().map(|r| r.model_name.clone()));
    let mut rows = vec![header];
    for level in Level::ALL {
        let mut row = vec![level.title().to_string()];
        row.extend(reports.iter().map(|r| cell(r.accuracy(level))));
        rows.push(row);
    }
    let mut row = vec!["Samples".to_string()];
    row.extend(reports.iter().map(|r| r.n_samples.to_string()));
    rows.push(row);

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (n, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if n == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        }
    }
    out
}

fn escape_html(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn comparison_html(reports: &[EvalReport]) -> String {
    let mut out = String::from("<table class=\"evallm\">\n<thead><tr><th>Level</th>");
    for r in reports {
        let _ = write!(out, "<th>{}</th>", escape_html(&r.model_name));
    }
    out.push_str("</tr></thead>\n<tbody>\n");
    for level in Level::ALL {
        let _ = write!(out, "<tr><th>{}</th>", level.title());
        for r in reports {
            let _ = write!(out, "<td>{}</td>", cell(r.accuracy(level)));
        }
        out.push_str("</tr>\n");
    }
    out.push_str("</tbody>\n</table>\n");
    out
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(alias = "id")]
    pub sample_id: String,
    #[serde(alias = "raw", alias = "text", alias = "response")]
    pub completion: String,
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Scores a model's predictions against the ground-truth triples.
pub fn evaluate_predictions(
    model_name: &str,
    predictions: &[Prediction],
    truth: &[CorpusTriple],
    config: &EvalConfig,
) -> Result<(Vec<EvalRecord>, EvalReport), EvalError> {
    let by_id: HashMap<&str, &CorpusTriple> = truth.iter().map(|t| (t.id.as_str(), t)).collect();
    let mut records = Vec::with_capacity(predictions.len());
    for p in predictions {
        let t = by_id
            .get(p.sample_id.as_str())
            .ok_or_else(|| EvalError::UnknownSample(p.sample_id.clone()))?;
        records.push(evaluate_sample(&p.sample_id, model_name, &p.completion, t, config));
    }
    records.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let report = aggregate_report(&records)?;
    Ok((records, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_csv, load_csv_with, LoadOptions};
    use crate::vegazero::parse;
    use std::sync::Arc;

    fn spec(s: &str) -> VegaZeroSpec {
        parse(s).unwrap()
    }

    fn response(vz: &str) -> String {
        format!("[VEGAZERO]\n{vz}\n[EXPLANATION-1]\na\n[EXPLANATION-2]\nb\n[CAPTION]\nc\n[SUGGESTIONS]\n1) d?\n")
    }

    fn triple(vz: &str) -> CorpusTriple {
        let table = load_csv(
            b"position,rank,age,join_year\nCaptain,1,30,2001\nPilot,3,40,2005\nPilot,2,35,2010\n",
            "pilot",
        )
        .unwrap();
        CorpusTriple {
            id: "s1".into(),
            table: Arc::new(table),
            query: "q".into(),
            hardness: Hardness::Easy,
            spec: spec(vz),
        }
    }

    const MEAN_RANK: &str = "mark bar encoding x position y aggregate mean rank transform group x";

    #[test]
    fn syntax_level() {
        assert_eq!(eval_syntax(&response(MEAN_RANK)), 1);
        assert_eq!(eval_syntax(&response("mark histogram encoding x a y aggregate none b")), 0);
    }

    #[test]
    fn data_mapping_is_a_set() {
        let truth = spec("mark bar encoding x position y aggregate none rank");
        assert_eq!(eval_data_mapping(&spec("mark bar encoding x rank y aggregate none position"), &truth), 1);
        assert_eq!(eval_data_mapping(&spec("mark bar encoding x age y aggregate none age"), &truth), 0);
        assert_eq!(
            eval_data_mapping(&spec("mark bar encoding x position y aggregate none rank color team"), &truth),
            0
        );
        assert!((data_mapping_jaccard(&spec("mark bar encoding x position y aggregate none age"), &truth) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn counted_y_is_not_a_data_column() {
        let a = spec("mark bar encoding x position y aggregate count position");
        let b = spec("mark bar encoding x position y aggregate count rank");
        assert_eq!(eval_data_mapping(&a, &b), 1);
    }

    #[test]
    fn axes_are_order_sensitive_and_include_aggregate() {
        let truth = spec(MEAN_RANK);
        assert_eq!(eval_axes(&truth, &truth), 1);
        assert_eq!(eval_axes(&spec("mark bar encoding x rank y aggregate mean position"), &truth), 0);
        let sum = spec("mark bar encoding x position y aggregate sum rank transform group x");
        assert_eq!(eval_axes(&sum, &truth), 0);
        assert_eq!(eval_axes_with(&sum, &truth, AggregatePlacement::DataMapping), 1);
        assert_eq!(eval_data_mapping_with(&sum, &truth, AggregatePlacement::DataMapping), 0);
        assert_eq!(eval_mark(&spec("mark line encoding x position y aggregate mean rank"), &truth), 0);
    }

    #[test]
    fn inverted_axes_detected() {
        let truth = triple("mark point encoding x age y aggregate none rank");
        let rec = parse_response(&response("mark point encoding x rank y aggregate none age")).unwrap();
        assert_eq!(classify_errors(&rec, &truth), BTreeSet::from([ErrorClass::InvertedAxes]));
    }

    #[test]
    fn year_as_number_is_incorrect_scaling() {
        let truth = triple("mark line encoding x join_year y aggregate none rank");
        let mut opts = LoadOptions::default();
        opts.type_overrides.insert("join_year".into(), ColumnType::Quantitative);
        let as_numbers = load_csv_with(
            b"position,rank,age,join_year\nCaptain,1,30,2001\nPilot,3,40,2005\nPilot,2,35,2010\n",
            "pilot",
            &opts,
        )
        .unwrap();
        let mut rec = parse_response(&response("mark line encoding x join_year y aggregate none rank")).unwrap();
        rec.doc = Some(compile(&rec.spec, &as_numbers).unwrap());
        assert_eq!(classify_errors(&rec, &truth), BTreeSet::from([ErrorClass::IncorrectScaling]));
        rec.doc = None;
        assert!(classify_errors(&rec, &truth).is_empty());
    }

    #[test]
    fn empty_result_is_missing_data() {
        let truth = triple(MEAN_RANK);
        let rec = parse_response(&response(
            "mark bar encoding x position y aggregate mean rank transform filter age > 99 group x",
        ))
        .unwrap();
        assert_eq!(classify_errors(&rec, &truth), BTreeSet::from([ErrorClass::MissingData]));
    }

    #[test]
    fn invalid_truth_is_input_error() {
        let truth = triple("mark bar encoding x position y aggregate mean speed");
        let rec = parse_response(&response(MEAN_RANK)).unwrap();
        assert_eq!(classify_errors(&rec, &truth), BTreeSet::from([ErrorClass::InputError]));
    }

    #[test]
    fn layering_and_report() {
        let truth = triple(MEAN_RANK);
        let cfg = EvalConfig::default();
        let good = evaluate_sample("a", "m", &response(MEAN_RANK), &truth, &cfg);
        let bad = evaluate_sample("b", "m", "garbage", &truth, &cfg);
        assert_eq!((good.syntax, good.mark, good.axes), (1, Some(1), Some(1)));
        assert_eq!((bad.syntax, bad.data_mapping, bad.mark, bad.axes), (0, None, None, None));
        let report = aggregate_report(&[good.clone(), bad.clone()]).unwrap();
        assert_eq!(report.accuracy(Level::Syntax), Some(0.5));
        assert_eq!(report.accuracy(Level::Mark), Some(1.0));
        assert_eq!(report.levels[&Level::Mark].applicable, 1);
        let reversed = aggregate_report(&[bad, good]).unwrap();
        assert_eq!(report.to_pretty_json(), reversed.to_pretty_json());
    }

    #[test]
    fn lenient_mode_is_flagged() {
        let truth = triple(MEAN_RANK);
        let prose = format!("Here you go:\n{MEAN_RANK}\n");
        let strict = evaluate_sample("a", "m", &prose, &truth, &EvalConfig::default());
        assert_eq!(strict.syntax, 0);
        let cfg = EvalConfig { syntax_mode: SyntaxMode::Lenient, ..EvalConfig::default() };
        let lenient = evaluate_sample("a", "m", &prose, &truth, &cfg);
        assert_eq!((lenient.syntax, lenient.lenient), (1, true));
        assert_eq!(aggregate_report(&[lenient]).unwrap().lenient_count, 1);
    }

    #[test]
    fn report_errors() {
        assert_eq!(aggregate_report(&[]), Err(EvalError::EmptyInput));
        let truth = triple(MEAN_RANK);
        let a = evaluate_sample("a", "m1", &response(MEAN_RANK), &truth, &EvalConfig::default());
        let b = evaluate_sample("b", "m2", &response(MEAN_RANK), &truth, &EvalConfig::default());
        assert!(matches!(aggregate_report(&[a, b]), Err(EvalError::MixedModels(_))));
    }

    #[test]
    fn side_by_side_rendering() {
        let truth = triple(MEAN_RANK);
        let inverted = "mark bar encoding x rank y aggregate mean position";
        let mut r1 = Vec::new();
        let mut r2 = Vec::new();
        for i in 0..4 {
            let id = format!("{i}");
            r1.push(evaluate_sample(&id, "student", &response(MEAN_RANK), &truth, &EvalConfig::default()));
            let vz = if i == 0 { inverted } else { MEAN_RANK };
            r2.push(evaluate_sample(&id, "teacher", &response(vz), &truth, &EvalConfig::default()));
        }
        let reports = [aggregate_report(&r1).unwrap(), aggregate_report(&r2).unwrap()];
        let text = comparison_table(&reports);
        let axes = text.lines().find(|l| l.starts_with("Axes")).unwrap();
        assert!(axes.contains("1.00") && axes.contains("0.75"), "{text}");
        let html = comparison_html(&reports);
        assert!(html.contains("<th>teacher</th>") && html.contains("<td>0.75</td>"));
    }
}
