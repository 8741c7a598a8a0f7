//! Tabular ingestion: CSV loading, column type inference and the compact
//! table sketch (feature names and types only) that every prompt receives.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

/// Default guardrail on the number of cells a single ingest may produce.
pub const DEFAULT_MAX_CELLS: usize = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("input has no header row")]
    EmptyInput,
    #[error("row {0} has a different number of cells than the header")]
    RaggedRow(usize),
    #[error("input is not valid UTF-8: {0}")]
    EncodingError(String),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("table exceeds the ingest limit of {limit} cells")]
    TooLarge { limit: usize },
    #[error("cell ({row}, `{column}`) does not conform to type {expected}: {value}")]
    TypeConformance {
        row: usize,
        column: String,
        expected: ColumnType,
        value: String,
    },
    #[error("malformed CSV: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Nominal,
    Quantitative,
    Temporal,
}

impl ColumnType {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnType::Nominal => "nominal",
            ColumnType::Quantitative => "quantitative",
            ColumnType::Temporal => "temporal",
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ColumnType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nominal" => Ok(ColumnType::Nominal),
            "quantitative" => Ok(ColumnType::Quantitative),
            "temporal" => Ok(ColumnType::Temporal),
            other => Err(format!("unknown column type `{other}`")),
        }
    }
}

/// A temporal cell. Year-only values keep their granularity so they echo
/// back exactly as ingested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Temporal {
    Year(i32),
    Date(NaiveDate),
    DateTime(NaiveDateTime),
}

impl Temporal {
    pub fn to_datetime(self) -> NaiveDateTime {
        match self {
            Temporal::Year(y) => NaiveDate::from_ymd_opt(y, 1, 1)
                .unwrap_or(NaiveDate::MIN)
                .and_hms_opt(0, 0, 0)
                .unwrap_or_default(),
            Temporal::Date(d) => d.and_hms_opt(0, 0, 0).unwrap_or_default(),
            Temporal::DateTime(dt) => dt,
        }
    }

    pub fn year(self) -> i32 {
        self.to_datetime().year()
    }

    /// Zero-based month (January = 0).
    pub fn month0(self) -> u32 {
        self.to_datetime().month0()
    }

    /// Zero-based weekday (Monday = 0).
    pub fn weekday0(self) -> u32 {
        self.to_datetime().weekday().num_days_from_monday()
    }

    /// Parses an ISO date (`YYYY-MM-DD`) or date-time
    /// (`YYYY-MM-DD HH:MM[:SS]`, `T` separator accepted).
    pub fn parse_iso(s: &str) -> Option<Temporal> {
        let s = s.trim();
        if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return Some(Temporal::Date(d));
        }
        for fmt in [
            "%Y-%m-%d %H:%M:%S",
            "%Y-%m-%dT%H:%M:%S",
            "%Y-%m-%d %H:%M",
            "%Y-%m-%dT%H:%M",
        ] {
            if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
                return Some(Temporal::DateTime(dt));
            }
        }
        None
    }

    /// Parses a value as a year in the accepted range or an ISO date.
    pub fn parse_loose(s: &str) -> Option<Temporal> {
        parse_year(s).map(Temporal::Year).or_else(|| Temporal::parse_iso(s))
    }
}

impl Ord for Temporal {
    fn cmp(&self, other: &Self) -> Ordering {
        self.to_datetime().cmp(&other.to_datetime())
    }
}

impl PartialOrd for Temporal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Temporal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Temporal::Year(y) => write!(f, "{y}"),
            Temporal::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Temporal::DateTime(dt) => write!(f, "{}", dt.format("%Y-%m-%d %H:%M:%S")),
        }
    }
}

/// A typed cell value.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Null,
    Number(f64),
    Text(String),
    Date(Temporal),
}

impl Scalar {
    pub fn is_null(&self) -> bool {
        matches!(self, Scalar::Null)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn conforms_to(&self, ty: ColumnType) -> bool {
        matches!(
            (self, ty),
            (Scalar::Null, _)
                | (Scalar::Number(_), ColumnType::Quantitative)
                | (Scalar::Text(_), ColumnType::Nominal)
                | (Scalar::Date(_), ColumnType::Temporal)
        )
    }

    /// Parses a raw cell according to a column type; empty strings are null.
    pub fn parse_as(raw: &str, ty: ColumnType) -> Option<Scalar> {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return Some(Scalar::Null);
        }
        match ty {
            ColumnType::Nominal => Some(Scalar::Text(raw.to_string())),
            ColumnType::Quantitative => parse_number(trimmed).map(Scalar::Number),
            ColumnType::Temporal => Temporal::parse_loose(trimmed).map(Scalar::Date),
        }
    }

    /// JSON form used in table echoes and inline chart data. Integral numbers
    /// are written without a fractional part.
    pub fn to_json(&self) -> Value {
        match self {
            Scalar::Null => Value::Null,
            Scalar::Number(v) => number_to_json(*v),
            Scalar::Text(s) => Value::String(s.clone()),
            Scalar::Date(t) => Value::String(t.to_string()),
        }
    }

    pub fn from_json(value: &Value, ty: ColumnType) -> Option<Scalar> {
        match (value, ty) {
            (Value::Null, _) => Some(Scalar::Null),
            (Value::Number(n), ColumnType::Quantitative) => n.as_f64().map(Scalar::Number),
            (Value::String(s), ColumnType::Nominal) => Some(Scalar::Text(s.clone())),
            (Value::String(s), ColumnType::Temporal) => {
                Temporal::parse_loose(s).map(Scalar::Date)
            }
            (Value::Number(n), ColumnType::Temporal) => n
                .as_i64()
                .and_then(|y| i32::try_from(y).ok())
                .map(|y| Scalar::Date(Temporal::Year(y))),
            _ => None,
        }
    }

    /// Total order used for group keys and sorting: null first, then values
    /// of the same kind in their natural order.
    pub fn total_cmp(&self, other: &Scalar) -> Ordering {
        fn rank(s: &Scalar) -> u8 {
            match s {
                Scalar::Null => 0,
                Scalar::Number(_) => 1,
                Scalar::Date(_) => 2,
                Scalar::Text(_) => 3,
            }
        }
        match (self, other) {
            (Scalar::Number(a), Scalar::Number(b)) => a.total_cmp(b),
            (Scalar::Text(a), Scalar::Text(b)) => a.cmp(b),
            (Scalar::Date(a), Scalar::Date(b)) => a.cmp(b),
            _ => rank(self).cmp(&rank(other)),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Null => Ok(()),
            Scalar::Number(v) => write!(f, "{v}"),
            Scalar::Text(s) => f.write_str(s),
            Scalar::Date(t) => write!(f, "{t}"),
        }
    }
}

pub(crate) fn number_to_json(v: f64) -> Value {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        Value::from(v as i64)
    } else {
        serde_json::Number::from_f64(v)
            .map(Value::Number)
            .unwrap_or(Value::Null)
    }
}

fn parse_number(s: &str) -> Option<f64> {
    // Rust's float parser accepts "inf" and "NaN"; tabular data should not.
    if !s.bytes().any(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_year(s: &str) -> Option<i32> {
    let s = s.trim();
    if s.len() != 4 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let y: i32 = s.parse().ok()?;
    (1500..=2100).contains(&y).then_some(y)
}

/// True when a header names a calendar year (`year`, `join_year`, `Yr`,
/// `JoinYear`). Plural `years` is a duration, not a date.
pub fn is_year_like_header(header: &str) -> bool {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut prev_lower = false;
    for c in header.chars() {
        if !c.is_alphanumeric() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            prev_lower = false;
            continue;
        }
        if c.is_uppercase() && prev_lower && !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        prev_lower = c.is_lowercase();
        current.extend(c.to_lowercase());
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
        .iter()
        .any(|t| t == "yr" || t.ends_with("year"))
}

/// Infers a column's type from its raw values. Empty strings are null.
pub fn infer_column_type<S: AsRef<str>>(header: &str, values: &[S]) -> ColumnType {
    let non_null: Vec<&str> = values
        .iter()
        .map(|v| v.as_ref().trim())
        .filter(|v| !v.is_empty())
        .collect();
    if non_null.is_empty() {
        return ColumnType::Nominal;
    }
    if non_null.iter().all(|v| Temporal::parse_iso(v).is_some()) {
        return ColumnType::Temporal;
    }
    if is_year_like_header(header) && non_null.iter().all(|v| parse_year(v).is_some()) {
        return ColumnType::Temporal;
    }
    if non_null.iter().all(|v| parse_number(v).is_some()) {
        return ColumnType::Quantitative;
    }
    ColumnType::Nominal
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        Column {
            name: name.into(),
            ty,
        }
    }
}

/// An immutable typed table.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    name: String,
    columns: Vec<Column>,
    rows: Vec<Vec<Scalar>>,
}

impl DataTable {
    pub fn new(
        name: impl Into<String>,
        columns: Vec<Column>,
        rows: Vec<Vec<Scalar>>,
    ) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(DatasetError::DuplicateColumn(c.name.clone()));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(DatasetError::RaggedRow(i + 1));
            }
            for (cell, col) in row.iter().zip(&columns) {
                if !cell.conforms_to(col.ty) {
                    return Err(DatasetError::TypeConformance {
                        row: i + 1,
                        column: col.name.clone(),
                        expected: col.ty,
                        value: cell.to_string(),
                    });
                }
            }
        }
        Ok(DataTable {
            name: name.into(),
            columns,
            rows,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Scalar>] {
        &self.rows
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Iterator over one column's cells.
    pub fn values<'a>(&'a self, idx: usize) -> impl Iterator<Item = &'a Scalar> + 'a {
        self.rows.iter().map(move |r| &r[idx])
    }

    pub fn to_json_value(&self) -> Value {
        serde_json::to_value(self).unwrap_or(Value::Null)
    }
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    name: String,
    columns: Vec<Column>,
    rows: Vec<Vec<Value>>,
}

impl Serialize for DataTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TableRepr {
            name: self.name.clone(),
            columns: self.columns.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(Scalar::to_json).collect())
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DataTable {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = TableRepr::deserialize(deserializer)?;
        let mut rows = Vec::with_capacity(repr.rows.len());
        for (i, raw) in repr.rows.iter().enumerate() {
            if raw.len() != repr.columns.len() {
                return Err(D::Error::custom(DatasetError::RaggedRow(i + 1)));
            }
            let row = raw
                .iter()
                .zip(&repr.columns)
                .map(|(v, c)| {
                    Scalar::from_json(v, c.ty).ok_or_else(|| {
                        D::Error::custom(format!(
                            "row {}: value {v} does not conform to {} column `{}`",
                            i + 1,
                            c.ty,
                            c.name
                        ))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        DataTable::new(repr.name, repr.columns, rows).map_err(D::Error::custom)
    }
}

/// Feature names and types of a table, with no cell data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSketch {
    pub table_name: String,
    pub features: Vec<Column>,
    pub row_count: usize,
}

impl TableSketch {
    pub fn feature(&self, name: &str) -> Option<&Column> {
        self.features.iter().find(|c| c.name == name)
    }
}

pub fn sketch(table: &DataTable) -> TableSketch {
    TableSketch {
        table_name: table.name.clone(),
        features: table.columns.clone(),
        row_count: table.rows.len(),
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub max_cells: usize,
    /// Explicit column types (e.g. from a corpus schema); they take
    /// precedence over inference.
    pub type_overrides: BTreeMap<String, ColumnType>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            max_cells: DEFAULT_MAX_CELLS,
            type_overrides: BTreeMap::new(),
        }
    }
}

pub fn load_csv(bytes: &[u8], name: &str) -> Result<DataTable, DatasetError> {
    load_csv_with(bytes, name, &LoadOptions::default())
}

pub fn load_csv_with(
    bytes: &[u8],
    name: &str,
    options: &LoadOptions,
) -> Result<DataTable, DatasetError> {
    let text = std::str::from_utf8(bytes).map_err(|e| DatasetError::EncodingError(e.to_string()))?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    if text.trim().is_empty() {
        return Err(DatasetError::EmptyInput);
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| DatasetError::Csv(e.to_string()))?,
        None => return Err(DatasetError::EmptyInput),
    };
    let names: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    let width = names.len();

    let mut raw_rows: Vec<Vec<String>> = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| DatasetError::Csv(e.to_string()))?;
        // A fully blank line at the end of a file is not a row.
        if rec.len() == 1 && rec.get(0).is_some_and(str::is_empty) && width != 1 {
            continue;
        }
        if rec.len() != width {
            return Err(DatasetError::RaggedRow(i + 1));
        }
        if (raw_rows.len() + 1) * width > options.max_cells {
            return Err(DatasetError::TooLarge {
                limit: options.max_cells,
            });
        }
        raw_rows.push(rec.iter().map(str::to_string).collect());
    }

    let mut columns = Vec::with_capacity(width);
    for (idx, col_name) in names.iter().enumerate() {
        let ty = match options.type_overrides.get(col_name) {
            Some(ty) => *ty,
            None => {
                let values: Vec<&str> = raw_rows.iter().map(|r| r[idx].as_str()).collect();
                infer_column_type(col_name, &values)
            }
        };
        columns.push(Column::new(col_name.clone(), ty));
    }

    let mut rows = Vec::with_capacity(raw_rows.len());
    for (i, raw) in raw_rows.iter().enumerate() {
        let mut row = Vec::with_capacity(width);
        for (cell, col) in raw.iter().zip(&columns) {
            let value =
                Scalar::parse_as(cell, col.ty).ok_or_else(|| DatasetError::TypeConformance {
                    row: i + 1,
                    column: col.name.clone(),
                    expected: col.ty,
                    value: cell.clone(),
                })?;
            row.push(value);
        }
        rows.push(row);
    }
    DataTable::new(name, columns, rows)
}
