//! Compiles a VegaZero spec plus its table into a self-contained Vega-Lite
//! (v5) document. Transforms are materialized by the executor, so the
//! document carries inline values and no aggregate directives.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::ast::*;
use super::execute::{execute, output_y_name, ExecError};
use super::validate::{validate, Violation};
use crate::dataset::{sketch, ColumnType, DataTable};

pub const VEGA_LITE_SCHEMA: &str = "https://vega.github.io/schema/vega-lite/v5.json";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("spec does not validate: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelType {
    Nominal,
    Quantitative,
    Temporal,
    Ordinal,
}

impl From<ColumnType> for ChannelType {
    fn from(ty: ColumnType) -> Self {
        match ty {
            ColumnType::Nominal => ChannelType::Nominal,
            ColumnType::Quantitative => ChannelType::Quantitative,
            ColumnType::Temporal => ChannelType::Temporal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub field: String,
    #[serde(rename = "type")]
    pub ty: ChannelType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<String>,
    /// A Vega-Lite sort: a string directive, or an explicit label order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sort: Option<Value>,
}

impl Channel {
    fn new(field: impl Into<String>, ty: ChannelType) -> Self {
        Channel {
            field: field.into(),
            ty,
            aggregate: None,
            sort: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Channel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Channel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Channel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Channel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Channel>,
}

impl Encoding {
    /// Populated channels with their Vega-Lite names.
    pub fn channels(&self) -> impl Iterator<Item = (&'static str, &Channel)> {
        [
            ("x", &self.x),
            ("y", &self.y),
            ("theta", &self.theta),
            ("color", &self.color),
            ("detail", &self.detail),
        ]
        .into_iter()
        .filter_map(|(name, ch)| ch.as_ref().map(|c| (name, c)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InlineData {
    pub values: Vec<Map<String, Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VegaLiteDoc {
    #[serde(rename = "$schema")]
    pub schema: String,
    pub data: InlineData,
    pub mark: String,
    pub encoding: Encoding,
}

impl VegaLiteDoc {
    pub fn row_count(&self) -> usize {
        self.data.values.len()
    }

    /// Fields encoded by any channel.
    pub fn fields(&self) -> Vec<&str> {
        self.encoding.channels().map(|(_, c)| c.field.as_str()).collect()
    }

    /// Every encoded field is a key of every inline row.
    pub fn fields_bound(&self) -> bool {
        self.fields()
            .iter()
            .all(|f| self.data.values.iter().all(|row| row.contains_key(*f)))
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }
}

/// Binned labels (month and weekday names) would sort alphabetically, so
/// unless the chart sorts by y they are pinned to the executed order, which
/// is calendar order or its reverse.
fn sort_directive(spec: &VegaZeroSpec, y_channel: &str, executed: &DataTable) -> Option<Value> {
    let by_y = spec.sort.is_some_and(|s| s.axis == Axis::Y);
    if spec.bin.is_some() && !by_y {
        let mut labels: Vec<Value> = Vec::new();
        for row in executed.rows() {
            let v = row[0].to_json();
            if !labels.contains(&v) {
                labels.push(v);
            }
        }
        return Some(Value::Array(labels));
    }
    spec.sort.map(|s| Value::String(match (s.axis, s.direction) {
        (Axis::X, SortDirection::Asc) => "ascending".to_string(),
        (Axis::X, SortDirection::Desc) => "descending".to_string(),
        (Axis::Y, SortDirection::Asc) => y_channel.to_string(),
        (Axis::Y, SortDirection::Desc) => format!("-{y_channel}"),
    }))
}

/// Builds the chart document for already-executed data.
pub fn build_doc(spec: &VegaZeroSpec, executed: &DataTable) -> VegaLiteDoc {
    let columns = executed.columns();
    let values = executed
        .rows()
        .iter()
        .map(|row| {
            columns
                .iter()
                .zip(row)
                .map(|(c, v)| (c.name.clone(), v.to_json()))
                .collect::<Map<_, _>>()
        })
        .collect();

    let x_ty = if spec.bin.is_some() {
        ChannelType::Ordinal
    } else {
        ChannelType::from(columns[0].ty)
    };
    let x = Channel::new(spec.x.clone(), x_ty);
    let y = Channel::new(output_y_name(spec), ChannelType::from(columns[1].ty));
    let color = spec
        .color
        .as_ref()
        .map(|c| Channel::new(c.clone(), ChannelType::from(columns[2].ty)));

    let encoding = if spec.mark == Mark::Arc {
        let mut slice = Channel { ty: ChannelType::Nominal, ..x };
        if spec.bin.is_some() {
            slice.ty = ChannelType::Ordinal;
        }
        slice.sort = sort_directive(spec, "theta", executed);
        Encoding {
            theta: Some(Channel {
                ty: ChannelType::Quantitative,
                ..y
            }),
            color: Some(slice),
            detail: color,
            ..Encoding::default()
        }
    } else {
        let mut x = x;
        x.sort = sort_directive(spec, "y", executed);
        Encoding {
            x: Some(x),
            y: Some(y),
            color,
            ..Encoding::default()
        }
    };

    VegaLiteDoc {
        schema: VEGA_LITE_SCHEMA.to_string(),
        data: InlineData { values },
        mark: spec.mark.as_str().to_string(),
        encoding,
    }
}

pub fn compile(spec: &VegaZeroSpec, table: &DataTable) -> Result<VegaLiteDoc, CompileError> {
    let violations = validate(spec, &sketch(table));
    if !violations.is_empty() {
        return Err(CompileError::Invalid(violations));
    }
    let executed = execute(spec, table)?;
    Ok(build_doc(spec, &executed))
}
