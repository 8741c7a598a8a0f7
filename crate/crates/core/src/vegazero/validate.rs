use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::*;
use crate::dataset::{ColumnType, Temporal, TableSketch};

/// Closed set of reasons a spec does not fit a table.
///
/// - `UnknownColumn`: a referenced column is absent from the table.
/// - `TypeMismatch`: a filter literal cannot be compared with its column.
/// - `IllegalAggregate`: a numeric aggregate over a non-quantitative y, y
///   repeating x without `count`, or grouping/binning with aggregate `none`.
/// - `BinOnNonTemporal`: `bin` over a column that is not temporal.
/// - `TopkWithoutSort`: `topk` without a `sort` clause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationCode {
    UnknownColumn,
    TypeMismatch,
    IllegalAggregate,
    BinOnNonTemporal,
    TopkWithoutSort,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
    /// Dotted path of the offending clause, e.g. `encoding.y`.
    pub location: String,
}

impl Violation {
    fn new(code: ViolationCode, location: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            code,
            message: message.into(),
            location: location.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.code, self.location, self.message)
    }
}

fn literal_fits(ty: ColumnType, lit: &Literal) -> bool {
    match (ty, lit) {
        (ColumnType::Nominal, _) => true,
        (ColumnType::Quantitative, Literal::Number(_)) => true,
        (ColumnType::Quantitative, Literal::Text(_)) => false,
        (ColumnType::Temporal, Literal::Number(v)) => {
            v.fract() == 0.0 && Temporal::parse_loose(&format!("{v}")).is_some()
        }
        (ColumnType::Temporal, Literal::Text(s)) => Temporal::parse_loose(s).is_some(),
    }
}

/// Checks a spec against a table sketch. An empty result means the spec can
/// be executed and compiled.
pub fn validate(spec: &VegaZeroSpec, sketch: &TableSketch) -> Vec<Violation> {
    let mut out = Vec::new();
    let lookup = |name: &str| sketch.feature(name).map(|c| c.ty);
    let require = |name: &str, location: &str, out: &mut Vec<Violation>| {
        let ty = lookup(name);
        if ty.is_none() {
            out.push(Violation::new(
                ViolationCode::UnknownColumn,
                location,
                format!("column `{name}` does not exist in `{}`", sketch.table_name),
            ));
        }
        ty
    };

    let x_ty = require(&spec.x, "encoding.x", &mut out);
    let y_ty = require(&spec.y.column, "encoding.y", &mut out);
    if let Some(color) = &spec.color {
        require(color, "encoding.color", &mut out);
    }

    let agg = spec.y.aggregate;
    if agg.is_numeric() {
        if let Some(ty) = y_ty.filter(|t| *t != ColumnType::Quantitative) {
            out.push(Violation::new(
                ViolationCode::IllegalAggregate,
                "encoding.y",
                format!("aggregate `{agg}` requires a quantitative column, `{}` is {ty}", spec.y.column),
            ));
        }
    }
    if agg != Aggregate::Count && spec.x == spec.y.column {
        out.push(Violation::new(
            ViolationCode::IllegalAggregate,
            "encoding.y",
            format!("y repeats x column `{}`; only `count` may do so", spec.x),
        ));
    }
    if agg == Aggregate::None && (spec.group.is_some() || spec.bin.is_some()) {
        out.push(Violation::new(
            ViolationCode::IllegalAggregate,
            "transform",
            "grouping or binning requires an aggregate other than `none`",
        ));
    }

    if let Some(pred) = &spec.filter {
        for (i, group) in pred.any_of.iter().enumerate() {
            for (j, cmp) in group.iter().enumerate() {
                let location = format!("transform.filter[{i}][{j}]");
                if let Some(ty) = require(&cmp.column, &location, &mut out) {
                    if !literal_fits(ty, &cmp.value) {
                        out.push(Violation::new(
                            ViolationCode::TypeMismatch,
                            location,
                            format!("literal `{}` cannot be compared with {ty} column `{}`", cmp.value, cmp.column),
                        ));
                    }
                }
            }
        }
    }

    if spec.bin.is_some() {
        if let Some(ty) = x_ty.filter(|t| *t != ColumnType::Temporal) {
            out.push(Violation::new(
                ViolationCode::BinOnNonTemporal,
                "transform.bin",
                format!("cannot bin {ty} column `{}`", spec.x),
            ));
        }
    }
    if spec.topk.is_some() && spec.sort.is_none() {
        out.push(Violation::new(
            ViolationCode::TopkWithoutSort,
            "transform.topk",
            "topk requires a sort clause",
        ));
    }
    out
}
