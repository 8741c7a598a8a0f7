//! Executes a spec against a table: filter, then group and aggregate, then
//! sort, then topk. The result is a small table with the x, aggregated y and
//! optional color columns, ready to be inlined into a chart document.

use std::cmp::Ordering;

use thiserror::Error;

use super::ast::*;
use crate::dataset::{Column, ColumnType, DataTable, Scalar, Temporal};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("cannot evaluate predicate `{0}`")]
    EvalError(String),
    #[error("column `{0}` does not exist")]
    UnknownColumn(String),
}

const MONTHS: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];
const WEEKDAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

/// A group key component. Bins order by their calendar index, not their
/// label, so months come out January first.
#[derive(Debug, Clone, PartialEq)]
enum KeyPart {
    Value(Scalar),
    Bin(i64, String),
}

impl KeyPart {
    fn cmp(&self, other: &KeyPart) -> Ordering {
        match (self, other) {
            (KeyPart::Bin(a, _), KeyPart::Bin(b, _)) => a.cmp(b),
            (KeyPart::Value(a), KeyPart::Value(b)) => a.total_cmp(b),
            (KeyPart::Value(_), KeyPart::Bin(..)) => Ordering::Less,
            (KeyPart::Bin(..), KeyPart::Value(_)) => Ordering::Greater,
        }
    }

    fn into_scalar(self) -> Scalar {
        match self {
            KeyPart::Value(v) => v,
            KeyPart::Bin(_, label) => Scalar::Text(label),
        }
    }
}

/// Label and ordinal of a temporal value's bin.
pub fn bin_label(value: &Temporal, unit: TimeUnit) -> (i64, String) {
    match unit {
        TimeUnit::Year => {
            let y = value.year();
            (y as i64, y.to_string())
        }
        TimeUnit::Month => {
            let m = value.month0() as usize;
            (m as i64, MONTHS[m].to_string())
        }
        TimeUnit::Weekday => {
            let d = value.weekday0() as usize;
            (d as i64, WEEKDAYS[d].to_string())
        }
    }
}

fn literal_text(lit: &Literal) -> String {
    lit.to_string()
}

fn compare_cell(cell: &Scalar, ty: ColumnType, lit: &Literal) -> Option<Ordering> {
    match (cell, ty) {
        (Scalar::Null, _) => None,
        (Scalar::Number(v), ColumnType::Quantitative) => match lit {
            Literal::Number(l) => v.partial_cmp(l),
            Literal::Text(_) => None,
        },
        (Scalar::Text(s), ColumnType::Nominal) => Some(s.as_str().cmp(literal_text(lit).as_str())),
        (Scalar::Date(d), ColumnType::Temporal) => {
            let rhs = Temporal::parse_loose(&literal_text(lit))?;
            Some(d.cmp(&rhs))
        }
        _ => None,
    }
}

fn op_holds(op: CompareOp, ord: Ordering) -> bool {
    match op {
        CompareOp::Eq => ord == Ordering::Equal,
        CompareOp::Ne => ord != Ordering::Equal,
        CompareOp::Lt => ord == Ordering::Less,
        CompareOp::Le => ord != Ordering::Greater,
        CompareOp::Gt => ord == Ordering::Greater,
        CompareOp::Ge => ord != Ordering::Less,
    }
}

struct CompiledCmp<'a> {
    idx: usize,
    ty: ColumnType,
    cmp: &'a Comparison,
}

fn compile_predicate<'a>(
    pred: &'a Predicate,
    table: &DataTable,
) -> Result<Vec<Vec<CompiledCmp<'a>>>, ExecError> {
    pred.any_of
        .iter()
        .map(|group| {
            group
                .iter()
                .map(|cmp| {
                    let idx = table.column_index(&cmp.column).ok_or_else(|| {
                        ExecError::EvalError(format!("{} {} {}", cmp.column, cmp.op, cmp.value))
                    })?;
                    Ok(CompiledCmp {
                        idx,
                        ty: table.columns()[idx].ty,
                        cmp,
                    })
                })
                .collect()
        })
        .collect()
}

/// Row-level predicate test. Comparisons against null cells are false.
fn row_matches(row: &[Scalar], pred: &[Vec<CompiledCmp<'_>>]) -> bool {
    pred.iter().any(|group| {
        group.iter().all(|c| {
            compare_cell(&row[c.idx], c.ty, &c.cmp.value)
                .is_some_and(|ord| op_holds(c.cmp.op, ord))
        })
    })
}

fn aggregate(values: &[&Scalar], agg: Aggregate) -> Scalar {
    let numbers = || values.iter().filter_map(|v| v.as_f64());
    match agg {
        Aggregate::Count => Scalar::Number(values.len() as f64),
        Aggregate::Sum => {
            let mut it = numbers().peekable();
            if it.peek().is_none() {
                Scalar::Null
            } else {
                Scalar::Number(it.sum())
            }
        }
        Aggregate::Mean => {
            let (sum, n) = numbers().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            if n == 0 {
                Scalar::Null
            } else {
                Scalar::Number(sum / n as f64)
            }
        }
        Aggregate::Min | Aggregate::Max => {
            let mut best: Option<&Scalar> = None;
            for v in values.iter().copied().filter(|v| !v.is_null()) {
                best = match best {
                    None => Some(v),
                    Some(b) => {
                        let ord = v.total_cmp(b);
                        let take = if agg == Aggregate::Min {
                            ord == Ordering::Less
                        } else {
                            ord == Ordering::Greater
                        };
                        Some(if take { v } else { b })
                    }
                };
            }
            best.cloned().unwrap_or(Scalar::Null)
        }
        Aggregate::None => values.first().map_or(Scalar::Null, |v| (*v).clone()),
    }
}

/// Name of the aggregated y column in the executed output. It keeps the
/// source name unless that would collide with the x or color column.
pub fn output_y_name(spec: &VegaZeroSpec) -> String {
    let col = &spec.y.column;
    if *col == spec.x || spec.color.as_ref() == Some(col) {
        format!("{}_{}", spec.y.aggregate, col)
    } else {
        col.clone()
    }
}

struct OutRow {
    x: KeyPart,
    y: Scalar,
    color: Option<Scalar>,
}

pub fn execute(spec: &VegaZeroSpec, table: &DataTable) -> Result<DataTable, ExecError> {
    let col = |name: &str| {
        table
            .column_index(name)
            .ok_or_else(|| ExecError::UnknownColumn(name.to_string()))
    };
    let x_idx = col(&spec.x)?;
    let y_idx = col(&spec.y.column)?;
    let color_idx = spec.color.as_deref().map(col).transpose()?;

    let predicate = spec
        .filter
        .as_ref()
        .map(|p| compile_predicate(p, table))
        .transpose()?;
    let rows: Vec<&Vec<Scalar>> = table
        .rows()
        .iter()
        .filter(|r| predicate.as_ref().is_none_or(|p| row_matches(r, p)))
        .collect();

    let x_key = |row: &[Scalar]| -> KeyPart {
        match (spec.bin, &row[x_idx]) {
            (Some(bin), Scalar::Date(d)) => {
                let (idx, label) = bin_label(d, bin.unit);
                KeyPart::Bin(idx, label)
            }
            (_, v) => KeyPart::Value(v.clone()),
        }
    };

    let mut out: Vec<OutRow> = if spec.is_grouped() {
        // Groups stay sorted by (x key, color) so lookup is a binary search.
        let mut groups: Vec<(KeyPart, Option<Scalar>, Vec<&Scalar>)> = Vec::new();
        for row in &rows {
            let xk = x_key(row);
            let ck = color_idx.map(|i| row[i].clone());
            let probe = groups.binary_search_by(|(gx, gc, _)| {
                gx.cmp(&xk).then_with(|| match (gc, &ck) {
                    (Some(a), Some(b)) => a.total_cmp(b),
                    _ => Ordering::Equal,
                })
            });
            match probe {
                Ok(pos) => groups[pos].2.push(&row[y_idx]),
                Err(pos) => groups.insert(pos, (xk, ck, vec![&row[y_idx]])),
            }
        }
        groups
            .into_iter()
            .map(|(x, color, members)| OutRow {
                x,
                y: aggregate(&members, spec.y.aggregate),
                color,
            })
            .collect()
    } else {
        rows.iter()
            .map(|row| OutRow {
                x: x_key(row),
                y: row[y_idx].clone(),
                color: color_idx.map(|i| row[i].clone()),
            })
            .collect()
    };

    if let Some(sort) = spec.sort {
        out.sort_by(|a, b| {
            let ord = match sort.axis {
                Axis::X => a.x.cmp(&b.x),
                Axis::Y => a.y.total_cmp(&b.y),
            };
            match sort.direction {
                SortDirection::Asc => ord,
                SortDirection::Desc => ord.reverse(),
            }
        });
    }
    if let Some(k) = spec.topk {
        out.truncate(k as usize);
    }

    let source = table.columns();
    let x_ty = if spec.bin.is_some() {
        ColumnType::Nominal
    } else {
        source[x_idx].ty
    };
    let y_ty = match spec.y.aggregate {
        Aggregate::Count | Aggregate::Sum | Aggregate::Mean => ColumnType::Quantitative,
        _ => source[y_idx].ty,
    };
    let mut columns = vec![
        Column::new(spec.x.clone(), x_ty),
        Column::new(output_y_name(spec), y_ty),
    ];
    if let Some(i) = color_idx {
        columns.push(source[i].clone());
    }

    let data_rows = out
        .into_iter()
        .map(|r| {
            let mut row = vec![r.x.into_scalar(), r.y];
            if let Some(c) = r.color {
                row.push(c);
            }
            row
        })
        .collect();
    DataTable::new(table.name(), columns, data_rows)
        .map_err(|e| ExecError::EvalError(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::load_csv;
    use crate::vegazero::parse;

    fn run(spec: &str, csv: &str) -> Vec<Vec<Scalar>> {
        let table = load_csv(csv.as_bytes(), "t").unwrap();
        execute(&parse(spec).unwrap(), &table).unwrap().rows().to_vec()
    }

    fn n(v: f64) -> Scalar {
        Scalar::Number(v)
    }

    fn s(v: &str) -> Scalar {
        Scalar::Text(v.into())
    }

    const ROWS: &str = "k,v\nA,1\nA,3\nB,2\n";

    #[test]
    fn group_mean() {
        assert_eq!(
            run("mark bar encoding x k y aggregate mean v transform group x", ROWS),
            vec![vec![s("A"), n(2.0)], vec![s("B"), n(2.0)]]
        );
    }

    #[test]
    fn group_count() {
        assert_eq!(
            run("mark bar encoding x k y aggregate count v", ROWS),
            vec![vec![s("A"), n(2.0)], vec![s("B"), n(1.0)]]
        );
    }

    #[test]
    fn nulls_skipped_by_numeric_aggregates_but_counted() {
        let csv = "k,v\nA,\nA,4\nB,\n";
        assert_eq!(
            run("mark bar encoding x k y aggregate sum v", csv),
            vec![vec![s("A"), n(4.0)], vec![s("B"), Scalar::Null]]
        );
        assert_eq!(
            run("mark bar encoding x k y aggregate count v", csv),
            vec![vec![s("A"), n(2.0)], vec![s("B"), n(1.0)]]
        );
    }

    #[test]
    fn filter_sort_topk() {
        let csv = "k,v\nA,5\nB,1\nC,9\nD,7\nE,3\n";
        assert_eq!(
            run(
                "mark bar encoding x k y aggregate sum v transform filter v > 1 and k != 'E' or k = B sort y desc topk 2",
                csv
            ),
            vec![vec![s("C"), n(9.0)], vec![s("D"), n(7.0)]]
        );
    }

    #[test]
    fn ungrouped_rows_keep_input_order() {
        let csv = "a,b\n3,1\n1,2\n2,3\n";
        assert_eq!(
            run("mark point encoding x a y aggregate none b", csv),
            vec![vec![n(3.0), n(1.0)], vec![n(1.0), n(2.0)], vec![n(2.0), n(3.0)]]
        );
    }

    #[test]
    fn sort_is_stable_for_ties() {
        let csv = "k,v\nC,1\nA,1\nB,2\n";
        assert_eq!(
            run("mark bar encoding x k y aggregate sum v transform sort y desc", csv),
            vec![vec![s("B"), n(2.0)], vec![s("A"), n(1.0)], vec![s("C"), n(1.0)]]
        );
    }

    #[test]
    fn bins_order_by_calendar() {
        let csv = "d,v\n2020-03-05,1\n2020-01-10,2\n2021-03-01,4\n";
        assert_eq!(
            run("mark bar encoding x d y aggregate sum v transform bin x by month", csv),
            vec![vec![s("Jan"), n(2.0)], vec![s("Mar"), n(5.0)]]
        );
        assert_eq!(
            run("mark line encoding x d y aggregate count d transform bin x by year", csv),
            vec![vec![s("2020"), n(2.0)], vec![s("2021"), n(1.0)]]
        );
    }

    #[test]
    fn color_extends_group_key() {
        let csv = "k,c,v\nA,x,1\nA,y,2\nA,x,3\n";
        let table = load_csv(csv.as_bytes(), "t").unwrap();
        let out = execute(
            &parse("mark bar encoding x k y aggregate sum v color c").unwrap(),
            &table,
        )
        .unwrap();
        assert_eq!(
            out.rows(),
            &[vec![s("A"), n(4.0), s("x")], vec![s("A"), n(2.0), s("y")]]
        );
        assert_eq!(out.columns()[2].name, "c");
    }

    #[test]
    fn count_on_x_renames_output() {
        let table = load_csv(ROWS.as_bytes(), "t").unwrap();
        let spec = parse("mark bar encoding x k y aggregate count k").unwrap();
        let out = execute(&spec, &table).unwrap();
        assert_eq!(out.columns()[1].name, "count_k");
    }

    #[test]
    fn missing_filter_column_is_eval_error() {
        let table = load_csv(ROWS.as_bytes(), "t").unwrap();
        let spec = parse("mark bar encoding x k y aggregate sum v transform filter z = 1").unwrap();
        assert!(matches!(execute(&spec, &table), Err(ExecError::EvalError(_))));
    }

    #[test]
    fn temporal_filters_compare_dates() {
        let csv = "year,v\n2001,1\n2005,2\n2010,3\n";
        assert_eq!(
            run("mark bar encoding x year y aggregate sum v transform filter year >= 2005", csv),
            vec![
                vec![Scalar::Date(Temporal::Year(2005)), n(2.0)],
                vec![Scalar::Date(Temporal::Year(2010)), n(3.0)]
            ]
        );
    }
}
