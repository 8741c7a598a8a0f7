//! Shared generators, oracles and fixtures for the integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::path::PathBuf;
use std::sync::Arc;

use proptest::prelude::*;
use vizlm::corpus::{import_corpus, mini_corpus_index};
use vizlm::dataset::{Column, ColumnType, DataTable, Scalar, Temporal};
use vizlm::enrichment::{CorpusTriple, Narrative};
use vizlm::response::Recommendation;
use vizlm::study::{StudyResponse, StudySample};
use vizlm::vegazero::*;
use vizlm::dataset::sketch;

// -- random specs for the round trip

const KEYWORDS: &[&str] = &[
    "mark", "data", "encoding", "x", "y", "aggregate", "color", "transform", "filter", "group", "bin", "by",
    "sort", "topk", "and", "or", "asc", "desc", "bar", "line", "point", "arc", "none", "count", "mean", "sum",
    "min", "max", "year", "month", "weekday",
];

pub fn ident() -> impl Strategy<Value = String> {
    "[a-zA-Z_][a-zA-Z0-9_.]{0,10}".prop_filter("keyword", |s| !KEYWORDS.iter().any(|k| s.eq_ignore_ascii_case(k)))
}

fn literal() -> impl Strategy<Value = Literal> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |v| v.is_finite()).prop_map(Literal::Number),
        (-1000i32..1000).prop_map(|v| Literal::Number(v as f64)),
        "\\PC{0,12}".prop_map(Literal::Text),
        "[a-z]{1,6}".prop_map(Literal::Text),
    ]
}

fn comparison() -> impl Strategy<Value = Comparison> {
    (ident(), prop::sample::select(CompareOp::ALL), literal()).prop_map(|(column, op, value)| Comparison { column, op, value })
}

fn predicate() -> impl Strategy<Value = Predicate> {
    prop::collection::vec(prop::collection::vec(comparison(), 1..4), 1..4).prop_map(|any_of| Predicate { any_of })
}

pub fn any_spec() -> impl Strategy<Value = VegaZeroSpec> {
    let head = (
        prop::sample::select(Mark::ALL),
        prop::option::of(ident()),
        ident(),
        ident(),
        prop::sample::select(Aggregate::ALL),
        prop::option::of(ident()),
    );
    let tail = (
        prop::option::of(predicate()),
        any::<bool>(),
        prop::option::of(prop::sample::select(TimeUnit::ALL)),
        prop::option::of((prop::sample::select(Axis::ALL), prop::sample::select(SortDirection::ALL))),
        prop::option::of(1u32..1000),
    );
    (head, tail).prop_map(|((mark, data, x, y, agg, color), (filter, group, bin, sort, topk))| {
        let mut s = VegaZeroSpec::new(mark, x, y, agg);
        s.data = data;
        s.color = color;
        s.filter = filter;
        s.group = group.then_some(Axis::X);
        s.bin = bin.map(|unit| Bin { axis: Axis::X, unit });
        s.sort = sort.map(|(axis, direction)| Sort { axis, direction });
        s.topk = topk;
        s
    })
}

// -- random (spec, table) pairs for the executor

const KEYS: &[&str] = &["A", "B", "C", "D"];
const DATES: &[&str] = &["2020-01-15", "2020-03-02", "2021-01-09", "2021-07-30", "2022-03-18", "2019-12-31"];

fn cell_k() -> impl Strategy<Value = Scalar> {
    prop_oneof![
        9 => prop::sample::select(KEYS).prop_map(|s| Scalar::Text(s.to_string())),
        1 => Just(Scalar::Null),
    ]
}

fn cell_v() -> impl Strategy<Value = Scalar> {
    prop_oneof![
        6 => (-50i32..50).prop_map(|v| Scalar::Number(v as f64)),
        3 => (-1e3f64..1e3).prop_map(Scalar::Number),
        1 => Just(Scalar::Null),
    ]
}

fn cell_d() -> impl Strategy<Value = Scalar> {
    prop_oneof![
        9 => prop::sample::select(DATES).prop_map(|s| Scalar::Date(Temporal::parse_iso(s).unwrap())),
        1 => Just(Scalar::Null),
    ]
}

/// Columns: k, c nominal; v, w quantitative; d temporal.
pub fn small_table() -> impl Strategy<Value = DataTable> {
    prop::collection::vec((cell_k(), cell_k(), cell_v(), cell_v(), cell_d()), 0..=20).prop_map(|rows| {
        let columns = vec![
            Column::new("k", ColumnType::Nominal),
            Column::new("c", ColumnType::Nominal),
            Column::new("v", ColumnType::Quantitative),
            Column::new("w", ColumnType::Quantitative),
            Column::new("d", ColumnType::Temporal),
        ];
        let rows = rows.into_iter().map(|(k, c, v, w, d)| vec![k, c, v, w, d]).collect();
        DataTable::new("t", columns, rows).unwrap()
    })
}

fn table_comparison() -> impl Strategy<Value = Comparison> {
    let ops = prop::sample::select(CompareOp::ALL);
    prop_oneof![
        (Just("k"), ops.clone(), prop::sample::select(KEYS).prop_map(|s| Literal::Text(s.into()))),
        (Just("c"), ops.clone(), prop::sample::select(KEYS).prop_map(|s| Literal::Text(s.into()))),
        (Just("v"), ops.clone(), (-50i32..50).prop_map(|v| Literal::Number(v as f64))),
        (Just("w"), ops.clone(), (-50i32..50).prop_map(|v| Literal::Number(v as f64))),
        (Just("d"), ops, prop::sample::select(DATES).prop_map(|s| Literal::Text(s.into()))),
    ]
    .prop_map(|(column, op, value)| Comparison { column: column.into(), op, value })
}

pub fn table_spec() -> impl Strategy<Value = VegaZeroSpec> {
    let head = (
        prop::sample::select(Mark::ALL),
        prop::sample::select(&["k", "v", "d", "c"][..]),
        prop::sample::select(&["v", "w", "k", "d"][..]),
        prop::sample::select(Aggregate::ALL),
        prop::option::of(prop::sample::select(&["c", "k"][..])),
    );
    let tail = (
        prop::option::of(prop::collection::vec(prop::collection::vec(table_comparison(), 1..3), 1..3)),
        any::<bool>(),
        prop::option::of(prop::sample::select(TimeUnit::ALL)),
        prop::option::of((prop::sample::select(Axis::ALL), prop::sample::select(SortDirection::ALL))),
        prop::option::of(1u32..8),
    );
    (head, tail).prop_map(|((mark, x, y, agg, color), (filter, group, bin, sort, topk))| {
        let mut s = VegaZeroSpec::new(mark, x, y, agg);
        s.color = color.filter(|c| *c != x).map(String::from);
        s.filter = filter.map(|any_of| Predicate { any_of });
        s.group = group.then_some(Axis::X);
        if x == "d" {
            s.bin = bin.map(|unit| Bin { axis: Axis::X, unit });
        }
        s.sort = sort.map(|(axis, direction)| Sort { axis, direction });
        s.topk = topk;
        s
    })
}

// -- brute-force executor oracle

fn oracle_cmp(cell: &Scalar, lit: &Literal) -> Option<Ordering> {
    match (cell, lit) {
        (Scalar::Number(v), Literal::Number(l)) => v.partial_cmp(l),
        (Scalar::Text(s), Literal::Text(l)) => Some(s.as_str().cmp(l.as_str())),
        (Scalar::Text(s), Literal::Number(l)) => Some(s.as_str().cmp(l.to_string().as_str())),
        (Scalar::Date(d), Literal::Text(l)) => Some(d.to_datetime().cmp(&Temporal::parse_loose(l)?.to_datetime())),
        _ => None,
    }
}

fn oracle_holds(op: CompareOp, ord: Ordering) -> bool {
    match op {
        CompareOp::Eq => ord.is_eq(),
        CompareOp::Ne => ord.is_ne(),
        CompareOp::Lt => ord.is_lt(),
        CompareOp::Le => ord.is_le(),
        CompareOp::Gt => ord.is_gt(),
        CompareOp::Ge => ord.is_ge(),
    }
}

/// Group key: plain value, or (calendar index, label) for a binned date.
#[derive(Debug, Clone, PartialEq)]
enum OKey {
    Value(Scalar),
    Bin(i64, String),
}

fn okey_cmp(a: &OKey, b: &OKey) -> Ordering {
    match (a, b) {
        (OKey::Value(x), OKey::Value(y)) => x.total_cmp(y),
        (OKey::Bin(x, _), OKey::Bin(y, _)) => x.cmp(y),
        (OKey::Value(_), OKey::Bin(..)) => Ordering::Less,
        (OKey::Bin(..), OKey::Value(_)) => Ordering::Greater,
    }
}

fn okey_scalar(k: OKey) -> Scalar {
    match k {
        OKey::Value(v) => v,
        OKey::Bin(_, l) => Scalar::Text(l),
    }
}

fn oracle_agg(values: &[Scalar], agg: Aggregate) -> Scalar {
    let nums: Vec<f64> = values.iter().filter_map(|v| v.as_f64()).collect();
    let non_null: Vec<&Scalar> = values.iter().filter(|v| !v.is_null()).collect();
    match agg {
        Aggregate::Count => Scalar::Number(values.len() as f64),
        Aggregate::Sum if nums.is_empty() => Scalar::Null,
        Aggregate::Sum => Scalar::Number(nums.iter().sum()),
        Aggregate::Mean if nums.is_empty() => Scalar::Null,
        Aggregate::Mean => Scalar::Number(nums.iter().sum::<f64>() / nums.len() as f64),
        Aggregate::Min => non_null
            .iter()
            .copied()
            .reduce(|a, b| if b.total_cmp(a).is_lt() { b } else { a })
            .cloned()
            .unwrap_or(Scalar::Null),
        Aggregate::Max => non_null
            .iter()
            .copied()
            .reduce(|a, b| if b.total_cmp(a).is_gt() { b } else { a })
            .cloned()
            .unwrap_or(Scalar::Null),
        Aggregate::None => values.first().cloned().unwrap_or(Scalar::Null),
    }
}

/// Naive reference execution: the same order of operations, written as
/// plainly as possible. Rows are (x, y, color?).
pub fn oracle(spec: &VegaZeroSpec, table: &DataTable) -> Vec<Vec<Scalar>> {
    let idx = |n: &str| table.column_index(n).unwrap();
    let (xi, yi) = (idx(&spec.x), idx(&spec.y.column));
    let ci = spec.color.as_deref().map(idx);
    let kept: Vec<&Vec<Scalar>> = table
        .rows()
        .iter()
        .filter(|row| match &spec.filter {
            None => true,
            Some(p) => p.any_of.iter().any(|conj| {
                conj.iter().all(|c| {
                    oracle_cmp(&row[idx(&c.column)], &c.value).is_some_and(|o| oracle_holds(c.op, o))
                })
            }),
        })
        .collect();
    let key = |row: &Vec<Scalar>| match (&spec.bin, &row[xi]) {
        (Some(b), Scalar::Date(d)) => {
            let dt = d.to_datetime();
            use chrono::Datelike;
            match b.unit {
                TimeUnit::Year => OKey::Bin(dt.year() as i64, dt.year().to_string()),
                TimeUnit::Month => OKey::Bin(dt.month0() as i64, dt.format("%b").to_string()),
                TimeUnit::Weekday => OKey::Bin(
                    dt.weekday().num_days_from_monday() as i64,
                    dt.format("%a").to_string(),
                ),
            }
        }
        (_, v) => OKey::Value(v.clone()),
    };
    let mut out: Vec<(OKey, Scalar, Option<Scalar>)> = if spec.is_grouped() {
        let mut keys: Vec<(OKey, Option<Scalar>)> = Vec::new();
        for row in &kept {
            let k = (key(row), ci.map(|i| row[i].clone()));
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.sort_by(|a, b| {
            okey_cmp(&a.0, &b.0).then_with(|| match (&a.1, &b.1) {
                (Some(x), Some(y)) => x.total_cmp(y),
                _ => Ordering::Equal,
            })
        });
        keys.into_iter()
            .map(|(k, c)| {
                let members: Vec<Scalar> = kept
                    .iter()
                    .filter(|row| key(row) == k && ci.map(|i| row[i].clone()) == c)
                    .map(|row| row[yi].clone())
                    .collect();
                (k, oracle_agg(&members, spec.y.aggregate), c)
            })
            .collect()
    } else {
        kept.iter().map(|row| (key(row), row[yi].clone(), ci.map(|i| row[i].clone()))).collect()
    };
    if let Some(s) = spec.sort {
        out.sort_by(|a, b| {
            let o = match s.axis {
                Axis::X => okey_cmp(&a.0, &b.0),
                Axis::Y => a.1.total_cmp(&b.1),
            };
            if s.direction == SortDirection::Desc { o.reverse() } else { o }
        });
    }
    if let Some(k) = spec.topk {
        out.truncate(k as usize);
    }
    out.into_iter()
        .map(|(k, y, c)| {
            let mut row = vec![okey_scalar(k), y];
            row.extend(c);
            row
        })
        .collect()
}

/// Exact for everything except sums and means, which get a relative
/// tolerance of 1e-9.
pub fn rows_match(actual: &[Vec<Scalar>], expected: &[Vec<Scalar>], agg: Aggregate) -> bool {
    let loose = matches!(agg, Aggregate::Sum | Aggregate::Mean);
    actual.len() == expected.len()
        && actual.iter().zip(expected).all(|(a, e)| {
            a.len() == e.len()
                && a.iter().zip(e).enumerate().all(|(i, (x, y))| match (x, y) {
                    (Scalar::Number(p), Scalar::Number(q)) if i == 1 && loose => {
                        (p - q).abs() <= 1e-9 * p.abs().max(q.abs()).max(1.0)
                    }
                    _ => x == y,
                })
        })
}

// -- fixtures

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn mini_corpus() -> Vec<CorpusTriple> {
    let imported = import_corpus(&mini_corpus_index()).unwrap();
    assert!(imported.quarantined.is_empty());
    imported.triples
}

/// A completion in the five-section response format.
pub fn response_text(vegazero: &str, about: &str) -> String {
    format!(
        "[VEGAZERO]\n{vegazero}\n[EXPLANATION-1]\nThe user asks about {about}.\n[EXPLANATION-2]\n\
The chosen columns answer it directly.\n[CAPTION]\nA chart of {about}.\n[SUGGESTIONS]\n\
1) What changes over time?\n2) Which group is largest?\n3) Which group is smallest?\n"
    )
}

pub const FIG5_QUERY: &str = "Which product lines generate the most revenue?";

pub fn fig5_response() -> String {
    "### Reasoning\nStep 1. Information need: total revenue per product line.\n\
### Response\n[VEGAZERO]\nmark bar encoding x product_line y aggregate sum revenue transform group x sort y desc\n\
[EXPLANATION-1]\nThe user wants to know which product lines bring in the most money.\n\
[EXPLANATION-2]\nproduct_line labels each bar; revenue is summed per line and sorted from highest to lowest.\n\
[CAPTION]\nTotal revenue per product line, highest first.\n\
[SUGGESTIONS]\n1) Which region buys the most Classic Cars?\n2) How does revenue change by month?\n3) Which product line sells the most units?\n"
        .to_string()
}

fn recommendation(triple: &CorpusTriple, vegazero: &str) -> Recommendation {
    let spec = parse(vegazero).unwrap();
    Recommendation {
        doc: compile(&spec, &triple.table).ok(),
        spec,
        narrative: Narrative {
            e1: format!("The user asks: {}", triple.query),
            e2: "Columns follow the question.".into(),
            caption: format!("A chart for {}.", triple.id),
            suggestions: vec!["What else?".into(), "Why?".into(), "How many?".into()],
        },
        raw_text: response_text(vegazero, &triple.query),
        lenient: false,
    }
}

/// Study pool from the mini-corpus: side one answers with the ground truth,
/// side two with a bar version of it.
pub fn study_pool(n: usize, tags: [&str; 2]) -> Vec<StudySample> {
    let triples: Vec<Arc<CorpusTriple>> = mini_corpus().into_iter().map(Arc::new).collect();
    (0..n)
        .map(|i| {
            let t = &triples[i % triples.len()];
            let truth = render(&t.spec);
            let mut alt = t.spec.clone();
            alt.mark = if alt.mark == Mark::Bar { Mark::Line } else { Mark::Bar };
            StudySample {
                id: format!("{}-{i:03}", t.id),
                sketch: sketch(&t.table),
                query: t.query.clone(),
                responses: [
                    StudyResponse {
                        model_tag: tags[0].into(),
                        recommendation: recommendation(t, &truth),
                    },
                    StudyResponse {
                        model_tag: tags[1].into(),
                        recommendation: recommendation(t, &render(&alt)),
                    },
                ],
                assignment_count: 0,
            }
        })
        .collect()
}

// -- golden chart documents

pub const GOLDEN_IDS: [&str; 5] = ["mc001", "mc013", "mc014", "mc021", "mc038"];

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// Compares each reference doc byte for byte with its golden file. With
/// `UPDATE_GOLDEN=1` the files are rewritten instead.
pub fn check_goldens() -> Result<(), String> {
    let triples = mini_corpus();
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for id in GOLDEN_IDS {
        let t = triples.iter().find(|t| t.id == id).ok_or(format!("{id} missing"))?;
        let doc = compile(&t.spec, &t.table).map_err(|e| format!("{id}: {e}"))?;
        let text = doc.to_pretty_json() + "\n";
        let path = golden_dir().join(format!("{id}.vl.json"));
        if update {
            std::fs::create_dir_all(golden_dir()).unwrap();
            std::fs::write(&path, &text).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        if want != text {
            return Err(format!("{id}: output differs from {}", path.display()));
        }
    }
    Ok(())
}
