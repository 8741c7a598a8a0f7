use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

macro_rules! keyword_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $kw:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $kw),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ();

            fn from_str(s: &str) -> Result<Self, ()> {
                $(if s.eq_ignore_ascii_case($kw) {
                    return Ok($name::$variant);
                })+
                Err(())
            }
        }
    };
}

keyword_enum!(
    /// Geometric primitive of the chart.
    Mark { Bar => "bar", Line => "line", Point => "point", Arc => "arc" }
);

keyword_enum!(Aggregate {
    None => "none",
    Count => "count",
    Mean => "mean",
    Sum => "sum",
    Min => "min",
    Max => "max",
});

keyword_enum!(Axis { X => "x", Y => "y" });

keyword_enum!(TimeUnit { Year => "year", Month => "month", Weekday => "weekday" });

keyword_enum!(SortDirection { Asc => "asc", Desc => "desc" });

keyword_enum!(CompareOp {
    Eq => "=",
    Ne => "!=",
    Lt => "<",
    Le => "<=",
    Gt => ">",
    Ge => ">=",
});

impl Aggregate {
    /// Aggregates that only make sense over quantitative values.
    pub fn is_numeric(self) -> bool {
        matches!(
            self,
            Aggregate::Mean | Aggregate::Sum | Aggregate::Min | Aggregate::Max
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Number(f64),
    Text(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(v) => write!(f, "{v}"),
            Literal::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub column: String,
    pub op: CompareOp,
    pub value: Literal,
}

/// Filter predicate in disjunctive normal form: `and` binds tighter than
/// `or`, so the outer list holds `or`-ed groups of `and`-ed comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub any_of: Vec<Vec<Comparison>>,
}

impl Predicate {
    pub fn single(c: Comparison) -> Self {
        Predicate {
            any_of: vec![vec![c]],
        }
    }

    pub fn comparisons(&self) -> impl Iterator<Item = &Comparison> {
        self.any_of.iter().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YEncoding {
    pub column: String,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bin {
    pub axis: Axis,
    pub unit: TimeUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sort {
    pub axis: Axis,
    pub direction: SortDirection,
}

/// A parsed VegaZero specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VegaZeroSpec {
    pub mark: Mark,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    pub x: String,
    pub y: YEncoding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<Predicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<Axis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin: Option<Bin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sort: Option<Sort>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topk: Option<u32>,
}

impl VegaZeroSpec {
    pub fn new(mark: Mark, x: impl Into<String>, y: impl Into<String>, aggregate: Aggregate) -> Self {
        VegaZeroSpec {
            mark,
            data: None,
            x: x.into(),
            y: YEncoding {
                column: y.into(),
                aggregate,
            },
            color: None,
            filter: None,
            group: None,
            bin: None,
            sort: None,
            topk: None,
        }
    }

    pub fn has_transform(&self) -> bool {
        self.filter.is_some()
            || self.group.is_some()
            || self.bin.is_some()
            || self.sort.is_some()
            || self.topk.is_some()
    }

    /// Whether execution collapses rows into groups keyed by x.
    pub fn is_grouped(&self) -> bool {
        self.y.aggregate != Aggregate::None || self.group.is_some() || self.bin.is_some()
    }

    /// Every data column the spec references, in first-mention order.
    pub fn referenced_columns(&self) -> Vec<&str> {
        let mut out: Vec<&str> = vec![self.x.as_str()];
        let rest = std::iter::once(self.y.column.as_str())
            .chain(self.color.as_deref())
            .chain(
                self.filter
                    .iter()
                    .flat_map(|p| p.comparisons().map(|c| c.column.as_str())),
            );
        for c in rest {
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }
}
