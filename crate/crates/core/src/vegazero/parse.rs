//! Keyword grammar for VegaZero:
//!
//! ```text
//! spec      := "mark" MARK ["data" NAME] "encoding" "x" COL "y" "aggregate" AGG COL
//!              ["color" COL] ["transform" clause+]
//! clause    := ["filter" pred] ["group" "x"] ["bin" "x" "by" UNIT]
//!              ["sort" AXIS DIR] ["topk" INT]        (in this order, each at most once)
//! pred      := conj ("or" conj)*
//! conj      := cmp ("and" cmp)*
//! cmp       := COL OP LITERAL
//! ```
//!
//! Keywords are case-insensitive; column and table names are verbatim.
//! Literals are numbers, bare words, or quoted strings (`"..."` with `\"`
//! and `\\` escapes, or `'...'` without escapes).

use std::str::FromStr;

use thiserror::Error;

use super::ast::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at {position}: expected {expected}")]
pub struct SyntaxError {
    /// Byte offset of the offending token (input length at end of input).
    pub position: usize,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Word(String),
    Quoted(String),
    Op(CompareOp),
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    kind: TokenKind,
    pos: usize,
}

fn is_op_char(c: char) -> bool {
    matches!(c, '=' | '<' | '>' | '!')
}

fn lex(text: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c == '"' || c == '\'' {
            chars.next();
            let mut value = String::new();
            let mut closed = false;
            while let Some((_, ch)) = chars.next() {
                if ch == c {
                    closed = true;
                    break;
                }
                if ch == '\\' && c == '"' {
                    match chars.next() {
                        Some((_, esc)) => value.push(esc),
                        None => break,
                    }
                    continue;
                }
                value.push(ch);
            }
            if !closed {
                return Err(SyntaxError {
                    position: pos,
                    expected: "closing quote".into(),
                });
            }
            tokens.push(Token {
                kind: TokenKind::Quoted(value),
                pos,
            });
            continue;
        }
        if is_op_char(c) {
            let mut op = String::new();
            while let Some(&(_, ch)) = chars.peek() {
                if !is_op_char(ch) {
                    break;
                }
                op.push(ch);
                chars.next();
            }
            let parsed = CompareOp::from_str(&op).map_err(|_| SyntaxError {
                position: pos,
                expected: "comparison operator (=, !=, <, <=, >, >=)".into(),
            })?;
            tokens.push(Token {
                kind: TokenKind::Op(parsed),
                pos,
            });
            continue;
        }
        let mut word = String::new();
        while let Some(&(_, ch)) = chars.peek() {
            if ch.is_whitespace() || is_op_char(ch) || ch == '"' || ch == '\'' {
                break;
            }
            word.push(ch);
            chars.next();
        }
        tokens.push(Token {
            kind: TokenKind::Word(word),
            pos,
        });
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    idx: usize,
    len: usize,
}

impl Parser {
    fn position(&self) -> usize {
        self.tokens.get(self.idx).map_or(self.len, |t| t.pos)
    }

    fn error<T>(&self, expected: &str) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            position: self.position(),
            expected: expected.to_string(),
        })
    }

    fn peek_word(&self) -> Option<&str> {
        match self.tokens.get(self.idx) {
            Some(Token {
                kind: TokenKind::Word(w),
                ..
            }) => Some(w.as_str()),
            _ => None,
        }
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        self.peek_word().is_some_and(|w| w.eq_ignore_ascii_case(kw))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.peek_keyword(kw) {
            self.idx += 1;
            Ok(())
        } else {
            self.error(&format!("keyword `{kw}`"))
        }
    }

    fn name(&mut self, what: &str) -> Result<String, SyntaxError> {
        match self.peek_word() {
            Some(w) => {
                let w = w.to_string();
                self.idx += 1;
                Ok(w)
            }
            None => self.error(what),
        }
    }

    fn enum_word<T: FromStr>(&mut self, what: &str) -> Result<T, SyntaxError> {
        match self.peek_word().map(T::from_str) {
            Some(Ok(v)) => {
                self.idx += 1;
                Ok(v)
            }
            _ => self.error(what),
        }
    }

    fn literal(&mut self) -> Result<Literal, SyntaxError> {
        let lit = match self.tokens.get(self.idx).map(|t| &t.kind) {
            Some(TokenKind::Quoted(s)) => Literal::Text(s.clone()),
            Some(TokenKind::Word(w)) => match parse_number_literal(w) {
                Some(v) => Literal::Number(v),
                None => Literal::Text(w.clone()),
            },
            _ => return self.error("literal value"),
        };
        self.idx += 1;
        Ok(lit)
    }

    fn comparison(&mut self) -> Result<Comparison, SyntaxError> {
        let column = self.name("filter column")?;
        let op = match self.tokens.get(self.idx).map(|t| &t.kind) {
            Some(TokenKind::Op(op)) => *op,
            _ => return self.error("comparison operator (=, !=, <, <=, >, >=)"),
        };
        self.idx += 1;
        let value = self.literal()?;
        Ok(Comparison { column, op, value })
    }

    fn predicate(&mut self) -> Result<Predicate, SyntaxError> {
        let mut any_of = Vec::new();
        loop {
            let mut all_of = vec![self.comparison()?];
            while self.peek_keyword("and") {
                self.idx += 1;
                all_of.push(self.comparison()?);
            }
            any_of.push(all_of);
            if self.peek_keyword("or") {
                self.idx += 1;
            } else {
                break;
            }
        }
        Ok(Predicate { any_of })
    }

    fn at_end(&self) -> bool {
        self.idx >= self.tokens.len()
    }

    fn spec(&mut self) -> Result<VegaZeroSpec, SyntaxError> {
        self.keyword("mark")?;
        let mark: Mark = self.enum_word("mark type (bar, line, point, arc)")?;
        let data = if self.peek_keyword("data") {
            self.idx += 1;
            Some(self.name("data table name")?)
        } else {
            None
        };
        self.keyword("encoding")?;
        self.keyword("x")?;
        let x = self.name("x column")?;
        self.keyword("y")?;
        self.keyword("aggregate")?;
        let aggregate: Aggregate =
            self.enum_word("aggregate (none, count, mean, sum, min, max)")?;
        let y_col = self.name("y column")?;
        let mut spec = VegaZeroSpec::new(mark, x, y_col, aggregate);
        spec.data = data;

        if self.peek_keyword("color") {
            self.idx += 1;
            spec.color = Some(self.name("color column")?);
        }
        if self.peek_keyword("transform") {
            self.idx += 1;
            self.transform(&mut spec)?;
        }
        if !self.at_end() {
            return self.error(if spec.has_transform() {
                "end of input"
            } else {
                "`color`, `transform` or end of input"
            });
        }
        Ok(spec)
    }

    fn transform(&mut self, spec: &mut VegaZeroSpec) -> Result<(), SyntaxError> {
        let start = self.idx;
        if self.peek_keyword("filter") {
            self.idx += 1;
            spec.filter = Some(self.predicate()?);
        }
        if self.peek_keyword("group") {
            self.idx += 1;
            self.keyword("x")?;
            spec.group = Some(Axis::X);
        }
        if self.peek_keyword("bin") {
            self.idx += 1;
            self.keyword("x")?;
            self.keyword("by")?;
            let unit: TimeUnit = self.enum_word("bin unit (year, month, weekday)")?;
            spec.bin = Some(Bin {
                axis: Axis::X,
                unit,
            });
        }
        if self.peek_keyword("sort") {
            self.idx += 1;
            let axis: Axis = self.enum_word("sort axis (x, y)")?;
            let direction: SortDirection = self.enum_word("sort direction (asc, desc)")?;
            spec.sort = Some(Sort { axis, direction });
        }
        if self.peek_keyword("topk") {
            self.idx += 1;
            let k = match self.peek_word().and_then(|w| w.parse::<u32>().ok()) {
                Some(k) if k > 0 => k,
                _ => return self.error("positive integer for topk"),
            };
            self.idx += 1;
            spec.topk = Some(k);
        }
        if self.idx == start {
            return self.error("transform clause (filter, group, bin, sort, topk)");
        }
        Ok(())
    }
}

fn parse_number_literal(w: &str) -> Option<f64> {
    if !w.bytes().any(|b| b.is_ascii_digit()) {
        return None;
    }
    w.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses VegaZero text into an AST.
pub fn parse(text: &str) -> Result<VegaZeroSpec, SyntaxError> {
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens,
        idx: 0,
        len: text.len(),
    };
    parser.spec()
}

const RESERVED_LITERALS: &[&str] = &["and", "or", "group", "bin", "sort", "topk"];

fn render_literal(lit: &Literal, out: &mut String) {
    match lit {
        Literal::Number(v) => out.push_str(&v.to_string()),
        Literal::Text(s) => {
            let bare = !s.is_empty()
                && parse_number_literal(s).is_none()
                && !RESERVED_LITERALS.iter().any(|k| s.eq_ignore_ascii_case(k))
                && !s
                    .chars()
                    .any(|c| c.is_whitespace() || is_op_char(c) || c == '"' || c == '\'' || c == '\\');
            if bare {
                out.push_str(s);
            } else {
                out.push('"');
                for c in s.chars() {
                    if c == '"' || c == '\\' {
                        out.push('\\');
                    }
                    out.push(c);
                }
                out.push('"');
            }
        }
    }
}

/// Canonical text form: lowercase keywords, single spaces, transform
/// clauses in the fixed order filter, group, bin, sort, topk.
pub fn render(spec: &VegaZeroSpec) -> String {
    let mut out = format!("mark {}", spec.mark);
    if let Some(data) = &spec.data {
        out.push_str(" data ");
        out.push_str(data);
    }
    out.push_str(&format!(
        " encoding x {} y aggregate {} {}",
        spec.x, spec.y.aggregate, spec.y.column
    ));
    if let Some(color) = &spec.color {
        out.push_str(" color ");
        out.push_str(color);
    }
    if spec.has_transform() {
        out.push_str(" transform");
        if let Some(pred) = &spec.filter {
            out.push_str(" filter");
            for (i, group) in pred.any_of.iter().enumerate() {
                if i > 0 {
                    out.push_str(" or");
                }
                for (j, cmp) in group.iter().enumerate() {
                    if j > 0 {
                        out.push_str(" and");
                    }
                    out.push(' ');
                    out.push_str(&cmp.column);
                    out.push(' ');
                    out.push_str(cmp.op.as_str());
                    out.push(' ');
                    render_literal(&cmp.value, &mut out);
                }
            }
        }
        if let Some(axis) = spec.group {
            out.push_str(&format!(" group {axis}"));
        }
        if let Some(bin) = spec.bin {
            out.push_str(&format!(" bin {} by {}", bin.axis, bin.unit));
        }
        if let Some(sort) = spec.sort {
            out.push_str(&format!(" sort {} {}", sort.axis, sort.direction));
        }
        if let Some(k) = spec.topk {
            out.push_str(&format!(" topk {k}"));
        }
    }
    out
}
