use super::{Field, Literal, PointQuery, Predicate, QueryError, DEFAULT_N};
use crate::geo::{BoundingBox, GeoPoint};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Str(String),
    Num { value: f64, text: String },
    Eq,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
}

impl Token {
    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self, Token::Ident(s) if s.eq_ignore_ascii_case(kw))
    }
}

fn syntax(position: usize, expected: impl Into<String>) -> QueryError {
    QueryError::Syntax {
        position,
        expected: expected.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, QueryError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'=' => {
                tokens.push((start, Token::Eq));
                i += 1;
            }
            b'[' => {
                tokens.push((start, Token::LBracket));
                i += 1;
            }
            b']' => {
                tokens.push((start, Token::RBracket));
                i += 1;
            }
            b'(' => {
                tokens.push((start, Token::LParen));
                i += 1;
            }
            b')' => {
                tokens.push((start, Token::RParen));
                i += 1;
            }
            b',' => {
                tokens.push((start, Token::Comma));
                i += 1;
            }
            b'"' => {
                i += 1;
                let mut s = String::new();
                loop {
                    let Some(ch) = text[i..].chars().next() else {
                        return Err(syntax(text.len(), "closing '\"'"));
                    };
                    i += ch.len_utf8();
                    match ch {
                        '"' => break,
                        '\\' => {
                            let Some(esc) = text[i..].chars().next() else {
                                return Err(syntax(text.len(), "escaped character"));
                            };
                            i += esc.len_utf8();
                            s.push(esc);
                        }
                        other => s.push(other),
                    }
                }
                tokens.push((start, Token::Str(s)));
            }
            b'-' | b'+' | b'.' | b'0'..=b'9' => {
                i += 1;
                while i < bytes.len() {
                    let d = bytes[i];
                    let exponent_sign =
                        (d == b'-' || d == b'+') && matches!(bytes[i - 1], b'e' | b'E');
                    if d.is_ascii_digit() || d == b'.' || d == b'e' || d == b'E' || exponent_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let raw = &text[start..i];
                let value: f64 = raw.parse().map_err(|_| syntax(start, "number"))?;
                if !value.is_finite() {
                    return Err(syntax(start, "finite number"));
                }
                tokens.push((
                    start,
                    Token::Num {
                        value,
                        text: raw.to_string(),
                    },
                ));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                tokens.push((start, Token::Ident(text[start..i].to_string())));
            }
            _ => return Err(syntax(start, "identifier, number, string or punctuation")),
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn next(&mut self) -> Option<(usize, Token)> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Token, label: &str) -> Result<(), QueryError> {
        let at = self.offset();
        match self.next() {
            Some((_, t)) if t == want => Ok(()),
            _ => Err(syntax(at, label)),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), QueryError> {
        let at = self.offset();
        match self.next() {
            Some((_, t)) if t.is_keyword(kw) => Ok(()),
            _ => Err(syntax(at, format!("'{kw}'"))),
        }
    }

    fn number(&mut self) -> Result<f64, QueryError> {
        let at = self.offset();
        match self.next() {
            Some((_, Token::Num { value, .. })) => Ok(value),
            _ => Err(syntax(at, "number")),
        }
    }

    fn literal(&mut self, field: &Field) -> Result<Literal, QueryError> {
        let at = self.offset();
        match (self.next(), field.is_meta()) {
            (Some((_, Token::Str(s))), true) => Ok(Literal::Str(s)),
            (Some((_, Token::Num { value, .. })), false) => Ok(Literal::Num(value)),
            (_, true) => Err(syntax(at, "string literal")),
            (_, false) => Err(syntax(at, "number")),
        }
    }

    fn numbers<const K: usize>(&mut self) -> Result<[f64; K], QueryError> {
        self.expect(Token::LParen, "'('")?;
        let mut out = [0.0; K];
        for (i, slot) in out.iter_mut().enumerate() {
            if i > 0 {
                self.expect(Token::Comma, "','")?;
            }
            *slot = self.number()?;
        }
        self.expect(Token::RParen, "')'")?;
        Ok(out)
    }

    fn within(&mut self) -> Result<Predicate, QueryError> {
        let at = self.offset();
        match self.next() {
            Some((_, t)) if t.is_keyword("radius") => {
                let args_at = self.offset();
                let [lat, lon, radius_m] = self.numbers::<3>()?;
                let center = GeoPoint::new(lat, lon);
                if !center.is_valid() {
                    return Err(syntax(args_at, "latitude in [-90, 90] and longitude in [-180, 180]"));
                }
                if radius_m <= 0.0 {
                    return Err(syntax(args_at, "radius > 0"));
                }
                Ok(Predicate::WithinRadius { center, radius_m })
            }
            Some((_, t)) if t.is_keyword("bbox") => {
                let args_at = self.offset();
                let [s, w, n, e] = self.numbers::<4>()?;
                let b = BoundingBox::new(s, w, n, e);
                if !b.is_valid() {
                    return Err(syntax(args_at, "bbox(south, west, north, east) with south <= north"));
                }
                Ok(Predicate::WithinBBox(b))
            }
            _ => Err(syntax(at, "'radius' or 'bbox'")),
        }
    }

    /// Returns `Ok(None)` for an `n = <int>` clause after storing it in `n`.
    fn clause(&mut self, n: &mut Option<usize>) -> Result<Option<Predicate>, QueryError> {
        let at = self.offset();
        let name = match self.next() {
            Some((_, Token::Ident(name))) => name,
            _ => return Err(syntax(at, "clause")),
        };
        if name.eq_ignore_ascii_case("within") {
            return self.within().map(Some);
        }
        if name == "n" {
            self.expect(Token::Eq, "'='")?;
            let num_at = self.offset();
            let count = match self.next() {
                Some((_, Token::Num { text, .. })) => text.parse::<usize>().ok().filter(|&c| c >= 1),
                _ => None,
            }
            .ok_or_else(|| syntax(num_at, "positive integer"))?;
            if n.replace(count).is_some() {
                return Err(syntax(at, "at most one 'n' clause"));
            }
            return Ok(None);
        }

        let field = Field::from_name(&name);
        let op_at = self.offset();
        match self.next() {
            Some((_, Token::Eq)) => {
                let value = self.literal(&field)?;
                Ok(Some(Predicate::Eq { field, value }))
            }
            Some((_, t)) if t.is_keyword("in") => {
                self.expect(Token::LBracket, "'['")?;
                let mut values = vec![self.literal(&field)?];
                while self.peek() == Some(&Token::Comma) {
                    self.next();
                    values.push(self.literal(&field)?);
                }
                self.expect(Token::RBracket, "']'")?;
                Ok(Some(Predicate::InSet { field, values }))
            }
            Some((_, t)) if t.is_keyword("between") => {
                if field.is_meta() {
                    return Err(syntax(op_at, "'=' or 'in' after a meta field"));
                }
                let bound_at = self.offset();
                let min = self.number()?;
                self.expect_keyword("and")?;
                let max = self.number()?;
                if min > max {
                    return Err(syntax(bound_at, "lower bound <= upper bound"));
                }
                Ok(Some(Predicate::Range {
                    property: name,
                    min,
                    max,
                }))
            }
            _ => Err(syntax(op_at, "'=', 'in' or 'between'")),
        }
    }
}

/// Parses the point-query grammar: `clause ("AND" clause)*`, or the empty
/// string for a match-all query. Keywords are case-insensitive; property
/// names are not. Property names are checked against a schema later, when
/// the query is compiled.
pub fn parse_query(text: &str) -> Result<PointQuery, QueryError> {
    let mut parser = Parser {
        tokens: tokenize(text)?,
        pos: 0,
        end: text.len(),
    };
    let mut predicates = Vec::new();
    let mut n = None;
    if parser.peek().is_some() {
        loop {
            if let Some(p) = parser.clause(&mut n)? {
                predicates.push(p);
            }
            match parser.peek() {
                None => break,
                Some(t) if t.is_keyword("and") => {
                    parser.next();
                }
                Some(_) => return Err(syntax(parser.offset(), "'AND' or end of query")),
            }
        }
    }
    Ok(PointQuery {
        predicates,
        n: n.unwrap_or(DEFAULT_N),
    })
}
