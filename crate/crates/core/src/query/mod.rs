//! Point-based (hard) requirements: a small conjunctive predicate language and
//! its evaluation over a snapshot.
//!
//! ```text
//! type = "temperature" AND accuracy between 0.8 and 1.0
//!     AND within radius(-35.28, 149.13, 20000) AND n = 1000
//! ```

mod filter;
mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{BoundingBox, GeoPoint};

pub use filter::{evaluate_filter, CompiledQuery};
pub use parser::parse_query;

/// Number of sensors requested when a query has no `n = ...` clause.
pub const DEFAULT_N: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("syntax error at byte {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("unknown property {0:?}")]
    UnknownProperty(String),
}

/// Left-hand side of an equality or set predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Id,
    Type,
    Property(String),
}

impl Field {
    pub(crate) fn from_name(name: &str) -> Self {
        match name {
            "id" => Field::Id,
            "type" => Field::Type,
            other => Field::Property(other.to_string()),
        }
    }

    pub fn is_meta(&self) -> bool {
        !matches!(self, Field::Property(_))
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Id => f.write_str("id"),
            Field::Type => f.write_str("type"),
            Field::Property(p) => f.write_str(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Num(f64),
    Str(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Num(v) => write!(f, "{v}"),
            Literal::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    if c == '"' || c == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str("\"")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    Eq { field: Field, value: Literal },
    InSet { field: Field, values: Vec<Literal> },
    /// Inclusive on both ends.
    Range { property: String, min: f64, max: f64 },
    /// Great-circle distance from `center` at most `radius_m` meters.
    WithinRadius { center: GeoPoint, radius_m: f64 },
    WithinBBox(BoundingBox),
}

impl Predicate {
    /// Schema property this predicate reads, if any.
    pub fn property(&self) -> Option<&str> {
        match self {
            Predicate::Eq { field: Field::Property(p), .. }
            | Predicate::InSet { field: Field::Property(p), .. }
            | Predicate::Range { property: p, .. } => Some(p),
            _ => None,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Eq { field, value } => write!(f, "{field} = {value}"),
            Predicate::InSet { field, values } => {
                write!(f, "{field} in [")?;
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            Predicate::Range { property, min, max } => {
                write!(f, "{property} between {min} and {max}")
            }
            Predicate::WithinRadius { center, radius_m } => {
                write!(f, "within radius({}, {}, {radius_m})", center.lat, center.lon)
            }
            Predicate::WithinBBox(b) => {
                write!(f, "within bbox({}, {}, {}, {})", b.south, b.west, b.north, b.east)
            }
        }
    }
}

/// Conjunction of predicates plus the number of sensors required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointQuery {
    pub predicates: Vec<Predicate>,
    pub n: usize,
}

impl Default for PointQuery {
    fn default() -> Self {
        Self {
            predicates: Vec::new(),
            n: DEFAULT_N,
        }
    }
}

impl PointQuery {
    pub fn match_all(n: usize) -> Self {
        Self {
            predicates: Vec::new(),
            n,
        }
    }

    pub fn with(mut self, predicate: Predicate) -> Self {
        self.predicates.push(predicate);
        self
    }
}

impl std::str::FromStr for PointQuery {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_query(s)
    }
}

/// Renders the query back into the text grammar; `parse_query` accepts the output.
impl fmt::Display for PointQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.predicates {
            write!(f, "{p} AND ")?;
        }
        write!(f, "n = {}", self.n)
    }
}
