use std::collections::HashSet;

use super::{Field, Literal, PointQuery, Predicate, QueryError};
use crate::geo::{BoundingBox, GeoPoint};
use crate::registry::{PropertySchema, RegistrySnapshot, SensorRecord};

#[derive(Debug, Clone)]
enum Compiled {
    IdIn(HashSet<String>),
    TypeIn(HashSet<String>),
    PropIn(usize, Vec<f64>),
    Range(usize, f64, f64),
    Radius(GeoPoint, f64),
    BBox(BoundingBox),
}

impl Compiled {
    #[inline]
    fn matches(&self, s: &SensorRecord) -> bool {
        match self {
            Compiled::IdIn(ids) => ids.contains(&s.id),
            Compiled::TypeIn(types) => types.contains(&s.sensor_type),
            Compiled::PropIn(idx, values) => s.value(*idx).is_some_and(|v| values.contains(&v)),
            Compiled::Range(idx, lo, hi) => s.value(*idx).is_some_and(|v| *lo <= v && v <= *hi),
            Compiled::Radius(center, r) => center.distance_m(&s.location) <= *r,
            Compiled::BBox(b) => b.contains(&s.location),
        }
    }
}

/// A [`PointQuery`] with property names resolved against one schema.
#[derive(Debug, Clone)]
pub struct CompiledQuery {
    predicates: Vec<Compiled>,
    n: usize,
}

fn strings(values: &[Literal]) -> HashSet<String> {
    values
        .iter()
        .filter_map(|v| match v {
            Literal::Str(s) => Some(s.clone()),
            Literal::Num(_) => None,
        })
        .collect()
}

fn numbers(values: &[Literal]) -> Vec<f64> {
    values
        .iter()
        .filter_map(|v| match v {
            Literal::Num(x) => Some(*x),
            Literal::Str(_) => None,
        })
        .collect()
}

impl CompiledQuery {
    pub fn new(query: &PointQuery, schema: &PropertySchema) -> Result<Self, QueryError> {
        let resolve = |name: &str| {
            schema
                .index_of(name)
                .ok_or_else(|| QueryError::UnknownProperty(name.to_string()))
        };
        let mut predicates = Vec::with_capacity(query.predicates.len());
        for p in &query.predicates {
            let compiled = match p {
                Predicate::Eq { field, value } => {
                    let values = std::slice::from_ref(value);
                    match field {
                        Field::Id => Compiled::IdIn(strings(values)),
                        Field::Type => Compiled::TypeIn(strings(values)),
                        Field::Property(name) => Compiled::PropIn(resolve(name)?, numbers(values)),
                    }
                }
                Predicate::InSet { field, values } => match field {
                    Field::Id => Compiled::IdIn(strings(values)),
                    Field::Type => Compiled::TypeIn(strings(values)),
                    Field::Property(name) => Compiled::PropIn(resolve(name)?, numbers(values)),
                },
                Predicate::Range { property, min, max } => Compiled::Range(resolve(property)?, *min, *max),
                Predicate::WithinRadius { center, radius_m } => Compiled::Radius(*center, *radius_m),
                Predicate::WithinBBox(b) => Compiled::BBox(*b),
            };
            predicates.push(compiled);
        }
        Ok(Self {
            predicates,
            n: query.n,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// True when `sensor` satisfies every predicate. A value predicate on a
    /// property the sensor lacks is false.
    #[inline]
    pub fn matches(&self, sensor: &SensorRecord) -> bool {
        self.predicates.iter().all(|p| p.matches(sensor))
    }

    pub fn filter<'a>(&self, sensors: &'a [SensorRecord]) -> Vec<&'a SensorRecord> {
        sensors.iter().filter(|s| self.matches(s)).collect()
    }
}

/// Sensors of `snapshot` satisfying all of `query`'s predicates, in snapshot order.
pub fn evaluate_filter<'a>(
    snapshot: &'a RegistrySnapshot,
    query: &PointQuery,
) -> Result<Vec<&'a SensorRecord>, QueryError> {
    Ok(CompiledQuery::new(query, snapshot.schema())?.filter(snapshot.sensors()))
}
