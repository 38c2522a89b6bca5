//! Sensor catalog: property schema, sensor records, and immutable versioned
//! snapshots that searches run against.

mod ingest;
mod schema;
mod synthetic;

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;

pub use ingest::{parse_catalog, write_csv, write_jsonl, CatalogFormat};
pub use schema::{
    default_schema, is_identifier, schema_with_property_count, Bounds, Polarity, PropertyDef,
    PropertySchema, RESERVED_NAMES,
};
pub use synthetic::{generate_synthetic, synthetic_sensors, SENSOR_TYPES};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate sensor id {0:?}")]
    DuplicateId(String),
    #[error("unknown property {0:?}")]
    UnknownProperty(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid sensor {id:?}: {reason}")]
    InvalidSensor { id: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One sensor. Property values are stored positionally against the schema of
/// the snapshot that owns the record.
#[derive(Debug, Clone)]
pub struct SensorRecord {
    pub id: String,
    pub sensor_type: String,
    pub location: GeoPoint,
    // NaN marks a missing value.
    values: Box<[f64]>,
}

impl SensorRecord {
    /// Builds a record from positional values. Non-finite values are rejected.
    pub fn new(
        id: impl Into<String>,
        sensor_type: impl Into<String>,
        location: GeoPoint,
        values: &[Option<f64>],
    ) -> Result<Self, RegistryError> {
        let id = id.into();
        let mut stored = Vec::with_capacity(values.len());
        for v in values {
            match v {
                Some(x) if !x.is_finite() => {
                    return Err(RegistryError::InvalidSensor {
                        id,
                        reason: format!("non-finite property value {x}"),
                    })
                }
                Some(x) => stored.push(*x),
                None => stored.push(f64::NAN),
            }
        }
        Ok(Self {
            id,
            sensor_type: sensor_type.into(),
            location,
            values: stored.into_boxed_slice(),
        })
    }

    /// Builds a record from a name-keyed value map, resolving names against `schema`.
    pub fn from_named(
        id: impl Into<String>,
        sensor_type: impl Into<String>,
        location: GeoPoint,
        values: &BTreeMap<String, f64>,
        schema: &PropertySchema,
    ) -> Result<Self, RegistryError> {
        let mut positional = vec![None; schema.len()];
        for (name, v) in values {
            let idx = schema
                .index_of(name)
                .ok_or_else(|| RegistryError::UnknownProperty(name.clone()))?;
            positional[idx] = Some(*v);
        }
        Self::new(id, sensor_type, location, &positional)
    }

    /// Raw value of the property at schema position `idx`.
    #[inline]
    pub fn value(&self, idx: usize) -> Option<f64> {
        let v = self.values[idx];
        (!v.is_nan()).then_some(v)
    }

    pub fn property_count(&self) -> usize {
        self.values.len()
    }

    pub fn named_values(&self, schema: &PropertySchema) -> BTreeMap<String, f64> {
        schema
            .names()
            .enumerate()
            .filter_map(|(i, name)| self.value(i).map(|v| (name.to_string(), v)))
            .collect()
    }

    pub fn to_document(&self, schema: &PropertySchema) -> SensorDocument {
        SensorDocument {
            id: self.id.clone(),
            sensor_type: self.sensor_type.clone(),
            lat: self.location.lat,
            lon: self.location.lon,
            values: self
                .named_values(schema)
                .into_iter()
                .map(|(k, v)| (k, Some(v)))
                .collect(),
        }
    }
}

impl PartialEq for SensorRecord {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.sensor_type == other.sensor_type
            && self.location == other.location
            && self.values.len() == other.values.len()
            && (0..self.values.len()).all(|i| self.value(i) == other.value(i))
    }
}

/// Wire form of a sensor, as used by JSON-Lines catalogs and the HTTP API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorDocument {
    pub id: String,
    #[serde(rename = "type")]
    pub sensor_type: String,
    pub lat: f64,
    pub lon: f64,
    #[serde(default)]
    pub values: BTreeMap<String, Option<f64>>,
}

/// Observed `[min, max]` of one property over a snapshot; `min == max` is possible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedRange {
    pub min: f64,
    pub max: f64,
}

/// Immutable, versioned view of the catalog.
#[derive(Debug)]
pub struct RegistrySnapshot {
    schema: PropertySchema,
    sensors: Vec<SensorRecord>,
    by_id: HashMap<String, usize>,
    observed: Vec<Option<ObservedRange>>,
    version: u64,
}

impl RegistrySnapshot {
    pub fn new(
        schema: PropertySchema,
        sensors: Vec<SensorRecord>,
        version: u64,
    ) -> Result<Self, RegistryError> {
        let mut by_id = HashMap::with_capacity(sensors.len());
        let mut observed: Vec<Option<ObservedRange>> = vec![None; schema.len()];
        for (i, s) in sensors.iter().enumerate() {
            if s.property_count() != schema.len() {
                return Err(RegistryError::InvalidSensor {
                    id: s.id.clone(),
                    reason: format!(
                        "{} values for a {}-property schema",
                        s.property_count(),
                        schema.len()
                    ),
                });
            }
            if !s.location.is_valid() {
                return Err(RegistryError::InvalidSensor {
                    id: s.id.clone(),
                    reason: format!("location ({}, {}) out of range", s.location.lat, s.location.lon),
                });
            }
            if by_id.insert(s.id.clone(), i).is_some() {
                return Err(RegistryError::DuplicateId(s.id.clone()));
            }
            for (p, range) in observed.iter_mut().enumerate() {
                if let Some(v) = s.value(p) {
                    *range = Some(match *range {
                        None => ObservedRange { min: v, max: v },
                        Some(r) => ObservedRange {
                            min: r.min.min(v),
                            max: r.max.max(v),
                        },
                    });
                }
            }
        }
        Ok(Self {
            schema,
            sensors,
            by_id,
            observed,
            version,
        })
    }

    pub fn schema(&self) -> &PropertySchema {
        &self.schema
    }

    pub fn sensors(&self) -> &[SensorRecord] {
        &self.sensors
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn get(&self, id: &str) -> Option<&SensorRecord> {
        self.by_id.get(id).map(|&i| &self.sensors[i])
    }

    /// Observed value range of property `idx` across the whole snapshot.
    /// These are provisional bounds for properties the schema leaves unbounded.
    pub fn observed_range(&self, idx: usize) -> Option<ObservedRange> {
        self.observed.get(idx).copied().flatten()
    }

    /// Declared bounds where present, otherwise the observed range (when non-degenerate).
    pub fn effective_bounds(&self, idx: usize) -> Option<Bounds> {
        self.schema.properties()[idx].bounds.or_else(|| {
            self.observed_range(idx)
                .and_then(|r| Bounds::new(r.min, r.max).ok())
        })
    }
}

/// Parses a catalog into a first-version snapshot.
pub fn load_catalog<R: Read>(
    source: R,
    format: CatalogFormat,
    schema: PropertySchema,
) -> Result<RegistrySnapshot, RegistryError> {
    let sensors = parse_catalog(source, format, &schema)?;
    RegistrySnapshot::new(schema, sensors, 1)
}

/// Publishes snapshots. Each publish builds the new snapshot off to the side
/// and swaps it in; readers keep whatever `Arc` they already hold.
#[derive(Debug, Default)]
pub struct Registry {
    current: RwLock<Option<Arc<RegistrySnapshot>>>,
    publish_lock: Mutex<u64>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&self) -> Option<Arc<RegistrySnapshot>> {
        self.current.read().expect("registry lock poisoned").clone()
    }

    pub fn version(&self) -> u64 {
        *self.publish_lock.lock().expect("registry lock poisoned")
    }

    /// Validates `sensors` into a snapshot with the next version and makes it current.
    /// On error nothing is published.
    pub fn publish(
        &self,
        schema: PropertySchema,
        sensors: Vec<SensorRecord>,
    ) -> Result<Arc<RegistrySnapshot>, RegistryError> {
        let mut last = self.publish_lock.lock().expect("registry lock poisoned");
        let snapshot = Arc::new(RegistrySnapshot::new(schema, sensors, *last + 1)?);
        *last += 1;
        *self.current.write().expect("registry lock poisoned") = Some(Arc::clone(&snapshot));
        Ok(snapshot)
    }

    pub fn load<R: Read>(
        &self,
        source: R,
        format: CatalogFormat,
        schema: PropertySchema,
    ) -> Result<Arc<RegistrySnapshot>, RegistryError> {
        let sensors = parse_catalog(source, format, &schema)?;
        self.publish(schema, sensors)
    }
}
