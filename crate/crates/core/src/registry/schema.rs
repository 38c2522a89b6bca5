use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RegistryError;

/// Column and field names that cannot be used as property names because the
/// catalog formats and the query language already give them a meaning.
pub const RESERVED_NAMES: &[&str] = &["id", "type", "lat", "lon", "values", "n", "within"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    #[serde(alias = "higher")]
    HigherIsBetter,
    #[serde(alias = "lower")]
    LowerIsBetter,
}

impl Polarity {
    pub fn is_higher_better(self) -> bool {
        matches!(self, Polarity::HigherIsBetter)
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::HigherIsBetter => "higher_is_better",
            Polarity::LowerIsBetter => "lower_is_better",
        })
    }
}

/// Value range of a property in its native units. `min < max` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Result<Self, RegistryError> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(RegistryError::InvalidSchema(format!(
                "bounds must be finite with min < max, got [{min}, {max}]"
            )));
        }
        Ok(Self { min, max })
    }

    pub const UNIT: Bounds = Bounds { min: 0.0, max: 1.0 };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyDef {
    pub name: String,
    pub polarity: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
    #[serde(default)]
    pub description: String,
}

impl PropertyDef {
    pub fn new(name: impl Into<String>, polarity: Polarity, bounds: Option<Bounds>) -> Self {
        Self {
            name: name.into(),
            polarity,
            bounds,
            description: String::new(),
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }
}

/// `[A-Za-z_][A-Za-z0-9_]*`, so every property can be named in the query language.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Ordered set of context properties. Property position is the index used
/// for per-sensor value storage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SchemaDoc", into = "SchemaDoc")]
pub struct PropertySchema {
    properties: Vec<PropertyDef>,
    index: HashMap<String, usize>,
}

impl PartialEq for PropertySchema {
    fn eq(&self, other: &Self) -> bool {
        self.properties == other.properties
    }
}

impl PropertySchema {
    pub fn new(properties: Vec<PropertyDef>) -> Result<Self, RegistryError> {
        if properties.is_empty() {
            return Err(RegistryError::InvalidSchema(
                "schema needs at least one property".into(),
            ));
        }
        let mut index = HashMap::with_capacity(properties.len());
        for (i, p) in properties.iter().enumerate() {
            if !is_identifier(&p.name) {
                return Err(RegistryError::InvalidSchema(format!(
                    "property name {:?} is not an identifier",
                    p.name
                )));
            }
            if RESERVED_NAMES.contains(&p.name.as_str()) {
                return Err(RegistryError::InvalidSchema(format!(
                    "property name {:?} is reserved",
                    p.name
                )));
            }
            if let Some(b) = p.bounds {
                Bounds::new(b.min, b.max)?;
            }
            if index.insert(p.name.clone(), i).is_some() {
                return Err(RegistryError::InvalidSchema(format!(
                    "duplicate property name {:?}",
                    p.name
                )));
            }
        }
        Ok(Self { properties, index })
    }

    pub fn len(&self) -> usize {
        self.properties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.properties.is_empty()
    }

    pub fn properties(&self) -> &[PropertyDef] {
        &self.properties
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&PropertyDef> {
        self.index_of(name).map(|i| &self.properties[i])
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.properties.iter().map(|p| p.name.as_str())
    }

    /// Schema restricted to the first `count` properties.
    pub fn truncated(&self, count: usize) -> Result<Self, RegistryError> {
        Self::new(self.properties[..count.min(self.len())].to_vec())
    }

    /// Parses the TOML schema file format:
    ///
    /// ```toml
    /// [[property]]
    /// name = "accuracy"
    /// polarity = "higher_is_better"
    /// min = 0.0
    /// max = 1.0
    /// description = "closeness of readings to the true value"
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self, RegistryError> {
        let file: SchemaFile =
            toml::from_str(text).map_err(|e| RegistryError::InvalidSchema(e.to_string()))?;
        let properties = file
            .property
            .into_iter()
            .map(|entry| {
                let bounds = match (entry.min, entry.max) {
                    (Some(min), Some(max)) => Some(Bounds::new(min, max)?),
                    (None, None) => None,
                    _ => {
                        return Err(RegistryError::InvalidSchema(format!(
                            "property {:?}: min and max must be given together",
                            entry.name
                        )))
                    }
                };
                Ok(PropertyDef {
                    name: entry.name,
                    polarity: entry.polarity,
                    bounds,
                    description: entry.description.unwrap_or_default(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(properties)
    }

    pub fn to_toml_string(&self) -> String {
        let file = SchemaFile {
            property: self
                .properties
                .iter()
                .map(|p| SchemaFileEntry {
                    name: p.name.clone(),
                    polarity: p.polarity,
                    min: p.bounds.map(|b| b.min),
                    max: p.bounds.map(|b| b.max),
                    description: (!p.description.is_empty()).then(|| p.description.clone()),
                })
                .collect(),
        };
        toml::to_string(&file).expect("schema serializes to TOML")
    }
}

impl FromStr for PropertySchema {
    type Err = RegistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_toml_str(s)
    }
}

#[derive(Serialize, Deserialize)]
struct SchemaDoc {
    properties: Vec<PropertyDef>,
}

impl TryFrom<SchemaDoc> for PropertySchema {
    type Error = RegistryError;

    fn try_from(doc: SchemaDoc) -> Result<Self, Self::Error> {
        PropertySchema::new(doc.properties)
    }
}

impl From<PropertySchema> for SchemaDoc {
    fn from(schema: PropertySchema) -> Self {
        SchemaDoc {
            properties: schema.properties,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    #[serde(default)]
    property: Vec<SchemaFileEntry>,
}

#[derive(Serialize, Deserialize)]
struct SchemaFileEntry {
    name: String,
    polarity: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
}

use Polarity::{HigherIsBetter as Hi, LowerIsBetter as Lo};

// (name, description, polarity, bounded to [0,1])
const DEFAULT_PROPERTIES: [(&str, &str, Polarity, bool); 30] = [
    ("availability", "availability", Hi, true),
    ("accuracy", "accuracy", Hi, true),
    ("reliability", "reliability", Hi, true),
    ("response_time", "response time", Lo, false),
    ("frequency", "frequency", Hi, true),
    ("sensitivity", "sensitivity", Hi, true),
    ("measurement_range", "measurement range", Hi, true),
    ("selectivity", "selectivity", Hi, true),
    ("precision", "precision", Hi, true),
    ("latency", "latency", Lo, false),
    ("drift", "drift", Lo, true),
    ("resolution", "resolution", Hi, true),
    ("detection_limit", "detection limit", Lo, true),
    ("operating_power_range", "operating power range", Hi, true),
    ("sensor_lifetime", "system (sensor) lifetime", Hi, true),
    ("battery_life", "battery life", Hi, true),
    ("security", "security", Hi, true),
    ("accessibility", "accessibility", Hi, true),
    ("robustness", "robustness", Hi, true),
    ("exception_handling", "exception handling", Hi, true),
    ("interoperability", "interoperability", Hi, true),
    ("configurability", "configurability", Hi, true),
    ("user_satisfaction_rating", "user satisfaction rating", Hi, true),
    ("capacity", "capacity", Hi, true),
    ("throughput", "throughput", Hi, true),
    ("cost_of_data_transmission", "cost of data transmission", Lo, false),
    ("cost_of_data_generation", "cost of data generation", Lo, false),
    ("data_ownership_cost", "data ownership cost", Lo, false),
    ("bandwidth", "bandwidth", Hi, true),
    ("trust", "trust", Hi, true),
];

/// The 30-property context framework. Ratio-like properties are bounded to
/// `[0, 1]`; costs, latency and response time carry no declared bounds and are
/// normalized over the observed candidate range.
pub fn default_schema() -> PropertySchema {
    let properties = DEFAULT_PROPERTIES
        .iter()
        .map(|&(name, description, polarity, unit)| {
            PropertyDef::new(name, polarity, unit.then_some(Bounds::UNIT)).with_description(description)
        })
        .collect();
    PropertySchema::new(properties).expect("default schema is valid")
}

/// Schema with `count` properties: the defaults first, then extra
/// higher-is-better `[0, 1]` properties named `property_31`, `property_32`, ...
pub fn schema_with_property_count(count: usize) -> Result<PropertySchema, RegistryError> {
    if count == 0 {
        return Err(RegistryError::InvalidSchema(
            "schema needs at least one property".into(),
        ));
    }
    let base = default_schema();
    let mut properties: Vec<PropertyDef> = base.properties.into_iter().take(count).collect();
    for i in properties.len()..count {
        properties.push(PropertyDef::new(
            format!("property_{}", i + 1),
            Polarity::HigherIsBetter,
            Some(Bounds::UNIT),
        ));
    }
    PropertySchema::new(properties)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_has_thirty_properties() {
        assert_eq!(default_schema().len(), 30);
    }

    #[test]
    fn default_polarities() {
        let s = default_schema();
        assert_eq!(s.get("accuracy").unwrap().polarity, Polarity::HigherIsBetter);
        assert_eq!(
            s.get("cost_of_data_generation").unwrap().polarity,
            Polarity::LowerIsBetter
        );
        let lower: Vec<&str> = s
            .properties()
            .iter()
            .filter(|p| p.polarity == Polarity::LowerIsBetter)
            .map(|p| p.name.as_str())
            .collect();
        assert_eq!(
            lower,
            [
                "response_time",
                "latency",
                "drift",
                "detection_limit",
                "cost_of_data_transmission",
                "cost_of_data_generation",
                "data_ownership_cost"
            ]
        );
    }

    #[test]
    fn default_bounds() {
        let s = default_schema();
        let unbounded: Vec<&str> = s
            .properties()
            .iter()
            .filter(|p| p.bounds.is_none())
            .map(|p| p.name.as_str())
            .collect();
        assert_eq!(
            unbounded,
            [
                "response_time",
                "latency",
                "cost_of_data_transmission",
                "cost_of_data_generation",
                "data_ownership_cost"
            ]
        );
        assert_eq!(s.get("trust").unwrap().bounds, Some(Bounds::UNIT));
    }

    #[test]
    fn rejects_duplicates_and_bad_names() {
        let p = |n: &str| PropertyDef::new(n, Polarity::HigherIsBetter, None);
        assert!(PropertySchema::new(vec![p("a"), p("a")]).is_err());
        assert!(PropertySchema::new(vec![]).is_err());
        assert!(PropertySchema::new(vec![p("")]).is_err());
        assert!(PropertySchema::new(vec![p("has space")]).is_err());
        assert!(PropertySchema::new(vec![p("type")]).is_err());
        // case-sensitive
        assert!(PropertySchema::new(vec![p("a"), p("A")]).is_ok());
    }

    #[test]
    fn rejects_inverted_bounds() {
        let def = PropertyDef::new("a", Polarity::HigherIsBetter, Some(Bounds { min: 1.0, max: 0.0 }));
        assert!(PropertySchema::new(vec![def]).is_err());
        assert!(Bounds::new(2.0, 2.0).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let s = default_schema();
        let text = s.to_toml_string();
        assert_eq!(PropertySchema::from_toml_str(&text).unwrap(), s);
    }

    #[test]
    fn toml_requires_paired_bounds() {
        let text = "[[property]]\nname = \"a\"\npolarity = \"lower\"\nmin = 0.0\n";
        assert!(PropertySchema::from_toml_str(text).is_err());
    }

    #[test]
    fn json_round_trip_validates() {
        let s = default_schema();
        let json = serde_json::to_string(&s).unwrap();
        let back: PropertySchema = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<PropertySchema>(r#"{"properties":[]}"#).is_err());
    }

    #[test]
    fn property_count_extension() {
        assert_eq!(schema_with_property_count(5).unwrap().len(), 5);
        let big = schema_with_property_count(32).unwrap();
        assert_eq!(big.properties()[31].name, "property_32");
    }
}
