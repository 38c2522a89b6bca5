//! Context-aware sensor search.
//!
//! A search runs in three stages against an immutable [`RegistrySnapshot`]:
//! hard point-based filtering ([`query`]), optional heuristic pruning
//! ([`cphf`]), and priority-weighted Euclidean ranking ([`ranking`]).
//! [`pipeline::search`] wires the stages together and times each phase;
//! [`bench`] reproduces the timing and accuracy experiments as CSV tables.

pub mod bench;
pub mod cphf;
pub mod geo;
pub mod pipeline;
pub mod query;
pub mod ranking;
pub mod registry;

pub use geo::{BoundingBox, GeoPoint};
pub use pipeline::{search, SearchError, SearchRequest, SearchResponse};
pub use query::{parse_query, PointQuery};
pub use ranking::{PriorityProfile, RankedResult, WeightVector};
pub use registry::{
    default_schema, load_catalog, CatalogFormat, Polarity, PropertyDef, PropertySchema, Registry,
    RegistryError, RegistrySnapshot, SensorRecord,
};
