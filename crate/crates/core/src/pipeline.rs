//! End-to-end search: filter, (optionally) prune, normalize, index, rank, select.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cphf::{build_plan, heuristic_filter, CphfError, CphfPlan};
use crate::query::{parse_query, CompiledQuery, QueryError};
use crate::ranking::{compute_weights, index_space, normalize, order_by_cpwi, PriorityProfile, RankingError};
use crate::registry::{RegistrySnapshot, SensorRecord};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Cphf(#[from] CphfError),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRequest {
    /// Point-based requirements in the query language, including `n = ...`.
    #[serde(default, alias = "query_text")]
    pub query: String,
    #[serde(default)]
    pub profile: PriorityProfile,
    #[serde(default)]
    pub use_cphf: bool,
    #[serde(default)]
    pub margin_percent: f64,
}

impl SearchRequest {
    pub fn new(query: impl Into<String>, profile: PriorityProfile) -> Self {
        Self {
            query: query.into(),
            profile,
            use_cphf: false,
            margin_percent: 0.0,
        }
    }

    pub fn with_cphf(mut self, margin_percent: f64) -> Self {
        self.use_cphf = true;
        self.margin_percent = margin_percent;
        self
    }
}

/// Wall time per phase, in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub filter: f64,
    pub normalize: f64,
    pub cphf: f64,
    pub index: f64,
    pub rank: f64,
    pub select: f64,
    pub total: f64,
}

impl PhaseTimings {
    pub const PHASES: [&'static str; 6] = ["filter", "normalize", "cphf", "index", "rank", "select"];

    pub fn phase(&self, name: &str) -> Option<f64> {
        Some(match name {
            "filter" => self.filter,
            "normalize" => self.normalize,
            "cphf" => self.cphf,
            "index" => self.index,
            "rank" => self.rank,
            "select" => self.select,
            "total" => self.total,
            _ => return None,
        })
    }

    pub fn phase_sum(&self) -> f64 {
        self.filter + self.normalize + self.cphf + self.index + self.rank + self.select
    }
}

fn micros_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// 1-based position in the result list.
    pub rank: usize,
    pub sensor_id: String,
    pub sensor_type: String,
    pub lat: f64,
    pub lon: f64,
    pub cpwi: f64,
    /// Raw property values present on the sensor.
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub snapshot_version: u64,
    pub n_requested: usize,
    pub results: Vec<ResultRow>,
    pub phase_timings: PhaseTimings,
    pub candidates_before_cphf: usize,
    pub candidates_indexed: usize,
    /// Fewer sensors matched than requested; results are the unranked matches.
    pub truncated: bool,
    /// False when results are in snapshot order with CPWI 0 (truncated, or
    /// no property checked).
    pub ranked: bool,
    pub weights: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cphf_plan: Option<CphfPlan>,
}

impl SearchResponse {
    pub fn result_ids(&self) -> Vec<&str> {
        self.results.iter().map(|r| r.sensor_id.as_str()).collect()
    }

    /// Everything except the timings, for determinism comparisons.
    pub fn without_timings(&self) -> SearchResponse {
        SearchResponse {
            phase_timings: PhaseTimings::default(),
            ..self.clone()
        }
    }

    /// Writes the results as CSV: `rank,id,type,lat,lon,cpwi,<properties>`,
    /// property columns being the union of those present in the rows.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), csv::Error> {
        let mut columns: Vec<&str> = self
            .results
            .iter()
            .flat_map(|r| r.values.keys().map(String::as_str))
            .collect();
        columns.sort_unstable();
        columns.dedup();

        let mut writer = csv::Writer::from_writer(sink);
        let mut header = vec!["rank", "id", "type", "lat", "lon", "cpwi"];
        header.extend(&columns);
        writer.write_record(&header)?;
        for r in &self.results {
            let mut row = vec![
                r.rank.to_string(),
                r.sensor_id.clone(),
                r.sensor_type.clone(),
                r.lat.to_string(),
                r.lon.to_string(),
                r.cpwi.to_string(),
            ];
            row.extend(columns.iter().map(|c| r.values.get(*c).map(|v| v.to_string()).unwrap_or_default()));
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn row(rank: usize, sensor: &SensorRecord, cpwi: f64, snapshot: &RegistrySnapshot) -> ResultRow {
    ResultRow {
        rank,
        sensor_id: sensor.id.clone(),
        sensor_type: sensor.sensor_type.clone(),
        lat: sensor.location.lat,
        lon: sensor.location.lon,
        cpwi,
        values: sensor.named_values(snapshot.schema()),
    }
}

fn unranked(sensors: &[&SensorRecord], n: usize, snapshot: &RegistrySnapshot) -> Vec<ResultRow> {
    sensors
        .iter()
        .take(n)
        .enumerate()
        .map(|(i, s)| row(i + 1, s, 0.0, snapshot))
        .collect()
}

/// Runs one search against `snapshot`.
///
/// If fewer sensors pass the point-based filter than requested, they are
/// returned as-is (snapshot order, CPWI 0) with `truncated` set. If no
/// property is checked, the first `n` matches are returned unranked.
pub fn search(snapshot: &RegistrySnapshot, request: &SearchRequest) -> Result<SearchResponse, SearchError> {
    let started = Instant::now();
    let mut timings = PhaseTimings::default();

    if !(request.margin_percent.is_finite() && request.margin_percent >= 0.0) {
        return Err(SearchError::InvalidRequest(format!(
            "margin_percent must be a non-negative number, got {}",
            request.margin_percent
        )));
    }
    request.profile.validate_against(snapshot.schema())?;

    let t = Instant::now();
    let query = parse_query(&request.query)?;
    let compiled = CompiledQuery::new(&query, snapshot.schema())?;
    let filtered = compiled.filter(snapshot.sensors());
    timings.filter = micros_since(t);
    let n = query.n;

    let mut response = SearchResponse {
        snapshot_version: snapshot.version(),
        n_requested: n,
        results: Vec::new(),
        phase_timings: timings,
        candidates_before_cphf: filtered.len(),
        candidates_indexed: 0,
        truncated: false,
        ranked: false,
        weights: BTreeMap::new(),
        cphf_plan: None,
    };

    let weights = if filtered.len() < n {
        response.truncated = true;
        None
    } else {
        match compute_weights(&request.profile) {
            Ok(w) => Some(w),
            Err(RankingError::NoCheckedProperties) => None,
            Err(e) => return Err(e.into()),
        }
    };
    let Some(weights) = weights else {
        let t = Instant::now();
        response.results = unranked(&filtered, n, snapshot);
        timings.select = micros_since(t);
        timings.total = micros_since(started);
        response.phase_timings = timings;
        return Ok(response);
    };
    response.weights = weights.iter().map(|(k, v)| (k.to_string(), v)).collect();

    let pool = if request.use_cphf {
        let t = Instant::now();
        let plan = build_plan(filtered.len(), &weights, n, request.margin_percent)?;
        let survivors = heuristic_filter(&filtered, snapshot.schema(), &weights, &plan)?;
        timings.cphf = micros_since(t);
        response.cphf_plan = Some(plan);
        survivors
    } else {
        filtered
    };
    response.candidates_indexed = pool.len();

    let t = Instant::now();
    let space = normalize(&pool, snapshot.schema(), weights.properties(), &request.profile.ideal_overrides())?;
    timings.normalize = micros_since(t);

    let t = Instant::now();
    let scores = index_space(&space, &weights)?;
    timings.index = micros_since(t);

    let t = Instant::now();
    let order = order_by_cpwi(&space, scores);
    timings.rank = micros_since(t);

    let t = Instant::now();
    response.results = order
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(i, (pos, cpwi))| row(i + 1, pool[pos], cpwi, snapshot))
        .collect();
    timings.select = micros_since(t);

    response.ranked = true;
    timings.total = micros_since(started);
    response.phase_timings = timings;
    Ok(response)
}
