//! Proximity-based ranking.
//!
//! User priorities become comparative weights, the candidate set is placed in
//! a `[0, 1]^d` space (one dimension per checked property, 1 = best), and each
//! sensor is scored by its weighted Euclidean distance to the ideal point:
//!
//! ```text
//! cpwi(s) = sqrt( sum_i  w_i * (ideal_i - s_i)^2 )
//! ```
//!
//! Smaller is better. Ties are broken by sensor id so every ranking is total.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{PropertySchema, SensorRecord};

pub const DEFAULT_SCALE: u32 = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RankingError {
    #[error("no property is checked; nothing to rank on")]
    NoCheckedProperties,
    #[error("no candidates to normalize")]
    EmptyCandidates,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("unknown property {0:?}")]
    UnknownProperty(String),
    #[error("invalid priority profile: {0}")]
    InvalidProfile(String),
}

/// Per-property priority as captured by one check-box, one slider and an
/// optional ideal value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorityEntry {
    pub checked: bool,
    pub slider: u32,
    /// Ideal coordinate in normalized space (1 = best). Defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ideal: Option<f64>,
}

impl PriorityEntry {
    pub fn checked(slider: u32) -> Self {
        Self {
            checked: true,
            slider,
            ideal: None,
        }
    }

    pub fn unchecked(slider: u32) -> Self {
        Self {
            checked: false,
            slider,
            ideal: None,
        }
    }
}

fn default_scale() -> u32 {
    DEFAULT_SCALE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityProfile {
    /// Slider maximum.
    #[serde(default = "default_scale")]
    pub scale: u32,
    #[serde(default)]
    pub entries: BTreeMap<String, PriorityEntry>,
}

impl Default for PriorityProfile {
    fn default() -> Self {
        Self::new(DEFAULT_SCALE)
    }
}

impl PriorityProfile {
    pub fn new(scale: u32) -> Self {
        Self {
            scale,
            entries: BTreeMap::new(),
        }
    }

    pub fn check(mut self, property: impl Into<String>, slider: u32) -> Self {
        self.entries.insert(property.into(), PriorityEntry::checked(slider));
        self
    }

    pub fn uncheck(mut self, property: impl Into<String>, slider: u32) -> Self {
        self.entries.insert(property.into(), PriorityEntry::unchecked(slider));
        self
    }

    /// Sets the ideal coordinate of an existing entry.
    pub fn ideal(mut self, property: &str, ideal: f64) -> Self {
        if let Some(e) = self.entries.get_mut(property) {
            e.ideal = Some(ideal);
        }
        self
    }

    /// Checked property names in ascending order; this is the dimension order
    /// used throughout ranking.
    pub fn checked(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|(_, e)| e.checked)
            .map(|(name, _)| name.clone())
            .collect()
    }

    /// Ideal overrides of checked properties.
    pub fn ideal_overrides(&self) -> BTreeMap<String, f64> {
        self.entries
            .iter()
            .filter(|(_, e)| e.checked)
            .filter_map(|(name, e)| e.ideal.map(|v| (name.clone(), v)))
            .collect()
    }

    pub fn validate(&self) -> Result<(), RankingError> {
        if self.scale == 0 {
            return Err(RankingError::InvalidProfile("scale must be positive".into()));
        }
        for (name, e) in &self.entries {
            if e.slider > self.scale {
                return Err(RankingError::InvalidProfile(format!(
                    "{name}: slider {} exceeds scale {}",
                    e.slider, self.scale
                )));
            }
            if let Some(ideal) = e.ideal {
                if !(0.0..=1.0).contains(&ideal) {
                    return Err(RankingError::InvalidProfile(format!(
                        "{name}: ideal {ideal} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks that every entry names a property of `schema`.
    pub fn validate_against(&self, schema: &PropertySchema) -> Result<(), RankingError> {
        self.validate()?;
        match self.entries.keys().find(|name| schema.index_of(name).is_none()) {
            Some(name) => Err(RankingError::UnknownProperty(name.clone())),
            None => Ok(()),
        }
    }
}

/// Normalized weights over checked properties, in ascending name order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    properties: Vec<String>,
    weights: Vec<f64>,
}

impl WeightVector {
    /// Builds a weight vector from raw non-negative priorities, normalizing
    /// them to sum to 1. Names must be distinct.
    pub fn from_priorities<I, S>(priorities: I) -> Result<Self, RankingError>
    where
        I: IntoIterator<Item = (S, u32)>,
        S: Into<String>,
    {
        let sorted: BTreeMap<String, u32> = priorities.into_iter().map(|(k, v)| (k.into(), v)).collect();
        if sorted.is_empty() {
            return Err(RankingError::NoCheckedProperties);
        }
        // Integer sum keeps the quotient exact for any common scaling of the sliders.
        let total: u64 = sorted.values().map(|&s| u64::from(s)).sum();
        let k = sorted.len() as f64;
        let (properties, weights) = sorted
            .into_iter()
            .map(|(name, s)| {
                let w = if total == 0 { 1.0 / k } else { f64::from(s) / total as f64 };
                (name, w)
            })
            .unzip();
        Ok(Self { properties, weights })
    }

    pub fn properties(&self) -> &[String] {
        &self.properties
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, property: &str) -> Option<f64> {
        self.properties
            .iter()
            .position(|p| p == property)
            .map(|i| self.weights[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.properties.iter().map(String::as_str).zip(self.weights.iter().copied())
    }
}

impl Serialize for WeightVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_map(self.iter())
    }
}

/// `w_i = slider_i / sum(sliders)` over checked entries; uniform when every
/// checked slider is zero.
pub fn compute_weights(profile: &PriorityProfile) -> Result<WeightVector, RankingError> {
    profile.validate()?;
    WeightVector::from_priorities(
        profile
            .entries
            .iter()
            .filter(|(_, e)| e.checked)
            .map(|(name, e)| (name.as_str(), e.slider)),
    )
}

/// Candidates placed in the normalized context space.
#[derive(Debug, Clone)]
pub struct NormalizedSpace<'a> {
    properties: Vec<String>,
    sensor_ids: Vec<&'a str>,
    // Row-major, `properties.len()` coordinates per sensor.
    coords: Vec<f64>,
    ideal: Vec<f64>,
    bounds_used: Vec<Option<(f64, f64)>>,
}

impl<'a> NormalizedSpace<'a> {
    pub fn properties(&self) -> &[String] {
        &self.properties
    }

    pub fn dims(&self) -> usize {
        self.properties.len()
    }

    pub fn len(&self) -> usize {
        self.sensor_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensor_ids.is_empty()
    }

    pub fn sensor_ids(&self) -> &[&'a str] {
        &self.sensor_ids
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dims();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn points(&self) -> impl Iterator<Item = (&'a str, &[f64])> + '_ {
        self.sensor_ids
            .iter()
            .copied()
            .zip(self.coords.chunks_exact(self.dims().max(1)))
    }

    pub fn ideal(&self) -> &[f64] {
        &self.ideal
    }

    /// `(lo, hi)` applied per dimension; `None` when no candidate has a value
    /// and the schema declares no bounds.
    pub fn bounds_used(&self) -> &[Option<(f64, f64)>] {
        &self.bounds_used
    }
}

/// Maps a raw value into `[0, 1]` with 1 = best. `None` (missing) maps to 0.
#[inline]
pub fn normalize_value(value: Option<f64>, lo: f64, hi: f64, higher_is_better: bool) -> f64 {
    let Some(v) = value else { return 0.0 };
    if hi == lo {
        return 0.5;
    }
    let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    if higher_is_better {
        t
    } else {
        1.0 - t
    }
}

/// Places `candidates` into a space with one dimension per `checked` property.
///
/// Per dimension the range is the schema's declared bounds, or the observed
/// min/max over `candidates` when the schema declares none. Out-of-range values
/// clamp; a degenerate range puts everyone at 0.5. The ideal point is all ones
/// unless overridden (overrides are already in normalized space).
pub fn normalize<'a, S: AsRef<str>>(
    candidates: &[&'a SensorRecord],
    schema: &PropertySchema,
    checked: &[S],
    ideal_overrides: &BTreeMap<String, f64>,
) -> Result<NormalizedSpace<'a>, RankingError> {
    if candidates.is_empty() {
        return Err(RankingError::EmptyCandidates);
    }
    let dims = checked.len();
    let mut columns = Vec::with_capacity(dims);
    let mut properties = Vec::with_capacity(dims);
    let mut ideal = Vec::with_capacity(dims);
    for name in checked {
        let name = name.as_ref();
        let idx = schema
            .index_of(name)
            .ok_or_else(|| RankingError::UnknownProperty(name.to_string()))?;
        let target = ideal_overrides.get(name).copied().unwrap_or(1.0);
        if !(0.0..=1.0).contains(&target) {
            return Err(RankingError::InvalidProfile(format!("{name}: ideal {target} outside [0, 1]")));
        }
        columns.push(idx);
        properties.push(name.to_string());
        ideal.push(target);
    }

    let bounds_used: Vec<Option<(f64, f64)>> = columns
        .iter()
        .map(|&idx| match schema.properties()[idx].bounds {
            Some(b) => Some((b.min, b.max)),
            None => candidates
                .iter()
                .filter_map(|s| s.value(idx))
                .fold(None, |acc, v| match acc {
                    None => Some((v, v)),
                    Some((lo, hi)) => Some((f64::min(lo, v), f64::max(hi, v))),
                }),
        })
        .collect();
    let polarity: Vec<bool> = columns
        .iter()
        .map(|&idx| schema.properties()[idx].polarity.is_higher_better())
        .collect();

    let mut coords = Vec::with_capacity(candidates.len() * dims);
    for s in candidates {
        for d in 0..dims {
            let c = match bounds_used[d] {
                Some((lo, hi)) => normalize_value(s.value(columns[d]), lo, hi, polarity[d]),
                None => 0.0,
            };
            coords.push(c);
        }
    }

    Ok(NormalizedSpace {
        properties,
        sensor_ids: candidates.iter().map(|s| s.id.as_str()).collect(),
        coords,
        ideal,
        bounds_used,
    })
}

#[inline]
fn weighted_distance(point: &[f64], ideal: &[f64], weights: &[f64]) -> f64 {
    let mut sum = 0.0;
    for i in 0..weights.len() {
        let diff = ideal[i] - point[i];
        sum += weights[i] * diff * diff;
    }
    sum.sqrt()
}

/// Weighted Euclidean distance between `point` and `ideal`.
pub fn compute_cpwi(point: &[f64], ideal: &[f64], weights: &WeightVector) -> Result<f64, RankingError> {
    if point.len() != weights.len() || ideal.len() != weights.len() {
        return Err(RankingError::DimensionMismatch {
            expected: format!("{} dimensions", weights.len()),
            found: format!("point {} / ideal {}", point.len(), ideal.len()),
        });
    }
    Ok(weighted_distance(point, ideal, weights.weights()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub sensor_id: String,
    pub cpwi: f64,
}

/// Sensors ordered by ascending CPWI, ties by ascending id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub entries: Vec<RankedEntry>,
}

impl RankedResult {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.sensor_id.as_str())
    }
}

fn check_dimensions(space: &NormalizedSpace<'_>, weights: &WeightVector) -> Result<(), RankingError> {
    if space.properties() != weights.properties() {
        return Err(RankingError::DimensionMismatch {
            expected: space.properties().join(","),
            found: weights.properties().join(","),
        });
    }
    Ok(())
}

/// CPWI of every sensor in `space`, in space order.
pub fn index_space(space: &NormalizedSpace<'_>, weights: &WeightVector) -> Result<Vec<f64>, RankingError> {
    check_dimensions(space, weights)?;
    let w = weights.weights();
    Ok((0..space.len())
        .map(|i| weighted_distance(space.point(i), space.ideal(), w))
        .collect())
}

/// Sorts `(position, cpwi)` pairs ascending by CPWI, ties by sensor id.
pub fn order_by_cpwi(space: &NormalizedSpace<'_>, scores: Vec<f64>) -> Vec<(usize, f64)> {
    let ids = space.sensor_ids();
    let mut keyed: Vec<(u64, usize)> = scores.iter().enumerate().map(|(i, &c)| (total_order_key(c), i)).collect();
    keyed.sort_unstable();
    let mut start = 0;
    while start < keyed.len() {
        let end = start + keyed[start..].iter().take_while(|k| k.0 == keyed[start].0).count();
        if end - start > 1 {
            keyed[start..end].sort_unstable_by(|a, b| ids[a.1].cmp(ids[b.1]));
        }
        start = end;
    }
    keyed.into_iter().map(|(_, i)| (i, scores[i])).collect()
}

/// Unsigned key whose order matches `f64::total_cmp`.
#[inline]
fn total_order_key(x: f64) -> u64 {
    let bits = x.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

/// Ranks every sensor in `space` by CPWI.
pub fn rank_sensors(space: &NormalizedSpace<'_>, weights: &WeightVector) -> Result<RankedResult, RankingError> {
    let scores = index_space(space, weights)?;
    let ids = space.sensor_ids();
    Ok(RankedResult {
        entries: order_by_cpwi(space, scores)
            .into_iter()
            .map(|(i, cpwi)| RankedEntry {
                sensor_id: ids[i].to_string(),
                cpwi,
            })
            .collect(),
    })
}

/// The first `n` entries of `ranked`, order preserved.
pub fn select_top_n(mut ranked: RankedResult, n: usize) -> RankedResult {
    ranked.entries.truncate(n);
    ranked
}
