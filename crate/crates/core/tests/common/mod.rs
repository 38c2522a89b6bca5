//! Test-only oracles. These re-derive results straight from raw records and
//! the query AST without touching the library's normalization, indexing,
//! sorting or filtering code.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use sensor_search::query::{Field, Literal, PointQuery, Predicate};
use sensor_search::ranking::PriorityProfile;
use sensor_search::registry::{Bounds, Polarity, PropertyDef, PropertySchema, RegistrySnapshot, SensorRecord};
use sensor_search::GeoPoint;

pub const TYPES: [&str; 4] = ["temperature", "humidity", "pressure", "light"];

/// Five properties mixing polarity and declared/undeclared bounds.
pub fn mixed_schema() -> PropertySchema {
    PropertySchema::new(vec![
        PropertyDef::new("accuracy", Polarity::HigherIsBetter, Some(Bounds::UNIT)),
        PropertyDef::new("reliability", Polarity::HigherIsBetter, None),
        PropertyDef::new("latency", Polarity::LowerIsBetter, None),
        PropertyDef::new("cost", Polarity::LowerIsBetter, Some(Bounds { min: 0.0, max: 50.0 })),
        PropertyDef::new("trust", Polarity::HigherIsBetter, Some(Bounds { min: -1.0, max: 1.0 })),
    ])
    .unwrap()
}

/// Random records over `schema`. Values are drawn a bit beyond declared bounds
/// so clamping is exercised, and a fraction are missing. Some values are
/// quantized so exact ties occur.
pub fn random_records<R: Rng>(rng: &mut R, count: usize, schema: &PropertySchema, missing_rate: f64) -> Vec<SensorRecord> {
    (0..count)
        .map(|i| {
            let values: Vec<Option<f64>> = schema
                .properties()
                .iter()
                .map(|p| {
                    if rng.gen_bool(missing_rate) {
                        return None;
                    }
                    let (lo, hi) = p.bounds.map_or((0.0, 100.0), |b| (b.min, b.max));
                    let span = hi - lo;
                    let v = rng.gen_range(lo - 0.1 * span..hi + 0.1 * span);
                    Some(if rng.gen_bool(0.2) { (v * 4.0).round() / 4.0 } else { v })
                })
                .collect();
            SensorRecord::new(
                format!("s{i:05}"),
                *TYPES.choose(rng).unwrap(),
                GeoPoint::new(rng.gen_range(-60.0..60.0), rng.gen_range(-180.0..180.0)),
                &values,
            )
            .unwrap()
        })
        .collect()
}

pub fn random_snapshot<R: Rng>(rng: &mut R, count: usize, schema: &PropertySchema, missing_rate: f64) -> RegistrySnapshot {
    RegistrySnapshot::new(schema.clone(), random_records(rng, count, schema, missing_rate), 1).unwrap()
}

/// Random profile with at least one checked property; sliders may be zero.
pub fn random_profile<R: Rng>(rng: &mut R, schema: &PropertySchema) -> PriorityProfile {
    let scale = *[10u32, 100, 1000].choose(rng).unwrap();
    let mut profile = PriorityProfile::new(scale);
    let names: Vec<&str> = schema.names().collect();
    let forced = rng.gen_range(0..names.len());
    for (i, name) in names.iter().enumerate() {
        let slider = if rng.gen_bool(0.1) { 0 } else { rng.gen_range(0..=scale) };
        if i == forced || rng.gen_bool(0.6) {
            profile = profile.check(*name, slider);
            if rng.gen_bool(0.2) {
                profile = profile.ideal(name, rng.gen_range(0.0..=1.0));
            }
        } else if rng.gen_bool(0.5) {
            profile = profile.uncheck(*name, slider);
        }
    }
    profile
}

/// Brute-force ranking: recompute weights, per-dimension ranges, coordinates
/// and distances for every candidate, then sort by (distance, id).
pub fn oracle_rank(candidates: &[&SensorRecord], schema: &PropertySchema, profile: &PriorityProfile) -> Vec<(String, f64)> {
    let checked: Vec<(&String, u32, f64)> = profile
        .entries
        .iter()
        .filter(|(_, e)| e.checked)
        .map(|(name, e)| (name, e.slider, e.ideal.unwrap_or(1.0)))
        .collect();
    let slider_sum: f64 = checked.iter().map(|c| c.1 as f64).sum();

    let columns: Vec<(usize, f64, f64, f64, f64)> = checked
        .iter()
        .map(|&(name, slider, ideal)| {
            let weight = if slider_sum == 0.0 { 1.0 / checked.len() as f64 } else { slider as f64 / slider_sum };
            let p = schema.index_of(name).unwrap();
            let present: Vec<f64> = candidates.iter().filter_map(|c| c.value(p)).collect();
            let (lo, hi) = match schema.properties()[p].bounds {
                Some(b) => (b.min, b.max),
                None if present.is_empty() => (0.0, 0.0),
                None => (
                    present.iter().cloned().fold(f64::INFINITY, f64::min),
                    present.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                ),
            };
            (p, weight, ideal, lo, hi)
        })
        .collect();

    let mut scored: Vec<(String, f64)> = candidates
        .iter()
        .map(|s| {
            let mut total = 0.0;
            for &(p, weight, ideal, lo, hi) in &columns {
                let coord = match s.value(p) {
                    None => 0.0,
                    Some(_) if hi == lo => 0.5,
                    Some(v) => {
                        let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
                        if schema.properties()[p].polarity == Polarity::HigherIsBetter { t } else { 1.0 - t }
                    }
                };
                total += weight * (ideal - coord) * (ideal - coord);
            }
            (s.id.clone(), total.sqrt())
        })
        .collect();
    scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored
}

fn oracle_haversine(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (la1, la2) = (a.lat.to_radians(), b.lat.to_radians());
    let dla = la2 - la1;
    let dlo = (b.lon - a.lon).to_radians();
    let h = (dla / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlo / 2.0).sin().powi(2);
    6_371_000.0 * 2.0 * h.sqrt().atan2((1.0 - h).sqrt())
}

fn oracle_field_matches(s: &SensorRecord, schema: &PropertySchema, field: &Field, lit: &Literal) -> bool {
    match (field, lit) {
        (Field::Id, Literal::Str(x)) => &s.id == x,
        (Field::Type, Literal::Str(x)) => &s.sensor_type == x,
        (Field::Property(p), Literal::Num(x)) => s.value(schema.index_of(p).unwrap()) == Some(*x),
        _ => false,
    }
}

pub fn oracle_predicate(s: &SensorRecord, schema: &PropertySchema, pred: &Predicate) -> bool {
    match pred {
        Predicate::Eq { field, value } => oracle_field_matches(s, schema, field, value),
        Predicate::InSet { field, values } => values.iter().any(|v| oracle_field_matches(s, schema, field, v)),
        Predicate::Range { property, min, max } => match s.value(schema.index_of(property).unwrap()) {
            Some(v) => v >= *min && v <= *max,
            None => false,
        },
        Predicate::WithinRadius { center, radius_m } => oracle_haversine(center, &s.location) <= *radius_m,
        Predicate::WithinBBox(b) => {
            let lat_ok = s.location.lat >= b.south && s.location.lat <= b.north;
            let lon_ok = if b.west <= b.east {
                s.location.lon >= b.west && s.location.lon <= b.east
            } else {
                s.location.lon >= b.west || s.location.lon <= b.east
            };
            lat_ok && lon_ok
        }
    }
}

/// Linear scan over every record, evaluating the AST directly.
pub fn oracle_filter<'a>(snapshot: &'a RegistrySnapshot, query: &PointQuery) -> Vec<&'a SensorRecord> {
    snapshot
        .sensors()
        .iter()
        .filter(|s| query.predicates.iter().all(|p| oracle_predicate(s, snapshot.schema(), p)))
        .collect()
}

/// Random conjunctive query over `schema`, rendered in the text grammar.
pub fn random_query<R: Rng>(rng: &mut R, schema: &PropertySchema, max_n: usize) -> String {
    let mut clauses = Vec::new();
    let names: Vec<&str> = schema.names().collect();
    for _ in 0..rng.gen_range(0..4) {
        let clause = match rng.gen_range(0..6) {
            0 => format!("type = \"{}\"", TYPES.choose(rng).unwrap()),
            1 => {
                let picks: Vec<String> = TYPES.choose_multiple(rng, 2).map(|t| format!("\"{t}\"")).collect();
                format!("type in [{}]", picks.join(", "))
            }
            2 | 3 => {
                let name = names.choose(rng).unwrap();
                let def = schema.get(name).unwrap();
                let (lo, hi) = def.bounds.map_or((0.0, 100.0), |b| (b.min, b.max));
                let a = rng.gen_range(lo..hi);
                let b = rng.gen_range(a..=hi);
                format!("{name} between {a} and {b}")
            }
            4 => format!(
                "within radius({}, {}, {})",
                rng.gen_range(-60.0..60.0),
                rng.gen_range(-180.0..180.0),
                rng.gen_range(1e5..4e6)
            ),
            _ => {
                let s = rng.gen_range(-60.0..30.0);
                let w = rng.gen_range(-180.0..180.0);
                let e = rng.gen_range(-180.0..180.0);
                format!("within bbox({s}, {w}, {}, {e})", s + rng.gen_range(0.0..60.0))
            }
        };
        clauses.push(clause);
    }
    clauses.push(format!("n = {}", rng.gen_range(1..=max_n)));
    clauses.join(" AND ")
}

pub fn ids<'a>(records: impl IntoIterator<Item = &'a SensorRecord>) -> Vec<String> {
    records.into_iter().map(|s| s.id.clone()).collect()
}

pub fn overrides(profile: &PriorityProfile) -> BTreeMap<String, f64> {
    profile.ideal_overrides()
}
