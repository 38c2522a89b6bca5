//! Experiment harness: phase timing, property scaling, pruning speedup and
//! pruning accuracy over synthetic catalogs, reported as CSV tables.
//!
//! Timings are wall-clock microseconds and vary run to run. Accuracy values
//! depend only on the seeds.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cphf::{cphf_accuracy, keep_count};
use crate::geo::BoundingBox;
use crate::pipeline::{search, PhaseTimings, SearchError, SearchRequest, SearchResponse};
use crate::ranking::{PriorityProfile, RankedEntry, RankedResult};
use crate::registry::{
    generate_synthetic, schema_with_property_count, Bounds, PropertySchema, RegistryError, RegistrySnapshot,
};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    PhaseTiming,
    PropertyScaling,
    CphfSpeedup,
    AccuracyVsMargin,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [
        Experiment::PhaseTiming,
        Experiment::PropertyScaling,
        Experiment::CphfSpeedup,
        Experiment::AccuracyVsMargin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::PhaseTiming => "phase-timing",
            Experiment::PropertyScaling => "property-scaling",
            Experiment::CphfSpeedup => "cphf-speedup",
            Experiment::AccuracyVsMargin => "accuracy-vs-margin",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == norm)
            .ok_or_else(|| {
                format!(
                    "unknown experiment {s:?}; expected one of {}",
                    Experiment::ALL.map(Experiment::name).join(", ")
                )
            })
    }
}

pub const DEFAULT_REPETITIONS: usize = 10;
pub const DEFAULT_N_REQUESTED: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub sensor_counts: Vec<usize>,
    pub property_counts: Vec<usize>,
    /// Always-true range predicates added to the query by the timing
    /// experiments, so filter cost can be swept at a fixed candidate count.
    #[serde(default = "no_predicates")]
    pub predicate_counts: Vec<usize>,
    pub n_requested: usize,
    /// Margins for the pruning experiments.
    pub margins: Vec<f64>,
    /// One synthetic catalog per seed.
    pub seeds: Vec<u64>,
    pub repetitions: usize,
    /// Seed for the priority profile, shared by every catalog.
    pub profile_seed: u64,
}

fn no_predicates() -> Vec<usize> {
    vec![0]
}

impl ExperimentSpec {
    pub fn new(experiment: Experiment) -> Self {
        let base = Self {
            experiment,
            sensor_counts: vec![1_000, 10_000, 100_000],
            property_counts: vec![30],
            predicate_counts: no_predicates(),
            n_requested: DEFAULT_N_REQUESTED,
            margins: vec![0.0],
            seeds: vec![42],
            repetitions: DEFAULT_REPETITIONS,
            profile_seed: 7,
        };
        match experiment {
            Experiment::PhaseTiming => base,
            Experiment::PropertyScaling => Self {
                property_counts: vec![5, 10, 20, 30],
                ..base
            },
            Experiment::CphfSpeedup => Self {
                sensor_counts: vec![1_000, 10_000, 100_000, 1_000_000],
                ..base
            },
            Experiment::AccuracyVsMargin => Self {
                sensor_counts: vec![100_000],
                margins: vec![0.0, 25.0, 50.0, 100.0, 200.0],
                seeds: (0..20).collect(),
                repetitions: 1,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |m: &str| Err(BenchError::InvalidSpec(m.to_string()));
        if self.sensor_counts.is_empty() || self.sensor_counts.contains(&0) {
            return fail("sensor_counts must be non-empty and positive");
        }
        if self.property_counts.is_empty() || self.property_counts.contains(&0) {
            return fail("property_counts must be non-empty and positive");
        }
        if self.predicate_counts.is_empty() {
            return fail("predicate_counts must be non-empty");
        }
        if self.seeds.is_empty() {
            return fail("seeds must be non-empty");
        }
        if self.repetitions == 0 {
            return fail("repetitions must be at least 1");
        }
        if self.n_requested == 0 {
            return fail("n_requested must be at least 1");
        }
        let pruning = matches!(self.experiment, Experiment::CphfSpeedup | Experiment::AccuracyVsMargin);
        if pruning && self.margins.is_empty() {
            return fail("margins must be non-empty");
        }
        if self.margins.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return fail("margins must be non-negative");
        }
        Ok(())
    }
}

/// Every property checked, sliders uniform on `1..=scale`.
pub fn seeded_profile(schema: &PropertySchema, seed: u64) -> PriorityProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut profile = PriorityProfile::default();
    for name in schema.names() {
        let slider = rng.gen_range(1..=profile.scale);
        profile = profile.check(name, slider);
    }
    profile
}

fn match_all(n: usize) -> String {
    format!("n = {n}")
}

/// `predicates` range clauses spanning the full generated range, cycling over
/// the schema's properties. Every synthetic sensor satisfies all of them.
fn full_range_query(schema: &PropertySchema, predicates: usize, n: usize) -> String {
    let mut clauses: Vec<String> = schema
        .properties()
        .iter()
        .cycle()
        .take(predicates)
        .map(|p| {
            let b = p.bounds.unwrap_or(Bounds::UNIT);
            format!("{} between {} and {}", p.name, b.min, b.max)
        })
        .collect();
    clauses.push(match_all(n));
    clauses.join(" AND ")
}

/// The results of a response as a ranked list, for accuracy comparisons.
pub fn as_ranked(response: &SearchResponse) -> RankedResult {
    RankedResult {
        entries: response
            .results
            .iter()
            .map(|r| RankedEntry {
                sensor_id: r.sensor_id.clone(),
                cpwi: r.cpwi,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and sample standard deviation.
    pub fn of(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let std = if samples.len() < 2 {
            0.0
        } else {
            (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

fn phase_stats(samples: &[PhaseTimings], phase: &str) -> Stat {
    let values: Vec<f64> = samples.iter().map(|t| t.phase(phase).expect("known phase")).collect();
    Stat::of(&values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub sensors: usize,
    pub properties: usize,
    pub predicates: usize,
    pub n_requested: usize,
    pub samples: usize,
    pub filter_mean_us: f64,
    pub filter_std_us: f64,
    pub normalize_mean_us: f64,
    pub normalize_std_us: f64,
    pub index_mean_us: f64,
    pub index_std_us: f64,
    pub rank_mean_us: f64,
    pub rank_std_us: f64,
    pub select_mean_us: f64,
    pub select_std_us: f64,
    pub total_mean_us: f64,
    pub total_std_us: f64,
    pub index_rank_mean_us: f64,
    pub candidates_indexed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub sensors: usize,
    pub properties: usize,
    pub n_requested: usize,
    pub margin_percent: f64,
    pub samples: usize,
    pub exact_total_mean_us: f64,
    pub exact_total_std_us: f64,
    pub cphf_total_mean_us: f64,
    pub cphf_total_std_us: f64,
    pub exact_index_rank_mean_us: f64,
    pub cphf_prune_mean_us: f64,
    pub cphf_index_rank_mean_us: f64,
    pub exact_candidates_indexed: usize,
    pub cphf_candidates_indexed: usize,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub sensors: usize,
    pub properties: usize,
    pub n_requested: usize,
    pub margin_percent: f64,
    pub n_keep: usize,
    pub seeds: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub accuracy_min: f64,
    pub exact_total_mean_us: f64,
    pub cphf_total_mean_us: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentResult {
    Timing(Vec<TimingRow>),
    Speedup(Vec<SpeedupRow>),
    Accuracy(Vec<AccuracyRow>),
}

impl ExperimentResult {
    pub fn len(&self) -> usize {
        match self {
            ExperimentResult::Timing(r) => r.len(),
            ExperimentResult::Speedup(r) => r.len(),
            ExperimentResult::Accuracy(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One header row, then one row per parameter combination.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), BenchError> {
        fn rows<W: Write, T: Serialize>(sink: W, rows: &[T]) -> Result<(), BenchError> {
            let mut w = csv::Writer::from_writer(sink);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush().map_err(csv::Error::from)?;
            Ok(())
        }
        match self {
            ExperimentResult::Timing(r) => rows(sink, r),
            ExperimentResult::Speedup(r) => rows(sink, r),
            ExperimentResult::Accuracy(r) => rows(sink, r),
        }
    }

    pub fn to_csv_string(&self) -> Result<String, BenchError> {
        let mut out = Vec::new();
        self.write_csv(&mut out)?;
        Ok(String::from_utf8(out).expect("csv output is UTF-8"))
    }
}

fn catalog(count: usize, properties: usize, seed: u64) -> Result<RegistrySnapshot, BenchError> {
    let schema = schema_with_property_count(properties)?;
    Ok(generate_synthetic(count, &schema, seed, BoundingBox::WORLD)?)
}

/// Runs one experiment and returns its rows.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, BenchError> {
    spec.validate()?;
    match spec.experiment {
        Experiment::PhaseTiming | Experiment::PropertyScaling => run_timing(spec).map(ExperimentResult::Timing),
        Experiment::CphfSpeedup => run_speedup(spec).map(ExperimentResult::Speedup),
        Experiment::AccuracyVsMargin => run_accuracy(spec).map(ExperimentResult::Accuracy),
    }
}

fn run_timing(spec: &ExperimentSpec) -> Result<Vec<TimingRow>, BenchError> {
    let mut rows = Vec::new();
    for (&count, &predicates) in spec
        .sensor_counts
        .iter()
        .flat_map(|c| spec.predicate_counts.iter().map(move |p| (c, p)))
    {
        let widths = spec.property_counts.len();
        let mut samples: Vec<Vec<PhaseTimings>> = vec![Vec::new(); widths];
        let mut indexed = vec![0; widths];
        for &seed in &spec.seeds {
            let mut runs = Vec::with_capacity(widths);
            for &properties in &spec.property_counts {
                let snapshot = catalog(count, properties, seed)?;
                let request = SearchRequest::new(
                    full_range_query(snapshot.schema(), predicates, spec.n_requested),
                    seeded_profile(snapshot.schema(), spec.profile_seed),
                );
                search(&snapshot, &request)?; // warm-up
                runs.push((snapshot, request));
            }
            // Property counts take turns so slow drift affects every width alike.
            for _ in 0..spec.repetitions {
                for (w, (snapshot, request)) in runs.iter().enumerate() {
                    let response = search(snapshot, request)?;
                    indexed[w] = response.candidates_indexed;
                    samples[w].push(response.phase_timings);
                }
            }
        }
        for (w, &properties) in spec.property_counts.iter().enumerate() {
            let samples = &samples[w];
            let s = |p| phase_stats(samples, p);
            let index_rank: Vec<f64> = samples.iter().map(|t| t.index + t.rank).collect();
            rows.push(TimingRow {
                sensors: count,
                properties,
                predicates,
                n_requested: spec.n_requested,
                samples: samples.len(),
                filter_mean_us: s("filter").mean,
                filter_std_us: s("filter").std,
                normalize_mean_us: s("normalize").mean,
                normalize_std_us: s("normalize").std,
                index_mean_us: s("index").mean,
                index_std_us: s("index").std,
                rank_mean_us: s("rank").mean,
                rank_std_us: s("rank").std,
                select_mean_us: s("select").mean,
                select_std_us: s("select").std,
                total_mean_us: s("total").mean,
                total_std_us: s("total").std,
                index_rank_mean_us: Stat::of(&index_rank).mean,
                candidates_indexed: indexed[w],
            });
        }
    }
    Ok(rows)
}

fn run_speedup(spec: &ExperimentSpec) -> Result<Vec<SpeedupRow>, BenchError> {
    let mut rows = Vec::new();
    for &count in &spec.sensor_counts {
        for &properties in &spec.property_counts {
            for &margin in &spec.margins {
                let mut exact = Vec::new();
                let mut pruned = Vec::new();
                let (mut exact_indexed, mut cphf_indexed) = (0, 0);
                for &seed in &spec.seeds {
                    let snapshot = catalog(count, properties, seed)?;
                    let exact_req = SearchRequest::new(
                        match_all(spec.n_requested),
                        seeded_profile(snapshot.schema(), spec.profile_seed),
                    );
                    let cphf_req = exact_req.clone().with_cphf(margin);
                    search(&snapshot, &exact_req)?;
                    search(&snapshot, &cphf_req)?;
                    // Interleaved so slow drift affects both modes alike.
                    for _ in 0..spec.repetitions {
                        let e = search(&snapshot, &exact_req)?;
                        let c = search(&snapshot, &cphf_req)?;
                        exact_indexed = e.candidates_indexed;
                        cphf_indexed = c.candidates_indexed;
                        exact.push(e.phase_timings);
                        pruned.push(c.phase_timings);
                    }
                }
                let exact_total = phase_stats(&exact, "total");
                let cphf_total = phase_stats(&pruned, "total");
                let index_rank = |v: &[PhaseTimings]| Stat::of(&v.iter().map(|t| t.index + t.rank).collect::<Vec<_>>()).mean;
                rows.push(SpeedupRow {
                    sensors: count,
                    properties,
                    n_requested: spec.n_requested,
                    margin_percent: margin,
                    samples: exact.len(),
                    exact_total_mean_us: exact_total.mean,
                    exact_total_std_us: exact_total.std,
                    cphf_total_mean_us: cphf_total.mean,
                    cphf_total_std_us: cphf_total.std,
                    exact_index_rank_mean_us: index_rank(&exact),
                    cphf_prune_mean_us: phase_stats(&pruned, "cphf").mean,
                    cphf_index_rank_mean_us: index_rank(&pruned),
                    exact_candidates_indexed: exact_indexed,
                    cphf_candidates_indexed: cphf_indexed,
                    speedup: if cphf_total.mean > 0.0 {
                        exact_total.mean / cphf_total.mean
                    } else {
                        f64::NAN
                    },
                });
            }
        }
    }
    Ok(rows)
}

fn run_accuracy(spec: &ExperimentSpec) -> Result<Vec<AccuracyRow>, BenchError> {
    let mut rows = Vec::new();
    for &count in &spec.sensor_counts {
        for &properties in &spec.property_counts {
            // [margin][seed]
            let mut accuracy = vec![Vec::with_capacity(spec.seeds.len()); spec.margins.len()];
            let mut cphf_time = vec![Vec::new(); spec.margins.len()];
            let mut exact_time = Vec::new();
            for &seed in &spec.seeds {
                let snapshot = catalog(count, properties, seed)?;
                let exact_req = SearchRequest::new(
                    match_all(spec.n_requested),
                    seeded_profile(snapshot.schema(), spec.profile_seed),
                );
                let exact = search(&snapshot, &exact_req)?;
                exact_time.push(exact.phase_timings.total);
                let exact_top = as_ranked(&exact);
                for (m, &margin) in spec.margins.iter().enumerate() {
                    let pruned = search(&snapshot, &exact_req.clone().with_cphf(margin))?;
                    accuracy[m].push(cphf_accuracy(&as_ranked(&pruned), &exact_top));
                    cphf_time[m].push(pruned.phase_timings.total);
                }
            }
            for (m, &margin) in spec.margins.iter().enumerate() {
                let acc = Stat::of(&accuracy[m]);
                rows.push(AccuracyRow {
                    sensors: count,
                    properties,
                    n_requested: spec.n_requested,
                    margin_percent: margin,
                    n_keep: keep_count(count, spec.n_requested, margin),
                    seeds: spec.seeds.len(),
                    accuracy_mean: acc.mean,
                    accuracy_std: acc.std,
                    accuracy_min: accuracy[m].iter().copied().fold(f64::INFINITY, f64::min),
                    exact_total_mean_us: Stat::of(&exact_time).mean,
                    cphf_total_mean_us: Stat::of(&cphf_time[m]).mean,
                });
            }
        }
    }
    Ok(rows)
}
