//! Heuristic pruning ahead of ranking.
//!
//! Candidates are pruned one property at a time, heaviest weight first: sort
//! by that property (best first) and drop the worst tail. Each stage drops a
//! share of the removable pool proportional to its weight, so the pool left
//! for exact ranking is `ceil(n * (1 + margin/100))` sensors. A larger margin
//! keeps more sensors and recovers more of the exact top-n.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ranking::{RankedResult, WeightVector};
use crate::registry::{PropertySchema, SensorRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CphfError {
    #[error("invalid pruning parameters: {0}")]
    InvalidArgument(String),
    #[error("plan does not fit the input: {0}")]
    PlanMismatch(String),
    #[error("unknown property {0:?}")]
    UnknownProperty(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CphfStage {
    pub property: String,
    pub remove_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CphfPlan {
    /// Heaviest weight first; equal weights by property name.
    pub stages: Vec<CphfStage>,
    pub candidate_count: usize,
    pub n_keep: usize,
    pub n_removable: usize,
    pub margin_percent: f64,
}

/// Size of the pool kept for exact ranking: `min(candidates, ceil(n * (1 + margin/100)))`.
pub fn keep_count(candidate_count: usize, n_requested: usize, margin_percent: f64) -> usize {
    let inflated = (n_requested as f64 * (100.0 + margin_percent) / 100.0).ceil();
    if inflated >= candidate_count as f64 {
        candidate_count
    } else {
        inflated as usize
    }
}

// Weight shares that are exact ratios (0.3 of 90) can land a hair below the
// integer after rounding; this keeps them from losing a whole sensor.
const SHARE_EPSILON: f64 = 1e-9;

pub fn build_plan(
    candidate_count: usize,
    weights: &WeightVector,
    n_requested: usize,
    margin_percent: f64,
) -> Result<CphfPlan, CphfError> {
    if candidate_count == 0 || n_requested == 0 {
        return Err(CphfError::InvalidArgument(
            "candidate count and requested count must be positive".into(),
        ));
    }
    if !(margin_percent.is_finite() && margin_percent >= 0.0) {
        return Err(CphfError::InvalidArgument(format!(
            "margin must be a non-negative number, got {margin_percent}"
        )));
    }
    if weights.is_empty() {
        return Err(CphfError::InvalidArgument("no weighted properties".into()));
    }

    let n_keep = keep_count(candidate_count, n_requested, margin_percent);
    let n_removable = candidate_count - n_keep;

    let mut order: Vec<(&str, f64)> = weights.iter().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut stages: Vec<CphfStage> = order
        .iter()
        .map(|&(property, w)| CphfStage {
            property: property.to_string(),
            remove_count: ((w * n_removable as f64 + SHARE_EPSILON).floor() as usize).min(n_removable),
        })
        .collect();
    let mut assigned: usize = stages.iter().map(|s| s.remove_count).sum();
    // Only reachable if the weights sum noticeably above 1.
    for stage in stages.iter_mut().rev() {
        if assigned <= n_removable {
            break;
        }
        let take = (assigned - n_removable).min(stage.remove_count);
        stage.remove_count -= take;
        assigned -= take;
    }
    stages[0].remove_count += n_removable - assigned;

    Ok(CphfPlan {
        stages,
        candidate_count,
        n_keep,
        n_removable,
        margin_percent,
    })
}

/// Stage sort key: ascending = best first. Missing values sort last.
#[inline]
fn stage_key(value: Option<f64>, higher_is_better: bool) -> f64 {
    match value {
        Some(v) if higher_is_better => -v,
        Some(v) => v,
        None => f64::INFINITY,
    }
}

/// Total best-first order of one stage: key ascending, ties by sensor id.
/// Ids are only looked up on key ties.
#[inline]
fn stage_order(candidates: &[&SensorRecord], a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.partial_cmp(&b.0)
        .expect("stage keys are never NaN")
        .then_with(|| candidates[a.1].id.cmp(&candidates[b.1].id))
}

/// Runs `plan`'s stages over `candidates` and returns the `n_keep` survivors
/// in their input order.
///
/// Each stage sorts survivors best-first on its property (higher-is-better
/// descending, lower-is-better ascending, missing last, ties by id) and drops
/// `remove_count` from the bottom. The cut is found by selection rather than a
/// full sort; the surviving set is the same.
pub fn heuristic_filter<'a>(
    candidates: &[&'a SensorRecord],
    schema: &PropertySchema,
    weights: &WeightVector,
    plan: &CphfPlan,
) -> Result<Vec<&'a SensorRecord>, CphfError> {
    if plan.candidate_count != candidates.len() {
        return Err(CphfError::PlanMismatch(format!(
            "plan built for {} candidates, got {}",
            plan.candidate_count,
            candidates.len()
        )));
    }
    let planned: HashSet<&str> = plan.stages.iter().map(|s| s.property.as_str()).collect();
    if planned.len() != plan.stages.len()
        || planned.len() != weights.len()
        || weights.properties().iter().any(|p| !planned.contains(p.as_str()))
    {
        return Err(CphfError::PlanMismatch("plan stages do not match the weight vector".into()));
    }
    let removals: usize = plan.stages.iter().map(|s| s.remove_count).sum();
    if removals != plan.n_removable || plan.n_keep + plan.n_removable != candidates.len() {
        return Err(CphfError::PlanMismatch("plan counts are inconsistent".into()));
    }

    // Survivor positions stay in ascending input order throughout.
    let mut survivors: Vec<usize> = (0..candidates.len()).collect();
    let mut keys: Vec<f64> = Vec::with_capacity(candidates.len());
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(candidates.len());
    for stage in &plan.stages {
        if stage.remove_count == 0 {
            continue;
        }
        let idx = schema
            .index_of(&stage.property)
            .ok_or_else(|| CphfError::UnknownProperty(stage.property.clone()))?;
        let higher = schema.properties()[idx].polarity.is_higher_better();
        let keep = survivors.len() - stage.remove_count;

        keys.clear();
        keys.extend(survivors.iter().map(|&pos| stage_key(candidates[pos].value(idx), higher)));
        scratch.clear();
        scratch.extend(keys.iter().copied().zip(survivors.iter().copied()));
        // First dropped element; survivors are exactly those ordered before it.
        let (_, &mut cut, _) =
            scratch.select_nth_unstable_by(keep, |&a, &b| stage_order(candidates, a, b));

        let mut write = 0;
        for read in 0..survivors.len() {
            let pos = survivors[read];
            if stage_order(candidates, (keys[read], pos), cut) == Ordering::Less {
                survivors[write] = pos;
                write += 1;
            }
        }
        survivors.truncate(write);
        debug_assert_eq!(survivors.len(), keep);
    }
    Ok(survivors.into_iter().map(|pos| candidates[pos]).collect())
}

/// Fraction of the exact top-n ids that the heuristic top-n recovered.
/// 1.0 when the exact result is empty.
pub fn cphf_accuracy(heuristic_topn: &RankedResult, exact_topn: &RankedResult) -> f64 {
    if exact_topn.is_empty() {
        return 1.0;
    }
    let found: HashSet<&str> = heuristic_topn.ids().collect();
    let hits = exact_topn.ids().filter(|id| found.contains(id)).count();
    hits as f64 / exact_topn.len() as f64
}
