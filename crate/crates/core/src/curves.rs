//! Accuracy-cost curves: threshold sweeps, Pareto reduction, cost-normalized
//! AUC and cost-at-equal-accuracy queries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{CascadeEvaluator, CascadeOutcome, CascadePolicy};
use crate::error::{Error, Result};
use crate::records::PredictionLog;

/// Upper bound on threshold combinations evaluated by [`sweep_multi`].
pub const MAX_GRID_COMBINATIONS: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Mean FLOPs per question.
    pub cost: f64,
    /// Fraction of questions answered correctly.
    pub accuracy: f64,
    /// Parameters that produced the point (escalation thresholds for
    /// cascades, escalation fractions or counts for baselines).
    pub thresholds: Vec<f64>,
}

impl CurvePoint {
    pub fn new(cost: f64, accuracy: f64) -> Self {
        CurvePoint {
            cost,
            accuracy,
            thresholds: Vec::new(),
        }
    }
}

/// Points strictly increasing in cost.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AccuracyCostCurve {
    points: Vec<CurvePoint>,
}

fn check_point(p: &CurvePoint) -> Result<()> {
    if !(p.cost.is_finite() && p.cost >= 0.0) {
        return Err(Error::invalid(format!("curve cost {} must be finite and >= 0", p.cost)));
    }
    if !(0.0..=1.0).contains(&p.accuracy) {
        return Err(Error::invalid(format!("curve accuracy {} outside [0, 1]", p.accuracy)));
    }
    Ok(())
}

impl AccuracyCostCurve {
    /// Sorts by cost and keeps only the most accurate point at each cost.
    /// Among equally good duplicates the earliest input point wins.
    pub fn from_points(mut points: Vec<CurvePoint>) -> Result<Self> {
        points.iter().try_for_each(check_point)?;
        points.sort_by(|a, b| {
            a.cost
                .total_cmp(&b.cost)
                .then_with(|| b.accuracy.total_cmp(&a.accuracy))
        });
        points.dedup_by(|later, kept| later.cost == kept.cost);
        Ok(AccuracyCostCurve { points })
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(min cost, max cost)`.
    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.points.first()?.cost, self.points.last()?.cost))
    }

    pub fn max_accuracy(&self) -> Option<f64> {
        self.points.iter().map(|p| p.accuracy).reduce(f64::max)
    }

    /// Accuracy at `cost` by linear interpolation, constant beyond the ends.
    pub fn accuracy_at(&self, cost: f64) -> Option<f64> {
        let pts = &self.points;
        let first = pts.first()?;
        let last = pts.last()?;
        if cost <= first.cost {
            return Some(first.accuracy);
        }
        if cost >= last.cost {
            return Some(last.accuracy);
        }
        let i = pts.partition_point(|p| p.cost <= cost);
        let (a, b) = (&pts[i - 1], &pts[i]);
        let t = (cost - a.cost) / (b.cost - a.cost);
        Some(a.accuracy + t * (b.accuracy - a.accuracy))
    }

    /// Copy with every cost multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        AccuracyCostCurve {
            points: self
                .points
                .iter()
                .map(|p| CurvePoint {
                    cost: p.cost * factor,
                    ..p.clone()
                })
                .collect(),
        }
    }
}

/// Fraction of outcomes judged correct.
pub fn accuracy(outcomes: &[CascadeOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::invalid("accuracy of an empty outcome set"));
    }
    let mut correct = 0usize;
    for o in outcomes {
        match o.correct {
            Some(true) => correct += 1,
            Some(false) => {}
            None => {
                return Err(Error::invalid(format!(
                    "outcome for {:?} has no correctness (missing gold answers)",
                    o.qid
                )))
            }
        }
    }
    Ok(correct as f64 / outcomes.len() as f64)
}

/// Nondominated subset of `points`, sorted by cost.
///
/// A point is dropped when another point is no more expensive and strictly
/// more accurate, or strictly cheaper and at least as accurate. Exact
/// duplicates collapse to the first occurrence.
pub fn pareto_frontier(points: Vec<CurvePoint>) -> Result<AccuracyCostCurve> {
    let sorted = AccuracyCostCurve::from_points(points)?;
    let mut kept: Vec<CurvePoint> = Vec::new();
    for p in sorted.points {
        if kept.last().is_none_or(|best| p.accuracy > best.accuracy) {
            kept.push(p);
        }
    }
    Ok(AccuracyCostCurve { points: kept })
}

/// Cost-normalized area under the curve over `range` (default: the curve's
/// own span), i.e. the mean accuracy across that cost range.
pub fn auc(curve: &AccuracyCostCurve, range: Option<(f64, f64)>) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::invalid("AUC needs at least two curve points"));
    }
    let (lo, hi) = match range {
        Some(r) => r,
        None => curve.span().expect("non-empty"),
    };
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::invalid(format!("invalid AUC range [{lo}, {hi}]")));
    }
    let mut xs = Vec::with_capacity(curve.len() + 2);
    xs.push(lo);
    xs.extend(
        curve
            .points
            .iter()
            .map(|p| p.cost)
            .filter(|&c| c > lo && c < hi),
    );
    xs.push(hi);
    let f = |c: f64| curve.accuracy_at(c).expect("non-empty");
    let area: f64 = xs
        .windows(2)
        .map(|w| (w[1] - w[0]) * (f(w[0]) + f(w[1])) / 2.0)
        .sum();
    Ok(area / (hi - lo))
}

/// Union of the curves' cost spans, for comparing AUCs on a common range.
pub fn common_range<'a>(curves: impl IntoIterator<Item = &'a AccuracyCostCurve>) -> Option<(f64, f64)> {
    curves
        .into_iter()
        .filter_map(AccuracyCostCurve::span)
        .reduce(|(a, b), (c, d)| (a.min(c), b.max(d)))
}

/// Smallest cost on the curve whose interpolated accuracy reaches `target`.
pub fn cost_at_accuracy(curve: &AccuracyCostCurve, target: f64) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::invalid("cost-at-accuracy needs at least two curve points"));
    }
    let pts = &curve.points;
    if pts[0].accuracy >= target {
        return Ok(pts[0].cost);
    }
    for w in pts.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.accuracy >= target {
            let t = (target - a.accuracy) / (b.accuracy - a.accuracy);
            return Ok(a.cost + t * (b.cost - a.cost));
        }
    }
    Err(Error::TargetUnreachable {
        target,
        max: curve.max_accuracy().unwrap_or(f64::NAN),
    })
}

/// Whether sweeps return every evaluated point (deduplicated by cost) or
/// only the Pareto frontier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CurveReduction {
    #[default]
    Pareto,
    Raw,
}

fn reduce(points: Vec<CurvePoint>, reduction: CurveReduction) -> Result<AccuracyCostCurve> {
    match reduction {
        CurveReduction::Pareto => pareto_frontier(points),
        CurveReduction::Raw => AccuracyCostCurve::from_points(points),
    }
}

/// Threshold just above every observed confidence: with strict-`<`
/// escalation it sends every question onward.
pub fn above_max(confidences: &[f64]) -> f64 {
    confidences
        .iter()
        .cloned()
        .fold(0.0, f64::max)
        .next_up()
}

fn sorted_distinct(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
}

/// Distinct observed confidences plus the sentinels `0` and [`above_max`].
pub fn k1_candidates(confidences: &[f64]) -> Vec<f64> {
    let mut all = confidences.to_vec();
    all.push(0.0);
    all.push(above_max(confidences));
    sorted_distinct(all)
}

fn require_k(policy: &CascadePolicy, want: impl Fn(usize) -> bool, what: &str) -> Result<()> {
    if want(policy.iterations()) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{what}, policy has K = {}",
            policy.iterations()
        )))
    }
}

/// One point per candidate closed-book threshold, in ascending threshold
/// order. The first point is the pure closed-book system and the last the
/// pure open-book one.
pub fn sweep_k1_points(logs: &PredictionLog, template: &CascadePolicy) -> Result<Vec<CurvePoint>> {
    require_k(template, |k| k == 1, "exhaustive sweep needs exactly one open-book iteration")?;
    let eval = CascadeEvaluator::new(logs, template)?;
    // The two sentinels route everyone to one stage, so these surface any
    // missing record or gold answer the sweep would hit.
    eval.stage_point(0)?;
    eval.stage_point(1)?;
    let n = eval.n_questions();
    let confidences = eval.stage_confidences(0);
    let mut correct = 0i64;
    let mut gain = Vec::with_capacity(n);
    for q in 0..n {
        let cb = i64::from(eval.correct_at(q, 0)?);
        correct += cb;
        gain.push(i64::from(eval.correct_at(q, 1)?) - cb);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| confidences[a].total_cmp(&confidences[b]));

    // Candidates ascend, so the escalated set only grows.
    let mut escalated = 0;
    Ok(k1_candidates(&confidences)
        .into_iter()
        .map(|tau| {
            while escalated < n && confidences[order[escalated]] < tau {
                correct += gain[order[escalated]];
                escalated += 1;
            }
            CurvePoint {
                cost: eval.mean_exit_cost(&[n - escalated, escalated]),
                accuracy: correct as f64 / n as f64,
                thresholds: vec![tau],
            }
        })
        .collect())
}

/// Exhaustive accuracy-cost curve for a closed-book + one open-book cascade.
pub fn build_curve_k1(
    logs: &PredictionLog,
    template: &CascadePolicy,
    reduction: CurveReduction,
) -> Result<AccuracyCostCurve> {
    reduce(sweep_k1_points(logs, template)?, reduction)
}

/// Per-stage threshold candidates for multi-iteration sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    /// `g >= 2` evenly spaced quantiles of each stage's observed confidences.
    Quantiles(usize),
    /// Every distinct observed confidence.
    AllDistinct,
}

/// `g` evenly spaced order statistics (nearest rank) of `values`.
pub fn quantiles(values: &[f64], g: usize) -> Vec<f64> {
    let mut all = values.to_vec();
    all.sort_by(f64::total_cmp);
    if all.is_empty() || g == 0 {
        return Vec::new();
    }
    if g == 1 {
        return vec![all[0]];
    }
    let n = all.len();
    let picks: Vec<f64> = (0..g)
        .map(|j| all[(j * (n - 1) + (g - 1) / 2) / (g - 1)])
        .collect();
    sorted_distinct(picks)
}

/// Candidate thresholds for one stage under `grid`, sentinels included.
pub fn grid_candidates(confidences: &[f64], grid: Grid) -> Vec<f64> {
    let mut c = match grid {
        Grid::Quantiles(g) => quantiles(confidences, g),
        Grid::AllDistinct => confidences.to_vec(),
    };
    c.push(0.0);
    c.push(above_max(confidences));
    sorted_distinct(c)
}

/// Every point of the Cartesian threshold grid, ordered lexicographically by
/// threshold vector.
pub fn sweep_multi_points(
    logs: &PredictionLog,
    template: &CascadePolicy,
    grid: Grid,
) -> Result<Vec<CurvePoint>> {
    if let Grid::Quantiles(g) = grid {
        if g < 2 {
            return Err(Error::invalid(format!("grid resolution must be >= 2, got {g}")));
        }
    }
    let eval = CascadeEvaluator::new(logs, template)?;
    let k = template.iterations();
    let axes: Vec<Vec<f64>> = (0..k)
        .map(|stage| grid_candidates(&eval.stage_confidences(stage), grid))
        .collect();
    let combinations = axes
        .iter()
        .try_fold(1u128, |acc, a| acc.checked_mul(a.len() as u128))
        .unwrap_or(u128::MAX);
    if combinations > MAX_GRID_COMBINATIONS {
        return Err(Error::GridTooLarge {
            combinations,
            limit: MAX_GRID_COMBINATIONS,
        });
    }
    log::debug!("sweeping {combinations} threshold combinations over {k} stages");
    (0..combinations as usize)
        .into_par_iter()
        .map(|mut index| {
            let mut taus = vec![0.0; k];
            for (slot, axis) in taus.iter_mut().zip(&axes).rev() {
                *slot = axis[index % axis.len()];
                index /= axis.len();
            }
            eval.point(&taus)
        })
        .collect()
}

/// Pareto frontier over a per-stage threshold grid, for any `K >= 1`.
pub fn sweep_multi(
    logs: &PredictionLog,
    template: &CascadePolicy,
    grid: Grid,
    reduction: CurveReduction,
) -> Result<AccuracyCostCurve> {
    require_k(template, |k| k >= 1, "threshold sweep needs at least one open-book iteration")?;
    reduce(sweep_multi_points(logs, template, grid)?, reduction)
}
