//! Non-confidence escalation baselines: random selection and question
//! length.
//!
//! Both are applied leg by leg. On leg `l` every question has already been
//! escalated to stage `l`, and some subset moves on to stage `l + 1`. The
//! `thresholds` of a baseline point hold the per-leg escalation fraction
//! (random) or escalation count (heuristic).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cascade::{CascadeEvaluator, CascadePolicy};
use crate::curves::{pareto_frontier, AccuracyCostCurve, CurvePoint, CurveReduction};
use crate::error::{Error, Result};
use crate::records::PredictionLog;

/// Expected (cost, accuracy) when a fraction `f` of questions escalates from
/// system `from` to system `to` uniformly at random.
pub fn random_point(from: (f64, f64), to: (f64, f64), f: f64) -> (f64, f64) {
    (from.0 + f * (to.0 - from.0), from.1 + f * (to.1 - from.1))
}

fn leg_params(legs: usize, leg: usize, value: f64, full: f64) -> Vec<f64> {
    (0..legs)
        .map(|l| match l.cmp(&leg) {
            std::cmp::Ordering::Less => full,
            std::cmp::Ordering::Equal => value,
            std::cmp::Ordering::Greater => 0.0,
        })
        .collect()
}

/// Expectation form of the random baseline: a piecewise-linear curve through
/// the per-stage `anchors` (cost, accuracy), sampled at `steps` evenly spaced
/// escalation fractions per leg.
pub fn baseline_random(anchors: &[(f64, f64)], steps: usize) -> Result<AccuracyCostCurve> {
    if anchors.len() < 2 {
        return Err(Error::invalid("random baseline needs at least two anchor points"));
    }
    if steps == 0 {
        return Err(Error::invalid("random baseline needs at least one step per leg"));
    }
    let legs = anchors.len() - 1;
    let mut points = Vec::with_capacity(legs * (steps + 1));
    for (leg, w) in anchors.windows(2).enumerate() {
        for i in 0..=steps {
            let f = i as f64 / steps as f64;
            let (cost, accuracy) = random_point(w[0], w[1], f);
            points.push(CurvePoint {
                cost,
                accuracy,
                thresholds: leg_params(legs, leg, f, 1.0),
            });
        }
    }
    AccuracyCostCurve::from_points(points)
}

/// Pure-system (cost, accuracy) points, one per stage of the template.
pub fn stage_anchors(logs: &PredictionLog, template: &CascadePolicy) -> Result<Vec<(f64, f64)>> {
    let eval = CascadeEvaluator::new(logs, template)?;
    (0..template.stages.len())
        .map(|k| eval.stage_point(k))
        .collect()
}

/// Sampled form of the random baseline: on each leg every question draws
/// one uniform variate and escalates iff it falls below the fraction `f`.
pub fn baseline_random_sampled(
    logs: &PredictionLog,
    template: &CascadePolicy,
    steps: usize,
    seed: u64,
) -> Result<AccuracyCostCurve> {
    if steps == 0 {
        return Err(Error::invalid("random baseline needs at least one step per leg"));
    }
    let legs = template.iterations();
    if legs == 0 {
        return Err(Error::invalid("random baseline needs at least one open-book iteration"));
    }
    let eval = CascadeEvaluator::new(logs, template)?;
    let n = eval.n_questions();
    let mut points = Vec::new();
    for leg in 0..legs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(leg as u64);
        let draws: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        for i in 0..=steps {
            let f = i as f64 / steps as f64;
            let exits: Vec<usize> = draws
                .iter()
                .map(|&u| if u < f { leg + 1 } else { leg })
                .collect();
            let (cost, accuracy) = eval.summarize_exits(&exits)?;
            points.push(CurvePoint {
                cost,
                accuracy,
                thresholds: leg_params(legs, leg, f, 1.0),
            });
        }
    }
    AccuracyCostCurve::from_points(points)
}

/// Escalation priority under the length heuristic: longest question first
/// (in characters), ties broken by qid.
pub fn heuristic_order(questions: &[(&str, &str)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..questions.len()).collect();
    order.sort_by(|&a, &b| {
        let (qa, ta) = questions[a];
        let (qb, tb) = questions[b];
        tb.chars()
            .count()
            .cmp(&ta.chars().count())
            .then_with(|| qa.cmp(qb))
    });
    order
}

/// Question-length baseline: for every cutoff `m` on every leg, escalate the
/// `m` highest-priority questions.
pub fn baseline_heuristic(
    logs: &PredictionLog,
    template: &CascadePolicy,
    reduction: CurveReduction,
) -> Result<AccuracyCostCurve> {
    let legs = template.iterations();
    if legs == 0 {
        return Err(Error::invalid("heuristic baseline needs at least one open-book iteration"));
    }
    let eval = CascadeEvaluator::new(logs, template)?;
    let first = &template.stages[0].name;
    let questions: Vec<(&str, &str)> = eval
        .qids()
        .iter()
        .map(|&qid| {
            let text = logs
                .get(first, qid)
                .map(|r| r.question.as_str())
                .unwrap_or_default();
            (qid, text)
        })
        .collect();
    let order = heuristic_order(&questions);
    let n = questions.len();
    let mut points = Vec::with_capacity(legs * (n + 1));
    for leg in 0..legs {
        let mut exits = vec![leg; n];
        for m in 0..=n {
            if m > 0 {
                exits[order[m - 1]] = leg + 1;
            }
            let (cost, accuracy) = eval.summarize_exits(&exits)?;
            points.push(CurvePoint {
                cost,
                accuracy,
                thresholds: leg_params(legs, leg, m as f64, n as f64),
            });
        }
    }
    match reduction {
        CurveReduction::Pareto => pareto_frontier(points),
        CurveReduction::Raw => AccuracyCostCurve::from_points(points),
    }
}
