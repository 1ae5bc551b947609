//! Escalation decisions and the offline cascade executor.
//!
//! A cascade starts with a closed-book stage and then runs open-book
//! iterations over strictly growing passage sets. After each non-final stage
//! the prediction's confidence is compared against that stage's threshold:
//! the question escalates iff `confidence < threshold`. Ties stay at the
//! cheaper stage, a threshold of 0 never escalates, and the final stage
//! answers unconditionally.

use std::collections::HashSet;
use std::convert::Infallible;

use serde::{Deserialize, Serialize};

use crate::cost::{instance_cost, CostModel, EscalationPath, StageKind};
use crate::curves::CurvePoint;
use crate::error::{Error, PolicyError, Result};
use crate::prediction::{exact_match, ConfidenceMethod, PredictionRecord};
use crate::records::PredictionLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    /// Stage id; matches the `stage` field of prediction records.
    pub name: String,
    pub kind: StageKind,
    /// Passages read by the stage (0 for closed-book).
    #[serde(default)]
    pub passages: u32,
    /// Escalation threshold; absent on the final stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl StageSpec {
    pub fn closed_book(name: impl Into<String>, threshold: Option<f64>) -> Self {
        StageSpec {
            name: name.into(),
            kind: StageKind::ClosedBook,
            passages: 0,
            threshold,
        }
    }

    pub fn open_book(name: impl Into<String>, passages: u32, threshold: Option<f64>) -> Self {
        StageSpec {
            name: name.into(),
            kind: StageKind::OpenBook,
            passages,
            threshold,
        }
    }
}

/// A closed-book stage followed by `K >= 0` open-book iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadePolicy {
    pub stages: Vec<StageSpec>,
    pub method: ConfidenceMethod,
    pub cost: CostModel,
}

impl CascadePolicy {
    pub fn new(stages: Vec<StageSpec>, method: ConfidenceMethod, cost: CostModel) -> Result<Self> {
        let policy = CascadePolicy {
            stages,
            method,
            cost,
        };
        validate_policy(&policy)?;
        Ok(policy)
    }

    /// Number of open-book iterations `K`.
    pub fn iterations(&self) -> usize {
        self.stages.len().saturating_sub(1)
    }

    /// `S_1..S_K`.
    pub fn ob_passages(&self) -> Vec<u32> {
        self.stages.iter().skip(1).map(|s| s.passages).collect()
    }

    /// Thresholds of the non-final stages. Missing ones read as NaN, which
    /// never satisfies `confidence >= threshold`.
    pub fn thresholds(&self) -> Vec<f64> {
        self.stages
            .iter()
            .take(self.iterations())
            .map(|s| s.threshold.unwrap_or(f64::NAN))
            .collect()
    }

    /// Copy of this policy with new non-final thresholds.
    pub fn with_thresholds(&self, thresholds: &[f64]) -> Result<Self> {
        if thresholds.len() != self.iterations() {
            return Err(Error::invalid(format!(
                "expected {} thresholds, got {}",
                self.iterations(),
                thresholds.len()
            )));
        }
        let mut policy = self.clone();
        for (stage, &t) in policy.stages.iter_mut().zip(thresholds) {
            stage.threshold = Some(t);
        }
        validate_policy(&policy)?;
        Ok(policy)
    }

    /// Reader cost of a question that answers at `exit_stage`.
    pub fn exit_cost(&self, exit_stage: usize) -> f64 {
        let path = EscalationPath::from_exit(self.ob_passages(), exit_stage)
            .expect("stage layout checked at construction");
        instance_cost(&self.cost, &path)
    }
}

/// Stage layout checks shared by full validation and threshold sweeps
/// (which ignore the template's thresholds).
pub fn validate_layout(stages: &[StageSpec]) -> Result<(), PolicyError> {
    let Some(first) = stages.first() else {
        return Err(PolicyError::NoStages);
    };
    if first.kind != StageKind::ClosedBook {
        return Err(PolicyError::FirstStageNotClosedBook {
            stage: first.name.clone(),
        });
    }
    let mut names = HashSet::new();
    let mut prev = 0;
    for (i, stage) in stages.iter().enumerate() {
        if !names.insert(stage.name.as_str()) {
            return Err(PolicyError::DuplicateStageName {
                stage: stage.name.clone(),
            });
        }
        match stage.kind {
            StageKind::ClosedBook if i > 0 => {
                return Err(PolicyError::MisplacedClosedBook {
                    stage: stage.name.clone(),
                })
            }
            StageKind::ClosedBook if stage.passages != 0 => {
                return Err(PolicyError::ClosedBookPassages {
                    stage: stage.name.clone(),
                    passages: stage.passages,
                })
            }
            StageKind::ClosedBook => {}
            StageKind::OpenBook => {
                if stage.passages <= prev {
                    return Err(PolicyError::NonIncreasingPassages {
                        stage: stage.name.clone(),
                        previous: prev,
                        passages: stage.passages,
                    });
                }
                prev = stage.passages;
            }
        }
    }
    Ok(())
}

/// Checks every policy invariant, reporting the first violation.
pub fn validate_policy(policy: &CascadePolicy) -> Result<(), PolicyError> {
    validate_layout(&policy.stages)?;
    let last = policy.stages.len() - 1;
    for (i, stage) in policy.stages.iter().enumerate() {
        match (i == last, stage.threshold) {
            (true, Some(_)) => {
                return Err(PolicyError::ThresholdOnFinalStage {
                    stage: stage.name.clone(),
                })
            }
            (false, None) => {
                return Err(PolicyError::MissingThreshold {
                    stage: stage.name.clone(),
                })
            }
            (false, Some(t)) if !(0.0..=1.0).contains(&t) => {
                return Err(PolicyError::ThresholdOutOfRange {
                    stage: stage.name.clone(),
                    value: t,
                })
            }
            _ => {}
        }
    }
    Ok(())
}

/// Index of the first non-final stage whose confidence meets its threshold,
/// or the final stage index `thresholds.len()` if none does.
///
/// `confidences` must cover every stage the decision reaches.
pub fn decide_exit(confidences: &[f64], thresholds: &[f64]) -> usize {
    decide_exit_with(thresholds, |i| Ok::<_, Infallible>(confidences[i]))
        .unwrap_or_else(|e| match e {})
}

/// Lazy form of [`decide_exit`]: `confidence_at(i)` is only called for
/// stages the question actually reaches, in order.
pub fn decide_exit_with<E>(
    thresholds: &[f64],
    mut confidence_at: impl FnMut(usize) -> Result<f64, E>,
) -> Result<usize, E> {
    for (i, &tau) in thresholds.iter().enumerate() {
        if confidence_at(i)? >= tau {
            return Ok(i);
        }
    }
    Ok(thresholds.len())
}

/// Result of running one question through a cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeOutcome {
    pub qid: String,
    pub exit_stage: usize,
    pub exit_stage_name: String,
    pub prediction: String,
    pub confidence_at_exit: f64,
    pub path: EscalationPath,
    /// FLOPs charged for this question.
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

pub(crate) fn make_outcome(
    policy: &CascadePolicy,
    qid: &str,
    exit_stage: usize,
    prediction: &str,
    confidence_at_exit: f64,
    correct: Option<bool>,
) -> CascadeOutcome {
    let path = EscalationPath::from_exit(policy.ob_passages(), exit_stage)
        .expect("stage layout checked at construction");
    let cost = instance_cost(&policy.cost, &path);
    CascadeOutcome {
        qid: qid.to_string(),
        exit_stage,
        exit_stage_name: policy.stages[exit_stage].name.clone(),
        prediction: prediction.to_string(),
        confidence_at_exit,
        path,
        cost,
        correct,
    }
}

/// Runs a validated policy over logged per-stage predictions.
///
/// Questions are those logged for the first stage, processed in qid order.
/// Records for stages after a question's exit are never read or charged.
pub fn run_offline(logs: &PredictionLog, policy: &CascadePolicy) -> Result<Vec<CascadeOutcome>> {
    validate_policy(policy)?;
    let evaluator = CascadeEvaluator::new(logs, policy)?;
    evaluator.outcomes(&policy.thresholds())
}

#[derive(Debug, Clone, Copy)]
struct StageObservation {
    confidence: f64,
    correct: Option<bool>,
}

/// Precomputed confidences and correctness for a log under a policy's
/// stage layout, so many threshold vectors can be evaluated cheaply.
///
/// The policy's own thresholds are ignored; callers pass them explicitly.
#[derive(Debug)]
pub struct CascadeEvaluator<'a> {
    logs: &'a PredictionLog,
    policy: &'a CascadePolicy,
    qids: Vec<&'a str>,
    table: Vec<Vec<Option<StageObservation>>>,
    exit_costs: Vec<f64>,
}

impl<'a> CascadeEvaluator<'a> {
    pub fn new(logs: &'a PredictionLog, policy: &'a CascadePolicy) -> Result<Self> {
        validate_layout(&policy.stages)?;
        let first = &policy.stages[0].name;
        let qids: Vec<&str> = match logs.stage(first) {
            Some(s) => s.keys().map(String::as_str).collect(),
            None if logs.is_empty() => Vec::new(),
            None => {
                return Err(Error::invalid(format!(
                    "log has no records for first stage {first:?}"
                )))
            }
        };
        let table = qids
            .iter()
            .map(|qid| {
                let records: Vec<Option<&PredictionRecord>> = policy
                    .stages
                    .iter()
                    .map(|s| logs.get(&s.name, qid))
                    .collect();
                let fallback_gold = records
                    .iter()
                    .flatten()
                    .find_map(|r| r.gold.as_ref().filter(|g| !g.is_empty()));
                records
                    .iter()
                    .map(|r| {
                        r.map(|r| {
                            let gold = r.gold.as_ref().filter(|g| !g.is_empty()).or(fallback_gold);
                            StageObservation {
                                confidence: r.confidence(policy.method),
                                correct: gold.and_then(|g| exact_match(&r.prediction, g).ok()),
                            }
                        })
                    })
                    .collect()
            })
            .collect();
        let exit_costs = (0..policy.stages.len())
            .map(|k| policy.exit_cost(k))
            .collect();
        Ok(CascadeEvaluator {
            logs,
            policy,
            qids,
            table,
            exit_costs,
        })
    }

    pub fn policy(&self) -> &CascadePolicy {
        self.policy
    }

    pub fn qids(&self) -> &[&'a str] {
        &self.qids
    }

    pub fn n_questions(&self) -> usize {
        self.qids.len()
    }

    /// Cost of a question answering at each stage.
    pub fn exit_costs(&self) -> &[f64] {
        &self.exit_costs
    }

    /// Confidences logged for `stage` across the question set, in qid order.
    pub fn stage_confidences(&self, stage: usize) -> Vec<f64> {
        self.table
            .iter()
            .filter_map(|row| row[stage].map(|o| o.confidence))
            .collect()
    }

    fn observation(&self, q: usize, stage: usize) -> Result<StageObservation> {
        self.table[q][stage].ok_or_else(|| Error::MissingStageRecord {
            qid: self.qids[q].to_string(),
            stage: self.policy.stages[stage].name.clone(),
        })
    }

    fn check_thresholds(&self, thresholds: &[f64]) -> Result<()> {
        if thresholds.len() != self.policy.iterations() {
            return Err(Error::invalid(format!(
                "expected {} thresholds, got {}",
                self.policy.iterations(),
                thresholds.len()
            )));
        }
        Ok(())
    }

    fn exit_of(&self, q: usize, thresholds: &[f64]) -> Result<usize> {
        let exit = decide_exit_with(thresholds, |i| self.observation(q, i).map(|o| o.confidence))?;
        // the answering stage must have been logged too
        self.observation(q, exit)?;
        Ok(exit)
    }

    /// Exit stage of every question, in qid order.
    pub fn exits(&self, thresholds: &[f64]) -> Result<Vec<usize>> {
        self.check_thresholds(thresholds)?;
        (0..self.qids.len())
            .map(|q| self.exit_of(q, thresholds))
            .collect()
    }

    /// Whether question `q` is answered correctly at `stage`.
    pub(crate) fn correct_at(&self, q: usize, stage: usize) -> Result<bool> {
        self.observation(q, stage)?.correct.ok_or_else(|| {
            Error::invalid(format!("question {:?} has no gold answers", self.qids[q]))
        })
    }

    /// Mean cost given how many questions exit at each stage. Summing per
    /// stage rather than per question keeps the result independent of
    /// question order, so incremental sweeps reproduce it bit for bit.
    pub(crate) fn mean_exit_cost(&self, exit_counts: &[usize]) -> f64 {
        let n: usize = exit_counts.iter().sum();
        let total: f64 = exit_counts
            .iter()
            .zip(&self.exit_costs)
            .map(|(&m, &c)| m as f64 * c)
            .sum();
        total / n as f64
    }

    /// Mean cost and accuracy when each question answers at the given stage.
    pub fn summarize_exits(&self, exits: &[usize]) -> Result<(f64, f64)> {
        if exits.len() != self.qids.len() {
            return Err(Error::invalid("one exit stage per question required"));
        }
        if exits.is_empty() {
            return Err(Error::invalid("no questions to evaluate"));
        }
        let mut counts = vec![0usize; self.exit_costs.len()];
        let mut correct = 0usize;
        for (q, &exit) in exits.iter().enumerate() {
            if exit >= self.exit_costs.len() {
                return Err(Error::invalid(format!("exit stage {exit} out of range")));
            }
            correct += usize::from(self.correct_at(q, exit)?);
            counts[exit] += 1;
        }
        Ok((self.mean_exit_cost(&counts), correct as f64 / exits.len() as f64))
    }

    /// (mean cost, accuracy) point produced by a threshold vector.
    pub fn point(&self, thresholds: &[f64]) -> Result<CurvePoint> {
        let exits = self.exits(thresholds)?;
        let (cost, accuracy) = self.summarize_exits(&exits)?;
        Ok(CurvePoint {
            cost,
            accuracy,
            thresholds: thresholds.to_vec(),
        })
    }

    /// Point where every question answers at `stage`.
    pub fn stage_point(&self, stage: usize) -> Result<(f64, f64)> {
        self.summarize_exits(&vec![stage; self.qids.len()])
    }

    /// Full per-question outcomes for a threshold vector.
    pub fn outcomes(&self, thresholds: &[f64]) -> Result<Vec<CascadeOutcome>> {
        self.check_thresholds(thresholds)?;
        (0..self.qids.len())
            .map(|q| {
                let exit = self.exit_of(q, thresholds)?;
                let qid = self.qids[q];
                let obs = self.observation(q, exit)?;
                let record = self
                    .logs
                    .get(&self.policy.stages[exit].name, qid)
                    .expect("observation implies record");
                Ok(make_outcome(
                    self.policy,
                    qid,
                    exit,
                    &record.prediction,
                    obs.confidence,
                    obs.correct,
                ))
            })
            .collect()
    }
}
