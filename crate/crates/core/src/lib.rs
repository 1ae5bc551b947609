//! Confidence-cascaded reader inference for open-domain question answering.
//!
//! A question is first answered by a cheap closed-book reader. While the
//! prediction's confidence stays below the stage threshold, it is handed to
//! an open-book reader over progressively larger sets of retrieved passages.
//! The crate provides the decision procedure, a FLOPs cost model, offline and
//! live executors, and the evaluation protocol (threshold sweeps,
//! accuracy-cost curves, AUC, baselines) over prediction logs.

pub mod baselines;
pub mod cascade;
pub mod cost;
pub mod curves;
pub mod error;
pub mod io;
pub mod live;
pub mod prediction;
pub mod records;
pub mod synth;

pub use baselines::{baseline_heuristic, baseline_random, baseline_random_sampled, stage_anchors};
pub use cascade::{
    decide_exit, decide_exit_with, run_offline, validate_policy, CascadeEvaluator, CascadeOutcome,
    CascadePolicy, StageSpec,
};
pub use cost::{dataset_cost, instance_cost, stage_cost, CostMode, CostModel, EscalationPath, StageKind};
pub use curves::{
    accuracy, auc, build_curve_k1, common_range, cost_at_accuracy, pareto_frontier, sweep_multi,
    AccuracyCostCurve, CurvePoint, CurveReduction, Grid,
};
pub use error::{Error, PolicyError, Result};
pub use live::{run_live, HttpBackend, LiveOptions, LiveQuestion, ReplayBackend, StageBackend};
pub use prediction::{
    confidence, exact_match, normalize_answer, ConfidenceMethod, PredictionRecord, TokenProbs,
};
pub use records::PredictionLog;
pub use synth::{calibration_report, generate, CalibrationReport, SynthConfig, SynthStage};
