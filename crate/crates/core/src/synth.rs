//! Seeded synthetic prediction logs with controllable calibration.
//!
//! Each question gets a latent difficulty `d ~ U(0, 1)`. Stage `k` answers it
//! correctly with probability `sigmoid(a * (c_k - d))`, where `c_k` is the
//! stage's capability and `a` the difficulty sharpness. The stage's
//! confidence is drawn from `Beta(2 + 8ρ, 2)` when correct and
//! `Beta(2, 2 + 8ρ)` when wrong, so `ρ = 0` gives uninformative confidences
//! and `ρ = 1` well separated ones. The confidence is emitted as `n` equal
//! token probabilities `score^(1/n)`, which makes the product-of-tokens
//! confidence reproduce `score`.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prediction::{ConfidenceMethod, PredictionRecord, TokenProbs};
use crate::records::PredictionLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthStage {
    pub name: String,
    pub passages: u32,
    /// In `[0, 1]`; nondecreasing along the cascade.
    pub capability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_questions: usize,
    pub stages: Vec<SynthStage>,
    #[serde(default = "default_sharpness")]
    pub difficulty_sharpness: f64,
    pub calibration: f64,
    #[serde(default = "default_answer_tokens")]
    pub answer_tokens: usize,
    pub seed: u64,
}

fn default_sharpness() -> f64 {
    6.0
}

fn default_answer_tokens() -> usize {
    3
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::invalid("synthetic config needs at least one stage"));
        }
        let mut names = HashSet::new();
        let mut prev = 0.0;
        for s in &self.stages {
            if !names.insert(s.name.as_str()) {
                return Err(Error::invalid(format!("duplicate stage name {:?}", s.name)));
            }
            if !(0.0..=1.0).contains(&s.capability) {
                return Err(Error::invalid(format!(
                    "stage {:?} capability {} outside [0, 1]",
                    s.name, s.capability
                )));
            }
            if s.capability < prev {
                return Err(Error::invalid(format!(
                    "stage {:?} capability {} is below the previous stage's {prev}",
                    s.name, s.capability
                )));
            }
            prev = s.capability;
        }
        if !(self.difficulty_sharpness > 0.0 && self.difficulty_sharpness.is_finite()) {
            return Err(Error::invalid(format!(
                "difficulty sharpness must be finite and > 0, got {}",
                self.difficulty_sharpness
            )));
        }
        if !(0.0..=1.0).contains(&self.calibration) {
            return Err(Error::invalid(format!(
                "calibration {} outside [0, 1]",
                self.calibration
            )));
        }
        if self.answer_tokens == 0 {
            return Err(Error::invalid("answer_tokens must be >= 1"));
        }
        Ok(())
    }

    fn qid(&self, i: usize) -> String {
        let width = self.n_questions.saturating_sub(1).to_string().len().max(6);
        format!("q{i:0width$}")
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn question_records(config: &SynthConfig, i: usize, correct_beta: &Beta<f64>, wrong_beta: &Beta<f64>) -> Vec<PredictionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(i as u64);
    let qid = config.qid(i);
    let difficulty: f64 = rng.gen();
    let filler = rng.gen_range(0..16);
    let question = format!("synthetic question {qid}{}?", " about it".repeat(filler));
    let gold = format!("answer {i}");
    config
        .stages
        .iter()
        .map(|stage| {
            let p = sigmoid(config.difficulty_sharpness * (stage.capability - difficulty));
            let correct = rng.gen::<f64>() < p;
            let beta = if correct { correct_beta } else { wrong_beta };
            let score = beta.sample(&mut rng).clamp(f64::MIN_POSITIVE, 1.0);
            let token = score.powf(1.0 / config.answer_tokens as f64);
            PredictionRecord {
                qid: qid.clone(),
                stage: stage.name.clone(),
                question: question.clone(),
                prediction: if correct {
                    gold.clone()
                } else {
                    format!("wrong {} {i}", stage.name)
                },
                token_probs: TokenProbs::new(vec![token.max(f64::MIN_POSITIVE); config.answer_tokens])
                    .expect("token probability in (0, 1]"),
                n_passages: stage.passages,
                gold: Some(vec![gold.clone()]),
            }
        })
        .collect()
}

/// Generates one record per (question, stage). Deterministic per config.
pub fn generate(config: &SynthConfig) -> Result<PredictionLog> {
    config.validate()?;
    let strong = 2.0 + 8.0 * config.calibration;
    let correct_beta = Beta::new(strong, 2.0).map_err(|e| Error::invalid(e.to_string()))?;
    let wrong_beta = Beta::new(2.0, strong).map_err(|e| Error::invalid(e.to_string()))?;
    let per_question: Vec<Vec<PredictionRecord>> = (0..config.n_questions)
        .into_par_iter()
        .map(|i| question_records(config, i, &correct_beta, &wrong_beta))
        .collect();
    PredictionLog::from_records(per_question.into_iter().flatten())
}

/// Pearson correlation; 0 when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n == 0 {
        return 0.0;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageCalibration {
    pub stage: String,
    pub n: usize,
    pub accuracy: f64,
    pub correlation: f64,
    pub mean_confidence_correct: Option<f64>,
    pub mean_confidence_incorrect: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub method: ConfidenceMethod,
    pub stages: Vec<StageCalibration>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Per-stage accuracy and confidence/correctness statistics.
pub fn calibration_report(logs: &PredictionLog, method: ConfidenceMethod) -> Result<CalibrationReport> {
    if logs.is_empty() {
        return Err(Error::invalid("calibration report of an empty log"));
    }
    let mut stages = Vec::new();
    for name in logs.stage_names() {
        let records = logs.stage(name).expect("listed stage");
        let mut conf = Vec::with_capacity(records.len());
        let mut hit = Vec::with_capacity(records.len());
        for r in records.values() {
            let correct = r.is_correct().ok_or_else(|| {
                Error::invalid(format!("record ({}, {}) has no gold answers", r.qid, r.stage))
            })?;
            conf.push(r.confidence(method));
            hit.push(if correct { 1.0 } else { 0.0 });
        }
        let split = |want: f64| -> Vec<f64> {
            conf.iter()
                .zip(&hit)
                .filter(|(_, h)| **h == want)
                .map(|(c, _)| *c)
                .collect()
        };
        stages.push(StageCalibration {
            stage: name.to_string(),
            n: conf.len(),
            accuracy: hit.iter().sum::<f64>() / hit.len() as f64,
            correlation: pearson(&conf, &hit),
            mean_confidence_correct: mean(&split(1.0)),
            mean_confidence_incorrect: mean(&split(0.0)),
        });
    }
    Ok(CalibrationReport { method, stages })
}

impl fmt::Display for CalibrationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        writeln!(f, "confidence method: {}", self.method)?;
        writeln!(
            f,
            "{:<16} {:>8} {:>9} {:>12} {:>14} {:>14}",
            "stage", "n", "accuracy", "correlation", "conf|correct", "conf|wrong"
        )?;
        for s in &self.stages {
            writeln!(
                f,
                "{:<16} {:>8} {:>9.4} {:>12.4} {:>14} {:>14}",
                s.stage,
                s.n,
                s.accuracy,
                s.correlation,
                opt(s.mean_confidence_correct),
                opt(s.mean_confidence_incorrect)
            )?;
        }
        Ok(())
    }
}
