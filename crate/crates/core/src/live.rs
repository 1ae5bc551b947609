//! Online cascade execution against per-stage prediction services.
//!
//! Wire contract, one service per stage: `POST /v1/predict` with
//! `{"question": str, "passages": [str], "max_new_tokens": int}` answered by
//! `{"prediction": str, "token_probs": [float in (0, 1]]}`. Stage `k` is
//! only queried after stage `k - 1` was not confident enough, so a dead
//! backend for a stage nobody reaches is harmless.

use std::collections::HashMap;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{decide_exit_with, make_outcome, validate_policy, CascadeOutcome, CascadePolicy};
use crate::error::{Error, Result};
use crate::prediction::{confidence, exact_match, TokenProbs};
use crate::records::PredictionLog;

pub const PREDICT_PATH: &str = "/v1/predict";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub question: String,
    pub passages: Vec<String>,
    pub max_new_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub prediction: String,
    pub token_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

/// A reader service for one cascade stage.
pub trait StageBackend: Sync {
    fn predict(&self, request: &PredictRequest) -> Result<PredictResponse, BackendError>;
}

/// Backend speaking the JSON-over-HTTP wire contract.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
}

impl HttpBackend {
    /// `base_url` is the service root, e.g. `http://127.0.0.1:8000`.
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::invalid(format!("cannot build HTTP client: {e}")))?;
        Ok(HttpBackend {
            client,
            url: format!("{}{PREDICT_PATH}", base_url.trim_end_matches('/')),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl StageBackend for HttpBackend {
    fn predict(&self, request: &PredictRequest) -> Result<PredictResponse, BackendError> {
        let response = self
            .client
            .post(&self.url)
            .json(request)
            .send()
            .map_err(|e| BackendError::Unreachable(e.to_string()))?;
        let status = response.status();
        if status != reqwest::StatusCode::OK {
            return Err(BackendError::Malformed(format!("HTTP status {status}")));
        }
        response
            .json::<PredictResponse>()
            .map_err(|e| BackendError::Malformed(e.to_string()))
    }
}

/// Answers requests from a logged stage, matching on question text.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    answers: HashMap<String, PredictResponse>,
}

impl ReplayBackend {
    pub fn from_stage(logs: &PredictionLog, stage: &str) -> Result<Self> {
        let mut answers = HashMap::new();
        for r in logs.stage(stage).into_iter().flat_map(|s| s.values()) {
            let previous = answers.insert(
                r.question.clone(),
                PredictResponse {
                    prediction: r.prediction.clone(),
                    token_probs: r.token_probs.values().to_vec(),
                },
            );
            if previous.is_some() {
                return Err(Error::invalid(format!(
                    "stage {stage:?} logs the question text of {:?} more than once",
                    r.qid
                )));
            }
        }
        Ok(ReplayBackend { answers })
    }
}

impl StageBackend for ReplayBackend {
    fn predict(&self, request: &PredictRequest) -> Result<PredictResponse, BackendError> {
        self.answers
            .get(&request.question)
            .cloned()
            .ok_or_else(|| BackendError::Unreachable(format!("no replay for {:?}", request.question)))
    }
}

/// A question with its retrieved passages, in retriever rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveQuestion {
    pub qid: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Vec<String>>,
    #[serde(default)]
    pub passages: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LiveOptions {
    pub max_new_tokens: u32,
    /// Questions processed at once; stages within a question stay sequential.
    pub concurrency: usize,
}

impl Default for LiveOptions {
    fn default() -> Self {
        LiveOptions {
            max_new_tokens: 32,
            concurrency: 4,
        }
    }
}

fn query_stage(
    backend: &dyn StageBackend,
    policy: &CascadePolicy,
    stage: usize,
    question: &LiveQuestion,
    max_new_tokens: u32,
) -> Result<(String, f64)> {
    let spec = &policy.stages[stage];
    let wanted = spec.passages as usize;
    if question.passages.len() < wanted {
        return Err(Error::invalid(format!(
            "question {:?} has {} passages but stage {:?} needs {wanted}",
            question.qid,
            question.passages.len(),
            spec.name
        )));
    }
    let request = PredictRequest {
        question: question.question.clone(),
        passages: question.passages[..wanted].to_vec(),
        max_new_tokens,
    };
    let response = backend.predict(&request).map_err(|e| match e {
        BackendError::Unreachable(message) => Error::BackendUnreachable {
            stage: spec.name.clone(),
            message,
        },
        BackendError::Malformed(message) => Error::MalformedBackendResponse {
            stage: spec.name.clone(),
            message,
        },
    })?;
    let probs = TokenProbs::new(response.token_probs).map_err(|e| Error::MalformedBackendResponse {
        stage: spec.name.clone(),
        message: e.to_string(),
    })?;
    Ok((response.prediction, confidence(policy.method, &probs)))
}

fn run_question(
    backends: &[&dyn StageBackend],
    policy: &CascadePolicy,
    thresholds: &[f64],
    question: &LiveQuestion,
    max_new_tokens: u32,
) -> Result<CascadeOutcome> {
    let mut answers: Vec<(String, f64)> = Vec::with_capacity(backends.len());
    let exit = decide_exit_with(thresholds, |i| {
        let answer = query_stage(backends[i], policy, i, question, max_new_tokens)?;
        let conf = answer.1;
        answers.push(answer);
        Ok::<_, Error>(conf)
    })?;
    if exit == answers.len() {
        answers.push(query_stage(backends[exit], policy, exit, question, max_new_tokens)?);
    }
    let (prediction, conf) = &answers[exit];
    let correct = question
        .gold
        .as_ref()
        .filter(|g| !g.is_empty())
        .and_then(|g| exact_match(prediction, g).ok());
    Ok(make_outcome(policy, &question.qid, exit, prediction, *conf, correct))
}

/// Runs every question through the cascade against live backends, one per
/// stage. Per-question failures are reported in place; the outer error is
/// reserved for an invalid policy or backend list.
pub fn run_live(
    backends: &[&dyn StageBackend],
    policy: &CascadePolicy,
    questions: &[LiveQuestion],
    options: LiveOptions,
) -> Result<Vec<Result<CascadeOutcome>>> {
    validate_policy(policy)?;
    if backends.len() != policy.stages.len() {
        return Err(Error::invalid(format!(
            "policy has {} stages but {} backends were given",
            policy.stages.len(),
            backends.len()
        )));
    }
    let thresholds = policy.thresholds();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.concurrency.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        questions
            .par_iter()
            .map(|q| run_question(backends, policy, &thresholds, q, options.max_new_tokens))
            .collect()
    }))
}
