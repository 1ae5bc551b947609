//! Per-stage reader predictions, token-level confidence estimators and
//! exact-match scoring.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Max-softmax probability of each generated answer token, in generation
/// order. Always non-empty with every value in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TokenProbs(Vec<f64>);

impl TokenProbs {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("token probabilities must be non-empty"));
        }
        if let Some((i, p)) = values
            .iter()
            .enumerate()
            .find(|(_, p)| !(**p > 0.0 && **p <= 1.0))
        {
            return Err(Error::invalid(format!(
                "token probability #{i} = {p} is outside (0, 1]"
            )));
        }
        Ok(TokenProbs(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.0[0]
    }

    pub fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

impl TryFrom<Vec<f64>> for TokenProbs {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        TokenProbs::new(values)
    }
}

impl From<TokenProbs> for Vec<f64> {
    fn from(probs: TokenProbs) -> Self {
        probs.0
    }
}

/// How a sequence of token probabilities is collapsed into a single
/// prediction confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceMethod {
    /// Product of all token probabilities.
    Ppa,
    /// Probability of the first token.
    Pf,
    /// Mean of the first and last token probabilities.
    Pfl,
    /// Mean probability across all tokens.
    Pa,
}

impl ConfidenceMethod {
    pub const ALL: [ConfidenceMethod; 4] = [
        ConfidenceMethod::Ppa,
        ConfidenceMethod::Pf,
        ConfidenceMethod::Pfl,
        ConfidenceMethod::Pa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConfidenceMethod::Ppa => "ppa",
            ConfidenceMethod::Pf => "pf",
            ConfidenceMethod::Pfl => "pfl",
            ConfidenceMethod::Pa => "pa",
        }
    }

    pub fn score(self, probs: &TokenProbs) -> f64 {
        confidence(self, probs)
    }
}

impl fmt::Display for ConfidenceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConfidenceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ppa" => Ok(ConfidenceMethod::Ppa),
            "pf" => Ok(ConfidenceMethod::Pf),
            "pfl" => Ok(ConfidenceMethod::Pfl),
            "pa" => Ok(ConfidenceMethod::Pa),
            other => Err(Error::invalid(format!(
                "unknown confidence method {other:?} (expected ppa, pf, pfl or pa)"
            ))),
        }
    }
}

/// Prediction confidence of a generated answer.
///
/// The product form is accumulated as a sum of logs and exponentiated once,
/// so long generations do not underflow part-way through.
pub fn confidence(method: ConfidenceMethod, probs: &TokenProbs) -> f64 {
    let values = probs.values();
    match method {
        ConfidenceMethod::Ppa => values.iter().map(|p| p.ln()).sum::<f64>().exp(),
        ConfidenceMethod::Pf => probs.first(),
        ConfidenceMethod::Pfl => (probs.first() + probs.last()) / 2.0,
        ConfidenceMethod::Pa => values.iter().sum::<f64>() / values.len() as f64,
    }
}

/// Confidence over a raw slice, validating it first.
pub fn confidence_of(method: ConfidenceMethod, probs: &[f64]) -> Result<f64> {
    let probs = TokenProbs::new(probs.to_vec())?;
    Ok(confidence(method, &probs))
}

fn punctuation() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\p{P}").expect("valid punctuation class"))
}

/// Answer normalization used before exact-match comparison: lowercase,
/// drop Unicode punctuation, drop the articles "a", "an", "the" and
/// collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let stripped = punctuation().replace_all(&lowered, "");
    stripped
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match<S: AsRef<str>>(prediction: &str, golds: &[S]) -> Result<bool> {
    if golds.is_empty() {
        return Err(Error::invalid("exact match needs at least one gold answer"));
    }
    let pred = normalize_answer(prediction);
    Ok(golds.iter().any(|g| normalize_answer(g.as_ref()) == pred))
}

/// One reader stage's output for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub qid: String,
    pub stage: String,
    pub question: String,
    pub prediction: String,
    pub token_probs: TokenProbs,
    /// 0 for closed-book stages.
    pub n_passages: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Vec<String>>,
}

impl PredictionRecord {
    pub fn confidence(&self, method: ConfidenceMethod) -> f64 {
        confidence(method, &self.token_probs)
    }

    /// `None` when the record carries no gold answers.
    pub fn is_correct(&self) -> Option<bool> {
        match &self.gold {
            Some(golds) if !golds.is_empty() => exact_match(&self.prediction, golds).ok(),
            _ => None,
        }
    }
}
