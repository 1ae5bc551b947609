//! FLOPs accounting for closed-book and open-book reader stages.
//!
//! An open-book reader encodes each passage independently, so one open-book
//! iteration over `S` passages costs `S * c_ob`. That is an upper bound: the
//! encodings of the previous iteration's passages could be kept and reused,
//! in which case only the newly added passages are charged
//! ([`CostMode::EncoderReuse`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    /// Closed-book: the reader sees only the question.
    #[serde(rename = "cb")]
    ClosedBook,
    /// Open-book: the reader also consumes retrieved passages.
    #[serde(rename = "ob")]
    OpenBook,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    /// Every open-book iteration re-encodes all of its passages.
    #[default]
    UpperBound,
    /// Iteration `k` only encodes the `S_k - S_{k-1}` passages it adds.
    EncoderReuse,
}

/// Per-inference FLOPs constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// FLOPs of one closed-book inference.
    pub c_cb: f64,
    /// FLOPs of one open-book inference per passage.
    pub c_ob: f64,
    #[serde(default)]
    pub mode: CostMode,
}

impl CostModel {
    pub fn new(c_cb: f64, c_ob: f64, mode: CostMode) -> Result<Self> {
        if !(c_cb >= 0.0 && c_cb.is_finite()) {
            return Err(Error::invalid(format!("c_cb must be finite and >= 0, got {c_cb}")));
        }
        if !(c_ob > 0.0 && c_ob.is_finite()) {
            return Err(Error::invalid(format!("c_ob must be finite and > 0, got {c_ob}")));
        }
        Ok(CostModel { c_cb, c_ob, mode })
    }

    pub fn upper_bound(c_cb: f64, c_ob: f64) -> Result<Self> {
        Self::new(c_cb, c_ob, CostMode::UpperBound)
    }

    pub fn with_mode(self, mode: CostMode) -> Self {
        CostModel { mode, ..self }
    }
}

/// Cost of executing a single stage.
///
/// `s_prev` is the passage count of the previously executed open-book
/// iteration (0 if there was none); it only matters in encoder-reuse mode.
pub fn stage_cost(model: &CostModel, kind: StageKind, s_k: u32, s_prev: u32) -> Result<f64> {
    match kind {
        StageKind::ClosedBook => {
            if s_k != 0 {
                return Err(Error::invalid(format!(
                    "closed-book stage must use 0 passages, got {s_k}"
                )));
            }
            Ok(model.c_cb)
        }
        StageKind::OpenBook => {
            if s_k == 0 || s_prev >= s_k {
                return Err(Error::invalid(format!(
                    "open-book stage needs s_prev < s_k and s_k >= 1, got s_prev={s_prev}, s_k={s_k}"
                )));
            }
            let encoded = match model.mode {
                CostMode::UpperBound => s_k,
                CostMode::EncoderReuse => s_k - s_prev,
            };
            Ok(f64::from(encoded) * model.c_ob)
        }
    }
}

/// Which open-book iterations a question went through, together with the
/// passage counts of every iteration in the cascade.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscalationPath {
    used: Vec<bool>,
    passages: Vec<u32>,
}

impl EscalationPath {
    pub fn new(used: Vec<bool>, passages: Vec<u32>) -> Result<Self> {
        if used.len() != passages.len() {
            return Err(Error::invalid(format!(
                "path has {} indicators but {} passage counts",
                used.len(),
                passages.len()
            )));
        }
        if used.windows(2).any(|w| !w[0] && w[1]) {
            return Err(Error::invalid(
                "open-book iterations must be used as a prefix (escalation never skips a stage)",
            ));
        }
        let mut prev = 0;
        for &s in &passages {
            if s <= prev {
                return Err(Error::invalid(format!(
                    "passage counts must be positive and strictly increasing, got {passages:?}"
                )));
            }
            prev = s;
        }
        Ok(EscalationPath { used, passages })
    }

    /// Path for a question that answered at cascade stage `exit_stage`
    /// (0 = closed-book, k = k-th open-book iteration).
    pub fn from_exit(passages: Vec<u32>, exit_stage: usize) -> Result<Self> {
        if exit_stage > passages.len() {
            return Err(Error::invalid(format!(
                "exit stage {exit_stage} beyond {} open-book iterations",
                passages.len()
            )));
        }
        let used = (1..=passages.len()).map(|k| k <= exit_stage).collect();
        Self::new(used, passages)
    }

    /// The `M_OB_k` indicators, one per open-book iteration.
    pub fn used(&self) -> &[bool] {
        &self.used
    }

    pub fn passages(&self) -> &[u32] {
        &self.passages
    }

    /// Number of open-book iterations that ran.
    pub fn depth(&self) -> usize {
        self.used.iter().take_while(|u| **u).count()
    }
}

/// Reader cost for one question: the closed-book stage always runs, then
/// every used open-book iteration is charged.
pub fn instance_cost(model: &CostModel, path: &EscalationPath) -> f64 {
    let mut total = model.c_cb;
    let mut prev = 0;
    for (&used, &s) in path.used.iter().zip(&path.passages) {
        if !used {
            break;
        }
        total += stage_cost(model, StageKind::OpenBook, s, prev)
            .expect("EscalationPath guarantees increasing passages");
        prev = s;
    }
    total
}

/// Mean per-question cost over a dataset.
pub fn dataset_cost(costs: &[f64]) -> Result<f64> {
    if costs.is_empty() {
        return Err(Error::invalid("dataset cost of an empty set"));
    }
    Ok(costs.iter().sum::<f64>() / costs.len() as f64)
}
