//! Shared fixtures for the benchmarks.

use qcascade::{
    generate, CascadePolicy, ConfidenceMethod, CostModel, PredictionLog, StageSpec, SynthConfig,
    SynthStage,
};

/// `(name, passages, capability)` for a closed-book stage followed by two
/// open-book iterations.
pub const STAGES: [(&str, u32, f64); 3] = [("cb", 0, 0.45), ("ob10", 10, 0.65), ("ob20", 20, 0.75)];

pub fn synthetic_log(n_questions: usize) -> PredictionLog {
    generate(&SynthConfig {
        n_questions,
        stages: STAGES
            .iter()
            .map(|&(name, passages, capability)| SynthStage {
                name: name.into(),
                passages,
                capability,
            })
            .collect(),
        difficulty_sharpness: 6.0,
        calibration: 0.8,
        answer_tokens: 3,
        seed: 7,
    })
    .expect("valid synthetic config")
}

/// Policy over the given prefix of stage names; non-final stages get `tau`.
pub fn policy(stages: &[&str], tau: f64) -> CascadePolicy {
    let specs = stages
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let threshold = (i + 1 < stages.len()).then_some(tau);
            let passages = STAGES.iter().find(|s| s.0 == *name).expect("known stage").1;
            if passages == 0 {
                StageSpec::closed_book(*name, threshold)
            } else {
                StageSpec::open_book(*name, passages, threshold)
            }
        })
        .collect();
    let cost = CostModel::upper_bound(0.0615e11, 0.202e11).expect("valid costs");
    CascadePolicy::new(specs, ConfidenceMethod::Ppa, cost).expect("valid policy")
}
