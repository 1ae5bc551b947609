#![allow(dead_code)]

pub mod oracle;

use qcascade::{
    CascadePolicy, ConfidenceMethod, CostModel, PredictionLog, PredictionRecord, StageSpec,
    TokenProbs,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn record(qid: &str, stage: &str, conf: f64, correct: bool, passages: u32) -> PredictionRecord {
    PredictionRecord {
        qid: qid.to_string(),
        stage: stage.to_string(),
        question: format!("question {qid}"),
        prediction: if correct { "right".into() } else { "wrong".into() },
        token_probs: TokenProbs::new(vec![conf]).unwrap(),
        n_passages: passages,
        gold: Some(vec!["right".into()]),
    }
}

/// Toy cascade: a stage named `s{k}` per entry of `passages` (first is 0).
pub struct Toy {
    pub log: PredictionLog,
    pub policy: CascadePolicy,
    /// `[question][stage] -> (confidence, correct)`
    pub table: Vec<Vec<(f64, bool)>>,
}

pub fn stage_name(k: usize) -> String {
    format!("s{k}")
}

pub fn template(passages: &[u32], c_cb: f64, c_ob: f64) -> CascadePolicy {
    let k = passages.len() - 1;
    let stages = passages
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let tau = (i < k).then_some(0.5);
            if i == 0 {
                StageSpec::closed_book(stage_name(i), tau)
            } else {
                StageSpec::open_book(stage_name(i), s, tau)
            }
        })
        .collect();
    CascadePolicy::new(stages, ConfidenceMethod::Pf, CostModel::upper_bound(c_cb, c_ob).unwrap())
        .unwrap()
}

pub fn toy_from_table(table: Vec<Vec<(f64, bool)>>, passages: &[u32], c_cb: f64, c_ob: f64) -> Toy {
    let mut records = Vec::new();
    for (q, row) in table.iter().enumerate() {
        for (k, &(conf, correct)) in row.iter().enumerate() {
            records.push(record(&format!("q{q:02}"), &stage_name(k), conf, correct, passages[k]));
        }
    }
    Toy {
        log: PredictionLog::from_records(records).unwrap(),
        policy: template(passages, c_cb, c_ob),
        table,
    }
}

/// Random toy log with confidences on a coarse grid so ties are common.
pub fn random_toy(seed: u64, max_n: usize, k: usize) -> Toy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_n);
    let mut passages = vec![0u32];
    for _ in 0..k {
        let prev = *passages.last().unwrap();
        passages.push(prev + rng.gen_range(1..=5));
    }
    let c_cb = rng.gen_range(0..4) as f64;
    let c_ob = rng.gen_range(1..4) as f64;
    let table = (0..n)
        .map(|_| {
            (0..=k)
                .map(|_| (rng.gen_range(1..=10) as f64 / 10.0, rng.gen_bool(0.5)))
                .collect()
        })
        .collect();
    toy_from_table(table, &passages, c_cb, c_ob)
}

/// Serves the prediction wire contract for `backend` on an ephemeral port
/// and returns the base URL.
pub fn serve<B: qcascade::StageBackend + Send + 'static>(backend: B) -> String {
    use qcascade::live::{PredictRequest, PREDICT_PATH};

    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    std::thread::spawn(move || {
        for mut req in server.incoming_requests() {
            if req.url() != PREDICT_PATH || *req.method() != tiny_http::Method::Post {
                let _ = req.respond(tiny_http::Response::from_string("not found").with_status_code(404));
                continue;
            }
            let mut body = String::new();
            let _ = req.as_reader().read_to_string(&mut body);
            let response = match serde_json::from_str::<PredictRequest>(&body) {
                Err(e) => tiny_http::Response::from_string(e.to_string()).with_status_code(400),
                Ok(r) => match backend.predict(&r) {
                    Ok(answer) => tiny_http::Response::from_string(serde_json::to_string(&answer).unwrap())
                        .with_status_code(200),
                    Err(e) => tiny_http::Response::from_string(e.to_string()).with_status_code(500),
                },
            };
            let _ = req.respond(response);
        }
    });
    url
}

/// Serves a fixed raw body with the given status for every request.
pub fn serve_raw(status: u16, body: &'static str) -> String {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    std::thread::spawn(move || {
        for req in server.incoming_requests() {
            let _ = req.respond(tiny_http::Response::from_string(body).with_status_code(status));
        }
    });
    url
}
