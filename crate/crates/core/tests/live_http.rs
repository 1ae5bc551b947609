mod common;

use std::time::Duration;

use qcascade::live::PredictRequest;
use qcascade::{
    generate, run_live, run_offline, CascadePolicy, ConfidenceMethod, CostModel, Error,
    HttpBackend, LiveOptions, LiveQuestion, PredictionLog, ReplayBackend, StageBackend, StageSpec,
    SynthConfig, SynthStage,
};

fn synth_log() -> PredictionLog {
    generate(&SynthConfig {
        n_questions: 60,
        stages: vec![
            SynthStage { name: "cb".into(), passages: 0, capability: 0.45 },
            SynthStage { name: "ob10".into(), passages: 10, capability: 0.6 },
            SynthStage { name: "ob20".into(), passages: 20, capability: 0.75 },
        ],
        difficulty_sharpness: 6.0,
        calibration: 0.8,
        answer_tokens: 3,
        seed: 7,
    })
    .unwrap()
}

fn policy() -> CascadePolicy {
    CascadePolicy::new(
        vec![
            StageSpec::closed_book("cb", Some(0.6)),
            StageSpec::open_book("ob10", 10, Some(0.5)),
            StageSpec::open_book("ob20", 20, None),
        ],
        ConfidenceMethod::Pa,
        CostModel::upper_bound(0.0615e11, 0.202e11).unwrap(),
    )
    .unwrap()
}

fn questions(log: &PredictionLog) -> Vec<LiveQuestion> {
    log.stage("cb")
        .unwrap()
        .values()
        .map(|r| LiveQuestion {
            qid: r.qid.clone(),
            question: r.question.clone(),
            gold: r.gold.clone(),
            passages: (0..25).map(|i| format!("passage {i}")).collect(),
        })
        .collect()
}

fn replays(log: &PredictionLog) -> Vec<ReplayBackend> {
    ["cb", "ob10", "ob20"]
        .iter()
        .map(|s| ReplayBackend::from_stage(log, s).unwrap())
        .collect()
}

#[test]
fn http_replay_matches_offline() {
    let log = synth_log();
    let urls: Vec<String> = replays(&log).into_iter().map(common::serve).collect();
    let http: Vec<HttpBackend> = urls
        .iter()
        .map(|u| HttpBackend::new(u, Duration::from_secs(10)).unwrap())
        .collect();
    let backends: Vec<&dyn StageBackend> = http.iter().map(|b| b as &dyn StageBackend).collect();
    let live = run_live(&backends, &policy(), &questions(&log), LiveOptions { max_new_tokens: 16, concurrency: 4 })
        .unwrap()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .unwrap();
    let offline = run_offline(&log, &policy()).unwrap();
    assert_eq!(live, offline);
    assert!(offline.iter().any(|o| o.exit_stage == 0));
    assert!(offline.iter().any(|o| o.exit_stage == 2));
}

#[test]
fn http_request_shape() {
    let url = common::serve(ReplayBackend::default());
    let backend = HttpBackend::new(&format!("{url}/"), Duration::from_secs(5)).unwrap();
    assert_eq!(backend.url(), format!("{url}/v1/predict"));
    // unknown question: the stub answers 500, which is a malformed response
    let err = backend
        .predict(&PredictRequest { question: "?".into(), passages: vec![], max_new_tokens: 4 })
        .unwrap_err();
    assert!(matches!(err, qcascade::live::BackendError::Malformed(_)));
}

#[test]
fn http_error_mapping() {
    let log = synth_log();
    let qs = questions(&log);
    let cb = ReplayBackend::from_stage(&log, "cb").unwrap();
    let always = policy().with_thresholds(&[1.0, 1.0]).unwrap();
    let opts = LiveOptions::default();

    let bad_schema = HttpBackend::new(&common::serve_raw(200, r#"{"prediction": 3}"#), Duration::from_secs(5)).unwrap();
    let server_error = HttpBackend::new(&common::serve_raw(500, "boom"), Duration::from_secs(5)).unwrap();
    let bad_probs =
        HttpBackend::new(&common::serve_raw(200, r#"{"prediction": "x", "token_probs": [1.5]}"#), Duration::from_secs(5))
            .unwrap();
    for backend in [&bad_schema, &server_error, &bad_probs] {
        let out = run_live(&[&cb, backend, backend], &always, &qs, opts).unwrap();
        assert!(out.iter().all(|o| matches!(o, Err(Error::MalformedBackendResponse { .. }))));
    }

    // nothing listens on a freshly released port
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let down = HttpBackend::new(&format!("http://127.0.0.1:{port}"), Duration::from_secs(5)).unwrap();
    let out = run_live(&[&cb, &down, &down], &always, &qs, opts).unwrap();
    assert!(out.iter().all(|o| matches!(o, Err(Error::BackendUnreachable { .. }))));

    let never = policy().with_thresholds(&[0.0, 0.0]).unwrap();
    let out = run_live(&[&cb, &down, &down], &never, &qs, opts).unwrap();
    assert!(out.iter().all(|o| o.as_ref().is_ok_and(|o| o.exit_stage == 0)));
}

#[test]
fn in_process_replay_matches_offline() {
    let log = synth_log();
    let r = replays(&log);
    let backends: Vec<&dyn StageBackend> = r.iter().map(|b| b as &dyn StageBackend).collect();
    for taus in [[0.0, 0.0], [0.3, 0.9], [0.7, 0.4], [1.0, 1.0]] {
        let p = policy().with_thresholds(&taus).unwrap();
        let live: Vec<_> = run_live(&backends, &p, &questions(&log), LiveOptions { max_new_tokens: 8, concurrency: 3 })
            .unwrap()
            .into_iter()
            .map(Result::unwrap)
            .collect();
        assert_eq!(live, run_offline(&log, &p).unwrap());
    }
}
