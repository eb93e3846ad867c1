use std::path::Path;
use std::sync::Arc;

use ar_study::{router, Study, StudyDefinition, StudyError};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const METHODS: [&str; 2] = ["ssimnet", "gannet"];

/// root/original/img{i}.png plus one file per method, each with distinct bytes.
fn study_dir(images: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["original", METHODS[0], METHODS[1]] {
        std::fs::create_dir(dir.path().join(sub)).unwrap();
        for i in 0..images {
            std::fs::write(dir.path().join(sub).join(format!("img{i}.png")), format!("{sub}-{i}")).unwrap();
        }
    }
    dir
}

fn methods() -> Vec<String> {
    METHODS.iter().map(|m| m.to_string()).collect()
}

fn definition(root: &Path) -> StudyDefinition {
    StudyDefinition::from_dir(root, &methods()).unwrap()
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8_lossy(&bytes).into_owned())
}

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

fn assert_blind(payload: &str) {
    for m in METHODS {
        assert!(!payload.contains(m), "payload reveals {m}: {payload}");
    }
}

#[test]
fn fifty_images_two_methods() {
    let images: Vec<String> = (0..50).map(|i| format!("{i}.png")).collect();
    let def = StudyDefinition::from_parts(Path::new("/x"), images, methods()).unwrap();
    let study = Study::in_memory(def, None);
    let a = study.create_session().unwrap();
    let b = study.create_session().unwrap();
    assert_eq!(a.total, 100);
    let (oa, ob) = (study.session_order(&a.session).unwrap(), study.session_order(&b.session).unwrap());
    for o in [&oa, &ob] {
        let mut s = o.clone();
        s.sort();
        assert_eq!(s, (0..100).collect::<Vec<_>>());
    }
    assert_ne!(oa, ob);
}

#[test]
fn seeded_orders_repeat() {
    let dir = study_dir(4);
    let order = |seed| {
        let s = Study::in_memory(definition(dir.path()), Some(seed));
        let id = s.create_session().unwrap().session;
        (id.clone(), s.session_order(&id).unwrap())
    };
    assert_eq!(order(5), order(5));
    assert_ne!(order(5), order(6));
}

#[test]
fn definition_requires_every_test_image() {
    let dir = study_dir(2);
    std::fs::remove_file(dir.path().join("gannet/img1.png")).unwrap();
    assert!(matches!(StudyDefinition::from_dir(dir.path(), &methods()), Err(StudyError::Invalid(_))));
    assert!(StudyDefinition::from_parts(dir.path(), vec!["a".into()], vec!["m".into(), "m".into()]).is_err());
}

#[tokio::test]
async fn blinded_trials_and_rating_rules() {
    let dir = study_dir(3);
    let app = router(Arc::new(Study::in_memory(definition(dir.path()), Some(1))));
    let (st, body) = call(&app, "POST", "/api/session", None).await;
    assert_eq!(st, StatusCode::CREATED);
    assert_blind(&body);
    let id = parse(&body)["session"].as_str().unwrap().to_string();

    let uri = format!("/api/session/{id}/trial/0");
    let (st, first) = call(&app, "GET", &uri, None).await;
    assert_eq!(st, StatusCode::OK);
    assert_blind(&first);
    assert_eq!(call(&app, "GET", &uri, None).await.1, first);
    let trial = parse(&first);
    let token = trial["trial_token"].as_str().unwrap();

    // the aliased URLs serve the right files
    let (st, reference) = call(&app, "GET", trial["reference_url"].as_str().unwrap(), None).await;
    assert_eq!(st, StatusCode::OK);
    assert!(reference.starts_with("original-"));
    let (_, test) = call(&app, "GET", trial["test_url"].as_str().unwrap(), None).await;
    assert!(test.starts_with("ssimnet-") || test.starts_with("gannet-"));
    assert_eq!(call(&app, "GET", "/images/nope.png", None).await.0, StatusCode::NOT_FOUND);

    let rate = |score: Value| json!({ "session": id, "trial_token": token, "score": score });
    for bad in [json!(101), json!(-0.5), json!("high")] {
        let (st, _) = call(&app, "POST", "/api/rating", Some(rate(bad))).await;
        assert_eq!(st, StatusCode::BAD_REQUEST);
    }
    let (st, ack) = call(&app, "POST", "/api/rating", Some(rate(json!(33.25)))).await;
    assert_eq!(st, StatusCode::OK, "{ack}");
    assert_blind(&ack);
    assert_eq!(parse(&ack)["remaining"], json!(5));
    let (st, _) = call(&app, "POST", "/api/rating", Some(rate(json!(90)))).await;
    assert_eq!(st, StatusCode::CONFLICT);

    let (_, results) = call(&app, "GET", "/api/results", None).await;
    assert_blind(&results);
    let r = parse(&results);
    assert_eq!((r["ratings"].clone(), r["complete"].clone()), (json!(1), json!(false)));
    assert_eq!(r["methods"][0]["mos"], json!(33.25));

    let bogus = json!({ "session": id, "trial_token": "ffff", "score": 5 });
    assert_eq!(call(&app, "POST", "/api/rating", Some(bogus)).await.0, StatusCode::NOT_FOUND);
    let wrong_session = json!({ "session": "abc", "trial_token": token, "score": 5 });
    assert_eq!(call(&app, "POST", "/api/rating", Some(wrong_session)).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/api/session/abc/trial/0", None).await.0, StatusCode::NOT_FOUND);

    let (st, end) = call(&app, "GET", &format!("/api/session/{id}/trial/6"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(parse(&end)["end"], json!(true));
    assert_eq!(parse(&end)["rated"], json!(1));
}

#[tokio::test]
async fn simulated_study_results() {
    let dir = study_dir(4);
    let app = router(Arc::new(Study::in_memory(definition(dir.path()), Some(9))));
    let (_, body) = call(&app, "POST", "/api/session", None).await;
    let id = parse(&body)["session"].as_str().unwrap().to_string();
    // scores by (method, image): ssimnet 60/80 on img0/img1, gannet 70 on all
    let mut expected_ssim = Vec::new();
    for k in 0..8 {
        let (_, t) = call(&app, "GET", &format!("/api/session/{id}/trial/{k}"), None).await;
        assert_blind(&t);
        let t = parse(&t);
        let (_, test) = call(&app, "GET", t["test_url"].as_str().unwrap(), None).await;
        let (method, image) = test.split_once('-').unwrap();
        let score = match (method, image) {
            ("ssimnet", "0") => 60.0,
            ("ssimnet", "1") => 80.0,
            ("ssimnet", _) => 50.0,
            _ => 70.0,
        };
        if method == "ssimnet" {
            expected_ssim.push(score);
        }
        let rating = json!({ "session": id, "trial_token": t["trial_token"], "score": score });
        let (st, ack) = call(&app, "POST", "/api/rating", Some(rating)).await;
        assert_eq!(st, StatusCode::OK);
        assert_blind(&ack);
        if k < 7 {
            assert_blind(&call(&app, "GET", "/api/results", None).await.1);
        }
    }
    let r = parse(&call(&app, "GET", "/api/results", None).await.1);
    assert_eq!(r["complete"], json!(true));
    let methods = r["methods"].as_array().unwrap();
    assert_eq!(methods.len(), 2);
    let ssim = &methods[0];
    assert_eq!(ssim["method"], json!("ssimnet"));
    // {60, 80, 50, 50}: mean 60, sample variance (0 + 400 + 100 + 100) / 3
    assert_eq!(ssim["mos"], json!(60.0));
    let sd = (600.0f64 / 3.0).sqrt();
    assert!((ssim["sd"].as_f64().unwrap() - sd).abs() < 1e-12);
    assert!((ssim["ci95"].as_f64().unwrap() - 1.96 * sd / 2.0).abs() < 1e-12);
    let gan = &methods[1];
    assert_eq!((gan["method"].clone(), gan["mos"].clone(), gan["sd"].clone()), (json!("gannet"), json!(70.0), json!(0.0)));
    let images = r["images"].as_array().unwrap();
    assert_eq!(images.len(), 8);
    let img0 = images.iter().find(|i| i["image"] == "img0.png" && i["method"] == "ssimnet").unwrap();
    assert_eq!((img0["mos"].clone(), img0["degenerate"].clone(), img0["sd"].clone()), (json!(60.0), json!(true), Value::Null));
    expected_ssim.sort_by(f64::total_cmp);
    assert_eq!(expected_ssim, vec![50.0, 50.0, 60.0, 80.0]);
}

#[test]
fn sessions_survive_restart() {
    let dir = study_dir(2);
    let log = dir.path().join("events.ndjson");
    let (id, order, token) = {
        let study = Study::open(definition(dir.path()), &log, None).unwrap();
        let id = study.create_session().unwrap().session;
        let token = match study.get_trial(&id, 0).unwrap() {
            ar_study::TrialView::Trial { trial_token, .. } => trial_token,
            other => panic!("{other:?}"),
        };
        study.submit_rating(&id, &token, 12.5).unwrap();
        (id.clone(), study.session_order(&id).unwrap(), token)
    };
    let study = Study::open(definition(dir.path()), &log, None).unwrap();
    assert_eq!(study.session_order(&id).unwrap(), order);
    assert_eq!(study.results().ratings, 1);
    assert!(matches!(study.submit_rating(&id, &token, 40.0), Err(StudyError::Conflict(_))));
    let lines = std::fs::read_to_string(&log).unwrap();
    assert_eq!(lines.lines().count(), 3);
    assert!(lines.lines().all(|l| serde_json::from_str::<Value>(l).is_ok()));

    let other = StudyDefinition::from_dir(dir.path(), &["gannet".to_string()]).unwrap();
    assert!(matches!(Study::open(other, &log, None), Err(StudyError::Invalid(_))));
}
