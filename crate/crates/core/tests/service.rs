mod common;

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use churn_recourse::constraints::ViolationKind;
use churn_recourse::dataset::{Direction, FeatureMeta};
use churn_recourse::service::{
    router, ErrorBody, PredictResponse, RecourseResponse, ServiceState, WhatIfResponse,
};
use http_body_util::BodyExt;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fx {
    trained: common::Trained,
    state: Arc<ServiceState>,
}

fn fx() -> &'static Fx {
    static FX: OnceLock<Fx> = OnceLock::new();
    FX.get_or_init(|| {
        let trained = common::trained(600, 5, 33);
        let state = ServiceState::new(Arc::clone(&trained.forest), trained.gan.clone(), trained.test.meta.clone()).unwrap();
        Fx { trained, state: Arc::new(state) }
    })
}

async fn call(method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(Arc::clone(&fx().state)).oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn ok<T: DeserializeOwned>(method: &str, uri: &str, body: Value) -> T {
    let (s, b) = call(method, uri, Some(body)).await;
    assert_eq!(s, StatusCode::OK, "{}", String::from_utf8_lossy(&b));
    serde_json::from_slice(&b).unwrap()
}

async fn err(uri: &str, body: Value) -> (StatusCode, ErrorBody) {
    let (s, b) = call("POST", uri, Some(body)).await;
    (s, serde_json::from_slice(&b).unwrap())
}

fn user_of_class(c: u8) -> Vec<f64> {
    let f = &fx().trained;
    f.test.records.iter().find(|r| f.forest.classify(&r.features).unwrap() == c).unwrap().features.clone()
}

#[tokio::test]
async fn features_round_trip_the_meta() {
    let (s, a) = call("GET", "/features", None).await;
    assert_eq!(s, StatusCode::OK);
    let meta: Vec<FeatureMeta> = serde_json::from_slice(&a).unwrap();
    assert_eq!(meta, fx().trained.test.meta);
    let (_, b) = call("GET", "/features", None).await;
    assert_eq!(a, b);
}

#[tokio::test]
async fn predict_matches_the_forest_and_is_repeatable() {
    let f = &fx().trained;
    for r in f.test.records.iter().take(20) {
        let p: PredictResponse = ok("POST", "/predict", json!({ "features": r.features })).await;
        assert_eq!(p.class, f.forest.classify(&r.features).unwrap());
        assert_eq!(p.score, f.forest.class_score(&r.features).unwrap());
        assert!(p.survival_curve.probs.windows(2).all(|w| w[0] >= w[1]));
        let again: PredictResponse = ok("POST", "/predict", json!({ "features": r.features })).await;
        assert_eq!(p, again);
    }
}

#[tokio::test]
async fn out_of_bounds_or_wrong_length_is_400_naming_the_feature() {
    let mut x = user_of_class(0);
    x[3] = 7.5;
    let (s, e) = err("/predict", json!({ "features": x })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(e.detail.contains(&fx().trained.test.meta[3].name), "{}", e.detail);
    assert!(e.detail.contains("feature 3"));

    let (s, e) = err("/recourse", json!({ "features": [0.1, 0.2] })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(e.detail.contains("expected"));

    let (s, e) = err("/predict", json!({ "wrong": 1 })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e.error, "invalid_request");
}

#[tokio::test]
async fn recourse_for_retained_user_is_409() {
    let (s, e) = err("/recourse", json!({ "features": user_of_class(1) })).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(e.error, "recourse_not_applicable");
}

#[tokio::test]
async fn recourse_response_is_coherent() {
    let x = user_of_class(0);
    let r: RecourseResponse = ok("POST", "/recourse", json!({ "features": x })).await;
    assert_eq!(r.pre_class, 0);
    for ((c, d), xi) in r.counterfactual.iter().zip(&r.delta).zip(&x) {
        assert!((c - (xi + d)).abs() <= 1e-9);
    }
    assert!(r.per_feature_changes.windows(2).all(|w| w[0].delta.abs() >= w[1].delta.abs()));
    let cost: f64 = r.delta.iter().map(|d| d * d).sum();
    assert!((cost - r.cost_sq).abs() <= 1e-12);
}

#[tokio::test]
async fn whatif_with_the_recourse_reproduces_post_class() {
    let f = &fx().trained;
    let meta = &f.test.meta;
    let mut flipped = 0;
    for rec in f.test.records.iter().filter(|r| f.forest.classify(&r.features).unwrap() == 0).take(25) {
        let r: RecourseResponse = ok("POST", "/recourse", json!({ "features": rec.features })).await;
        let edits: BTreeMap<&str, f64> = meta
            .iter()
            .zip(&r.counterfactual)
            .zip(&r.delta)
            .filter(|(_, d)| **d != 0.0)
            .map(|((m, v), _)| (m.name.as_str(), *v))
            .collect();
        let w: WhatIfResponse = ok("POST", "/whatif", json!({ "features": rec.features, "edits": edits })).await;
        assert_eq!(w.class, r.post_class);
        assert!(w.violated_constraints.is_empty(), "{:?}", w.violated_constraints);
        flipped += usize::from(w.class == 1);
    }
    assert!(flipped > 0);
}

#[tokio::test]
async fn whatif_without_edits_equals_predict() {
    let x = user_of_class(0);
    let p: PredictResponse = ok("POST", "/predict", json!({ "features": x })).await;
    let w: WhatIfResponse = ok("POST", "/whatif", json!({ "features": x, "edits": {} })).await;
    assert_eq!((w.class, w.score, w.median_lifetime_days, w.median_truncated), (p.class, p.score, p.median_lifetime_days, p.median_truncated));
    assert_eq!(w.features, x);
}

#[tokio::test]
async fn whatif_reports_violations_without_rejecting() {
    let meta = &fx().trained.test.meta;
    let x = user_of_class(0);
    let inc = meta.iter().position(|m| m.direction == Direction::IncreaseOnly).unwrap();
    let locked = meta.iter().position(|m| !m.actionable).unwrap();
    let edits = json!({ meta[inc].name.clone(): x[inc] - 0.05, meta[locked].name.clone(): 0.5 });
    let w: WhatIfResponse = ok("POST", "/whatif", json!({ "features": x, "edits": edits })).await;
    let kinds: Vec<(usize, ViolationKind)> = w.violated_constraints.iter().map(|v| (v.index, v.kind)).collect();
    assert!(kinds.contains(&(inc, ViolationKind::Direction)), "{kinds:?}");
    if x[locked] != 0.5 {
        assert!(kinds.contains(&(locked, ViolationKind::NotActionable)), "{kinds:?}");
    }
}

#[tokio::test]
async fn whatif_unknown_feature_is_400() {
    let (s, e) = err("/whatif", json!({ "features": user_of_class(0), "edits": { "no_such_feature": 1.0 } })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(e.detail.contains("no_such_feature"));
}

#[test]
fn state_rejects_mismatched_meta() {
    let f = &fx().trained;
    let short = f.test.meta[..3].to_vec();
    assert!(ServiceState::new(Arc::clone(&f.forest), f.gan.clone(), short).is_err());
}
