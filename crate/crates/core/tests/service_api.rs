mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use common::*;
use vizlm::config::AppConfig;
use vizlm::gateway::{BackendConfig, MockRule};
use vizlm::service::{router, AppState};
use vizlm::study::SideScores;

fn app(dir: &std::path::Path) -> (Router, Arc<AppState>) {
    let mut cfg = AppConfig {
        data_dir: dir.to_path_buf(),
        ..AppConfig::default()
    };
    cfg.backends.insert(
        "fig5".into(),
        BackendConfig {
            model_name: "fig5-mock".into(),
            rate_limit: 0,
            mock: Some(vec![
                MockRule {
                    pattern: "Query: Which product lines generate the most revenue\\?".into(),
                    response: fig5_response(),
                },
                MockRule {
                    pattern: "Query: gibberish".into(),
                    response: "I am not sure what chart you want.".into(),
                },
            ]),
            ..BackendConfig::default()
        },
    );
    let state = Arc::new(AppState::open(cfg).unwrap().with_truth(mini_corpus()));
    (router(state.clone()), state)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn upload_sales(app: &Router) -> String {
    let csv = std::fs::read_to_string(fixtures().join("mini-corpus/sales.csv")).unwrap();
    let (status, body) = call(app, "POST", "/datasets", Some(json!({"name": "sales", "csv": csv}))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn datasets_round_trip_and_persist() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let id = upload_sales(&app).await;
    assert_eq!(upload_sales(&app).await, id);
    let (status, body) = call(&app, "GET", &format!("/datasets/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["sketch"]["features"][0], json!({"name": "order_date", "type": "temporal"}));
    assert_eq!(body["sketch"]["row_count"], 41);

    let (status, body) = call(&app, "GET", "/datasets/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "DatasetNotFound");

    // reopened from disk
    let (again, _) = self::app(dir.path());
    assert_eq!(call(&again, "GET", &format!("/datasets/{id}"), None).await.0, StatusCode::OK);
}

#[tokio::test]
async fn bad_csv_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let (status, body) = call(&app, "POST", "/datasets", Some(json!({"name": "x", "csv": "a,b\n1\n"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "DatasetError");
}

#[tokio::test]
async fn revenue_query_returns_bar_chart_with_narrative() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let id = upload_sales(&app).await;
    let (status, body) = call(
        &app,
        "POST",
        "/recommend",
        Some(json!({"dataset_id": id, "query": FIG5_QUERY, "backend": "fig5"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let rec = &body["recommendation"];
    assert_eq!(rec["doc"]["mark"], "bar");
    assert_eq!(rec["doc"]["data"]["values"][0]["product_line"], "Trains");
    assert_eq!(rec["narrative"]["suggestions"].as_array().unwrap().len(), 3);
    assert!(!rec["narrative"]["caption"].as_str().unwrap().is_empty());
    assert_eq!(body["warnings"], json!([]));
}

#[tokio::test]
async fn recommend_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let (status, body) = call(
        &app,
        "POST",
        "/recommend",
        Some(json!({"dataset_id": "missing", "query": "q", "backend": "fig5"})),
    )
    .await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::NOT_FOUND, Some("DatasetNotFound")));

    let id = upload_sales(&app).await;
    let (status, body) = call(
        &app,
        "POST",
        "/recommend",
        Some(json!({"dataset_id": id, "query": "gibberish", "backend": "fig5"})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["raw_text"], "I am not sure what chart you want.");

    let (status, body) = call(
        &app,
        "POST",
        "/recommend",
        Some(json!({"dataset_id": id, "query": "q", "backend": "nobody"})),
    )
    .await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::BAD_REQUEST, Some("UnknownBackend")));
}

#[tokio::test]
async fn study_flow() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let pool = serde_json::to_value(study_pool(12, ["alpha-model", "beta-model"])).unwrap();
    assert_eq!(call(&app, "POST", "/study/samples", Some(pool)).await.0, StatusCode::CREATED);

    let (status, body) = call(&app, "GET", "/study/summary", None).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::CONFLICT, Some("EmptyInput")));

    let (status, next) = call(&app, "GET", "/study/next?participant=p1", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!((next["done"].as_u64(), next["total"].as_u64()), (Some(0), Some(10)));
    let sample_id = next["sample"]["sample_id"].as_str().unwrap().to_string();
    let text = next.to_string();
    assert!(!text.contains("alpha-model") && !text.contains("beta-model"));

    let mut rating = json!({
        "participant_id": "p1",
        "sample_id": sample_id,
        "a": SideScores::uniform(4),
        "b": SideScores::uniform(2),
        "expertise": 4,
    });
    assert_eq!(call(&app, "POST", "/study/rating", Some(rating.clone())).await.0, StatusCode::OK);
    let (_, next) = call(&app, "GET", "/study/next?participant=p1", None).await;
    assert_eq!(next["done"].as_u64(), Some(1));

    rating["a"]["vis_quality"] = json!(6);
    let (status, body) = call(&app, "POST", "/study/rating", Some(rating.clone())).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("RangeError")));

    rating["a"]["vis_quality"] = json!(3);
    rating["participant_id"] = json!("stranger");
    let (status, body) = call(&app, "POST", "/study/rating", Some(rating)).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::FORBIDDEN, Some("NotAssigned")));

    let (status, summary) = call(&app, "GET", "/study/summary", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(summary["n_ratings"], 1);
    let models = summary["models"].as_object().unwrap();
    assert!(models.contains_key("alpha-model") && models.contains_key("beta-model"));
}

#[tokio::test]
async fn eval_run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let preds: Vec<Value> = mini_corpus()
        .iter()
        .map(|t| json!({"sample_id": t.id, "completion": response_text(&vizlm::vegazero::render(&t.spec), &t.query)}))
        .collect();
    let (status, report) = call(&app, "POST", "/eval/run", Some(json!({"model": "oracle", "predictions": preds}))).await;
    assert_eq!(status, StatusCode::OK, "{report}");
    assert_eq!(report["n_samples"], 60);

    let (status, body) = call(&app, "GET", "/eval/report", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["reports"].as_array().unwrap().len(), 1);
    assert!(body["table"].as_str().unwrap().contains("oracle"));
    assert_eq!(call(&app, "GET", "/eval/report?model=oracle", None).await.0, StatusCode::OK);
    assert_eq!(call(&app, "GET", "/eval/report?model=other", None).await.0, StatusCode::NOT_FOUND);

    let bad = json!({"model": "m", "predictions": [{"sample_id": "zzz", "completion": "x"}]});
    assert_eq!(call(&app, "POST", "/eval/run", Some(bad)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
}
