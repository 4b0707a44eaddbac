mod common;

use common::{fixture_bytes, schema_validate, TestServer};
use serde_json::{json, Value};
use wrangle::server::ServerConfig;

async fn fixture_session(srv: &TestServer) -> String {
    let (status, up) = srv.upload("income.csv", fixture_bytes()).await;
    assert_eq!(status, 201, "{up}");
    let (status, s) = srv.post("/api/sessions", &json!({ "dataset_id": up["dataset_id"] })).await;
    assert_eq!(status, 201, "{s}");
    s["session_id"].as_str().unwrap().to_string()
}

fn ok(name: &str, v: &Value) {
    schema_validate(name, v).unwrap_or_else(|e| panic!("{e}\n{v:#}"));
}

#[tokio::test(flavor = "multi_thread")]
async fn fixture_flow_conforms_to_schemas() {
    let srv = TestServer::start(ServerConfig::default()).await;
    let (status, health) = srv.get("/api/health").await;
    assert_eq!(status, 200);
    ok("Health", &health);

    let (_, up) = srv.upload("income.csv", fixture_bytes()).await;
    ok("UploadResponse", &up);
    assert_eq!(up["row_count"], 10);
    let (_, info) = srv.post("/api/sessions", &json!({ "dataset_id": up["dataset_id"] })).await;
    ok("SessionInfo", &info);
    let id = info["session_id"].as_str().unwrap();
    let base = format!("/api/sessions/{id}");

    let (_, anomalies) = srv.get(&format!("{base}/anomalies")).await;
    ok("AnomaliesResponse", &anomalies);
    let bhutan_missing = anomalies["records"].as_array().unwrap().iter().any(|r| {
        r["type"] == "missing_value" && r["group"]["group_by"] == "Country" && r["group"]["key"] == "Bhutan"
    });
    assert!(bhutan_missing);
    assert!(anomalies["ranked"].as_array().unwrap().len() <= 3);

    let (_, summary) = srv.get(&format!("{base}/summary")).await;
    ok("SummaryResponse", &summary);

    for kind in ["stacked_histogram", "scatter", "line", "heatmap"] {
        for mode in ["group_name", "error_type"] {
            let (status, chart) = srv
                .get(&format!("{base}/chart?group_by=Country&target=Income&kind={kind}&mode={mode}"))
                .await;
            assert_eq!(status, 200, "{chart}");
            ok("ChartPayload", &chart);
            assert_eq!(chart["groups"].as_array().unwrap().len(), 2);
        }
    }

    let idx = anomalies["records"]
        .as_array()
        .unwrap()
        .iter()
        .position(|r| r["type"] == "missing_value")
        .unwrap();
    let (_, sugg) = srv.post(&format!("{base}/suggestions"), &json!({ "record_index": idx })).await;
    ok("SuggestResponse", &sugg);
    let action = sugg["actions"][0].clone();
    assert_eq!(action["action"], "impute_group_mean");

    let (_, preview) = srv.post(&format!("{base}/preview"), &json!({ "action": action })).await;
    ok("Preview", &preview);
    let (status, committed) = srv.post(&format!("{base}/actions"), &json!({ "action": action })).await;
    assert_eq!(status, 200, "{committed}");
    ok("ActionResponse", &committed);
    assert_eq!(committed["version"], 1);
    assert!(committed["anomaly_delta"]["missing_value"].as_i64().unwrap() < 0);

    let (_, undone) = srv.post(&format!("{base}/undo"), &json!(null)).await;
    ok("ActionResponse", &undone);
    assert_eq!(undone["version"], 0);
    let (_, redone) = srv.post(&format!("{base}/redo"), &json!(null)).await;
    ok("ActionResponse", &redone);

    let (_, script) = srv.get(&format!("{base}/script")).await;
    ok("ScriptArtifact", &script);
    assert_eq!(script["action_count"], 1);
    let (_, export) = srv.get(&format!("{base}/export")).await;
    ok("SessionExport", &export);
    let (_, info) = srv.get(&base).await;
    ok("SessionInfo", &info);
}

#[tokio::test(flavor = "multi_thread")]
async fn errors_are_structured() {
    let srv = TestServer::start(ServerConfig::default()).await;
    let id = fixture_session(&srv).await;
    let (status, err) = srv.post(&format!("/api/sessions/{id}/undo"), &json!(null)).await;
    assert_eq!(status, 409);
    assert_eq!(err["code"], "NOTHING_TO_UNDO");
    ok("ApiError", &err);

    let (status, err) = srv
        .post(
            &format!("/api/sessions/{id}/actions"),
            &json!({ "action": { "action": "remove_rows", "rows": [99] } }),
        )
        .await;
    assert_eq!(status, 409);
    assert_eq!(err["code"], "STALE_ACTION");

    let (status, err) = srv
        .post(
            &format!("/api/sessions/{id}/actions"),
            &json!({ "action": { "action": "remove_rows", "rows": [0] }, "expected_version": 7 }),
        )
        .await;
    assert_eq!(status, 409);
    assert_eq!(err["code"], "VERSION_CONFLICT");

    let (status, err) = srv.post(&format!("/api/sessions/{id}/actions"), &json!({ "nope": 1 })).await;
    assert_eq!(status, 400);
    ok("ApiError", &err);

    let (status, err) = srv.get("/api/sessions/missing/anomalies").await;
    assert_eq!(status, 404);
    assert_eq!(err["code"], "SESSION_NOT_FOUND");

    let (status, err) = srv
        .get(&format!("/api/sessions/{id}/chart?group_by=Country&target=Income&kind=pie"))
        .await;
    assert_eq!(status, 400);
    assert_eq!(err["code"], "UNSUPPORTED_KIND");

    let (status, err) = srv.upload("bad.csv", b"a,b\n1\n".to_vec()).await;
    assert_eq!(status, 400);
    assert_eq!(err["code"], "MALFORMED_CSV");
}

#[tokio::test(flavor = "multi_thread")]
async fn oversized_upload_is_413() {
    let srv = TestServer::start(ServerConfig {
        max_upload_bytes: 1000,
        ..ServerConfig::default()
    })
    .await;
    let mut big = b"c,v\n".to_vec();
    while big.len() < 2048 {
        big.extend_from_slice(b"a,1\n");
    }
    let (status, err) = srv.upload("big.csv", big).await;
    assert_eq!(status, 413);
    assert_eq!(err["code"], "PAYLOAD_TOO_LARGE");
}

#[tokio::test(flavor = "multi_thread")]
async fn table_endpoint_matches_engine_serialization() {
    let srv = TestServer::start(ServerConfig::default()).await;
    let id = fixture_session(&srv).await;
    let (_, _) = srv
        .post(
            &format!("/api/sessions/{id}/actions"),
            &json!({ "action": { "action": "convert_cells", "cells": [{ "row": 7, "column": "Income" }] } }),
        )
        .await;
    let body = srv
        .http
        .get(srv.url(&format!("/api/sessions/{id}/table?format=csv")))
        .send()
        .await
        .unwrap()
        .text()
        .await
        .unwrap();

    let mut local = common::fixture_session();
    local
        .commit(wrangle::RepairAction::ConvertCells {
            cells: vec![wrangle::CellRef::new(7, "Income")],
        })
        .unwrap();
    assert_eq!(body, wrangle::serialize_csv(local.table(), local.csv_options()));
    assert!(body.contains("Lesotho,PhD,12000\n"));
}

#[tokio::test(flavor = "multi_thread")]
async fn repeated_reads_are_identical() {
    let srv = TestServer::start(ServerConfig::default()).await;
    let id = fixture_session(&srv).await;
    for path in ["anomalies", "summary", "chart?group_by=Degree&target=Income"] {
        let a = srv.get(&format!("/api/sessions/{id}/{path}")).await;
        let b = srv.get(&format!("/api/sessions/{id}/{path}")).await;
        assert_eq!(a, b, "{path}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_commits_are_linearized() {
    let srv = std::sync::Arc::new(TestServer::start(ServerConfig::default()).await);
    let (_, up) = srv
        .upload("many.csv", (0..40).fold(String::from("c,v\n"), |s, i| s + &format!("k{},{}\n", i % 4, i)).into_bytes())
        .await;
    let (_, s) = srv.post("/api/sessions", &json!({ "dataset_id": up["dataset_id"] })).await;
    let id = s["session_id"].as_str().unwrap().to_string();
    let mut tasks = Vec::new();
    for _ in 0..16 {
        let srv = srv.clone();
        let id = id.clone();
        tasks.push(tokio::spawn(async move {
            srv.post(
                &format!("/api/sessions/{id}/actions"),
                &json!({ "action": { "action": "remove_rows", "rows": [0] } }),
            )
            .await
            .0
        }));
    }
    let mut accepted = 0;
    for t in tasks {
        if t.await.unwrap() == 200 {
            accepted += 1;
        }
    }
    assert_eq!(accepted, 16);
    let (_, info) = srv.get(&format!("/api/sessions/{id}")).await;
    assert_eq!(info["version"], accepted);
    assert_eq!(info["undo_depth"], accepted);
}

#[tokio::test(flavor = "multi_thread")]
async fn evicted_sessions_are_restored() {
    let srv = TestServer::start(ServerConfig {
        session_cap: 1,
        ..ServerConfig::default()
    })
    .await;
    let first = fixture_session(&srv).await;
    let (status, _) = srv
        .post(
            &format!("/api/sessions/{first}/actions"),
            &json!({ "action": { "action": "remove_rows", "rows": [0, 1] } }),
        )
        .await;
    assert_eq!(status, 200);
    let _second = fixture_session(&srv).await;
    let (status, info) = srv.get(&format!("/api/sessions/{first}")).await;
    assert_eq!(status, 200);
    assert_eq!(info["version"], 1);
    assert_eq!(info["undo_depth"], 1);
}

/// Minimal embedding service answering with fixed orthogonal vectors.
async fn mock_embeddings() -> String {
    use axum::routing::post;
    use axum::Json;
    async fn embed(Json(body): Json<Value>) -> Json<Value> {
        let n = body["inputs"].as_array().map_or(0, |a| a.len());
        let vectors: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        Json(json!({ "embeddings": vectors }))
    }
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, axum::Router::new().route("/embed", post(embed))).await });
    format!("http://{addr}/embed")
}

#[tokio::test(flavor = "multi_thread")]
async fn embedding_client_maps_cosine() {
    use wrangle::server::embedding::EmbeddingClient;
    let endpoint = mock_embeddings().await;
    let client = EmbeddingClient::new(endpoint, std::time::Duration::from_secs(5));
    let sim = client.similarity_for(&["Bhutan".into(), "Lesotho".into()]).await;
    assert_eq!(sim.similarity("Bhutan", "Lesotho"), 0.5);
    assert_eq!(sim.similarity("Bhutan", "Bhutan"), 1.0);

    // unreachable endpoint falls back to the default rules
    let dead = EmbeddingClient::new("http://127.0.0.1:9/embed", std::time::Duration::from_millis(500));
    let sim = dead.similarity_for(&["USA".into()]).await;
    assert_eq!(sim.similarity("USA", "United States of America"), 1.0);
}

#[tokio::test(flavor = "multi_thread")]
async fn embedding_backed_merge_suggestions() {
    let endpoint = mock_embeddings().await;
    let srv = TestServer::start(ServerConfig {
        embedding_endpoint: Some(endpoint),
        ..ServerConfig::default()
    })
    .await;
    let csv = "Country,Income\nUSA,1\nUnited States of America,2\nUnited States of America,3\n";
    let (_, up) = srv.upload("m.csv", csv.as_bytes().to_vec()).await;
    let (_, s) = srv
        .post("/api/sessions", &json!({ "dataset_id": up["dataset_id"], "config": { "merge_min_similarity": 0.4 } }))
        .await;
    let id = s["session_id"].as_str().unwrap();
    let (_, an) = srv.get(&format!("/api/sessions/{id}/anomalies")).await;
    let idx = an["records"].as_array().unwrap().iter().position(|r| r["type"] == "incomplete_group").unwrap();
    let (status, sugg) = srv.post(&format!("/api/sessions/{id}/suggestions"), &json!({ "record_index": idx })).await;
    assert_eq!(status, 200, "{sugg}");
    // orthogonal mock vectors score 0.5, which clears the 0.4 threshold
    assert_eq!(sugg["actions"][0]["action"], "merge_groups");
    assert_eq!(sugg["actions"][0]["dest_key"], "United States of America");
}
