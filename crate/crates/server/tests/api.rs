use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use lsm_core::ingest::{generate_synthetic_map, write_map_archive, SyntheticSpec};
use lsm_core::metrics::binary_metrics;
use lsm_core::projection::ProjectionImage;
use lsm_core::report::{predict_vlmaps, run_queryability, truth_mask, EvalConfig, QueryMode};
use lsm_core::{MapBundle, PostProcessParams, QueryLexicon};
use lsm_server::{router, AppState, MapList, QueryRequest, QueryResponse};
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture(noise: f64) -> (MapBundle, QueryLexicon) {
    generate_synthetic_map(&SyntheticSpec::new(3, 64, 16, noise, 5)).unwrap()
}

fn state(noise: f64) -> Arc<AppState> {
    let (map, lex) = fixture(noise);
    Arc::new(AppState::new(vec![map], lex))
}

async fn call(state: Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(state).oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn error_text(body: &[u8]) -> String {
    serde_json::from_slice::<Value>(body).unwrap()["error"].as_str().unwrap().to_owned()
}

#[tokio::test]
async fn lists_loaded_maps_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let (lex_a, lex_b);
    {
        let (a, l) = generate_synthetic_map(&SyntheticSpec::new(2, 27, 8, 0.0, 1)).unwrap();
        let (b, l2) = generate_synthetic_map(&SyntheticSpec::new(2, 27, 8, 0.0, 2)).unwrap();
        write_map_archive(&a, dir.path().join("a.lsm")).unwrap();
        write_map_archive(&b, dir.path().join("b.lsm")).unwrap();
        lex_a = l;
        lex_b = l2;
    }
    assert_eq!(lex_a.dim, lex_b.dim);
    std::fs::write(dir.path().join("broken.lsm"), b"LSMMgarbage").unwrap();
    let st = Arc::new(AppState::load(dir.path(), lex_a).unwrap());
    let (status, body) = call(st, "GET", "/api/maps", None).await;
    assert_eq!(status, StatusCode::OK);
    let list: MapList = serde_json::from_slice(&body).unwrap();
    assert_eq!(list.maps.len(), 2);
    assert_eq!(list.diagnostics.len(), 1);
    assert_eq!(list.diagnostics[0].file, "broken.lsm");
    assert_eq!(list.maps[0].map_id, "a");
    assert_eq!(list.maps[0].voxel_count, 54);
    assert_eq!(list.maps[0].labels, vec!["class_0", "class_1"]);

    let empty = tempfile::tempdir().unwrap();
    let st = Arc::new(AppState::load(empty.path(), fixture(0.0).1).unwrap());
    let (_, body) = call(st, "GET", "/api/maps", None).await;
    let list: MapList = serde_json::from_slice(&body).unwrap();
    assert!(list.maps.is_empty() && list.diagnostics.is_empty());
}

#[tokio::test]
async fn exact_class_mean_scores_perfectly() {
    let st = state(0.0);
    let id = st.maps.keys().next().unwrap().clone();
    for params in [PostProcessParams::RAW, PostProcessParams::default()] {
        let body = json!({ "key": "class_1", "truth_label": 1, "params": params });
        let (status, body) = call(st.clone(), "POST", &format!("/api/maps/{id}/query"), Some(body)).await;
        assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
        let r: QueryResponse = serde_json::from_slice(&body).unwrap();
        assert_eq!(r.metrics.unwrap().f1, 1.0);
        assert_eq!(r.positives, 64);
        assert_eq!(r.mask.iter().map(|n| *n as usize).sum::<usize>(), 192);
        assert_eq!(r.score_stats.unwrap().max, 1.0);
        assert_eq!(r.projection.values.len(), r.projection.width * r.projection.height);
    }
}

#[tokio::test]
async fn repeated_requests_are_byte_identical() {
    let st = state(0.1);
    let id = st.maps.keys().next().unwrap().clone();
    let body = json!({ "key": "class_0", "truth_label": 0, "axis": "x", "aggregate": "mean" });
    let uri = format!("/api/maps/{id}/query");
    let (s1, b1) = call(st.clone(), "POST", &uri, Some(body.clone())).await;
    let (s2, b2) = call(st.clone(), "POST", &uri, Some(body.clone())).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(b1, b2);

    // Concurrent interleaving changes nothing either.
    let handles: Vec<_> = (0..8)
        .map(|_| tokio::spawn(call(st.clone(), "POST", uri.clone().leak(), Some(body.clone()))))
        .collect();
    for h in handles {
        assert_eq!(h.await.unwrap().1, b1);
    }
}

#[tokio::test]
async fn matches_library_and_batch_report() {
    let (map, lex) = fixture(0.15);
    let st = Arc::new(AppState::new(vec![map.clone()], lex.clone()));
    let config = EvalConfig::default();
    let report = run_queryability(std::slice::from_ref(&map), &lex, &config).unwrap();
    for row in &report.queryability.unwrap().rows {
        let body = json!({ "key": row.query, "truth_label": row.label });
        let (_, bytes) = call(st.clone(), "POST", &format!("/api/maps/{}/query", map.map_id), Some(body)).await;
        let r: QueryResponse = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(r.metrics.as_ref().unwrap(), &row.metrics);

        let q = lex.get(&row.query).unwrap();
        let other = lex.get("other").unwrap().to_vec();
        let mask = predict_vlmaps(&map, q, &[other], &config.params).unwrap();
        assert_eq!(r.mask, mask.run_lengths());
        let m = binary_metrics(&mask, &truth_mask(&map, row.label).unwrap()).unwrap();
        assert_eq!(serde_json::to_string(&m).unwrap(), serde_json::to_string(&r.metrics.unwrap()).unwrap());
    }

    let seg = EvalConfig {
        mode: QueryMode::Segmentation,
        ..Default::default()
    };
    let report = run_queryability(std::slice::from_ref(&map), &lex, &seg).unwrap();
    for row in &report.queryability.unwrap().rows {
        let mut req = QueryRequest::for_key(&row.query);
        req.mode = QueryMode::Segmentation;
        req.truth_label = Some(row.label);
        let (_, bytes) = call(
            st.clone(),
            "POST",
            &format!("/api/maps/{}/query", map.map_id),
            Some(serde_json::to_value(&req).unwrap()),
        )
        .await;
        let r: QueryResponse = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(r.metrics.unwrap(), row.metrics);
    }
}

#[tokio::test]
async fn raw_embedding_equals_key() {
    let st = state(0.1);
    let id = st.maps.keys().next().unwrap().clone();
    let e = st.lexicon.get("class_2").unwrap().to_vec();
    let uri = format!("/api/maps/{id}/query");
    let (_, by_key) = call(st.clone(), "POST", &uri, Some(json!({ "key": "class_2" }))).await;
    let (_, by_vec) = call(st.clone(), "POST", &uri, Some(json!({ "embedding": e }))).await;
    assert_eq!(by_key, by_vec);
}

#[tokio::test]
async fn query_errors() {
    let st = state(0.0);
    let id = st.maps.keys().next().unwrap().clone();
    let uri = format!("/api/maps/{id}/query");

    let (s, _) = call(st.clone(), "POST", "/api/maps/nope/query", Some(json!({ "key": "class_0" }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, b) = call(st.clone(), "POST", &uri, Some(json!({ "key": "sofa" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(error_text(&b).contains("sofa"));

    let (s, _) = call(st.clone(), "POST", &uri, Some(json!({ "key": "class_0", "embedding": [1.0] }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(st.clone(), "POST", &uri, Some(json!({}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(st.clone(), "POST", &uri, Some(json!({ "key": "class_0", "bogus": 1 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(st.clone(), "POST", &uri, Some(json!({ "key": "class_0", "truth_label": 9 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(st.clone(), "POST", &uri, Some(json!({ "key": "class_0", "prompt_engineering": true }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let req = Request::post(&uri).body(Body::from("{not json")).unwrap();
    assert_eq!(router(st.clone()).oneshot(req).await.unwrap().status(), StatusCode::BAD_REQUEST);

    let (s, _) = call(st.clone(), "POST", &uri, Some(json!({ "embedding": [1.0, 0.0, 0.0] }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn prompt_templates_are_averaged() {
    let (map, mut lex) = fixture(0.0);
    let base = lex.get("class_0").unwrap().to_vec();
    for t in ["a photo of a {}", "a {} in a room"] {
        lex.entries.insert(t.replace("{}", "class_0"), base.clone());
        lex.entries.insert(t.replace("{}", "other"), lex.get("other").unwrap().to_vec());
    }
    let templates = vec!["a photo of a {}".to_owned(), "a {} in a room".to_owned()];
    let id = map.map_id.clone();
    let st = Arc::new(AppState::new(vec![map], lex).with_prompt_templates(templates));
    let body = json!({ "key": "class_0", "prompt_engineering": true, "truth_label": 0, "params": PostProcessParams::RAW });
    let (s, b) = call(st, "POST", &format!("/api/maps/{id}/query"), Some(body)).await;
    assert_eq!(s, StatusCode::OK);
    let r: QueryResponse = serde_json::from_slice(&b).unwrap();
    assert_eq!(r.metrics.unwrap().f1, 1.0);
}

fn image(body: &[u8]) -> ProjectionImage {
    serde_json::from_slice(body).unwrap()
}

#[tokio::test]
async fn ground_truth_projections() {
    use lsm_core::{EmbeddingGrid, LabelVocabulary, SemanticGrid, VoxelIndex};
    use std::collections::BTreeMap;

    // A full z-column of "wall" at (0,0) and a single "lamp" voxel at (2,1,0).
    let mut cells = BTreeMap::new();
    let mut labels = BTreeMap::new();
    for z in 0..4 {
        cells.insert(VoxelIndex::new(0, 0, z), vec![1.0, 0.0]);
        labels.insert(VoxelIndex::new(0, 0, z), 0);
    }
    cells.insert(VoxelIndex::new(2, 1, 0), vec![0.0, 1.0]);
    labels.insert(VoxelIndex::new(2, 1, 0), 1);
    let vocab = LabelVocabulary::new(vec!["wall".into(), "lamp".into(), "door".into()]).unwrap();
    let map = MapBundle::new(
        "room",
        EmbeddingGrid::from_cells(0.05, 2, cells).unwrap(),
        Some(SemanticGrid::new(labels, vocab).unwrap()),
        None,
    )
    .unwrap();
    let lex = QueryLexicon::new(2, BTreeMap::new()).unwrap();
    let st = Arc::new(AppState::new(vec![map], lex));

    let (s, b) = call(st.clone(), "GET", "/api/maps/room/groundtruth?label=0&axis=z", None).await;
    assert_eq!(s, StatusCode::OK);
    let img = image(&b);
    assert_eq!((img.width, img.height), (3, 2));
    assert_eq!(img.values, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

    let (_, b) = call(st.clone(), "GET", "/api/maps/room/groundtruth?label=lamp", None).await;
    let img = image(&b);
    assert_eq!(img.values.iter().filter(|v| **v != 0.0).count(), 1);
    assert_eq!(img.get(2, 1), Some(1.0));

    let (_, b) = call(st.clone(), "GET", "/api/maps/room/groundtruth?label=2&axis=y", None).await;
    assert!(image(&b).values.iter().all(|v| *v == 0.0));

    for bad in ["label=7", "label=sofa", "label=0&axis=w", ""] {
        let (s, _) = call(st.clone(), "GET", &format!("/api/maps/room/groundtruth?{bad}"), None).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{bad}");
    }
    let (s, _) = call(st, "GET", "/api/maps/hall/groundtruth?label=0", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

async fn stub_encoder(dim: usize, status: StatusCode) -> String {
    use axum::routing::post;
    use axum::Json;
    let app = axum::Router::new().route(
        "/encode",
        post(move |Json(req): Json<Value>| async move {
            let text = req["text"].as_str().unwrap_or_default();
            let mut e = vec![0.25f32; dim];
            e[0] = text.len() as f32;
            (status, Json(json!({ "embedding": e })))
        }),
    );
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}/encode")
}

#[tokio::test]
async fn encode_not_configured() {
    let (s, _) = call(state(0.0), "POST", "/api/encode", Some(json!({ "text": "chair" }))).await;
    assert_eq!(s, StatusCode::NOT_IMPLEMENTED);
}

#[tokio::test(flavor = "multi_thread")]
async fn encode_proxies_to_upstream() {
    let (map, lex) = fixture(0.0);
    let url = stub_encoder(16, StatusCode::OK).await;
    let st = Arc::new(AppState::new(vec![map.clone()], lex.clone()).with_encoder_url(Some(url)));
    let (s, b) = call(st, "POST", "/api/encode", Some(json!({ "text": "chair" }))).await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_slice(&b).unwrap();
    let mut expected = vec![0.25f32; 16];
    expected[0] = 5.0;
    assert_eq!(v, json!({ "embedding": expected }));

    let url = stub_encoder(7, StatusCode::OK).await;
    let st = Arc::new(AppState::new(vec![map.clone()], lex.clone()).with_encoder_url(Some(url)));
    let (s, _) = call(st, "POST", "/api/encode", Some(json!({ "text": "chair" }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let url = stub_encoder(16, StatusCode::INTERNAL_SERVER_ERROR).await;
    let st = Arc::new(AppState::new(vec![map.clone()], lex.clone()).with_encoder_url(Some(url)));
    let (s, _) = call(st, "POST", "/api/encode", Some(json!({ "text": "chair" }))).await;
    assert_eq!(s, StatusCode::BAD_GATEWAY);

    // Nothing listens on a freshly released port.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let st = Arc::new(AppState::new(vec![map], lex).with_encoder_url(Some(format!("http://127.0.0.1:{port}/x"))));
    let (s, _) = call(st, "POST", "/api/encode", Some(json!({ "text": "chair" }))).await;
    assert_eq!(s, StatusCode::BAD_GATEWAY);
}

#[tokio::test]
async fn cors_headers_present() {
    let req = Request::get("/api/maps")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = router(state(0.0)).oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
}
