mod common;

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use tetriblend_app::service::{flatten, router, serve_listener, BlendResponse, MeshResponse};
use tetriblend_app::{Session, SessionInfo};
use tetriblend_core::{blend, BlendFunction, BlendRequest, Energy, TetrisationMethod};
use tower::ServiceExt;

fn session() -> Arc<Session> {
    let names = vec!["rest".into(), "bent".into(), "twisted".into()];
    Arc::new(
        Session::from_meshes(common::bar(), common::bar_targets(), names, TetrisationMethod::VertexNormal, None)
            .unwrap(),
    )
}

async fn call(session: &Arc<Session>, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let response = router(session.clone()).oneshot(request).await.unwrap();
    let status = response.status();
    (status, to_bytes(response.into_body(), usize::MAX).await.unwrap().to_vec())
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap()
}

#[test]
fn session_and_meshes() {
    let session = session();
    runtime().block_on(async {
        let (status, body) = call(&session, "GET", "/api/session", None).await;
        assert_eq!(status, StatusCode::OK);
        let info: serde_json::Value = serde_json::from_slice(&body).unwrap();
        assert_eq!(info["m"], 2);
        assert_eq!(info["method"], "vertex");
        assert_eq!(info["shapeNames"][1], "bent");
        assert_eq!(info["vertexCount"], session.info().vertex_count);
        assert_eq!(info["tetCount"], session.model.tet_count());
        let expected: SessionInfo = session.info();
        assert_eq!(info["faceCount"], expected.face_count);

        for j in 0..3 {
            let (status, body) = call(&session, "GET", &format!("/api/mesh/{j}"), None).await;
            assert_eq!(status, StatusCode::OK);
            let mesh: MeshResponse = serde_json::from_slice(&body).unwrap();
            assert_eq!(mesh.vertices, flatten(&session.shapes[j].vertices));
            assert_eq!(mesh.faces, session.shapes[j].faces);
        }
        assert_eq!(call(&session, "GET", "/api/mesh/3", None).await.0, StatusCode::NOT_FOUND);
        assert_eq!(call(&session, "GET", "/healthz", None).await.0, StatusCode::OK);
    });
}

#[test]
fn blend_over_the_router() {
    let session = session();
    runtime().block_on(async {
        let body = r#"{"weights":[0,0],"energy":"ET","blendFn":"C"}"#;
        let (status, bytes) = call(&session, "POST", "/api/blend", Some(body)).await;
        assert_eq!(status, StatusCode::OK);
        let response: BlendResponse = serde_json::from_slice(&bytes).unwrap();
        let rest = flatten(&session.shapes[0].vertices);
        let diag = session.shapes[0].bbox_diagonal();
        let dev = response.vertices.iter().zip(&rest).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-9 * diag);

        let body = r#"{"weights":[1.0,1.5],"energy":"ES","blendFn":"P","requestId":7}"#;
        let (status, bytes) = call(&session, "POST", "/api/blend", Some(body)).await;
        assert_eq!(status, StatusCode::OK);
        let first: BlendResponse = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(first.request_id, Some(7));
        let (expected, report) =
            blend(&session.model, &BlendRequest::new(vec![1.0, 1.5], Energy::Es, BlendFunction::P)).unwrap();
        assert_eq!(first.vertices, flatten(&expected.vertices));
        assert_eq!(first.report.iterations, report.iterations);

        // Replays agree on everything but the timing.
        let (_, bytes) = call(&session, "POST", "/api/blend", Some(body)).await;
        let mut second: BlendResponse = serde_json::from_slice(&bytes).unwrap();
        second.report.millis = first.report.millis;
        assert_eq!(second, first);
    });
}

#[test]
fn request_errors() {
    let session = session();
    runtime().block_on(async {
        let post = |body: &'static str| {
            let session = session.clone();
            async move { call(&session, "POST", "/api/blend", Some(body)).await }
        };
        assert_eq!(post(r#"{"weights":[1]}"#).await.0, StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(post(r#"{"weights":[1,0],"method":"face"}"#).await.0, StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(post(r#"{"weights":[1,0],"method":"vertex"}"#).await.0, StatusCode::OK);
        assert_eq!(post(r#"{"weights":"#).await.0, StatusCode::BAD_REQUEST);
        assert_eq!(post(r#"{"weights":[1,0],"energy":"EX"}"#).await.0, StatusCode::BAD_REQUEST);
        assert_eq!(post(r#"{}"#).await.0, StatusCode::BAD_REQUEST);
        let (status, body) = post(r#"{"weights":[1]}"#).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
        let err: serde_json::Value = serde_json::from_slice(&body).unwrap();
        assert!(err["error"].as_str().unwrap().contains("expected 2 weights"));
    });
}

#[test]
fn solver_errors_are_500() {
    // Weights this large overflow the matrix exponential.
    let session = session();
    runtime().block_on(async {
        let (status, body) = call(&session, "POST", "/api/blend", Some(r#"{"weights":[1e308,1e308]}"#)).await;
        assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR, "{}", String::from_utf8_lossy(&body));
    });
}

#[test]
fn real_socket_round_trip() {
    let session = session();
    let rt = runtime();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = rt.spawn(serve_listener(listener, session.clone(), async {
        let _ = stopped.await;
    }));

    let base = format!("http://{addr}");
    let text = ureq::get(&format!("{base}/api/session")).call().unwrap().body_mut().read_to_string().unwrap();
    let info: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(info["m"], 2);

    let body = r#"{"weights":[0.5,0.5],"energy":"ES","blendFn":"C"}"#;
    let text = ureq::post(&format!("{base}/api/blend"))
        .header("content-type", "application/json")
        .send(body)
        .unwrap()
        .body_mut()
        .read_to_string()
        .unwrap();
    let response: BlendResponse = serde_json::from_str(&text).unwrap();
    let (expected, _) =
        blend(&session.model, &BlendRequest::new(vec![0.5, 0.5], Energy::Es, BlendFunction::C)).unwrap();
    assert_eq!(response.vertices, flatten(&expected.vertices));

    match ureq::post(&format!("{base}/api/blend")).send(r#"{"weights":[1]}"#) {
        Err(ureq::Error::StatusCode(code)) => assert_eq!(code, 422),
        other => panic!("unexpected {other:?}"),
    }

    stop.send(()).unwrap();
    rt.block_on(server).unwrap().unwrap();
}
