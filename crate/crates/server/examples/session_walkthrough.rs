//! Drives the session service in-process: upload, fit, preview, adjust,
//! export. Run `dccf serve --session-dir D` for the same API over HTTP.
//!
//! `cargo run --release -p dccf-server --example session_walkthrough`

use axum::body::Body;
use axum::http::{header, Request};
use axum::Router;
use dccf::io::{decode_image, encode_mask_png, encode_png};
use dccf::optimizer::{synth_perturb, PerturbSpec};
use dccf::scenes::{feathered_mask, photo};
use dccf_server::service::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, req: Request<Body>) -> (u16, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status().as_u16();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn post_json(uri: &str, body: Value) -> Request<Body> {
    Request::post(uri).header(header::CONTENT_TYPE, "application/json").body(Body::from(body.to_string())).unwrap()
}

#[tokio::main]
async fn main() {
    let dir = std::env::temp_dir().join("dccf-sessions");
    let app = router(AppState::open(&dir).expect("session dir"));

    let gt = photo(200, 150, 6);
    let mask = feathered_mask(200, 150, (100.0, 80.0), (60.0, 45.0), 6.0);
    let composite = synth_perturb(&gt, &mask, PerturbSpec { theta: 0.5, sigma: 0.3, gamma: 1.3 }).unwrap();

    let boundary = "walkthrough";
    let mut body = Vec::new();
    for (name, bytes) in [("composite", encode_png(&composite).unwrap()), ("mask", encode_mask_png(&mask).unwrap()), ("gt", encode_png(&gt).unwrap())] {
        body.extend(format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}.png\"\r\n\r\n").bytes());
        body.extend(bytes);
        body.extend(b"\r\n");
    }
    body.extend(format!("--{boundary}--\r\n").bytes());
    let req = Request::post("/sessions")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let (status, bytes) = call(&app, req).await;
    let id = serde_json::from_slice::<Value>(&bytes).unwrap()["id"].as_str().unwrap().to_owned();
    println!("POST /sessions -> {status}, id {id}");

    let (status, bytes) = call(&app, post_json(&format!("/sessions/{id}/fit"), json!({"grid": 16, "iters": 150}))).await;
    let report: Value = serde_json::from_slice(&bytes).unwrap();
    println!("POST fit -> {status}, PSNR {:.2} dB after {} iterations", report["report"]["final_psnr"].as_f64().unwrap(), report["report"]["iterations"]);

    for stage in 1..=4 {
        let (status, bytes) = call(&app, Request::get(format!("/sessions/{id}/preview?stage={stage}")).body(Body::empty()).unwrap()).await;
        let img = decode_image(&bytes).unwrap();
        println!("GET preview?stage={stage} -> {status}, {}x{} PNG", img.width(), img.height());
    }

    let adjust = json!({"hue": {"theta": 200, "alpha": 0.6}, "sat": {"sigma": 0.3, "alpha": 0.5}});
    let (status, bytes) = call(&app, post_json(&format!("/sessions/{id}/adjust"), adjust)).await;
    println!("POST adjust -> {status}, {} bytes", bytes.len());
    let (status, _) = call(&app, post_json(&format!("/sessions/{id}/adjust"), json!({"hue": {"theta": 90, "alpha": 2}}))).await;
    println!("POST adjust with alpha 2 -> {status}");

    let (status, bytes) = call(&app, Request::get(format!("/sessions/{id}/export")).body(Body::empty()).unwrap()).await;
    let out = std::env::temp_dir().join(format!("dccf-export-{id}.png"));
    std::fs::write(&out, &bytes).unwrap();
    println!("GET export -> {status}, wrote {}", out.display());
}
