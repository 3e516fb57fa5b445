//! Runs the HTTP service on a local port with scripted providers and walks a
//! client through upload, study creation, one generate/accept round and
//! export.
//!
//! ```text
//! cargo run -p fmea-api --example serve_with_mocks            # drive and exit
//! cargo run -p fmea-api --example serve_with_mocks -- --stay  # keep serving
//! ```

use std::path::Path;
use std::sync::Arc;

use fmea_api::{app, AppState, Providers};
use fmea_core::service::mock::ScriptedTextService;
use serde_json::{json, Value};

fn main() -> anyhow::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures");
    let script = ScriptedTextService::from_file(fixtures.join("mock/rtu_study_script.json"))?;
    let state = AppState::in_memory(Providers::with_text(Arc::new(script)))?;

    let rt = tokio::runtime::Runtime::new()?;
    let addr = std::env::var("FMEA_LISTEN_ADDR").unwrap_or_else(|_| "127.0.0.1:0".into());
    let listener = rt.block_on(tokio::net::TcpListener::bind(&addr))?;
    let base = format!("http://{}", listener.local_addr()?);
    println!("serving on {base}");
    rt.spawn(async move { axum::serve(listener, app(state)).await });

    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let post = |path: &str, body: Value| -> anyhow::Result<Value> {
        let mut resp = agent.post(format!("{base}{path}")).send_json(body)?;
        println!("POST {path} -> {}", resp.status());
        Ok(resp.body_mut().read_json()?)
    };

    let manual = std::fs::read_to_string(fixtures.join("golden/rtu_manual.md"))?;
    let receipt = post("/documents", json!({"title": "RTU-4 manual", "content": manual}))?;
    println!("  {} chunks, {} tables", receipt["chunk_count"], receipt["table_count"]);

    let study = post("/studies", json!({"asset_name": "Rooftop unit RTU-4", "document_ids": [receipt["document_id"]]}))?;
    let id = study["study_id"].as_str().unwrap_or_default().to_string();

    for step in ["boundary", "failure_locations"] {
        let staged = post(&format!("/studies/{id}/steps/{step}/generate"), json!({"mode": "top-k", "k": 3}))?;
        println!("  {step}: {}", staged["items"]);
        let tree = post(&format!("/studies/{id}/steps/{step}/accept"), json!({"result_ref": staged["result_ref"]}))?;
        println!("  committed {} locations", tree["locations"].as_array().map_or(0, Vec::len));
    }

    // a request the service refuses: the next level needs a parent
    let refused = post(&format!("/studies/{id}/steps/preventive_tasks/generate"), json!({}))?;
    println!("  {}: {}", refused["code"], refused["message"]);

    let mut export = agent.get(format!("{base}/studies/{id}/export?format=json")).call()?;
    println!("GET export -> {} ({} bytes)", export.status(), export.body_mut().read_to_string()?.len());

    if std::env::args().any(|a| a == "--stay") {
        println!("ctrl-c to stop");
        rt.block_on(tokio::signal::ctrl_c())?;
    }
    Ok(())
}
