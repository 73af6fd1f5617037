#![allow(dead_code)]

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use finrag_core::{scripted_complete, ChatMessage, FinRecord};
use serde_json::{json, Value};
use tokio::runtime::Runtime;

pub const APPLE_QUESTION: &str = "What was Apple Inc.'s Revenue for the quarter ending 2023-03-31?";
pub const APPLE_ROW: &str = r#"{"period":"2023/3/31","company":"Apple Inc.","tickers":"AAPL","indicator":"Revenue","amount":"100000000"}"#;

/// An axum app on an ephemeral local port, alive as long as the value.
pub struct Served {
    pub base: String,
    pub rt: Runtime,
}

pub fn serve(app: Router) -> Served {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .unwrap();
    let listener = rt
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    rt.spawn(async move { axum::serve(listener, app).await.unwrap() });
    Served { base, rt }
}

/// OpenAI-compatible chat upstream that answers with the scripted rule.
/// Counts calls in `calls`.
pub fn scripted_upstream(calls: Arc<AtomicUsize>) -> Router {
    Router::new().route(
        "/chat/completions",
        post(move |Json(body): Json<Value>| {
            let calls = calls.clone();
            async move {
                calls.fetch_add(1, Ordering::SeqCst);
                let messages: Vec<ChatMessage> =
                    serde_json::from_value(body["messages"].clone()).unwrap();
                let answer = scripted_complete(&messages).answer;
                Json(json!({"choices": [{"message": {"role": "assistant", "content": answer}}]}))
            }
        }),
    )
}

/// Chat upstream that always answers 500.
pub fn failing_upstream() -> Router {
    Router::new().route(
        "/chat/completions",
        post(|| async { (StatusCode::INTERNAL_SERVER_ERROR, "upstream down") }),
    )
}

pub fn write_records(path: &Path, records: &[FinRecord]) {
    let text: String = records.iter().map(|r| r.to_json_line() + "\n").collect();
    std::fs::write(path, text).unwrap();
}
