use std::net::SocketAddr;
use std::time::Duration;

use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use colleagues::error::GatewayError;
use colleagues::gateway::CallParams;
use colleagues::prompt::{ExpectedShape, PromptKind, PromptRequest};
use colleagues::{ChatProvider, ProviderProfile};
use colleagues_service::provider::{completion_text, OpenAiProvider};

async fn fake(headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, String) {
    if headers.get("authorization").and_then(|v| v.to_str().ok()) != Some("Bearer sk-test") {
        return (StatusCode::UNAUTHORIZED, String::new());
    }
    assert_eq!(body["model"], "tiny-model");
    let prompt = body["messages"][0]["content"].as_str().unwrap_or_default().to_string();
    match prompt.as_str() {
        "busy" => (StatusCode::TOO_MANY_REQUESTS, String::new()),
        "boom" => (StatusCode::INTERNAL_SERVER_ERROR, String::new()),
        "junk" => (StatusCode::OK, "not json".into()),
        "slow" => {
            tokio::time::sleep(Duration::from_secs(2)).await;
            (StatusCode::OK, String::new())
        }
        _ => {
            let reply = json!({ "choices": [{ "message": { "role": "assistant", "content": format!("echo: {prompt}") } }] });
            (StatusCode::OK, reply.to_string())
        }
    }
}

/// Starts the fake endpoint on its own runtime thread.
fn spawn_fake() -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            let app = Router::new().route("/v1/chat/completions", post(fake));
            axum::serve(listener, app).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

fn provider(addr: SocketAddr, key: &str) -> OpenAiProvider {
    let profile = ProviderProfile {
        endpoint: format!("http://{addr}/v1/chat/completions"),
        model_name: "tiny-model".into(),
        ..ProviderProfile::default()
    };
    OpenAiProvider::new(&profile, key)
}

fn ask(p: &OpenAiProvider, text: &str) -> Result<String, GatewayError> {
    let req = PromptRequest::adhoc(PromptKind::DivergentTurn, text.to_string(), ExpectedShape::FreeText);
    p.send(&req, &CallParams { temperature: 0.7, timeout: Duration::from_millis(500) })
}

#[test]
fn maps_http_outcomes_to_gateway_errors() {
    let addr = spawn_fake();
    let p = provider(addr, "sk-test");
    assert_eq!(ask(&p, "hi there").unwrap(), "echo: hi there");
    assert_eq!(ask(&p, "busy"), Err(GatewayError::RateLimited));
    assert_eq!(ask(&p, "boom"), Err(GatewayError::Transport(500)));
    assert_eq!(ask(&p, "junk"), Err(GatewayError::ParseFailure { raw_text: "not json".into() }));
    assert_eq!(ask(&p, "slow"), Err(GatewayError::Timeout));
    assert_eq!(ask(&provider(addr, "wrong"), "hi"), Err(GatewayError::Transport(401)));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    assert_eq!(ask(&provider(addr, "sk-test"), "hi"), Err(GatewayError::Transport(0)));
}

#[test]
fn extracts_first_choice_content() {
    assert_eq!(completion_text(r#"{"choices":[{"message":{"content":"a"}},{"message":{"content":"b"}}]}"#).as_deref(), Some("a"));
    assert_eq!(completion_text(r#"{"choices":[]}"#), None);
    assert_eq!(completion_text("nope"), None);
}
