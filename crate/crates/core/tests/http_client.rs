//! OpenAI-compatible clients against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use ics_core::datasets::Datum;
use ics_core::embedding::{EmbeddingProvider, RemoteEmbeddingConfig, RemoteEmbeddingProvider};
use ics_core::llm::{
    BackendConfig, CachedBackend, CompletionBackend, LlmError, OpenAiChatBackend, ResponseCache,
};
use ics_core::prompt::{default_template, render, PromptInput};

struct Scripted {
    base_url: String,
    requests: Arc<Mutex<Vec<String>>>,
}

/// Serves one canned `(status, body)` per connection, in order, and records
/// each request body.
fn serve(script: Vec<(u16, &'static str)>) -> Scripted {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base_url = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let seen = requests.clone();
    thread::spawn(move || {
        for (status, body) in script {
            let Ok((stream, _)) = listener.accept() else {
                return;
            };
            let mut reader = BufReader::new(stream);
            let mut content_length = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; content_length];
            reader.read_exact(&mut buf).unwrap();
            seen.lock().unwrap().push(String::from_utf8(buf).unwrap());
            let reason = if status == 200 { "OK" } else { "Error" };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            reader.get_mut().write_all(response.as_bytes()).unwrap();
        }
    });
    Scripted { base_url, requests }
}

fn backend(base_url: &str) -> OpenAiChatBackend {
    let mut cfg = BackendConfig::new(base_url, "test-model");
    cfg.retry_backoff_ms = 1;
    cfg.max_retries = 2;
    OpenAiChatBackend::new(cfg).unwrap()
}

fn prompt() -> PromptInput {
    let t = default_template("esnli").unwrap();
    let target = Datum::nli("t1", "A dog runs.", "An animal moves.", Some("entailment"));
    render(&t, &[], &target, 0).unwrap()
}

const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":" entailment"}}]}"#;

#[test]
fn retries_rate_limit_then_succeeds() {
    let server = serve(vec![(429, r#"{"error":"slow down"}"#), (200, OK)]);
    let text = backend(&server.base_url).complete(&prompt()).unwrap();
    assert_eq!(text, " entailment");
    let requests = server.requests.lock().unwrap();
    assert_eq!(requests.len(), 2);
    let body: serde_json::Value = serde_json::from_str(&requests[0]).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["max_tokens"], 10);
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "user");
    assert!(body["messages"][0]["content"]
        .as_str()
        .unwrap()
        .ends_with("Label:"));
}

#[test]
fn non_json_body_is_malformed() {
    let server = serve(vec![(200, "<html>gateway</html>")]);
    let err = backend(&server.base_url).complete(&prompt()).unwrap_err();
    assert!(matches!(err, LlmError::MalformedResponse(_)), "{err:?}");
}

#[test]
fn missing_content_is_malformed() {
    let server = serve(vec![(200, r#"{"choices":[]}"#)]);
    let err = backend(&server.base_url).complete(&prompt()).unwrap_err();
    assert!(matches!(err, LlmError::MalformedResponse(_)), "{err:?}");
}

#[test]
fn client_errors_are_not_retried() {
    let server = serve(vec![(400, r#"{"error":"bad"}"#), (200, OK)]);
    let err = backend(&server.base_url).complete(&prompt()).unwrap_err();
    assert!(
        matches!(err, LlmError::HttpStatus { status: 400, .. }),
        "{err:?}"
    );
    assert_eq!(server.requests.lock().unwrap().len(), 1);
}

#[test]
fn server_errors_exhaust_retries() {
    let server = serve(vec![(503, "{}"), (503, "{}"), (503, "{}")]);
    let err = backend(&server.base_url).complete(&prompt()).unwrap_err();
    assert!(
        matches!(err, LlmError::HttpStatus { status: 503, .. }),
        "{err:?}"
    );
    assert_eq!(server.requests.lock().unwrap().len(), 3);
}

#[test]
fn cache_hit_sends_no_request() {
    let server = serve(vec![(200, OK)]);
    let dir = tempfile::tempdir().unwrap();
    let cached = CachedBackend::new(
        backend(&server.base_url),
        Some(ResponseCache::open(dir.path()).unwrap()),
    );
    assert_eq!(cached.complete(&prompt()).unwrap(), " entailment");
    assert_eq!(cached.complete(&prompt()).unwrap(), " entailment");
    assert_eq!(cached.backend_calls(), 1);
    // a fresh client over the same cache directory stays offline
    let again = CachedBackend::new(
        backend(&server.base_url),
        Some(ResponseCache::open(dir.path()).unwrap()),
    );
    assert_eq!(again.complete(&prompt()).unwrap(), " entailment");
    assert_eq!(again.backend_calls(), 0);
    assert_eq!(server.requests.lock().unwrap().len(), 1);
}

#[test]
fn missing_api_key_variable() {
    let mut cfg = BackendConfig::new("http://127.0.0.1:9", "m");
    cfg.api_key_env = Some("ICS_TEST_KEY_THAT_IS_NOT_SET".into());
    assert!(matches!(
        OpenAiChatBackend::new(cfg),
        Err(LlmError::MissingApiKey(_))
    ));
}

#[test]
fn embeddings_endpoint() {
    let server = serve(vec![(200, r#"{"data":[{"embedding":[0.5,-0.25,1.0]}]}"#)]);
    let provider = RemoteEmbeddingProvider::new(RemoteEmbeddingConfig {
        base_url: format!("{}/v1", server.base_url),
        model: "emb".into(),
        dim: 3,
        api_key_env: None,
        request_timeout_secs: 5,
        max_retries: 0,
        retry_backoff_ms: 1,
    })
    .unwrap();
    assert_eq!(provider.embed_raw("hello").unwrap(), [0.5, -0.25, 1.0]);
    let body: serde_json::Value =
        serde_json::from_str(&server.requests.lock().unwrap()[0]).unwrap();
    assert_eq!(body["input"], "hello");
}

#[test]
fn harness_runs_against_an_openai_compatible_server() {
    use ics_core::harness::{
        load_experiment_data, run_experiment, BackendSpec, ExperimentConfig, Runtime,
    };
    use ics_core::strategies::StrategyKind;

    let fixture =
        std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/esnli_sample");
    let replies = [
        r#"{"choices":[{"message":{"content":"Entailment."}}]}"#,
        r#"{"choices":[{"message":{"content":"The label is neutral"}}]}"#,
        r#"{"choices":[{"message":{"content":"I cannot tell"}}]}"#,
    ];
    let server = serve((0..60).map(|i| (200, replies[i % 3])).collect());
    let mut cfg = ExperimentConfig::mock(
        "esnli",
        StrategyKind::Similarity,
        StrategyKind::Diversity,
        30,
        3,
    );
    cfg.manifest = Some(fixture.join("manifest.toml"));
    cfg.data_root = fixture;
    cfg.trials = 1;
    cfg.backend = BackendSpec::OpenaiCompatible(BackendConfig::new(&server.base_url, "m"));
    let data = load_experiment_data(&cfg).unwrap();
    let rt = Runtime::from_config(&cfg).unwrap();
    let cell = run_experiment(&cfg, &data, &rt).unwrap();
    let trial = &cell.trial_reports[0];
    assert_eq!(trial.records.len(), 20);
    assert_eq!(rt.backend_calls(), 60);
    let invalid = trial
        .records
        .iter()
        .flat_map(|r| &r.votes)
        .filter(|v| v.label.is_none())
        .count();
    assert_eq!(invalid, 20);
    assert!(trial
        .records
        .iter()
        .all(|r| r.final_label.is_some() && !r.errored));
}
