//! HTTP clients for OpenAI-compatible chat-completion and embedding servers.

use std::time::Duration;

use fmea_core::index::{EmbeddingProvider, EmbeddingVector, IndexError};
use fmea_core::service::{CompletionRequest, CompletionResponse, ServiceError, TextService};
use serde::Deserialize;
use serde_json::{json, Value};
use ureq::Agent;

fn agent(timeout: Duration) -> Agent {
    Agent::new_with_config(Agent::config_builder().http_status_as_error(false).timeout_global(Some(timeout)).build())
}

/// Sends a JSON body and returns the decoded reply. 429 and 5xx responses
/// and transport failures are transient; other statuses are permanent.
fn post_json(agent: &Agent, url: &str, api_key: Option<&str>, body: &Value) -> Result<Value, ServiceError> {
    let mut req = agent.post(url).header("Accept", "application/json");
    if let Some(key) = api_key {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = req.send_json(body).map_err(|e| ServiceError::transient(format!("{url}: {e}")))?;
    let status = resp.status();
    if !status.is_success() {
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        let message = format!("{url} answered {status}: {}", text.chars().take(200).collect::<String>());
        return Err(if status.as_u16() == 429 || status.is_server_error() {
            ServiceError::transient(message)
        } else {
            ServiceError::permanent(message)
        });
    }
    resp.body_mut().read_json::<Value>().map_err(|e| ServiceError::permanent(format!("{url}: bad JSON reply: {e}")))
}

/// Chat-completions client. Each call sends the system instruction and user
/// content as two messages and returns the first choice's content.
pub struct HttpTextService {
    agent: Agent,
    url: String,
    model: String,
    api_key: Option<String>,
}

impl HttpTextService {
    pub fn new(url: impl Into<String>, model: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        Self { agent: agent(timeout), url: url.into(), model: model.into(), api_key }
    }
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

impl TextService for HttpTextService {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ServiceError> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            // roughly three characters per token
            "max_tokens": request.max_output_chars.div_ceil(3).max(16),
            "messages": [
                {"role": "system", "content": request.system_instruction},
                {"role": "user", "content": request.user_content},
            ],
        });
        let value = post_json(&self.agent, &self.url, self.api_key.as_deref(), &body)?;
        let reply: ChatReply =
            serde_json::from_value(value).map_err(|e| ServiceError::permanent(format!("unexpected reply shape: {e}")))?;
        let text = reply.choices.into_iter().next().and_then(|c| c.message.content).unwrap_or_default();
        Ok(CompletionResponse { text: text.chars().take(request.max_output_chars).collect() })
    }
}

/// Embeddings client. The vector size is fixed at construction, either
/// configured or learned from one probe request.
pub struct HttpEmbedder {
    agent: Agent,
    url: String,
    model: String,
    api_key: Option<String>,
    dim: usize,
}

#[derive(Deserialize)]
struct EmbeddingReply {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f32>,
}

impl HttpEmbedder {
    pub fn connect(
        url: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        dim: Option<usize>,
        timeout: Duration,
    ) -> Result<Self, IndexError> {
        let mut this = Self { agent: agent(timeout), url: url.into(), model: model.into(), api_key, dim: 0 };
        this.dim = match dim {
            Some(d) => d,
            None => this.request(&["dimension probe"])?.remove(0).len(),
        };
        Ok(this)
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, IndexError> {
        let body = json!({"model": self.model, "input": texts});
        let value = post_json(&self.agent, &self.url, self.api_key.as_deref(), &body)
            .map_err(|e| IndexError::ProviderUnavailable(e.message))?;
        let mut reply: EmbeddingReply =
            serde_json::from_value(value).map_err(|e| IndexError::ProviderUnavailable(format!("unexpected reply shape: {e}")))?;
        reply.data.sort_by_key(|d| d.index);
        if reply.data.len() != texts.len() {
            return Err(IndexError::ProviderUnavailable(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                reply.data.len()
            )));
        }
        Ok(reply.data.into_iter().map(|d| d.embedding).collect())
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, IndexError> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(64) {
            for v in self.request(batch)? {
                out.push(EmbeddingVector::new(v)?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    /// Serves one canned HTTP response per entry, in order, and returns the
    /// request bodies it saw.
    fn serve(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (url, handle)
    }

    fn request() -> CompletionRequest {
        CompletionRequest { system_instruction: "sys".into(), user_content: "list parts".into(), max_output_chars: 300 }
    }

    #[test]
    fn chat_reply_is_unwrapped() {
        let (url, h) = serve(vec![(200, r#"{"choices":[{"message":{"content":"1. Fan"}}]}"#.into())]);
        let svc = HttpTextService::new(url, "m", Some("k".into()), Duration::from_secs(5));
        assert_eq!(svc.complete(&request()).unwrap().text, "1. Fan");
        let sent: Value = serde_json::from_str(&h.join().unwrap()[0]).unwrap();
        assert_eq!(sent["messages"][1]["content"], "list parts");
        assert_eq!(sent["max_tokens"], 100);
    }

    #[test]
    fn status_classes_map_to_retry_policy() {
        let (url, h) = serve(vec![(503, "{}".into()), (400, "{}".into())]);
        let svc = HttpTextService::new(url, "m", None, Duration::from_secs(5));
        assert!(svc.complete(&request()).unwrap_err().is_transient());
        assert!(!svc.complete(&request()).unwrap_err().is_transient());
        h.join().unwrap();
    }

    #[test]
    fn embedder_probes_dimension_and_orders_by_index() {
        let (url, h) = serve(vec![
            (200, r#"{"data":[{"index":0,"embedding":[1,0,0]}]}"#.into()),
            (200, r#"{"data":[{"index":1,"embedding":[0,1,0]},{"index":0,"embedding":[0,0,1]}]}"#.into()),
        ]);
        let e = HttpEmbedder::connect(url, "m", None, None, Duration::from_secs(5)).unwrap();
        assert_eq!(e.dim(), 3);
        let v = e.embed_batch(&["a", "b"]).unwrap();
        assert_eq!(v[0].values(), [0.0, 0.0, 1.0]);
        assert_eq!(v[1].values(), [0.0, 1.0, 0.0]);
        h.join().unwrap();
    }

    #[test]
    fn unreachable_server_is_transient() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let svc = HttpTextService::new(format!("http://127.0.0.1:{port}/"), "m", None, Duration::from_secs(2));
        assert!(svc.complete(&request()).unwrap_err().is_transient());
    }
}
