//! OpenAI-compatible chat-completions client.

use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde_json::{json, Value as Json};

use super::{LlmClient, LlmConfig, LlmError, SYSTEM_MESSAGE};

pub struct HttpClient {
    config: LlmConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    wire_dir: Option<PathBuf>,
    seq: AtomicUsize,
}

enum Attempt {
    Done(Result<String, LlmError>),
    Retry(LlmError),
}

impl HttpClient {
    /// Reads the API key from the configured environment variable.
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: LlmConfig, api_key: Option<String>) -> Result<Self, LlmError> {
        config.validate().map_err(LlmError::Transport)?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(HttpClient { config, api_key, http, wire_dir: None, seq: AtomicUsize::new(0) })
    }

    /// Writes every request and response body under `dir`.
    pub fn with_wire_log(mut self, dir: impl Into<PathBuf>) -> Self {
        self.wire_dir = Some(dir.into());
        self
    }

    fn redact(&self, text: &str) -> String {
        match &self.api_key {
            Some(key) => text.replace(key.as_str(), "<redacted>"),
            None => text.to_string(),
        }
    }

    fn log_wire(&self, seq: usize, kind: &str, body: &str) {
        let Some(dir) = &self.wire_dir else { return };
        let path = dir.join(format!("{seq:04}-{kind}.json"));
        if let Err(e) = fs::create_dir_all(dir).and_then(|_| fs::write(&path, self.redact(body))) {
            warn!("could not write {}: {e}", path.display());
        }
    }

    fn request_body(&self, prompt: &str) -> Json {
        json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": SYSTEM_MESSAGE},
                {"role": "user", "content": prompt},
            ],
            "max_tokens": self.config.max_tokens,
            "temperature": self.config.temperature,
        })
    }

    fn attempt(&self, seq: usize, body: &Json) -> Attempt {
        let mut req = self.http.post(&self.config.endpoint_url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(resp) => resp,
            Err(e) => return Attempt::Retry(LlmError::Transport(self.redact(&e.to_string()))),
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(text) => text,
            Err(e) => return Attempt::Retry(LlmError::Transport(e.to_string())),
        };
        self.log_wire(seq, "response", &text);
        let detail = || format!("HTTP {}: {}", status.as_u16(), self.redact(text.trim()));
        match status.as_u16() {
            200..=299 => Attempt::Done(parse_reply(&text)),
            401 | 403 => Attempt::Done(Err(LlmError::Auth(detail()))),
            429 | 500..=599 => Attempt::Retry(LlmError::Transport(detail())),
            _ if is_context_rejection(&text) => Attempt::Done(Err(LlmError::Budget(detail()))),
            _ => Attempt::Done(Err(LlmError::Transport(detail()))),
        }
    }
}

fn is_context_rejection(body: &str) -> bool {
    let lower = body.to_ascii_lowercase();
    lower.contains("context_length") || lower.contains("context length") || lower.contains("maximum context")
}

fn parse_reply(text: &str) -> Result<String, LlmError> {
    let json: Json = serde_json::from_str(text).map_err(|e| LlmError::Transport(format!("malformed reply: {e}")))?;
    json.pointer("/choices/0/message/content")
        .and_then(Json::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::Transport("reply has no choices[0].message.content".into()))
}

impl LlmClient for HttpClient {
    fn generate(&self, prompt: &str) -> Result<String, LlmError> {
        let seq = self.seq.fetch_add(1, Ordering::SeqCst);
        let body = self.request_body(prompt);
        self.log_wire(seq, "request", &serde_json::to_string_pretty(&body).expect("json"));
        let mut delay = self.config.backoff_ms;
        let mut last = LlmError::Transport("no attempt made".into());
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                debug!("retrying request {seq} in {delay} ms ({last})");
                thread::sleep(Duration::from_millis(delay));
                delay = delay.saturating_mul(2);
            }
            match self.attempt(seq, &body) {
                Attempt::Done(result) => return result,
                Attempt::Retry(err) => last = err,
            }
        }
        Err(last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serves the given (status, body) replies in order, one per connection,
    /// and returns the request bodies it saw.
    fn serve(replies: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in replies {
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
                seen.push(String::from_utf8(buf).unwrap());
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            seen
        });
        (url, handle)
    }

    fn ok_body(content: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
    }

    fn client(url: String, retries: u32) -> HttpClient {
        let cfg = LlmConfig { endpoint_url: url, retries, backoff_ms: 1, ..LlmConfig::default() };
        HttpClient::with_key(cfg, Some("sk-secret".into())).unwrap()
    }

    #[test]
    fn sends_chat_shape_and_reads_content() {
        let (url, server) = serve(vec![(200, ok_body("OK"))]);
        assert_eq!(client(url, 0).generate("reply OK").unwrap(), "OK");
        let req: Json = serde_json::from_str(&server.join().unwrap()[0]).unwrap();
        assert_eq!(req["messages"][0]["role"], "system");
        assert_eq!(req["messages"][1]["content"], "reply OK");
        assert_eq!(req["max_tokens"], 4096);
        assert_eq!(req["temperature"], 0.2);
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let (url, server) = serve(vec![(503, "{}".into()), (200, ok_body("fine"))]);
        assert_eq!(client(url, 2).generate("p").unwrap(), "fine");
        assert_eq!(server.join().unwrap().len(), 2);
    }

    #[test]
    fn classifies_failures() {
        let (url, _s) = serve(vec![(401, r#"{"error":"bad key sk-secret"}"#.into())]);
        let err = client(url, 3).generate("p").unwrap_err();
        assert!(matches!(&err, LlmError::Auth(m) if !m.contains("sk-secret")), "{err:?}");

        let (url, _s) = serve(vec![(400, r#"{"error":{"code":"context_length_exceeded"}}"#.into())]);
        assert!(matches!(client(url, 3).generate("p"), Err(LlmError::Budget(_))));

        let (url, _s) = serve(vec![(500, "{}".into()), (502, "{}".into())]);
        assert!(matches!(client(url, 1).generate("p"), Err(LlmError::Transport(_))));
    }

    #[test]
    fn wire_log_redacts_key() {
        let dir = tempfile::tempdir().unwrap();
        let (url, _s) = serve(vec![(200, ok_body("echo sk-secret"))]);
        let c = client(url, 0).with_wire_log(dir.path());
        c.generate("p").unwrap();
        let resp = fs::read_to_string(dir.path().join("0000-response.json")).unwrap();
        assert!(resp.contains("<redacted>") && !resp.contains("sk-secret"));
        assert!(dir.path().join("0000-request.json").exists());
    }
}
