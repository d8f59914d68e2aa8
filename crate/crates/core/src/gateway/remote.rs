use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{estimate_usage, ChatBackend, ChatRequest, ChatRole, Completion, GatewayError, Usage};

pub const ENV_API_BASE: &str = "HOPES_API_BASE";
pub const ENV_API_KEY: &str = "HOPES_API_KEY";
pub const ENV_MODEL: &str = "HOPES_MODEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Base URL up to and including the API version, e.g. `https://host/v1`.
    pub api_base: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_secs: u64,
}

impl RemoteConfig {
    pub fn from_env() -> Result<Self, GatewayError> {
        let model = std::env::var(ENV_MODEL)
            .map_err(|_| GatewayError::Config(format!("{ENV_MODEL} is not set")))?;
        Ok(Self {
            api_base: std::env::var(ENV_API_BASE)
                .unwrap_or_else(|_| "https://api.openai.com/v1".into()),
            api_key: std::env::var(ENV_API_KEY).ok(),
            model,
            timeout_secs: 120,
        })
    }
}

/// OpenAI-style `/chat/completions` client.
#[derive(Debug)]
pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

fn role_name(role: ChatRole) -> &'static str {
    match role {
        ChatRole::System => "system",
        ChatRole::User => "user",
        ChatRole::Assistant => "assistant",
    }
}

fn excerpt(body: &str) -> String {
    body.chars().take(300).collect()
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn body(&self, request: &ChatRequest) -> serde_json::Value {
        let mut messages = vec![json!({ "role": "system", "content": request.system })];
        messages.extend(
            request
                .messages
                .iter()
                .map(|m| json!({ "role": role_name(m.role), "content": m.content })),
        );
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
    }
}

impl ChatBackend for RemoteBackend {
    fn complete(
        &mut self,
        request: &ChatRequest,
        _attempt: u32,
    ) -> Result<Completion, GatewayError> {
        let url = format!(
            "{}/chat/completions",
            self.config.api_base.trim_end_matches('/')
        );
        let mut call = self.client.post(&url).json(&self.body(request));
        if let Some(key) = &self.config.api_key {
            call = call.bearer_auth(key);
        }
        let response = call.send().map_err(|e| GatewayError::Remote {
            status: None,
            body: e.to_string(),
            transient: e.is_timeout() || e.is_connect() || e.is_request(),
        })?;
        let status = response.status();
        let text = response.text().map_err(|e| GatewayError::Remote {
            status: Some(status.as_u16()),
            body: e.to_string(),
            transient: true,
        })?;
        if !status.is_success() {
            return Err(GatewayError::Remote {
                status: Some(status.as_u16()),
                body: excerpt(&text),
                transient: status.as_u16() == 429
                    || status.as_u16() == 408
                    || status.is_server_error(),
            });
        }
        let wire: WireResponse = serde_json::from_str(&text).map_err(|e| GatewayError::Remote {
            status: Some(status.as_u16()),
            body: format!("unreadable response ({e}): {}", excerpt(&text)),
            transient: false,
        })?;
        let content = wire
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::Remote {
                status: Some(status.as_u16()),
                body: "response has no message content".into(),
                transient: false,
            })?;
        let usage = match wire.usage {
            Some(u) => Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            },
            None => estimate_usage(request, &content),
        };
        Ok(Completion {
            text: content,
            usage,
        })
    }

    fn describe(&self) -> String {
        format!("remote:{}", self.config.model)
    }
}

#[cfg(test)]
mod tests {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    use super::super::{CallerTag, ChatMessage};
    use super::*;

    /// Serves canned HTTP responses, one per connection, and reports each request body.
    fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; length];
                reader.read_exact(&mut buf).unwrap();
                tx.send(String::from_utf8(buf).unwrap()).unwrap();
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/v1"), rx)
    }

    fn request() -> ChatRequest {
        ChatRequest::new(
            CallerTag::new("high_level", 1),
            "be brief",
            vec![ChatMessage::user("hi")],
        )
    }

    fn backend(base: String) -> RemoteBackend {
        RemoteBackend::new(RemoteConfig {
            api_base: base,
            api_key: Some("k".into()),
            model: "m".into(),
            timeout_secs: 5,
        })
        .unwrap()
    }

    #[test]
    fn parses_chat_completion() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}],"usage":{"prompt_tokens":7,"completion_tokens":2}}"#;
        let (base, rx) = serve(vec![(200, body.into())]);
        let c = backend(base).complete(&request(), 1).unwrap();
        assert_eq!(c.text, "hello");
        assert_eq!(
            c.usage,
            Usage {
                prompt_tokens: 7,
                completion_tokens: 2
            }
        );
        let sent: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert_eq!(sent["model"], "m");
        assert_eq!(sent["messages"][0]["role"], "system");
        assert_eq!(sent["messages"][0]["content"], "be brief");
        assert_eq!(sent["messages"][1]["role"], "user");
    }

    #[test]
    fn classifies_status_codes() {
        let (base, _rx) = serve(vec![(429, "slow down".into()), (400, "bad".into())]);
        let mut b = backend(base);
        let e = b.complete(&request(), 1).unwrap_err();
        assert!(matches!(
            e,
            GatewayError::Remote {
                status: Some(429),
                transient: true,
                ..
            }
        ));
        let e = b.complete(&request(), 2).unwrap_err();
        assert!(matches!(
            e,
            GatewayError::Remote {
                status: Some(400),
                transient: false,
                ..
            }
        ));
    }
}
