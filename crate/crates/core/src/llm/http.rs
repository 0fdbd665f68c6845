//! Chat-completion client speaking the JSON request/response shape of common
//! inference servers: POST {model, messages, temperature}, read
//! choices[0].message.content.

use std::time::Duration;

use serde_json::{json, Value};
use ureq::Agent;

use super::{ClientError, ModelClient, ModelParams, Prompt};

pub struct HttpModelClient;

impl HttpModelClient {
    fn agent(timeout: Duration) -> Agent {
        Agent::config_builder().timeout_global(Some(timeout)).build().into()
    }
}

fn map_err(err: ureq::Error) -> ClientError {
    match err {
        ureq::Error::StatusCode(code) => ClientError::Endpoint(code),
        ureq::Error::Timeout(_) => ClientError::Timeout,
        other => ClientError::Transport(other.to_string()),
    }
}

impl ModelClient for HttpModelClient {
    fn complete(&self, prompt: &Prompt, params: &ModelParams) -> Result<String, ClientError> {
        params.validate()?;
        let agent = Self::agent(params.request_timeout);
        let body = json!({
            "model": params.model_name,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": params.temperature,
        });
        let mut response = agent
            .post(&params.endpoint)
            .send_json(&body)
            .map_err(map_err)?;
        let payload: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| ClientError::MalformedResponse(e.to_string()))?;
        payload["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.to_string())
            .ok_or_else(|| {
                ClientError::MalformedResponse("missing choices[0].message.content".into())
            })
    }

    fn health_probe(&self, params: &ModelParams) -> Result<(), ClientError> {
        let agent = Self::agent(params.request_timeout.min(Duration::from_secs(5)));
        // a HEAD-ish probe: any HTTP response (even 4xx) proves reachability
        match agent.get(&params.endpoint).call() {
            Ok(_) => Ok(()),
            Err(ureq::Error::StatusCode(_)) => Ok(()),
            Err(e) => Err(map_err(e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{PromptKind, PromptPayload};

    #[test]
    fn unreachable_endpoint_is_a_transport_error() {
        let client = HttpModelClient;
        let params = ModelParams {
            endpoint: "http://127.0.0.1:1/v1/chat/completions".into(),
            model_name: "m".into(),
            request_timeout: Duration::from_millis(200),
            ..Default::default()
        };
        let prompt = Prompt {
            kind: PromptKind::Instantiation,
            text: "x".into(),
            target_dialect: "sqlite".into(),
            payload: PromptPayload::Instantiation {
                schema_block: String::new(),
                templates: vec!["x".into()],
            },
        };
        let err = client.complete(&prompt, &params).unwrap_err();
        assert!(matches!(err, ClientError::Transport(_) | ClientError::Timeout));
    }
}
