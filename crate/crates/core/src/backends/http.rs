use std::path::Path;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{EmbedBackend, EmbedInput, EmbeddingVector, GenRequest, ImageBackend, ModelTag, TextBackend};
use crate::{Error, Result};

pub const ENV_GEN_URL: &str = "REGFORGE_GEN_URL";
pub const ENV_LLM_URL: &str = "REGFORGE_LLM_URL";
pub const ENV_EMBED_URL: &str = "REGFORGE_EMBED_URL";
pub const ENV_API_TOKEN: &str = "REGFORGE_API_TOKEN";

/// Endpoint settings shared by the HTTP clients.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub gen_url: Option<String>,
    pub llm_url: Option<String>,
    pub embed_url: Option<String>,
    pub token: Option<String>,
    pub token_header: String,
    pub timeout_secs: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            gen_url: None,
            llm_url: None,
            embed_url: None,
            token: None,
            token_header: "Authorization".into(),
            timeout_secs: 120,
        }
    }
}

impl BackendConfig {
    /// Overrides fields from `REGFORGE_*` environment variables when set.
    pub fn apply_env(&mut self) {
        self.apply_vars(|k| std::env::var(k).ok());
    }

    pub fn apply_vars(&mut self, get: impl Fn(&str) -> Option<String>) {
        let set = |slot: &mut Option<String>, key: &str| {
            if let Some(v) = get(key).filter(|v| !v.is_empty()) {
                *slot = Some(v);
            }
        };
        set(&mut self.gen_url, ENV_GEN_URL);
        set(&mut self.llm_url, ENV_LLM_URL);
        set(&mut self.embed_url, ENV_EMBED_URL);
        set(&mut self.token, ENV_API_TOKEN);
    }
}

#[derive(Clone)]
struct JsonClient {
    agent: Agent,
    base_url: String,
    auth: Option<(String, String)>,
}

impl JsonClient {
    fn new(base_url: &str, config: &BackendConfig) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        JsonClient {
            agent,
            base_url: base_url.trim_end_matches('/').to_string(),
            auth: config.token.clone().map(|t| (config.token_header.clone(), t)),
        }
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let url = format!("{}{path}", self.base_url);
        let mut req = self.agent.post(&url);
        if let Some((name, value)) = &self.auth {
            req = req.header(name.as_str(), value.as_str());
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| Error::Transport(format!("POST {url}: {e}")))?;
        let status = resp.status().as_u16();
        if status >= 500 || status == 429 {
            return Err(Error::Transport(format!("POST {url}: HTTP {status}")));
        }
        if status >= 400 {
            let detail = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(Error::Protocol(format!("POST {url}: HTTP {status} {detail}")));
        }
        resp.body_mut()
            .read_json::<T>()
            .map_err(|e| Error::Protocol(format!("POST {url}: malformed response: {e}")))
    }
}

fn required(url: &Option<String>, what: &str) -> Result<String> {
    url.clone()
        .ok_or_else(|| Error::InvalidArgument(format!("no {what} URL configured")))
}

/// `POST /generate {prompt, seed, width, height, steps}` -> `{image_b64}`.
#[derive(Clone)]
pub struct HttpImageBackend {
    client: JsonClient,
}

#[derive(Deserialize)]
struct GenerateResponse {
    image_b64: String,
}

impl HttpImageBackend {
    pub fn new(config: &BackendConfig) -> Result<Self> {
        Ok(Self::with_url(&required(&config.gen_url, "generation")?, config))
    }

    pub fn with_url(url: &str, config: &BackendConfig) -> Self {
        HttpImageBackend {
            client: JsonClient::new(url, config),
        }
    }
}

impl ImageBackend for HttpImageBackend {
    fn generate(&self, req: &GenRequest) -> Result<Vec<u8>> {
        let resp: GenerateResponse = self.client.post("/generate", req)?;
        B64.decode(resp.image_b64.trim())
            .map_err(|e| Error::Protocol(format!("image_b64 is not base64: {e}")))
    }
}

/// `POST /complete {prompt}` -> `{text}`.
#[derive(Clone)]
pub struct HttpTextBackend {
    client: JsonClient,
}

#[derive(Serialize)]
struct CompleteRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CompleteResponse {
    text: String,
}

impl HttpTextBackend {
    pub fn new(config: &BackendConfig) -> Result<Self> {
        Ok(Self::with_url(&required(&config.llm_url, "completion")?, config))
    }

    pub fn with_url(url: &str, config: &BackendConfig) -> Self {
        HttpTextBackend {
            client: JsonClient::new(url, config),
        }
    }
}

impl TextBackend for HttpTextBackend {
    fn complete(&self, instruction: &str) -> Result<String> {
        let resp: CompleteResponse = self.client.post("/complete", &CompleteRequest { prompt: instruction })?;
        Ok(resp.text)
    }
}

/// `POST /embed {kind, model_tag, payload_b64 | text}` -> `{vector}`; the
/// returned vector is L2-normalized client side.
#[derive(Clone)]
pub struct HttpEmbedBackend {
    client: JsonClient,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    kind: &'static str,
    model_tag: ModelTag,
    #[serde(skip_serializing_if = "Option::is_none")]
    payload_b64: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

impl HttpEmbedBackend {
    pub fn new(config: &BackendConfig) -> Result<Self> {
        Ok(Self::with_url(&required(&config.embed_url, "embedding")?, config))
    }

    pub fn with_url(url: &str, config: &BackendConfig) -> Self {
        HttpEmbedBackend {
            client: JsonClient::new(url, config),
        }
    }

    fn image_request(path: &Path, model_tag: ModelTag) -> Result<EmbedRequest<'static>> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(EmbedRequest {
            kind: "image",
            model_tag,
            payload_b64: Some(B64.encode(bytes)),
            text: None,
        })
    }
}

impl EmbedBackend for HttpEmbedBackend {
    fn embed(&self, input: EmbedInput<'_>, tag: ModelTag) -> Result<EmbeddingVector> {
        let resp: EmbedResponse = match input {
            EmbedInput::Image(path) => self.client.post("/embed", &Self::image_request(path, tag)?)?,
            EmbedInput::Text(text) => self.client.post(
                "/embed",
                &EmbedRequest {
                    kind: "text",
                    model_tag: tag,
                    payload_b64: None,
                    text: Some(text),
                },
            )?,
        };
        EmbeddingVector::normalized(tag, resp.vector)
    }
}
