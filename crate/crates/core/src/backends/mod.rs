//! Image generation, text completion, and embedding backends.
//!
//! Each capability is a trait with an HTTP client and a deterministic local
//! implementation. The stub image backend writes a tiny PNG that carries its
//! prompt in an `iTXt` chunk; the stub embedder reads that chunk back, which
//! lets the evaluation code run end to end with no models.

mod fixture;
mod http;
mod manifest;
mod runner;
mod stub;

use std::path::Path;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use fixture::FixtureTextBackend;
pub use http::{BackendConfig, HttpEmbedBackend, HttpImageBackend, HttpTextBackend};
pub use manifest::{EntryStatus, Manifest, ManifestEntry};
pub use runner::{job_set_hash, run_generation, run_jobs, GenJob, RunOptions, RunSummary};
pub use stub::{read_stub_prompt, StubEmbedBackend, StubImageBackend, STUB_EMBED_DIM, STUB_PROMPT_KEY};

use crate::{Error, Result};

/// Default sampler steps; forwarded to the backend untouched.
pub const DEFAULT_STEPS: u32 = 50;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenRequest {
    pub prompt: String,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub steps: u32,
}

impl GenRequest {
    pub fn new(prompt: impl Into<String>, seed: u64) -> Self {
        GenRequest {
            prompt: prompt.into(),
            seed,
            width: 1024,
            height: 1024,
            steps: DEFAULT_STEPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "width, height and steps must be positive (got {}x{}, {} steps)",
                self.width, self.height, self.steps
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    Dino,
    ClipImage,
    ClipText,
}

impl ModelTag {
    /// Embedding space the tag lives in; cosine is only defined within one.
    pub fn family(self) -> &'static str {
        match self {
            ModelTag::Dino => "dino",
            ModelTag::ClipImage | ModelTag::ClipText => "clip",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelTag::Dino => "dino",
            ModelTag::ClipImage => "clip_image",
            ModelTag::ClipText => "clip_text",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub model_tag: ModelTag,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    /// L2-normalizes `values`. Fails on an all-zero or non-finite vector.
    pub fn normalized(model_tag: ModelTag, mut values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Protocol(format!("cannot normalize {} embedding (norm {norm})", model_tag.name())));
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Ok(EmbeddingVector { model_tag, values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Copy, Debug)]
pub enum EmbedInput<'a> {
    Image(&'a Path),
    Text(&'a str),
}

pub trait ImageBackend: Send + Sync {
    fn generate(&self, req: &GenRequest) -> Result<Vec<u8>>;
}

pub trait TextBackend: Send + Sync {
    fn complete(&self, instruction: &str) -> Result<String>;
}

pub trait EmbedBackend: Send + Sync {
    fn embed(&self, input: EmbedInput<'_>, tag: ModelTag) -> Result<EmbeddingVector>;
}

impl<T: ImageBackend + ?Sized> ImageBackend for &T {
    fn generate(&self, req: &GenRequest) -> Result<Vec<u8>> {
        (**self).generate(req)
    }
}

impl<T: EmbedBackend + ?Sized> EmbedBackend for &T {
    fn embed(&self, input: EmbedInput<'_>, tag: ModelTag) -> Result<EmbeddingVector> {
        (**self).embed(input, tag)
    }
}

/// Bounded exponential backoff. Only transport errors are retried.
#[derive(Clone, Copy, Debug)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(200),
        }
    }
}

impl RetryPolicy {
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T>) -> Result<T> {
        let attempts = self.attempts.max(1);
        let mut delay = self.base_delay;
        for attempt in 1..=attempts {
            match op() {
                Err(Error::Transport(msg)) if attempt < attempts => {
                    log::warn!("attempt {attempt}/{attempts} failed: {msg}; retrying in {delay:?}");
                    thread::sleep(delay);
                    delay *= 2;
                }
                other => return other,
            }
        }
        unreachable!("loop returns on the last attempt")
    }
}

/// Validates the request and calls the backend under `retry`.
pub fn generate_image(backend: &dyn ImageBackend, req: &GenRequest, retry: &RetryPolicy) -> Result<Vec<u8>> {
    req.validate()?;
    retry.run(|| backend.generate(req))
}

pub fn complete_text(backend: &dyn TextBackend, instruction: &str, retry: &RetryPolicy) -> Result<String> {
    if instruction.trim().is_empty() {
        return Err(Error::InvalidArgument("empty instruction".into()));
    }
    retry.run(|| backend.complete(instruction))
}

pub fn embed(
    backend: &dyn EmbedBackend,
    input: EmbedInput<'_>,
    tag: ModelTag,
    retry: &RetryPolicy,
) -> Result<EmbeddingVector> {
    if let EmbedInput::Image(path) = input {
        if !path.is_file() {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "image not found"),
            ));
        }
    }
    retry.run(|| backend.embed(input, tag))
}
