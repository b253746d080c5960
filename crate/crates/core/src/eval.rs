//! Subject fidelity (DINO, CLIP-I) and text alignment (CLIP-T) scoring.
//!
//! Embeddings go through [`EmbedCache`], so every unique (input, model tag)
//! pair reaches the backend once per evaluation. Requests are issued up front,
//! optionally in parallel, and all reductions then run sequentially in a
//! fixed order so results do not depend on completion order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::backends::{embed, EmbedBackend, EmbedInput, EmbeddingVector, GenJob, Manifest, ModelTag, RetryPolicy};
use crate::fsutil::{self, sha256_hex};
use crate::promptgen::find_phrase;
use crate::seed::item_seed;
use crate::subject::SubjectSpec;
use crate::{Error, Result};

pub const DEFAULT_PROMPTS_PER_SUBJECT: usize = 25;
pub const DEFAULT_IMAGES_PER_PROMPT: usize = 4;
/// Conventional CLIP text-image compatibility threshold.
pub const DEFAULT_CLIP_T_THRESHOLD: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassName {
    Vague,
    Specific,
}

impl ClassName {
    pub fn noun(self, subject: &SubjectSpec) -> &str {
        match self {
            ClassName::Vague => &subject.class_noun_vague,
            ClassName::Specific => &subject.class_noun_specific,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NameMode {
    Vague,
    Specific,
    #[default]
    Both,
}

impl NameMode {
    pub fn names(self) -> &'static [ClassName] {
        match self {
            NameMode::Vague => &[ClassName::Vague],
            NameMode::Specific => &[ClassName::Specific],
            NameMode::Both => &[ClassName::Vague, ClassName::Specific],
        }
    }
}

impl FromStr for NameMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vague" => Ok(NameMode::Vague),
            "specific" => Ok(NameMode::Specific),
            "both" => Ok(NameMode::Both),
            other => Err(Error::InvalidArgument(format!("unknown name mode '{other}' (vague, specific, both)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub subjects: Vec<SubjectSpec>,
    pub prompts_per_subject: usize,
    pub images_per_prompt: usize,
    pub clip_t_threshold: f64,
    pub name_mode: NameMode,
}

impl EvalConfig {
    pub fn new(subjects: Vec<SubjectSpec>) -> Self {
        EvalConfig {
            subjects,
            prompts_per_subject: DEFAULT_PROMPTS_PER_SUBJECT,
            images_per_prompt: DEFAULT_IMAGES_PER_PROMPT,
            clip_t_threshold: DEFAULT_CLIP_T_THRESHOLD,
            name_mode: NameMode::Both,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompts_per_subject == 0 || self.images_per_prompt == 0 {
            return Err(Error::InvalidArgument("prompt and image counts must be positive".into()));
        }
        if !(self.clip_t_threshold > 0.0 && self.clip_t_threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "clip_t threshold {} outside (0, 1)",
                self.clip_t_threshold
            )));
        }
        Ok(())
    }
}

/// Cosine similarity, clamped to [-1, 1]. Both vectors must come from the
/// same embedding family and have the same dimension.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.model_tag.family() != b.model_tag.family() {
        return Err(Error::InvalidArgument(format!(
            "cannot compare {} with {} embeddings",
            a.model_tag.name(),
            b.model_tag.name()
        )));
    }
    if a.dim() != b.dim() {
        return Err(Error::InvalidArgument(format!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidArgument("cosine of a zero vector".into()));
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Mean cosine over every (generated, real) pair.
pub fn subject_fidelity(generated: &[EmbeddingVector], real: &[EmbeddingVector]) -> Result<f64> {
    if generated.is_empty() || real.is_empty() {
        return Err(Error::InvalidArgument("subject fidelity needs at least one embedding on each side".into()));
    }
    if let Some(v) = generated.iter().chain(real).find(|v| v.model_tag != generated[0].model_tag) {
        return Err(Error::InvalidArgument(format!(
            "mixed model tags: {} and {}",
            generated[0].model_tag.name(),
            v.model_tag.name()
        )));
    }
    let mut sum = 0.0;
    for g in generated {
        for r in real {
            sum += cosine(g, r)?;
        }
    }
    Ok(sum / (generated.len() * real.len()) as f64)
}

/// Text fed to the CLIP text encoder for `prompt`: identifier tokens removed,
/// then the class placeholder `{}` (or the subject's specific or vague noun,
/// first whole-word hit) replaced by the requested class name.
pub fn clip_t_text(prompt: &str, subject: &SubjectSpec, name: ClassName) -> Result<String> {
    let stripped: Vec<&str> = prompt
        .split_whitespace()
        .filter(|w| *w != subject.identifier_token)
        .collect();
    let text = stripped.join(" ");
    let noun = name.noun(subject);
    if text.contains("{}") {
        return Ok(text.replace("{}", noun));
    }
    for candidate in [&subject.class_noun_specific, &subject.class_noun_vague] {
        if let Some(at) = find_phrase(&text, candidate) {
            return Ok(format!("{}{noun}{}", &text[..at], &text[at + candidate.len()..]));
        }
    }
    Err(Error::InvalidPrompt(format!(
        "{prompt:?} has no class placeholder and does not mention {:?} or {:?}",
        subject.class_noun_specific, subject.class_noun_vague
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipTScore {
    pub text: String,
    pub score: f64,
    pub is_match: bool,
}

pub fn clip_t(
    prompt: &str,
    image: &Path,
    backend: &dyn EmbedBackend,
    name: ClassName,
    subject: &SubjectSpec,
    threshold: f64,
    retry: &RetryPolicy,
) -> Result<ClipTScore> {
    let text = clip_t_text(prompt, subject, name)?;
    let t = embed(backend, EmbedInput::Text(&text), ModelTag::ClipText, retry)?;
    let i = embed(backend, EmbedInput::Image(image), ModelTag::ClipImage, retry)?;
    let score = cosine(&t, &i)?;
    Ok(ClipTScore {
        text,
        score,
        is_match: score > threshold,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum CacheKey {
    Image(String),
    Text(String),
}

/// Memoizing embedder. Images are keyed by content hash, text by its bytes;
/// both together with the model tag. Errors are not cached.
pub struct EmbedCache<'a> {
    inner: &'a dyn EmbedBackend,
    map: Mutex<HashMap<(CacheKey, ModelTag), EmbeddingVector>>,
}

impl<'a> EmbedCache<'a> {
    pub fn new(inner: &'a dyn EmbedBackend) -> Self {
        EmbedCache {
            inner,
            map: Mutex::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl EmbedBackend for EmbedCache<'_> {
    fn embed(&self, input: EmbedInput<'_>, tag: ModelTag) -> Result<EmbeddingVector> {
        let key = match input {
            EmbedInput::Text(t) => CacheKey::Text(t.to_string()),
            EmbedInput::Image(p) => CacheKey::Image(sha256_hex(&std::fs::read(p).map_err(|e| Error::io(p, e))?)),
        };
        let key = (key, tag);
        if let Some(v) = self.map.lock().expect("cache lock").get(&key) {
            return Ok(v.clone());
        }
        let v = self.inner.embed(input, tag)?;
        self.map.lock().expect("cache lock").entry(key).or_insert(v.clone());
        Ok(v)
    }
}

/// Pass-through embedder that counts backend calls.
pub struct CountingEmbedBackend<B> {
    pub inner: B,
    calls: AtomicUsize,
}

impl<B: EmbedBackend> CountingEmbedBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingEmbedBackend {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<B: EmbedBackend> EmbedBackend for CountingEmbedBackend<B> {
    fn embed(&self, input: EmbedInput<'_>, tag: ModelTag) -> Result<EmbeddingVector> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.embed(input, tag)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectScores {
    pub subject: String,
    pub images: usize,
    pub dino: f64,
    pub clip_i: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_t_vague: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_t_specific: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_rate_vague: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_rate_specific: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalDiagnostic {
    pub subject: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name_mode: NameMode,
    pub clip_t_threshold: f64,
    pub images_evaluated: usize,
    pub subjects: Vec<SubjectScores>,
    /// Unweighted mean over the scored subjects; absent if none scored.
    pub aggregate: Option<SubjectScores>,
    pub excluded: Vec<EvalDiagnostic>,
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub parallelism: usize,
    pub retry: RetryPolicy,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            parallelism: 4,
            retry: RetryPolicy::default(),
        }
    }
}

/// A subject whose generated images passed the completeness checks.
struct Ready<'s> {
    subject: &'s SubjectSpec,
    /// prompt -> image paths, both sorted.
    prompts: BTreeMap<String, Vec<PathBuf>>,
    real: Vec<PathBuf>,
}

fn collect_subject<'s>(
    subject: &'s SubjectSpec,
    manifest: &Manifest,
    config: &EvalConfig,
) -> std::result::Result<Ready<'s>, String> {
    let name = &subject.dataset_name;
    let entries: Vec<_> = manifest
        .entries
        .values()
        .filter(|e| e.subject.as_deref() == Some(name))
        .collect();
    if entries.is_empty() {
        return Err("no generated images in the manifest".into());
    }
    let missing: Vec<_> = entries
        .iter()
        .filter(|e| !e.is_done() || !e.image_path.is_file())
        .map(|e| e.index.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(format!("missing generated images for entries {}", missing.join(", ")));
    }
    let mut prompts: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for e in entries {
        prompts.entry(e.prompt.clone()).or_default().push(e.image_path.clone());
    }
    if prompts.len() != config.prompts_per_subject {
        return Err(format!("{} prompts, expected {}", prompts.len(), config.prompts_per_subject));
    }
    for (prompt, images) in &mut prompts {
        if images.len() != config.images_per_prompt {
            return Err(format!(
                "prompt {prompt:?} has {} images, expected {}",
                images.len(),
                config.images_per_prompt
            ));
        }
        images.sort();
        for name in config.name_mode.names() {
            clip_t_text(prompt, subject, *name).map_err(|e| e.to_string())?;
        }
    }
    let real: Vec<PathBuf> = subject.training_images.iter().map(|t| t.image_path.clone()).collect();
    if real.is_empty() {
        return Err("no training images".into());
    }
    if let Some(p) = real.iter().find(|p| !p.is_file()) {
        return Err(format!("missing training image {}", p.display()));
    }
    Ok(Ready { subject, prompts, real })
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Request {
    Image(PathBuf, ModelTag),
    Text(String),
}

fn requests(ready: &[Ready<'_>], mode: NameMode) -> Result<BTreeSet<Request>> {
    let mut out = BTreeSet::new();
    for r in ready {
        for (prompt, images) in &r.prompts {
            for image in images {
                for tag in [ModelTag::Dino, ModelTag::ClipImage] {
                    out.insert(Request::Image(image.clone(), tag));
                }
            }
            for name in mode.names() {
                out.insert(Request::Text(clip_t_text(prompt, r.subject, *name)?));
            }
        }
        for image in &r.real {
            for tag in [ModelTag::Dino, ModelTag::ClipImage] {
                out.insert(Request::Image(image.clone(), tag));
            }
        }
    }
    Ok(out)
}

/// Issues every request through `cache` with up to `parallelism` workers.
fn warm(cache: &EmbedCache<'_>, requests: &[Request], options: &EvalOptions) -> Result<()> {
    let next = AtomicUsize::new(0);
    let first_error = Mutex::new(None);
    let workers = options.parallelism.clamp(1, requests.len().max(1));
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(req) = requests.get(i) else { break };
                let out = match req {
                    Request::Image(p, tag) => embed(cache, EmbedInput::Image(p), *tag, &options.retry),
                    Request::Text(t) => embed(cache, EmbedInput::Text(t), ModelTag::ClipText, &options.retry),
                };
                if let Err(e) = out {
                    first_error.lock().expect("error lock").get_or_insert(e);
                    break;
                }
            });
        }
    });
    match first_error.into_inner().expect("error lock") {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn score_subject(r: &Ready<'_>, cache: &EmbedCache<'_>, config: &EvalConfig, retry: &RetryPolicy) -> Result<SubjectScores> {
    let images: Vec<&PathBuf> = r.prompts.values().flatten().collect();
    let embed_all = |paths: &mut dyn Iterator<Item = &PathBuf>, tag| -> Result<Vec<EmbeddingVector>> {
        paths.map(|p| embed(cache, EmbedInput::Image(p), tag, retry)).collect()
    };
    let dino = subject_fidelity(
        &embed_all(&mut images.iter().copied(), ModelTag::Dino)?,
        &embed_all(&mut r.real.iter(), ModelTag::Dino)?,
    )?;
    let clip_i = subject_fidelity(
        &embed_all(&mut images.iter().copied(), ModelTag::ClipImage)?,
        &embed_all(&mut r.real.iter(), ModelTag::ClipImage)?,
    )?;
    let mut scores = SubjectScores {
        subject: r.subject.dataset_name.clone(),
        images: images.len(),
        dino,
        clip_i,
        clip_t_vague: None,
        clip_t_specific: None,
        match_rate_vague: None,
        match_rate_specific: None,
    };
    for name in config.name_mode.names() {
        let mut values = Vec::new();
        for (prompt, paths) in &r.prompts {
            for p in paths {
                values.push(clip_t(prompt, p, cache, *name, r.subject, config.clip_t_threshold, retry)?);
            }
        }
        let score = mean(&values.iter().map(|v| v.score).collect::<Vec<_>>());
        let rate = values.iter().filter(|v| v.is_match).count() as f64 / values.len() as f64;
        match name {
            ClassName::Vague => (scores.clip_t_vague, scores.match_rate_vague) = (Some(score), Some(rate)),
            ClassName::Specific => (scores.clip_t_specific, scores.match_rate_specific) = (Some(score), Some(rate)),
        }
    }
    Ok(scores)
}

fn aggregate(subjects: &[SubjectScores]) -> Option<SubjectScores> {
    if subjects.is_empty() {
        return None;
    }
    let avg = |f: &dyn Fn(&SubjectScores) -> f64| mean(&subjects.iter().map(f).collect::<Vec<_>>());
    let avg_opt = |f: &dyn Fn(&SubjectScores) -> Option<f64>| -> Option<f64> {
        let xs: Option<Vec<f64>> = subjects.iter().map(f).collect();
        xs.map(|xs| mean(&xs))
    };
    Some(SubjectScores {
        subject: "aggregate".into(),
        images: subjects.iter().map(|s| s.images).sum(),
        dino: avg(&|s| s.dino),
        clip_i: avg(&|s| s.clip_i),
        clip_t_vague: avg_opt(&|s| s.clip_t_vague),
        clip_t_specific: avg_opt(&|s| s.clip_t_specific),
        match_rate_vague: avg_opt(&|s| s.match_rate_vague),
        match_rate_specific: avg_opt(&|s| s.match_rate_specific),
    })
}

/// Scores every configured subject against the generated images recorded in
/// `manifest` (entries carry the subject name and the generation prompt) and
/// the subjects' own training images. Subjects with missing or incomplete
/// images are excluded and listed in [`EvalReport::excluded`].
pub fn run_eval(
    config: &EvalConfig,
    manifest: &Manifest,
    backend: &dyn EmbedBackend,
    options: &EvalOptions,
) -> Result<EvalReport> {
    config.validate()?;
    let mut ready = Vec::new();
    let mut excluded = Vec::new();
    for subject in &config.subjects {
        match collect_subject(subject, manifest, config) {
            Ok(r) => ready.push(r),
            Err(reason) => {
                log::warn!("excluding {}: {reason}", subject.dataset_name);
                excluded.push(EvalDiagnostic {
                    subject: subject.dataset_name.clone(),
                    reason,
                });
            }
        }
    }
    let cache = EmbedCache::new(backend);
    let reqs: Vec<Request> = requests(&ready, config.name_mode)?.into_iter().collect();
    warm(&cache, &reqs, options)?;
    let subjects = ready
        .iter()
        .map(|r| score_subject(r, &cache, config, &options.retry))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        name_mode: config.name_mode,
        clip_t_threshold: config.clip_t_threshold,
        images_evaluated: subjects.iter().map(|s| s.images).sum(),
        aggregate: aggregate(&subjects),
        subjects,
        excluded,
    })
}

impl EvalReport {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        fsutil::write_json(path, self)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        fsutil::read_json(path)
    }

    /// One row per subject plus the aggregate, with the columns DINO, CLIP-I,
    /// CLIP-T (vague class) and CLIP-T (subject). Absent scores print as `-`.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut out = String::from("subject,images,DINO,CLIP-I,CLIP-T (vague class),CLIP-T (subject)\n");
        for s in self.subjects.iter().chain(&self.aggregate) {
            out.push_str(&format!(
                "{},{},{:.4},{:.4},{},{}\n",
                s.subject,
                s.images,
                s.dino,
                s.clip_i,
                fmt(s.clip_t_vague),
                fmt(s.clip_t_specific)
            ));
        }
        out
    }
}

/// Generation jobs for evaluation images: for each subject and each template,
/// `images_per_prompt` samples. Templates use `{}` for the subject phrase,
/// which becomes "<identifier> <specific noun>". Images land under
/// `<subject>/<prompt>_<sample>.png`.
pub fn eval_jobs(subjects: &[SubjectSpec], templates: &[String], images_per_prompt: usize, master_seed: u64) -> Result<Vec<GenJob>> {
    let mut jobs = Vec::new();
    for subject in subjects {
        let phrase = format!("{} {}", subject.identifier_token, subject.class_noun_specific);
        for (p, template) in templates.iter().enumerate() {
            if !template.contains("{}") {
                return Err(Error::InvalidArgument(format!("template {template:?} has no {{}} placeholder")));
            }
            let prompt = template.replace("{}", &phrase);
            for s in 0..images_per_prompt {
                let index = jobs.len();
                jobs.push(GenJob {
                    index,
                    subject: Some(subject.dataset_name.clone()),
                    bucket: None,
                    prompt: prompt.clone(),
                    seed: item_seed(master_seed, index as u64),
                    file_name: PathBuf::from(&subject.dataset_name).join(format!("{p:02}_{s}.png")),
                });
            }
        }
    }
    Ok(jobs)
}

/// Reads prompt templates, one per non-blank line.
pub fn load_templates(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subject::SubjectKind;

    fn v(tag: ModelTag, values: &[f64]) -> EmbeddingVector {
        EmbeddingVector {
            model_tag: tag,
            values: values.to_vec(),
        }
    }

    fn duck() -> SubjectSpec {
        SubjectSpec {
            dataset_name: "duck_toy".into(),
            class_noun_vague: "toy".into(),
            class_noun_specific: "duck toy".into(),
            kind: SubjectKind::Inanimate,
            identifier_token: "olis".into(),
            training_images: vec![],
        }
    }

    #[test]
    fn cosine_examples() {
        let a = v(ModelTag::Dino, &[0.6, 0.8]);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&v(ModelTag::Dino, &[1.0, 0.0]), &v(ModelTag::Dino, &[0.0, 1.0])).unwrap(), 0.0);
        assert!((cosine(&a, &v(ModelTag::Dino, &[1.0, 0.0])).unwrap() - 0.6).abs() < 1e-12);
        assert!(cosine(&a, &v(ModelTag::Dino, &[1.0, 0.0, 0.0])).is_err());
        assert!(cosine(&a, &v(ModelTag::ClipText, &[1.0, 0.0])).is_err());
        assert!(cosine(&v(ModelTag::ClipImage, &[1.0, 0.0]), &v(ModelTag::ClipText, &[1.0, 0.0])).is_ok());
    }

    #[test]
    fn fidelity_examples() {
        let x = v(ModelTag::Dino, &[1.0, 0.0, 0.0]);
        assert!((subject_fidelity(std::slice::from_ref(&x), std::slice::from_ref(&x)).unwrap() - 1.0).abs() < 1e-12);
        let reals = [v(ModelTag::Dino, &[0.0, 1.0, 0.0]), v(ModelTag::Dino, &[0.0, 0.0, 1.0])];
        assert_eq!(subject_fidelity(std::slice::from_ref(&x), &reals).unwrap(), 0.0);
        assert!(subject_fidelity(&[], &reals).is_err());
        assert!(subject_fidelity(&[x], &[v(ModelTag::ClipImage, &[1.0, 0.0, 0.0])]).is_err());
    }

    #[test]
    fn clip_t_text_substitution() {
        let s = duck();
        assert_eq!(clip_t_text("a olis duck toy in the jungle", &s, ClassName::Vague).unwrap(), "a toy in the jungle");
        assert_eq!(clip_t_text("a olis duck toy in the jungle", &s, ClassName::Specific).unwrap(), "a duck toy in the jungle");
        assert_eq!(clip_t_text("a {} sitting on a sofa", &s, ClassName::Specific).unwrap(), "a duck toy sitting on a sofa");
        assert_eq!(clip_t_text("a toy in the grass", &s, ClassName::Specific).unwrap(), "a duck toy in the grass");
        assert!(clip_t_text("a backpack", &s, ClassName::Vague).is_err());
    }

    #[test]
    fn name_modes() {
        assert_eq!(NameMode::Both.names().len(), 2);
        assert_eq!("specific".parse::<NameMode>().unwrap(), NameMode::Specific);
        assert!("odd".parse::<NameMode>().is_err());
    }

    #[test]
    fn eval_jobs_layout() {
        let jobs = eval_jobs(&[duck()], &["a {} in the jungle".to_string()], 4, 1).unwrap();
        assert_eq!(jobs.len(), 4);
        assert_eq!(jobs[0].prompt, "a olis duck toy in the jungle");
        assert_eq!(jobs[3].file_name, PathBuf::from("duck_toy/00_3.png"));
        assert!(eval_jobs(&[duck()], &["no slot".to_string()], 1, 1).is_err());
    }
}
