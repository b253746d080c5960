//! Run configuration: a TOML file, then `REGFORGE_*` environment variables,
//! then command-line flags, each overriding the previous.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use regforge::backends::BackendConfig;
use regforge::planner::Ratios;
use regforge::promptgen::DEFAULT_P_KEEP;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct Config {
    pub seed: u64,
    pub subject: Option<PathBuf>,
    pub pool_dir: Option<PathBuf>,
    pub backends: BackendConfig,
    pub plan: PlanSettings,
    pub dataset: DatasetSettings,
    pub train: TrainSettings,
    pub eval: EvalSettings,
    pub study: StudySettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSettings {
    pub total: usize,
    pub ratios: Ratios,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSettings {
    pub parallelism: usize,
    pub width: u32,
    pub height: u32,
    pub steps: u32,
    pub retries: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub p_keep: f64,
    pub crop_mode: String,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub prompts_per_subject: usize,
    pub images_per_prompt: usize,
    pub clip_t_threshold: f64,
    pub name_mode: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySettings {
    pub questions_per_type: usize,
    pub groups: usize,
    pub participants: usize,
    pub bind: String,
}


impl Default for PlanSettings {
    fn default() -> Self {
        PlanSettings {
            total: 2000,
            ratios: Ratios::default(),
        }
    }
}

impl Default for DatasetSettings {
    fn default() -> Self {
        DatasetSettings {
            parallelism: 4,
            width: 1024,
            height: 1024,
            steps: regforge::backends::DEFAULT_STEPS,
            retries: 3,
        }
    }
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            p_keep: DEFAULT_P_KEEP,
            crop_mode: "plain".into(),
            ratio_min: 0.75,
            ratio_max: 1.0,
        }
    }
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            prompts_per_subject: regforge::eval::DEFAULT_PROMPTS_PER_SUBJECT,
            images_per_prompt: regforge::eval::DEFAULT_IMAGES_PER_PROMPT,
            clip_t_threshold: regforge::eval::DEFAULT_CLIP_T_THRESHOLD,
            name_mode: "both".into(),
        }
    }
}

impl Default for StudySettings {
    fn default() -> Self {
        StudySettings {
            questions_per_type: regforge::study::DEFAULT_QUESTIONS_PER_TYPE,
            groups: regforge::study::DEFAULT_GROUPS,
            participants: regforge::study::DEFAULT_PARTICIPANTS,
            bind: "127.0.0.1:8080".into(),
        }
    }
}

pub const ENV_SEED: &str = "REGFORGE_SEED";
pub const ENV_SUBJECT: &str = "REGFORGE_SUBJECT";
pub const ENV_POOL_DIR: &str = "REGFORGE_POOL_DIR";
pub const ENV_PARALLELISM: &str = "REGFORGE_PARALLELISM";

impl Config {
    /// Reads `path`, or returns defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: Config = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        self.apply_vars(|k| std::env::var(k).ok())
    }

    pub fn apply_vars(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        let get = |k: &str| get(k).filter(|v| !v.is_empty());
        if let Some(v) = get(ENV_SEED) {
            self.seed = v.parse().with_context(|| format!("{ENV_SEED}={v:?}"))?;
        }
        if let Some(v) = get(ENV_SUBJECT) {
            self.subject = Some(v.into());
        }
        if let Some(v) = get(ENV_POOL_DIR) {
            self.pool_dir = Some(v.into());
        }
        if let Some(v) = get(ENV_PARALLELISM) {
            self.dataset.parallelism = v.parse().with_context(|| format!("{ENV_PARALLELISM}={v:?}"))?;
        }
        self.backends.apply_vars(get);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.plan.ratios.check()?;
        if self.dataset.parallelism == 0 {
            bail!("parallelism must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.train.p_keep) {
            bail!("p_keep {} outside [0, 1]", self.train.p_keep);
        }
        Ok(())
    }

    pub fn subject_path(&self) -> Result<&Path> {
        self.subject
            .as_deref()
            .context("no subject spec: pass --subject or set `subject` in the config")
    }

    pub fn pool_dir(&self) -> Result<&Path> {
        self.pool_dir
            .as_deref()
            .context("no pool directory: pass --pool-dir or set `pool_dir` in the config")
    }
}
