//! Data-side tooling for subject-driven text-to-image fine-tuning.
//!
//! The crate covers the whole pipeline around a fine-tuning run, but not the
//! run itself:
//!
//! - [`pools`]: attribute / phrase pools seeded from a language model.
//! - [`promptgen`]: structured prompt rendering, sampling, dropout and parsing.
//! - [`planner`]: the bucketed regularization-set plan.
//! - [`backends`]: generation / completion / embedding clients, stubs, and the
//!   resumable generation runner.
//! - [`trainprep`]: identifier selection, class names, crops, and batches.
//! - [`eval`]: DINO / CLIP-I / CLIP-T scoring.
//! - [`study`]: the pairwise human preference study.
//!
//! Every random choice takes an explicit RNG; the same seed and inputs always
//! produce the same outputs.

pub mod backends;
pub mod error;
pub mod eval;
pub mod planner;
pub mod pools;
pub mod promptgen;
pub mod seed;
pub mod study;
pub mod subject;
pub mod trainprep;

mod fsutil;

pub use error::{Error, Result};
pub use subject::{SubjectKind, SubjectSpec, TrainingImage};
