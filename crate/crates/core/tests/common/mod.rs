#![allow(dead_code)]

use std::path::{Path, PathBuf};

use regforge::pools::PoolSet;
use regforge::{SubjectKind, SubjectSpec, TrainingImage};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn pools(kind: SubjectKind) -> PoolSet {
    let dir = if kind.is_living() { "living" } else { "inanimate" };
    PoolSet::load_dir(&fixtures().join("pools").join(dir)).expect("fixture pools")
}

/// Loads a fixture subject with training image paths made absolute.
pub fn subject(name: &str) -> SubjectSpec {
    let dir = fixtures().join("subjects");
    let mut spec = SubjectSpec::load(&dir.join(format!("{name}.json"))).expect("fixture subject");
    for img in &mut spec.training_images {
        img.image_path = dir.join(&img.image_path);
    }
    spec
}

/// A synthetic subject for tests that need many distinct subjects.
pub fn synthetic_subject(name: &str, noun: &str, training: &[PathBuf]) -> SubjectSpec {
    SubjectSpec {
        dataset_name: name.into(),
        class_noun_vague: noun.into(),
        class_noun_specific: noun.into(),
        kind: SubjectKind::Inanimate,
        identifier_token: "olis".into(),
        training_images: training
            .iter()
            .map(|p| TrainingImage {
                image_path: p.clone(),
                context_phrase: "on a rock".into(),
            })
            .collect(),
    }
}

/// Brute-force cosine between raw (unnormalized) vectors.
pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Mean of all generated-by-real pairwise cosines, by double loop.
pub fn oracle_fidelity(generated: &[Vec<f64>], real: &[Vec<f64>]) -> f64 {
    let mut sum = 0.0;
    for g in generated {
        for r in real {
            sum += oracle_cosine(g, r);
        }
    }
    sum / (generated.len() * real.len()) as f64
}
