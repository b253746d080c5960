use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::crop::{CropMode, CropSpec};
use crate::backends::{Manifest, ManifestEntry};
use crate::promptgen::{apply_dropout, sample_dropout_mask, PromptParser};
use crate::{Error, Result};

/// A training image with its caption and pixel size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub image_path: PathBuf,
    pub caption: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingItem {
    pub image_path: PathBuf,
    pub caption: String,
    pub crop: CropSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizationItem {
    pub image_path: PathBuf,
    pub prompt: String,
    pub crop: CropSpec,
}

/// One training step's worth of data: one image from each side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub training_item: TrainingItem,
    pub regularization_item: RegularizationItem,
}

#[derive(Clone, Debug)]
pub struct BatchOptions {
    pub crop_mode: CropMode,
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// Pixel size of the generated regularization images.
    pub reg_width: u32,
    pub reg_height: u32,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            crop_mode: CropMode::Plain,
            ratio_min: 0.75,
            ratio_max: 1.0,
            reg_width: 1024,
            reg_height: 1024,
        }
    }
}

/// How the regularization caption is derived from the manifest prompt.
pub enum RegCaption<'a> {
    Verbatim,
    /// Parse the prompt back into slots and drop each attribute with
    /// probability `1 - p_keep`.
    Dropout { parser: &'a PromptParser, p_keep: f64 },
}

impl RegCaption<'_> {
    fn caption<R: Rng + ?Sized>(&self, rng: &mut R, prompt: &str) -> Result<String> {
        match self {
            RegCaption::Verbatim => Ok(prompt.to_string()),
            RegCaption::Dropout { parser, p_keep } => {
                let parsed = parser.parse(prompt)?;
                let mask = sample_dropout_mask(rng, parsed.attrs.len(), *p_keep)?;
                Ok(apply_dropout(&parsed, &mask)?.rendered)
            }
        }
    }
}

fn done_entries(manifest: &Manifest) -> Vec<&ManifestEntry> {
    manifest.done().collect()
}

pub fn compose_batch<R: Rng + ?Sized>(
    rng: &mut R,
    training: &[TrainingSample],
    manifest: &Manifest,
    options: &BatchOptions,
    caption: &RegCaption<'_>,
) -> Result<Batch> {
    let sample = training
        .choose(rng)
        .ok_or_else(|| Error::InvalidArgument("training set is empty".into()))?;
    let done = done_entries(manifest);
    let entry = done
        .choose(rng)
        .ok_or_else(|| Error::InvalidArgument("regularization manifest has no done entries".into()))?;
    let train_crop = options
        .crop_mode
        .sample(rng, sample.width, sample.height, options.ratio_min, options.ratio_max)?;
    let reg_crop = options
        .crop_mode
        .sample(rng, options.reg_width, options.reg_height, options.ratio_min, options.ratio_max)?;
    let prompt = caption.caption(rng, &entry.prompt)?;
    Ok(Batch {
        training_item: TrainingItem {
            image_path: sample.image_path.clone(),
            caption: sample.caption.clone(),
            crop: train_crop,
        },
        regularization_item: RegularizationItem {
            image_path: entry.image_path.clone(),
            prompt,
            crop: reg_crop,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSource {
    Training,
    Regularization,
}

/// One line of the training-set export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub source: RecordSource,
    pub image_path: PathBuf,
    pub caption: String,
    #[serde(flatten)]
    pub crop: CropSpec,
}

/// Captions and one sampled crop for every training image, followed by every
/// done regularization image (caption = manifest prompt, verbatim).
pub fn export_training_set<R: Rng + ?Sized>(
    rng: &mut R,
    training: &[TrainingSample],
    manifest: Option<&Manifest>,
    options: &BatchOptions,
) -> Result<Vec<TrainRecord>> {
    let mut out = Vec::new();
    for sample in training {
        out.push(TrainRecord {
            source: RecordSource::Training,
            image_path: sample.image_path.clone(),
            caption: sample.caption.clone(),
            crop: options
                .crop_mode
                .sample(rng, sample.width, sample.height, options.ratio_min, options.ratio_max)?,
        });
    }
    for entry in manifest.map(done_entries).unwrap_or_default() {
        out.push(TrainRecord {
            source: RecordSource::Regularization,
            image_path: entry.image_path.clone(),
            caption: entry.prompt.clone(),
            crop: options
                .crop_mode
                .sample(rng, options.reg_width, options.reg_height, options.ratio_min, options.ratio_max)?,
        });
    }
    Ok(out)
}

/// Width and height of a PNG file, read from its header.
pub fn image_dimensions(path: &Path) -> Result<(u32, u32)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(|e| Error::Protocol(format!("{}: {e}", path.display())))?;
    let info = reader.info();
    Ok((info.width, info.height))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::EntryStatus;
    use crate::seed::rng_from_seed;

    fn training(n: usize) -> Vec<TrainingSample> {
        (0..n)
            .map(|i| TrainingSample {
                image_path: format!("{i:02}.jpg").into(),
                caption: format!("a olis backpack on a rock {i}"),
                width: 512,
                height: 512,
            })
            .collect()
    }

    fn manifest(n: usize, status: EntryStatus) -> Manifest {
        let mut m = Manifest::default();
        for index in 0..n {
            m.entries.insert(
                index,
                ManifestEntry {
                    index,
                    subject: None,
                    bucket: None,
                    prompt: format!("a coral backpack on a rock {index}"),
                    seed: index as u64,
                    image_path: format!("{index:05}.png").into(),
                    content_hash: Some("h".into()),
                    status: status.clone(),
                    plan_hash: "p".into(),
                },
            );
        }
        m
    }

    #[test]
    fn batch_is_reproducible() {
        let (t, m) = (training(4), manifest(2000, EntryStatus::Done));
        let opts = BatchOptions::default();
        let a = compose_batch(&mut rng_from_seed(9), &t, &m, &opts, &RegCaption::Verbatim).unwrap();
        let b = compose_batch(&mut rng_from_seed(9), &t, &m, &opts, &RegCaption::Verbatim).unwrap();
        assert_eq!(a, b);
        assert!(a.regularization_item.prompt.starts_with("a coral backpack"));
    }

    #[test]
    fn single_training_image_always_chosen() {
        let (t, m) = (training(1), manifest(10, EntryStatus::Done));
        let mut rng = rng_from_seed(1);
        for _ in 0..20 {
            let b = compose_batch(&mut rng, &t, &m, &BatchOptions::default(), &RegCaption::Verbatim).unwrap();
            assert_eq!(b.training_item.image_path, t[0].image_path);
        }
    }

    #[test]
    fn failed_only_manifest_is_an_error() {
        let m = manifest(3, EntryStatus::Failed { reason: "x".into() });
        let out = compose_batch(&mut rng_from_seed(1), &training(2), &m, &BatchOptions::default(), &RegCaption::Verbatim);
        assert!(out.is_err());
        assert!(compose_batch(&mut rng_from_seed(1), &[], &manifest(1, EntryStatus::Done), &BatchOptions::default(), &RegCaption::Verbatim).is_err());
    }

    #[test]
    fn export_flattens_crop_fields() {
        let rows = export_training_set(&mut rng_from_seed(1), &training(2), Some(&manifest(3, EntryStatus::Done)), &BatchOptions::default()).unwrap();
        assert_eq!(rows.len(), 5);
        let line = serde_json::to_value(&rows[0]).unwrap();
        assert!(line.get("offset_x").is_some());
        assert_eq!(line["source"], "training");
    }
}
