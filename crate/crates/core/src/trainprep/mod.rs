//! Training-side preparation: identifier token choice, class-name mapping,
//! crop computation, batch composition, and iteration ranges.

mod batch;
mod crop;

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use batch::{
    compose_batch, export_training_set, image_dimensions, Batch, BatchOptions, RecordSource, RegCaption, RegularizationItem,
    TrainRecord, TrainingItem, TrainingSample,
};
pub use crop::{sample_crop, sdxl_crop_conditioning, CropMode, CropSpec, SDXL_SIDE};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub token: String,
    pub frequency: u64,
}

/// Reads a `token<TAB>frequency` file. Blank lines and lines starting with
/// `#` are skipped.
pub fn load_vocab_tsv(path: &Path) -> Result<Vec<VocabEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vocab_tsv(&text).map_err(|e| match e {
        Error::InvalidArgument(msg) => Error::InvalidArgument(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_vocab_tsv(text: &str) -> Result<Vec<VocabEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (token, freq) = line
            .split_once('\t')
            .ok_or_else(|| Error::InvalidArgument(format!("line {}: expected token<TAB>frequency", i + 1)))?;
        if token.is_empty() {
            return Err(Error::InvalidArgument(format!("line {}: empty token", i + 1)));
        }
        let frequency = freq
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("line {}: bad frequency {freq:?}", i + 1)))?;
        out.push(VocabEntry {
            token: token.to_string(),
            frequency,
        });
    }
    Ok(out)
}

/// Default identifier filter: ASCII letters only, at least three of them.
/// Byte-pair markers such as `Ġ`, `▁` or `##` fail the letter test.
pub fn default_identifier_filter(token: &str) -> bool {
    token.len() >= 3 && token.bytes().all(|b| b.is_ascii_alphabetic())
}

/// Least frequent token passing `filter`; ties go to the lexicographically
/// smallest token.
pub fn select_identifier_token(vocab: &[VocabEntry], filter: impl Fn(&str) -> bool) -> Result<String> {
    vocab
        .iter()
        .filter(|e| !e.token.is_empty() && filter(&e.token))
        .min_by(|a, b| a.frequency.cmp(&b.frequency).then_with(|| a.token.cmp(&b.token)))
        .map(|e| e.token.clone())
        .ok_or_else(|| Error::InvalidArgument("no vocabulary entry passes the identifier filter".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NameDirection {
    ToSpecific,
    ToVague,
}

/// (dataset name, vague class, specific class) for the DreamBench subjects
/// whose stock class name is too vague for text alignment scoring.
pub const CLASS_NAMES: [(&str, &str, &str); 12] = [
    ("bear_plushie", "stuffed animal", "bear plushie"),
    ("berry_bowl", "bowl", "berry bowl"),
    ("can", "can", "drink can"),
    ("clock", "clock", "alarm clock"),
    ("duck_toy", "toy", "duck toy"),
    ("grey_sloth_plushie", "stuffed animal", "sloth plushie"),
    ("monster_toy", "toy", "monster toy"),
    ("poop_emoji", "toy", "poop emoji toy"),
    ("rc_car", "toy", "racing car toy"),
    ("red_cartoon", "cartoon", "2d cartoon devil"),
    ("robot_toy", "toy", "robot toy"),
    ("wolf_plushie", "stuffed animal", "wolf plushie"),
];

/// Class noun for `dataset_name`; names missing from the table map to
/// themselves.
pub fn map_class_name(dataset_name: &str, direction: NameDirection) -> String {
    map_class_name_with(dataset_name, direction, &[])
}

/// Like [`map_class_name`], consulting `extra` (same row shape) before the
/// bundled table.
pub fn map_class_name_with(dataset_name: &str, direction: NameDirection, extra: &[(String, String, String)]) -> String {
    let pick = |vague: &str, specific: &str| match direction {
        NameDirection::ToSpecific => specific.to_string(),
        NameDirection::ToVague => vague.to_string(),
    };
    if let Some((_, v, s)) = extra.iter().find(|(n, _, _)| n == dataset_name) {
        return pick(v, s);
    }
    CLASS_NAMES
        .iter()
        .find(|(n, _, _)| *n == dataset_name)
        .map(|(_, v, s)| pick(v, s))
        .unwrap_or_else(|| dataset_name.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    Sd,
    Sdxl,
}

impl FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sd" => Ok(Backbone::Sd),
            "sdxl" => Ok(Backbone::Sdxl),
            other => Err(Error::InvalidArgument(format!("unknown backbone '{other}' (sd or sdxl)"))),
        }
    }
}

/// (subject name, sd range, sdxl range).
pub type IterationRow = (&'static str, (u32, u32), (u32, u32));

/// Best iteration ranges per DreamBench subject.
pub const ITERATION_TABLE: [IterationRow; 30] = [
    ("backpack", (6000, 8000), (8000, 10000)),
    ("backpack_dog", (2000, 3000), (4000, 6000)),
    ("bear_plushie", (2000, 4000), (4000, 6000)),
    ("berry_bowl", (6000, 8000), (8000, 10000)),
    ("can", (6000, 8000), (8000, 10000)),
    ("candle", (4000, 6000), (8000, 10000)),
    ("cat", (1000, 3000), (1000, 3000)),
    ("cat2", (6000, 8000), (8000, 10000)),
    ("clock", (6000, 8000), (8000, 10000)),
    ("colorful_sneaker", (4000, 6000), (6000, 8000)),
    ("dog", (1000, 3000), (1000, 3000)),
    ("dog2", (2000, 4000), (4000, 6000)),
    ("dog3", (2000, 4000), (8000, 10000)),
    ("dog5", (3000, 4000), (6000, 8000)),
    ("dog6", (3000, 4000), (6000, 8000)),
    ("dog7", (3000, 4000), (6000, 8000)),
    ("dog8", (1000, 3000), (1000, 3000)),
    ("duck_toy", (3000, 4000), (3000, 4000)),
    ("fancy_boot", (3000, 4000), (6000, 8000)),
    ("grey_sloth_plushie", (3000, 4000), (6000, 8000)),
    ("monster_toy", (3000, 4000), (8000, 10000)),
    ("pink_sunglasses", (3000, 4000), (4000, 6000)),
    ("poop_emoji", (3000, 4000), (4000, 6000)),
    ("rc_car", (3000, 4000), (4000, 6000)),
    ("red_cartoon", (6000, 8000), (8000, 10000)),
    ("robot_toy", (3000, 4000), (6000, 8000)),
    ("shiny_sneaker", (3000, 4000), (6000, 8000)),
    ("teapot", (6000, 8000), (8000, 10000)),
    ("vase", (6000, 8000), (8000, 10000)),
    ("wolf_plushie", (3000, 4000), (4000, 6000)),
];

pub const DEFAULT_ITERATIONS_SD: u32 = 4000;
pub const DEFAULT_ITERATIONS_SDXL: u32 = 8000;

pub fn recommend_iterations(dataset_name: &str, backbone: Backbone) -> (u32, u32) {
    match ITERATION_TABLE.iter().find(|(n, _, _)| *n == dataset_name) {
        Some((_, sd, _)) if backbone == Backbone::Sd => *sd,
        Some((_, _, sdxl)) => *sdxl,
        None => match backbone {
            Backbone::Sd => (DEFAULT_ITERATIONS_SD, DEFAULT_ITERATIONS_SD),
            Backbone::Sdxl => (DEFAULT_ITERATIONS_SDXL, DEFAULT_ITERATIONS_SDXL),
        },
    }
}
