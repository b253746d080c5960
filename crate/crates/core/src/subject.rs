use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::pools::check_motion_entry;
use crate::{fsutil, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubjectKind {
    Inanimate,
    Living,
    /// Living subject whose pools were seeded with "person" wording.
    Human,
}

impl SubjectKind {
    pub fn is_living(self) -> bool {
        !matches!(self, SubjectKind::Inanimate)
    }
}

impl fmt::Display for SubjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubjectKind::Inanimate => "inanimate",
            SubjectKind::Living => "living",
            SubjectKind::Human => "human",
        })
    }
}

impl FromStr for SubjectKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inanimate" | "object" => Ok(SubjectKind::Inanimate),
            "living" | "animal" => Ok(SubjectKind::Living),
            "human" | "person" => Ok(SubjectKind::Human),
            other => Err(Error::InvalidArgument(format!("unknown subject kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingImage {
    pub image_path: PathBuf,
    /// Background phrase (inanimate) or `$concept` motion sentence (living).
    pub context_phrase: String,
}

/// One personalization subject and its training images.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectSpec {
    pub dataset_name: String,
    pub class_noun_vague: String,
    pub class_noun_specific: String,
    pub kind: SubjectKind,
    pub identifier_token: String,
    #[serde(default)]
    pub training_images: Vec<TrainingImage>,
}

impl SubjectSpec {
    pub fn validate(&self) -> Result<()> {
        let token = &self.identifier_token;
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!(
                "identifier token {token:?} must be a single whitespace-free token"
            )));
        }
        for noun in [&self.class_noun_vague, &self.class_noun_specific] {
            if noun.trim().is_empty() || noun.trim() != noun {
                return Err(Error::InvalidArgument(format!("bad class noun {noun:?}")));
            }
        }
        for (i, img) in self.training_images.iter().enumerate() {
            if img.context_phrase.trim().is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "training image {i} ({}) has no context phrase",
                    img.image_path.display()
                )));
            }
            if self.kind.is_living() {
                check_motion_entry(&img.context_phrase).map_err(|reason| {
                    Error::InvalidArgument(format!("training image {i} motion phrase: {reason}"))
                })?;
            }
        }
        Ok(())
    }

    pub fn training_contexts(&self) -> impl Iterator<Item = &str> {
        self.training_images.iter().map(|t| t.context_phrase.as_str())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let spec: SubjectSpec = fsutil::read_json(path)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_json(path, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn backpack() -> SubjectSpec {
        SubjectSpec {
            dataset_name: "backpack".into(),
            class_noun_vague: "backpack".into(),
            class_noun_specific: "backpack".into(),
            kind: SubjectKind::Inanimate,
            identifier_token: "olis".into(),
            training_images: vec![TrainingImage {
                image_path: "00.jpg".into(),
                context_phrase: "on a rock".into(),
            }],
        }
    }

    #[test]
    fn identifier_must_be_one_token() {
        let mut s = backpack();
        assert!(s.validate().is_ok());
        s.identifier_token = "ol is".into();
        assert!(s.validate().is_err());
        s.identifier_token = String::new();
        assert!(s.validate().is_err());
    }

    #[test]
    fn empty_context_rejected() {
        let mut s = backpack();
        s.training_images[0].context_phrase = "  ".into();
        assert!(s.validate().is_err());
    }

    #[test]
    fn living_context_needs_concept() {
        let mut s = backpack();
        s.kind = SubjectKind::Living;
        assert!(s.validate().is_err());
        s.training_images[0].context_phrase = "a $concept sitting on a rock".into();
        assert!(s.validate().is_ok());
    }
}
