use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{PromptForm, StructuredPrompt};
use crate::subject::SubjectSpec;
use crate::{Error, Result};

/// Training prompt for one image: identifier, specific class noun, and the
/// image's own background or motion phrase.
pub fn build_training_prompt(subject: &SubjectSpec, image_index: usize) -> Result<StructuredPrompt> {
    let image = subject.training_images.get(image_index).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "image index {image_index} out of range ({} training images)",
            subject.training_images.len()
        ))
    })?;
    if image.context_phrase.trim().is_empty() {
        return Err(Error::InvalidPrompt(format!(
            "{} has no context phrase",
            image.image_path.display()
        )));
    }
    StructuredPrompt::new(
        PromptForm::for_kind(subject.kind),
        None,
        Vec::new(),
        Some(subject.identifier_token.clone()),
        subject.class_noun_specific.clone(),
        image.context_phrase.clone(),
    )
}

pub fn build_training_caption(subject: &SubjectSpec, image_index: usize) -> Result<String> {
    build_training_prompt(subject, image_index).map(|p| p.rendered)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image_path: PathBuf,
    pub caption: String,
}

/// Captions for every training image, in order.
pub fn training_captions(subject: &SubjectSpec) -> Result<Vec<CaptionRecord>> {
    (0..subject.training_images.len())
        .map(|i| {
            Ok(CaptionRecord {
                image_path: subject.training_images[i].image_path.clone(),
                caption: build_training_caption(subject, i)?,
            })
        })
        .collect()
}

pub(crate) fn find_phrase(haystack: &str, phrase: &str) -> Option<usize> {
    let is_boundary = |c: Option<char>| c.is_none_or(|c| !c.is_alphanumeric());
    haystack.match_indices(phrase).map(|(i, _)| i).find(|&i| {
        is_boundary(haystack[..i].chars().next_back()) && is_boundary(haystack[i + phrase.len()..].chars().next())
    })
}

/// Inserts `identifier` right before the first whole-word occurrence of
/// `class_noun`, turning a captioner's "a tortoise plushie on a pillow" into
/// "a <new> tortoise plushie on a pillow".
pub fn normalize_blip_caption(caption: &str, class_noun: &str, identifier: &str) -> Result<String> {
    if class_noun.trim().is_empty() {
        return Err(Error::InvalidArgument("empty class noun".into()));
    }
    let at = find_phrase(caption, class_noun).ok_or_else(|| {
        Error::InvalidPrompt(format!("caption {caption:?} does not mention {class_noun:?}"))
    })?;
    Ok(format!("{}{identifier} {}", &caption[..at], &caption[at..]))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditOrder {
    /// "a <identifier> <color> <noun>"; the better-performing order.
    #[default]
    IdentifierFirst,
    /// "a <color> <identifier> <noun>".
    ColorFirst,
}

pub fn build_attribute_edit_prompt(subject: &SubjectSpec, color_word: &str, order: EditOrder) -> Result<String> {
    if color_word.trim().is_empty() {
        return Err(Error::InvalidArgument("empty color word".into()));
    }
    let id = &subject.identifier_token;
    let noun = &subject.class_noun_specific;
    Ok(match order {
        EditOrder::IdentifierFirst => format!("a {id} {color_word} {noun}"),
        EditOrder::ColorFirst => format!("a {color_word} {id} {noun}"),
    })
}
