//! Structured prompts.
//!
//! Inanimate prompts assemble as
//! `[style ]a [identifier ][shape ][color ][texture ]<class noun> <background>`;
//! living prompts substitute `[identifier ][body ][skin/fur ][emotion ]<class noun>`
//! for `$concept` in a motion sentence and prefix the style, if any. The
//! article is always "a".

mod caption;
mod parse;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use caption::{
    build_attribute_edit_prompt, build_training_caption, build_training_prompt,
    normalize_blip_caption, training_captions, CaptionRecord, EditOrder,
};
pub use parse::{parse_prompt, PromptParser};
pub(crate) use caption::find_phrase;

use crate::pools::{check_motion_entry, PoolCategory, PoolSet, CONCEPT_TOKEN};
use crate::subject::{SubjectKind, SubjectSpec};
use crate::{Error, Result};

/// Which template family a prompt uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptForm {
    /// Background phrase appended after the class noun.
    Inanimate,
    /// Concept substituted into a `$concept` motion sentence.
    Living,
}

impl PromptForm {
    pub fn for_kind(kind: SubjectKind) -> Self {
        if kind.is_living() {
            PromptForm::Living
        } else {
            PromptForm::Inanimate
        }
    }

    fn slots(self) -> [PoolCategory; 3] {
        match self {
            PromptForm::Inanimate => PoolCategory::attribute_slots(SubjectKind::Inanimate),
            PromptForm::Living => PoolCategory::attribute_slots(SubjectKind::Living),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Attribute {
    pub slot: PoolCategory,
    pub word: String,
}

impl Attribute {
    pub fn new(slot: PoolCategory, word: impl Into<String>) -> Self {
        Self {
            slot,
            word: word.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StructuredPrompt {
    pub form: PromptForm,
    pub style: Option<String>,
    pub attrs: Vec<Attribute>,
    /// Identifier token; present on training captions only.
    pub identifier: Option<String>,
    pub class_noun: String,
    /// Background phrase, or motion sentence containing `$concept`.
    pub context: String,
    pub rendered: String,
}

fn check_attrs(form: PromptForm, attrs: &[Attribute]) -> Result<()> {
    let slots = form.slots();
    if attrs.len() > slots.len() {
        return Err(Error::InvalidPrompt(format!("{} attributes, at most 3", attrs.len())));
    }
    let mut next = 0;
    for attr in attrs {
        let pos = slots.iter().position(|s| *s == attr.slot).ok_or_else(|| {
            Error::InvalidPrompt(format!("slot {} does not apply to {form:?} prompts", attr.slot))
        })?;
        if pos < next {
            return Err(Error::InvalidPrompt(format!(
                "slot {} repeated or out of canonical order",
                attr.slot
            )));
        }
        if attr.word.trim().is_empty() {
            return Err(Error::InvalidPrompt(format!("empty {} word", attr.slot)));
        }
        next = pos + 1;
    }
    Ok(())
}

fn concept_phrase(identifier: Option<&str>, attrs: &[Attribute], class_noun: &str) -> String {
    let mut out = String::new();
    for word in identifier.into_iter().chain(attrs.iter().map(|a| a.word.as_str())) {
        out.push_str(word);
        out.push(' ');
    }
    out.push_str(class_noun);
    out
}

fn check_noun(class_noun: &str) -> Result<()> {
    if class_noun.trim().is_empty() {
        return Err(Error::InvalidPrompt("empty class noun".into()));
    }
    Ok(())
}

fn with_style(style: Option<&str>, body: String) -> String {
    match style {
        Some(s) => format!("{s} {body}"),
        None => body,
    }
}

pub fn render_inanimate(
    style: Option<&str>,
    attrs: &[Attribute],
    identifier: Option<&str>,
    class_noun: &str,
    background: &str,
) -> Result<String> {
    check_noun(class_noun)?;
    check_attrs(PromptForm::Inanimate, attrs)?;
    if background.trim().is_empty() {
        return Err(Error::InvalidPrompt("empty background".into()));
    }
    let concept = concept_phrase(identifier, attrs, class_noun);
    Ok(with_style(style, format!("a {concept} {background}")))
}

pub fn render_living(
    style: Option<&str>,
    attrs: &[Attribute],
    identifier: Option<&str>,
    class_noun: &str,
    motion_template: &str,
) -> Result<String> {
    check_noun(class_noun)?;
    check_attrs(PromptForm::Living, attrs)?;
    check_motion_entry(motion_template)
        .map_err(|reason| Error::InvalidPrompt(format!("motion {motion_template:?}: {reason}")))?;
    let concept = concept_phrase(identifier, attrs, class_noun);
    Ok(with_style(style, motion_template.replacen(CONCEPT_TOKEN, &concept, 1)))
}

impl StructuredPrompt {
    pub fn new(
        form: PromptForm,
        style: Option<String>,
        attrs: Vec<Attribute>,
        identifier: Option<String>,
        class_noun: impl Into<String>,
        context: impl Into<String>,
    ) -> Result<Self> {
        let mut prompt = StructuredPrompt {
            form,
            style,
            attrs,
            identifier,
            class_noun: class_noun.into(),
            context: context.into(),
            rendered: String::new(),
        };
        prompt.rendered = prompt.render()?;
        Ok(prompt)
    }

    pub fn has_identifier(&self) -> bool {
        self.identifier.is_some()
    }

    /// Assembles the text from the fields.
    pub fn render(&self) -> Result<String> {
        let style = self.style.as_deref();
        let identifier = self.identifier.as_deref();
        match self.form {
            PromptForm::Inanimate => {
                render_inanimate(style, &self.attrs, identifier, &self.class_noun, &self.context)
            }
            PromptForm::Living => {
                render_living(style, &self.attrs, identifier, &self.class_noun, &self.context)
            }
        }
    }

    /// True when `rendered` matches the fields byte for byte.
    pub fn is_consistent(&self) -> bool {
        self.render().is_ok_and(|r| r == self.rendered)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum ContextSource {
    #[default]
    Pool,
    Fixed(String),
}

#[derive(Clone, Debug, Default)]
pub struct SampleOptions {
    pub with_style: bool,
    pub context: ContextSource,
}

/// Draws one word per attribute slot, a context, and optionally a style, each
/// uniformly from its pool. Uses the subject's specific class noun and no
/// identifier.
pub fn sample_prompt<R: Rng + ?Sized>(
    rng: &mut R,
    pools: &PoolSet,
    subject: &SubjectSpec,
    options: &SampleOptions,
) -> Result<StructuredPrompt> {
    let form = PromptForm::for_kind(subject.kind);
    let mut attrs = Vec::with_capacity(3);
    for slot in form.slots() {
        let pool = pools.require(slot)?;
        let word = pool.entries.choose(rng).ok_or(Error::EmptyPool(slot))?;
        attrs.push(Attribute::new(slot, word.clone()));
    }
    let context = match &options.context {
        ContextSource::Fixed(phrase) => phrase.clone(),
        ContextSource::Pool => {
            let category = PoolCategory::context_for(subject.kind);
            let pool = pools.require(category)?;
            pool.entries.choose(rng).ok_or(Error::EmptyPool(category))?.clone()
        }
    };
    let style = if options.with_style {
        let pool = pools.require(PoolCategory::Style)?;
        Some(
            pool.entries
                .choose(rng)
                .ok_or(Error::EmptyPool(PoolCategory::Style))?
                .clone(),
        )
    } else {
        None
    };
    StructuredPrompt::new(
        form,
        style,
        attrs,
        None,
        subject.class_noun_specific.clone(),
        context,
    )
}

/// Removes the attributes whose mask entry is false and re-renders. Identifier,
/// class noun, style, and context are always kept.
pub fn apply_dropout(prompt: &StructuredPrompt, keep_mask: &[bool]) -> Result<StructuredPrompt> {
    if keep_mask.len() != prompt.attrs.len() {
        return Err(Error::InvalidArgument(format!(
            "mask has {} entries for {} attributes",
            keep_mask.len(),
            prompt.attrs.len()
        )));
    }
    let attrs = prompt
        .attrs
        .iter()
        .zip(keep_mask)
        .filter(|(_, keep)| **keep)
        .map(|(a, _)| a.clone())
        .collect();
    StructuredPrompt::new(
        prompt.form,
        prompt.style.clone(),
        attrs,
        prompt.identifier.clone(),
        prompt.class_noun.clone(),
        prompt.context.clone(),
    )
}

/// Independent Bernoulli(`p_keep`) draw per slot.
pub fn sample_dropout_mask<R: Rng + ?Sized>(rng: &mut R, n_slots: usize, p_keep: f64) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&p_keep) {
        return Err(Error::InvalidArgument(format!("p_keep {p_keep} outside [0, 1]")));
    }
    Ok((0..n_slots).map(|_| rng.random_bool(p_keep)).collect())
}

pub const DEFAULT_P_KEEP: f64 = 0.5;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn inanimate_attrs(words: [&str; 3]) -> Vec<Attribute> {
        vec![
            Attribute::new(PoolCategory::Shape, words[0]),
            Attribute::new(PoolCategory::Color, words[1]),
            Attribute::new(PoolCategory::Texture, words[2]),
        ]
    }

    #[test]
    fn renders_reference_examples() {
        let attrs = inanimate_attrs(["contoured", "orchid", "woven"]);
        assert_eq!(
            render_inanimate(None, &attrs, None, "backpack", "on a rock").unwrap(),
            "a contoured orchid woven backpack on a rock"
        );
        let attrs = inanimate_attrs(["trapezoidal", "coral", "embossed"]);
        assert_eq!(
            render_inanimate(
                Some("a children's storybook illustration of"),
                &attrs,
                None,
                "backpack",
                "against the canvas of a city skyline"
            )
            .unwrap(),
            "a children's storybook illustration of a trapezoidal coral embossed backpack against the canvas of a city skyline"
        );
        assert_eq!(
            render_inanimate(None, &[], Some("olis"), "backpack", "on a rock").unwrap(),
            "a olis backpack on a rock"
        );
    }

    #[test]
    fn renders_living() {
        let attrs = vec![
            Attribute::new(PoolCategory::Body, "muscular"),
            Attribute::new(PoolCategory::SkinFur, "fluffy"),
            Attribute::new(PoolCategory::Emotion, "joyful"),
        ];
        assert_eq!(
            render_living(None, &attrs, None, "dog", "a $concept sitting in a temple").unwrap(),
            "a muscular fluffy joyful dog sitting in a temple"
        );
        assert_eq!(
            render_living(None, &[], Some("olis"), "dog", "a $concept walking in a supermarket").unwrap(),
            "a olis dog walking in a supermarket"
        );
        assert_eq!(
            render_living(Some("a photo of"), &[], None, "cat", "a $concept sitting in a temple").unwrap(),
            "a photo of a cat sitting in a temple"
        );
    }

    #[test]
    fn render_errors() {
        assert!(render_inanimate(None, &[], None, "", "on a rock").is_err());
        assert!(render_inanimate(None, &[], None, "backpack", " ").is_err());
        assert!(render_living(None, &[], None, "dog", "sitting in a temple").is_err());
        // out-of-order slots
        let attrs = vec![
            Attribute::new(PoolCategory::Color, "coral"),
            Attribute::new(PoolCategory::Shape, "round"),
        ];
        assert!(render_inanimate(None, &attrs, None, "backpack", "on a rock").is_err());
        // living slot on an inanimate prompt
        let attrs = vec![Attribute::new(PoolCategory::Body, "muscular")];
        assert!(render_inanimate(None, &attrs, None, "backpack", "on a rock").is_err());
    }

    #[test]
    fn dropout_examples() {
        let p = StructuredPrompt::new(
            PromptForm::Inanimate,
            None,
            inanimate_attrs(["contoured", "orchid", "woven"]),
            None,
            "backpack",
            "on a rock",
        )
        .unwrap();
        let d = apply_dropout(&p, &[true, false, true]).unwrap();
        assert_eq!(d.rendered, "a contoured woven backpack on a rock");
        assert_eq!(apply_dropout(&p, &[true, true, true]).unwrap(), p);
        let two = apply_dropout(&p, &[true, true, false]).unwrap();
        assert_eq!(apply_dropout(&two, &[false, false]).unwrap().rendered, "a backpack on a rock");
        assert!(apply_dropout(&p, &[true]).is_err());
    }

    #[test]
    fn mask_extremes() {
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            assert_eq!(sample_dropout_mask(&mut rng, 3, 1.0).unwrap(), vec![true; 3]);
            assert_eq!(sample_dropout_mask(&mut rng, 3, 0.0).unwrap(), vec![false; 3]);
        }
        assert!(sample_dropout_mask(&mut rng, 3, 1.5).is_err());
    }
}
