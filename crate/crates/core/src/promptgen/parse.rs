//! Recovers a [`StructuredPrompt`] from rendered text.
//!
//! Parsing is a small backtracking search: optional style, the article, an
//! optional identifier, zero to three attribute phrases in slot order
//! (longest pool match first), the class noun, then the context. A candidate
//! is accepted only if it re-renders to the input byte for byte.

use std::cmp::Reverse;
use std::collections::HashSet;

use super::{Attribute, PromptForm, StructuredPrompt};
use crate::pools::{PoolCategory, PoolSet, CONCEPT_TOKEN};
use crate::subject::SubjectSpec;
use crate::{Error, Result};

struct MotionTemplate {
    text: String,
    prefix: String,
    suffix: String,
}

/// Parser bound to one pool set and subject. Build once, parse many.
pub struct PromptParser {
    form: PromptForm,
    styles: Vec<String>,
    slots: Vec<(PoolCategory, Vec<String>)>,
    nouns: Vec<String>,
    identifier: String,
    backgrounds: HashSet<String>,
    motions: Vec<MotionTemplate>,
}

fn longest_first(mut entries: Vec<String>) -> Vec<String> {
    entries.sort_by_key(|e| Reverse(e.len()));
    entries
}

fn entries(pools: &PoolSet, category: PoolCategory) -> Vec<String> {
    pools.get(category).map(|p| p.entries.clone()).unwrap_or_default()
}

/// Tracks the furthest byte offset any candidate reached, for error reports.
/// Called with (identifier, attributes, noun, byte offset after the noun) for each candidate split.
type Accept<'a> = dyn FnMut(Option<&str>, &[Attribute], &str, usize, &mut Progress) -> Option<StructuredPrompt> + 'a;

struct Progress {
    furthest: usize,
    reason: &'static str,
}

impl Progress {
    fn reach(&mut self, pos: usize, reason: &'static str) {
        if pos >= self.furthest {
            self.furthest = pos;
            self.reason = reason;
        }
    }
}

impl PromptParser {
    pub fn new(pools: &PoolSet, subject: &SubjectSpec) -> Self {
        let form = PromptForm::for_kind(subject.kind);
        let slots = form
            .slots()
            .into_iter()
            .map(|slot| (slot, longest_first(entries(pools, slot))))
            .collect();
        let mut nouns = vec![subject.class_noun_specific.clone()];
        if subject.class_noun_vague != subject.class_noun_specific {
            nouns.push(subject.class_noun_vague.clone());
        }
        let contexts = entries(pools, PoolCategory::context_for(subject.kind))
            .into_iter()
            .chain(subject.training_contexts().map(str::to_string));
        let mut backgrounds = HashSet::new();
        let mut motions = Vec::new();
        match form {
            PromptForm::Inanimate => backgrounds.extend(contexts),
            PromptForm::Living => {
                let mut seen = HashSet::new();
                for text in contexts {
                    if !seen.insert(text.clone()) {
                        continue;
                    }
                    if let Some(at) = text.find(CONCEPT_TOKEN) {
                        motions.push(MotionTemplate {
                            prefix: text[..at].to_string(),
                            suffix: text[at + CONCEPT_TOKEN.len()..].to_string(),
                            text,
                        });
                    }
                }
            }
        }
        PromptParser {
            form,
            styles: longest_first(entries(pools, PoolCategory::Style)),
            slots,
            nouns,
            identifier: subject.identifier_token.clone(),
            backgrounds,
            motions,
        }
    }

    pub fn parse(&self, text: &str) -> Result<StructuredPrompt> {
        let mut progress = Progress {
            furthest: 0,
            reason: "expected a style phrase or \"a \"",
        };
        let style_options = self
            .styles
            .iter()
            .filter(|s| text.len() > s.len() && text.starts_with(s.as_str()) && text[s.len()..].starts_with(' '))
            .map(|s| Some(s.as_str()))
            .chain(std::iter::once(None));
        for style in style_options {
            let start = style.map_or(0, |s| s.len() + 1);
            progress.reach(start, "expected \"a \" or a motion sentence");
            let found = match self.form {
                PromptForm::Inanimate => self.parse_inanimate(text, start, style, &mut progress),
                PromptForm::Living => self.parse_living(text, start, style, &mut progress),
            };
            if let Some(prompt) = found {
                return Ok(prompt);
            }
        }
        Err(Error::Parse {
            position: progress.furthest,
            reason: progress.reason.to_string(),
        })
    }

    fn parse_inanimate(
        &self,
        text: &str,
        start: usize,
        style: Option<&str>,
        progress: &mut Progress,
    ) -> Option<StructuredPrompt> {
        let body_start = start + 2;
        if !text[start..].starts_with("a ") {
            return None;
        }
        progress.reach(body_start, "expected identifier, attribute, or class noun");
        self.parse_concept(text, body_start, progress, &mut |identifier, attrs, noun, end, progress| {
            let rest = &text[end..];
            let Some(background) = rest.strip_prefix(' ') else {
                progress.reach(end, "expected background after class noun");
                return None;
            };
            if !self.backgrounds.contains(background) {
                progress.reach(end + 1, "background not in pool or training contexts");
                return None;
            }
            self.finish(text, style, attrs, identifier, noun, background)
        })
    }

    fn parse_living(
        &self,
        text: &str,
        start: usize,
        style: Option<&str>,
        progress: &mut Progress,
    ) -> Option<StructuredPrompt> {
        let rest = &text[start..];
        for template in &self.motions {
            if rest.len() <= template.prefix.len() + template.suffix.len()
                || !rest.starts_with(&template.prefix)
                || !rest.ends_with(&template.suffix)
            {
                continue;
            }
            let concept_start = start + template.prefix.len();
            let concept_end = text.len() - template.suffix.len();
            progress.reach(concept_start, "expected identifier, attribute, or class noun");
            let found = self.parse_concept(
                &text[..concept_end],
                concept_start,
                progress,
                &mut |identifier, attrs, noun, end, progress| {
                    if end != concept_end {
                        progress.reach(end, "unexpected text after class noun");
                        return None;
                    }
                    self.finish(text, style, attrs, identifier, noun, &template.text)
                },
            );
            if found.is_some() {
                return found;
            }
        }
        None
    }

    /// Parses `[identifier ][attr ]*<noun>` beginning at `pos` in `text` and
    /// hands every complete reading to `accept` until one succeeds.
    fn parse_concept(
        &self,
        text: &str,
        pos: usize,
        progress: &mut Progress,
        accept: &mut Accept<'_>,
    ) -> Option<StructuredPrompt> {
        let id_prefix_len = self.identifier.len() + 1;
        let with_id = text[pos..].starts_with(&self.identifier) && text[pos + self.identifier.len()..].starts_with(' ');
        let mut attrs = Vec::with_capacity(3);
        if with_id {
            let found = self.parse_attrs(
                text,
                pos + id_prefix_len,
                0,
                Some(&self.identifier),
                &mut attrs,
                progress,
                accept,
            );
            if found.is_some() {
                return found;
            }
        }
        self.parse_attrs(text, pos, 0, None, &mut attrs, progress, accept)
    }

    #[allow(clippy::too_many_arguments)]
    fn parse_attrs(
        &self,
        text: &str,
        pos: usize,
        first_slot: usize,
        identifier: Option<&str>,
        attrs: &mut Vec<Attribute>,
        progress: &mut Progress,
        accept: &mut Accept<'_>,
    ) -> Option<StructuredPrompt> {
        let rest = &text[pos..];
        for (slot_index, (slot, words)) in self.slots.iter().enumerate().skip(first_slot) {
            for word in words {
                if rest.len() > word.len() && rest.starts_with(word.as_str()) && rest[word.len()..].starts_with(' ') {
                    attrs.push(Attribute::new(*slot, word.clone()));
                    progress.reach(pos + word.len() + 1, "expected attribute or class noun");
                    let found = self.parse_attrs(
                        text,
                        pos + word.len() + 1,
                        slot_index + 1,
                        identifier,
                        attrs,
                        progress,
                        accept,
                    );
                    attrs.pop();
                    if found.is_some() {
                        return found;
                    }
                }
            }
        }
        for noun in &self.nouns {
            if rest.starts_with(noun.as_str()) && (rest.len() == noun.len() || rest[noun.len()..].starts_with(' ')) {
                if let Some(found) = accept(identifier, attrs, noun, pos + noun.len(), progress) {
                    return Some(found);
                }
            }
        }
        progress.reach(pos, "expected attribute or class noun");
        None
    }

    fn finish(
        &self,
        text: &str,
        style: Option<&str>,
        attrs: &[Attribute],
        identifier: Option<&str>,
        noun: &str,
        context: &str,
    ) -> Option<StructuredPrompt> {
        let prompt = StructuredPrompt::new(
            self.form,
            style.map(str::to_string),
            attrs.to_vec(),
            identifier.map(str::to_string),
            noun,
            context,
        )
        .ok()?;
        (prompt.rendered == text).then_some(prompt)
    }
}

/// One-shot convenience wrapper around [`PromptParser`].
pub fn parse_prompt(text: &str, pools: &PoolSet, subject: &SubjectSpec) -> Result<StructuredPrompt> {
    PromptParser::new(pools, subject).parse(text)
}
