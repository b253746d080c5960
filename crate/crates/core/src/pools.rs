//! Attribute and phrase pools.
//!
//! A pool is a deduplicated list of phrases for one prompt slot. Pools are
//! seeded by asking a language model for word lists, then cleaned by
//! [`ingest_pool`]. A pool-set directory holds one `<category>.json` file per
//! category for a given subject kind.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::fsutil;
use crate::subject::SubjectKind;
use crate::{Error, Result};

/// Placeholder standing in for the subject inside motion sentences.
pub const CONCEPT_TOKEN: &str = "$concept";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolCategory {
    Shape,
    Color,
    Texture,
    Background,
    Body,
    SkinFur,
    Emotion,
    Motion,
    Style,
}

impl PoolCategory {
    pub const ALL: [PoolCategory; 9] = [
        PoolCategory::Shape,
        PoolCategory::Color,
        PoolCategory::Texture,
        PoolCategory::Background,
        PoolCategory::Body,
        PoolCategory::SkinFur,
        PoolCategory::Emotion,
        PoolCategory::Motion,
        PoolCategory::Style,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PoolCategory::Shape => "shape",
            PoolCategory::Color => "color",
            PoolCategory::Texture => "texture",
            PoolCategory::Background => "background",
            PoolCategory::Body => "body",
            PoolCategory::SkinFur => "skin_fur",
            PoolCategory::Emotion => "emotion",
            PoolCategory::Motion => "motion",
            PoolCategory::Style => "style",
        }
    }

    pub fn applies_to(self, kind: SubjectKind) -> bool {
        use PoolCategory::*;
        match self {
            Shape | Color | Texture | Background => !kind.is_living(),
            Body | SkinFur | Emotion | Motion => kind.is_living(),
            Style => true,
        }
    }

    /// Categories a pool set must contain to sample every bucket for `kind`.
    pub fn required_for(kind: SubjectKind) -> [PoolCategory; 5] {
        use PoolCategory::*;
        if kind.is_living() {
            [Body, SkinFur, Emotion, Motion, Style]
        } else {
            [Shape, Color, Texture, Background, Style]
        }
    }

    /// Attribute slots in canonical prompt order.
    pub fn attribute_slots(kind: SubjectKind) -> [PoolCategory; 3] {
        use PoolCategory::*;
        if kind.is_living() {
            [Body, SkinFur, Emotion]
        } else {
            [Shape, Color, Texture]
        }
    }

    /// Background for inanimate subjects, Motion for living ones.
    pub fn context_for(kind: SubjectKind) -> PoolCategory {
        if kind.is_living() {
            PoolCategory::Motion
        } else {
            PoolCategory::Background
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.json", self.name())
    }
}

impl fmt::Display for PoolCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PoolCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '/'], "_");
        PoolCategory::ALL
            .into_iter()
            .find(|c| c.name() == norm || (norm == "skin" && *c == PoolCategory::SkinFur))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown pool category '{s}'")))
    }
}

/// Instruction sent to the language model to seed the pool for `category`.
pub fn pool_generation_prompt(category: PoolCategory, kind: SubjectKind) -> Result<String> {
    if !category.applies_to(kind) {
        return Err(Error::InvalidCategory {
            category,
            kind: kind.to_string(),
        });
    }
    let text = match category {
        PoolCategory::Shape => "give me 100 adjective words describing the shape of an object",
        PoolCategory::Color => "give me 100 adjective words describing the color of an object",
        PoolCategory::Texture => "give me 100 adjective words describing the texture of an object",
        PoolCategory::Background => {
            "give me 500 phrases that describe the background, such as \"on the table\", as diverse as possible."
        }
        PoolCategory::Body => "give me 100 adjective words describing the body of an animal",
        PoolCategory::SkinFur => "give me 100 adjective words describing the skin or fur of an animal",
        PoolCategory::Emotion => "give me 100 adjective words describing the emotion of an animal",
        PoolCategory::Motion => {
            "give me 1000 different short concise sentences that contains a special token \"$concept\" \
             which stands for a specific animal, which can be a dog, a cat or a human. \
             For example: \"a $concept sitting in a temple\", \"a $concept walking in a supermarket\". \
             Keep \"a $concept\" in the sentences."
        }
        PoolCategory::Style => {
            "give me 100 image style descriptions, such as \"a photo of\", and \"a painting of\"."
        }
    };
    Ok(if kind == SubjectKind::Human {
        text.replace("animal", "person")
    } else {
        text.to_string()
    })
}

/// Splits a free-form model response into candidate entries, one per line,
/// dropping list markers such as `1.`, `2)`, `-`, `*` and `•`.
pub fn parse_llm_response(text: &str) -> Vec<String> {
    text.lines()
        .map(strip_list_marker)
        .map(|l| l.trim().trim_matches('"').trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

fn strip_list_marker(line: &str) -> &str {
    let line = line.trim_start();
    for marker in ["- ", "* ", "• "] {
        if let Some(rest) = line.strip_prefix(marker) {
            return rest;
        }
    }
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(rest) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return rest;
        }
    }
    line
}

fn dedup_key(entry: &str) -> String {
    entry.trim().to_lowercase()
}

/// Checks the motion-sentence contract: exactly one `$concept`, preceded by
/// the word "a".
pub fn check_motion_entry(entry: &str) -> std::result::Result<(), String> {
    let count = entry.matches(CONCEPT_TOKEN).count();
    if count != 1 {
        return Err(format!("expected exactly one {CONCEPT_TOKEN}, found {count}"));
    }
    let at = entry.find(CONCEPT_TOKEN).unwrap_or_default();
    let before = entry[..at].trim_end();
    let preceding_word = before.rsplit(' ').next().unwrap_or("");
    if !preceding_word.eq_ignore_ascii_case("a") || !entry[..at].ends_with(' ') {
        return Err(format!("{CONCEPT_TOKEN} must be preceded by the word \"a\""));
    }
    let after = &entry[at + CONCEPT_TOKEN.len()..];
    if !after.is_empty() && !after.starts_with(' ') {
        return Err(format!("{CONCEPT_TOKEN} must be followed by a space"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributePool {
    pub category: PoolCategory,
    pub provenance: String,
    pub entries: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedEntry {
    pub entry: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IngestOutcome {
    pub pool: AttributePool,
    /// Entries rejected by an invariant, with the reason.
    pub dropped: Vec<DroppedEntry>,
    /// Number of case/whitespace duplicates removed.
    pub duplicates: usize,
}

/// Cleans raw entries into a pool: trims, filters invariant violations, and
/// removes case-insensitive duplicates keeping the first occurrence.
pub fn ingest_pool(
    category: PoolCategory,
    raw_entries: &[String],
    provenance: impl Into<String>,
) -> Result<IngestOutcome> {
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    let mut dropped = Vec::new();
    let mut duplicates = 0;
    for raw in raw_entries {
        let entry = raw.trim();
        if entry.is_empty() {
            continue;
        }
        let key = dedup_key(entry);
        if seen.contains(&key) {
            duplicates += 1;
            continue;
        }
        if category == PoolCategory::Motion {
            if let Err(reason) = check_motion_entry(entry) {
                log::debug!("dropping motion entry {entry:?}: {reason}");
                dropped.push(DroppedEntry {
                    entry: entry.to_string(),
                    reason,
                });
                continue;
            }
        }
        seen.insert(key);
        entries.push(entry.to_string());
    }
    if entries.is_empty() {
        return Err(Error::EmptyPool(category));
    }
    Ok(IngestOutcome {
        pool: AttributePool {
            category,
            provenance: provenance.into(),
            entries,
        },
        dropped,
        duplicates,
    })
}

impl AttributePool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, phrase: &str) -> bool {
        self.entries.iter().any(|e| e == phrase)
    }

    /// Invariant violations, one message per offending entry.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for entry in &self.entries {
            if entry.trim().is_empty() {
                out.push("empty entry".to_string());
                continue;
            }
            if entry.trim() != entry {
                out.push(format!("{entry:?}: surrounding whitespace"));
            }
            if !seen.insert(dedup_key(entry)) {
                out.push(format!("{entry:?}: duplicate"));
            }
            if self.category == PoolCategory::Motion {
                if let Err(reason) = check_motion_entry(entry) {
                    out.push(format!("{entry:?}: {reason}"));
                }
            }
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        fsutil::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_json(path, self)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("pool serializes");
        s.push('\n');
        s
    }
}

/// All pools available for one subject kind.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PoolSet {
    pools: BTreeMap<PoolCategory, AttributePool>,
}

impl PoolSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, pool: AttributePool) -> Option<AttributePool> {
        self.pools.insert(pool.category, pool)
    }

    pub fn remove(&mut self, category: PoolCategory) -> Option<AttributePool> {
        self.pools.remove(&category)
    }

    pub fn get(&self, category: PoolCategory) -> Option<&AttributePool> {
        self.pools.get(&category)
    }

    pub fn get_mut(&mut self, category: PoolCategory) -> Option<&mut AttributePool> {
        self.pools.get_mut(&category)
    }

    /// The pool for `category`, or an error naming it when absent or empty.
    pub fn require(&self, category: PoolCategory) -> Result<&AttributePool> {
        match self.pools.get(&category) {
            None => Err(Error::MissingPool(category)),
            Some(p) if p.is_empty() => Err(Error::EmptyPool(category)),
            Some(p) => Ok(p),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &AttributePool> {
        self.pools.values()
    }

    /// Loads every `<category>.json` present in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut set = PoolSet::new();
        for category in PoolCategory::ALL {
            let path = dir.join(category.file_name());
            if path.exists() {
                let pool = AttributePool::load(&path)?;
                if pool.category != category {
                    return Err(Error::InvalidArgument(format!(
                        "{} declares category {}",
                        path.display(),
                        pool.category
                    )));
                }
                set.insert(pool);
            }
        }
        Ok(set)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        for pool in self.pools.values() {
            pool.save(&dir.join(pool.category.file_name()))?;
        }
        Ok(())
    }

    /// SHA-256 of each pool's canonical serialization, keyed by category name.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        self.pools
            .values()
            .map(|p| (p.category.name().to_string(), fsutil::sha256_hex(p.to_json().as_bytes())))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PoolDiagnostic {
    MissingCategory { category: PoolCategory },
    EmptyPool { category: PoolCategory },
    Violation { category: PoolCategory, detail: String },
}

impl fmt::Display for PoolDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PoolDiagnostic::MissingCategory { category } => write!(f, "missing category {category}"),
            PoolDiagnostic::EmptyPool { category } => write!(f, "{category} pool is empty"),
            PoolDiagnostic::Violation { category, detail } => write!(f, "{category}: {detail}"),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct PoolValidation {
    pub diagnostics: Vec<PoolDiagnostic>,
    pub counts: BTreeMap<PoolCategory, usize>,
}

impl PoolValidation {
    pub fn is_ok(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

/// Reports missing categories, invariant violations, and entry counts. An
/// empty diagnostic list means the set can be sampled for `kind`.
pub fn validate_pools(set: &PoolSet, kind: SubjectKind) -> PoolValidation {
    let mut report = PoolValidation::default();
    for category in PoolCategory::required_for(kind) {
        match set.get(category) {
            None => report
                .diagnostics
                .push(PoolDiagnostic::MissingCategory { category }),
            Some(pool) if pool.is_empty() => {
                report.diagnostics.push(PoolDiagnostic::EmptyPool { category })
            }
            Some(_) => {}
        }
    }
    for pool in set.iter() {
        report.counts.insert(pool.category, pool.len());
        report
            .diagnostics
            .extend(pool.violations().into_iter().map(|detail| PoolDiagnostic::Violation {
                category: pool.category,
                detail,
            }));
    }
    report
}
