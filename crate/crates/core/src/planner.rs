//! Regularization-set plan.
//!
//! A plan fixes, ahead of any generation, every prompt and seed of the
//! regularization set. Items are split into three buckets by ratio (default
//! 20% photo / same background, 60% photo / new background, 20% styled / new
//! background) and laid out bucket by bucket. Each item's prompt and seed come
//! from its own ChaCha stream, so rebuilding is byte-identical and any single
//! item can be regenerated on its own.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::pools::PoolSet;
use crate::promptgen::{sample_prompt, ContextSource, PromptParser, SampleOptions, StructuredPrompt};
use crate::seed::{item_prompt_rng, item_seed};
use crate::subject::SubjectSpec;
use crate::{fsutil, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    PhotoSameBackground,
    PhotoNewBackground,
    StyledNewBackground,
}

impl Bucket {
    pub const ALL: [Bucket; 3] = [
        Bucket::PhotoSameBackground,
        Bucket::PhotoNewBackground,
        Bucket::StyledNewBackground,
    ];

    pub fn is_styled(self) -> bool {
        self == Bucket::StyledNewBackground
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bucket::PhotoSameBackground => "photo_same_background",
            Bucket::PhotoNewBackground => "photo_new_background",
            Bucket::StyledNewBackground => "styled_new_background",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub same_background: f64,
    pub new_background: f64,
    pub styled: f64,
}

impl Default for Ratios {
    fn default() -> Self {
        Ratios {
            same_background: 0.2,
            new_background: 0.6,
            styled: 0.2,
        }
    }
}

impl Ratios {
    pub fn new(same_background: f64, new_background: f64, styled: f64) -> Result<Self> {
        let r = Ratios {
            same_background,
            new_background,
            styled,
        };
        r.check()?;
        Ok(r)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.same_background, self.new_background, self.styled]
    }

    pub fn check(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidArgument(format!("ratios must be non-negative: {a:?}")));
        }
        let sum: f64 = a.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `total` over the three ratios. Ties on
/// the fractional part go to the earlier bucket.
///
/// A bucket with a positive ratio that rounds to zero then takes one unit
/// from a rounded-up bucket holding at least two, so small totals keep every
/// bucket populated. Every count stays within 1 of its exact quota.
pub fn bucket_counts(total: usize, ratios: &Ratios) -> Result<[usize; 3]> {
    ratios.check()?;
    let quotas = ratios.as_array().map(|r| r * total as f64);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    // stable sort keeps declaration order on equal remainders
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    for empty in 0..3 {
        if counts[empty] > 0 || quotas[empty] <= 0.0 {
            continue;
        }
        let donor = (0..3)
            .filter(|&d| counts[d] >= 2 && counts[d] as f64 > quotas[d])
            .max_by(|&a, &b| {
                let oa = counts[a] as f64 - quotas[a];
                let ob = counts[b] as f64 - quotas[b];
                oa.partial_cmp(&ob).unwrap_or(std::cmp::Ordering::Equal).then(b.cmp(&a))
            });
        if let Some(d) = donor {
            counts[d] -= 1;
            counts[empty] += 1;
        }
    }
    Ok(counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanItem {
    pub index: usize,
    pub bucket: Bucket,
    pub prompt: StructuredPrompt,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanHeader {
    pub subject: SubjectSpec,
    pub ratios: Ratios,
    pub total: usize,
    pub master_seed: u64,
    /// SHA-256 of each pool file the plan was sampled from.
    pub pool_hashes: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetPlan {
    pub header: PlanHeader,
    pub items: Vec<PlanItem>,
}

pub fn build_plan(
    subject: &SubjectSpec,
    pools: &PoolSet,
    total: usize,
    ratios: Ratios,
    master_seed: u64,
) -> Result<DatasetPlan> {
    subject.validate()?;
    let counts = bucket_counts(total, &ratios)?;
    let contexts: Vec<&str> = subject.training_contexts().collect();
    if counts[0] > 0 && contexts.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "subject {} has no training contexts for the same-background bucket",
            subject.dataset_name
        )));
    }
    let mut items = Vec::with_capacity(total);
    for (bucket, count) in Bucket::ALL.into_iter().zip(counts) {
        for _ in 0..count {
            let index = items.len();
            let mut rng = item_prompt_rng(master_seed, index as u64);
            let options = match bucket {
                Bucket::PhotoSameBackground => SampleOptions {
                    with_style: false,
                    context: ContextSource::Fixed(
                        contexts.choose(&mut rng).expect("checked non-empty").to_string(),
                    ),
                },
                Bucket::PhotoNewBackground => SampleOptions::default(),
                Bucket::StyledNewBackground => SampleOptions {
                    with_style: true,
                    context: ContextSource::Pool,
                },
            };
            let prompt = sample_prompt(&mut rng, pools, subject, &options)?;
            items.push(PlanItem {
                index,
                bucket,
                prompt,
                seed: item_seed(master_seed, index as u64),
            });
        }
    }
    Ok(DatasetPlan {
        header: PlanHeader {
            subject: subject.clone(),
            ratios,
            total,
            master_seed,
            pool_hashes: pools.hashes(),
        },
        items,
    })
}

impl DatasetPlan {
    pub fn bucket_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for item in &self.items {
            counts[item.bucket as usize] += 1;
        }
        counts
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }

    /// SHA-256 of the canonical serialization; manifests record it.
    pub fn hash(&self) -> String {
        fsutil::sha256_hex(self.to_json().as_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        fsutil::read_json(path)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PlanDiagnostic {
    Count { detail: String },
    Item { index: usize, detail: String },
    PoolDrift { category: String },
    Header { detail: String },
}

impl fmt::Display for PlanDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanDiagnostic::Count { detail } => write!(f, "count: {detail}"),
            PlanDiagnostic::Item { index, detail } => write!(f, "item {index}: {detail}"),
            PlanDiagnostic::PoolDrift { category } => write!(f, "pool {category} changed since plan was built"),
            PlanDiagnostic::Header { detail } => write!(f, "header: {detail}"),
        }
    }
}

/// Checks every plan invariant against the current pools. Empty output means
/// the plan is internally consistent.
pub fn validate_plan(plan: &DatasetPlan, pools: &PoolSet) -> Vec<PlanDiagnostic> {
    let mut out = Vec::new();
    let header = &plan.header;
    if let Err(e) = header.subject.validate() {
        out.push(PlanDiagnostic::Header { detail: e.to_string() });
    }
    if plan.items.len() != header.total {
        out.push(PlanDiagnostic::Count {
            detail: format!("{} items, header total {}", plan.items.len(), header.total),
        });
    }
    match bucket_counts(header.total, &header.ratios) {
        Err(e) => out.push(PlanDiagnostic::Header { detail: e.to_string() }),
        Ok(expected) => {
            let actual = plan.bucket_counts();
            if actual != expected {
                out.push(PlanDiagnostic::Count {
                    detail: format!("bucket counts {actual:?}, expected {expected:?}"),
                });
            }
        }
    }
    let current = pools.hashes();
    for (category, hash) in &header.pool_hashes {
        if current.get(category) != Some(hash) {
            out.push(PlanDiagnostic::PoolDrift {
                category: category.clone(),
            });
        }
    }

    let parser = PromptParser::new(pools, &header.subject);
    let contexts: Vec<&str> = header.subject.training_contexts().collect();
    for (position, item) in plan.items.iter().enumerate() {
        let mut problem = |detail: String| {
            out.push(PlanDiagnostic::Item {
                index: item.index,
                detail,
            })
        };
        if item.index != position {
            problem(format!("index {} at position {position}", item.index));
        }
        if item.seed != item_seed(header.master_seed, item.index as u64) {
            problem("seed does not match master seed derivation".into());
        }
        let prompt = &item.prompt;
        if prompt.has_identifier() {
            problem("regularization prompt carries the identifier".into());
        }
        match (item.bucket.is_styled(), prompt.style.is_some()) {
            (true, false) => problem("styled item has no style phrase".into()),
            (false, true) => problem("photo item has a style phrase".into()),
            _ => {}
        }
        if item.bucket == Bucket::PhotoSameBackground && !contexts.contains(&prompt.context.as_str()) {
            problem(format!("context {:?} is not a training context", prompt.context));
        }
        if !prompt.is_consistent() {
            problem("rendered text does not match fields".into());
        } else {
            match parser.parse(&prompt.rendered) {
                Ok(parsed) if &parsed == prompt => {}
                Ok(_) => problem("prompt parses to different fields".into()),
                Err(e) => problem(format!("prompt does not parse against pools: {e}")),
            }
        }
    }
    out
}
