//! Pairwise human preference study: plan construction, question text, the
//! answer log, and aggregation.
//!
//! Per pairing the plan holds `questions_per_type` subject-alignment and as
//! many text-alignment comparisons, split round-robin into groups so every
//! group has the same mix. Inside each group exactly half the questions put
//! method A on the left. Images are referenced by opaque ids so a participant
//! cannot infer the method from a path.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backends::Manifest;
use crate::fsutil::{self, sha256_hex};
use crate::{Error, Result};

pub const SUBJECT_ALIGNMENT_QUESTION: &str = "The foreground object in which image is more similar to the reference?";
pub const DEFAULT_QUESTIONS_PER_TYPE: usize = 150;
pub const DEFAULT_GROUPS: usize = 10;
pub const DEFAULT_PARTICIPANTS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    SubjectAlignment,
    TextAlignment,
}

impl QuestionType {
    pub fn label(self) -> &'static str {
        match self {
            QuestionType::SubjectAlignment => "Subject Alignment",
            QuestionType::TextAlignment => "Textual Alignment",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// One comparable (subject, prompt, sample) key with each method's image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonItem {
    pub subject: String,
    pub prompt: String,
    pub sample: usize,
    pub image_a: PathBuf,
    pub image_b: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingSpec {
    pub id: String,
    pub method_a: String,
    pub method_b: String,
    pub items: Vec<ComparisonItem>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingSummary {
    pub id: String,
    pub method_a: String,
    pub method_b: String,
    /// Set when the key space was smaller than the sample and keys repeat.
    pub sampled_with_replacement: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub pairing: String,
    pub qtype: QuestionType,
    pub left_image: String,
    pub right_image: String,
    pub left_is_method_a: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_text: Option<String>,
    pub group: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub seed: u64,
    pub questions_per_type: usize,
    pub groups_per_pairing: usize,
    pub participants: usize,
    pub pairings: Vec<PairingSummary>,
    pub questions: Vec<Question>,
    /// Opaque image id to file path.
    pub images: BTreeMap<String, PathBuf>,
}

#[derive(Clone, Debug)]
pub struct StudyOptions {
    pub questions_per_type: usize,
    pub groups: usize,
    pub participants: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            questions_per_type: DEFAULT_QUESTIONS_PER_TYPE,
            groups: DEFAULT_GROUPS,
            participants: DEFAULT_PARTICIPANTS,
        }
    }
}

pub fn image_ref(path: &Path) -> String {
    sha256_hex(path.to_string_lossy().as_bytes())[..20].to_string()
}

fn sample_items<'a, R: Rng + ?Sized>(rng: &mut R, items: &'a [ComparisonItem], n: usize) -> (Vec<&'a ComparisonItem>, bool) {
    if items.len() >= n {
        (items.choose_multiple(rng, n).collect(), false)
    } else {
        ((0..n).map(|_| items.choose(rng).expect("non-empty")).collect(), true)
    }
}

struct Draft<'a> {
    item: &'a ComparisonItem,
    qtype: QuestionType,
    reference: Option<&'a PathBuf>,
}

/// Builds the study plan. `references` maps each subject to its ground-truth
/// images, one of which is drawn per subject-alignment question.
pub fn build_study_plan<R: Rng + ?Sized>(
    rng: &mut R,
    pairings: &[PairingSpec],
    references: &BTreeMap<String, Vec<PathBuf>>,
    options: &StudyOptions,
    seed: u64,
) -> Result<StudyPlan> {
    let (q, g) = (options.questions_per_type, options.groups);
    if q == 0 || g == 0 || q % g != 0 || (2 * q / g) % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "{q} questions per type cannot be split into {g} equal, side-balanced groups"
        )));
    }
    if pairings.is_empty() {
        return Err(Error::InvalidArgument("no pairings".into()));
    }
    let mut ids = HashSet::new();
    let mut summaries = Vec::new();
    let mut questions = Vec::new();
    let mut images = BTreeMap::new();
    let reference_of = |path: &PathBuf, images: &mut BTreeMap<String, PathBuf>| {
        let r = image_ref(path);
        images.insert(r.clone(), path.clone());
        r
    };
    for pairing in pairings {
        if !ids.insert(pairing.id.as_str()) {
            return Err(Error::InvalidArgument(format!("duplicate pairing id {}", pairing.id)));
        }
        if pairing.items.is_empty() {
            return Err(Error::InvalidArgument(format!("pairing {} has an empty image index", pairing.id)));
        }
        let (sa, sa_rep) = sample_items(rng, &pairing.items, q);
        let (ta, ta_rep) = sample_items(rng, &pairing.items, q);
        let mut sa: Vec<Draft> = sa
            .into_iter()
            .map(|item| {
                let refs = references.get(&item.subject).filter(|r| !r.is_empty()).ok_or_else(|| {
                    Error::InvalidArgument(format!("no reference images for subject {}", item.subject))
                })?;
                Ok(Draft {
                    item,
                    qtype: QuestionType::SubjectAlignment,
                    reference: refs.choose(rng),
                })
            })
            .collect::<Result<_>>()?;
        let mut ta: Vec<Draft> = ta
            .into_iter()
            .map(|item| Draft {
                item,
                qtype: QuestionType::TextAlignment,
                reference: None,
            })
            .collect();
        if let Some(d) = ta.iter().find(|d| d.item.prompt.trim().is_empty()) {
            return Err(Error::InvalidArgument(format!("empty prompt for subject {}", d.item.subject)));
        }
        sa.shuffle(rng);
        ta.shuffle(rng);
        let mut groups: Vec<Vec<Draft>> = (0..g).map(|_| Vec::new()).collect();
        for (i, d) in sa.into_iter().enumerate() {
            groups[i % g].push(d);
        }
        for (i, d) in ta.into_iter().enumerate() {
            groups[i % g].push(d);
        }
        let per_type = q / g;
        for (group, drafts) in groups.into_iter().enumerate() {
            // Half of each group has method A on the left. With an odd number
            // of questions per type the extra one alternates between types
            // from group to group, so each type also balances per pairing.
            let sa_left = if group % 2 == 0 { per_type.div_ceil(2) } else { per_type / 2 };
            let left_counts = [sa_left, per_type - sa_left];
            let mut sides: Vec<(Draft, bool)> = Vec::with_capacity(drafts.len());
            let (sa_part, ta_part): (Vec<Draft>, Vec<Draft>) =
                drafts.into_iter().partition(|d| d.qtype == QuestionType::SubjectAlignment);
            for (part, left) in [sa_part, ta_part].into_iter().zip(left_counts) {
                let mut flags: Vec<bool> = (0..part.len()).map(|i| i < left).collect();
                flags.shuffle(rng);
                sides.extend(part.into_iter().zip(flags));
            }
            sides.shuffle(rng);
            for (d, left_is_a) in sides {
                let (left, right) = if left_is_a {
                    (&d.item.image_a, &d.item.image_b)
                } else {
                    (&d.item.image_b, &d.item.image_a)
                };
                questions.push(Question {
                    id: format!("{}-{:04}", pairing.id, questions.len()),
                    pairing: pairing.id.clone(),
                    qtype: d.qtype,
                    left_image: reference_of(left, &mut images),
                    right_image: reference_of(right, &mut images),
                    left_is_method_a: left_is_a,
                    reference_image: d.reference.map(|r| reference_of(r, &mut images)),
                    prompt_text: (d.qtype == QuestionType::TextAlignment).then(|| d.item.prompt.clone()),
                    group,
                });
            }
        }
        summaries.push(PairingSummary {
            id: pairing.id.clone(),
            method_a: pairing.method_a.clone(),
            method_b: pairing.method_b.clone(),
            sampled_with_replacement: sa_rep || ta_rep,
        });
    }
    Ok(StudyPlan {
        seed,
        questions_per_type: q,
        groups_per_pairing: g,
        participants: options.participants,
        pairings: summaries,
        questions,
        images,
    })
}

/// Comparable items shared by two evaluation manifests. Entries are matched
/// on (subject, prompt with `identifier` removed, sample number), where the
/// sample number orders a prompt's images by path.
pub fn items_from_manifests(a: &Manifest, b: &Manifest, identifiers: &[String]) -> Vec<ComparisonItem> {
    type Key = (String, String, usize);
    let index = |m: &Manifest| -> BTreeMap<Key, PathBuf> {
        let mut by_prompt: BTreeMap<(String, String), Vec<PathBuf>> = BTreeMap::new();
        for e in m.done() {
            let Some(subject) = &e.subject else { continue };
            let prompt: Vec<&str> = e
                .prompt
                .split_whitespace()
                .filter(|w| !identifiers.iter().any(|id| id == w))
                .collect();
            by_prompt
                .entry((subject.clone(), prompt.join(" ")))
                .or_default()
                .push(e.image_path.clone());
        }
        let mut out = BTreeMap::new();
        for ((subject, prompt), mut paths) in by_prompt {
            paths.sort();
            for (i, p) in paths.into_iter().enumerate() {
                out.insert((subject.clone(), prompt.clone(), i), p);
            }
        }
        out
    };
    let (ia, ib) = (index(a), index(b));
    ia.into_iter()
        .filter_map(|(key, image_a)| {
            ib.get(&key).map(|image_b| ComparisonItem {
                subject: key.0,
                prompt: key.1,
                sample: key.2,
                image_a,
                image_b: image_b.clone(),
            })
        })
        .collect()
}

pub fn render_question_text(q: &Question) -> Result<String> {
    match q.qtype {
        QuestionType::SubjectAlignment => Ok(SUBJECT_ALIGNMENT_QUESTION.to_string()),
        QuestionType::TextAlignment => {
            let prompt = q.prompt_text.as_deref().unwrap_or("").trim();
            if prompt.is_empty() {
                return Err(Error::InvalidPrompt(format!("question {} has no prompt text", q.id)));
            }
            Ok(format!("Which image better depicts {prompt}?"))
        }
    }
}

impl StudyPlan {
    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        fsutil::read_json(path)
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn group(&self, pairing: &str, group: usize) -> impl Iterator<Item = &Question> {
        let pairing = pairing.to_string();
        self.questions
            .iter()
            .filter(move |q| q.pairing == pairing && q.group == group)
    }

    /// The (pairing, group) pairs participant `index` answers: one group in
    /// every pairing.
    pub fn participant_groups(&self, index: usize) -> Vec<(String, usize)> {
        self.pairings
            .iter()
            .map(|p| (p.id.clone(), index % self.groups_per_pairing))
            .collect()
    }

    /// Structural checks: group sizes, type mix, and side balance.
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let per_group = 2 * self.questions_per_type / self.groups_per_pairing.max(1);
        let mut seen = HashSet::new();
        for q in &self.questions {
            if !seen.insert(&q.id) {
                problems.push(format!("question id {} repeated", q.id));
            }
            let ok = match q.qtype {
                QuestionType::SubjectAlignment => q.reference_image.is_some() && q.prompt_text.is_none(),
                QuestionType::TextAlignment => q.reference_image.is_none() && q.prompt_text.is_some(),
            };
            if !ok {
                problems.push(format!("question {} has the wrong reference/prompt fields", q.id));
            }
        }
        for p in &self.pairings {
            for g in 0..self.groups_per_pairing {
                let qs: Vec<_> = self.group(&p.id, g).collect();
                let sa = qs.iter().filter(|q| q.qtype == QuestionType::SubjectAlignment).count();
                let left = qs.iter().filter(|q| q.left_is_method_a).count();
                if qs.len() != per_group || sa * 2 != per_group || left * 2 != per_group {
                    problems.push(format!(
                        "group {}/{g}: {} questions, {sa} subject alignment, {left} with method A left",
                        p.id,
                        qs.len()
                    ));
                }
            }
        }
        problems
    }
}

/// What a participant's browser receives for one question. Carries no method
/// names, paths, or side assignment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionView {
    pub id: String,
    pub qtype: QuestionType,
    pub text: String,
    pub left_image: String,
    pub right_image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answered: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupView {
    pub pairing: String,
    pub group: usize,
    pub questions: Vec<QuestionView>,
}

/// Group plan for serving. Image fields become `"{image_base}/{ref}"`. When
/// `answered` is given, each question is flagged so a client can resume.
pub fn group_view(
    plan: &StudyPlan,
    pairing: &str,
    group: usize,
    image_base: &str,
    answered: Option<&HashSet<String>>,
) -> Result<GroupView> {
    if !plan.pairings.iter().any(|p| p.id == pairing) || group >= plan.groups_per_pairing {
        return Err(Error::InvalidArgument(format!("no group {pairing}/{group}")));
    }
    let url = |r: &str| format!("{image_base}/{r}");
    let questions = plan
        .group(pairing, group)
        .map(|q| {
            Ok(QuestionView {
                id: q.id.clone(),
                qtype: q.qtype,
                text: render_question_text(q)?,
                left_image: url(&q.left_image),
                right_image: url(&q.right_image),
                reference_image: q.reference_image.as_deref().map(url),
                prompt_text: q.prompt_text.clone(),
                answered: answered.map(|set| set.contains(&q.id)),
            })
        })
        .collect::<Result<_>>()?;
    Ok(GroupView {
        pairing: pairing.to_string(),
        group,
        questions,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub question_id: String,
    pub participant_id: String,
    pub choice: Side,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// Append-only answer file that rejects a second answer to the same question
/// from the same participant.
pub struct AnswerLog {
    path: PathBuf,
    file: File,
    answers: Vec<Answer>,
    seen: HashSet<(String, String)>,
}

impl AnswerLog {
    pub fn open(path: &Path) -> Result<Self> {
        let answers: Vec<Answer> = if path.exists() {
            fsutil::read_jsonl(path)?
        } else {
            Vec::new()
        };
        let mut seen = HashSet::new();
        for a in &answers {
            if !seen.insert((a.question_id.clone(), a.participant_id.clone())) {
                return Err(Error::DuplicateAnswer {
                    question: a.question_id.clone(),
                    participant: a.participant_id.clone(),
                });
            }
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(AnswerLog {
            path: path.to_path_buf(),
            file,
            answers,
            seen,
        })
    }

    /// Validates against `plan` and appends. Unknown questions and empty
    /// participant ids are invalid; repeats are [`Error::DuplicateAnswer`].
    pub fn record(&mut self, plan: &StudyPlan, answer: Answer) -> Result<()> {
        if plan.question(&answer.question_id).is_none() {
            return Err(Error::InvalidArgument(format!("unknown question {}", answer.question_id)));
        }
        if answer.participant_id.trim().is_empty() {
            return Err(Error::InvalidArgument("empty participant id".into()));
        }
        let key = (answer.question_id.clone(), answer.participant_id.clone());
        if self.seen.contains(&key) {
            return Err(Error::DuplicateAnswer {
                question: key.0,
                participant: key.1,
            });
        }
        let mut line = serde_json::to_string(&answer).map_err(|e| Error::json("serializing answer", e))?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))?;
        self.seen.insert(key);
        self.answers.push(answer);
        Ok(())
    }

    pub fn answers(&self) -> &[Answer] {
        &self.answers
    }

    /// Question ids already answered by `participant`.
    pub fn answered_by(&self, participant: &str) -> HashSet<String> {
        self.answers
            .iter()
            .filter(|a| a.participant_id == participant)
            .map(|a| a.question_id.clone())
            .collect()
    }
}

pub fn load_answers(path: &Path) -> Result<Vec<Answer>> {
    fsutil::read_jsonl(path)
}

/// Rounds a share to one decimal place of a percent.
pub fn percent_1dp(count: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    (count as f64 * 1000.0 / total as f64).round() / 10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRow {
    pub pairing: String,
    pub method_a: String,
    pub method_b: String,
    pub qtype: QuestionType,
    pub total: usize,
    pub method_a_count: usize,
    pub method_b_count: usize,
    pub method_a_pct: f64,
    pub method_b_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncompleteQuestion {
    pub question_id: String,
    pub answers: usize,
    pub expected: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceTable {
    pub rows: Vec<PreferenceRow>,
    pub incomplete: Vec<IncompleteQuestion>,
}

/// Method A's share per pairing and question type. Each question expects
/// `participants / groups_per_pairing` answers (at least one); questions
/// with fewer are listed in `incomplete` but still counted.
pub fn aggregate_results(plan: &StudyPlan, answers: &[Answer]) -> Result<PreferenceTable> {
    let by_id: HashMap<&str, &Question> = plan.questions.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut seen = HashSet::new();
    let mut per_question: HashMap<&str, usize> = HashMap::new();
    let mut tally: BTreeMap<(String, QuestionType), (usize, usize)> = BTreeMap::new();
    for a in answers {
        let q = by_id
            .get(a.question_id.as_str())
            .ok_or_else(|| Error::InvalidArgument(format!("answer for unknown question {}", a.question_id)))?;
        if !seen.insert((a.question_id.as_str(), a.participant_id.as_str())) {
            return Err(Error::DuplicateAnswer {
                question: a.question_id.clone(),
                participant: a.participant_id.clone(),
            });
        }
        *per_question.entry(q.id.as_str()).or_default() += 1;
        let chose_a = (a.choice == Side::Left) == q.left_is_method_a;
        let t = tally.entry((q.pairing.clone(), q.qtype)).or_default();
        if chose_a {
            t.0 += 1;
        } else {
            t.1 += 1;
        }
    }
    let mut rows = Vec::new();
    for p in &plan.pairings {
        for qtype in [QuestionType::SubjectAlignment, QuestionType::TextAlignment] {
            let (a, b) = tally.get(&(p.id.clone(), qtype)).copied().unwrap_or_default();
            rows.push(PreferenceRow {
                pairing: p.id.clone(),
                method_a: p.method_a.clone(),
                method_b: p.method_b.clone(),
                qtype,
                total: a + b,
                method_a_count: a,
                method_b_count: b,
                method_a_pct: percent_1dp(a, a + b),
                method_b_pct: percent_1dp(b, a + b),
            });
        }
    }
    let expected = (plan.participants / plan.groups_per_pairing.max(1)).max(1);
    let incomplete = plan
        .questions
        .iter()
        .filter_map(|q| {
            let n = per_question.get(q.id.as_str()).copied().unwrap_or(0);
            (n < expected).then(|| IncompleteQuestion {
                question_id: q.id.clone(),
                answers: n,
                expected,
            })
        })
        .collect();
    Ok(PreferenceTable { rows, incomplete })
}

impl PreferenceTable {
    /// Question types as rows, pairings as columns, cells "A% / B%".
    pub fn to_csv(&self) -> String {
        let mut pairings: Vec<(&str, String)> = Vec::new();
        for r in &self.rows {
            if !pairings.iter().any(|(id, _)| *id == r.pairing) {
                pairings.push((&r.pairing, format!("{} vs {}", r.method_a, r.method_b)));
            }
        }
        let mut out = String::new();
        out.push_str(&std::iter::once(String::new()).chain(pairings.iter().map(|(_, l)| l.clone())).collect::<Vec<_>>().join(","));
        out.push('\n');
        for qtype in [QuestionType::SubjectAlignment, QuestionType::TextAlignment] {
            let mut cells = vec![qtype.label().to_string()];
            for (id, _) in &pairings {
                let r = self.rows.iter().find(|r| r.pairing == *id && r.qtype == qtype);
                cells.push(r.map_or("-".into(), |r| format!("{:.1}% / {:.1}%", r.method_a_pct, r.method_b_pct)));
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}
