mod common;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use regforge::backends::{
    run_jobs, job_set_hash, EmbedBackend, EmbedInput, EmbeddingVector, GenRequest, ImageBackend, Manifest, ModelTag,
    RetryPolicy, RunOptions, StubEmbedBackend, StubImageBackend,
};
use regforge::eval::{
    clip_t, clip_t_text, cosine, eval_jobs, run_eval, subject_fidelity, ClassName, CountingEmbedBackend, EvalConfig,
    EvalOptions, EvalReport, NameMode,
};
use regforge::seed::rng_from_seed;
use sha2::{Digest, Sha256};

fn unit(tag: ModelTag, raw: &[f64]) -> EmbeddingVector {
    EmbeddingVector::normalized(tag, raw.to_vec()).unwrap()
}

fn random_vectors(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

#[test]
fn fidelity_matches_brute_force_on_small_example() {
    let mut rng = rng_from_seed(1);
    let gen = random_vectors(&mut rng, 3, 16);
    let real = random_vectors(&mut rng, 2, 16);
    let g: Vec<_> = gen.iter().map(|v| unit(ModelTag::Dino, v)).collect();
    let r: Vec<_> = real.iter().map(|v| unit(ModelTag::Dino, v)).collect();
    let got = subject_fidelity(&g, &r).unwrap();
    assert!((got - common::oracle_fidelity(&gen, &real)).abs() < 1e-9);
}

#[test]
fn metric_inputs_are_checked() {
    let a = unit(ModelTag::Dino, &[1.0, 0.0]);
    let b = unit(ModelTag::ClipImage, &[1.0, 0.0]);
    let c = unit(ModelTag::Dino, &[1.0, 0.0, 0.0]);
    assert!(cosine(&a, &b).is_err());
    assert!(cosine(&a, &c).is_err());
    assert!(cosine(&unit(ModelTag::ClipImage, &[0.0, 1.0]), &unit(ModelTag::ClipText, &[0.0, 1.0])).is_ok());
    assert!(subject_fidelity(&[], std::slice::from_ref(&a)).is_err());
    assert!(subject_fidelity(std::slice::from_ref(&a), &[a.clone(), c]).is_err());
}

fn write_stub(dir: &Path, name: &str, prompt: &str, seed: u64) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, StubImageBackend.generate(&GenRequest::new(prompt, seed)).unwrap()).unwrap();
    path
}

#[test]
fn stub_clip_t_is_one_for_own_prompt_and_zero_for_disjoint_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let subject = common::synthetic_subject("backpack", "backpack", &[]);
    let image = write_stub(dir.path(), "x.png", "a backpack on a rock", 3);
    let retry = RetryPolicy::default();
    let own = clip_t("a backpack on a rock", &image, &StubEmbedBackend, ClassName::Specific, &subject, 0.3, &retry)
        .unwrap();
    assert!((own.score - 1.0).abs() < 1e-12);
    assert!(own.is_match);
    let with_id = clip_t("a olis backpack on a rock", &image, &StubEmbedBackend, ClassName::Specific, &subject, 0.3, &retry)
        .unwrap();
    assert_eq!(with_id.text, "a backpack on a rock");
    assert!((with_id.score - 1.0).abs() < 1e-12);

    let image2 = write_stub(dir.path(), "y.png", "teapot", 4);
    let disjoint = clip_t("a backpack on a rock", &image2, &StubEmbedBackend, ClassName::Specific, &subject, 0.3, &retry)
        .unwrap();
    // only valid if no token of one side hashes to a bucket of the other
    let buckets = |s: &str| -> HashSet<usize> {
        StubEmbedBackend::tokens(s).map(|t| StubEmbedBackend::bucket(ModelTag::ClipText, &t)).collect()
    };
    assert!(buckets("a backpack on a rock").is_disjoint(&buckets("teapot")));
    assert_eq!(disjoint.score, 0.0);
    assert!(!disjoint.is_match);
}

#[test]
fn clip_t_text_strips_identifier_and_swaps_noun() {
    let mut subject = common::subject("duck_toy");
    subject.training_images.clear();
    assert_eq!(clip_t_text("a olis duck toy on the beach", &subject, ClassName::Vague).unwrap(), "a toy on the beach");
    assert_eq!(
        clip_t_text("a olis duck toy on the beach", &subject, ClassName::Specific).unwrap(),
        "a duck toy on the beach"
    );
    assert_eq!(clip_t_text("a red {}", &subject, ClassName::Vague).unwrap(), "a red toy");
    assert!(clip_t_text("a teapot", &subject, ClassName::Vague).is_err());
}

/// Distinct words whose clip buckets are all different, so bag-of-words
/// cosines under the stub have no hash collisions.
fn collision_free_vocab(n: usize) -> Vec<String> {
    let mut used = HashSet::new();
    let mut out = Vec::new();
    let mut i = 0;
    while out.len() < n {
        let word = format!("w{i}x");
        i += 1;
        if used.insert(StubEmbedBackend::bucket(ModelTag::ClipText, &word)) {
            out.push(word);
        }
    }
    out
}

struct Setup {
    _dir: tempfile::TempDir,
    subjects: Vec<regforge::SubjectSpec>,
    manifest: Manifest,
}

fn setup(subjects: usize, prompts: usize, images: usize) -> Setup {
    let dir = tempfile::tempdir().unwrap();
    let real_dir = dir.path().join("real");
    std::fs::create_dir_all(&real_dir).unwrap();
    let specs: Vec<_> = (0..subjects)
        .map(|s| {
            let noun = format!("thing{s}");
            let real: Vec<PathBuf> = (0..3)
                .map(|k| write_stub(&real_dir, &format!("{s}_{k}.png"), &format!("a {noun} photo {k}"), k))
                .collect();
            common::synthetic_subject(&format!("subject{s}"), &noun, &real)
        })
        .collect();
    let templates: Vec<String> = (0..prompts).map(|p| format!("a {{}} in scene {p}")).collect();
    let jobs = eval_jobs(&specs, &templates, images, 17).unwrap();
    let opts = RunOptions {
        width: 32,
        height: 32,
        ..RunOptions::new(dir.path().join("gen"))
    };
    let manifest = run_jobs(&jobs, &job_set_hash(&jobs), &StubImageBackend, &dir.path().join("m.jsonl"), &opts)
        .unwrap()
        .manifest;
    Setup {
        _dir: dir,
        subjects: specs,
        manifest,
    }
}

fn sha(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

#[test]
fn run_eval_matches_independent_computation() {
    let s = setup(2, 3, 2);
    let mut config = EvalConfig::new(s.subjects.clone());
    config.prompts_per_subject = 3;
    config.images_per_prompt = 2;
    let counting = CountingEmbedBackend::new(StubEmbedBackend);
    let report = run_eval(&config, &s.manifest, &counting, &EvalOptions::default()).unwrap();
    assert_eq!(report.images_evaluated, 12);
    assert!(report.excluded.is_empty());

    let mut unique = HashSet::new();
    for subject in &s.subjects {
        let gen: Vec<_> = s
            .manifest
            .entries
            .values()
            .filter(|e| e.subject.as_deref() == Some(&subject.dataset_name))
            .collect();
        let real: Vec<PathBuf> = subject.training_images.iter().map(|t| t.image_path.clone()).collect();
        let raw = |p: &Path, tag| StubEmbedBackend.embed(EmbedInput::Image(p), tag).unwrap().values;
        let dino = common::oracle_fidelity(
            &gen.iter().map(|e| raw(&e.image_path, ModelTag::Dino)).collect::<Vec<_>>(),
            &real.iter().map(|p| raw(p, ModelTag::Dino)).collect::<Vec<_>>(),
        );
        let mut clip_t_sum = 0.0;
        for e in &gen {
            let text = e.prompt.replace("olis ", "");
            let t = StubEmbedBackend.embed(EmbedInput::Text(&text), ModelTag::ClipText).unwrap().values;
            clip_t_sum += common::oracle_cosine(&t, &raw(&e.image_path, ModelTag::ClipImage));
            unique.insert(format!("text:{text}"));
        }
        for p in gen.iter().map(|e| e.image_path.as_path()).chain(real.iter().map(PathBuf::as_path)) {
            unique.insert(format!("dino:{}", sha(p)));
            unique.insert(format!("clip:{}", sha(p)));
        }
        let scores = report.subjects.iter().find(|r| r.subject == subject.dataset_name).unwrap();
        assert!((scores.dino - dino).abs() < 1e-9);
        assert!((scores.clip_t_specific.unwrap() - clip_t_sum / gen.len() as f64).abs() < 1e-9);
        // vague and specific nouns coincide for synthetic subjects
        assert_eq!(scores.clip_t_vague, scores.clip_t_specific);
        assert_eq!(scores.match_rate_specific, Some(1.0));
    }
    assert_eq!(counting.calls(), unique.len());

    let agg = report.aggregate.as_ref().unwrap();
    let mean_dino = report.subjects.iter().map(|r| r.dino).sum::<f64>() / 2.0;
    assert!((agg.dino - mean_dino).abs() < 1e-12);
}

#[test]
fn incomplete_subjects_are_excluded() {
    let s = setup(3, 2, 2);
    let mut manifest = s.manifest.clone();
    let victim = manifest
        .entries
        .values()
        .find(|e| e.subject.as_deref() == Some("subject1"))
        .unwrap()
        .image_path
        .clone();
    std::fs::remove_file(&victim).unwrap();
    let drop_index = *manifest
        .entries
        .iter()
        .find(|(_, e)| e.subject.as_deref() == Some("subject2"))
        .unwrap()
        .0;
    manifest.entries.remove(&drop_index);

    let mut config = EvalConfig::new(s.subjects.clone());
    config.prompts_per_subject = 2;
    config.images_per_prompt = 2;
    config.name_mode = NameMode::Vague;
    let report = run_eval(&config, &manifest, &StubEmbedBackend, &EvalOptions::default()).unwrap();
    let excluded: Vec<&str> = report.excluded.iter().map(|d| d.subject.as_str()).collect();
    assert_eq!(excluded, vec!["subject1", "subject2"]);
    assert_eq!(report.subjects.len(), 1);
    assert_eq!(report.images_evaluated, 4);
    assert!(report.subjects[0].clip_t_specific.is_none());

    let csv = report.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("subject,images,DINO,CLIP-I,CLIP-T (vague class),CLIP-T (subject)"));
    assert!(lines.next().unwrap().starts_with("subject0,4,"));
    assert!(lines.next().unwrap().ends_with(",-"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    report.save_json(&path).unwrap();
    assert_eq!(EvalReport::load_json(&path).unwrap(), report);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fidelity_matches_oracle_and_ignores_order(seed in any::<u64>(), n in 1usize..=50, m in 1usize..=50, dim in 1usize..=50) {
        let mut rng = rng_from_seed(seed);
        let mut gen = random_vectors(&mut rng, n, dim);
        let mut real = random_vectors(&mut rng, m, dim);
        // skip degenerate zero vectors (probability ~0)
        prop_assume!(gen.iter().chain(&real).all(|v| v.iter().any(|x| *x != 0.0)));
        let to_units = |vs: &[Vec<f64>]| vs.iter().map(|v| unit(ModelTag::Dino, v)).collect::<Vec<_>>();
        let got = subject_fidelity(&to_units(&gen), &to_units(&real)).unwrap();
        prop_assert!((got - common::oracle_fidelity(&gen, &real)).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&got));
        gen.shuffle(&mut rng);
        real.shuffle(&mut rng);
        let shuffled = subject_fidelity(&to_units(&gen), &to_units(&real)).unwrap();
        prop_assert!((got - shuffled).abs() < 1e-12);
        let c = cosine(&unit(ModelTag::Dino, &gen[0]), &unit(ModelTag::Dino, &real[0])).unwrap();
        prop_assert!((c - common::oracle_cosine(&gen[0], &real[0])).abs() < 1e-9);
    }

    #[test]
    fn stub_clip_t_never_drops_when_a_shared_token_is_added(
        picks in prop::collection::vec(0usize..40, 1..12),
        text_picks in prop::collection::vec(0usize..40, 0..12),
        extra in 0usize..40,
    ) {
        let vocab = collision_free_vocab(41);
        let noun = &vocab[40];
        let image_words: Vec<&String> = picks.iter().map(|i| &vocab[*i]).collect::<HashSet<_>>().into_iter().collect();
        let added = image_words[extra % image_words.len()];
        let text_words: Vec<&String> = text_picks
            .iter()
            .map(|i| &vocab[*i])
            .filter(|w| *w != added)
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        let join = |ws: &[&String]| ws.iter().map(|w| w.as_str()).collect::<Vec<_>>().join(" ");
        let dir = tempfile::tempdir().unwrap();
        let image = write_stub(dir.path(), "i.png", &format!("{} {noun}", join(&image_words)), 1);
        let subject = common::synthetic_subject("s", noun, &[]);
        let retry = RetryPolicy::default();
        let score = |words: &[&String]| {
            clip_t(&format!("{} {noun}", join(words)), &image, &StubEmbedBackend, ClassName::Specific, &subject, 0.3, &retry)
                .unwrap()
                .score
        };
        let before = score(&text_words);
        let mut more = text_words.clone();
        more.push(added);
        prop_assert!(score(&more) >= before - 1e-12, "{} -> {}", before, score(&more));
    }
}
