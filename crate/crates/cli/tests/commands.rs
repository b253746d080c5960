use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn regforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regforge"))
        .args(args)
        .env_remove("REGFORGE_CONFIG")
        .env_remove("REGFORGE_SEED")
        .env_remove("REGFORGE_SUBJECT")
        .env_remove("REGFORGE_POOL_DIR")
        .output()
        .unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    let out = regforge(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pools_gen_from_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let llm = fixtures().join("llm");
    let out = ok_json(&[
        "pools", "gen", "--kind", "living", "--backend", "fixture", "--fixture-dir", s(&llm), "--out", s(dir.path()),
    ]);
    let sizes: Vec<u64> = out.as_array().unwrap().iter().map(|r| r["entries"].as_u64().unwrap()).collect();
    assert_eq!(sizes, vec![89, 86, 75, 744, 99]);
    ok_json(&["pools", "validate", "--kind", "living", "--pool-dir", s(dir.path())]);
    let failed = regforge(&["pools", "validate", "--kind", "inanimate", "--pool-dir", s(dir.path())]);
    assert_eq!(failed.status.code(), Some(1));
}

#[test]
fn plan_build_default_total_splits_by_bucket() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    let subject = fixtures().join("subjects/backpack.json");
    let pools = fixtures().join("pools/inanimate");
    let out = ok_json(&[
        "--seed", "3", "plan", "build", "--subject", s(&subject), "--pool-dir", s(&pools), "--out", s(&plan),
    ]);
    assert_eq!(out["counts"]["photo_same_background"], 400);
    assert_eq!(out["counts"]["photo_new_background"], 1200);
    assert_eq!(out["counts"]["styled_new_background"], 400);
    let check = ok_json(&["plan", "validate", "--plan", s(&plan), "--pool-dir", s(&pools)]);
    assert_eq!(check["diagnostics"].as_array().unwrap().len(), 0);

    let again = ok_json(&[
        "--seed", "3", "--dry-run", "plan", "build", "--subject", s(&subject), "--pool-dir", s(&pools),
    ]);
    assert_eq!(again["hash"], out["hash"]);
    assert!(again["out"].is_null());
}

#[test]
fn errors_are_machine_readable() {
    let usage = regforge(&["--json-errors", "plan", "build", "--bogus"]);
    assert_eq!(usage.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&usage.stderr).unwrap();
    assert_eq!(err["error"], "usage");

    let missing = regforge(&["--json-errors", "plan", "validate", "--plan", "/nonexistent/plan.json", "--pool-dir", "/x"]);
    assert_eq!(missing.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert_eq!(err["error"], "io");
    assert!(err["message"].as_str().unwrap().contains("/nonexistent/plan.json"));

    let plain = regforge(&["plan", "validate", "--plan", "/nonexistent/plan.json", "--pool-dir", "/x"]);
    assert!(String::from_utf8_lossy(&plain.stderr).starts_with("error: "));

    let bad_ratio = regforge(&[
        "--json-errors", "--dry-run", "plan", "build", "--ratios", "0.5", "0.5", "0.5", "--subject",
        s(&fixtures().join("subjects/backpack.json")), "--pool-dir", s(&fixtures().join("pools/inanimate")),
    ]);
    let err: Value = serde_json::from_slice(&bad_ratio.stderr).unwrap();
    assert_eq!(err["error"], "invalid_argument");
}

#[test]
fn config_file_and_environment_feed_commands() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("regforge.toml");
    std::fs::write(
        &config,
        format!(
            "seed = 11\nsubject = {:?}\n[plan]\ntotal = 25\n",
            s(&fixtures().join("subjects/backpack.json"))
        ),
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_regforge"))
        .args(["--config", s(&config), "--dry-run", "plan", "build"])
        .env("REGFORGE_POOL_DIR", fixtures().join("pools/inanimate"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["total"], 25);

    std::fs::write(&config, "unknown_key = 1\n").unwrap();
    let bad = regforge(&["--config", s(&config), "train", "iters", "--name", "dog"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn train_iters_lookup() {
    let v = ok_json(&["train", "iters", "--name", "dog", "--backbone", "sdxl"]);
    assert_eq!((v["low"].as_u64(), v["high"].as_u64()), (Some(1000), Some(3000)));
    let subject = fixtures().join("subjects/backpack.json");
    let v = ok_json(&["train", "iters", "--subject", s(&subject)]);
    assert_eq!((v["low"].as_u64(), v["high"].as_u64()), (Some(6000), Some(8000)));
}

#[test]
fn end_to_end_with_stub_backends() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    let backpack = fixtures().join("subjects/backpack.json");
    let duck = fixtures().join("subjects/duck_toy.json");
    let pools = fixtures().join("pools/inanimate");
    let templates = fixtures().join("eval_templates.txt");

    ok_json(&["plan", "build", "--subject", s(&backpack), "--pool-dir", s(&pools), "--total", "20", "--out", s(&d("plan.json"))]);
    let gen = ok_json(&[
        "dataset", "generate", "--plan", s(&d("plan.json")), "--out-dir", s(&d("reg")), "--backend", "stub",
        "--width", "64", "--height", "64",
    ]);
    assert_eq!(gen["generated"], 20);
    let gen = ok_json(&["dataset", "generate", "--plan", s(&d("plan.json")), "--out-dir", s(&d("reg")), "--backend", "stub"]);
    assert_eq!((gen["generated"].as_u64(), gen["skipped"].as_u64()), (Some(0), Some(20)));

    let prep = ok_json(&[
        "train", "prep", "--subject", s(&backpack), "--manifest", s(&d("reg/manifest.jsonl")), "--vocab",
        s(&fixtures().join("vocab.tsv")), "--out", s(&d("train.jsonl")),
    ]);
    assert_eq!(prep["identifier"], "olis");
    assert_eq!(std::fs::read_to_string(d("train.jsonl")).unwrap().lines().count(), 24);

    let batch = regforge(&[
        "train", "batch", "--subject", s(&backpack), "--manifest", s(&d("reg/manifest.jsonl")), "--dropout",
        "--pool-dir", s(&pools), "--count", "3",
    ]);
    assert!(batch.status.success(), "{}", String::from_utf8_lossy(&batch.stderr));
    assert_eq!(String::from_utf8_lossy(&batch.stdout).lines().count(), 3);

    for (method, seed) in [("a", "1"), ("b", "2")] {
        let report = ok_json(&[
            "--seed", seed, "eval", "run", "--subject", s(&backpack), "--subject", s(&duck), "--manifest",
            s(&d(&format!("ev_{method}/manifest.jsonl"))), "--generate", "--templates", s(&templates), "--image-dir",
            s(&d(&format!("ev_{method}"))), "--backend", "stub", "--width", "32", "--height", "32",
            "--embed-backend", "stub", "--name-mode", "both", "--out", s(&d(&format!("eval_{method}.json"))),
        ]);
        assert_eq!(report["images_evaluated"], 200);
        assert!(report["aggregate"]["clip_t_vague"].is_number());
        assert!(report["aggregate"]["clip_t_specific"].is_number());
    }

    let pairing = format!("p1,ours,{},base,{}", s(&d("ev_a/manifest.jsonl")), s(&d("ev_b/manifest.jsonl")));
    let plan = ok_json(&[
        "study", "plan", "--pairing", &pairing, "--subject", s(&backpack), "--subject", s(&duck), "--out",
        s(&d("study.json")),
    ]);
    assert_eq!(plan["questions"], 300);
    assert_eq!(plan["problems"].as_array().unwrap().len(), 0);

    let study: Value = serde_json::from_str(&std::fs::read_to_string(d("study.json")).unwrap()).unwrap();
    let mut answers = String::new();
    for q in study["questions"].as_array().unwrap() {
        let choice = if q["left_is_method_a"].as_bool().unwrap() { "left" } else { "right" };
        answers.push_str(&format!(
            "{{\"question_id\":{},\"participant_id\":\"u\",\"choice\":\"{choice}\",\"timestamp\":0}}\n",
            q["id"]
        ));
    }
    std::fs::write(d("answers.jsonl"), answers).unwrap();
    let table = ok_json(&[
        "study", "aggregate", "--plan", s(&d("study.json")), "--answers", s(&d("answers.jsonl")), "--out",
        s(&d("agg.json")),
    ]);
    assert!(table["rows"].as_array().unwrap().iter().all(|r| r["method_a_pct"] == 100.0));

    let report = regforge(&["report", "--eval", s(&d("eval_a.json")), "--study", s(&d("agg.json")), "--out-dir", s(&d("out"))]);
    assert!(report.status.success(), "{}", String::from_utf8_lossy(&report.stderr));
    let scores = std::fs::read_to_string(d("out/scores.csv")).unwrap();
    assert!(scores.starts_with("subject,images,DINO,CLIP-I,CLIP-T (vague class),CLIP-T (subject)\n"));
    assert!(scores.contains("\naggregate,200,"));
    let prefs = std::fs::read_to_string(d("out/preferences.csv")).unwrap();
    assert_eq!(prefs, ",ours vs base\nSubject Alignment,100.0% / 0.0%\nTextual Alignment,100.0% / 0.0%\n");
}
