use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use regforge::backends::{
    complete_text, job_set_hash, run_generation, run_jobs, EmbedBackend, FixtureTextBackend, HttpEmbedBackend,
    HttpImageBackend, HttpTextBackend, ImageBackend, Manifest, RetryPolicy, RunOptions, StubEmbedBackend,
    StubImageBackend, TextBackend,
};
use regforge::eval::{eval_jobs, load_templates, run_eval, EvalConfig, EvalOptions, EvalReport};
use regforge::planner::{build_plan, validate_plan, DatasetPlan, Ratios};
use regforge::pools::{ingest_pool, parse_llm_response, pool_generation_prompt, validate_pools, PoolCategory, PoolSet};
use regforge::promptgen::{training_captions, PromptParser};
use regforge::seed::rng_from_seed;
use regforge::study::{
    aggregate_results, build_study_plan, items_from_manifests, load_answers, PairingSpec, PreferenceTable,
    StudyOptions, StudyPlan,
};
use regforge::trainprep::{
    compose_batch, export_training_set, image_dimensions, load_vocab_tsv, recommend_iterations,
    select_identifier_token, default_identifier_filter, BatchOptions, CropMode, RegCaption, TrainingSample,
};
use regforge::SubjectSpec;
use serde::Serialize;
use serde_json::json;

use crate::cli::*;
use crate::config::Config;
use crate::server;

pub struct Ctx {
    pub config: Config,
    pub dry_run: bool,
}

fn emit(value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    out(&text)
}

/// Writes to stdout. A closed pipe (e.g. `| head`) is not an error.
fn out(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_jsonl<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Loads a subject spec and resolves relative training image paths against
/// the spec file's directory.
pub fn load_subject(path: &Path) -> Result<SubjectSpec> {
    let mut spec = SubjectSpec::load(path).with_context(|| format!("loading subject {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for img in &mut spec.training_images {
        if img.image_path.is_relative() {
            img.image_path = base.join(&img.image_path);
        }
    }
    Ok(spec)
}

fn subject_from(ctx: &Ctx, flag: &Option<PathBuf>) -> Result<SubjectSpec> {
    match flag {
        Some(p) => load_subject(p),
        None => load_subject(ctx.config.subject_path()?),
    }
}

fn pool_dir<'a>(ctx: &'a Ctx, flag: &'a Option<PathBuf>) -> Result<&'a Path> {
    match flag {
        Some(p) => Ok(p),
        None => ctx.config.pool_dir(),
    }
}

fn retry(ctx: &Ctx) -> RetryPolicy {
    RetryPolicy {
        attempts: ctx.config.dataset.retries.max(1),
        ..RetryPolicy::default()
    }
}

fn image_backend(ctx: &Ctx, kind: ModelBackendKind) -> Result<Box<dyn ImageBackend>> {
    Ok(match kind {
        ModelBackendKind::Stub => Box::new(StubImageBackend),
        ModelBackendKind::Http => Box::new(HttpImageBackend::new(&ctx.config.backends)?),
    })
}

fn embed_backend(ctx: &Ctx, kind: ModelBackendKind) -> Result<Box<dyn EmbedBackend>> {
    Ok(match kind {
        ModelBackendKind::Stub => Box::new(StubEmbedBackend),
        ModelBackendKind::Http => Box::new(HttpEmbedBackend::new(&ctx.config.backends)?),
    })
}

fn run_options(ctx: &Ctx, out_dir: &Path, gen: &GenerationArgs) -> RunOptions {
    let d = &ctx.config.dataset;
    RunOptions {
        out_dir: out_dir.to_path_buf(),
        parallelism: gen.parallelism.unwrap_or(d.parallelism).max(1),
        width: gen.width.unwrap_or(d.width),
        height: gen.height.unwrap_or(d.height),
        steps: gen.steps.unwrap_or(d.steps),
        retry: retry(ctx),
    }
}

pub fn dispatch(ctx: &Ctx, command: &Command) -> Result<()> {
    match command {
        Command::Pools { cmd } => match cmd {
            PoolsCmd::Gen(a) => pools_gen(ctx, a),
            PoolsCmd::Ingest(a) => pools_ingest(ctx, a),
            PoolsCmd::Validate(a) => pools_validate(ctx, a),
        },
        Command::Plan { cmd } => match cmd {
            PlanCmd::Build(a) => plan_build(ctx, a),
            PlanCmd::Validate(a) => plan_validate(ctx, a),
        },
        Command::Dataset { cmd } => match cmd {
            DatasetCmd::Generate(a) => dataset_generate(ctx, a),
        },
        Command::Train { cmd } => match cmd {
            TrainCmd::Prep(a) => train_prep(ctx, a),
            TrainCmd::Batch(a) => train_batch(ctx, a),
            TrainCmd::Iters(a) => train_iters(ctx, a),
        },
        Command::Eval { cmd } => match cmd {
            EvalCmd::Run(a) => eval_run(ctx, a),
        },
        Command::Study { cmd } => match cmd {
            StudyCmd::Plan(a) => study_plan(ctx, a),
            StudyCmd::Serve(a) => study_serve(ctx, a),
            StudyCmd::Aggregate(a) => study_aggregate(ctx, a),
        },
        Command::Report(a) => report(ctx, a),
    }
}

fn pools_gen(ctx: &Ctx, a: &PoolsGenArgs) -> Result<()> {
    let categories: Vec<PoolCategory> = if a.categories.is_empty() {
        PoolCategory::required_for(a.kind).to_vec()
    } else {
        a.categories.clone()
    };
    let instructions = categories
        .iter()
        .map(|c| Ok((*c, pool_generation_prompt(*c, a.kind)?)))
        .collect::<Result<Vec<_>>>()?;
    if ctx.dry_run {
        let rows: Vec<_> = instructions
            .iter()
            .map(|(c, i)| json!({ "category": c, "instruction": i }))
            .collect();
        return emit(&rows);
    }
    let backend: Box<dyn TextBackend> = match a.backend {
        TextBackendKind::Fixture => {
            let dir = a.fixture_dir.as_ref().context("--backend fixture needs --fixture-dir")?;
            Box::new(FixtureTextBackend::new(dir))
        }
        TextBackendKind::Http => Box::new(HttpTextBackend::new(&ctx.config.backends)?),
    };
    let source = match a.backend {
        TextBackendKind::Fixture => "fixture",
        TextBackendKind::Http => "llm",
    };
    let mut summary = Vec::new();
    for (category, instruction) in instructions {
        let text = complete_text(backend.as_ref(), &instruction, &retry(ctx))
            .with_context(|| format!("generating {category} pool"))?;
        let raw = parse_llm_response(&text);
        let provenance = format!("{source}:{}", FixtureTextBackend::key(&instruction));
        let outcome = ingest_pool(category, &raw, provenance)?;
        outcome.pool.save(&a.out.join(category.file_name()))?;
        summary.push(json!({
            "category": category,
            "raw": raw.len(),
            "entries": outcome.pool.len(),
            "duplicates": outcome.duplicates,
            "dropped": outcome.dropped,
        }));
    }
    emit(&summary)
}

fn pools_ingest(ctx: &Ctx, a: &PoolsIngestArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let raw = parse_llm_response(&text);
    let provenance = a.provenance.clone().unwrap_or_else(|| format!("file:{}", a.input.display()));
    let outcome = ingest_pool(a.category, &raw, provenance)?;
    let path = if a.out.extension().is_some_and(|e| e == "json") {
        a.out.clone()
    } else {
        a.out.join(a.category.file_name())
    };
    if !ctx.dry_run {
        outcome.pool.save(&path)?;
    }
    emit(&json!({
        "category": a.category,
        "path": path,
        "entries": outcome.pool.len(),
        "duplicates": outcome.duplicates,
        "dropped": outcome.dropped,
    }))
}

fn pools_validate(ctx: &Ctx, a: &PoolsValidateArgs) -> Result<()> {
    let dir = pool_dir(ctx, &a.pool_dir)?;
    let set = PoolSet::load_dir(dir)?;
    let report = validate_pools(&set, a.kind);
    emit(&report)?;
    if !report.is_ok() {
        bail!("{} pool diagnostics in {}", report.diagnostics.len(), dir.display());
    }
    Ok(())
}

fn load_pools_for(dir: &Path, subject: &SubjectSpec) -> Result<PoolSet> {
    let set = PoolSet::load_dir(dir)?;
    let report = validate_pools(&set, subject.kind);
    if !report.is_ok() {
        let details: Vec<String> = report.diagnostics.iter().map(|d| d.to_string()).collect();
        bail!("pools in {} are not usable: {}", dir.display(), details.join("; "));
    }
    Ok(set)
}

fn plan_build(ctx: &Ctx, a: &PlanBuildArgs) -> Result<()> {
    let subject = subject_from(ctx, &a.subject)?;
    let pools = load_pools_for(pool_dir(ctx, &a.pool_dir)?, &subject)?;
    let ratios = match &a.ratios {
        Some(r) => Ratios::new(r[0], r[1], r[2])?,
        None => ctx.config.plan.ratios,
    };
    let total = a.total.unwrap_or(ctx.config.plan.total);
    let plan = build_plan(&subject, &pools, total, ratios, ctx.config.seed)?;
    let out = match (&a.out, ctx.dry_run) {
        (Some(out), false) => {
            plan.save(out)?;
            Some(out)
        }
        (None, false) => bail!("plan build needs --out (or --dry-run)"),
        _ => None,
    };
    let counts = plan.bucket_counts();
    emit(&json!({
        "out": out,
        "hash": plan.hash(),
        "total": total,
        "counts": {
            "photo_same_background": counts[0],
            "photo_new_background": counts[1],
            "styled_new_background": counts[2],
        },
    }))
}

fn plan_validate(ctx: &Ctx, a: &PlanValidateArgs) -> Result<()> {
    let plan = DatasetPlan::load(&a.plan)?;
    let pools = PoolSet::load_dir(pool_dir(ctx, &a.pool_dir)?)?;
    let diagnostics = validate_plan(&plan, &pools);
    emit(&json!({ "items": plan.items.len(), "diagnostics": diagnostics }))?;
    if !diagnostics.is_empty() {
        bail!("{} plan diagnostics", diagnostics.len());
    }
    Ok(())
}

fn dataset_generate(ctx: &Ctx, a: &DatasetGenerateArgs) -> Result<()> {
    let plan = DatasetPlan::load(&a.plan)?;
    let manifest_path = a.manifest.clone().unwrap_or_else(|| a.out_dir.join("manifest.jsonl"));
    if ctx.dry_run {
        let manifest = Manifest::load(&manifest_path)?;
        let done = plan
            .items
            .iter()
            .filter(|i| manifest.entries.get(&i.index).is_some_and(|e| e.is_verified()))
            .count();
        return emit(&json!({ "items": plan.items.len(), "done": done, "to_generate": plan.items.len() - done }));
    }
    let backend = image_backend(ctx, a.gen.backend)?;
    let summary = run_generation(&plan, backend.as_ref(), &manifest_path, &run_options(ctx, &a.out_dir, &a.gen))?;
    emit(&json!({
        "manifest": manifest_path,
        "generated": summary.generated,
        "skipped": summary.skipped,
        "failed": summary.failed,
    }))?;
    if summary.failed > 0 {
        bail!("{} images failed; re-run to retry them", summary.failed);
    }
    Ok(())
}

fn parse_size(s: &str) -> Result<(u32, u32)> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| anyhow!("size {s:?} is not WIDTHxHEIGHT"))?;
    Ok((w.trim().parse()?, h.trim().parse()?))
}

fn batch_options(ctx: &Ctx, crop: &CropArgs) -> Result<BatchOptions> {
    let t = &ctx.config.train;
    let mode: CropMode = crop.crop_mode.as_deref().unwrap_or(&t.crop_mode).parse()?;
    Ok(BatchOptions {
        crop_mode: mode,
        ratio_min: crop.ratio_min.unwrap_or(t.ratio_min),
        ratio_max: crop.ratio_max.unwrap_or(t.ratio_max),
        reg_width: ctx.config.dataset.width,
        reg_height: ctx.config.dataset.height,
    })
}

fn training_samples(subject: &SubjectSpec, fallback: Option<&str>) -> Result<Vec<TrainingSample>> {
    let fallback = fallback.map(parse_size).transpose()?;
    training_captions(subject)?
        .into_iter()
        .map(|c| {
            let (width, height) = match image_dimensions(&c.image_path) {
                Ok(dims) => dims,
                Err(e) => fallback.ok_or_else(|| {
                    anyhow!("cannot read size of {} ({e}); pass --train-size", c.image_path.display())
                })?,
            };
            Ok(TrainingSample {
                image_path: c.image_path,
                caption: c.caption,
                width,
                height,
            })
        })
        .collect()
}

fn train_prep(ctx: &Ctx, a: &TrainPrepArgs) -> Result<()> {
    let subject = subject_from(ctx, &a.subject)?;
    let identifier = match &a.vocab {
        Some(path) => Some(select_identifier_token(&load_vocab_tsv(path)?, default_identifier_filter)?),
        None => None,
    };
    let samples = training_samples(&subject, a.crop.train_size.as_deref())?;
    let manifest = a.manifest.as_deref().map(Manifest::load).transpose()?;
    let mut rng = rng_from_seed(ctx.config.seed);
    let rows = export_training_set(&mut rng, &samples, manifest.as_ref(), &batch_options(ctx, &a.crop)?)?;
    let out = match (&a.out, ctx.dry_run) {
        (Some(out), false) => {
            write_file(out, &to_jsonl(&rows)?)?;
            Some(out)
        }
        _ => None,
    };
    emit(&json!({ "records": rows.len(), "out": out, "identifier": identifier }))
}

fn train_batch(ctx: &Ctx, a: &TrainBatchArgs) -> Result<()> {
    let subject = subject_from(ctx, &a.subject)?;
    let samples = training_samples(&subject, a.crop.train_size.as_deref())?;
    let manifest = Manifest::load(&a.manifest)?;
    let parser = if a.dropout {
        let pools = PoolSet::load_dir(pool_dir(ctx, &a.pool_dir)?)?;
        Some(PromptParser::new(&pools, &subject))
    } else {
        None
    };
    let caption = match &parser {
        Some(parser) => RegCaption::Dropout {
            parser,
            p_keep: a.p_keep.unwrap_or(ctx.config.train.p_keep),
        },
        None => RegCaption::Verbatim,
    };
    let options = batch_options(ctx, &a.crop)?;
    let mut rng = rng_from_seed(ctx.config.seed);
    let batches = (0..a.count)
        .map(|_| compose_batch(&mut rng, &samples, &manifest, &options, &caption))
        .collect::<regforge::Result<Vec<_>>>()?;
    let text = to_jsonl(&batches)?;
    match (&a.out, ctx.dry_run) {
        (Some(out), false) => {
            write_file(out, &text)?;
            emit(&json!({ "batches": batches.len(), "out": out }))
        }
        (Some(_), true) => emit(&json!({ "batches": batches.len() })),
        (None, _) => {
            out(&text)?;
            Ok(())
        }
    }
}

fn train_iters(ctx: &Ctx, a: &TrainItersArgs) -> Result<()> {
    let name = match &a.name {
        Some(n) => n.clone(),
        None => subject_from(ctx, &a.subject)?.dataset_name,
    };
    let (low, high) = recommend_iterations(&name, a.backbone);
    emit(&json!({ "subject": name, "backbone": a.backbone, "low": low, "high": high }))
}

fn eval_run(ctx: &Ctx, a: &EvalRunArgs) -> Result<()> {
    let subjects = a.subjects.iter().map(|p| load_subject(p)).collect::<Result<Vec<_>>>()?;
    let e = &ctx.config.eval;
    let mut config = EvalConfig::new(subjects);
    config.prompts_per_subject = a.prompts_per_subject.unwrap_or(e.prompts_per_subject);
    config.images_per_prompt = a.images_per_prompt.unwrap_or(e.images_per_prompt);
    config.clip_t_threshold = e.clip_t_threshold;
    config.name_mode = a.name_mode.as_deref().unwrap_or(&e.name_mode).parse()?;
    config.validate()?;

    if a.generate {
        let templates_path = a.templates.as_ref().context("--generate needs --templates")?;
        let image_dir = a.image_dir.as_ref().context("--generate needs --image-dir")?;
        let templates = load_templates(templates_path)?;
        if templates.len() < config.prompts_per_subject {
            bail!(
                "{} has {} templates, need {}",
                templates_path.display(),
                templates.len(),
                config.prompts_per_subject
            );
        }
        let templates = &templates[..config.prompts_per_subject];
        let jobs = eval_jobs(&config.subjects, templates, config.images_per_prompt, ctx.config.seed)?;
        if ctx.dry_run {
            return emit(&json!({ "jobs": jobs.len() }));
        }
        let backend = image_backend(ctx, a.gen.backend)?;
        let summary = run_jobs(&jobs, &job_set_hash(&jobs), backend.as_ref(), &a.manifest, &run_options(ctx, image_dir, &a.gen))?;
        log::info!("evaluation images: {} generated, {} skipped", summary.generated, summary.skipped);
    }
    let manifest = Manifest::load(&a.manifest)?;
    let embedder = embed_backend(ctx, a.embed_backend)?;
    let options = EvalOptions {
        parallelism: a.gen.parallelism.unwrap_or(ctx.config.dataset.parallelism).max(1),
        retry: retry(ctx),
    };
    let report = run_eval(&config, &manifest, embedder.as_ref(), &options)?;
    if !ctx.dry_run {
        if let Some(out) = &a.out {
            report.save_json(out)?;
        }
        if let Some(csv) = &a.csv {
            write_file(csv, &report.to_csv())?;
        }
    }
    emit(&json!({
        "images_evaluated": report.images_evaluated,
        "aggregate": report.aggregate,
        "excluded": report.excluded,
    }))
}

fn parse_pairing(s: &str) -> Result<(String, String, PathBuf, String, PathBuf)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [id, ma, pa, mb, pb] = parts[..] else {
        bail!("pairing {s:?} must be ID,METHOD_A,MANIFEST_A,METHOD_B,MANIFEST_B");
    };
    Ok((id.into(), ma.into(), pa.into(), mb.into(), pb.into()))
}

fn study_plan(ctx: &Ctx, a: &StudyPlanArgs) -> Result<()> {
    let subjects = a.subjects.iter().map(|p| load_subject(p)).collect::<Result<Vec<_>>>()?;
    let identifiers: Vec<String> = subjects.iter().map(|s| s.identifier_token.clone()).collect();
    let references: BTreeMap<String, Vec<PathBuf>> = subjects
        .iter()
        .map(|s| {
            let imgs = s.training_images.iter().map(|t| t.image_path.clone()).collect();
            (s.dataset_name.clone(), imgs)
        })
        .collect();
    let mut pairings = Vec::new();
    for spec in &a.pairings {
        let (id, method_a, path_a, method_b, path_b) = parse_pairing(spec)?;
        let items = items_from_manifests(&Manifest::load(&path_a)?, &Manifest::load(&path_b)?, &identifiers);
        pairings.push(PairingSpec {
            id,
            method_a,
            method_b,
            items,
        });
    }
    let s = &ctx.config.study;
    let options = StudyOptions {
        questions_per_type: a.questions_per_type.unwrap_or(s.questions_per_type),
        groups: a.groups.unwrap_or(s.groups),
        participants: a.participants.unwrap_or(s.participants),
    };
    let mut rng = rng_from_seed(ctx.config.seed);
    let plan = build_study_plan(&mut rng, &pairings, &references, &options, ctx.config.seed)?;
    let out = match (&a.out, ctx.dry_run) {
        (Some(out), false) => {
            plan.save(out)?;
            Some(out)
        }
        (None, false) => bail!("study plan needs --out (or --dry-run)"),
        _ => None,
    };
    emit(&json!({
        "out": out,
        "questions": plan.questions.len(),
        "groups": plan.pairings.len() * plan.groups_per_pairing,
        "pairings": plan.pairings,
        "problems": plan.check(),
    }))
}

fn study_serve(ctx: &Ctx, a: &StudyServeArgs) -> Result<()> {
    let plan = StudyPlan::load(&a.plan)?;
    let bind = a.bind.clone().unwrap_or_else(|| ctx.config.study.bind.clone());
    if ctx.dry_run {
        return emit(&json!({ "bind": bind, "questions": plan.questions.len() }));
    }
    let state = server::StudyState::open(plan, &a.answers)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(server::serve(state, &bind))
}

fn study_aggregate(ctx: &Ctx, a: &StudyAggregateArgs) -> Result<()> {
    let plan = StudyPlan::load(&a.plan)?;
    let answers = load_answers(&a.answers)?;
    let table = aggregate_results(&plan, &answers)?;
    if !ctx.dry_run {
        if let Some(out) = &a.out {
            write_file(out, &(serde_json::to_string_pretty(&table)? + "\n"))?;
        }
        if let Some(csv) = &a.csv {
            write_file(csv, &table.to_csv())?;
        }
    }
    emit(&table)
}

fn report(ctx: &Ctx, a: &ReportArgs) -> Result<()> {
    if a.eval.is_none() && a.study.is_none() {
        bail!("report needs --eval and/or --study");
    }
    let mut written = Vec::new();
    if let Some(path) = &a.eval {
        let csv = EvalReport::load_json(path)?.to_csv();
        out(&csv)?;
        let out = a.out_dir.join("scores.csv");
        if !ctx.dry_run {
            write_file(&out, &csv)?;
            written.push(out);
        }
    }
    if let Some(path) = &a.study {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let table: PreferenceTable = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let csv = table.to_csv();
        out(&csv)?;
        let out = a.out_dir.join("preferences.csv");
        if !ctx.dry_run {
            write_file(&out, &csv)?;
            written.push(out);
        }
    }
    for p in written {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}
