use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use serde::{Deserialize, Serialize};

use super::manifest::ManifestAppender;
use super::{generate_image, EntryStatus, GenRequest, ImageBackend, Manifest, ManifestEntry, RetryPolicy, DEFAULT_STEPS};
use crate::fsutil::{sha256_hex, write_atomic};
use crate::planner::{Bucket, DatasetPlan};
use crate::{Error, Result};

/// Content hash of a job list, recorded in the manifest of a [`run_jobs`]
/// call that is not driven by a plan.
pub fn job_set_hash(jobs: &[GenJob]) -> String {
    sha256_hex(serde_json::to_string(jobs).expect("jobs serialize").as_bytes())
}

/// One image to produce.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenJob {
    pub index: usize,
    pub subject: Option<String>,
    pub bucket: Option<Bucket>,
    pub prompt: String,
    pub seed: u64,
    /// Path of the output image, relative to [`RunOptions::out_dir`].
    pub file_name: PathBuf,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub parallelism: usize,
    pub width: u32,
    pub height: u32,
    pub steps: u32,
    pub retry: RetryPolicy,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunOptions {
            out_dir: out_dir.into(),
            parallelism: 4,
            width: 1024,
            height: 1024,
            steps: DEFAULT_STEPS,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub manifest: Manifest,
    /// Images produced in this run.
    pub generated: usize,
    /// Jobs already done and verified on disk.
    pub skipped: usize,
    /// Jobs that failed in this run (recorded, not fatal).
    pub failed: usize,
}

/// Executes every plan item not already done, writing images under
/// `opts.out_dir` as `<index>.png` and recording each in the manifest.
pub fn run_generation(
    plan: &DatasetPlan,
    backend: &dyn ImageBackend,
    manifest_path: &Path,
    opts: &RunOptions,
) -> Result<RunSummary> {
    if plan.items.len() != plan.header.total {
        return Err(Error::InvalidArgument(format!(
            "plan has {} items but declares {}",
            plan.items.len(),
            plan.header.total
        )));
    }
    let jobs: Vec<GenJob> = plan
        .items
        .iter()
        .map(|item| GenJob {
            index: item.index,
            subject: None,
            bucket: Some(item.bucket),
            prompt: item.prompt.rendered.clone(),
            seed: item.seed,
            file_name: format!("{:05}.png", item.index).into(),
        })
        .collect();
    run_jobs(&jobs, &plan.hash(), backend, manifest_path, opts)
}

/// Resumable batch runner. Jobs whose manifest entry is done and whose image
/// still matches its hash are skipped; everything else is (re)generated by up
/// to `opts.parallelism` workers. The calling thread is the only manifest
/// writer.
pub fn run_jobs(
    jobs: &[GenJob],
    job_set_hash: &str,
    backend: &dyn ImageBackend,
    manifest_path: &Path,
    opts: &RunOptions,
) -> Result<RunSummary> {
    let mut manifest = Manifest::load(manifest_path)?;
    if let Some(stray) = manifest.entries.values().find(|e| e.plan_hash != job_set_hash) {
        return Err(Error::ManifestMismatch(format!(
            "{} entry {} belongs to plan {}, not {}",
            manifest_path.display(),
            stray.index,
            stray.plan_hash,
            job_set_hash
        )));
    }
    let indices: HashSet<usize> = jobs.iter().map(|j| j.index).collect();
    if let Some(stray) = manifest.entries.keys().find(|i| !indices.contains(i)) {
        return Err(Error::ManifestMismatch(format!("entry {stray} is not in the plan")));
    }

    let todo: Vec<&GenJob> = jobs
        .iter()
        .filter(|job| {
            !manifest
                .entries
                .get(&job.index)
                .is_some_and(|e| e.prompt == job.prompt && e.seed == job.seed && e.is_verified())
        })
        .collect();
    let skipped = jobs.len() - todo.len();
    let (mut generated, mut failed) = (0, 0);

    if !todo.is_empty() {
        let mut appender = ManifestAppender::open(manifest_path)?;
        let next = AtomicUsize::new(0);
        let workers = opts.parallelism.clamp(1, todo.len());
        let mut write_error = None;
        thread::scope(|scope| {
            let (tx, rx) = mpsc::channel::<ManifestEntry>();
            for _ in 0..workers {
                let tx = tx.clone();
                let (todo, next) = (&todo, &next);
                scope.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(job) = todo.get(i) else { break };
                    if tx.send(execute(job, job_set_hash, backend, opts)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            for entry in rx {
                match entry.status {
                    EntryStatus::Done => generated += 1,
                    _ => failed += 1,
                }
                if write_error.is_none() {
                    if let Err(e) = appender.append(&entry) {
                        write_error = Some(e);
                    }
                }
                manifest.entries.insert(entry.index, entry);
            }
        });
        if let Some(e) = write_error {
            return Err(e);
        }
    }
    manifest.save(manifest_path)?;
    log::info!("generation: {generated} generated, {skipped} skipped, {failed} failed");
    Ok(RunSummary {
        manifest,
        generated,
        skipped,
        failed,
    })
}

fn execute(job: &GenJob, job_set_hash: &str, backend: &dyn ImageBackend, opts: &RunOptions) -> ManifestEntry {
    let image_path = opts.out_dir.join(&job.file_name);
    let req = GenRequest {
        prompt: job.prompt.clone(),
        seed: job.seed,
        width: opts.width,
        height: opts.height,
        steps: opts.steps,
    };
    let outcome = generate_image(backend, &req, &opts.retry).and_then(|bytes| {
        write_atomic(&image_path, &bytes)?;
        Ok(sha256_hex(&bytes))
    });
    let (content_hash, status) = match outcome {
        Ok(hash) => (Some(hash), EntryStatus::Done),
        Err(e) => {
            log::warn!("job {} failed: {e}", job.index);
            (None, EntryStatus::Failed { reason: e.to_string() })
        }
    };
    ManifestEntry {
        index: job.index,
        subject: job.subject.clone(),
        bucket: job.bucket,
        prompt: job.prompt.clone(),
        seed: job.seed,
        image_path,
        content_hash,
        status,
        plan_hash: job_set_hash.to_string(),
    }
}
