use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::agents::AgentContext;
use crate::controller::{run_problem, LoopConfig, RunError, RunTranscript};
use crate::problem::Dataset;
use crate::verifier::Checker;

#[derive(Debug, thiserror::Error)]
pub enum BatchError {
    #[error("building worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Runs every problem on `workers` threads. Results come back in dataset
/// order; one problem's infrastructure failure does not stop the others.
pub fn run_dataset(
    dataset: &Dataset,
    config: &LoopConfig,
    ctx: &AgentContext<'_>,
    checker: &dyn Checker,
    workers: usize,
) -> Result<Vec<Result<RunTranscript, RunError>>, BatchError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?;
    Ok(pool.install(|| {
        dataset
            .problems
            .par_iter()
            .map(|p| {
                let t = run_problem(p, config, ctx, checker);
                match &t {
                    Ok(t) => log::info!("{}: {}", p.id, t.outcome.category),
                    Err(e) => log::error!("{e}"),
                }
                t
            })
            .collect()
    }))
}

/// File name for a problem's transcript; characters outside `[A-Za-z0-9._-]`
/// become `_`.
pub fn transcript_file_name(problem_id: &str) -> String {
    let safe: String = problem_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.json")
}

pub fn write_transcript(dir: &Path, transcript: &RunTranscript) -> Result<PathBuf, BatchError> {
    let path = dir.join(transcript_file_name(&transcript.problem_id));
    let mut bytes = serde_json::to_vec_pretty(transcript).map_err(|source| BatchError::Json {
        path: path.clone(),
        source,
    })?;
    bytes.push(b'\n');
    std::fs::write(&path, bytes).map_err(|source| BatchError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Reads every `*.json` transcript in a directory, sorted by file name.
pub fn read_transcripts(dir: &Path) -> Result<Vec<RunTranscript>, BatchError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| BatchError::Io { path, source }
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|path| {
            let bytes = std::fs::read(&path).map_err(io_err(&path))?;
            serde_json::from_slice(&bytes).map_err(|source| BatchError::Json { path, source })
        })
        .collect()
}
