use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use tddgen::agents::{AgentContext, AgentSettings, TemplateSet, DEFAULT_SET};
use tddgen::harness::{
    grade_transcripts, read_transcripts, render_report, run_dataset, summarize, write_transcript,
    Criterion, ReportFormat,
};
use tddgen::llm::{
    Engine, OpenAiCompatible, ReplayStore, DEFAULT_BASE_URL, DEFAULT_KEY_VAR, DEFAULT_SEED,
};
use tddgen::problem::{load_dataset_file, Dataset};
use tddgen::verifier::{ExecutionLimits, Verifier};
use tddgen::{LoopConfig, RunTranscript};

#[derive(Parser)]
#[command(
    name = "tddgen",
    version,
    about = "Test-driven code generation runs and reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    /// Call the provider for every request.
    Live,
    /// Call the provider and append new results to the store.
    Record,
    /// Serve only from the store; a miss is an error.
    Replay,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Public,
    Private,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Public => Criterion::Public,
            CriterionArg::Private => Criterion::Private,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Table,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Table => ReportFormat::Table,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over a dataset. Writes `<out>/transcripts/<id>.json`,
    /// `<out>/report.json` and `<out>/report.csv`, and prints the table.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "replay")]
        backend: BackendKind,
        /// Replay store (JSON lines). Required for record and replay.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "public")]
        criterion: CriterionArg,
        #[arg(long, default_value_t = 5)]
        max_iters: u32,
        #[arg(long, default_value_t = 3)]
        repeat_cutoff: u32,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: i64,
        /// Bundled set id or a directory of templates.
        #[arg(long, default_value = DEFAULT_SET)]
        template_set: String,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "gpt-4-1106-preview")]
        model: String,
        #[arg(long, default_value = DEFAULT_BASE_URL)]
        base_url: String,
        /// Environment variable holding the provider key.
        #[arg(long, default_value = DEFAULT_KEY_VAR)]
        api_key_var: String,
        #[arg(long, default_value_t = 10_000)]
        per_test_timeout_ms: u64,
    },
    /// Grade saved transcripts and print a report.
    Report {
        #[arg(long)]
        transcripts: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "public")]
        criterion: CriterionArg,
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
    },
    /// Check a dataset file against the problem schema.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
    },
}

/// Exit status classes: bad input vs. something broke while running.
enum Failure {
    Validation(anyhow::Error),
    Infrastructure(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Infrastructure(_) => 3,
        }
    }
}

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Validation(e.into())
}

fn infra(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Infrastructure(e.into())
}

fn load(path: &Path) -> Result<Dataset, Failure> {
    load_dataset_file(path).map_err(|e| {
        let err = anyhow!(e.to_string()).context(format!("loading {}", path.display()));
        if e.is_validation() {
            Failure::Validation(err)
        } else {
            Failure::Infrastructure(err)
        }
    })
}

fn open_store(store: Option<&Path>) -> Result<Arc<ReplayStore>, Failure> {
    let path = store.ok_or_else(|| {
        invalid(anyhow!(
            "--store is required for record and replay backends"
        ))
    })?;
    ReplayStore::open(path)
        .map(Arc::new)
        .with_context(|| format!("opening replay store {}", path.display()))
        .map_err(infra)
}

fn report(
    transcripts: &[RunTranscript],
    dataset: &Dataset,
    criterion: Criterion,
    verifier: &Verifier,
    format: ReportFormat,
) -> Result<Vec<u8>, Failure> {
    let graded =
        grade_transcripts(transcripts, dataset, criterion, verifier).map_err(|e| match e {
            tddgen::harness::GradeError::Verify { .. } => infra(e),
            other => invalid(other),
        })?;
    Ok(render_report(
        &summarize(&graded, &dataset.name, criterion),
        format,
    ))
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    dataset: &Path,
    backend: BackendKind,
    store: Option<&Path>,
    criterion: Criterion,
    config: LoopConfig,
    settings: AgentSettings,
    template_set: &str,
    workers: usize,
    out: &Path,
    base_url: &str,
    api_key_var: &str,
    per_test_timeout_ms: u64,
) -> Result<(), Failure> {
    let dataset = load(dataset)?;
    config.validate().map_err(|e| invalid(anyhow!(e)))?;
    let templates = TemplateSet::resolve(template_set).map_err(invalid)?;
    let live = || OpenAiCompatible::from_env(base_url, api_key_var).map_err(invalid);
    let engine = match backend {
        BackendKind::Live => Engine::passthrough(Arc::new(live()?)),
        BackendKind::Record => Engine::record(Arc::new(live()?), open_store(store)?),
        BackendKind::Replay => Engine::replay(open_store(store)?),
    };
    let limits = ExecutionLimits {
        per_test_timeout: std::time::Duration::from_millis(per_test_timeout_ms),
        ..ExecutionLimits::default()
    };
    limits.validate().map_err(|e| invalid(anyhow!(e)))?;
    let verifier = Verifier::bundled()
        .context("installing runner shim")
        .map_err(infra)?
        .limits(limits);

    let transcript_dir = out.join("transcripts");
    std::fs::create_dir_all(&transcript_dir)
        .with_context(|| format!("creating {}", transcript_dir.display()))
        .map_err(infra)?;
    let ctx = AgentContext {
        engine: &engine,
        templates: &templates,
        settings: &settings,
    };
    let results = run_dataset(&dataset, &config, &ctx, &verifier, workers).map_err(infra)?;
    let mut transcripts = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(t) => {
                write_transcript(&transcript_dir, &t).map_err(infra)?;
                transcripts.push(t);
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    if !failures.is_empty() {
        // each failure was already logged by the batch runner
        return Err(infra(anyhow!(
            "{} of {} problems hit infrastructure failures; no report written",
            failures.len(),
            dataset.problems.len()
        )));
    }
    for (format, name) in [
        (ReportFormat::Json, "report.json"),
        (ReportFormat::Csv, "report.csv"),
    ] {
        let bytes = report(&transcripts, &dataset, criterion, &verifier, format)?;
        std::fs::write(out.join(name), bytes).map_err(infra)?;
    }
    let table = report(
        &transcripts,
        &dataset,
        criterion,
        &verifier,
        ReportFormat::Table,
    )?;
    print!("{}", String::from_utf8_lossy(&table));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            dataset,
            backend,
            store,
            criterion,
            max_iters,
            repeat_cutoff,
            seed,
            template_set,
            workers,
            out,
            model,
            base_url,
            api_key_var,
            per_test_timeout_ms,
        } => {
            let config = LoopConfig {
                max_iterations: max_iters,
                repeat_failure_cutoff: repeat_cutoff,
                ..LoopConfig::default()
            };
            let settings = AgentSettings {
                model_id: model,
                seed,
                ..AgentSettings::default()
            };
            cmd_run(
                &dataset,
                backend,
                store.as_deref(),
                criterion.into(),
                config,
                settings,
                &template_set,
                workers,
                &out,
                &base_url,
                &api_key_var,
                per_test_timeout_ms,
            )
        }
        Command::Report {
            transcripts,
            dataset,
            criterion,
            format,
        } => {
            let dataset = load(&dataset)?;
            let transcripts = read_transcripts(&transcripts).map_err(invalid)?;
            let verifier = Verifier::bundled()
                .context("installing runner shim")
                .map_err(infra)?;
            let bytes = report(
                &transcripts,
                &dataset,
                criterion.into(),
                &verifier,
                format.into(),
            )?;
            print!("{}", String::from_utf8_lossy(&bytes));
            Ok(())
        }
        Command::Validate { dataset } => {
            let ds = load(&dataset)?;
            let tests: usize = ds
                .problems
                .iter()
                .map(|p| p.public_tests.len() + p.private_tests.len())
                .sum();
            println!(
                "{}: {} problems, {} tests",
                dataset.display(),
                ds.problems.len(),
                tests
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Validation(e) | Failure::Infrastructure(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
