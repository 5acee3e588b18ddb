use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use isomonodromy::error::Error;
use isomonodromy::io::{batch_exit_code, parse_batch, run_batch, run_job, write_atomic, Command, JobConfig};

#[derive(Debug, Parser)]
#[command(name = "isomono", version, about = "Isomonodromy flow, Stokes matrices and the caterpillar connection")]
struct Cli {
    /// Command to run when no config is given, or to override the config's command.
    command: Option<String>,
    /// JSON job config; an array runs as a batch.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report file, or a directory of per-job reports in batch mode. Stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    verbose: bool,
    /// Worker threads for batch mode.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

/// A closed pipe on stdout is not an error worth reporting.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn error_json(e: &Error) -> String {
    serde_json::json!({
        "status": "error",
        "exit_code": e.exit_code(),
        "error": {"class": e.class().as_str(), "exit_code": e.exit_code(), "message": e.to_string()},
    })
    .to_string()
}

fn load(cli: &Cli) -> Result<(Vec<JobConfig>, bool), Error> {
    let (mut jobs, batch) = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| Error::Io {
                path: p.display().to_string(),
                source,
            })?;
            parse_batch(&text)?
        }
        None => {
            let name = cli
                .command
                .as_deref()
                .ok_or_else(|| Error::schema("command", "give a command or --config"))?;
            let text = serde_json::json!({ "command": name }).to_string();
            parse_batch(&text)?
        }
    };
    if let Some(name) = &cli.command {
        let cmd: Command = serde_json::from_value(serde_json::Value::String(name.clone()))
            .map_err(|e| Error::schema("command", e.to_string()))?;
        jobs.iter_mut().for_each(|j| j.command = cmd);
    }
    if let Some(seed) = cli.seed {
        jobs.iter_mut().for_each(|j| j.seed = seed);
    }
    Ok((jobs, batch))
}

fn run(cli: &Cli) -> Result<i32, Error> {
    let (jobs, batch) = load(cli)?;
    if !batch {
        let job = &jobs[0];
        if cli.verbose {
            eprintln!("running {} (seed {})", job.command.as_str(), job.seed);
        }
        let report = run_job(job);
        if cli.verbose {
            eprintln!("{}: {} in {:.3}s", report.command, report.status, report.timings.wall_seconds);
        }
        let text = report.to_json_pretty();
        match &cli.out {
            Some(p) => write_atomic(p, text.as_bytes())?,
            None => emit(&text),
        }
        return Ok(report.exit_code);
    }
    let verbose = cli.verbose;
    let reports = run_batch(&jobs, cli.jobs, cli.out.as_deref(), &|i, r| {
        if verbose {
            eprintln!("job {i} ({}): {} in {:.3}s", r.command, r.status, r.timings.wall_seconds);
        }
    })?;
    match &cli.out {
        Some(dir) => {
            if verbose {
                eprintln!("wrote {} reports to {}", reports.len(), dir.display());
            }
        }
        None => {
            let all: Vec<_> = reports.iter().map(|r| serde_json::to_value(r).expect("report serializes")).collect();
            emit(&serde_json::to_string_pretty(&all).expect("reports serialize"));
        }
    }
    Ok(batch_exit_code(&reports))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(c) => c,
        Err(e) => {
            emit(&error_json(&e));
            if cli.verbose {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
