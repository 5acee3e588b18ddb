use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use crate::error::Error;
use crate::io::config::JobConfig;
use crate::io::run::{run_job, Report};

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let io_err = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io_err)?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(io_err)?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(e)
    })
}

pub fn job_file(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("job-{index:04}.json"))
}

/// Runs jobs on up to `workers` threads. Reports come back in input order;
/// when `out_dir` is set each one is written there as soon as it finishes.
pub fn run_batch(
    jobs: &[JobConfig],
    workers: usize,
    out_dir: Option<&Path>,
    on_done: &(dyn Fn(usize, &Report) + Sync),
) -> Result<Vec<Report>, Error> {
    if let Some(d) = out_dir {
        fs::create_dir_all(d).map_err(|source| Error::Io {
            path: d.display().to_string(),
            source,
        })?;
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Report>>> = Mutex::new(vec![None; jobs.len()]);
    let write_error: Mutex<Option<Error>> = Mutex::new(None);
    thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let report = run_job(&jobs[i]);
                if let Some(d) = out_dir {
                    if let Err(e) = write_atomic(&job_file(d, i), report.to_json_pretty().as_bytes()) {
                        write_error.lock().expect("lock").get_or_insert(e);
                    }
                }
                on_done(i, &report);
                slots.lock().expect("lock")[i] = Some(report);
            });
        }
    });
    if let Some(e) = write_error.into_inner().expect("lock") {
        return Err(e);
    }
    Ok(slots
        .into_inner()
        .expect("lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect())
}

/// Worst exit code across a batch.
pub fn batch_exit_code(reports: &[Report]) -> i32 {
    reports.iter().map(|r| r.exit_code).max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::config::Command;

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "second");
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn batch_preserves_order_and_matches_serial() {
        let mut jobs = Vec::new();
        for seed in 0..4 {
            let mut c = JobConfig::new(Command::StokesClosed);
            c.n = Some(3);
            c.seed = seed;
            jobs.push(c);
        }
        let mut bad = JobConfig::new(Command::Seed);
        bad.n = Some(2);
        bad.rho = 5.0;
        jobs.push(bad);
        let dir = tempfile::tempdir().unwrap();
        let par = run_batch(&jobs, 3, Some(dir.path()), &|_, _| {}).unwrap();
        let ser = run_batch(&jobs, 1, None, &|_, _| {}).unwrap();
        assert_eq!(par.len(), 5);
        for (a, b) in par.iter().zip(&ser) {
            assert_eq!(a.payload(), b.payload());
        }
        assert_eq!(par[4].exit_code, 4);
        assert_eq!(batch_exit_code(&par), 4);
        for (i, job) in jobs.iter().enumerate() {
            let text = fs::read_to_string(job_file(dir.path(), i)).unwrap();
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["config"]["seed"], serde_json::json!(job.seed));
        }
    }
}
