//! Executes a study over a grid.
//!
//! Workers claim batches of rows from a shared counter and send finished rows
//! to the calling thread, which is the only writer of the checkpoint log.
//! Each row depends only on its factor values and seed, so the sorted results
//! do not depend on `jobs` or on scheduling.

mod checkpoint;

use std::collections::BTreeSet;
use std::io::{IsTerminal, Write};
use std::ops::Range;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::results::{ResultRow, ResultsTable, Status};
use crate::study::{check_factors, DynStudy};
use crate::value::Value;

use checkpoint::{Header, Writer};

/// Rows to run, before chunking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Subset {
    /// Rows whose `row_id` lies in the range.
    Rows(Range<u64>),
    /// Rows of the listed iterations (1-based).
    Iterations(BTreeSet<u64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chunk {
    pub index: u64,
    pub count: u64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub jobs: usize,
    pub chunk: Option<Chunk>,
    pub checkpoint: Option<PathBuf>,
    /// Skip rows already present in the checkpoint instead of starting it afresh.
    pub resume: bool,
    pub subset: Option<Subset>,
    /// Stop at the first failed row and return it as an error.
    pub fail_fast: bool,
    /// Report rows/s and ETA on standard error.
    pub progress: bool,
    /// Set from another thread to stop claiming new rows.
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            jobs: 1,
            chunk: None,
            checkpoint: None,
            resume: false,
            subset: None,
            fail_fast: false,
            progress: false,
            cancel: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.jobs == 0 {
            return Err(Error::RunConfig("jobs must be at least 1".into()));
        }
        if let Some(c) = self.chunk {
            if c.count == 0 || c.index >= c.count {
                return Err(Error::RunConfig(format!(
                    "chunk index {} must be below the number of chunks {}",
                    c.index, c.count
                )));
            }
        }
        if self.resume && self.checkpoint.is_none() {
            return Err(Error::RunConfig("resuming needs a checkpoint path".into()));
        }
        if let Some(Subset::Rows(r)) = &self.subset {
            if r.start > r.end {
                return Err(Error::RunConfig(format!("empty row range {}..{}", r.start, r.end)));
            }
        }
        Ok(())
    }
}

/// Positions `[i·⌈total/m⌉, min((i+1)·⌈total/m⌉, total))`. Trailing chunks may be empty.
pub fn chunk_rows(total: u64, num_chunks: u64, chunk_index: u64) -> Result<Range<u64>> {
    if num_chunks == 0 || chunk_index >= num_chunks {
        return Err(Error::RunConfig(format!(
            "chunk index {chunk_index} must be below the number of chunks {num_chunks}"
        )));
    }
    let size = total.div_ceil(num_chunks);
    let start = chunk_index.saturating_mul(size).min(total);
    let end = start.saturating_add(size).min(total);
    Ok(start..end)
}

/// The rows a run executes: the subset first, then the chunk of what remains.
pub fn select_rows(grid: &Grid, config: &RunConfig) -> Result<Grid> {
    config.validate()?;
    let selected = match &config.subset {
        None => grid.clone(),
        Some(Subset::Rows(r)) => grid.filter(|v| Ok(r.contains(&v.row_id())))?,
        Some(Subset::Iterations(its)) => grid.subset_iterations(its)?,
    };
    match config.chunk {
        None => Ok(selected),
        Some(c) => {
            let r = chunk_rows(selected.len() as u64, c.count, c.index)?;
            selected.slice_rows(r.start as usize..r.end as usize)
        }
    }
}

/// Checkpoint path for an output file: `out/results.parquet` → `out/results.checkpoint.ndjson`.
pub fn checkpoint_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    output.with_file_name(format!("{stem}.checkpoint.ndjson"))
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub results: ResultsTable,
    /// Rows executed by this call.
    pub executed: usize,
    /// Rows taken from the checkpoint.
    pub skipped: usize,
}

pub fn run(grid: &Grid, study: &dyn DynStudy, config: &RunConfig) -> Result<ResultsTable> {
    Ok(run_detailed(grid, study, config)?.results)
}

/// [`run`] that continues from the rows already in `config.checkpoint`.
pub fn run_resumable(grid: &Grid, study: &dyn DynStudy, config: &RunConfig) -> Result<ResultsTable> {
    let config = RunConfig {
        resume: true,
        ..config.clone()
    };
    run(grid, study, &config)
}

/// Generate and analyze one row, capturing errors and panics in its status.
pub fn execute_row(grid: &Grid, study: &dyn DynStudy, row: &crate::grid::GridRow) -> ResultRow {
    let view = grid.view(row);
    let schema = study.outcome_schema();
    let outcome = catch_unwind(AssertUnwindSafe(|| study.execute(&view)))
        .unwrap_or_else(|payload| {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_owned())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_owned());
            Err(crate::study::StudyError::new(format!("panicked: {msg}")))
        })
        .and_then(|o| schema.conform(o));
    match outcome {
        Ok(outcomes) => ResultRow {
            row_id: row.row_id,
            outcomes,
            status: Status::Ok,
        },
        Err(e) => ResultRow {
            row_id: row.row_id,
            outcomes: vec![Value::Null; schema.len()],
            status: Status::Error(e.to_string()),
        },
    }
}

pub fn run_detailed(grid: &Grid, study: &dyn DynStudy, config: &RunConfig) -> Result<RunOutput> {
    let selected = select_rows(grid, config)?;
    check_factors(study, grid.factor_names())?;
    let schema = study.outcome_schema().clone();
    if selected.is_empty() {
        log::warn!("no grid rows selected; nothing to run");
    }

    let header = Header {
        study: study.name().to_owned(),
        master_seed: grid.master_seed(),
        outcomes: schema.names().map(str::to_owned).collect(),
    };
    let mut done: Vec<ResultRow> = Vec::new();
    let mut writer = match &config.checkpoint {
        None => None,
        Some(path) if config.resume => {
            let recovered = checkpoint::load(path, &header, &schema)?;
            let existed = path.exists();
            let writer = if recovered.needs_rewrite || !existed {
                let mut kept: Vec<&ResultRow> = recovered.rows.values().collect();
                kept.sort_by_key(|r| r.row_id);
                Writer::rewrite(path, &header, kept.into_iter(), &schema)?
            } else {
                Writer::append(path)?
            };
            done = recovered.rows.into_values().collect();
            Some(writer)
        }
        Some(path) => Some(Writer::create(path, &header)?),
    };

    // keep only checkpointed rows that belong to this selection
    let selected_ids = selected.row_ids();
    done.retain(|r| selected_ids.binary_search(&r.row_id).is_ok());
    let done_ids: BTreeSet<u64> = done.iter().map(|r| r.row_id).collect();
    let todo: Vec<usize> = (0..selected.len())
        .filter(|&p| !done_ids.contains(&selected_ids[p]))
        .collect();
    let skipped = done.len();
    if skipped > 0 {
        log::info!("resuming: {skipped} rows already done, {} to run", todo.len());
    }

    let jobs = config.jobs.min(todo.len()).max(1);
    let batch = (todo.len() / (jobs * 64)).clamp(1, 256);
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let cancel = config.cancel.clone().unwrap_or_default();
    let mut progress = config.progress.then(|| Progress::new(todo.len()));
    let mut first_failure: Option<ResultRow> = None;
    let mut fresh: Vec<ResultRow> = Vec::with_capacity(todo.len());
    let mut write_error: Option<Error> = None;

    std::thread::scope(|s| {
        let (tx, rx) = mpsc::channel::<ResultRow>();
        for _ in 0..jobs {
            let tx = tx.clone();
            let (selected, todo, next, stop, cancel) = (&selected, &todo, &next, &stop, &cancel);
            s.spawn(move || loop {
                let start = next.fetch_add(batch, Ordering::Relaxed);
                if start >= todo.len() {
                    return;
                }
                for &pos in &todo[start..(start + batch).min(todo.len())] {
                    if stop.load(Ordering::Relaxed) || cancel.load(Ordering::Relaxed) {
                        return;
                    }
                    let row = selected.row(pos).expect("position within grid");
                    if tx.send(execute_row(selected, study, &row)).is_err() {
                        return;
                    }
                }
            });
        }
        drop(tx);
        for row in rx {
            if write_error.is_some() {
                continue;
            }
            if let Some(w) = writer.as_mut() {
                if let Err(e) = w.write(&schema, &row) {
                    stop.store(true, Ordering::Relaxed);
                    write_error = Some(e);
                    continue;
                }
            }
            if config.fail_fast && !row.status.is_ok() && first_failure.is_none() {
                stop.store(true, Ordering::Relaxed);
                first_failure = Some(row.clone());
            }
            fresh.push(row);
            if let Some(p) = progress.as_mut() {
                p.tick(fresh.len());
            }
        }
    });
    if let Some(p) = progress.as_mut() {
        p.finish(fresh.len());
    }

    if let Some(e) = write_error {
        return Err(e);
    }
    if let Some(row) = first_failure {
        let Status::Error(message) = row.status else { unreachable!() };
        return Err(Error::RowFailed {
            row_id: row.row_id,
            message,
        });
    }
    if fresh.len() < todo.len() {
        return Err(Error::Cancelled {
            completed: skipped + fresh.len(),
        });
    }

    let executed = fresh.len();
    let mut rows = done;
    rows.append(&mut fresh);
    rows.sort_by_key(|r| r.row_id);
    debug_assert!(rows.windows(2).all(|w| w[0].row_id < w[1].row_id));
    Ok(RunOutput {
        results: ResultsTable { schema, rows },
        executed,
        skipped,
    })
}

struct Progress {
    total: usize,
    started: Instant,
    last: Instant,
    interval: Duration,
    tty: bool,
}

impl Progress {
    fn new(total: usize) -> Self {
        let tty = std::io::stderr().is_terminal();
        let now = Instant::now();
        Self {
            total,
            started: now,
            last: now,
            interval: if tty { Duration::from_millis(200) } else { Duration::from_secs(10) },
            tty,
        }
    }

    fn line(&self, done: usize) -> String {
        let secs = self.started.elapsed().as_secs_f64();
        let rate = if secs > 0.0 { done as f64 / secs } else { 0.0 };
        let eta = if rate > 0.0 {
            format!("{:.0}s", (self.total - done.min(self.total)) as f64 / rate)
        } else {
            "?".to_owned()
        };
        format!("{done}/{} rows, {rate:.0} rows/s, ETA {eta}", self.total)
    }

    fn tick(&mut self, done: usize) {
        if self.last.elapsed() < self.interval {
            return;
        }
        self.last = Instant::now();
        let mut err = std::io::stderr().lock();
        if self.tty {
            let _ = write!(err, "\r{}\x1b[K", self.line(done));
        } else {
            let _ = writeln!(err, "{}", self.line(done));
        }
    }

    fn finish(&mut self, done: usize) {
        let mut err = std::io::stderr().lock();
        let end = if self.tty { "\r" } else { "" };
        let _ = writeln!(err, "{end}{} in {:.1}s", self.line(done), self.started.elapsed().as_secs_f64());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_rule() {
        assert_eq!(chunk_rows(5, 2, 0).unwrap(), 0..3);
        assert_eq!(chunk_rows(5, 2, 1).unwrap(), 3..5);
        assert_eq!(chunk_rows(9, 1, 0).unwrap(), 0..9);
        for i in 0..4 {
            assert_eq!(chunk_rows(4, 8, i).unwrap(), i..i + 1);
        }
        for i in 4..8 {
            assert!(chunk_rows(4, 8, i).unwrap().is_empty());
        }
        assert!(chunk_rows(4, 8, 8).is_err());
        assert!(chunk_rows(4, 0, 0).is_err());
        assert_eq!(chunk_rows(352_000, 100, 7).unwrap(), 24_640..28_160);
    }

    #[test]
    fn checkpoint_name() {
        assert_eq!(
            checkpoint_path(Path::new("out/results.parquet")),
            PathBuf::from("out/results.checkpoint.ndjson")
        );
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            RunConfig { jobs: 0, ..RunConfig::default() },
            RunConfig { chunk: Some(Chunk { index: 3, count: 3 }), ..RunConfig::default() },
            RunConfig { resume: true, ..RunConfig::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::RunConfig(_))));
        }
    }
}
