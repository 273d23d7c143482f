use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::io::{self, FileFormat};
use crate::error::{Error, Result};
use crate::linalg::PointSet;

/// How rows may be accessed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccessMode {
    /// Rows are held in memory and random access is allowed.
    InMemory,
    /// Only sequential passes are allowed.
    Streaming,
}

#[derive(Clone, Debug)]
enum Backing {
    Memory(Arc<PointSet>),
    File { path: PathBuf, format: FileFormat },
}

/// One sequential visit of the dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassEntry {
    pub label: String,
    pub rows_visited: usize,
    pub completed: bool,
}

/// Auditable record of the passes made over a source.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassLog {
    pub entries: Vec<PassEntry>,
}

impl PassLog {
    pub fn total_passes(&self) -> usize {
        self.entries.len()
    }

    pub fn completed_passes(&self) -> usize {
        self.entries.iter().filter(|e| e.completed).count()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries recorded after `mark` (a previous `len()`).
    pub fn since(&self, mark: usize) -> PassLog {
        PassLog {
            entries: self.entries[mark.min(self.entries.len())..].to_vec(),
        }
    }

    pub fn extend(&mut self, other: &PassLog) {
        self.entries.extend(other.entries.iter().cloned());
    }

    /// Checks that exactly `expected` passes were made and each visited all
    /// `n` rows.
    pub fn assert_passes(&self, expected: usize, n: usize) -> Result<(), PassCountError> {
        if let Some(e) = self
            .entries
            .iter()
            .find(|e| !e.completed || e.rows_visited != n)
        {
            return Err(PassCountError::Incomplete {
                label: e.label.clone(),
                rows_visited: e.rows_visited,
                n,
            });
        }
        if self.total_passes() != expected {
            return Err(PassCountError::Count {
                expected,
                actual: self.total_passes(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PassCountError {
    #[error("pass {label:?} visited {rows_visited} of {n} rows")]
    Incomplete {
        label: String,
        rows_visited: usize,
        n: usize,
    },
    #[error("expected {expected} passes, made {actual}")]
    Count { expected: usize, actual: usize },
}

/// A dataset that is consumed in counted sequential passes.
///
/// Algorithm passes and reporting passes (error evaluation, oracle
/// computation) are logged separately so that the pass complexity of an
/// algorithm can be asserted from its own log.
#[derive(Clone, Debug)]
pub struct DatasetSource {
    backing: Backing,
    mode: AccessMode,
    n: usize,
    d: usize,
    log: PassLog,
    report_log: PassLog,
}

impl DatasetSource {
    pub fn in_memory(points: impl Into<Arc<PointSet>>) -> Self {
        let points = points.into();
        DatasetSource {
            n: points.n(),
            d: points.d(),
            backing: Backing::Memory(points),
            mode: AccessMode::InMemory,
            log: PassLog::default(),
            report_log: PassLog::default(),
        }
    }

    /// An in-memory source that refuses random access.
    pub fn streaming_view(points: impl Into<Arc<PointSet>>) -> Self {
        DatasetSource {
            mode: AccessMode::Streaming,
            ..Self::in_memory(points)
        }
    }

    /// Opens a CSV or binary file. The file is validated once to discover
    /// `n` and `d`; the validation scan is not counted as a pass. In
    /// `InMemory` mode the rows are loaded; in `Streaming` mode every pass
    /// re-reads the file.
    pub fn open(path: impl AsRef<Path>, mode: AccessMode) -> Result<Self> {
        let path = path.as_ref();
        let format = FileFormat::detect(path)?;
        match mode {
            AccessMode::InMemory => Ok(Self::in_memory(io::read_points(path)?)),
            AccessMode::Streaming => {
                let shape = io::for_each_row(path, format, |_, _| Ok(()))?;
                Ok(DatasetSource {
                    backing: Backing::File {
                        path: path.to_path_buf(),
                        format,
                    },
                    mode,
                    n: shape.n,
                    d: shape.d,
                    log: PassLog::default(),
                    report_log: PassLog::default(),
                })
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mode(&self) -> AccessMode {
        self.mode
    }

    pub fn log(&self) -> &PassLog {
        &self.log
    }

    pub fn report_log(&self) -> &PassLog {
        &self.report_log
    }

    /// Random access to the rows. Only available in `InMemory` mode.
    pub fn points(&self) -> Result<&PointSet> {
        match (&self.backing, self.mode) {
            (Backing::Memory(p), AccessMode::InMemory) => Ok(p),
            _ => Err(Error::StreamingAccess),
        }
    }

    /// One full sequential pass. `visitor` sees every row in index order.
    /// A visitor error aborts the pass and is returned as is; the pass is
    /// still logged, marked incomplete.
    pub fn stream_pass<F>(&mut self, label: &str, visitor: F) -> Result<PassEntry>
    where
        F: FnMut(usize, &[f64]) -> Result<()>,
    {
        let entry = run_pass(&self.backing, self.n, label, visitor);
        self.log.entries.push(entry.0.clone());
        entry.1.map(|_| entry.0)
    }

    /// Like [`stream_pass`](Self::stream_pass) but logged as a reporting pass.
    pub fn report_pass<F>(&mut self, label: &str, visitor: F) -> Result<PassEntry>
    where
        F: FnMut(usize, &[f64]) -> Result<()>,
    {
        let entry = run_pass(&self.backing, self.n, label, visitor);
        self.report_log.entries.push(entry.0.clone());
        entry.1.map(|_| entry.0)
    }

    pub fn clear_logs(&mut self) {
        self.log.entries.clear();
        self.report_log.entries.clear();
    }
}

fn run_pass<F>(backing: &Backing, n: usize, label: &str, mut visitor: F) -> (PassEntry, Result<()>)
where
    F: FnMut(usize, &[f64]) -> Result<()>,
{
    let mut visited = 0;
    let outcome = match backing {
        Backing::Memory(points) => points.rows().enumerate().try_for_each(|(i, row)| {
            visitor(i, row)?;
            visited += 1;
            Ok(())
        }),
        Backing::File { path, format } => io::for_each_row(path, *format, |i, row| {
            visitor(i, row)?;
            visited += 1;
            Ok(())
        })
        .and_then(|shape| {
            if shape.n != n {
                Err(Error::Format {
                    path: path.clone(),
                    msg: format!("file changed: expected {n} rows, read {}", shape.n),
                })
            } else {
                Ok(())
            }
        }),
    };
    let completed = outcome.is_ok() && visited == n;
    (
        PassEntry {
            label: label.to_string(),
            rows_visited: visited,
            completed,
        },
        outcome,
    )
}
