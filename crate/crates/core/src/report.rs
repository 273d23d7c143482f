//! Per-trial report rows and their CSV form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One trial. Absent values are empty cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub trial: usize,
    pub algorithm: String,
    pub k: usize,
    pub p: f64,
    /// `err_p` of the span of the output.
    pub err: f64,
    /// `err₂` of the best rank-`k` subspace inside that span.
    pub err_rank_k: Option<f64>,
    /// Optimal rank-`k` `err₂`.
    pub optimum: Option<f64>,
    /// `err / optimum`.
    pub ratio: Option<f64>,
    /// `err_rank_k / optimum`; at least 1 up to rounding.
    pub ratio_rank_k: Option<f64>,
    pub inlier_error: Option<f64>,
    /// `inlier_error` divided by the optimum over the true inliers.
    pub inlier_ratio: Option<f64>,
    /// Like `inlier_ratio` for the best rank-`k` subspace in the span.
    pub inlier_ratio_rank_k: Option<f64>,
    pub passes: usize,
    pub subset_size: usize,
    pub t: Option<usize>,
    pub l: Option<usize>,
    pub m: Option<usize>,
    pub wall_time_s: f64,
    pub acceptance_rate: Option<f64>,
    pub seed: u64,
}

impl ReportRow {
    pub fn new(trial: usize, algorithm: impl Into<String>, k: usize, p: f64, seed: u64) -> Self {
        ReportRow {
            trial,
            algorithm: algorithm.into(),
            k,
            p,
            err: 0.0,
            err_rank_k: None,
            optimum: None,
            ratio: None,
            ratio_rank_k: None,
            inlier_error: None,
            inlier_ratio: None,
            inlier_ratio_rank_k: None,
            passes: 0,
            subset_size: 0,
            t: None,
            l: None,
            m: None,
            wall_time_s: 0.0,
            acceptance_rate: None,
            seed,
        }
    }
}

pub fn write_report<W: std::io::Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Report(e.to_string()))?;
    }
    if rows.is_empty() {
        // header only
        w.write_record(HEADER).map_err(|e| Error::Report(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Report(e.to_string()))
}

const HEADER: &[&str] = &[
    "trial",
    "algorithm",
    "k",
    "p",
    "err",
    "err_rank_k",
    "optimum",
    "ratio",
    "ratio_rank_k",
    "inlier_error",
    "inlier_ratio",
    "inlier_ratio_rank_k",
    "passes",
    "subset_size",
    "t",
    "l",
    "m",
    "wall_time_s",
    "acceptance_rate",
    "seed",
];

pub fn to_csv_string(rows: &[ReportRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_report(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Report(e.to_string()))
}

pub fn parse_report(text: &str) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Report(e.to_string())))
        .collect()
}

pub fn write_report_file(rows: &[ReportRow], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_report(rows, std::io::BufWriter::new(f))
}

pub fn read_report_file(path: &Path) -> Result<Vec<ReportRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_report(&text)
}
