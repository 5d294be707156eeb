//! Alignment result records, one JSON object per line.
//!
//! JSON keeps the records greppable and streamable; numbers are written in
//! shortest round-trip form, so reading a file back reproduces the original
//! values exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitter::{AlignmentOutcome, ModeFit};
use crate::shape::{ModeId, Shape};

/// A runner-up mode, kept for diagnosing near-miss selections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternateSummary {
    pub mode: ModeId,
    pub visible_count: usize,
    pub mean_error: f64,
    pub mismatch: f64,
}

/// One aligned face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub image: PathBuf,
    /// Final landmark positions in image coordinates.
    pub points: Shape,
    /// Per-landmark occlusion verdict (true = no detection supported it).
    pub occluded: Vec<bool>,
    /// The selected pose/expression mode.
    pub mode: ModeId,
    /// Mismatch degree of the winning hypothesis.
    pub mismatch: f64,
    /// Landmarks with detection support.
    pub visible_count: usize,
    /// Mean error over the supported landmarks.
    pub mean_error: f64,
    pub alternates: Vec<AlternateSummary>,
}

fn summarize(fit: &ModeFit) -> AlternateSummary {
    AlternateSummary {
        mode: fit.id,
        visible_count: fit.visible_count,
        mean_error: fit.mean_error,
        mismatch: fit.mismatch,
    }
}

impl ResultRecord {
    pub fn from_outcome(image: impl Into<PathBuf>, outcome: &AlignmentOutcome) -> Self {
        let fit = &outcome.chosen;
        ResultRecord {
            image: image.into(),
            points: fit.sparse.clone(),
            occluded: fit.visible.iter().map(|&v| !v).collect(),
            mode: fit.id,
            mismatch: fit.mismatch,
            visible_count: fit.visible_count,
            mean_error: fit.mean_error,
            alternates: outcome.alternates.iter().map(summarize).collect(),
        }
    }
}

pub fn write_results<W: Write>(w: &mut W, records: &[ResultRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_results<R: BufRead>(r: R) -> Result<Vec<ResultRecord>> {
    let mut records = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ResultRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: PathBuf::from("<results>"),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_results_file<P: AsRef<Path>>(path: P, records: &[ResultRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_results(&mut w, records)?;
    w.flush()?;
    Ok(())
}

pub fn read_results_file<P: AsRef<Path>>(path: P) -> Result<Vec<ResultRecord>> {
    read_results(BufReader::new(File::open(path)?))
}
