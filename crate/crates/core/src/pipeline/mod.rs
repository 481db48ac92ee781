//! File-based subcommands behind the `surrogacy` binary.
//!
//! Each subcommand reads its inputs from files, writes every output into a
//! single directory and leaves a `manifest.json` there with the content
//! hashes of what it read and wrote. When an input sits next to a manifest
//! that lists it, the input must still match the recorded hash.

mod attribute;
mod evaluate;
mod interleave;
mod manifest;
mod report;
mod simulate;
mod train;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::attribution::AttributionError;
use crate::interleaving::InterleaveError;
use crate::journey::{io as jio, BookingOutcome, InteractionEvent, ListingAttributes};
use crate::learner::LearnError;
use crate::sim::{SimConfig, SimError};
use crate::stats::StatsError;

pub use attribute::{attribute, outcome_metrics, AttributeArgs, TELESCOPING_TOLERANCE};
pub use evaluate::{
    evaluate, grid_extreme_lifts, grid_readout, EvaluateArgs, GridMetric, GridPoint, GridSpec,
};
pub use interleave::{interleave, parse_ranker, InterleaveArgs};
pub use manifest::{sha256_file, verify_input, FileDigest, RunManifest, MANIFEST_FILE};
pub use report::{report_all, ReportArgs};
pub use simulate::{simulate, SimulateArgs};
pub use train::{train, LearnerKind, TrainArgs, TrainOutput};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) | PipelineError::Io { .. } => 3,
            PipelineError::Validation(_) => 4,
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
        move |source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<SimError> for PipelineError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io(e) => PipelineError::Data(e.to_string()),
            other => PipelineError::Config(other.to_string()),
        }
    }
}

impl From<LearnError> for PipelineError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::InvalidConfig(_) => PipelineError::Config(e.to_string()),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<AttributionError> for PipelineError {
    fn from(e: AttributionError) -> Self {
        match e {
            AttributionError::Leakage { .. } => PipelineError::Validation(e.to_string()),
            AttributionError::InvalidCap(_) => PipelineError::Config(e.to_string()),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<StatsError> for PipelineError {
    fn from(e: StatsError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<InterleaveError> for PipelineError {
    fn from(e: InterleaveError) -> Self {
        match e {
            InterleaveError::Illegal { .. } => PipelineError::Validation(e.to_string()),
            InterleaveError::ZeroDisplay => PipelineError::Config(e.to_string()),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Loads a simulator config (defaults when `path` is `None`) and applies a seed override.
pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<SimConfig> {
    let mut cfg = match path {
        Some(p) => SimConfig::load(p)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?,
        None => SimConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(PipelineError::io(path))
}

fn first_line_error<T>(path: &Path, parsed: jio::Parsed<T>) -> Result<Vec<T>> {
    match parsed.errors.first() {
        Some(e) => Err(PipelineError::Data(format!(
            "{}: {} malformed line(s); line {}: {}",
            path.display(),
            parsed.errors.len(),
            e.line,
            e.message
        ))),
        None => Ok(parsed.items),
    }
}

pub fn read_events_file(path: &Path) -> Result<Vec<InteractionEvent>> {
    let parsed = jio::read_events(open(path)?).map_err(PipelineError::io(path))?;
    first_line_error(path, parsed)
}

pub fn read_outcomes_file(path: &Path) -> Result<Vec<BookingOutcome>> {
    let parsed = jio::read_outcomes(open(path)?).map_err(PipelineError::io(path))?;
    first_line_error(path, parsed)
}

pub fn read_listings_file(path: &Path) -> Result<Vec<ListingAttributes>> {
    first_line_error(path, jio::read_listings(open(path)?))
}

/// Reads a `unit_id,assignment` CSV.
pub fn read_assignments(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let headers = rdr
        .headers()
        .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    if headers.iter().collect::<Vec<_>>() != ["unit_id", "assignment"] {
        return Err(PipelineError::Data(format!(
            "{}: expected header unit_id,assignment",
            path.display()
        )));
    }
    let mut map = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
        map.insert(rec[0].to_string(), rec[1].to_string());
    }
    Ok(map)
}

/// Creates `dir/name`, hands a buffered writer to `f` and flushes it.
pub(crate) fn write_with<F>(dir: &Path, name: &str, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let path = dir.join(name);
    let mut w = File::create(&path)
        .map(BufWriter::new)
        .map_err(PipelineError::io(&path))?;
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(PipelineError::io(&path))
}

pub(crate) fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    write_with(dir, name, |w| w.write_all(text.as_bytes()))
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(PipelineError::io(dir))
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

/// Writes a CSV with the given header and rows.
pub(crate) fn write_csv(
    dir: &Path,
    name: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(PipelineError::io(&path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header).map_err(csv_err(&path))?;
    for r in rows {
        w.write_record(r).map_err(csv_err(&path))?;
    }
    w.flush().map_err(PipelineError::io(&path))
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
