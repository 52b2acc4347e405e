//! CSV cohort, counting-process and result files, plus run metadata
//! sidecars.
//!
//! Data files hold full-precision numbers that read back bit for bit;
//! display tables round hazard ratios to two decimals.

mod cohort_file;
mod counting;
mod format;
mod metadata;
mod results;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

pub use cohort_file::{read_cohort, read_cohort_with, read_cohorts, write_cohort, ReadOptions, COVARIATE_PREFIX};
pub use counting::{read_counting_process, write_counting_process};
pub use format::{fmt_hr_ci, fmt_percent, fmt_real};
pub use metadata::{
    read_metadata, sha256_hex, sidecar_path, write_metadata, InputFile, RunMetadata, SelectionSummary,
};
pub use results::{read_results, write_results, ResultFormat, ResultRow, ResultTable};

use crate::error::{Error, Result};

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::io(path, e)
}

fn format_error(path: &Path, message: String) -> Error {
    Error::Format {
        path: path.display().to_string(),
        message,
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => io_error(path, io),
            _ => unreachable!("checked is_io_error"),
        }
    } else {
        format_error(path, e.to_string())
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

fn write_record<I, T>(writer: &mut csv::Writer<BufWriter<File>>, path: &Path, record: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    writer.write_record(record).map_err(|e| csv_error(path, e))
}

fn finish_writer(writer: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    let inner = writer
        .into_inner()
        .map_err(|e| format_error(path, e.to_string()))?;
    inner
        .into_inner()
        .map(drop)
        .map_err(|e| io_error(path, e.into_error()))
}
