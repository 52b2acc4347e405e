use std::path::Path;

use csv::StringRecord;

use super::cohort_file::Cell;
use super::format::fmt_real;
use super::{csv_reader, csv_writer, finish_writer, format_error, write_record};
use crate::error::Result;
use crate::survcore::CountingProcessData;

const FIXED: [&str; 6] = ["subject_id", "cluster_id", "start", "stop", "status", "stratum"];

/// Writes counting-process rows: the fixed columns followed by one column
/// per covariate.
pub fn write_counting_process(data: &CountingProcessData, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv_writer(path)?;
    let header: Vec<String> = FIXED
        .iter()
        .map(|s| s.to_string())
        .chain(data.covariate_names().iter().cloned())
        .collect();
    write_record(&mut writer, path, &header)?;
    let mut row = Vec::with_capacity(header.len());
    for i in 0..data.len() {
        row.clear();
        row.push(data.subject_id(i).to_string());
        row.push(data.cluster_id(i).to_string());
        row.push(fmt_real(data.start(i)));
        row.push(fmt_real(data.stop(i)));
        row.push(if data.status(i) { "1" } else { "0" }.to_string());
        row.push(data.stratum(i).to_string());
        row.extend(data.covariates(i).iter().map(|&x| fmt_real(x)));
        write_record(&mut writer, path, &row)?;
    }
    finish_writer(writer, path)
}

pub fn read_counting_process(path: impl AsRef<Path>) -> Result<CountingProcessData> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let mut reader = csv_reader(path)?;
    let header = reader
        .headers()
        .map_err(|e| format_error(path, e.to_string()))?
        .clone();
    if header.len() < FIXED.len() || header.iter().zip(FIXED).any(|(a, b)| a != b) {
        return Err(format_error(
            path,
            format!("header must start with {}", FIXED.join(",")),
        ));
    }
    let names: Vec<String> = header.iter().skip(FIXED.len()).map(String::from).collect();
    if let Some(dup) = names.iter().enumerate().find(|(i, n)| names[..*i].contains(n)) {
        return Err(format_error(path, format!("duplicate column `{}`", dup.1)));
    }
    let mut data = CountingProcessData::new(names);
    let mut raw = StringRecord::new();
    let mut covariates = Vec::new();
    let mut row = 0;
    while reader
        .read_record(&mut raw)
        .map_err(|e| format_error(path, e.to_string()))?
    {
        row += 1;
        let cell = Cell {
            path: &shown,
            header: &header,
            row,
            raw: &raw,
        };
        covariates.clear();
        for j in FIXED.len()..header.len() {
            covariates.push(cell.real(j)?);
        }
        let (start, stop) = (cell.real(2)?, cell.real(3)?);
        if !(stop > start) {
            return Err(cell.error("stop", format!("stop {stop} must exceed start {start}")));
        }
        data.push(
            cell.parse(0, "a non-negative integer")?,
            cell.parse(1, "a non-negative integer")?,
            start,
            stop,
            cell.flag(4)?,
            cell.parse(5, "a non-negative integer")?,
            &covariates,
        )?;
    }
    Ok(data)
}
