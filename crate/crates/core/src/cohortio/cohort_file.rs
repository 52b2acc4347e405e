use std::collections::{HashMap, HashSet};
use std::path::Path;

use csv::StringRecord;

use super::format::fmt_real;
use super::{csv_reader, csv_writer, finish_writer, format_error, write_record};
use crate::cohort::{Cohort, CohortData, LatentState, SubjectRecord};
use crate::error::{Error, Result};

pub const COVARIATE_PREFIX: &str = "cov_";

const REQUIRED: [&str; 5] = ["id", "cohort", "entry_time", "event_time", "event"];
const OPTIONAL: [&str; 2] = ["wait_time", "treatment_start"];
const LATENT: [&str; 3] = ["frailty_rate", "g_carrier", "untreated_time"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadOptions {
    /// Parse the latent columns instead of ignoring them.
    pub latent: bool,
    /// Reject treated records without a wait time.
    pub require_wait_time: bool,
}

/// Reads a cohort file, ignoring latent columns.
pub fn read_cohort(path: impl AsRef<Path>) -> Result<CohortData> {
    read_cohort_with(path, ReadOptions::default())
}

/// Reads several cohort files into one dataset. Covariate columns must
/// agree and `(id, cohort)` pairs must be unique across files.
pub fn read_cohorts<P: AsRef<Path>>(paths: &[P], options: ReadOptions) -> Result<CohortData> {
    let mut out: Option<CohortData> = None;
    let mut seen = HashMap::new();
    for path in paths {
        let path = path.as_ref();
        let data = read_cohort_with(path, options)?;
        for (row, r) in data.records.iter().enumerate() {
            if let Some(first) = seen.insert((r.id, r.cohort), path.display().to_string()) {
                return Err(Error::Schema {
                    path: path.display().to_string(),
                    row: row + 1,
                    column: "id".into(),
                    message: format!("duplicate ({}, {}) already read from {first}", r.id, r.cohort),
                });
            }
        }
        match &mut out {
            None => out = Some(data),
            Some(acc) => {
                if acc.covariate_names != data.covariate_names {
                    return Err(format_error(
                        path,
                        format!(
                            "covariate columns {:?} differ from {:?}",
                            data.covariate_names, acc.covariate_names
                        ),
                    ));
                }
                acc.records.extend(data.records);
            }
        }
    }
    out.ok_or_else(|| Error::InvalidInput("no cohort files given".into()))
}

pub fn read_cohort_with(path: impl AsRef<Path>, options: ReadOptions) -> Result<CohortData> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let mut reader = csv_reader(path)?;
    let header = reader
        .headers()
        .map_err(|e| format_error(path, e.to_string()))?
        .clone();
    let columns = Columns::parse(&header, path)?;

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut raw = StringRecord::new();
    let mut row = 0;
    loop {
        match reader.read_record(&mut raw) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(format_error(path, e.to_string())),
        }
        row += 1;
        let cell = Cell {
            path: &shown,
            header: &header,
            row,
            raw: &raw,
        };
        let record = columns.record(&cell, options)?;
        record
            .check(columns.covariates.len())
            .map_err(|(column, msg)| cell.error(column, msg))?;
        if options.require_wait_time && record.cohort == Cohort::Treated && record.wait_time.is_none() {
            let msg = if columns.wait_time.is_none() {
                "column is missing but treated records need a wait time"
            } else {
                "treated record has no wait time"
            };
            return Err(cell.error("wait_time", msg.into()));
        }
        if !seen.insert((record.id, record.cohort)) {
            return Err(cell.error("id", format!("duplicate ({}, {})", record.id, record.cohort)));
        }
        records.push(record);
    }
    Ok(CohortData::new(columns.covariate_names(), records))
}

/// Writes records in a fixed column order: the required columns, wait and
/// treatment times, `cov_`-prefixed covariates, then latent columns when
/// every record carries them.
pub fn write_cohort(data: &CohortData, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let with_latent = !data.records.is_empty() && data.records.iter().all(|r| r.latent.is_some());
    let mut header: Vec<String> = REQUIRED.iter().chain(&OPTIONAL).map(|s| s.to_string()).collect();
    header.extend(data.covariate_names.iter().map(|n| format!("{COVARIATE_PREFIX}{n}")));
    if with_latent {
        header.extend(LATENT.iter().map(|s| s.to_string()));
    }
    let mut writer = csv_writer(path)?;
    write_record(&mut writer, path, &header)?;
    let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
    let mut row = Vec::with_capacity(header.len());
    for r in &data.records {
        row.clear();
        row.push(r.id.to_string());
        row.push(r.cohort.to_string());
        row.push(fmt_real(r.entry_time));
        row.push(fmt_real(r.event_time));
        row.push(if r.event { "1" } else { "0" }.to_string());
        row.push(opt(r.wait_time));
        row.push(opt(r.treatment_start));
        row.extend(r.covariates.iter().map(|&x| fmt_real(x)));
        if with_latent {
            let l = r.latent.expect("checked above");
            row.push(fmt_real(l.frailty_rate));
            row.push(match l.g_carrier {
                None => String::new(),
                Some(true) => "1".into(),
                Some(false) => "0".into(),
            });
            row.push(fmt_real(l.untreated_time));
        }
        write_record(&mut writer, path, &row)?;
    }
    finish_writer(writer, path)
}

/// Column positions resolved from the header.
struct Columns {
    required: [usize; 5],
    wait_time: Option<usize>,
    treatment_start: Option<usize>,
    covariates: Vec<(String, usize)>,
    latent: Option<[usize; 3]>,
}

impl Columns {
    fn parse(header: &StringRecord, path: &Path) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, name) in header.iter().enumerate() {
            if index.insert(name, i).is_some() {
                return Err(format_error(path, format!("duplicate column `{name}`")));
            }
            let known = REQUIRED.contains(&name)
                || OPTIONAL.contains(&name)
                || LATENT.contains(&name)
                || name.strip_prefix(COVARIATE_PREFIX).is_some_and(|n| !n.is_empty());
            if !known {
                return Err(format_error(path, format!("unknown column `{name}`")));
            }
        }
        let mut required = [0; 5];
        for (slot, name) in required.iter_mut().zip(REQUIRED) {
            *slot = *index
                .get(name)
                .ok_or_else(|| format_error(path, format!("missing required column `{name}`")))?;
        }
        let present: Vec<Option<usize>> = LATENT.iter().map(|n| index.get(n).copied()).collect();
        let latent = match present.as_slice() {
            [Some(a), Some(b), Some(c)] => Some([*a, *b, *c]),
            [None, None, None] => None,
            _ => {
                return Err(format_error(
                    path,
                    format!("latent columns must appear together: {}", LATENT.join(", ")),
                ))
            }
        };
        let covariates = header
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.strip_prefix(COVARIATE_PREFIX).map(|n| (n.to_string(), i)))
            .collect();
        Ok(Self {
            required,
            wait_time: index.get("wait_time").copied(),
            treatment_start: index.get("treatment_start").copied(),
            covariates,
            latent,
        })
    }

    fn covariate_names(&self) -> Vec<String> {
        self.covariates.iter().map(|(n, _)| n.clone()).collect()
    }

    fn record(&self, cell: &Cell, options: ReadOptions) -> Result<SubjectRecord> {
        let [id, cohort, entry, event_time, event] = self.required;
        let latent = match (options.latent, self.latent) {
            (true, Some([rate, carrier, untreated])) => Some(LatentState {
                frailty_rate: cell.real(rate)?,
                g_carrier: cell.optional_flag(carrier)?,
                untreated_time: cell.real(untreated)?,
            }),
            _ => None,
        };
        Ok(SubjectRecord {
            id: cell.parse(id, "a non-negative integer")?,
            cohort: cell.parse(cohort, "control, treated or prospective")?,
            entry_time: cell.real(entry)?,
            event_time: cell.real(event_time)?,
            event: cell.flag(event)?,
            wait_time: self.wait_time.map(|i| cell.optional_real(i)).transpose()?.flatten(),
            treatment_start: self
                .treatment_start
                .map(|i| cell.optional_real(i))
                .transpose()?
                .flatten(),
            covariates: self
                .covariates
                .iter()
                .map(|&(_, i)| cell.real(i))
                .collect::<Result<_>>()?,
            latent,
        })
    }
}

/// One data row, for parsing with row and column context.
pub(crate) struct Cell<'a> {
    pub path: &'a str,
    pub header: &'a StringRecord,
    /// Data row, counted from 1 after the header.
    pub row: usize,
    pub raw: &'a StringRecord,
}

impl Cell<'_> {
    pub fn error(&self, column: &str, message: String) -> Error {
        Error::Schema {
            path: self.path.to_string(),
            row: self.row,
            column: column.to_string(),
            message,
        }
    }

    pub fn text(&self, i: usize) -> &str {
        self.raw.get(i).unwrap_or("")
    }

    pub fn parse<T: std::str::FromStr>(&self, i: usize, expected: &str) -> Result<T> {
        let s = self.text(i);
        s.parse()
            .map_err(|_| self.error(&self.name(i), format!("`{s}` is not {expected}")))
    }

    pub fn real(&self, i: usize) -> Result<f64> {
        let s = self.text(i);
        match s.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(self.error(&self.name(i), format!("`{s}` is not a finite number"))),
        }
    }

    pub fn optional_real(&self, i: usize) -> Result<Option<f64>> {
        if self.text(i).is_empty() {
            Ok(None)
        } else {
            self.real(i).map(Some)
        }
    }

    pub fn flag(&self, i: usize) -> Result<bool> {
        match self.text(i) {
            "0" => Ok(false),
            "1" => Ok(true),
            s => Err(self.error(&self.name(i), format!("`{s}` must be 0 or 1"))),
        }
    }

    pub fn optional_flag(&self, i: usize) -> Result<Option<bool>> {
        if self.text(i).is_empty() {
            Ok(None)
        } else {
            self.flag(i).map(Some)
        }
    }

    fn name(&self, i: usize) -> String {
        self.header.get(i).unwrap_or("?").to_string()
    }
}
