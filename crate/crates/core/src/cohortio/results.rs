use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use csv::StringRecord;

use super::cohort_file::Cell;
use super::format::{fmt_hr_ci, fmt_percent, fmt_real};
use super::{csv_reader, csv_writer, finish_writer, format_error, io_error, write_record};
use crate::error::Result;
use crate::estimators::{Estimand, EstimatorResult, Method, RunReport};
use crate::survcore::bias_metrics;

const COLUMNS: [&str; 15] = [
    "method",
    "estimand",
    "hr",
    "ci_low",
    "ci_high",
    "log_hr",
    "se_log_hr",
    "n_subjects",
    "n_events",
    "robust_se",
    "true_hr",
    "percent_bias",
    "percent_bias_eliminated",
    "error",
    "notes",
];

/// One table row: an estimate, a true value (`method = true`) or a failure.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub estimand: Estimand,
    pub hr: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub log_hr: Option<f64>,
    pub se_log_hr: Option<f64>,
    pub n_subjects: Option<usize>,
    pub n_events: Option<usize>,
    pub robust_se: Option<bool>,
    pub true_hr: Option<f64>,
    /// `100 (ln true - ln hr) / ln true`.
    pub percent_bias: Option<f64>,
    pub percent_bias_eliminated: Option<f64>,
    pub error: Option<String>,
    pub notes: Vec<String>,
}

impl ResultRow {
    pub fn estimate(method: Method, estimand: Estimand, hr: f64) -> Self {
        Self {
            method,
            estimand,
            hr: Some(hr),
            ci_low: None,
            ci_high: None,
            log_hr: Some(hr.ln()),
            se_log_hr: None,
            n_subjects: None,
            n_events: None,
            robust_se: None,
            true_hr: None,
            percent_bias: None,
            percent_bias_eliminated: None,
            error: None,
            notes: Vec::new(),
        }
    }

    pub fn from_result(r: &EstimatorResult) -> Self {
        Self {
            ci_low: Some(r.ci_low),
            ci_high: Some(r.ci_high),
            log_hr: Some(r.log_hr),
            se_log_hr: Some(r.se_log_hr),
            n_subjects: Some(r.n_subjects),
            n_events: Some(r.n_events),
            robust_se: Some(r.robust_se_used),
            notes: r.notes.clone(),
            ..Self::estimate(r.method, r.estimand, r.hr)
        }
    }

    fn failure(method: Method, estimand: Estimand, error: String) -> Self {
        Self {
            hr: None,
            log_hr: None,
            error: Some(error),
            ..Self::estimate(method, estimand, 1.0)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    /// True values (two-cohort runs with a truth) followed by every
    /// estimator outcome.
    pub fn from_report(report: &RunReport) -> Self {
        let mut rows = Vec::new();
        if let Some(truth) = report.truth.filter(|_| report.n_prospective == 0) {
            for e in Estimand::ALL {
                rows.push(ResultRow::estimate(Method::Truth, e, truth.get(e)));
            }
        }
        for o in &report.outcomes {
            let mut row = match &o.result {
                Ok(r) => ResultRow::from_result(r),
                Err(e) => ResultRow::failure(o.method, o.estimand, e.clone()),
            };
            if let Some(b) = &o.bias {
                row.true_hr = Some(b.true_log_hr.exp());
                row.percent_bias = percent_bias(b.true_log_hr, b.method_log_hr);
                row.percent_bias_eliminated = b.percent_bias_eliminated;
            }
            rows.push(row);
        }
        Self { rows }
    }

    pub fn row(&self, method: Method) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Recomputes the bias columns from the table itself. The truth per
    /// estimand is the matching `true` row, or else the time-varying
    /// estimate. Returns warnings for metrics that cannot be computed.
    pub fn recompute_bias(&mut self) -> Vec<String> {
        let mut warnings = Vec::new();
        let truth_rows: HashMap<Estimand, f64> = self
            .rows
            .iter()
            .filter(|r| r.method == Method::Truth)
            .filter_map(|r| r.hr.map(|hr| (r.estimand, hr)))
            .collect();
        let benchmark = self.row(Method::TimeVarying).and_then(|r| r.hr);
        let unadjusted = self.row(Method::Unadjusted).and_then(|r| r.hr);
        if unadjusted.is_none() && self.rows.iter().any(|r| r.method != Method::Truth) {
            warnings.push("no unadjusted estimate: bias elimination not computed".into());
        }
        for row in &mut self.rows {
            row.true_hr = None;
            row.percent_bias = None;
            row.percent_bias_eliminated = None;
            if row.method == Method::Truth {
                continue;
            }
            let Some(hr) = row.hr else { continue };
            let Some(truth) = truth_rows.get(&row.estimand).copied().or(benchmark) else {
                warnings.push(format!("{}: no true value for {}", row.method, row.estimand));
                continue;
            };
            row.true_hr = Some(truth);
            match bias_metrics(truth, unadjusted.unwrap_or(hr), hr) {
                Ok(b) => {
                    row.percent_bias = percent_bias(b.true_log_hr, b.method_log_hr);
                    if row.percent_bias.is_none() {
                        warnings.push(format!("{}: percent bias undefined for a true HR of 1", row.method));
                    }
                    if unadjusted.is_some() {
                        row.percent_bias_eliminated = b.percent_bias_eliminated;
                        if b.percent_bias_eliminated.is_none() {
                            warnings.push(format!(
                                "{}: bias elimination undefined because the unadjusted estimate equals the truth",
                                row.method
                            ));
                        }
                    }
                }
                Err(e) => warnings.push(format!("{}: {e}", row.method)),
            }
        }
        warnings
    }

    /// Aligned table: `Effect estimate`, estimand, `Hazard ratio (95%CI)`,
    /// percent bias and percent of the unadjusted bias eliminated, all on
    /// the log-hazard scale. Failed rows are listed below the table.
    pub fn render_text(&self) -> String {
        let header = ["Effect estimate", "Estimand", "Hazard ratio (95%CI)", "Bias", "Bias eliminated"];
        let mut cells: Vec<[String; 5]> = Vec::new();
        let mut failures = Vec::new();
        for r in &self.rows {
            let hr = match (r.hr, r.ci_low, r.ci_high) {
                (Some(hr), Some(lo), Some(hi)) => fmt_hr_ci(hr, lo, hi),
                (Some(hr), _, _) => format!("{hr:.2}"),
                (None, _, _) => {
                    failures.push(format!(
                        "{}: {}",
                        r.method.label(),
                        r.error.as_deref().unwrap_or("no estimate")
                    ));
                    "failed".into()
                }
            };
            let eliminated = match (r.percent_bias_eliminated, r.true_hr, r.method) {
                (Some(p), _, _) => fmt_percent(p),
                (None, Some(_), m) if m != Method::Truth && r.hr.is_some() => "undefined".into(),
                _ => String::new(),
            };
            cells.push([
                r.method.label().to_string(),
                r.estimand.to_string(),
                hr,
                r.percent_bias.map(fmt_percent).unwrap_or_default(),
                eliminated,
            ]);
        }
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |fields: &[&str]| {
            let mut s = String::new();
            for (i, (f, w)) in fields.iter().zip(&widths).enumerate() {
                if i + 1 == fields.len() {
                    s.push_str(f);
                } else {
                    let _ = write!(s, "{f:<w$}  ");
                }
            }
            out.push_str(s.trim_end());
            out.push('\n');
        };
        line(&header);
        for row in &cells {
            line(&row.each_ref().map(String::as_str));
        }
        for f in failures {
            let _ = writeln!(out, "{f}");
        }
        out
    }
}

fn percent_bias(true_log_hr: f64, log_hr: f64) -> Option<f64> {
    (true_log_hr != 0.0).then(|| 100.0 * (true_log_hr - log_hr) / true_log_hr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultFormat {
    Csv,
    Text,
}

impl FromStr for ResultFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "text" => Ok(Self::Text),
            other => Err(format!("unknown result format `{other}` (expected csv or text)")),
        }
    }
}

/// Writes a result table. In CSV, notes are joined with ` | `.
pub fn write_results(table: &ResultTable, path: impl AsRef<Path>, format: ResultFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        ResultFormat::Text => std::fs::write(path, table.render_text()).map_err(|e| io_error(path, e)),
        ResultFormat::Csv => {
            let mut writer = csv_writer(path)?;
            write_record(&mut writer, path, COLUMNS)?;
            let real = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
            let count = |v: Option<usize>| v.map(|n| n.to_string()).unwrap_or_default();
            for r in &table.rows {
                let row = [
                    r.method.to_string(),
                    r.estimand.to_string(),
                    real(r.hr),
                    real(r.ci_low),
                    real(r.ci_high),
                    real(r.log_hr),
                    real(r.se_log_hr),
                    count(r.n_subjects),
                    count(r.n_events),
                    r.robust_se.map(|b| u8::from(b).to_string()).unwrap_or_default(),
                    real(r.true_hr),
                    real(r.percent_bias),
                    real(r.percent_bias_eliminated),
                    r.error.clone().unwrap_or_default(),
                    r.notes.join(" | "),
                ];
                write_record(&mut writer, path, &row)?;
            }
            finish_writer(writer, path)
        }
    }
}

/// Reads a results CSV. Only `method`, `estimand` and `hr` are required;
/// absent optional columns read as empty.
pub fn read_results(path: impl AsRef<Path>) -> Result<ResultTable> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let mut reader = csv_reader(path)?;
    let header = reader
        .headers()
        .map_err(|e| format_error(path, e.to_string()))?
        .clone();
    let mut index = HashMap::new();
    for (i, name) in header.iter().enumerate() {
        if !COLUMNS.contains(&name) {
            return Err(format_error(path, format!("unknown column `{name}`")));
        }
        if index.insert(name, i).is_some() {
            return Err(format_error(path, format!("duplicate column `{name}`")));
        }
    }
    for name in ["method", "estimand", "hr"] {
        if !index.contains_key(name) {
            return Err(format_error(path, format!("missing required column `{name}`")));
        }
    }
    let mut rows = Vec::new();
    let mut raw = StringRecord::new();
    let mut n = 0;
    while reader
        .read_record(&mut raw)
        .map_err(|e| format_error(path, e.to_string()))?
    {
        n += 1;
        let cell = Cell {
            path: &shown,
            header: &header,
            row: n,
            raw: &raw,
        };
        let col = |name: &str| index.get(name).copied();
        let real = |name: &str| -> Result<Option<f64>> {
            col(name).map(|i| cell.optional_real(i)).transpose().map(Option::flatten)
        };
        let count = |name: &str| -> Result<Option<usize>> {
            match col(name) {
                Some(i) if !cell.text(i).is_empty() => cell.parse(i, "a count").map(Some),
                _ => Ok(None),
            }
        };
        let text = |name: &str| col(name).map(|i| cell.text(i).to_string()).filter(|s| !s.is_empty());
        let method: Method = cell.parse(col("method").expect("required"), "a method name")?;
        let estimand: Estimand = cell.parse(col("estimand").expect("required"), "ATC, ATT or ATE")?;
        let hr = real("hr")?;
        if let Some(h) = hr {
            if h <= 0.0 {
                return Err(cell.error("hr", format!("hazard ratio {h} must be positive")));
            }
        }
        let error = text("error");
        if hr.is_none() && error.is_none() {
            return Err(cell.error("hr", "empty hazard ratio without an error".into()));
        }
        rows.push(ResultRow {
            method,
            estimand,
            hr,
            ci_low: real("ci_low")?,
            ci_high: real("ci_high")?,
            log_hr: real("log_hr")?.or(hr.map(f64::ln)),
            se_log_hr: real("se_log_hr")?,
            n_subjects: count("n_subjects")?,
            n_events: count("n_events")?,
            robust_se: match col("robust_se") {
                Some(i) => cell.optional_flag(i)?,
                None => None,
            },
            true_hr: real("true_hr")?,
            percent_bias: real("percent_bias")?,
            percent_bias_eliminated: real("percent_bias_eliminated")?,
            error,
            notes: text("notes")
                .map(|s| s.split(" | ").map(String::from).collect())
                .unwrap_or_default(),
        });
    }
    Ok(ResultTable { rows })
}
