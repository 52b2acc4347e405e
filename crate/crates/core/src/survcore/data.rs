use crate::error::{Error, Result};

/// One `(start, stop]` interval of a subject, the unit of input to the Cox engine.
#[derive(Debug, Clone, PartialEq)]
pub struct CountingProcessRow {
    pub subject_id: u64,
    pub cluster_id: u64,
    pub start: f64,
    pub stop: f64,
    pub status: bool,
    pub covariates: Vec<f64>,
    pub stratum: u32,
}

impl CountingProcessRow {
    /// Row whose cluster is the subject itself.
    pub fn new(subject_id: u64, start: f64, stop: f64, status: bool, covariates: Vec<f64>) -> Self {
        Self {
            subject_id,
            cluster_id: subject_id,
            start,
            stop,
            status,
            covariates,
            stratum: 0,
        }
    }

    pub fn with_cluster(mut self, cluster_id: u64) -> Self {
        self.cluster_id = cluster_id;
        self
    }

    pub fn with_stratum(mut self, stratum: u32) -> Self {
        self.stratum = stratum;
        self
    }
}

/// Column-oriented counting-process dataset.
///
/// Pooled landmark datasets reach millions of rows, so covariates live in a
/// single row-major buffer instead of one allocation per row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CountingProcessData {
    covariate_names: Vec<String>,
    subject_id: Vec<u64>,
    cluster_id: Vec<u64>,
    start: Vec<f64>,
    stop: Vec<f64>,
    status: Vec<bool>,
    stratum: Vec<u32>,
    covariates: Vec<f64>,
}

impl CountingProcessData {
    pub fn new(covariate_names: Vec<String>) -> Self {
        Self {
            covariate_names,
            ..Default::default()
        }
    }

    pub fn with_capacity(covariate_names: Vec<String>, rows: usize) -> Self {
        let p = covariate_names.len();
        Self {
            covariate_names,
            subject_id: Vec::with_capacity(rows),
            cluster_id: Vec::with_capacity(rows),
            start: Vec::with_capacity(rows),
            stop: Vec::with_capacity(rows),
            status: Vec::with_capacity(rows),
            stratum: Vec::with_capacity(rows),
            covariates: Vec::with_capacity(rows * p),
        }
    }

    /// Builds a dataset with generic covariate names `x1, x2, ...`.
    pub fn from_rows(rows: &[CountingProcessRow]) -> Result<Self> {
        let p = rows.first().map_or(0, |r| r.covariates.len());
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        let mut data = Self::with_capacity(names, rows.len());
        for row in rows {
            data.push_row(row)?;
        }
        Ok(data)
    }

    pub fn push_row(&mut self, row: &CountingProcessRow) -> Result<()> {
        self.push(
            row.subject_id,
            row.cluster_id,
            row.start,
            row.stop,
            row.status,
            row.stratum,
            &row.covariates,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        subject_id: u64,
        cluster_id: u64,
        start: f64,
        stop: f64,
        status: bool,
        stratum: u32,
        covariates: &[f64],
    ) -> Result<()> {
        if covariates.len() != self.covariate_names.len() {
            return Err(Error::InvalidInput(format!(
                "row {} has {} covariates, dataset has {}",
                self.len(),
                covariates.len(),
                self.covariate_names.len()
            )));
        }
        self.subject_id.push(subject_id);
        self.cluster_id.push(cluster_id);
        self.start.push(start);
        self.stop.push(stop);
        self.status.push(status);
        self.stratum.push(stratum);
        self.covariates.extend_from_slice(covariates);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.start.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn subject_id(&self, i: usize) -> u64 {
        self.subject_id[i]
    }

    pub fn cluster_id(&self, i: usize) -> u64 {
        self.cluster_id[i]
    }

    pub fn start(&self, i: usize) -> f64 {
        self.start[i]
    }

    pub fn stop(&self, i: usize) -> f64 {
        self.stop[i]
    }

    pub fn status(&self, i: usize) -> bool {
        self.status[i]
    }

    pub fn stratum(&self, i: usize) -> u32 {
        self.stratum[i]
    }

    pub fn covariates(&self, i: usize) -> &[f64] {
        let p = self.n_covariates();
        &self.covariates[i * p..(i + 1) * p]
    }

    pub fn row(&self, i: usize) -> CountingProcessRow {
        CountingProcessRow {
            subject_id: self.subject_id[i],
            cluster_id: self.cluster_id[i],
            start: self.start[i],
            stop: self.stop[i],
            status: self.status[i],
            covariates: self.covariates(i).to_vec(),
            stratum: self.stratum[i],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = CountingProcessRow> + '_ {
        (0..self.len()).map(|i| self.row(i))
    }

    pub fn n_events(&self) -> usize {
        self.status.iter().filter(|&&s| s).count()
    }

    /// Number of distinct cluster ids.
    pub fn n_clusters(&self) -> usize {
        let mut ids = self.cluster_id.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Checks the row invariants: finite times, `stop > start >= 0`, finite
    /// covariates, non-overlapping intervals per subject and stratum, and at
    /// most one event per subject and stratum placed on its last interval.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.len() {
            let (a, b) = (self.start[i], self.stop[i]);
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidInput(format!("row {i}: non-finite time")));
            }
            if a < 0.0 {
                return Err(Error::InvalidInput(format!("row {i}: negative start {a}")));
            }
            if b <= a {
                return Err(Error::InvalidInput(format!(
                    "row {i}: stop {b} is not after start {a}"
                )));
            }
            if self.covariates(i).iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("row {i}: non-finite covariate")));
            }
        }

        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_unstable_by(|&i, &j| {
            (self.stratum[i], self.subject_id[i])
                .cmp(&(self.stratum[j], self.subject_id[j]))
                .then(self.start[i].total_cmp(&self.start[j]))
        });
        for group in order.chunk_by(|&i, &j| {
            self.stratum[i] == self.stratum[j] && self.subject_id[i] == self.subject_id[j]
        }) {
            for pair in group.windows(2) {
                if self.start[pair[1]] < self.stop[pair[0]] {
                    return Err(Error::InvalidInput(format!(
                        "subject {} has overlapping intervals in stratum {}",
                        self.subject_id[pair[0]], self.stratum[pair[0]]
                    )));
                }
            }
            let last = *group.last().expect("chunk is non-empty");
            if group[..group.len() - 1].iter().any(|&i| self.status[i]) {
                return Err(Error::InvalidInput(format!(
                    "subject {} has an event before its last interval in stratum {}",
                    self.subject_id[last], self.stratum[last]
                )));
            }
        }
        Ok(())
    }
}
