//! Cox proportional-hazards regression on counting-process data.
//!
//! Risk sets follow the `(start, stop]` convention: a row is at risk at an
//! event time `t` of its stratum iff `start < t <= stop`. This one rule covers
//! delayed entry (left truncation), time-varying covariates split into
//! intervals and pooled landmark datasets stratified by landmark.
//!
//! The partial likelihood is maximized by Newton iterations with step halving.
//! Covariates are centered and scaled internally; all reported quantities are
//! on the caller's covariate scale.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use super::data::CountingProcessData;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ties {
    #[default]
    Efron,
    Breslow,
}

#[derive(Debug, Clone)]
pub struct CoxOptions {
    pub ties: Ties,
    pub max_iterations: usize,
    /// Relative change of the log partial likelihood between iterations.
    pub tolerance: f64,
    /// Bound on the largest absolute score component, evaluated on the
    /// internally standardized covariates.
    pub score_tolerance: f64,
    /// A coefficient beyond this magnitude is reported as monotone likelihood.
    pub divergence_bound: f64,
    /// Compute the cluster-robust sandwich covariance.
    pub cluster_variance: bool,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            ties: Ties::Efron,
            max_iterations: 50,
            tolerance: 1e-9,
            score_tolerance: 1e-6,
            divergence_bound: 15.0,
            cluster_variance: false,
        }
    }
}

impl CoxOptions {
    pub fn robust() -> Self {
        Self {
            cluster_variance: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoxFit {
    pub covariate_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub model_covariance: DMatrix<f64>,
    pub robust_covariance: Option<DMatrix<f64>>,
    pub log_partial_likelihood: f64,
    /// Log partial likelihood at `beta = 0`.
    pub null_log_partial_likelihood: f64,
    pub n_rows: usize,
    pub n_events: usize,
    pub n_clusters: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Largest absolute score component at the returned coefficients
    /// (standardized covariate scale).
    pub max_abs_score: f64,
}

impl CoxFit {
    pub fn standard_errors(&self, robust: bool) -> Result<Vec<f64>> {
        let cov = if robust {
            self.robust_covariance
                .as_ref()
                .ok_or(Error::RobustUnavailable)?
        } else {
            &self.model_covariance
        };
        Ok((0..cov.nrows()).map(|j| cov[(j, j)].max(0.0).sqrt()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardRatio {
    pub hr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub se_log_hr: f64,
}

/// Two-sided standard normal quantile for a confidence `level`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!(
            "confidence level {level} must lie in (0, 1)"
        )));
    }
    Ok(Normal::standard().inverse_cdf(0.5 + level / 2.0))
}

/// Wald hazard ratio and confidence interval for one coefficient.
pub fn hazard_ratio(fit: &CoxFit, index: usize, level: f64, use_robust: bool) -> Result<HazardRatio> {
    if !fit.converged {
        return Err(Error::NotConverged {
            iterations: fit.iterations,
            max_score: fit.max_abs_score,
        });
    }
    if index >= fit.coefficients.len() {
        return Err(Error::CoefficientIndex {
            index,
            len: fit.coefficients.len(),
        });
    }
    let se = fit.standard_errors(use_robust)?[index];
    wald_interval(fit.coefficients[index], se, level)
}

pub fn wald_interval(log_hr: f64, se: f64, level: f64) -> Result<HazardRatio> {
    let z = normal_quantile(level)?;
    Ok(HazardRatio {
        hr: log_hr.exp(),
        ci_low: (log_hr - z * se).exp(),
        ci_high: (log_hr + z * se).exp(),
        se_log_hr: se,
    })
}

/// Smallest standardized Newton step that still counts as movement.
const STEP_TOLERANCE: f64 = 1e-10;

/// Fits a stratified Cox model.
///
/// Non-convergence within `max_iterations` returns `Ok` with
/// `converged = false`; callers that need estimates go through
/// [`hazard_ratio`], which refuses unconverged fits.
pub fn cox_fit(data: &CountingProcessData, options: &CoxOptions) -> Result<CoxFit> {
    let engine = Engine::prepare(data, options.ties)?;
    let p = engine.p;

    let mut beta = vec![0.0; p];
    let mut current = engine.evaluate(&beta);
    let null_loglik = current.loglik;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iterations {
        iterations += 1;
        let step = newton_direction(&current, p)?;

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(&step)
                .map(|(b, s)| b + scale * s)
                .collect();
            let eval = engine.evaluate(&candidate);
            if eval.loglik.is_finite()
                && eval.loglik >= current.loglik - 1e-12 * current.loglik.abs().max(1.0)
            {
                accepted = Some((candidate, eval));
                break;
            }
            scale *= 0.5;
        }

        let Some((candidate, eval)) = accepted else {
            // No ascent possible from here: either at the optimum up to
            // rounding, or stuck.
            converged = current.max_abs_score() < options.score_tolerance;
            break;
        };

        for (j, b) in candidate.iter().enumerate() {
            let user = b / engine.scale[j];
            if user.abs() > options.divergence_bound {
                return Err(Error::MonotoneLikelihood {
                    index: j,
                    value: user,
                    iteration: iterations,
                });
            }
        }

        let change = (eval.loglik - current.loglik).abs() / current.loglik.abs().max(1.0);
        let moved = beta
            .iter()
            .zip(&candidate)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        beta = candidate;
        current = eval;
        // With many events the score cannot reach an absolute bound at
        // working precision; a negligible step settles it instead.
        let settled = current.max_abs_score() < options.score_tolerance || moved < STEP_TOLERANCE;
        if change < options.tolerance && settled {
            converged = true;
            // One more full step: with quadratic convergence this lands on the
            // optimum to rounding, independent of when the criteria tripped.
            // The log-likelihood is flat to rounding here, so judge by the score.
            if let Ok(step) = newton_direction(&current, p) {
                let candidate: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + s).collect();
                let eval = engine.evaluate(&candidate);
                if eval.loglik.is_finite() && eval.max_abs_score() <= current.max_abs_score() {
                    beta = candidate;
                    current = eval;
                }
            }
            break;
        }
    }

    let info = DMatrix::from_row_slice(p, p, &current.info);
    let info_inv = info
        .clone()
        .cholesky()
        .ok_or(Error::SingularInformation)?
        .inverse();

    let robust_std = if options.cluster_variance {
        let residuals = engine.score_residuals(&beta);
        Some(sandwich(&info_inv, &residuals, p, |i| data.cluster_id(i)))
    } else {
        None
    };

    let unscale = |m: &DMatrix<f64>| {
        DMatrix::from_fn(p, p, |i, j| m[(i, j)] / (engine.scale[i] * engine.scale[j]))
    };

    Ok(CoxFit {
        covariate_names: data.covariate_names().to_vec(),
        coefficients: beta.iter().zip(&engine.scale).map(|(b, s)| b / s).collect(),
        model_covariance: unscale(&info_inv),
        robust_covariance: robust_std.as_ref().map(unscale),
        log_partial_likelihood: current.loglik,
        null_log_partial_likelihood: null_loglik,
        n_rows: data.len(),
        n_events: engine.n_events,
        n_clusters: data.n_clusters(),
        iterations,
        converged,
        max_abs_score: current.max_abs_score(),
    })
}

/// Log partial likelihood of `data` at user-scale coefficients `beta`.
pub fn log_partial_likelihood(data: &CountingProcessData, beta: &[f64], ties: Ties) -> Result<f64> {
    let engine = Engine::prepare(data, ties)?;
    if beta.len() != engine.p {
        return Err(Error::InvalidInput(format!(
            "expected {} coefficients, got {}",
            engine.p,
            beta.len()
        )));
    }
    let internal: Vec<f64> = beta.iter().zip(&engine.scale).map(|(b, s)| b * s).collect();
    Ok(engine.evaluate(&internal).loglik)
}

/// Per-row score residuals at user-scale coefficients `beta`, one row per
/// dataset row. They sum to the score vector.
pub fn score_residuals(data: &CountingProcessData, beta: &[f64], ties: Ties) -> Result<Vec<Vec<f64>>> {
    let engine = Engine::prepare(data, ties)?;
    let p = engine.p;
    let internal: Vec<f64> = beta.iter().zip(&engine.scale).map(|(b, s)| b * s).collect();
    let flat = engine.score_residuals(&internal);
    Ok(flat
        .chunks(p.max(1))
        .map(|r| r.iter().zip(&engine.scale).map(|(v, s)| v * s).collect())
        .collect())
}

/// Risk set at each event time as `(stratum, time, sorted row indices)`,
/// strata in increasing order and times decreasing within a stratum.
pub fn risk_sets(data: &CountingProcessData) -> Result<Vec<(u32, f64, Vec<usize>)>> {
    let engine = Engine::prepare(data, Ties::Breslow)?;
    let mut out = Vec::new();
    for stratum in &engine.strata {
        let mut members = std::collections::BTreeSet::new();
        let (mut ia, mut ir) = (stratum.rows.start, 0);
        for &t in &stratum.event_times {
            while ia < stratum.rows.end && engine.stop[ia] >= t {
                members.insert(engine.orig[ia] as usize);
                ia += 1;
            }
            while ir < stratum.by_start.len() && engine.start[stratum.by_start[ir] as usize] >= t {
                members.remove(&(engine.orig[stratum.by_start[ir] as usize] as usize));
                ir += 1;
            }
            out.push((stratum.key, t, members.iter().copied().collect()));
        }
    }
    Ok(out)
}

fn newton_direction(eval: &Evaluation, p: usize) -> Result<Vec<f64>> {
    let info = DMatrix::from_row_slice(p, p, &eval.info);
    let chol = info.cholesky().ok_or(Error::SingularInformation)?;
    let step = chol.solve(&DVector::from_column_slice(&eval.score));
    Ok(step.iter().copied().collect())
}

fn sandwich(
    info_inv: &DMatrix<f64>,
    residuals: &[f64],
    p: usize,
    cluster_of: impl Fn(usize) -> u64,
) -> DMatrix<f64> {
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut sums: Vec<f64> = Vec::new();
    for (i, r) in residuals.chunks(p).enumerate() {
        let next = index.len();
        let c = *index.entry(cluster_of(i)).or_insert(next);
        if c == next {
            sums.extend(std::iter::repeat_n(0.0, p));
        }
        for (acc, v) in sums[c * p..(c + 1) * p].iter_mut().zip(r) {
            *acc += v;
        }
    }
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for r in sums.chunks(p) {
        for a in 0..p {
            for b in 0..p {
                meat[(a, b)] += r[a] * r[b];
            }
        }
    }
    info_inv * meat * info_inv
}

struct Evaluation {
    loglik: f64,
    score: Vec<f64>,
    info: Vec<f64>,
}

impl Evaluation {
    fn max_abs_score(&self) -> f64 {
        self.score.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

struct Stratum {
    key: u32,
    /// Rows of the stratum in the engine's sweep order (decreasing stop).
    rows: std::ops::Range<usize>,
    /// Sweep positions ordered by decreasing start time.
    by_start: Vec<u32>,
    /// Distinct event times, decreasing.
    event_times: Vec<f64>,
}

/// Rows that can enter a risk set, stored stratum by stratum in decreasing
/// stop order so the likelihood sweep adds rows sequentially.
struct Engine {
    n: usize,
    p: usize,
    n_events: usize,
    ties: Ties,
    /// Original dataset index of each sweep position.
    orig: Vec<u32>,
    x: Vec<f64>,
    /// Standard deviation of each covariate; internal coefficients are
    /// `user * scale`.
    scale: Vec<f64>,
    start: Vec<f64>,
    stop: Vec<f64>,
    status: Vec<bool>,
    strata: Vec<Stratum>,
}

/// Neumaier compensated sum. The log partial likelihood of a large dataset
/// is a sum of millions of terms whose plain rounding error swamps the
/// changes Newton steps make near the optimum.
#[derive(Debug, Default, Clone, Copy)]
struct Compensated {
    sum: f64,
    correction: f64,
}

impl Compensated {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.correction += (self.sum - t) + v;
        } else {
            self.correction += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.correction
    }
}

/// Running sums over the current risk set.
struct RiskSums {
    s0: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl RiskSums {
    fn new(p: usize) -> Self {
        Self {
            s0: 0.0,
            s1: vec![0.0; p],
            s2: vec![0.0; p * p],
        }
    }

    fn clear(&mut self) {
        self.s0 = 0.0;
        self.s1.iter_mut().for_each(|v| *v = 0.0);
        self.s2.iter_mut().for_each(|v| *v = 0.0);
    }

    fn add(&mut self, w: f64, x: &[f64], sign: f64, with_info: bool) {
        let p = x.len();
        let ws = sign * w;
        self.s0 += ws;
        for a in 0..p {
            let wa = ws * x[a];
            self.s1[a] += wa;
            if with_info {
                for b in 0..=a {
                    self.s2[a * p + b] += wa * x[b];
                }
            }
        }
    }
}

impl Engine {
    fn prepare(data: &CountingProcessData, ties: Ties) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidInput("empty dataset".into()));
        }
        let p = data.n_covariates();
        if p == 0 {
            return Err(Error::InvalidInput("model has no covariates".into()));
        }
        if data.len() > u32::MAX as usize {
            return Err(Error::InvalidInput("dataset too large".into()));
        }
        data.validate()?;
        let n = data.len();
        let n_events = data.n_events();
        if n_events == 0 {
            return Err(Error::NoEvents);
        }

        let mut mean = vec![0.0; p];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(data.covariates(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; p];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(data.covariates(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut scale = Vec::with_capacity(p);
        for (j, s) in var.iter().enumerate() {
            let sd = (s / n as f64).sqrt();
            if !(sd > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "covariate `{}` is constant",
                    data.covariate_names()[j]
                )));
            }
            scale.push(sd);
        }

        // Sweep order: stratum, then decreasing stop, then original index.
        struct Key {
            stratum: u32,
            index: u32,
            stop: f64,
            start: f64,
            status: bool,
        }
        let mut order: Vec<Key> = (0..n)
            .map(|i| Key {
                stratum: data.stratum(i),
                index: i as u32,
                stop: data.stop(i),
                start: data.start(i),
                status: data.status(i),
            })
            .collect();
        order.sort_unstable_by(|a, b| {
            a.stratum
                .cmp(&b.stratum)
                .then(b.stop.total_cmp(&a.stop))
                .then(a.index.cmp(&b.index))
        });
        let mut engine = Self {
            n,
            p,
            n_events,
            ties,
            orig: Vec::with_capacity(n),
            x: Vec::with_capacity(n * p),
            scale,
            start: Vec::with_capacity(n),
            stop: Vec::with_capacity(n),
            status: Vec::with_capacity(n),
            strata: Vec::new(),
        };
        for group in order.chunk_by(|a, b| a.stratum == b.stratum) {
            let mut event_times: Vec<f64> =
                group.iter().filter(|r| r.status).map(|r| r.stop).collect();
            if event_times.is_empty() {
                continue;
            }
            event_times.dedup();
            let first = engine.orig.len();
            let mut j = 0;
            for r in group {
                // Rows with no event time inside (start, stop] never enter a
                // risk set; leaving them out avoids add-then-remove cancellation.
                // `event_times[j]` is the largest event time <= stop.
                while j < event_times.len() && event_times[j] > r.stop {
                    j += 1;
                }
                if j == event_times.len() || event_times[j] <= r.start {
                    continue;
                }
                engine.orig.push(r.index);
                engine.start.push(r.start);
                engine.stop.push(r.stop);
                engine.status.push(r.status);
                let cov = data.covariates(r.index as usize);
                for ((v, m), s) in cov.iter().zip(&mean).zip(&engine.scale) {
                    engine.x.push((v - m) / s);
                }
            }
            let rows = first..engine.orig.len();
            let mut by_start: Vec<(f64, u32)> = rows
                .clone()
                .map(|k| (engine.start[k], k as u32))
                .collect();
            by_start.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            engine.strata.push(Stratum {
                key: group[0].stratum,
                rows,
                by_start: by_start.into_iter().map(|(_, k)| k).collect(),
                event_times,
            });
        }
        Ok(engine)
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.x[k * self.p..(k + 1) * self.p]
    }

    /// Risk weights `exp(x beta)` and linear predictors per sweep position.
    fn weights(&self, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let eta: Vec<f64> = self
            .x
            .chunks_exact(self.p)
            .map(|x| x.iter().zip(beta).map(|(x, b)| x * b).sum())
            .collect();
        let w = eta.iter().map(|e: &f64| e.exp()).collect();
        (eta, w)
    }

    /// Efron (or Breslow) down-weighting fraction for the `j`-th of `d` tied events.
    fn tie_fraction(&self, j: usize, d: usize) -> f64 {
        match self.ties {
            Ties::Efron => j as f64 / d as f64,
            Ties::Breslow => 0.0,
        }
    }

    /// Walks the event times of `stratum` in decreasing order, keeping
    /// `risk` equal to the sums over the risk set and handing the tied event
    /// rows at each time to `visit`.
    fn sweep(
        &self,
        stratum: &Stratum,
        w: &[f64],
        with_info: bool,
        mut visit: impl FnMut(usize, f64, &RiskSums, &[usize]),
    ) {
        let mut risk = RiskSums::new(self.p);
        let mut tied: Vec<usize> = Vec::new();
        let (mut ia, mut ir) = (stratum.rows.start, 0);
        for (k, &t) in stratum.event_times.iter().enumerate() {
            tied.clear();
            while ia < stratum.rows.end && self.stop[ia] >= t {
                risk.add(w[ia], self.row(ia), 1.0, with_info);
                if self.status[ia] && self.stop[ia] == t {
                    tied.push(ia);
                }
                ia += 1;
            }
            while ir < stratum.by_start.len() && self.start[stratum.by_start[ir] as usize] >= t {
                let i = stratum.by_start[ir] as usize;
                risk.add(w[i], self.row(i), -1.0, with_info);
                ir += 1;
            }
            visit(k, t, &risk, &tied);
        }
    }

    fn evaluate(&self, beta: &[f64]) -> Evaluation {
        let p = self.p;
        let (eta, w) = self.weights(beta);

        let mut loglik = Compensated::default();
        let mut score = vec![0.0; p];
        let mut info = vec![0.0; p * p];
        let mut dead = RiskSums::new(p);
        let mut d1 = vec![0.0; p];

        for stratum in &self.strata {
            self.sweep(stratum, &w, true, |_, _, risk, tied| {
                dead.clear();
                for &i in tied {
                    dead.add(w[i], self.row(i), 1.0, true);
                    loglik.add(eta[i]);
                    for (s, x) in score.iter_mut().zip(self.row(i)) {
                        *s += x;
                    }
                }
                let d = tied.len();
                for j in 0..d {
                    let f = self.tie_fraction(j, d);
                    let d0 = risk.s0 - f * dead.s0;
                    for a in 0..p {
                        d1[a] = risk.s1[a] - f * dead.s1[a];
                    }
                    loglik.add(-d0.ln());
                    for a in 0..p {
                        score[a] -= d1[a] / d0;
                        for b in 0..=a {
                            let d2 = risk.s2[a * p + b] - f * dead.s2[a * p + b];
                            info[a * p + b] += d2 / d0 - d1[a] * d1[b] / (d0 * d0);
                        }
                    }
                }
            });
        }
        for a in 0..p {
            for b in 0..a {
                info[b * p + a] = info[a * p + b];
            }
        }
        Evaluation {
            loglik: loglik.value(),
            score,
            info,
        }
    }

    /// Score residuals on the internal scale, row-major `n x p` in the
    /// original row order. Rows never at risk get zeros.
    fn score_residuals(&self, beta: &[f64]) -> Vec<f64> {
        let p = self.p;
        let (_, w) = self.weights(beta);
        let mut resid = vec![0.0; self.orig.len() * p];
        let mut dead = RiskSums::new(p);
        let mut d1 = vec![0.0; p];
        let mut xbar_mean = vec![0.0; p];
        let mut b_corr = vec![0.0; p];

        for stratum in &self.strata {
            let m = stratum.event_times.len();
            // Per event time (in decreasing order): sum_j 1/d0_j and sum_j xbar_j/d0_j.
            let mut a_t = vec![0.0; m];
            let mut b_t = vec![0.0; m * p];
            self.sweep(stratum, &w, false, |k, _, risk, tied| {
                dead.clear();
                for &i in tied {
                    dead.add(w[i], self.row(i), 1.0, false);
                }
                let d = tied.len();
                let mut a_corr = 0.0;
                xbar_mean.iter_mut().for_each(|v| *v = 0.0);
                b_corr.iter_mut().for_each(|v| *v = 0.0);
                for j in 0..d {
                    let f = self.tie_fraction(j, d);
                    let d0 = risk.s0 - f * dead.s0;
                    a_t[k] += 1.0 / d0;
                    a_corr += f / d0;
                    for a in 0..p {
                        d1[a] = (risk.s1[a] - f * dead.s1[a]) / d0;
                        b_t[k * p + a] += d1[a] / d0;
                        b_corr[a] += f * d1[a] / d0;
                        xbar_mean[a] += d1[a] / d as f64;
                    }
                }
                // Event part plus the Efron correction for the tied rows,
                // whose compensator weight at their own time is (1 - f_j).
                for &i in tied {
                    let x = self.row(i);
                    let r = &mut resid[i * p..(i + 1) * p];
                    for a in 0..p {
                        r[a] += x[a] - xbar_mean[a] + w[i] * (x[a] * a_corr - b_corr[a]);
                    }
                }
            });

            // Cumulative sums over event times in increasing order.
            let mut cum_a = vec![0.0; m + 1];
            let mut cum_b = vec![0.0; (m + 1) * p];
            for q in 0..m {
                let k = m - 1 - q;
                cum_a[q + 1] = cum_a[q] + a_t[k];
                for a in 0..p {
                    cum_b[(q + 1) * p + a] = cum_b[q * p + a] + b_t[k * p + a];
                }
            }
            let ascending: Vec<f64> = stratum.event_times.iter().rev().copied().collect();
            for i in stratum.rows.clone() {
                let hi = ascending.partition_point(|&t| t <= self.stop[i]);
                let lo = ascending.partition_point(|&t| t <= self.start[i]);
                let da = cum_a[hi] - cum_a[lo];
                let x = &self.x[i * p..(i + 1) * p];
                let r = &mut resid[i * p..(i + 1) * p];
                for a in 0..p {
                    let db = cum_b[hi * p + a] - cum_b[lo * p + a];
                    r[a] -= w[i] * (x[a] * da - db);
                }
            }
        }

        let mut out = vec![0.0; self.n * p];
        for (k, &i) in self.orig.iter().enumerate() {
            let i = i as usize;
            out[i * p..(i + 1) * p].copy_from_slice(&resid[k * p..(k + 1) * p]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survcore::CountingProcessRow;

    fn dataset(rows: &[(f64, f64, bool, f64)]) -> CountingProcessData {
        let rows: Vec<_> = rows
            .iter()
            .enumerate()
            .map(|(i, &(a, b, d, x))| CountingProcessRow::new(i as u64, a, b, d, vec![x]))
            .collect();
        CountingProcessData::from_rows(&rows).unwrap()
    }

    #[test]
    fn three_subject_closed_form() {
        // Score equation 1 - 2u/(2u+1) - u/(1+u) = 0 reduces to 2u^2 = 1.
        let data = dataset(&[(0.0, 1.0, true, 1.0), (0.0, 2.0, true, 0.0), (0.0, 3.0, false, 1.0)]);
        let fit = cox_fit(&data, &CoxOptions::default()).unwrap();
        assert!(fit.converged);
        let expected = -0.5 * 2f64.ln();
        assert!((fit.coefficients[0] - expected).abs() < 1e-9);

        // Grid search over [-5, 5] as an independent check.
        let loglik = |b: f64| b - (2.0 * b.exp() + 1.0).ln() - (1.0 + b.exp()).ln();
        let best = (0..=100_000)
            .map(|i| -5.0 + 1e-4 * i as f64)
            .max_by(|a, b| loglik(*a).total_cmp(&loglik(*b)))
            .unwrap();
        assert!((best - expected).abs() < 1e-4);
        assert!((fit.log_partial_likelihood - loglik(expected)).abs() < 1e-10);
    }

    #[test]
    fn symmetric_groups_give_null_effect() {
        let data = dataset(&[
            (0.0, 1.0, true, 0.0),
            (0.0, 1.0, true, 1.0),
            (0.0, 2.0, true, 0.0),
            (0.0, 2.0, true, 1.0),
            (0.0, 3.0, false, 0.0),
            (0.0, 3.0, false, 1.0),
        ]);
        for ties in [Ties::Efron, Ties::Breslow] {
            let fit = cox_fit(&data, &CoxOptions { ties, ..Default::default() }).unwrap();
            assert!(fit.coefficients[0].abs() < 1e-12);
            let hr = hazard_ratio(&fit, 0, 0.95, false).unwrap();
            assert!((hr.hr - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn efron_tied_pair_matches_hand_formula() {
        // Two tied events at t = 1 (x = 1 and x = 0) plus one censored x = 1 at t = 2.
        // Efron: beta - ln(2u + 1) - ln((2u + 1) - (u + 1)/2).
        let data = dataset(&[(0.0, 1.0, true, 1.0), (0.0, 1.0, true, 0.0), (0.0, 2.0, false, 1.0)]);
        let beta = 0.3;
        let u = f64::exp(beta);
        let expected = beta - (2.0 * u + 1.0).ln() - ((2.0 * u + 1.0) - 0.5 * (u + 1.0)).ln();
        let got = log_partial_likelihood(&data, &[beta], Ties::Efron).unwrap();
        assert!((got - expected).abs() < 1e-12);
        let breslow = beta - 2.0 * (2.0 * u + 1.0).ln();
        let got = log_partial_likelihood(&data, &[beta], Ties::Breslow).unwrap();
        assert!((got - breslow).abs() < 1e-12);
    }

    #[test]
    fn residuals_sum_to_numerical_score() {
        let data = dataset(&[
            (0.0, 1.0, true, 0.3),
            (0.5, 1.0, true, -1.0),
            (0.0, 2.0, false, 0.7),
            (1.2, 2.5, true, 2.0),
            (0.0, 2.5, true, -0.4),
            (0.0, 4.0, false, 1.1),
        ]);
        for ties in [Ties::Efron, Ties::Breslow] {
            let beta = 0.4;
            let resid = score_residuals(&data, &[beta], ties).unwrap();
            let total: f64 = resid.iter().map(|r| r[0]).sum();
            let h = 1e-6;
            let numeric = (log_partial_likelihood(&data, &[beta + h], ties).unwrap()
                - log_partial_likelihood(&data, &[beta - h], ties).unwrap())
                / (2.0 * h);
            assert!((total - numeric).abs() < 1e-7, "{ties:?}: {total} vs {numeric}");
        }
    }

    #[test]
    fn unconverged_fit_is_flagged_and_refused() {
        let data = dataset(&[(0.0, 1.0, true, 1.0), (0.0, 2.0, true, 0.0), (0.0, 3.0, false, 1.0)]);
        let opts = CoxOptions {
            max_iterations: 1,
            ..Default::default()
        };
        let fit = cox_fit(&data, &opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
        assert!(matches!(
            hazard_ratio(&fit, 0, 0.95, false),
            Err(Error::NotConverged { .. })
        ));
    }

    #[test]
    fn separated_data_reports_monotone_likelihood() {
        let data = dataset(&[
            (0.0, 1.0, true, 1.0),
            (0.0, 2.0, true, 1.0),
            (0.0, 3.0, true, 0.0),
            (0.0, 4.0, false, 0.0),
        ]);
        assert!(matches!(
            cox_fit(&data, &CoxOptions::default()),
            Err(Error::MonotoneLikelihood { index: 0, .. })
        ));
    }

    #[test]
    fn input_errors() {
        let censored = dataset(&[(0.0, 1.0, false, 1.0), (0.0, 2.0, false, 0.0)]);
        assert!(matches!(cox_fit(&censored, &CoxOptions::default()), Err(Error::NoEvents)));
        let empty = CountingProcessData::new(vec!["x".into()]);
        assert!(cox_fit(&empty, &CoxOptions::default()).is_err());
        let backwards = dataset(&[(2.0, 1.0, true, 1.0), (0.0, 2.0, true, 0.0)]);
        assert!(cox_fit(&backwards, &CoxOptions::default()).is_err());
        let constant = dataset(&[(0.0, 1.0, true, 1.0), (0.0, 2.0, true, 1.0)]);
        assert!(cox_fit(&constant, &CoxOptions::default()).is_err());

        let mut overlap = CountingProcessData::new(vec!["x".into()]);
        overlap.push(7, 7, 0.0, 2.0, false, 0, &[0.0]).unwrap();
        overlap.push(7, 7, 1.0, 3.0, true, 0, &[1.0]).unwrap();
        overlap.push(8, 8, 0.0, 3.0, true, 0, &[0.0]).unwrap();
        assert!(matches!(overlap.validate(), Err(Error::InvalidInput(_))));

        let mut early_event = CountingProcessData::new(vec!["x".into()]);
        early_event.push(7, 7, 0.0, 1.0, true, 0, &[0.0]).unwrap();
        early_event.push(7, 7, 1.0, 3.0, false, 0, &[1.0]).unwrap();
        assert!(early_event.validate().is_err());
    }

    #[test]
    fn wald_examples() {
        let null = wald_interval(0.0, 0.1, 0.95).unwrap();
        assert!((null.ci_low - 0.8220).abs() < 5e-4);
        assert!((null.ci_high - 1.2165).abs() < 5e-4);
        assert!((normal_quantile(0.95).unwrap() - 1.959964).abs() < 1e-6);

        // exp(0.7 -/+ 1.959964 * 0.2), evaluated directly.
        let hr = wald_interval(0.7, 0.2, 0.95).unwrap();
        assert!((hr.hr - 2.013753).abs() < 1e-6);
        assert!((hr.ci_low - 1.360711).abs() < 1e-6);
        assert!((hr.ci_high - 2.980207).abs() < 1e-6);
    }

    #[test]
    fn robust_request_without_robust_fit_errors() {
        let data = dataset(&[(0.0, 1.0, true, 1.0), (0.0, 2.0, true, 0.0), (0.0, 3.0, false, 1.0)]);
        let fit = cox_fit(&data, &CoxOptions::default()).unwrap();
        assert!(matches!(hazard_ratio(&fit, 0, 0.95, true), Err(Error::RobustUnavailable)));
        assert!(matches!(
            hazard_ratio(&fit, 3, 0.95, false),
            Err(Error::CoefficientIndex { .. })
        ));
    }
}
