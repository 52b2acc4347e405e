//! Restricted cubic splines in Harrell's truncated-power parameterization.
//!
//! With knots `t_1 < ... < t_k` the basis has `k - 1` columns: `x` itself and,
//! for `j = 1..=k-2`,
//!
//! ```text
//! [ (x - t_j)+^3
//!   - (x - t_{k-1})+^3 (t_k - t_j) / (t_k - t_{k-1})
//!   + (x - t_k)+^3 (t_{k-1} - t_j) / (t_k - t_{k-1}) ] / (t_k - t_1)^2
//! ```
//!
//! The cubic and quadratic terms cancel beyond `t_k`, so every column is
//! linear outside the boundary knots. Dividing by `(t_k - t_1)^2` puts the
//! nonlinear columns on the scale of `x`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SplineSpec {
    knots: Vec<f64>,
}

impl SplineSpec {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "restricted cubic spline needs at least 3 knots, got {}",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidInput("knots must be finite".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "knots must be strictly increasing: {knots:?}"
            )));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn basis_dimension(&self) -> usize {
        self.knots.len() - 1
    }

    /// Basis row for a single value.
    pub fn evaluate(&self, x: f64) -> Vec<f64> {
        let t = &self.knots;
        let k = t.len();
        let (tk, tk1) = (t[k - 1], t[k - 2]);
        let norm = (tk - t[0]).powi(2);
        let cube = |u: f64| if u > 0.0 { u * u * u } else { 0.0 };
        let mut row = Vec::with_capacity(k - 1);
        row.push(x);
        for &tj in &t[..k - 2] {
            let v = cube(x - tj) - cube(x - tk1) * (tk - tj) / (tk - tk1)
                + cube(x - tk) * (tk1 - tj) / (tk - tk1);
            row.push(v / norm);
        }
        row
    }
}

/// Restricted cubic spline design matrix, one row per value.
pub fn rcs_basis(values: &[f64], spec: &SplineSpec) -> Result<Vec<Vec<f64>>> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("value {i} is not finite")));
    }
    Ok(values.iter().map(|&x| spec.evaluate(x)).collect())
}

/// Quantile levels for `k` knots (Harrell's defaults for 3 to 7 knots,
/// equally spaced between 0.05 and 0.95 otherwise).
pub fn knot_quantiles(k: usize) -> Result<Vec<f64>> {
    Ok(match k {
        0..=2 => {
            return Err(Error::InvalidInput(format!(
                "restricted cubic spline needs at least 3 knots, got {k}"
            )))
        }
        3 => vec![0.10, 0.50, 0.90],
        4 => vec![0.05, 0.35, 0.65, 0.95],
        5 => vec![0.05, 0.275, 0.50, 0.725, 0.95],
        6 => vec![0.05, 0.23, 0.41, 0.59, 0.77, 0.95],
        7 => vec![0.025, 0.1833, 0.3417, 0.50, 0.6583, 0.8167, 0.975],
        _ => (0..k)
            .map(|i| 0.05 + 0.90 * i as f64 / (k - 1) as f64)
            .collect(),
    })
}

/// Knots at empirical quantiles of `values`.
///
/// Quantiles use linear interpolation between order statistics. A knot that
/// collides with its predecessor is moved up to the next distinct data value.
pub fn default_knots(values: &[f64], k: usize) -> Result<SplineSpec> {
    let probs = knot_quantiles(k)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("knot placement values must be finite".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::InvalidInput(format!(
            "{k} knots need at least {k} distinct values, got {}",
            distinct.len()
        )));
    }

    let mut knots: Vec<f64> = probs.iter().map(|&q| quantile_sorted(&sorted, q)).collect();
    for i in 1..k {
        if knots[i] <= knots[i - 1] {
            let prev = knots[i - 1];
            let next = distinct.partition_point(|&v| v <= prev);
            knots[i] = *distinct.get(next).ok_or_else(|| {
                Error::InvalidInput("cannot place distinct knots in the value range".into())
            })?;
        }
    }
    SplineSpec::new(knots)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
