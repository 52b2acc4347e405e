//! Independent reference computations used by the integration tests.
//!
//! Nothing here calls into the engine's likelihood code: risk sets are found
//! by scanning every row at every event time.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use survbias::survcore::CountingProcessRow;

/// Efron (or Breslow when `efron` is false) log partial likelihood by direct
/// enumeration of risk sets.
pub fn brute_loglik(rows: &[CountingProcessRow], beta: &[f64], efron: bool) -> f64 {
    let eta = |r: &CountingProcessRow| -> f64 {
        r.covariates.iter().zip(beta).map(|(x, b)| x * b).sum()
    };
    let mut keys: Vec<(u32, f64)> = rows
        .iter()
        .filter(|r| r.status)
        .map(|r| (r.stratum, r.stop))
        .collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup();

    let mut ll = 0.0;
    for (s, t) in keys {
        let risk: f64 = rows
            .iter()
            .filter(|r| r.stratum == s && r.start < t && t <= r.stop)
            .map(|r| eta(r).exp())
            .sum();
        let dead: Vec<&CountingProcessRow> = rows
            .iter()
            .filter(|r| r.stratum == s && r.status && r.stop == t)
            .collect();
        let dead_sum: f64 = dead.iter().map(|r| eta(r).exp()).sum();
        let d = dead.len() as f64;
        for (j, r) in dead.iter().enumerate() {
            let f = if efron { j as f64 / d } else { 0.0 };
            ll += eta(r) - (risk - f * dead_sum).ln();
        }
    }
    ll
}

/// Maximizer of `f` over the box `[-bound, bound]^p`: a grid search followed by
/// compass-search refinement. Returns `None` when the best point sits on the
/// boundary of the box or the maximum is not strict.
pub fn brute_maximize(p: usize, bound: f64, f: impl Fn(&[f64]) -> f64) -> Option<Vec<f64>> {
    let grid_step = 0.1;
    let steps = (2.0 * bound / grid_step).round() as usize;
    let mut best = vec![0.0; p];
    let mut best_val = f64::NEG_INFINITY;
    let mut idx = vec![0usize; p];
    loop {
        let point: Vec<f64> = idx.iter().map(|&i| -bound + grid_step * i as f64).collect();
        let v = f(&point);
        if v > best_val {
            best_val = v;
            best = point;
        }
        let mut k = 0;
        while k < p {
            idx[k] += 1;
            if idx[k] <= steps {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == p {
            break;
        }
    }

    let mut step = grid_step;
    while step > 1e-10 {
        let mut improved = false;
        for j in 0..p {
            for dir in [1.0, -1.0] {
                let mut cand = best.clone();
                cand[j] += dir * step;
                let v = f(&cand);
                if v > best_val {
                    best_val = v;
                    best = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    if best.iter().any(|b| b.abs() > bound - 0.5) {
        return None;
    }
    // Require a strict maximum along every axis; flat directions mean the
    // coefficient is not identified.
    for j in 0..p {
        for dir in [0.5, -0.5] {
            let mut probe = best.clone();
            probe[j] += dir;
            if best_val - f(&probe) < 1e-6 {
                return None;
            }
        }
    }
    Some(best)
}

/// Random small dataset with continuous times, optional delayed entry and
/// right censoring. Subject ids are row indices.
pub fn random_dataset(rng: &mut ChaCha8Rng, max_n: usize, p: usize) -> Vec<CountingProcessRow> {
    let n = rng.random_range(3..=max_n);
    (0..n)
        .map(|i| {
            let start = if rng.random_bool(0.4) {
                rng.random_range(0.0..1.5)
            } else {
                0.0
            };
            let dur: f64 = Exp1.sample(rng);
            let status = rng.random_bool(0.75);
            let x: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
            CountingProcessRow::new(i as u64, start, start + dur + 1e-3, status, x)
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Outcome of comparing the engine with the brute-force maximizer on random datasets.
pub struct OracleComparison {
    pub compared: usize,
    pub skipped: usize,
    pub max_abs_diff: f64,
}

pub fn compare_with_brute_force(seed: u64, target: usize) -> OracleComparison {
    use survbias::survcore::{cox_fit, CountingProcessData, CoxOptions};

    let mut rng = rng(seed);
    let mut compared = 0;
    let mut skipped = 0;
    let mut max_abs_diff: f64 = 0.0;
    while compared < target {
        let p = rng.random_range(1..=2);
        let rows = random_dataset(&mut rng, 8, p);
        if !rows.iter().any(|r| r.status) {
            skipped += 1;
            continue;
        }
        let Some(oracle) = brute_maximize(p, 5.0, |b| brute_loglik(&rows, b, true)) else {
            skipped += 1;
            continue;
        };
        let data = CountingProcessData::from_rows(&rows).unwrap();
        let fit = cox_fit(&data, &CoxOptions::default())
            .unwrap_or_else(|e| panic!("engine failed on {rows:?}: {e}"));
        assert!(fit.converged, "not converged on {rows:?}");
        for (a, b) in fit.coefficients.iter().zip(&oracle) {
            max_abs_diff = max_abs_diff.max((a - b).abs());
        }
        compared += 1;
    }
    OracleComparison {
        compared,
        skipped,
        max_abs_diff,
    }
}
