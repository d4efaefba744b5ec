use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{arg_err, Result};
use crate::simulate::rng_for;

const BOOTSTRAP_REPS: usize = 1000;

/// Median error per sample size with a log-log slope and a bootstrap band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub n_grid: Vec<usize>,
    pub medians: Vec<f64>,
    pub counts: Vec<usize>,
    pub slope: f64,
    /// 2.5% and 97.5% bootstrap quantiles of the slope.
    pub band: (f64, f64),
    /// Samples that errored and were left out.
    pub failures: usize,
}

pub fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => s[n / 2],
        _ => 0.5 * (s[n / 2 - 1] + s[n / 2]),
    }
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Fits `log(median) ~ slope * log(N)` from per-size samples.
pub fn fit_rate(n_grid: &[usize], samples: &[Vec<f64>], failures: usize, boot_seed: u64) -> Result<RateFit> {
    if n_grid.len() < 2 || n_grid.len() != samples.len() {
        return arg_err("need at least two grid points with one sample list each");
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return arg_err("grid must be strictly increasing");
    }
    if samples.iter().any(|s| s.is_empty()) {
        return arg_err("every grid point needs at least one successful sample");
    }
    let medians: Vec<f64> = samples.iter().map(|s| median(s)).collect();
    if medians.iter().any(|m| !(*m > 0.0)) {
        return arg_err("medians must be positive for a log-log fit");
    }
    let lx: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
    let slope = ols_slope(&lx, &ly);

    let mut rng = rng_for(boot_seed, 0);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_REPS);
    let mut scratch = Vec::new();
    'rep: for _ in 0..BOOTSTRAP_REPS {
        let mut ly_b = Vec::with_capacity(samples.len());
        for s in samples {
            scratch.clear();
            scratch.extend((0..s.len()).map(|_| s[rng.random_range(0..s.len())]));
            let m = median(&scratch);
            if !(m > 0.0) {
                continue 'rep;
            }
            ly_b.push(m.ln());
        }
        slopes.push(ols_slope(&lx, &ly_b));
    }
    slopes.sort_by(|a, b| a.total_cmp(b));
    let band =
        if slopes.is_empty() { (f64::NAN, f64::NAN) } else { (quantile(&slopes, 0.025), quantile(&slopes, 0.975)) };
    Ok(RateFit {
        n_grid: n_grid.to_vec(),
        medians,
        counts: samples.iter().map(Vec::len).collect(),
        slope,
        band,
        failures,
    })
}

/// Evaluates `metric(N, seed)` over the grid and fits the rate.
///
/// Runs in parallel; results are gathered in grid-then-seed order so the fit
/// does not depend on scheduling. Failed evaluations are counted and skipped.
pub fn rate_experiment<F>(n_grid: &[usize], seeds: &[u64], metric: F) -> Result<RateFit>
where
    F: Fn(usize, u64) -> Result<f64> + Sync,
{
    if n_grid.len() < 4 {
        return arg_err("rate experiments need at least 4 grid points");
    }
    if let (Some(&lo), Some(&hi)) = (n_grid.first(), n_grid.last()) {
        if (hi as f64) < 10.0 * lo as f64 {
            return arg_err("grid must span at least one decade");
        }
    }
    if seeds.is_empty() {
        return arg_err("need at least one seed");
    }
    let jobs: Vec<(usize, u64)> = n_grid.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let values: Vec<Result<f64>> = jobs.par_iter().map(|&(n, s)| metric(n, s)).collect();
    let mut samples = vec![Vec::new(); n_grid.len()];
    let mut failures = 0;
    for (k, v) in values.into_iter().enumerate() {
        match v {
            Ok(x) if x.is_finite() => samples[k / seeds.len()].push(x),
            Ok(_) | Err(_) => failures += 1,
        }
    }
    fit_rate(n_grid, &samples, failures, seeds[0])
}

/// Measured statistic against a theoretical envelope over a sample-size grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeFit {
    pub n_bar: Vec<usize>,
    pub measured: Vec<f64>,
    pub envelope: Vec<f64>,
    pub ratio: Vec<f64>,
    /// `max(ratio) / min(ratio)`.
    pub spread: f64,
    /// Slope of `log(ratio)` against `log(N)`.
    pub trend: f64,
}

impl EnvelopeFit {
    pub fn new(n_bar: Vec<usize>, measured: Vec<f64>, envelope: Vec<f64>) -> Self {
        let ratio: Vec<f64> = measured.iter().zip(&envelope).map(|(m, e)| m / e).collect();
        let max = ratio.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ratio.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = max / min;
        let lx: Vec<f64> = n_bar.iter().map(|&n| (n as f64).ln()).collect();
        let trend = if ratio.iter().all(|r| *r > 0.0) {
            ols_slope(&lx, &ratio.iter().map(|r| r.ln()).collect::<Vec<_>>())
        } else {
            f64::NAN
        };
        Self { n_bar, measured, envelope, ratio, spread, trend }
    }

    pub fn within(&self, max_spread: f64, max_trend: f64) -> bool {
        self.spread <= max_spread && self.trend.abs() <= max_trend
    }
}
