//! Randomized checks of two auxiliary inequalities: the rank-one perturbation
//! bound `|v1 w1' - v2 w2'|_op <= |v1 - v2| + |w1 - w2|` for unit vectors, and
//! the bound of a finite block-Toeplitz section by the sup of its symbol.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{arg_err, Result};
use crate::linalg;
use crate::simulate::rng_for;

/// Frequency grid used for the symbol.
pub const SYMBOL_GRID: usize = 1024;
/// Absolute floating-point allowance on every comparison.
const ROUNDING: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub samples: usize,
    pub violations: usize,
    /// Smallest `rhs - lhs` seen.
    pub worst_slack: f64,
    /// Index of the first violating sample, if any.
    pub first_violation: Option<usize>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    fn collect(slacks: &[f64]) -> Self {
        let first_violation = slacks.iter().position(|s| *s < -ROUNDING);
        Self {
            samples: slacks.len(),
            violations: slacks.iter().filter(|s| **s < -ROUNDING).count(),
            worst_slack: slacks.iter().copied().fold(f64::INFINITY, f64::min),
            first_violation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub rank_one: CheckOutcome,
    pub toeplitz: CheckOutcome,
}

impl InequalityReport {
    pub fn passed(&self) -> bool {
        self.rank_one.passed() && self.toeplitz.passed()
    }
}

/// `rhs - lhs` of the rank-one inequality.
pub fn rank_one_slack(v1: &DVector<f64>, w1: &DVector<f64>, v2: &DVector<f64>, w2: &DVector<f64>) -> f64 {
    let lhs = linalg::spectral_norm(&(v1 * w1.transpose() - v2 * w2.transpose()));
    (v1 - v2).norm() + (w1 - w2).norm() - lhs
}

fn unit(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-8 {
            return v / norm;
        }
    }
}

fn rank_one_sample(seed: u64, k: usize, r: usize, p: usize) -> f64 {
    let mut rng = rng_for(seed, k as u64);
    let v1 = unit(&mut rng, r);
    let w1 = unit(&mut rng, p);
    // half the samples are small perturbations, where the bound is nearly tight
    let (v2, w2) = if k % 2 == 0 {
        (unit(&mut rng, r), unit(&mut rng, p))
    } else {
        let eps = 10f64.powf(-rng.random_range(1.0..6.0));
        let nv = (&v1 + eps * unit(&mut rng, r)).normalize();
        let nw = (&w1 + eps * unit(&mut rng, p)).normalize();
        (nv, nw)
    };
    rank_one_slack(&v1, &w1, &v2, &w2)
}

/// Finite lower block-Toeplitz section with `blocks` block rows:
/// block `(i, j)` is `h[i - j - 1]` for `1 <= i - j <= h.len()`.
pub fn toeplitz_section(h: &[DMatrix<f64>], blocks: usize) -> DMatrix<f64> {
    let (p, r) = h.first().map_or((0, 0), |b| b.shape());
    let mut out = DMatrix::zeros(blocks * p, blocks * r);
    for i in 0..blocks {
        for j in 0..i {
            if let Some(b) = h.get(i - j - 1) {
                out.view_mut((i * p, j * r), (p, r)).copy_from(b);
            }
        }
    }
    out
}

/// `max_k |sum_l h_l e^{i 2 pi l k / grid}|_op` with `l` starting at 1.
pub fn symbol_grid_max(h: &[DMatrix<f64>], grid: usize) -> f64 {
    let (p, r) = h.first().map_or((0, 0), |b| b.shape());
    let mut acc = DMatrix::<Complex<f64>>::zeros(p, r);
    let mut best = 0.0_f64;
    for k in 0..grid {
        acc.fill(Complex::new(0.0, 0.0));
        for (l, b) in h.iter().enumerate() {
            let z = Complex::from_polar(1.0, 2.0 * std::f64::consts::PI * ((l + 1) * k) as f64 / grid as f64);
            acc.zip_apply(b, |a, v| *a += z * v);
        }
        best = best.max(linalg::complex_spectral_norm(&acc));
    }
    best
}

/// Largest gap between the symbol's sup and its grid max: the symbol is
/// `2 pi sum_l l |h_l|`-Lipschitz and every frequency is within `1/(2 grid)` of the grid.
pub fn grid_slack(h: &[DMatrix<f64>], grid: usize) -> f64 {
    let moment: f64 = h.iter().enumerate().map(|(l, b)| (l + 1) as f64 * linalg::spectral_norm(b)).sum();
    std::f64::consts::PI * moment / grid as f64
}

fn toeplitz_sample(seed: u64, k: usize) -> f64 {
    let mut rng = rng_for(seed, k as u64);
    let p = rng.random_range(1..=2);
    let r = rng.random_range(1..=3);
    let len = rng.random_range(1..=5);
    let decay: f64 = rng.random_range(0.2..1.0);
    let h: Vec<DMatrix<f64>> = (0..len)
        .map(|l| DMatrix::from_fn(p, r, |_, _| decay.powi(l as i32) * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let blocks = rng.random_range(len + 1..=2 * len + 2);
    let lhs = linalg::spectral_norm(&toeplitz_section(&h, blocks));
    symbol_grid_max(&h, SYMBOL_GRID) + grid_slack(&h, SYMBOL_GRID) - lhs
}

/// Runs `samples` draws of each inequality (rank-one pairs use `r = 5`, `p = 3`).
pub fn inequality_checks(samples: usize, seed: u64) -> Result<InequalityReport> {
    if samples == 0 {
        return arg_err("samples must be >= 1");
    }
    let a: Vec<f64> = (0..samples).into_par_iter().map(|k| rank_one_sample(seed, k, 5, 3)).collect();
    let b: Vec<f64> = (0..samples).into_par_iter().map(|k| toeplitz_sample(seed.wrapping_add(0x5eed), k)).collect();
    Ok(InequalityReport { rank_one: CheckOutcome::collect(&a), toeplitz: CheckOutcome::collect(&b) })
}
