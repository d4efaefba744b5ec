//! Perturbation trials for the robust realization bound: perturb an exact
//! Hankel matrix inside the stability margin, realize at the true order and
//! compare the aligned realization error with the bound.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{arg_err, Result};
use crate::linalg;
use crate::lti::{hankel_map, markov_params, random_stable_system};
use crate::realize::{ho_kalman, realization_error_bound, stability_margin, stability_rhs};
use crate::simulate::rng_for;

use super::loss::realization_loss;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationTrial {
    pub index: usize,
    pub d0: usize,
    pub t: usize,
    /// `|E|_F`.
    pub perturbation: f64,
    pub margin_rhs: f64,
    pub margin_satisfied: bool,
    /// `|H_d - H|_F` after rank-`d0` truncation.
    pub truncated_error: f64,
    pub loss_a: f64,
    pub loss_b: f64,
    pub loss_c: f64,
    pub loss_total: f64,
    pub bound: f64,
}

impl PerturbationTrial {
    /// Whether the three-term aligned loss stays under the bound.
    pub fn within_bound(&self) -> bool {
        self.loss_total <= self.bound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub trials: Vec<PerturbationTrial>,
    /// Trials whose perturbation satisfied the margin.
    pub applicable: usize,
    /// Applicable trials with `loss_total > bound`.
    pub violations: usize,
    /// Applicable trials with `loss_a > bound`.
    pub a_term_violations: usize,
    /// Largest `loss_total / bound` among applicable trials.
    pub worst_ratio: f64,
}

impl RobustnessReport {
    pub fn passed(&self) -> bool {
        self.applicable > 0 && self.violations == 0
    }
}

/// One trial: random stable minimal system with `d0 in 1..=3`, `p, r in 1..=2`,
/// `T = d0 + 2`, and a Gaussian perturbation scaled to a random fraction of the margin
/// (measured in Frobenius norm, which dominates the spectral norm).
pub fn perturbation_trial(seed: u64, index: usize) -> Result<PerturbationTrial> {
    let mut rng = rng_for(seed, index as u64);
    let d0 = rng.random_range(1..=3);
    let p = rng.random_range(1..=2);
    let r = rng.random_range(1..=2);
    let t = d0 + 2;
    let rho = rng.random_range(0.3..0.9);
    let sys = random_stable_system(&mut rng, d0, r, p, rho);
    let h0 = hankel_map(&markov_params(&sys, 2 * t - 1)?, t)?.into_matrix();
    let reference = ho_kalman(&h0, d0, t)?;
    let s_d_h = reference.source_singulars[d0 - 1];
    let rhs = stability_rhs(reference.s_d_oplus, s_d_h);

    let e = DMatrix::from_fn(h0.nrows(), h0.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let fraction: f64 = rng.random_range(0.01..1.0);
    let e = e.normalize() * (fraction * rhs);
    let h_hat = &h0 + &e;
    let margin = stability_margin(e.norm(), reference.s_d_oplus, s_d_h)?;

    let truncated_error = (linalg::svd(&h_hat).truncated(d0) - &h0).norm();
    let est = ho_kalman(&h_hat, d0, t)?;
    let loss = realization_loss(&est, &reference)?;
    let bound =
        realization_error_bound(linalg::spectral_norm(&reference.a), reference.s_d_oplus, s_d_h, truncated_error);
    Ok(PerturbationTrial {
        index,
        d0,
        t,
        perturbation: e.norm(),
        margin_rhs: rhs,
        margin_satisfied: margin.satisfied,
        truncated_error,
        loss_a: loss.a,
        loss_b: loss.b,
        loss_c: loss.c,
        loss_total: loss.total,
        bound,
    })
}

pub fn robustness_trials(count: usize, seed: u64) -> Result<RobustnessReport> {
    if count == 0 {
        return arg_err("need at least one trial");
    }
    let trials: Vec<PerturbationTrial> =
        (0..count).into_par_iter().map(|k| perturbation_trial(seed, k)).collect::<Result<_>>()?;
    let applicable: Vec<&PerturbationTrial> = trials.iter().filter(|t| t.margin_satisfied).collect();
    Ok(RobustnessReport {
        applicable: applicable.len(),
        violations: applicable.iter().filter(|t| !t.within_bound()).count(),
        a_term_violations: applicable.iter().filter(|t| t.loss_a > t.bound).count(),
        worst_ratio: applicable.iter().map(|t| t.loss_total / t.bound).fold(0.0, f64::max),
        trials,
    })
}
