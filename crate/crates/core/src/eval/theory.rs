//! Deterministic check of the estimator's error bounds on one trajectory.
//!
//! The bounds are implications: once `lambda >= 3 Gamma / N` with
//! `Gamma = |H^dagger*(X' E)|_op` and the design satisfies the restricted
//! eigenvalue event `eig(X'X / N) in [sigma_u^2 / 2, 3 sigma_u^2 / 2]`, every
//! minimizer obeys them. Here `E = y - X g0` with the true Markov parameters,
//! so all quantities are computable from a simulated trajectory.

use serde::Serialize;

use crate::error::Result;
use crate::linalg;
use crate::lti::{hankel_adjoint_pinv, hankel_map, markov_params, MarkovSeq, StateSpace};
use crate::simulate::{build_regression, Trajectory};
use crate::solver::{solve_admm, PenalizedProblem, SolverOptions};

/// Solver tolerance allowance on each comparison.
const SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub n_bar: usize,
    pub t: usize,
    pub d0: usize,
    pub lambda: f64,
    pub gamma: f64,
    /// `lambda >= 3 Gamma / N`.
    pub penalty_dominates: bool,
    pub min_eig: f64,
    pub max_eig: f64,
    pub re_event: bool,
    /// `|X dg|_F / sqrt(N)` and `min(fast, slow)` bound.
    pub prediction: f64,
    pub prediction_bound: f64,
    pub estimation: f64,
    pub estimation_bound: f64,
    pub hankel_l2: f64,
    pub hankel_l2_bound: f64,
    pub hankel_l1: f64,
    pub hankel_l1_bound: f64,
    pub converged: bool,
}

impl BoundCheck {
    pub fn applicable(&self) -> bool {
        self.penalty_dominates && self.re_event
    }

    pub fn bounds_hold(&self) -> bool {
        let ok = |v: f64, b: f64| v <= b * (1.0 + SLACK) + SLACK;
        ok(self.prediction, self.prediction_bound)
            && ok(self.estimation, self.estimation_bound)
            && ok(self.hankel_l2, self.hankel_l2_bound)
            && ok(self.hankel_l1, self.hankel_l1_bound)
    }
}

/// `Gamma = |H^dagger*(X' (y - X g0))|_op` at order `T`.
pub fn noise_gamma(traj: &Trajectory, sys: &StateSpace, t: usize) -> Result<f64> {
    let data = build_regression(traj, t)?;
    let g0 = markov_params(sys, 2 * t - 1)?.to_stacked();
    let e = &data.y - &data.x * g0;
    Ok(linalg::spectral_norm(&hankel_adjoint_pinv(&(data.x.transpose() * e), t)?))
}

/// Solves at `lambda` and compares the errors with the bounds for `sigma_u`.
pub fn check_bounds(
    traj: &Trajectory,
    sys: &StateSpace,
    t: usize,
    lambda: f64,
    sigma_u: f64,
    opts: &SolverOptions,
) -> Result<BoundCheck> {
    let data = build_regression(traj, t)?;
    let n = data.n_bar() as f64;
    let g0 = markov_params(sys, 2 * t - 1)?;
    let gamma = noise_gamma(traj, sys, t)?;
    let eig = (data.x.transpose() * &data.x / n).symmetric_eigenvalues();
    let min_eig = eig.min();
    let max_eig = eig.max();
    let s2 = sigma_u * sigma_u;

    let report = solve_admm(&PenalizedProblem::new(&data, lambda)?, opts)?;
    let dg = report.g_hat.to_stacked() - g0.to_stacked();
    let diff = hankel_map(&MarkovSeq::from_stacked(&dg, sys.r())?, t)?.into_matrix();
    let spec = linalg::singular_values(&diff);
    let h0_s2 = hankel_map(&g0, t)?.matrix().norm();

    let d0 = sys.d() as f64;
    let tf = t as f64;
    let fast = 5.0 * 3f64.sqrt() * d0.sqrt() * tf.sqrt() * lambda / 6.0;
    Ok(BoundCheck {
        n_bar: data.n_bar(),
        t,
        d0: sys.d(),
        lambda,
        gamma,
        penalty_dominates: lambda >= 3.0 * gamma / n,
        min_eig,
        max_eig,
        re_event: min_eig >= s2 / 2.0 && max_eig <= 1.5 * s2,
        prediction: (&data.x * &dg).norm() / n.sqrt(),
        prediction_bound: (fast / sigma_u).min(d0.powf(0.25) * lambda.sqrt() * h0_s2.sqrt()),
        estimation: dg.norm(),
        estimation_bound: (fast / s2).min(2f64.sqrt() * d0.powf(0.25) * lambda.sqrt() * h0_s2.sqrt() / sigma_u),
        hankel_l2: linalg::schatten_of_spectrum(spec.as_slice(), 2.0),
        hankel_l2_bound: 5.0 * 2f64.sqrt() / (3.0 * s2) * d0.sqrt() * lambda * tf,
        hankel_l1: linalg::schatten_of_spectrum(spec.as_slice(), 1.0),
        hankel_l1_bound: 20.0 * d0 * lambda * tf / s2,
        converged: report.converged,
    })
}
