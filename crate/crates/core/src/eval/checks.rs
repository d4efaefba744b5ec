//! Randomized correctness checks of the building blocks: the Hankel adjoint
//! identity, exactness of Ho-Kalman on exact input, and agreement of the
//! ADMM solver with the dual reference solver.

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{arg_err, Result};
use crate::linalg;
use crate::lti::{hankel_adjoint_pinv, hankel_map, markov_params, random_stable_system, MarkovSeq, NoiseSpec};
use crate::realize::ho_kalman;
use crate::simulate::{build_regression, rng_for, simulate, SimOptions};
use crate::solver::{oracle_solve, solve_admm, PenalizedProblem, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckSummary {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest error seen, in the units of the check's tolerance.
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckSummary {
    pub fn passed(&self) -> bool {
        self.cases > 0 && self.failures == 0
    }

    fn from_errors(name: &str, errors: &[f64], tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            cases: errors.len(),
            failures: errors.iter().filter(|e| !(**e <= tolerance)).count(),
            worst: errors.iter().copied().fold(0.0, f64::max),
            tolerance,
        }
    }
}

/// Relative error of `<h, g> = <H^dagger* h, H g>` for one random pair, `T <= 8`, `p, r <= 4`.
pub fn adjoint_identity_error(seed: u64, k: usize) -> Result<f64> {
    let mut rng = rng_for(seed, k as u64);
    let t = rng.random_range(1..=8);
    let p = rng.random_range(1..=4);
    let r = rng.random_range(1..=4);
    let mut draw = |rows, cols| DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    let g = draw((2 * t - 1) * r, p);
    let h = draw((2 * t - 1) * r, p);
    let lhs = linalg::inner(&h, &g);
    let hg = hankel_map(&MarkovSeq::from_stacked(&g, r)?, t)?.into_matrix();
    let rhs = linalg::inner(&hankel_adjoint_pinv(&h, t)?, &hg);
    Ok((lhs - rhs).abs() / lhs.abs().max(1.0))
}

pub fn adjoint_identity_check(pairs: usize, seed: u64) -> Result<CheckSummary> {
    if pairs == 0 {
        return arg_err("need at least one pair");
    }
    let errs: Vec<f64> = (0..pairs).into_par_iter().map(|k| adjoint_identity_error(seed, k)).collect::<Result<_>>()?;
    Ok(CheckSummary::from_errors("adjoint_identity", &errs, 1e-10))
}

fn match_eigenvalues(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    let mut pool: Vec<Complex<f64>> = b.to_vec();
    let mut worst = 0.0_f64;
    for z in a {
        let (idx, dist) = pool
            .iter()
            .enumerate()
            .map(|(i, w)| (i, (z - w).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap_or((0, f64::INFINITY));
        worst = worst.max(dist);
        if !pool.is_empty() {
            pool.swap_remove(idx);
        }
    }
    worst
}

/// `(max Markov-block error, max eigenvalue error)` of Ho-Kalman on the exact
/// Hankel matrix of a random minimal stable system, `d0 in 1..=3`, `T = d0 + 2`.
pub fn ho_kalman_exactness_error(seed: u64, k: usize) -> Result<(f64, f64)> {
    let mut rng = rng_for(seed, k as u64);
    let d = 1 + k % 3;
    let p = rng.random_range(1..=2);
    let r = rng.random_range(1..=2);
    let rho = rng.random_range(0.3..0.95);
    let sys = random_stable_system(&mut rng, d, r, p, rho);
    let t = d + 2;
    let g = markov_params(&sys, 2 * t - 1)?;
    let real = ho_kalman(hankel_map(&g, t)?.matrix(), d, t)?;
    let markov_err = (real.markov(2 * t - 1)?.to_stacked() - g.to_stacked()).amax() / g.to_stacked().amax().max(1.0);
    let est: Vec<Complex<f64>> = real.a.complex_eigenvalues().iter().copied().collect();
    let truth: Vec<Complex<f64>> = sys.a().complex_eigenvalues().iter().copied().collect();
    Ok((markov_err, match_eigenvalues(&truth, &est)))
}

pub fn ho_kalman_exactness_check(systems: usize, seed: u64) -> Result<(CheckSummary, CheckSummary)> {
    if systems == 0 {
        return arg_err("need at least one system");
    }
    let errs: Vec<(f64, f64)> =
        (0..systems).into_par_iter().map(|k| ho_kalman_exactness_error(seed, k)).collect::<Result<_>>()?;
    let markov: Vec<f64> = errs.iter().map(|e| e.0).collect();
    let eig: Vec<f64> = errs.iter().map(|e| e.1).collect();
    Ok((
        CheckSummary::from_errors("ho_kalman_markov", &markov, 1e-8),
        CheckSummary::from_errors("ho_kalman_eigenvalues", &eig, 1e-6),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverAgreement {
    pub lambda: f64,
    pub admm_objective: f64,
    pub oracle_objective: f64,
    pub objective_gap: f64,
    pub solution_distance: f64,
}

/// ADMM against the dual reference on one simulated instance: `p = r = 1`,
/// `T = 3`, `N = 50` regression rows.
pub fn solver_agreement(seed: u64, k: usize) -> Result<SolverAgreement> {
    const LAMBDAS: [f64; 4] = [0.05, 0.1, 0.2, 0.5];
    let mut rng = rng_for(seed, k as u64);
    let d = rng.random_range(1..=2);
    let rho = rng.random_range(0.3..0.9);
    let sys = random_stable_system(&mut rng, d, 1, 1, rho);
    let t = 3;
    let sim_seed = rng.random();
    let traj = simulate(&sys, &NoiseSpec::new(1.0, 0.1, 0.1)?, 50 + 2 * t - 1, sim_seed, SimOptions::default())?;
    let data = build_regression(&traj, t)?;
    let lambda = LAMBDAS[k % LAMBDAS.len()];
    let prob = PenalizedProblem::new(&data, lambda)?;
    let admm = solve_admm(&prob, &SolverOptions { max_iter: 50_000, ..SolverOptions::default() })?;
    let oracle = oracle_solve(&prob, 200_000, 1e-10)?;
    Ok(SolverAgreement {
        lambda,
        admm_objective: admm.objective,
        oracle_objective: oracle.objective,
        objective_gap: (admm.objective - oracle.objective).abs() / oracle.objective.abs().max(f64::MIN_POSITIVE),
        solution_distance: (admm.g_hat.to_stacked() - oracle.g.to_stacked()).norm(),
    })
}

pub fn solver_agreement_check(instances: usize, seed: u64) -> Result<(CheckSummary, CheckSummary)> {
    if instances == 0 {
        return arg_err("need at least one instance");
    }
    let runs: Vec<SolverAgreement> =
        (0..instances).into_par_iter().map(|k| solver_agreement(seed, k)).collect::<Result<_>>()?;
    let gaps: Vec<f64> = runs.iter().map(|r| r.objective_gap).collect();
    let dists: Vec<f64> = runs.iter().map(|r| r.solution_distance).collect();
    Ok((
        CheckSummary::from_errors("solver_objective", &gaps, 1e-6),
        CheckSummary::from_errors("solver_solution", &dists, 1e-4),
    ))
}
