//! Hankel nuclear-norm penalized least squares
//!
//! ```text
//! minimize  (1/N) |Y - X G|_F^2 + lambda |H(G)|_*
//! ```
//!
//! over the stacked Markov parameters `G`, solved by ADMM on the splitting
//! `Z = H(G)`. Because `H'H` is diagonal (anti-diagonal multiplicities), the
//! G-step matrix `(2/N) X'X + rho D` is factorized once per value of `rho`.
//!
//! [`oracle_solve`] is a slow, independent reference: accelerated projected
//! gradient on the dual, certified by the duality gap.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{arg_err, Result, SysIdError};
use crate::linalg;
use crate::lti::{antidiagonal_weight, hankel_adjoint_stacked, hankel_of_stacked, MarkovSeq};
use crate::simulate::RegressionData;

/// Smallest-to-largest eigenvalue ratio of `X'X` below which `X` counts as rank deficient.
const RANK_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct PenalizedProblem<'a> {
    pub data: &'a RegressionData,
    pub lambda: f64,
}

impl<'a> PenalizedProblem<'a> {
    pub fn new(data: &'a RegressionData, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return arg_err(format!("lambda must be finite and >= 0, got {lambda}"));
        }
        if data.n_bar() == 0 {
            return arg_err("regression has no rows");
        }
        Ok(Self { data, lambda })
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.data.t, self.data.p, self.data.r)
    }

    /// `(1/N) |Y - X G|_F^2 + lambda |H(G)|_*`.
    pub fn objective(&self, g: &DMatrix<f64>) -> f64 {
        let (t, p, r) = self.dims();
        let fit = (&self.data.y - &self.data.x * g).norm_squared() / self.data.n_bar() as f64;
        fit + self.lambda * linalg::nuclear_norm(&hankel_of_stacked(g, t, p, r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub rho: f64,
    pub max_iter: usize,
    pub tol_abs: f64,
    pub tol_rel: f64,
    /// Adds `ridge * I` to the G-step instead of rejecting a rank-deficient design.
    pub ridge: Option<f64>,
    /// Residual balancing (`rho` doubled or halved when one residual dominates by 10x).
    pub adapt_rho: bool,
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { rho: 1.0, max_iter: 5000, tol_abs: 1e-8, tol_rel: 1e-6, ridge: None, adapt_rho: true, trace: false }
    }
}

impl SolverOptions {
    pub fn with_ridge(mut self) -> Self {
        self.ridge = Some(1e-10);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub primal_res: f64,
    pub dual_res: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub g_hat: MarkovSeq,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub rho: f64,
    /// `|(2/N) X'(X G - Y) + lambda H'(V)|_F` with `V = rho U / lambda`.
    pub kkt_residual: f64,
    /// `|V|_op`; at most one for a valid subgradient.
    pub dual_norm: f64,
    pub trace: Vec<TraceRow>,
}

/// Proximal map of `tau |.|_*`: singular values shrunk by `tau`.
pub fn svd_soft_threshold(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    assert!(tau >= 0.0, "threshold must be non-negative");
    let dec = linalg::svd(m);
    let mut u = dec.u;
    for (j, mut col) in u.column_iter_mut().enumerate() {
        col *= (dec.s[j] - tau).max(0.0);
    }
    u * dec.v_t
}

/// Row weights of `H'H` on the stacked form: block `k` repeated `r` times.
fn gram_diagonal(t: usize, r: usize) -> Vec<f64> {
    (0..2 * t - 1).flat_map(|k| std::iter::repeat(antidiagonal_weight(k + 1, t) as f64).take(r)).collect()
}

fn check_design(xtx: &DMatrix<f64>) -> Result<()> {
    let eig = SymmetricEigen::new(xtx.clone()).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if !(min > RANK_RTOL * max) {
        return Err(SysIdError::RankDeficientDesign { min_eig: min });
    }
    Ok(())
}

pub fn solve_admm(prob: &PenalizedProblem, opts: &SolverOptions) -> Result<SolverReport> {
    solve_admm_warm(prob, opts, None)
}

/// ADMM started from `g0` (stacked, `(2T-1) r x p`) when given, else from zero.
pub fn solve_admm_warm(
    prob: &PenalizedProblem,
    opts: &SolverOptions,
    g0: Option<&DMatrix<f64>>,
) -> Result<SolverReport> {
    if !(prob.lambda > 0.0) {
        return arg_err(format!("ADMM needs lambda > 0, got {}", prob.lambda));
    }
    if !(opts.rho > 0.0) || opts.max_iter == 0 {
        return arg_err("rho must be > 0 and max_iter >= 1");
    }
    let (t, p, r) = prob.dims();
    let data = prob.data;
    let n = (2 * t - 1) * r;
    if data.x.ncols() != n || data.y.ncols() != p {
        return Err(SysIdError::DimensionMismatch(format!(
            "regression is {}x{} / {}x{}, order {t} needs {n} columns and {p} outputs",
            data.x.nrows(),
            data.x.ncols(),
            data.y.nrows(),
            data.y.ncols()
        )));
    }
    let scale = 2.0 / data.n_bar() as f64;
    let xtx = data.x.transpose() * &data.x;
    let xty = data.x.transpose() * &data.y;
    match opts.ridge {
        None => check_design(&xtx)?,
        Some(eps) if !(eps >= 0.0) => return arg_err("ridge must be >= 0"),
        Some(_) => {}
    }
    let ridge = opts.ridge.unwrap_or(0.0);
    let weights = gram_diagonal(t, r);
    let base = &xtx * scale;
    let rhs_fit = &xty * scale;
    let factor = |rho: f64| -> Result<Cholesky<f64, Dyn>> {
        let mut m = base.clone();
        for (i, w) in weights.iter().enumerate() {
            m[(i, i)] += rho * w + ridge;
        }
        Cholesky::new(m).ok_or(SysIdError::RankDeficientDesign { min_eig: 0.0 })
    };

    let mut rho = opts.rho;
    let mut chol = factor(rho)?;
    let mut g = match g0 {
        Some(g0) if g0.shape() == (n, p) => g0.clone(),
        Some(g0) => return arg_err(format!("warm start is {:?}, expected {:?}", g0.shape(), (n, p))),
        None => DMatrix::zeros(n, p),
    };
    let mut z = hankel_of_stacked(&g, t, p, r);
    let mut u = DMatrix::zeros(t * p, t * r);
    let tau = prob.lambda;
    let sqrt_nz = ((t * p * t * r) as f64).sqrt();
    let sqrt_ng = ((n * p) as f64).sqrt();

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let (mut r_norm, mut s_norm) = (f64::INFINITY, f64::INFINITY);
    for it in 1..=opts.max_iter {
        iterations = it;
        let rhs = &rhs_fit + hankel_adjoint_stacked(&(&z - &u), t, p, r) * rho;
        g = chol.solve(&rhs);
        let hg = hankel_of_stacked(&g, t, p, r);
        let z_old = std::mem::replace(&mut z, svd_soft_threshold(&(&hg + &u), tau / rho));
        let resid = &hg - &z;
        u += &resid;

        r_norm = resid.norm();
        s_norm = rho * hankel_adjoint_stacked(&(&z - &z_old), t, p, r).norm();
        let eps_pri = sqrt_nz * opts.tol_abs + opts.tol_rel * hg.norm().max(z.norm());
        let eps_dual = sqrt_ng * opts.tol_abs + opts.tol_rel * rho * hankel_adjoint_stacked(&u, t, p, r).norm();
        if opts.trace {
            trace.push(TraceRow { iter: it, objective: prob.objective(&g), primal_res: r_norm, dual_res: s_norm });
        }
        if r_norm <= eps_pri && s_norm <= eps_dual {
            converged = true;
            break;
        }
        if opts.adapt_rho {
            let new_rho = if r_norm > 10.0 * s_norm {
                rho * 2.0
            } else if s_norm > 10.0 * r_norm {
                rho / 2.0
            } else {
                rho
            };
            if new_rho != rho {
                // scaled dual U = Y / rho keeps Y fixed
                u *= rho / new_rho;
                rho = new_rho;
                chol = factor(rho)?;
            }
        }
    }

    let v = &u * (rho / prob.lambda);
    let grad_fit = (&xtx * &g - &xty) * scale;
    let kkt_residual = (grad_fit + hankel_adjoint_stacked(&v, t, p, r) * prob.lambda).norm();
    let dual_norm = linalg::spectral_norm(&v);
    if !converged {
        log::warn!("ADMM stopped after {iterations} iterations (primal {r_norm:.3e}, dual {s_norm:.3e})");
    }
    Ok(SolverReport {
        objective: prob.objective(&g),
        g_hat: MarkovSeq::from_stacked(&g, r)?,
        primal_residual: r_norm,
        dual_residual: s_norm,
        iterations,
        converged,
        rho,
        kkt_residual,
        dual_norm,
        trace,
    })
}

/// Writes a solver trace as CSV (`iter,objective,primal_res,dual_res`).
pub fn write_trace<W: std::io::Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "objective", "primal_res", "dual_res"])?;
    for row in rows {
        w.write_record(&[
            row.iter.to_string(),
            row.objective.to_string(),
            row.primal_res.to_string(),
            row.dual_res.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Maximum number of unknowns accepted by [`oracle_solve`].
pub const ORACLE_MAX_UNKNOWNS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub g: MarkovSeq,
    /// Best primal objective seen.
    pub objective: f64,
    /// Best dual value seen (a lower bound on the optimum).
    pub lower_bound: f64,
    pub iterations: usize,
    /// Best primal objective after each iteration.
    pub history: Vec<f64>,
}

impl OracleReport {
    pub fn gap(&self) -> f64 {
        self.objective - self.lower_bound
    }
}

/// Dual reference solver for small problems.
///
/// The dual of the penalized problem is a smooth concave maximization over
/// the spectral-norm unit ball `{V : |V|_op <= 1}`, with the primal point
/// recovered in closed form as `G(V) = (X'X)^{-1} (X'Y - (lambda N / 2) H'V)`.
/// Runs FISTA with adaptive restart until the duality gap falls below
/// `gap_tol * max(1, |objective|)` or `iters` iterations are spent.
pub fn oracle_solve(prob: &PenalizedProblem, iters: usize, gap_tol: f64) -> Result<OracleReport> {
    let (t, p, r) = prob.dims();
    let n = (2 * t - 1) * r;
    if n * p > ORACLE_MAX_UNKNOWNS {
        return Err(SysIdError::OracleTooLarge(n * p));
    }
    let data = prob.data;
    let n_bar = data.n_bar() as f64;
    let xtx = data.x.transpose() * &data.x;
    let xty = data.x.transpose() * &data.y;
    check_design(&xtx)?;
    let chol = Cholesky::new(xtx.clone()).ok_or(SysIdError::RankDeficientDesign { min_eig: 0.0 })?;
    let lam = prob.lambda;
    let g_of = |v: &DMatrix<f64>| -> DMatrix<f64> {
        let rhs = &xty - hankel_adjoint_stacked(v, t, p, r) * (lam * n_bar / 2.0);
        chol.solve(&rhs)
    };
    let fit = |g: &DMatrix<f64>| (&data.y - &data.x * g).norm_squared() / n_bar;

    if lam == 0.0 {
        let g = chol.solve(&xty);
        let obj = fit(&g);
        return Ok(OracleReport {
            g: MarkovSeq::from_stacked(&g, r)?,
            objective: obj,
            lower_bound: obj,
            iterations: 0,
            history: vec![obj],
        });
    }

    let min_eig = SymmetricEigen::new(xtx.clone()).eigenvalues.min();
    let lipschitz = lam * lam * n_bar / 2.0 * t as f64 / min_eig;
    let step = 1.0 / lipschitz;
    let project = |m: DMatrix<f64>| -> DMatrix<f64> {
        let dec = linalg::svd(&m);
        let mut u = dec.u;
        for (j, mut col) in u.column_iter_mut().enumerate() {
            col *= dec.s[j].min(1.0);
        }
        u * dec.v_t
    };

    let mut v = DMatrix::zeros(t * p, t * r);
    let mut w = v.clone();
    let mut theta = 1.0_f64;
    let mut best_g = g_of(&v);
    let mut best_obj = prob.objective(&best_g);
    let mut best_dual = f64::NEG_INFINITY;
    let mut history = Vec::new();
    let mut iterations = 0;
    for it in 1..=iters {
        iterations = it;
        let g_w = g_of(&w);
        let grad = hankel_of_stacked(&g_w, t, p, r) * lam;
        let v_next = project(&w + grad * step);

        let g_v = g_of(&v_next);
        // D(V) = fit(G(V)) + lambda <V, H G(V)>
        let dual = fit(&g_v) + lam * linalg::inner(&v_next, &hankel_of_stacked(&g_v, t, p, r));
        let primal = prob.objective(&g_v);
        best_dual = best_dual.max(dual);
        if primal < best_obj {
            best_obj = primal;
            best_g = g_v;
        }
        history.push(best_obj);
        if best_obj - best_dual <= gap_tol * best_obj.abs().max(1.0) {
            break;
        }

        // restart momentum when the step moves against the ascent direction
        let restart = linalg::inner(&(&v_next - &w), &(&v_next - &v)) < 0.0;
        let theta_next = if restart { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) };
        w = if restart { v_next.clone() } else { &v_next + (&v_next - &v) * ((theta - 1.0) / theta_next) };
        theta = theta_next;
        v = v_next;
    }
    Ok(OracleReport {
        g: MarkovSeq::from_stacked(&best_g, r)?,
        objective: best_obj,
        lower_bound: best_dual,
        iterations,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{rng_for, Trajectory};
    use nalgebra::dmatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_data(seed: u64, n_bar: usize, t: usize, r: usize, p: usize) -> RegressionData {
        let mut rng = rng_for(seed, 0);
        let n = n_bar + 2 * t - 1;
        let u = DMatrix::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        crate::simulate::build_regression(&Trajectory::from_data(u, y).unwrap(), t).unwrap()
    }

    #[test]
    fn soft_threshold_diagonal() {
        let out = svd_soft_threshold(&dmatrix![3.0, 0.0; 0.0, 1.0], 1.0);
        assert!((out - dmatrix![2.0, 0.0; 0.0, 0.0]).norm() < 1e-14);
    }

    #[test]
    fn soft_threshold_zero_is_identity() {
        let m = dmatrix![1.0, -2.0, 0.5; 0.3, 4.0, -1.0];
        assert!((svd_soft_threshold(&m, 0.0) - &m).norm() < 1e-12);
    }

    #[test]
    fn soft_threshold_matches_eigen_oracle() {
        let mut rng = rng_for(17, 0);
        let m = DMatrix::from_fn(4, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        // singular values from the eigenvalues of M'M
        let eig = SymmetricEigen::new(m.transpose() * &m);
        let mut s: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let tau = 0.5 * s[1];
        let out = svd_soft_threshold(&m, tau);
        let got = linalg::singular_values(&out);
        let mut got: Vec<f64> = got.iter().copied().collect();
        got.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (g, e) in got.iter().zip(s.iter().map(|v| (v - tau).max(0.0))) {
            assert!((g - e).abs() < 1e-10);
        }
        assert_eq!(got.iter().filter(|v| **v > 1e-10).count(), s.iter().filter(|v| **v > tau).count());
    }

    #[test]
    fn soft_threshold_satisfies_prox_optimality() {
        // Z = prox(M) iff (M - Z) / tau is a subgradient of |.|_* at Z
        let mut rng = rng_for(23, 0);
        for _ in 0..20 {
            let m = DMatrix::from_fn(5, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let tau = rng.random::<f64>() * 2.0;
            let z = svd_soft_threshold(&m, tau);
            let v = (&m - &z) / tau;
            assert!(linalg::spectral_norm(&v) <= 1.0 + 1e-10);
            assert!((linalg::inner(&v, &z) - linalg::nuclear_norm(&z)).abs() < 1e-9);
        }
    }

    #[test]
    fn huge_lambda_gives_zero() {
        let data = random_data(1, 60, 3, 1, 1);
        let lam = 1e6 * (data.x.transpose() * &data.y).norm();
        let rep = solve_admm(&PenalizedProblem::new(&data, lam).unwrap(), &SolverOptions::default()).unwrap();
        assert!(rep.g_hat.to_stacked().norm() <= 1e-6);
    }

    #[test]
    fn tiny_lambda_gives_least_squares() {
        let data = random_data(2, 80, 3, 2, 2);
        let rep = solve_admm(&PenalizedProblem::new(&data, 1e-12).unwrap(), &SolverOptions::default()).unwrap();
        let ls = linalg::pinv(&data.x, linalg::PINV_RTOL) * &data.y;
        let g = rep.g_hat.to_stacked();
        assert!((&g - &ls).norm() <= 1e-6 * ls.norm(), "{}", (&g - &ls).norm() / ls.norm());
    }

    #[test]
    fn rejects_bad_lambda_and_degenerate_design() {
        let data = random_data(3, 30, 2, 1, 1);
        assert!(PenalizedProblem::new(&data, -1.0).is_err());
        let zero_lambda = PenalizedProblem::new(&data, 0.0).unwrap();
        assert!(solve_admm(&zero_lambda, &SolverOptions::default()).is_err());

        let traj = Trajectory::from_data(DMatrix::zeros(40, 1), DMatrix::from_element(40, 1, 1.0)).unwrap();
        let flat = crate::simulate::build_regression(&traj, 2).unwrap();
        let prob = PenalizedProblem::new(&flat, 0.1).unwrap();
        assert!(matches!(solve_admm(&prob, &SolverOptions::default()), Err(SysIdError::RankDeficientDesign { .. })));
        let rep = solve_admm(&prob, &SolverOptions::default().with_ridge()).unwrap();
        assert!(rep.g_hat.to_stacked().amax() < 1e-6);
    }

    #[test]
    fn report_objective_and_certificate() {
        let data = random_data(4, 50, 3, 1, 1);
        let opts = SolverOptions::default();
        let prob = PenalizedProblem::new(&data, 0.1).unwrap();
        let rep = solve_admm(&prob, &opts).unwrap();
        assert!(rep.converged);
        assert!((rep.objective - prob.objective(&rep.g_hat.to_stacked())).abs() <= 1e-9);
        assert!(rep.dual_norm <= 1.0 + 1e-9);
        let tol = opts.tol_abs.max(opts.tol_rel * rep.objective);
        assert!(rep.kkt_residual <= 10.0 * tol.max(rep.dual_residual), "kkt {}", rep.kkt_residual);
    }

    #[test]
    fn admm_matches_dual_oracle_seed7() {
        let data = random_data(7, 50, 3, 1, 1);
        let prob = PenalizedProblem::new(&data, 0.1).unwrap();
        let rep = solve_admm(&prob, &SolverOptions::default()).unwrap();
        let orc = oracle_solve(&prob, 200_000, 1e-10).unwrap();
        assert!((rep.objective - orc.objective).abs() <= 1e-6 * orc.objective);
        assert!((rep.g_hat.to_stacked() - orc.g.to_stacked()).norm() <= 1e-4);
    }

    #[test]
    fn oracle_least_squares_and_history() {
        let data = random_data(9, 40, 2, 1, 1);
        let ls = linalg::pinv(&data.x, linalg::PINV_RTOL) * &data.y;
        let orc = oracle_solve(&PenalizedProblem::new(&data, 0.0).unwrap(), 10, 1e-12).unwrap();
        assert!((orc.g.to_stacked() - &ls).norm() <= 1e-4 * ls.norm().max(1.0));

        let orc = oracle_solve(&PenalizedProblem::new(&data, 0.3).unwrap(), 500, 0.0).unwrap();
        assert!(orc.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(orc.lower_bound <= orc.objective + 1e-12);
    }

    #[test]
    fn oracle_size_guard() {
        let data = random_data(10, 300, 8, 4, 4);
        let prob = PenalizedProblem::new(&data, 0.1).unwrap();
        assert!(matches!(oracle_solve(&prob, 10, 1e-8), Err(SysIdError::OracleTooLarge(240))));
    }

    #[test]
    fn warm_start_reaches_same_solution() {
        let data = random_data(12, 100, 3, 1, 2);
        let prob = PenalizedProblem::new(&data, 0.05).unwrap();
        let cold = solve_admm(&prob, &SolverOptions::default()).unwrap();
        let warm = solve_admm_warm(&prob, &SolverOptions::default(), Some(&cold.g_hat.to_stacked())).unwrap();
        assert!(warm.iterations <= cold.iterations);
        assert!((warm.objective - cold.objective).abs() <= 1e-6 * cold.objective);
    }

    #[test]
    fn trace_rows_written() {
        let data = random_data(13, 30, 2, 1, 1);
        let opts = SolverOptions { trace: true, max_iter: 5, ..Default::default() };
        let rep = solve_admm(&PenalizedProblem::new(&data, 0.1).unwrap(), &opts).unwrap();
        assert_eq!(rep.trace.len(), rep.iterations);
        let mut buf = Vec::new();
        write_trace(&rep.trace, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), rep.iterations + 1);
    }
}
