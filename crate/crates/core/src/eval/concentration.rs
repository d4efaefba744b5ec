//! Monte-Carlo checks of the two concentration results the estimator relies on:
//! the empirical covariance of the shifted input windows, and the three parts
//! of the noise term seen through the adjoint of the Hankel pseudo-inverse.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::linalg;
use crate::lti::{default_horizon, hankel_adjoint_pinv, NoiseSpec, StateSpace};
use crate::pipeline::hinf_parts;
use crate::simulate::{build_regression, noise_parts, rng_for, simulate, NoiseKind, SimOptions, Trajectory};

use super::rates::{median, EnvelopeFit};

const HORIZON_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputProcess {
    Iid(NoiseKind),
    /// `u_t = sigma_u e_1` for every `t`; violates the iid hypothesis (negative control).
    ConstantFirstAxis,
}

fn draw_inputs(process: InputProcess, n: usize, r: usize, sigma_u: f64, seed: u64, stream: u64) -> DMatrix<f64> {
    match process {
        InputProcess::ConstantFirstAxis => DMatrix::from_fn(n, r, |_, j| if j == 0 { sigma_u } else { 0.0 }),
        InputProcess::Iid(kind) => {
            let mut rng = rng_for(seed, stream);
            // row-major fill so that sample t uses the t-th block of draws
            let mut out = DMatrix::zeros(n, r);
            for t in 0..n {
                for j in 0..r {
                    out[(t, j)] = match kind {
                        NoiseKind::Gaussian => sigma_u * rng.sample::<f64, _>(rand_distr::StandardNormal),
                        NoiseKind::Rademacher => {
                            if rng.random::<bool>() {
                                sigma_u
                            } else {
                                -sigma_u
                            }
                        }
                    };
                }
            }
            out
        }
    }
}

/// `|X'X / N - sigma_u^2 I|_op` for one input draw with `N` regression rows.
pub fn covariance_deviation(
    process: InputProcess,
    n_bar: usize,
    t: usize,
    r: usize,
    sigma_u: f64,
    seed: u64,
    stream: u64,
) -> Result<f64> {
    let n = n_bar + 2 * t - 1;
    let u = draw_inputs(process, n, r, sigma_u, seed, stream);
    let traj = Trajectory::from_data(u, DMatrix::zeros(n, 1))?;
    let data = build_regression(&traj, t)?;
    let mut cov = data.x.transpose() * &data.x / n_bar as f64;
    for i in 0..cov.nrows() {
        cov[(i, i)] -= sigma_u * sigma_u;
    }
    Ok(linalg::spectral_norm(&cov))
}

/// Worst deviation over `trials` draws per grid point, against `sigma_u^2 sqrt(T N1 / N)`
/// with `N1 = ln T + r`.
pub fn covariance_concentration(
    trials: usize,
    n_bar_grid: &[usize],
    t: usize,
    r: usize,
    sigma_u: f64,
    seed: u64,
    process: InputProcess,
) -> Result<EnvelopeFit> {
    if trials == 0 || n_bar_grid.is_empty() || t == 0 || r == 0 || !(sigma_u > 0.0) {
        return arg_err("need trials, a grid, T, r >= 1 and sigma_u > 0");
    }
    if let Some(&n) = n_bar_grid.iter().find(|&&n| n + 2 * t - 1 < 4 * t) {
        return arg_err(format!("N = {n} is below 4T"));
    }
    let jobs: Vec<(usize, usize)> = (0..n_bar_grid.len()).flat_map(|g| (0..trials).map(move |k| (g, k))).collect();
    let devs: Vec<f64> = jobs
        .par_iter()
        .map(|&(g, k)| covariance_deviation(process, n_bar_grid[g], t, r, sigma_u, seed, (g * trials + k) as u64))
        .collect::<Result<_>>()?;
    let measured: Vec<f64> = devs.chunks(trials).map(|c| c.iter().copied().fold(0.0, f64::max)).collect();
    let n1 = (t as f64).ln() + r as f64;
    let envelope = n_bar_grid.iter().map(|&n| sigma_u * sigma_u * (t as f64 * n1 / n as f64).sqrt()).collect();
    Ok(EnvelopeFit::new(n_bar_grid.to_vec(), measured, envelope))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTerm {
    /// Truncated impulse-response tail driven by past inputs.
    Xbar,
    /// Process noise seen at the output.
    Process,
    /// Output noise.
    Output,
}

impl NoiseTerm {
    pub const ALL: [NoiseTerm; 3] = [NoiseTerm::Xbar, NoiseTerm::Process, NoiseTerm::Output];

    pub fn name(self) -> &'static str {
        match self {
            NoiseTerm::Xbar => "xbar",
            NoiseTerm::Process => "process",
            NoiseTerm::Output => "output",
        }
    }
}

/// Envelope prefactors `(|g_bar|_Hinf, |h|_Hinf)` for a system at order `T`.
pub fn hinf_prefactors(sys: &StateSpace, t: usize) -> Result<(f64, f64)> {
    hinf_parts(sys, t, default_horizon(sys, HORIZON_CAP)?)
}

/// Envelope of one noise term at `N` regression rows.
///
/// `xbar`: `sigma_u^2 |g_bar|_Hinf sqrt(N0/N)`, `process`: `sigma_u sigma_w |h|_Hinf sqrt(N2/N)`,
/// `output`: `sigma_v^2 sqrt(N2/N)`, with `N0 = ln T + p + r` and `N2 = ln T + p`.
pub fn noise_envelope(
    term: NoiseTerm,
    noise: &NoiseSpec,
    prefactors: (f64, f64),
    t: usize,
    p: usize,
    r: usize,
    n_bar: usize,
) -> f64 {
    let log_t = (t as f64).ln();
    let n = n_bar as f64;
    let n0 = log_t + (p + r) as f64;
    let n2 = log_t + p as f64;
    match term {
        NoiseTerm::Xbar => noise.sigma_u.powi(2) * prefactors.0 * (n0 / n).sqrt(),
        NoiseTerm::Process => noise.sigma_u * noise.sigma_w * prefactors.1 * (n2 / n).sqrt(),
        NoiseTerm::Output => noise.sigma_v.powi(2) * (n2 / n).sqrt(),
    }
}

/// `|H^dagger*(X' E)|_op / N` for the requested part `E` of the noise, one trajectory.
pub fn noise_term_statistic(
    sys: &StateSpace,
    noise: &NoiseSpec,
    n_bar: usize,
    t: usize,
    seed: u64,
    stream: u64,
    term: NoiseTerm,
) -> Result<f64> {
    let opts = SimOptions { stream, diagnostics: true, ..Default::default() };
    let traj = simulate(sys, noise, n_bar + 2 * t - 1, seed, opts)?;
    let data = build_regression(&traj, t)?;
    let parts = noise_parts(&traj, sys, t)?;
    let e = match term {
        NoiseTerm::Xbar => parts.tail,
        NoiseTerm::Process => parts.process,
        NoiseTerm::Output => parts.output,
    };
    let xe = data.x.transpose() * e;
    Ok(linalg::spectral_norm(&hankel_adjoint_pinv(&xe, t)?) / n_bar as f64)
}

/// Median statistic over seeds per grid point, against [`noise_envelope`].
pub fn noise_term_concentration(
    sys: &StateSpace,
    noise: &NoiseSpec,
    n_bar_grid: &[usize],
    t: usize,
    seeds: &[u64],
    term: NoiseTerm,
) -> Result<EnvelopeFit> {
    if seeds.is_empty() || n_bar_grid.is_empty() || t == 0 {
        return arg_err("need seeds, a grid and T >= 1");
    }
    let jobs: Vec<(usize, u64)> = (0..n_bar_grid.len()).flat_map(|g| seeds.iter().map(move |&s| (g, s))).collect();
    let stats: Vec<f64> = jobs
        .par_iter()
        .map(|&(g, s)| noise_term_statistic(sys, noise, n_bar_grid[g], t, s, g as u64, term))
        .collect::<Result<_>>()?;
    let measured: Vec<f64> = stats.chunks(seeds.len()).map(median).collect();
    let pre = hinf_prefactors(sys, t)?;
    let envelope = n_bar_grid.iter().map(|&n| noise_envelope(term, noise, pre, t, sys.p(), sys.r(), n)).collect();
    Ok(EnvelopeFit::new(n_bar_grid.to_vec(), measured, envelope))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn bench() -> StateSpace {
        StateSpace::new(dmatrix![0.5, 0.0; 0.0, -0.4], dmatrix![1.0; 1.0], dmatrix![1.0, 1.0]).unwrap()
    }

    #[test]
    fn constant_input_does_not_concentrate() {
        let grid = [64, 512, 4096];
        let fit = covariance_concentration(2, &grid, 3, 2, 1.0, 0, InputProcess::ConstantFirstAxis).unwrap();
        // X'X/N = J on the first-axis block: eigenvalue (2T-1) - 1 above sigma^2 I
        for m in &fit.measured {
            assert!((m - 4.0).abs() < 1e-9);
        }
        assert!(fit.trend > 0.4);
    }

    #[test]
    fn deviation_scales_with_sigma_squared() {
        let p = InputProcess::Iid(NoiseKind::Gaussian);
        let a = covariance_deviation(p, 500, 3, 2, 1.0, 4, 0).unwrap();
        let b = covariance_deviation(p, 500, 3, 2, 2.0, 4, 0).unwrap();
        assert!((b / a - 4.0).abs() < 1e-10);
    }

    #[test]
    fn gaussian_covariance_envelope_small_grid() {
        let grid: Vec<usize> = (3..=9).map(|k| (1usize << k) * 4).collect();
        let fit = covariance_concentration(10, &grid, 4, 2, 1.0, 1, InputProcess::Iid(NoiseKind::Gaussian)).unwrap();
        assert!(fit.spread < 10.0, "{fit:?}");
    }

    #[test]
    fn silent_sources_give_zero_terms() {
        let sys = bench();
        let no_v = NoiseSpec::new(1.0, 0.1, 0.0).unwrap();
        assert_eq!(noise_term_statistic(&sys, &no_v, 200, 3, 1, 0, NoiseTerm::Output).unwrap(), 0.0);
        let no_w = NoiseSpec::new(1.0, 0.0, 0.1).unwrap();
        assert_eq!(noise_term_statistic(&sys, &no_w, 200, 3, 1, 0, NoiseTerm::Process).unwrap(), 0.0);
    }

    #[test]
    fn envelopes_decay_as_inverse_root() {
        let noise = NoiseSpec::new(1.0, 0.1, 0.1).unwrap();
        let pre = hinf_prefactors(&bench(), 4).unwrap();
        for term in NoiseTerm::ALL {
            let a = noise_envelope(term, &noise, pre, 4, 1, 1, 100);
            let b = noise_envelope(term, &noise, pre, 4, 1, 1, 400);
            assert!((a / b - 2.0).abs() < 1e-12);
        }
    }
}
