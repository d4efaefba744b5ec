//! Single-trajectory simulation and the shifted-window regression built from it.
//!
//! Samples are indexed `t = 0..N-1` with `x_0 = 0` and `y_t = C x_t + v_t`, so
//! `y_t` depends on inputs strictly before `t`. Regression row `l` (for
//! `l = 2T-1..N-1`) pairs `y_l` with `[u_{l-1}', ..., u_{l-2T+1}']`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, dim_err, Result, SysIdError};
use crate::lti::{NoiseSpec, StateSpace};

/// State norm above which a simulation is aborted.
pub const OVERFLOW_GUARD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Independent `+-sigma` coordinates.
    Rademacher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimOptions {
    pub kind: NoiseKind,
    /// ChaCha stream id; lets parallel workers share a seed without overlap.
    pub stream: u64,
    /// Keep the per-source decomposition of the outputs.
    pub diagnostics: bool,
}

/// Per-sample split of the outputs by source, kept only when requested.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// Input-driven part of the state, `N x d`.
    pub state_u: DMatrix<f64>,
    /// `C x^w_t`, the output contribution of the process noise, `N x p`.
    pub process_out: DMatrix<f64>,
    /// Output noise `v_t`, `N x p`.
    pub output_noise: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    u: DMatrix<f64>,
    y: DMatrix<f64>,
    x_final: Option<DVector<f64>>,
    seed: Option<u64>,
    diagnostics: Option<Diagnostics>,
}

impl Trajectory {
    /// Wraps recorded data: `u` is `N x r`, `y` is `N x p`, row `t` is sample `t`.
    pub fn from_data(u: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if u.nrows() != y.nrows() {
            return dim_err(format!("{} input samples but {} output samples", u.nrows(), y.nrows()));
        }
        if u.ncols() == 0 || y.ncols() == 0 {
            return dim_err("trajectory needs r >= 1 and p >= 1");
        }
        Ok(Self { u, y, x_final: None, seed: None, diagnostics: None })
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.u
    }
    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.y
    }
    /// State after the last input, `x_N`.
    pub fn x_final(&self) -> Option<&DVector<f64>> {
        self.x_final.as_ref()
    }
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
    pub fn diagnostics(&self) -> Option<&Diagnostics> {
        self.diagnostics.as_ref()
    }
    pub fn len(&self) -> usize {
        self.u.nrows()
    }
    pub fn is_empty(&self) -> bool {
        self.u.nrows() == 0
    }
    pub fn r(&self) -> usize {
        self.u.ncols()
    }
    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    /// CSV with header `t,u_1..u_r,y_1..y_p`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.r()).map(|i| format!("u_{i}")));
        header.extend((1..=self.p()).map(|i| format!("y_{i}")));
        w.write_record(&header)?;
        for t in 0..self.len() {
            let mut rec = vec![t.to_string()];
            rec.extend(self.u.row(t).iter().map(|v| v.to_string()));
            rec.extend(self.y.row(t).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header = rd.headers()?.clone();
        let names: Vec<&str> = header.iter().collect();
        if names.first() != Some(&"t") {
            return Err(SysIdError::Format("first column must be `t`".into()));
        }
        let r = names.iter().filter(|n| n.starts_with("u_")).count();
        let p = names.iter().filter(|n| n.starts_with("y_")).count();
        let expected: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=r).map(|i| format!("u_{i}")))
            .chain((1..=p).map(|i| format!("y_{i}")))
            .collect();
        if names != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(SysIdError::Format(format!("unexpected header {names:?}, want {expected:?}")));
        }
        let mut u = Vec::new();
        let mut y = Vec::new();
        for (row, rec) in rd.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| SysIdError::Format(format!("row {}, column {}: {e}", row + 2, names[i])))
            };
            let t = parse(0)?;
            if t != row as f64 {
                return Err(SysIdError::Format(format!("row {}: expected t = {row}, got {t}", row + 2)));
            }
            for i in 0..r {
                u.push(parse(1 + i)?);
            }
            for i in 0..p {
                y.push(parse(1 + r + i)?);
            }
        }
        let n = u.len() / r.max(1);
        if r == 0 || p == 0 {
            return Err(SysIdError::Format("need at least one u_ and one y_ column".into()));
        }
        Self::from_data(DMatrix::from_row_slice(n, r, &u), DMatrix::from_row_slice(n, p, &y))
    }
}

fn draw<R: Rng>(rng: &mut R, kind: NoiseKind, sigma: f64) -> f64 {
    match kind {
        NoiseKind::Gaussian => sigma * rng.sample::<f64, _>(StandardNormal),
        NoiseKind::Rademacher => {
            if rng.random::<bool>() {
                sigma
            } else {
                -sigma
            }
        }
    }
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates `n` samples with iid inputs of scale `sigma_u`.
///
/// Each step draws `u_t` (r values), then `w_t` (d), then `v_t` (p), even for
/// zero scales, so changing a noise level never shifts the other streams.
pub fn simulate(sys: &StateSpace, noise: &NoiseSpec, n: usize, seed: u64, opts: SimOptions) -> Result<Trajectory> {
    if n == 0 {
        return arg_err("trajectory length must be >= 1");
    }
    if !(noise.sigma_u >= 0.0 && noise.sigma_w >= 0.0 && noise.sigma_v >= 0.0) {
        return arg_err("noise scales must be non-negative");
    }
    run(sys, noise, n, seed, opts, None)
}

/// Simulates with a prescribed `N x r` input sequence; only `w` and `v` are random.
pub fn simulate_driven(
    sys: &StateSpace,
    inputs: &DMatrix<f64>,
    sigma_w: f64,
    sigma_v: f64,
    seed: u64,
    opts: SimOptions,
) -> Result<Trajectory> {
    if inputs.ncols() != sys.r() {
        return dim_err(format!("inputs have {} columns, system has r = {}", inputs.ncols(), sys.r()));
    }
    if inputs.nrows() == 0 {
        return arg_err("trajectory length must be >= 1");
    }
    let noise = NoiseSpec { sigma_u: 0.0, sigma_w, sigma_v };
    run(sys, &noise, inputs.nrows(), seed, opts, Some(inputs))
}

fn run(
    sys: &StateSpace,
    noise: &NoiseSpec,
    n: usize,
    seed: u64,
    opts: SimOptions,
    inputs: Option<&DMatrix<f64>>,
) -> Result<Trajectory> {
    let (d, r, p) = (sys.d(), sys.r(), sys.p());
    let mut rng = rng_for(seed, opts.stream);
    let mut u = DMatrix::zeros(n, r);
    let mut y = DMatrix::zeros(n, p);
    let mut diag = opts.diagnostics.then(|| Diagnostics {
        state_u: DMatrix::zeros(n, d),
        process_out: DMatrix::zeros(n, p),
        output_noise: DMatrix::zeros(n, p),
    });
    // the two parts are propagated separately so diagnostics are exact
    let mut xu = DVector::zeros(d);
    let mut xw = DVector::zeros(d);
    let mut ut = DVector::zeros(r);
    let mut wt = DVector::zeros(d);
    let mut vt = DVector::zeros(p);
    for t in 0..n {
        match inputs {
            Some(m) => ut.copy_from(&m.row(t).transpose()),
            None => ut.iter_mut().for_each(|v| *v = draw(&mut rng, opts.kind, noise.sigma_u)),
        }
        wt.iter_mut().for_each(|v| *v = draw(&mut rng, opts.kind, noise.sigma_w));
        vt.iter_mut().for_each(|v| *v = draw(&mut rng, opts.kind, noise.sigma_v));

        let cxu = sys.c() * &xu;
        let cxw = sys.c() * &xw;
        let yt = &cxu + &cxw + &vt;
        u.row_mut(t).copy_from(&ut.transpose());
        y.row_mut(t).copy_from(&yt.transpose());
        if let Some(dg) = diag.as_mut() {
            dg.state_u.row_mut(t).copy_from(&xu.transpose());
            dg.process_out.row_mut(t).copy_from(&cxw.transpose());
            dg.output_noise.row_mut(t).copy_from(&vt.transpose());
        }

        xu = sys.a() * &xu + sys.b() * &ut;
        xw = sys.a() * &xw + &wt;
        let norm = (&xu + &xw).norm();
        if !(norm <= OVERFLOW_GUARD) {
            return Err(SysIdError::Overflow { step: t + 1, norm });
        }
    }
    Ok(Trajectory { u, y, x_final: Some(xu + xw), seed: Some(seed), diagnostics: diag })
}

/// Stacked outputs and input windows at Hankel order `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub y: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub t: usize,
    pub r: usize,
    pub p: usize,
}

impl RegressionData {
    pub fn n_bar(&self) -> usize {
        self.y.nrows()
    }
}

/// First regression row index for order `T`.
pub fn first_row(t: usize) -> usize {
    2 * t - 1
}

pub fn build_regression(traj: &Trajectory, t: usize) -> Result<RegressionData> {
    if t == 0 {
        return arg_err("Hankel order must be >= 1");
    }
    let n = traj.len();
    if n < 2 * t {
        return arg_err(format!("trajectory of length {n} is too short for order {t} (need >= {})", 2 * t));
    }
    let (r, p) = (traj.r(), traj.p());
    let start = first_row(t);
    let n_bar = n - start;
    let width = 2 * t - 1;
    let mut x = DMatrix::zeros(n_bar, width * r);
    for row in 0..n_bar {
        let l = start + row;
        for k in 0..width {
            x.view_mut((row, k * r), (1, r)).copy_from(&traj.u.row(l - 1 - k));
        }
    }
    let y = traj.y.rows(start, n_bar).into_owned();
    Ok(RegressionData { y, x, t, r, p })
}

/// Split of `Y - X G0` by source: truncation tail, process noise, output noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseParts {
    pub tail: DMatrix<f64>,
    pub process: DMatrix<f64>,
    pub output: DMatrix<f64>,
}

/// Requires a trajectory simulated with diagnostics from `sys`.
pub fn noise_parts(traj: &Trajectory, sys: &StateSpace, t: usize) -> Result<NoiseParts> {
    let Some(dg) = traj.diagnostics() else {
        return arg_err("trajectory was simulated without diagnostics");
    };
    if dg.state_u.ncols() != sys.d() || traj.p() != sys.p() {
        return dim_err("diagnostics do not match the system dimensions");
    }
    let n = traj.len();
    if n < 2 * t || t == 0 {
        return arg_err(format!("trajectory of length {n} is too short for order {t}"));
    }
    let start = first_row(t);
    let n_bar = n - start;
    let mut ca = sys.c().clone();
    for _ in 0..2 * t - 1 {
        ca *= sys.a();
    }
    // row l uses x^u_{l-2T+1}, i.e. state rows 0..n_bar
    let tail = (ca * dg.state_u.rows(0, n_bar).transpose()).transpose();
    Ok(NoiseParts {
        tail,
        process: dg.process_out.rows(start, n_bar).into_owned(),
        output: dg.output_noise.rows(start, n_bar).into_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{markov_params, random_stable_system};
    use nalgebra::dmatrix;

    fn half() -> StateSpace {
        StateSpace::scalar(0.5, 1.0, 1.0)
    }

    #[test]
    fn unit_input_geometric_outputs() {
        let u = DMatrix::from_element(6, 1, 1.0);
        let traj = simulate_driven(&half(), &u, 0.0, 0.0, 0, SimOptions::default()).unwrap();
        let y: Vec<f64> = traj.outputs().iter().copied().collect();
        for (n, v) in y.iter().enumerate() {
            assert!((v - 2.0 * (1.0 - 0.5f64.powi(n as i32))).abs() < 1e-15);
        }
        assert_eq!(&y[..4], &[0.0, 1.0, 1.5, 1.75]);
    }

    #[test]
    fn zero_scales_give_zero_outputs() {
        let noise = NoiseSpec { sigma_u: 0.0, sigma_w: 0.0, sigma_v: 0.0 };
        let traj = simulate(&half(), &noise, 50, 3, SimOptions::default()).unwrap();
        assert!(traj.outputs().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn output_variance_matches_closed_form() {
        let noise = NoiseSpec::new(1.0, 0.0, 0.0).unwrap();
        let traj = simulate(&half(), &noise, 100_000, 42, SimOptions::default()).unwrap();
        let y = traj.outputs().rows(100, 99_900);
        let mean = y.mean();
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
        assert!((var / (4.0 / 3.0) - 1.0).abs() < 0.03, "var = {var}");
    }

    #[test]
    fn same_seed_same_trajectory_other_stream_differs() {
        let noise = NoiseSpec::new(1.0, 0.3, 0.2).unwrap();
        let a = simulate(&half(), &noise, 200, 9, SimOptions::default()).unwrap();
        let b = simulate(&half(), &noise, 200, 9, SimOptions::default()).unwrap();
        assert_eq!(a, b);
        let c = simulate(&half(), &noise, 200, 9, SimOptions { stream: 1, ..Default::default() }).unwrap();
        assert_ne!(a.inputs(), c.inputs());
    }

    #[test]
    fn rademacher_values_are_signed_scale() {
        let noise = NoiseSpec::new(0.7, 0.0, 0.0).unwrap();
        let opts = SimOptions { kind: NoiseKind::Rademacher, ..Default::default() };
        let traj = simulate(&half(), &noise, 100, 1, opts).unwrap();
        assert!(traj.inputs().iter().all(|v| (v.abs() - 0.7).abs() < 1e-15));
    }

    #[test]
    fn unstable_system_hits_overflow_guard() {
        let sys = StateSpace::scalar(2.0, 1.0, 1.0);
        let noise = NoiseSpec::new(1.0, 0.0, 0.0).unwrap();
        let err = simulate(&sys, &noise, 500, 0, SimOptions::default()).unwrap_err();
        assert!(matches!(err, SysIdError::Overflow { .. }));
    }

    #[test]
    fn window_bookkeeping_two_inputs() {
        let u = DMatrix::from_fn(6, 2, |t, j| if t % 2 == j { 1.0 } else { 0.0 });
        let traj = Trajectory::from_data(u, DMatrix::zeros(6, 1)).unwrap();
        let reg = build_regression(&traj, 2).unwrap();
        assert_eq!(reg.n_bar(), 3);
        assert_eq!(reg.x.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn regression_rejects_short_trajectory() {
        let traj = Trajectory::from_data(DMatrix::zeros(5, 1), DMatrix::zeros(5, 1)).unwrap();
        assert!(build_regression(&traj, 3).is_err());
        assert!(build_regression(&traj, 2).is_ok());
    }

    #[test]
    fn noiseless_residual_bounded_by_tail() {
        let noise = NoiseSpec::new(1.0, 0.0, 0.0).unwrap();
        let n = 400;
        let traj = simulate(&half(), &noise, n, 5, SimOptions::default()).unwrap();
        let umax = traj.inputs().amax();
        for t in [2, 4, 8] {
            let reg = build_regression(&traj, t).unwrap();
            let g = markov_params(&half(), 2 * t - 1).unwrap().to_stacked();
            let resid = (&reg.y - &reg.x * g).amax();
            // |sum_{k >= 2T} 0.5^{k-1} u| <= 0.5^{2T-1} * 2 * |u|_inf
            let bound = 0.5f64.powi(2 * t as i32 - 1) * 2.0 * umax;
            assert!(resid <= bound * (1.0 + 1e-12), "T={t}: {resid} > {bound}");
        }
    }

    #[test]
    fn noise_parts_reconstruct_residual() {
        let mut rng = rng_for(4, 0);
        let sys = random_stable_system(&mut rng, 3, 2, 2, 0.7);
        let noise = NoiseSpec::new(1.0, 0.3, 0.2).unwrap();
        let opts = SimOptions { diagnostics: true, ..Default::default() };
        let traj = simulate(&sys, &noise, 300, 8, opts).unwrap();
        let t = 3;
        let reg = build_regression(&traj, t).unwrap();
        let g = markov_params(&sys, 2 * t - 1).unwrap().to_stacked();
        let parts = noise_parts(&traj, &sys, t).unwrap();
        let gap = &reg.y - &reg.x * g - (&parts.tail + &parts.process + &parts.output);
        assert!(gap.amax() < 1e-10);
    }

    #[test]
    fn csv_round_trip() {
        let noise = NoiseSpec::new(1.0, 0.1, 0.1).unwrap();
        let sys = StateSpace::new(dmatrix![0.5, 0.0; 0.0, -0.4], dmatrix![1.0; 1.0], dmatrix![1.0, 1.0]).unwrap();
        let traj = simulate(&sys, &noise, 20, 2, SimOptions::default()).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"t,u_1,y_1\n"));
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.inputs(), traj.inputs());
        assert_eq!(back.outputs(), traj.outputs());
    }

    #[test]
    fn csv_rejects_bad_header_and_values() {
        assert!(Trajectory::read_csv("t,y_1,u_1\n0,1,2\n".as_bytes()).is_err());
        assert!(Trajectory::read_csv("t,u_1,y_1\n0,x,2\n".as_bytes()).is_err());
        assert!(Trajectory::read_csv("t,u_1,y_1\n1,0,2\n".as_bytes()).is_err());
    }
}
