//! Order detection by singular-value thresholding and Ho-Kalman realization.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{arg_err, dim_err, Result, SysIdError};
use crate::linalg::{self, PINV_RTOL};
use crate::lti::{hankel_map, markov_params, MarkovSeq, StateSpace};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderEstimate {
    pub d_check: usize,
    pub xi: f64,
    pub singular_values: Vec<f64>,
}

/// Counts singular values `>= 2 xi` (the boundary counts).
pub fn estimate_order(h: &DMatrix<f64>, xi: f64) -> Result<OrderEstimate> {
    if !(xi > 0.0 && xi.is_finite()) {
        return arg_err(format!("xi must be > 0, got {xi}"));
    }
    let s: Vec<f64> = linalg::singular_values(h).iter().copied().collect();
    Ok(OrderEstimate { d_check: count_above(&s, xi), xi, singular_values: s })
}

pub fn count_above(s: &[f64], xi: f64) -> usize {
    s.iter().filter(|&&v| v >= 2.0 * xi).count()
}

/// Best rank-`d` approximation `sum_{i<=d} s_i u_i v_i'`.
pub fn truncate_svd(h: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    if d > h.nrows().min(h.ncols()) {
        return arg_err(format!("rank {d} exceeds matrix dimensions {:?}", h.shape()));
    }
    Ok(linalg::svd(h).truncated(d))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d_hat: usize,
    /// The `d_hat` retained singular values of the input Hankel matrix.
    pub source_singulars: Vec<f64>,
    /// Balanced observability factor `U S^{1/2}`, `Tp x d`.
    pub obs: DMatrix<f64>,
    /// Balanced controllability factor `S^{1/2} V'`, `d x Tr`.
    pub ctrb: DMatrix<f64>,
    /// `s_d(O+)`, smallest singular value of the observability factor without its last block row.
    pub s_d_oplus: f64,
}

impl Realization {
    pub fn p(&self) -> usize {
        self.c.nrows()
    }
    pub fn r(&self) -> usize {
        self.b.ncols()
    }

    pub fn to_state_space(&self) -> Option<StateSpace> {
        StateSpace::new(self.a.clone(), self.b.clone(), self.c.clone()).ok()
    }

    /// `[C B, C A B, ...]`; all zeros for the empty realization.
    pub fn markov(&self, count: usize) -> Result<MarkovSeq> {
        match self.to_state_space() {
            Some(sys) => markov_params(&sys, count),
            None if count == 0 => arg_err("count must be >= 1"),
            None => Ok(MarkovSeq::zeros(count, self.p(), self.r())),
        }
    }

    pub fn empty(p: usize, r: usize, t: usize) -> Self {
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, r),
            c: DMatrix::zeros(p, 0),
            d_hat: 0,
            source_singulars: Vec::new(),
            obs: DMatrix::zeros(t * p, 0),
            ctrb: DMatrix::zeros(0, t * r),
            s_d_oplus: 0.0,
        }
    }
}

/// Ho-Kalman realization of order `d` from a `Tp x Tr` Hankel estimate.
///
/// With `U S V'` the rank-`d` SVD: `O = U S^{1/2}`, `Ctrb = S^{1/2} V'`,
/// `A = pinv(O+) O-` where `O+` drops the last block row of `O` and `O-` the
/// first, `B` is the first block column of `Ctrb`, `C` the first block row of `O`.
pub fn ho_kalman(h: &DMatrix<f64>, d: usize, t: usize) -> Result<Realization> {
    if t == 0 || h.nrows() % t != 0 || h.ncols() % t != 0 || h.is_empty() {
        return dim_err(format!("{:?} is not a block matrix of order {t}", h.shape()));
    }
    let (p, r) = (h.nrows() / t, h.ncols() / t);
    if d == 0 {
        return Ok(Realization::empty(p, r, t));
    }
    if t < d + 1 {
        return arg_err(format!("order {t} is too small for a rank-{d} realization (need T >= d + 1)"));
    }
    let dec = linalg::svd(h);
    if d > dec.s.len() || !(dec.s[d - 1] > 0.0) {
        return arg_err(format!("s_{d} of the Hankel estimate is zero"));
    }
    let mut obs = dec.u.columns(0, d).into_owned();
    let mut ctrb = dec.v_t.rows(0, d).into_owned();
    for i in 0..d {
        let root = dec.s[i].sqrt();
        obs.column_mut(i).scale_mut(root);
        ctrb.row_mut(i).scale_mut(root);
    }
    let o_plus = obs.rows(0, p * (t - 1)).into_owned();
    let o_minus = obs.rows(p, p * (t - 1)).into_owned();
    let s_op = linalg::singular_values(&o_plus);
    let s_d_oplus = s_op[d - 1];
    // measured against |O|_op = s_1(H)^{1/2}, not s_1(O+), which may itself be round-off
    if !(s_d_oplus > PINV_RTOL * dec.s[0].sqrt()) {
        return Err(SysIdError::UnobservableTruncation(s_d_oplus));
    }
    let a = linalg::pinv(&o_plus, PINV_RTOL) * o_minus;
    let b = ctrb.columns(0, r).into_owned();
    let c = obs.rows(0, p).into_owned();
    Ok(Realization {
        a,
        b,
        c,
        d_hat: d,
        source_singulars: dec.s.iter().take(d).copied().collect(),
        obs,
        ctrb,
        s_d_oplus,
    })
}

/// Balanced realization of a known minimal system from its exact order-`T` Hankel matrix.
pub fn balanced_realization(sys: &StateSpace, t: usize) -> Result<Realization> {
    let h = hankel_map(&markov_params(sys, 2 * t - 1)?, t)?;
    ho_kalman(h.matrix(), sys.d(), t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityMargin {
    pub satisfied: bool,
    /// `rhs - err`; negative when violated.
    pub slack: f64,
    pub rhs: f64,
}

/// Largest Hankel error (Frobenius) under which the robust realization bound applies:
/// `(sqrt2 - 1)^{1/2} s_d(O+) s_d(H)^{1/2} / (2 sqrt2)`.
pub fn stability_rhs(s_d_oplus: f64, s_d_h: f64) -> f64 {
    (2f64.sqrt() - 1.0).sqrt() * s_d_oplus * s_d_h.sqrt() / (2.0 * 2f64.sqrt())
}

pub fn stability_margin(err_s2: f64, s_d_oplus: f64, s_d_h: f64) -> Result<StabilityMargin> {
    if !(err_s2 >= 0.0 && s_d_oplus >= 0.0 && s_d_h >= 0.0) {
        return arg_err("stability margin inputs must be non-negative");
    }
    let rhs = stability_rhs(s_d_oplus, s_d_h);
    Ok(StabilityMargin { satisfied: err_s2 <= rhs, slack: rhs - err_s2, rhs })
}

/// Bound on the aligned realization error once the margin holds:
/// `2^{3/2} (1 + |A|_op) / ((sqrt2 - 1)^{1/2} s_d(O+) s_d(H)^{1/2}) * err`.
pub fn realization_error_bound(a_norm: f64, s_d_oplus: f64, s_d_h: f64, err_s2: f64) -> f64 {
    2f64.powf(1.5) * (1.0 + a_norm) / ((2f64.sqrt() - 1.0).sqrt() * s_d_oplus * s_d_h.sqrt()) * err_s2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::random_stable_system;
    use crate::simulate::rng_for;
    use nalgebra::dmatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn sorted_moduli(a: &DMatrix<f64>) -> Vec<f64> {
        let mut m: Vec<f64> = a.complex_eigenvalues().iter().map(|z| z.norm()).collect();
        m.sort_by(|x, y| x.partial_cmp(y).unwrap());
        m
    }

    #[test]
    fn order_threshold_examples() {
        let h = DMatrix::from_diagonal(&nalgebra::dvector![5.0, 3.0, 0.1]);
        assert_eq!(estimate_order(&h, 1.0).unwrap().d_check, 2);
        assert_eq!(estimate_order(&DMatrix::zeros(3, 3), 0.5).unwrap().d_check, 0);
        // boundary: s_2 = 2 xi exactly
        assert_eq!(estimate_order(&h, 1.5).unwrap().d_check, 2);
        assert!(estimate_order(&h, 0.0).is_err());
    }

    #[test]
    fn truncation_examples() {
        let v = nalgebra::dvector![1.0, 0.5, 0.25];
        let rank1 = &v * v.transpose();
        assert!((truncate_svd(&rank1, 1).unwrap() - &rank1).norm() < 1e-10);
        assert_eq!(truncate_svd(&rank1, 0).unwrap(), DMatrix::zeros(3, 3));
        assert!(truncate_svd(&rank1, 4).is_err());
    }

    #[test]
    fn truncation_error_is_tail_energy() {
        let mut rng = rng_for(31, 0);
        let m = DMatrix::from_fn(6, 6, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = linalg::singular_values(&m);
        let tail: f64 = s.iter().skip(2).map(|v| v * v).sum();
        let err = (&m - truncate_svd(&m, 2).unwrap()).norm_squared();
        assert!((err - tail).abs() < 1e-10);
        assert!((linalg::spectral_norm(&(&m - truncate_svd(&m, 2).unwrap())) - s[2]).abs() < 1e-10);
    }

    #[test]
    fn scalar_round_trip() {
        let sys = StateSpace::scalar(0.5, 1.0, 1.0);
        let real = balanced_realization(&sys, 4).unwrap();
        assert!((real.a[(0, 0)] - 0.5).abs() < 1e-10);
        let g = real.markov(7).unwrap();
        for (k, blk) in g.blocks().iter().enumerate() {
            assert!((blk[(0, 0)] - 0.5f64.powi(k as i32)).abs() < 1e-10);
        }
    }

    #[test]
    fn random_systems_round_trip_and_balance() {
        let mut rng = rng_for(2, 0);
        for d in 1..=3 {
            for _ in 0..5 {
                let sys = random_stable_system(&mut rng, d, 2, 2, 0.9);
                let t = d + 2;
                let real = balanced_realization(&sys, t).unwrap();
                let want = markov_params(&sys, 2 * t - 1).unwrap();
                let got = real.markov(2 * t - 1).unwrap();
                for (a, b) in got.blocks().iter().zip(want.blocks()) {
                    assert!((a - b).amax() < 1e-8);
                }
                let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(real.source_singulars.clone()));
                assert!((real.obs.transpose() * &real.obs - &sigma).amax() < 1e-8);
                assert!((&real.ctrb * real.ctrb.transpose() - &sigma).amax() < 1e-8);
                for (x, y) in sorted_moduli(&real.a).iter().zip(sorted_moduli(sys.a())) {
                    assert!((x - y).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn empty_realization() {
        let real = ho_kalman(&DMatrix::zeros(3, 3), 0, 3).unwrap();
        assert_eq!(real.d_hat, 0);
        assert!(real.markov(5).unwrap().blocks().iter().all(|b| b[(0, 0)] == 0.0));
    }

    #[test]
    fn ho_kalman_preconditions() {
        let h = dmatrix![1.0, 0.5; 0.5, 0.25];
        assert!(ho_kalman(&h, 2, 2).is_err());
        assert!(ho_kalman(&DMatrix::zeros(3, 3), 1, 3).is_err());
        assert!(ho_kalman(&DMatrix::zeros(3, 4), 1, 3).is_err());
    }

    #[test]
    fn unobservable_truncation_detected() {
        // rank one with all mass in the last block row: O+ vanishes
        let mut h = DMatrix::zeros(3, 3);
        h[(2, 0)] = 1.0;
        assert!(matches!(ho_kalman(&h, 1, 3), Err(SysIdError::UnobservableTruncation(_))));
    }

    #[test]
    fn margin_examples() {
        let m = stability_margin(0.0, 0.8, 0.4).unwrap();
        assert!(m.satisfied && (m.slack - m.rhs).abs() < 1e-15);
        let rhs = stability_rhs(0.8, 0.4);
        assert!(stability_margin(rhs, 0.8, 0.4).unwrap().satisfied);
        assert!(!stability_margin(2.0 * rhs, 0.8, 0.4).unwrap().satisfied);
        assert!(stability_margin(-1.0, 0.8, 0.4).is_err());
    }

    #[test]
    fn weyl_inequality_on_perturbations() {
        let mut rng = rng_for(5, 0);
        for _ in 0..50 {
            let m = DMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let e = DMatrix::from_fn(4, 4, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));
            let s1 = linalg::singular_values(&m);
            let s2 = linalg::singular_values(&(&m + &e));
            let bound = linalg::spectral_norm(&e);
            for (a, b) in s1.iter().zip(s2.iter()) {
                assert!((a - b).abs() <= bound + 1e-12);
            }
        }
    }
}
