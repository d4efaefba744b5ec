use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{dim_err, Result};
use crate::linalg;
use crate::lti::{controllability_of, hankel_map, observability_of, MarkovSeq};
use crate::realize::Realization;

/// Schatten-`p` norm of `H(g_hat) - H(g0)` at order `T`.
pub fn hankel_loss(g_hat: &MarkovSeq, g0: &MarkovSeq, t: usize, p: f64) -> Result<f64> {
    Ok(linalg::schatten_norm(&hankel_difference(g_hat, g0, t)?, p))
}

fn hankel_difference(g_hat: &MarkovSeq, g0: &MarkovSeq, t: usize) -> Result<DMatrix<f64>> {
    if g_hat.len() != g0.len() || g_hat.p() != g0.p() || g_hat.r() != g0.r() {
        return dim_err(format!(
            "sequences differ: {} blocks of {}x{} vs {} blocks of {}x{}",
            g_hat.len(),
            g_hat.p(),
            g_hat.r(),
            g0.len(),
            g0.p(),
            g0.r()
        ));
    }
    Ok(hankel_map(g_hat, t)?.into_matrix() - hankel_map(g0, t)?.into_matrix())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HankelLosses {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

/// All three Hankel losses from one SVD.
pub fn hankel_losses(g_hat: &MarkovSeq, g0: &MarkovSeq, t: usize) -> Result<HankelLosses> {
    let s = linalg::singular_values(&hankel_difference(g_hat, g0, t)?);
    let s = s.as_slice();
    Ok(HankelLosses {
        l1: linalg::schatten_of_spectrum(s, 1.0),
        l2: linalg::schatten_of_spectrum(s, 2.0),
        linf: linalg::schatten_of_spectrum(s, f64::INFINITY),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationLoss {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `a + b + c`, or `+inf` on a dimension mismatch.
    pub total: f64,
    /// Orthogonal `R` with the estimate aligned as `(R A R', R B, C R')`.
    #[serde(skip)]
    pub alignment: DMatrix<f64>,
    pub dimension_mismatch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub hankel: HankelLosses,
    pub realization: RealizationLoss,
}

/// Orthogonal `Q` minimizing `|M Q - N|_F`.
fn procrustes(m: &DMatrix<f64>, n: &DMatrix<f64>) -> DMatrix<f64> {
    let dec = linalg::svd(&(m.transpose() * n));
    &dec.u * &dec.v_t
}

fn stacked_factors(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, order: usize) -> Result<DMatrix<f64>> {
    let o = observability_of(a, c, order)?;
    let k = controllability_of(a, b, order)?.transpose();
    let mut out = DMatrix::zeros(o.nrows() + k.nrows(), a.nrows());
    out.rows_mut(0, o.nrows()).copy_from(&o);
    out.rows_mut(o.nrows(), k.nrows()).copy_from(&k);
    Ok(out)
}

fn aligned(est: &Realization, reference: &Realization, r: &DMatrix<f64>) -> RealizationLoss {
    let a = (r * &est.a * r.transpose() - &reference.a).norm();
    let b = (r * &est.b - &reference.b).norm();
    let c = (&est.c * r.transpose() - &reference.c).norm();
    RealizationLoss { a, b, c, total: a + b + c, alignment: r.clone(), dimension_mismatch: false }
}

/// Realization error up to an orthogonal change of basis.
///
/// The basis is fitted by Procrustes on the stacked observability and
/// controllability factors of order `d + 1`; when both realizations carry
/// balanced factors of the same shape those give a second candidate, and the
/// smaller loss is kept. Restricting to orthogonal maps means the result
/// upper-bounds the infimum over all similarity transforms.
pub fn realization_loss(est: &Realization, reference: &Realization) -> Result<RealizationLoss> {
    if est.p() != reference.p() || est.r() != reference.r() {
        return dim_err("realizations have different input or output dimensions");
    }
    let d = est.d_hat;
    if d != reference.d_hat {
        return Ok(RealizationLoss {
            a: f64::INFINITY,
            b: f64::INFINITY,
            c: f64::INFINITY,
            total: f64::INFINITY,
            alignment: DMatrix::zeros(0, 0),
            dimension_mismatch: true,
        });
    }
    if d == 0 {
        return Ok(aligned(est, reference, &DMatrix::zeros(0, 0)));
    }
    let m_est = stacked_factors(&est.a, &est.b, &est.c, d + 1)?;
    let m_ref = stacked_factors(&reference.a, &reference.b, &reference.c, d + 1)?;
    let mut best = aligned(est, reference, &procrustes(&m_est, &m_ref).transpose());
    if est.obs.shape() == reference.obs.shape() && est.ctrb.shape() == reference.ctrb.shape() {
        let stack = |r: &Realization| {
            let mut out = DMatrix::zeros(r.obs.nrows() + r.ctrb.ncols(), d);
            out.rows_mut(0, r.obs.nrows()).copy_from(&r.obs);
            out.rows_mut(r.obs.nrows(), r.ctrb.ncols()).copy_from(&r.ctrb.transpose());
            out
        };
        let other = aligned(est, reference, &procrustes(&stack(est), &stack(reference)).transpose());
        if other.total < best.total {
            best = other;
        }
    }
    Ok(best)
}

pub fn loss_report(
    g_hat: &MarkovSeq,
    g0: &MarkovSeq,
    t: usize,
    est: &Realization,
    reference: &Realization,
) -> Result<LossReport> {
    Ok(LossReport { hankel: hankel_losses(g_hat, g0, t)?, realization: realization_loss(est, reference)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{markov_params, random_stable_system, StateSpace};
    use crate::realize::balanced_realization;
    use crate::simulate::rng_for;
    use nalgebra::dmatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn bare(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Realization {
        let d = a.nrows();
        Realization {
            d_hat: d,
            source_singulars: vec![],
            obs: DMatrix::zeros(0, d),
            ctrb: DMatrix::zeros(d, 0),
            s_d_oplus: 0.0,
            a,
            b,
            c,
        }
    }

    fn random_orthogonal(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
        let m = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let dec = linalg::svd(&m);
        dec.u * dec.v_t
    }

    #[test]
    fn identical_sequences_have_zero_loss() {
        let g = markov_params(&StateSpace::scalar(0.5, 1.0, 1.0), 5).unwrap();
        let l = hankel_losses(&g, &g, 3).unwrap();
        assert_eq!((l.l1, l.l2, l.linf), (0.0, 0.0, 0.0));
    }

    #[test]
    fn known_spectrum_losses() {
        // H(g) = diag(3, -4)
        let g = MarkovSeq::new([3.0, 0.0, -4.0].iter().map(|&v| DMatrix::from_element(1, 1, v)).collect()).unwrap();
        let zero = MarkovSeq::zeros(3, 1, 1);
        let l = hankel_losses(&g, &zero, 2).unwrap();
        assert!((l.l1 - 7.0).abs() < 1e-12 && (l.l2 - 5.0).abs() < 1e-12 && (l.linf - 4.0).abs() < 1e-12);
        assert!((hankel_loss(&g, &zero, 2, 2.0).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn frobenius_loss_matches_explicit_difference() {
        let mut rng = rng_for(3, 0);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
            MarkovSeq::new(
                (0..7).map(|_| DMatrix::from_fn(2, 3, |_, _| rng.sample::<f64, _>(StandardNormal))).collect(),
            )
            .unwrap()
        };
        let (a, b) = (mk(&mut rng), mk(&mut rng));
        let diff = hankel_map(&a, 4).unwrap().into_matrix() - hankel_map(&b, 4).unwrap().into_matrix();
        assert!((hankel_loss(&a, &b, 4, 2.0).unwrap() - diff.norm()).abs() < 1e-12);
        assert!(hankel_loss(&a, &MarkovSeq::zeros(5, 2, 3), 3, 2.0).is_err());
    }

    #[test]
    fn identical_realizations_align_with_identity() {
        let mut rng = rng_for(6, 0);
        let sys = random_stable_system(&mut rng, 3, 2, 1, 0.8);
        let real = balanced_realization(&sys, 4).unwrap();
        let loss = realization_loss(&real, &real).unwrap();
        assert!(loss.total < 1e-10);
        assert!((loss.alignment - DMatrix::identity(3, 3)).amax() < 1e-8);
    }

    #[test]
    fn rotated_realization_is_recovered() {
        let mut rng = rng_for(8, 0);
        for d in 1..=4 {
            let sys = random_stable_system(&mut rng, d, 2, 2, 0.8);
            let q = random_orthogonal(&mut rng, d);
            let reference = bare(sys.a().clone(), sys.b().clone(), sys.c().clone());
            let rotated = bare(&q * sys.a() * q.transpose(), &q * sys.b(), sys.c() * q.transpose());
            assert!(realization_loss(&rotated, &reference).unwrap().total <= 1e-8);
        }
    }

    #[test]
    fn scalar_sign_flip() {
        let est = bare(dmatrix![0.5], dmatrix![1.0], dmatrix![1.0]);
        let reference = bare(dmatrix![0.5], dmatrix![-1.0], dmatrix![-1.0]);
        let loss = realization_loss(&est, &reference).unwrap();
        assert!(loss.total < 1e-14);
        assert_eq!(loss.alignment, dmatrix![-1.0]);
    }

    #[test]
    fn order_mismatch_is_flagged() {
        let est = bare(dmatrix![0.5], dmatrix![1.0], dmatrix![1.0]);
        let reference = bare(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1), DMatrix::zeros(1, 2));
        let loss = realization_loss(&est, &reference).unwrap();
        assert!(loss.dimension_mismatch && loss.total.is_infinite());
    }
}
