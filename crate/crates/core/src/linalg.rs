//! Dense linear-algebra helpers shared by the estimation modules.
//!
//! All decompositions go through [`svd`], which returns singular values in
//! descending order and fixes the sign of each singular pair so that the
//! first non-negligible coordinate of every left singular vector is positive.
//! Factorizations built on top of it are therefore deterministic.

use nalgebra::{Complex, DMatrix, DVector};

/// Relative cutoff used by [`pinv`] and rank decisions.
pub const PINV_RTOL: f64 = 1e-10;

/// Thin SVD `M = U diag(s) Vt` with descending `s` and the sign convention above.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl Svd {
    pub fn rank(&self, rel_tol: f64) -> usize {
        match self.s.iter().next() {
            Some(&s1) if s1 > 0.0 => self.s.iter().filter(|&&v| v > rel_tol * s1).count(),
            _ => 0,
        }
    }

    /// Rank-`d` reconstruction `sum_{i<d} s_i u_i v_i'`.
    pub fn truncated(&self, d: usize) -> DMatrix<f64> {
        let d = d.min(self.s.len());
        let u = self.u.columns(0, d);
        let vt = self.v_t.rows(0, d);
        let mut scaled = u.into_owned();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.s[j];
        }
        scaled * vt
    }
}

type Factors = (DMatrix<f64>, DVector<f64>, DMatrix<f64>);

fn residual(m: &DMatrix<f64>, (u, s, v_t): &Factors) -> f64 {
    (u * DMatrix::from_diagonal(s) * v_t - m).amax()
}

fn factors(dec: nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>) -> Option<Factors> {
    Some((dec.u?, dec.singular_values, dec.v_t?))
}

/// One-sided (Hestenes) Jacobi SVD for `rows >= cols`: orthogonalizes the
/// columns of `M V` by plane rotations. Singular values come out with high
/// relative accuracy; exactly null columns get an orthonormal completion.
fn jacobi_svd_tall(m: &DMatrix<f64>) -> Factors {
    const MAX_SWEEPS: usize = 100;
    let (rows, cols) = m.shape();
    let mut w = m.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                for mat in [&mut w, &mut v] {
                    for i in 0..mat.nrows() {
                        let (x, y) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = c * x - sn * y;
                        mat[(i, q)] = sn * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols).map(|j| w.column(j).norm()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let mut u = DMatrix::zeros(rows, cols);
    let mut s = DVector::zeros(cols);
    let mut v_sorted = DMatrix::zeros(cols, cols);
    for (k, &j) in order.iter().enumerate() {
        s[k] = norms[j];
        v_sorted.set_column(k, &v.column(j));
        if norms[j] > 0.0 {
            u.set_column(k, &(w.column(j) / norms[j]));
        }
    }
    for k in (0..cols).filter(|&k| s[k] == 0.0) {
        // Gram-Schmidt on the standard basis vector least covered so far
        let taken = u.columns(0, cols).into_owned();
        let candidate = (0..rows)
            .map(|i| {
                let mut e = DVector::zeros(rows);
                e[i] = 1.0;
                e -= &taken * (taken.transpose() * &e);
                e
            })
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .expect("rows >= cols >= 1");
        u.set_column(k, &candidate.normalize());
    }
    (u, s, v_sorted.transpose())
}

fn jacobi_svd(m: &DMatrix<f64>) -> Factors {
    if m.nrows() >= m.ncols() {
        jacobi_svd_tall(m)
    } else {
        let (u, s, v_t) = jacobi_svd_tall(&m.transpose());
        (v_t.transpose(), s, u.transpose())
    }
}

// nalgebra's bidiagonal QR returns visibly wrong factors on some
// rank-deficient inputs (entrywise errors of 1e-7 to 1e-2 on exact Hankel
// matrices of order-2 systems), independent of its tolerance. Its result is
// checked by recomposition and replaced by a Jacobi SVD when the check fails.
fn checked_svd(m: &DMatrix<f64>) -> Factors {
    let tol = 1e-12 * m.amax() * m.nrows().max(m.ncols()) as f64;
    let first = factors(m.clone().svd(true, true)).expect("U and V' requested");
    let err = residual(m, &first);
    if err <= tol {
        return first;
    }
    let fallback = jacobi_svd(m);
    let err_fallback = residual(m, &fallback);
    if err_fallback > tol {
        log::debug!("SVD residuals {err:.3e} (QR) and {err_fallback:.3e} (Jacobi) above {tol:.3e}");
    }
    if err_fallback <= err {
        fallback
    } else {
        first
    }
}

pub fn svd(m: &DMatrix<f64>) -> Svd {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Svd { u: DMatrix::zeros(rows, 0), s: DVector::zeros(0), v_t: DMatrix::zeros(0, cols) };
    }
    let (mut u, s, mut v_t) = checked_svd(m);
    for j in 0..k {
        // columns of U are unit vectors, so an absolute cutoff is enough
        let pivot = u.column(j).iter().find(|x| x.abs() > 1e-12).copied();
        if matches!(pivot, Some(x) if x < 0.0) {
            u.column_mut(j).neg_mut();
            v_t.row_mut(j).neg_mut();
        }
    }
    Svd { u, s, v_t }
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows().min(m.ncols()) == 0 {
        return DVector::zeros(0);
    }
    svd(m).s
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().copied().fold(0.0, f64::max)
}

/// Moore-Penrose pseudo-inverse with relative cutoff `rel_tol * s_1`.
pub fn pinv(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let dec = svd(m);
    let (rows, cols) = m.shape();
    let s1 = dec.s.iter().next().copied().unwrap_or(0.0);
    let mut out = DMatrix::zeros(cols, rows);
    for (i, &si) in dec.s.iter().enumerate() {
        if si > rel_tol * s1 && si > 0.0 {
            out += dec.v_t.row(i).transpose() * dec.u.column(i).transpose() / si;
        }
    }
    out
}

/// Schatten-p norm for `p >= 1`; `f64::INFINITY` selects the operator norm.
pub fn schatten_norm(m: &DMatrix<f64>, p: f64) -> f64 {
    let s = singular_values(m);
    schatten_of_spectrum(s.as_slice(), p)
}

pub fn schatten_of_spectrum(s: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        s.iter().copied().fold(0.0, f64::max)
    } else if p == 1.0 {
        s.iter().sum()
    } else if p == 2.0 {
        s.iter().map(|x| x * x).sum::<f64>().sqrt()
    } else {
        s.iter().map(|x| x.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).sum()
}

/// Operator norm of a complex matrix.
///
/// Matrices whose smaller side is 1 or 2 use the closed form of the largest
/// eigenvalue of the Gram matrix; larger ones fall back to a complex SVD.
pub fn complex_spectral_norm(m: &DMatrix<Complex<f64>>) -> f64 {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    match k {
        0 => 0.0,
        1 => m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
        2 => {
            // Gram on the short side: [[a, b], [conj(b), d]].
            let (a, b, d) = if cols == 2 {
                let c0 = m.column(0);
                let c1 = m.column(1);
                (
                    c0.iter().map(|z| z.norm_sqr()).sum::<f64>(),
                    c0.iter().zip(c1.iter()).map(|(x, y)| x.conj() * y).sum::<Complex<f64>>(),
                    c1.iter().map(|z| z.norm_sqr()).sum::<f64>(),
                )
            } else {
                let r0 = m.row(0);
                let r1 = m.row(1);
                (
                    r0.iter().map(|z| z.norm_sqr()).sum::<f64>(),
                    r0.iter().zip(r1.iter()).map(|(x, y)| x * y.conj()).sum::<Complex<f64>>(),
                    r1.iter().map(|z| z.norm_sqr()).sum::<f64>(),
                )
            };
            let half_diff = 0.5 * (a - d);
            let lam = 0.5 * (a + d) + (half_diff * half_diff + b.norm_sqr()).sqrt();
            lam.max(0.0).sqrt()
        }
        _ => m.clone().svd(false, false).singular_values.iter().copied().fold(0.0, f64::max),
    }
}

/// Frobenius inner product `<A, B> = tr(A' B)`.
pub fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}
