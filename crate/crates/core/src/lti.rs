//! Realization-theory primitives: state-space triples, Markov parameters,
//! the block-Hankel operator and its pseudo-inverse adjoint, and the
//! spectral quantities (spectral radius, grid H-infinity norm) used to size
//! noise amplification.
//!
//! Block indices are 1-based in the docs (`g_1 = CB`) and 0-based in storage.

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{arg_err, dim_err, Result, SysIdError};
use crate::linalg;

/// Hidden-state LTI system `x+ = A x + B u + w`, `y = C x + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let d = a.nrows();
        if d == 0 || !a.is_square() {
            return dim_err(format!("A must be square and non-empty, got {:?}", a.shape()));
        }
        if b.nrows() != d || b.ncols() == 0 {
            return dim_err(format!("B must be {d}xr with r >= 1, got {:?}", b.shape()));
        }
        if c.ncols() != d || c.nrows() == 0 {
            return dim_err(format!("C must be px{d} with p >= 1, got {:?}", c.shape()));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|x| !x.is_finite()) {
            return arg_err("system matrices contain non-finite entries");
        }
        Ok(Self { a, b, c })
    }

    pub fn scalar(a: f64, b: f64, c: f64) -> Self {
        Self::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b), DMatrix::from_element(1, 1, c))
            .expect("1x1 system is always consistent")
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    /// State dimension.
    pub fn d(&self) -> usize {
        self.a.nrows()
    }
    /// Input dimension.
    pub fn r(&self) -> usize {
        self.b.ncols()
    }
    /// Output dimension.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_stable(&self) -> bool {
        spectral_radius(&self.a).map(|rho| rho < 1.0).unwrap_or(false)
    }

    /// Similarity transform `(S A S^-1, S B, C S^-1)`.
    pub fn transformed(&self, s: &DMatrix<f64>) -> Result<Self> {
        let s_inv = s
            .clone()
            .try_inverse()
            .ok_or_else(|| SysIdError::InvalidArgument("similarity transform is singular".into()))?;
        Self::new(s * &self.a * &s_inv, s * &self.b, &self.c * s_inv)
    }
}

/// Standard deviations of the input, process-noise and output-noise sequences.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseSpec {
    pub sigma_u: f64,
    pub sigma_w: f64,
    pub sigma_v: f64,
}

impl NoiseSpec {
    pub fn new(sigma_u: f64, sigma_w: f64, sigma_v: f64) -> Result<Self> {
        let spec = Self { sigma_u, sigma_w, sigma_v };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_u.is_finite() && self.sigma_u > 0.0) {
            return arg_err(format!("sigma_u must be > 0, got {}", self.sigma_u));
        }
        for (name, v) in [("sigma_w", self.sigma_w), ("sigma_v", self.sigma_v)] {
            if !(v.is_finite() && v >= 0.0) {
                return arg_err(format!("{name} must be >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// Ordered sequence of equally shaped `p x r` blocks `[g_1, ..., g_L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSeq {
    blocks: Vec<DMatrix<f64>>,
    p: usize,
    r: usize,
}

impl MarkovSeq {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return arg_err("a Markov sequence needs at least one block");
        };
        let (p, r) = first.shape();
        if let Some((k, b)) = blocks.iter().enumerate().find(|(_, b)| b.shape() != (p, r)) {
            return dim_err(format!("block {} has shape {:?}, expected {:?}", k + 1, b.shape(), (p, r)));
        }
        Ok(Self { blocks, p, r })
    }

    pub fn zeros(len: usize, p: usize, r: usize) -> Self {
        Self { blocks: vec![DMatrix::zeros(p, r); len], p, r }
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }
    pub fn len(&self) -> usize {
        self.blocks.len()
    }
    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn r(&self) -> usize {
        self.r
    }

    /// Stacked transposes `[g_1'; g_2'; ...]`, shape `(L r) x p`; this is the
    /// unknown `G` in the regression `Y = X G`.
    pub fn to_stacked(&self) -> DMatrix<f64> {
        let (p, r) = (self.p, self.r);
        let mut out = DMatrix::zeros(self.len() * r, p);
        for (k, g) in self.blocks.iter().enumerate() {
            out.view_mut((k * r, 0), (r, p)).copy_from(&g.transpose());
        }
        out
    }

    pub fn from_stacked(stacked: &DMatrix<f64>, r: usize) -> Result<Self> {
        if r == 0 || stacked.nrows() % r != 0 || stacked.nrows() == 0 {
            return dim_err(format!("{} rows do not split into blocks of {r}", stacked.nrows()));
        }
        let blocks =
            (0..stacked.nrows() / r).map(|k| stacked.view((k * r, 0), (r, stacked.ncols())).transpose()).collect();
        Self::new(blocks)
    }

    /// First `len` blocks, zero-padded when the sequence is shorter.
    pub fn resized(&self, len: usize) -> Self {
        let mut blocks: Vec<_> = self.blocks.iter().take(len).cloned().collect();
        blocks.resize(len, DMatrix::zeros(self.p, self.r));
        Self { blocks, p: self.p, r: self.r }
    }

    /// Blocks `[start, start + len)` (0-based).
    pub fn window(&self, start: usize, len: usize) -> Self {
        let blocks = self.blocks.iter().skip(start).take(len).cloned().collect();
        Self { blocks, p: self.p, r: self.r }
    }
}

/// A `Tp x Tr` block-Hankel matrix whose block `(i, j)` depends only on `i + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelMatrix {
    data: DMatrix<f64>,
    t: usize,
    p: usize,
    r: usize,
}

impl HankelMatrix {
    /// Wraps `data`, checking the block-Hankel structure to a relative 1e-12.
    pub fn from_matrix(data: DMatrix<f64>, t: usize, p: usize, r: usize) -> Result<Self> {
        if t == 0 || data.shape() != (t * p, t * r) {
            return dim_err(format!("expected {}x{}, got {:?}", t * p, t * r, data.shape()));
        }
        let tol = 1e-12 * data.amax().max(1.0);
        for i in 0..t {
            for j in 0..t {
                // compare with the representative on the first row / last column
                let (i0, j0) = if i + j < t { (0, i + j) } else { (i + j - (t - 1), t - 1) };
                let blk = data.view((i * p, j * r), (p, r));
                let rep = data.view((i0 * p, j0 * r), (p, r));
                if (blk - rep).amax() > tol {
                    return Err(SysIdError::NotHankel(i + 1, j + 1, i0 + 1, j0 + 1));
                }
            }
        }
        Ok(Self { data, t, p, r })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }
    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }
    pub fn order(&self) -> usize {
        self.t
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn r(&self) -> usize {
        self.r
    }
}

/// `[CB, CAB, ..., C A^{count-1} B]`, one matrix product per block.
pub fn markov_params(sys: &StateSpace, count: usize) -> Result<MarkovSeq> {
    if count == 0 {
        return arg_err("count must be >= 1");
    }
    let mut blocks = Vec::with_capacity(count);
    let mut a_pow_b = sys.b.clone();
    for k in 0..count {
        blocks.push(&sys.c * &a_pow_b);
        if k + 1 < count {
            a_pow_b = &sys.a * a_pow_b;
        }
    }
    MarkovSeq::new(blocks)
}

/// Number of `(i, j)` pairs with `i + j - 1 = k` in a `T x T` block grid (1-based `k`).
pub fn antidiagonal_weight(k: usize, t: usize) -> usize {
    debug_assert!(k >= 1 && k < 2 * t);
    k.min(t).min(2 * t - k)
}

/// Order-`T` Hankel operator applied to a sequence of exactly `2T - 1` blocks.
pub fn hankel_map(g: &MarkovSeq, t: usize) -> Result<HankelMatrix> {
    if t == 0 || g.len() != 2 * t - 1 {
        return dim_err(format!("order {t} needs {} blocks, got {}", 2 * t.max(1) - 1, g.len()));
    }
    let (p, r) = (g.p, g.r);
    let mut data = DMatrix::zeros(t * p, t * r);
    for i in 0..t {
        for j in 0..t {
            data.view_mut((i * p, j * r), (p, r)).copy_from(&g.blocks[i + j]);
        }
    }
    Ok(HankelMatrix { data, t, p, r })
}

/// Hankel operator on the stacked form `G = [g_1'; ...; g_{2T-1}']`.
pub(crate) fn hankel_of_stacked(g: &DMatrix<f64>, t: usize, p: usize, r: usize) -> DMatrix<f64> {
    let mut data = DMatrix::zeros(t * p, t * r);
    for i in 0..t {
        for j in 0..t {
            let blk = g.view(((i + j) * r, 0), (r, p));
            data.view_mut((i * p, j * r), (p, r)).copy_from(&blk.transpose());
        }
    }
    data
}

/// Adjoint of [`hankel_of_stacked`]: block `k` sums the transposed blocks on anti-diagonal `k`.
pub(crate) fn hankel_adjoint_stacked(m: &DMatrix<f64>, t: usize, p: usize, r: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros((2 * t - 1) * r, p);
    for i in 0..t {
        for j in 0..t {
            let blk = m.view((i * p, j * r), (p, r)).transpose();
            let mut dst = out.view_mut(((i + j) * r, 0), (r, p));
            dst += blk;
        }
    }
    out
}

/// Adjoint of the pseudo-inverse of the Hankel operator.
///
/// `h` stacks `2T - 1` blocks of shape `r x p`. Block `(i, j)` of the result is
/// `h_{i+j-1}' / w(i+j-1)` with `w` the anti-diagonal multiplicity, so that
/// `<h, G> = <H†* h, H G>` for every stacked `G`.
pub fn hankel_adjoint_pinv(h: &DMatrix<f64>, t: usize) -> Result<DMatrix<f64>> {
    let blocks = 2 * t.max(1) - 1;
    if t == 0 || h.nrows() == 0 || h.nrows() % blocks != 0 || h.ncols() == 0 {
        return dim_err(format!("{} rows do not split into {blocks} blocks", h.nrows()));
    }
    let r = h.nrows() / blocks;
    let p = h.ncols();
    let mut out = DMatrix::zeros(t * p, t * r);
    for i in 0..t {
        for j in 0..t {
            let w = antidiagonal_weight(i + j + 1, t) as f64;
            let blk = h.view(((i + j) * r, 0), (r, p)).transpose() / w;
            out.view_mut((i * p, j * r), (p, r)).copy_from(&blk);
        }
    }
    Ok(out)
}

/// `[C; CA; ...; C A^{T-1}]`.
pub fn observability(sys: &StateSpace, t: usize) -> Result<DMatrix<f64>> {
    observability_of(&sys.a, &sys.c, t)
}

pub(crate) fn observability_of(a: &DMatrix<f64>, c: &DMatrix<f64>, t: usize) -> Result<DMatrix<f64>> {
    if t == 0 {
        return arg_err("order must be >= 1");
    }
    let (p, d) = c.shape();
    let mut out = DMatrix::zeros(t * p, d);
    let mut row = c.clone();
    for k in 0..t {
        out.view_mut((k * p, 0), (p, d)).copy_from(&row);
        if k + 1 < t {
            row *= a;
        }
    }
    Ok(out)
}

/// `[B, AB, ..., A^{T-1} B]`.
pub fn controllability(sys: &StateSpace, t: usize) -> Result<DMatrix<f64>> {
    controllability_of(&sys.a, &sys.b, t)
}

pub(crate) fn controllability_of(a: &DMatrix<f64>, b: &DMatrix<f64>, t: usize) -> Result<DMatrix<f64>> {
    if t == 0 {
        return arg_err("order must be >= 1");
    }
    let (d, r) = b.shape();
    let mut out = DMatrix::zeros(d, t * r);
    let mut col = b.clone();
    for k in 0..t {
        out.view_mut((0, k * r), (d, r)).copy_from(&col);
        if k + 1 < t {
            col = a * col;
        }
    }
    Ok(out)
}

/// Rank of the order-`T` Hankel matrix: singular values above `rank_tol * s_1`.
pub fn mcmillan_degree(g: &MarkovSeq, t: usize, rank_tol: f64) -> Result<usize> {
    if !(rank_tol > 0.0) {
        return arg_err("rank_tol must be > 0");
    }
    let h = hankel_map(g, t)?;
    let s = linalg::singular_values(h.matrix());
    let s1 = s.iter().copied().fold(0.0, f64::max);
    if s1 == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > rank_tol * s1).count())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    if !a.is_square() {
        return dim_err(format!("spectral radius needs a square matrix, got {:?}", a.shape()));
    }
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    Ok(a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Grid H-infinity norm: `max_x |sum_j g_{j+1} e^{i 2 pi j x}|` over `x = k / grid`.
pub fn hinf_norm(g: &MarkovSeq, grid: usize) -> Result<f64> {
    if grid < 64 {
        return arg_err(format!("grid must be >= 64, got {grid}"));
    }
    let (p, r) = (g.p, g.r);
    let mut best = 0.0_f64;
    let mut acc = DMatrix::<Complex<f64>>::zeros(p, r);
    for k in 0..grid {
        let x = k as f64 / grid as f64;
        acc.fill(Complex::new(0.0, 0.0));
        for (j, blk) in g.blocks.iter().enumerate() {
            let phase = Complex::from_polar(1.0, 2.0 * std::f64::consts::PI * (j as f64) * x);
            acc.zip_apply(blk, |z, v| *z += phase * v);
        }
        best = best.max(linalg::complex_spectral_norm(&acc));
    }
    Ok(best)
}

/// Computable stand-in for the Jordan constant of `A`: `max_{k <= kmax} |A^k| / rho(A)^k`.
///
/// Returns `None` when `rho(A)` is (numerically) zero.
pub fn jordan_constant(a: &DMatrix<f64>, kmax: usize) -> Result<Option<f64>> {
    let rho = spectral_radius(a)?;
    if rho < 1e-12 {
        return Ok(None);
    }
    let mut psi = 1.0_f64;
    let mut pow = DMatrix::identity(a.nrows(), a.nrows());
    let mut rho_k = 1.0;
    for _ in 0..kmax {
        pow = &pow * a;
        rho_k *= rho;
        if rho_k < 1e-300 {
            break;
        }
        psi = psi.max(linalg::spectral_norm(&pow) / rho_k);
    }
    Ok(Some(psi))
}

/// Truncation length for infinite Markov sums: smallest `k` with
/// `psi * rho^k * |C| |B| < 1e-10` (capped at `cap`). Nilpotent `A` gives `d`.
pub fn default_horizon(sys: &StateSpace, cap: usize) -> Result<usize> {
    let rho = spectral_radius(&sys.a)?;
    if rho >= 1.0 {
        return Ok(cap);
    }
    let Some(psi) = jordan_constant(&sys.a, 200)? else {
        return Ok(sys.d().min(cap).max(1));
    };
    let scale = psi * linalg::spectral_norm(&sys.c).max(1e-300) * linalg::spectral_norm(&sys.b).max(1e-300);
    let k = ((1e-10 / scale).ln() / rho.ln()).ceil();
    Ok(if k.is_finite() && k > 0.0 { (k as usize).clamp(1, cap) } else { 1 })
}

/// Random stable system with prescribed spectral radius and Gaussian `B`, `C`.
///
/// Such draws are minimal with probability one.
pub fn random_stable_system<R: Rng + ?Sized>(rng: &mut R, d: usize, r: usize, p: usize, rho: f64) -> StateSpace {
    loop {
        let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let Ok(current) = spectral_radius(&a) else { continue };
        if current < 1e-6 {
            continue;
        }
        let a = a * (rho / current);
        let b = DMatrix::from_fn(d, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let c = DMatrix::from_fn(p, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Ok(sys) = StateSpace::new(a, b, c) {
            return sys;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn half() -> StateSpace {
        StateSpace::scalar(0.5, 1.0, 1.0)
    }

    fn scalar_seq(v: &[f64]) -> MarkovSeq {
        MarkovSeq::new(v.iter().map(|&x| DMatrix::from_element(1, 1, x)).collect()).unwrap()
    }

    fn scalars(g: &MarkovSeq) -> Vec<f64> {
        g.blocks().iter().map(|b| b[(0, 0)]).collect()
    }

    #[test]
    fn rejects_inconsistent_dimensions() {
        let err = StateSpace::new(DMatrix::zeros(2, 2), DMatrix::zeros(3, 1), DMatrix::zeros(1, 2));
        assert!(matches!(err, Err(SysIdError::DimensionMismatch(_))));
        assert!(NoiseSpec::new(0.0, 0.1, 0.1).is_err());
        assert!(NoiseSpec::new(1.0, -0.1, 0.1).is_err());
    }

    #[test]
    fn markov_scalar_geometric() {
        assert_eq!(scalars(&markov_params(&half(), 3).unwrap()), vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn markov_nilpotent() {
        let sys = StateSpace::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        let g = markov_params(&sys, 2).unwrap();
        assert_eq!(g.blocks()[0], DMatrix::identity(2, 2));
        assert_eq!(g.blocks()[1], DMatrix::zeros(2, 2));
    }

    #[test]
    fn markov_upper_triangular_example() {
        // direct iteration: A^2 B = [0.98, 0.64]', A^3 B = [0.946, 0.512]'
        let sys = StateSpace::new(dmatrix![0.9, 0.1; 0.0, 0.8], dmatrix![1.0; 1.0], dmatrix![1.0, 0.0]).unwrap();
        let got = scalars(&markov_params(&sys, 4).unwrap());
        for (g, e) in got.iter().zip([1.0, 1.0, 0.98, 0.946]) {
            assert!((g - e).abs() < 1e-12, "{got:?}");
        }
    }

    #[test]
    fn markov_rejects_zero_count() {
        assert!(markov_params(&half(), 0).is_err());
    }

    #[test]
    fn hankel_small_cases() {
        let h = hankel_map(&scalar_seq(&[1.0, 2.0, 3.0]), 2).unwrap();
        assert_eq!(h.matrix(), &dmatrix![1.0, 2.0; 2.0, 3.0]);
        let h = hankel_map(&scalar_seq(&[5.0]), 1).unwrap();
        assert_eq!(h.matrix(), &dmatrix![5.0]);
        assert!(hankel_map(&scalar_seq(&[1.0, 2.0]), 2).is_err());
    }

    #[test]
    fn geometric_hankel_is_rank_one() {
        let h = hankel_map(&markov_params(&half(), 5).unwrap(), 3).unwrap();
        let s = linalg::singular_values(h.matrix());
        // H = v v' with v = [1, 0.5, 0.25], so s_1 = |v|^2 = 1.3125
        assert!((s[0] - 1.3125).abs() < 1e-12);
        assert!(s[1].abs() < 1e-12 && s[2].abs() < 1e-12);
    }

    #[test]
    fn hankel_structure_checked() {
        let bad = dmatrix![1.0, 2.0; 2.5, 3.0];
        assert!(matches!(HankelMatrix::from_matrix(bad, 2, 1, 1), Err(SysIdError::NotHankel(..))));
        let good = dmatrix![1.0, 2.0; 2.0, 3.0];
        assert!(HankelMatrix::from_matrix(good, 2, 1, 1).is_ok());
    }

    #[test]
    fn adjoint_pinv_scalar_weights() {
        let h = DMatrix::from_column_slice(3, 1, &[1.0, 4.0, 6.0]);
        assert_eq!(hankel_adjoint_pinv(&h, 2).unwrap(), dmatrix![1.0, 2.0; 2.0, 6.0]);
        let h = DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(hankel_adjoint_pinv(&h, 3).unwrap(), dmatrix![1.0, 1.0, 1.0; 1.0, 1.0, 2.0; 1.0, 2.0, 5.0]);
        assert!(hankel_adjoint_pinv(&DMatrix::zeros(4, 1), 3).is_err());
    }

    #[test]
    fn antidiagonal_weights_by_enumeration() {
        for t in 1..7 {
            let mut counts = vec![0usize; 2 * t - 1];
            for i in 0..t {
                for j in 0..t {
                    counts[i + j] += 1;
                }
            }
            for k in 1..2 * t {
                assert_eq!(antidiagonal_weight(k, t), counts[k - 1]);
            }
        }
    }

    #[test]
    fn adjoint_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (t, p, r) = (4, 2, 3);
        let g = DMatrix::from_fn((2 * t - 1) * r, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let h = DMatrix::from_fn((2 * t - 1) * r, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let lhs = linalg::inner(&h, &g);
        let rhs = linalg::inner(&hankel_adjoint_pinv(&h, t).unwrap(), &hankel_of_stacked(&g, t, p, r));
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        // the plain adjoint satisfies <M, H G> = <H' M, G>
        let m = DMatrix::from_fn(t * p, t * r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = linalg::inner(&m, &hankel_of_stacked(&g, t, p, r));
        let b = linalg::inner(&hankel_adjoint_stacked(&m, t, p, r), &g);
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn stacked_form_matches_hankel_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let blocks = (0..5).map(|_| DMatrix::from_fn(2, 3, |_, _| rng.random::<f64>())).collect();
        let g = MarkovSeq::new(blocks).unwrap();
        let via_stacked = hankel_of_stacked(&g.to_stacked(), 3, 2, 3);
        assert_eq!(&via_stacked, hankel_map(&g, 3).unwrap().matrix());
        assert_eq!(MarkovSeq::from_stacked(&g.to_stacked(), 3).unwrap(), g);
    }

    #[test]
    fn observability_controllability_scalar() {
        let o = observability(&half(), 3).unwrap();
        let c = controllability(&half(), 3).unwrap();
        assert_eq!(o.as_slice(), &[1.0, 0.5, 0.25]);
        assert_eq!(c.as_slice(), &[1.0, 0.5, 0.25]);
    }

    #[test]
    fn hankel_factorizes_as_o_times_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sys = random_stable_system(&mut rng, 3, 2, 2, 0.8);
        let t = 5;
        let h = hankel_map(&markov_params(&sys, 2 * t - 1).unwrap(), t).unwrap();
        let oc = observability(&sys, t).unwrap() * controllability(&sys, t).unwrap();
        assert!((h.matrix() - oc).norm() <= 1e-10);
    }

    #[test]
    fn random_minimal_system_has_full_rank_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for d in 1..=4 {
            let sys = random_stable_system(&mut rng, d, 1, 1, 0.7);
            let o = observability(&sys, d + 1).unwrap();
            let c = controllability(&sys, d + 1).unwrap();
            assert_eq!(linalg::svd(&o).rank(1e-8), d);
            assert_eq!(linalg::svd(&c).rank(1e-8), d);
        }
    }

    #[test]
    fn mcmillan_examples() {
        assert_eq!(mcmillan_degree(&markov_params(&half(), 5).unwrap(), 3, 1e-8).unwrap(), 1);
        assert_eq!(mcmillan_degree(&MarkovSeq::zeros(5, 1, 1), 3, 1e-8).unwrap(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sys = random_stable_system(&mut rng, 2, 1, 1, 0.6);
        assert_eq!(mcmillan_degree(&markov_params(&sys, 7).unwrap(), 4, 1e-8).unwrap(), 2);
    }

    #[test]
    fn spectral_radius_examples() {
        assert!((spectral_radius(&dmatrix![0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!(spectral_radius(&dmatrix![0.0, 1.0; 0.0, 0.0]).unwrap().abs() < 1e-15);
        assert!(spectral_radius(&DMatrix::zeros(2, 3)).is_err());
        // complex pair 0.6 e^{+-i}
        let rot = dmatrix![0.6 * 1f64.cos(), -0.6 * 1f64.sin(); 0.6 * 1f64.sin(), 0.6 * 1f64.cos()];
        assert!((spectral_radius(&rot).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn hinf_of_geometric_sequence() {
        let g = markov_params(&half(), 32).unwrap();
        let v = hinf_norm(&g, 512).unwrap();
        let oracle = (1.0 - 0.5f64.powi(32)) / (1.0 - 0.5);
        assert!((v - oracle).abs() < 1e-12);
        assert!(hinf_norm(&g, 32).is_err());
    }

    #[test]
    fn horizon_reaches_tolerance() {
        let k = default_horizon(&half(), 100_000).unwrap();
        assert!(0.5f64.powi(k as i32) < 1e-10 && 0.5f64.powi(k as i32 - 1) >= 1e-10);
        let nil = StateSpace::new(dmatrix![0.0, 1.0; 0.0, 0.0], dmatrix![0.0; 1.0], dmatrix![1.0, 0.0]).unwrap();
        assert_eq!(default_horizon(&nil, 100).unwrap(), 2);
    }
}
