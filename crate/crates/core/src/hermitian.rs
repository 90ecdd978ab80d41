//! Dense complex hermitian kernels.
//!
//! Everything in the crate that carries a shape matrix, a structure basis
//! element or a sample outer product goes through [`HermitianMatrix`]. The
//! type guarantees exact hermitian symmetry after construction, which lets
//! the eigen-based operations (PSD projection, spectral and trace norms,
//! proximal maps) rely on a real spectrum.
//!
//! The real vectorization used throughout is
//!
//! ```text
//! vec(M) = (m_00, .., m_{p-1,p-1}, √2·Re m_01, √2·Im m_01, √2·Re m_02, ..)
//! ```
//!
//! with strictly-upper entries in row-major order. It is an isometry
//! between hermitian matrices under `⟨M, N⟩ = Re Tr(MN)` and `ℝ^{p²}`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CVector = DVector<C64>;

/// Asymmetry accepted by [`HermitianMatrix::new`] before symmetrizing.
pub const HERMITIAN_TOL: f64 = 1e-12;

const EIGEN_MAX_SWEEPS: usize = 10_000;

/// Matrix norms used by the COCA objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum NormKind {
    #[default]
    Frobenius,
    Spectral,
    /// Nuclear norm, the sum of absolute eigenvalues.
    Trace,
}

impl NormKind {
    pub const ALL: [NormKind; 3] = [NormKind::Frobenius, NormKind::Spectral, NormKind::Trace];

    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::Frobenius => "frobenius",
            NormKind::Spectral => "spectral",
            NormKind::Trace => "trace",
        }
    }
}

impl std::str::FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "frobenius" | "fro" => Ok(NormKind::Frobenius),
            "spectral" | "operator" => Ok(NormKind::Spectral),
            "trace" | "nuclear" => Ok(NormKind::Trace),
            other => Err(Error::Config(format!("unknown norm kind `{other}`"))),
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dense `p × p` complex hermitian matrix.
#[derive(Clone, PartialEq)]
pub struct HermitianMatrix {
    m: DMatrix<C64>,
}

/// Eigendecomposition `M = V diag(λ) Vᴴ`, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl Eigh {
    /// Reassemble `V diag(f(λ)) Vᴴ`.
    pub fn reassemble(&self, mut f: impl FnMut(f64) -> f64) -> HermitianMatrix {
        let p = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let w = f(lambda);
            for i in 0..p {
                scaled[(i, j)] *= w;
            }
        }
        HermitianMatrix::symmetrized(&scaled * self.vectors.adjoint())
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

impl HermitianMatrix {
    /// Wrap a square matrix, checking hermitian symmetry to within
    /// [`HERMITIAN_TOL`] (relative to the largest entry when that exceeds one)
    /// and then symmetrizing exactly.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidArgument("matrix dimension must be at least 1".into()));
        }
        let scale = m.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
        let asymmetry = asymmetry(&m);
        if asymmetry > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian { asymmetry });
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrize without checking. Used internally where the input is
    /// hermitian up to rounding by construction.
    pub(crate) fn symmetrized(mut m: DMatrix<C64>) -> Self {
        let p = m.nrows();
        for i in 0..p {
            m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
            for h in (i + 1)..p {
                let avg = (m[(i, h)] + m[(h, i)].conj()) * 0.5;
                m[(i, h)] = avg;
                m[(h, i)] = avg.conj();
            }
        }
        Self { m }
    }

    pub fn from_fn(p: usize, mut f: impl FnMut(usize, usize) -> C64) -> Result<Self> {
        Self::new(DMatrix::from_fn(p, p, |i, h| f(i, h)))
    }

    pub fn zeros(p: usize) -> Self {
        Self {
            m: DMatrix::zeros(p, p),
        }
    }

    pub fn identity(p: usize) -> Self {
        Self {
            m: DMatrix::identity(p, p),
        }
    }

    pub fn from_diagonal(values: &[f64]) -> Self {
        let p = values.len();
        let mut m = DMatrix::zeros(p, p);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        Self { m }
    }

    /// Rank-one outer product `x xᴴ`.
    pub fn outer(x: &CVector) -> Self {
        Self::symmetrized(x * x.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn get(&self, i: usize, h: usize) -> C64 {
        self.m[(i, h)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.m[(i, i)].re).sum()
    }

    /// `Re Tr(M N)`, the inner product matched by [`real_vectorize`].
    pub fn inner(&self, other: &HermitianMatrix) -> f64 {
        // Tr(MN) = Σ_ih M_ih N_hi = Σ_ih M_ih conj(N_ih) for hermitian N.
        self.m
            .iter()
            .zip(other.m.iter())
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            m: &self.m * C64::new(s, 0.0),
        }
    }

    /// Rescale so that the trace equals `target`.
    pub fn with_trace(&self, target: f64) -> Self {
        self.scale(target / self.trace())
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: f64, other: &HermitianMatrix) {
        let s = C64::new(s, 0.0);
        for (a, b) in self.m.iter_mut().zip(other.m.iter()) {
            *a += s * b;
        }
    }

    /// `self += s · x xᴴ`.
    pub fn add_outer(&mut self, s: f64, x: &CVector) {
        let p = self.dim();
        for h in 0..p {
            let xh = x[h].conj() * s;
            for i in 0..p {
                self.m[(i, h)] += x[i] * xh;
            }
        }
    }

    /// Hermitian eigendecomposition with eigenvalues sorted ascending.
    pub fn eigh(&self) -> Result<Eigh> {
        let p = self.dim();
        let eig =
            SymmetricEigen::try_new(self.m.clone(), f64::EPSILON, EIGEN_MAX_SWEEPS).ok_or(Error::EigenFailure {
                dim: p,
                max_iterations: EIGEN_MAX_SWEEPS,
            })?;
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
        let vectors = DMatrix::from_fn(p, p, |i, j| eig.eigenvectors[(i, order[j])]);
        Ok(Eigh { values, vectors })
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(self.eigh()?.values)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigh()?.min())
    }

    /// Lower Cholesky factor, `None` unless strictly positive definite.
    pub fn cholesky(&self) -> Option<nalgebra::Cholesky<C64, nalgebra::Dyn>> {
        // The complex factorization takes square roots of negative pivots
        // instead of failing, so pivots are checked explicitly.
        let chol = self.m.clone().cholesky()?;
        let l = chol.l_dirty();
        let ok = (0..self.dim()).all(|i| {
            let d = l[(i, i)];
            d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-8 * d.re
        });
        ok.then_some(chol)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.cholesky().is_some()
    }

    /// Inverse of a positive-definite matrix.
    pub fn inverse_pd(&self) -> Result<HermitianMatrix> {
        let chol = self.cholesky().ok_or(Error::NotPositiveDefinite)?;
        Ok(Self::symmetrized(chol.inverse()))
    }

    /// `log |M|` of a positive-definite matrix.
    pub fn log_det_pd(&self) -> Result<f64> {
        let chol = self.cholesky().ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l_dirty();
        Ok(2.0 * (0..self.dim()).map(|i| l[(i, i)].re.ln()).sum::<f64>())
    }

    /// Frobenius-nearest PSD matrix: negative eigenvalues clamped to zero.
    ///
    /// Strictly positive-definite inputs (Cholesky succeeds) are returned
    /// unchanged without an eigendecomposition.
    pub fn psd_project(&self) -> Result<HermitianMatrix> {
        if self.is_positive_definite() {
            return Ok(self.clone());
        }
        Ok(self.eigh()?.reassemble(|l| l.max(0.0)))
    }

    pub fn real_vectorize(&self) -> Vec<f64> {
        real_vectorize(self)
    }

    pub fn norm(&self, kind: NormKind) -> Result<f64> {
        matrix_norm(self, kind)
    }
}

fn asymmetry(m: &DMatrix<C64>) -> f64 {
    let p = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..p {
        worst = worst.max(m[(i, i)].im.abs());
        for h in (i + 1)..p {
            worst = worst.max((m[(i, h)] - m[(h, i)].conj()).norm());
        }
    }
    worst
}

impl fmt::Debug for HermitianMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HermitianMatrix{}", self.m)
    }
}

impl Add for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix { m: &self.m + &rhs.m }
    }
}

impl Sub for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix { m: &self.m - &rhs.m }
    }
}

impl Add for HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix { m: self.m + rhs.m }
    }
}

impl Sub for HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix { m: self.m - rhs.m }
    }
}

impl AddAssign<&HermitianMatrix> for HermitianMatrix {
    fn add_assign(&mut self, rhs: &HermitianMatrix) {
        self.m += &rhs.m;
    }
}

impl SubAssign<&HermitianMatrix> for HermitianMatrix {
    fn sub_assign(&mut self, rhs: &HermitianMatrix) {
        self.m -= &rhs.m;
    }
}

impl Mul<f64> for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn mul(self, s: f64) -> HermitianMatrix {
        self.scale(s)
    }
}

impl Neg for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn neg(self) -> HermitianMatrix {
        HermitianMatrix { m: -&self.m }
    }
}

/// `Re(xᴴ M x)`.
pub fn quad_form(m: &HermitianMatrix, x: &CVector) -> Result<f64> {
    let p = m.dim();
    if x.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: x.len(),
        });
    }
    let mut acc = C64::new(0.0, 0.0);
    for h in 0..p {
        let mut row = C64::new(0.0, 0.0);
        for i in 0..p {
            row += x[i].conj() * m.m[(i, h)];
        }
        acc += row * x[h];
    }
    debug_assert!(
        acc.im.abs() <= 1e-10 * m.frobenius_norm() * x.norm_squared() + 1e-14,
        "quadratic form of a hermitian matrix has imaginary part {}",
        acc.im
    );
    Ok(acc.re)
}

/// Frobenius-nearest PSD matrix. Eigenvalues below zero are clamped to
/// exactly zero.
pub fn psd_project(m: &HermitianMatrix) -> Result<HermitianMatrix> {
    m.psd_project()
}

/// Isometric real vectorization; see the module docs for the layout.
pub fn real_vectorize(m: &HermitianMatrix) -> Vec<f64> {
    let p = m.dim();
    let mut out = Vec::with_capacity(p * p);
    out.extend((0..p).map(|i| m.m[(i, i)].re));
    for i in 0..p {
        for h in (i + 1)..p {
            let z = m.m[(i, h)];
            out.push(std::f64::consts::SQRT_2 * z.re);
            out.push(std::f64::consts::SQRT_2 * z.im);
        }
    }
    out
}

/// Inverse of [`real_vectorize`].
pub fn from_real_vec(p: usize, v: &[f64]) -> Result<HermitianMatrix> {
    if v.len() != p * p {
        return Err(Error::DimensionMismatch {
            expected: p * p,
            found: v.len(),
        });
    }
    let mut m = DMatrix::zeros(p, p);
    for i in 0..p {
        m[(i, i)] = C64::new(v[i], 0.0);
    }
    let mut k = p;
    for i in 0..p {
        for h in (i + 1)..p {
            let z = C64::new(v[k], v[k + 1]) * std::f64::consts::FRAC_1_SQRT_2;
            m[(i, h)] = z;
            m[(h, i)] = z.conj();
            k += 2;
        }
    }
    Ok(HermitianMatrix { m })
}

pub fn matrix_norm(m: &HermitianMatrix, kind: NormKind) -> Result<f64> {
    match kind {
        NormKind::Frobenius => Ok(m.frobenius_norm()),
        NormKind::Spectral => {
            let eig = m.eigh()?;
            Ok(eig.min().abs().max(eig.max().abs()))
        }
        NormKind::Trace => Ok(m.eigh()?.values.iter().map(|l| l.abs()).sum()),
    }
}

/// Proximal operator `argmin_X t‖X‖ + ½‖X − M‖_F²`.
pub fn norm_prox(m: &HermitianMatrix, kind: NormKind, t: f64) -> Result<HermitianMatrix> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "prox parameter must be positive, got {t}"
        )));
    }
    match kind {
        NormKind::Frobenius => {
            let norm = m.frobenius_norm();
            if norm <= t {
                Ok(HermitianMatrix::zeros(m.dim()))
            } else {
                Ok(m.scale(1.0 - t / norm))
            }
        }
        NormKind::Trace => {
            let eig = m.eigh()?;
            Ok(eig.reassemble(|l| l.signum() * (l.abs() - t).max(0.0)))
        }
        NormKind::Spectral => {
            // Moreau: prox_{t‖·‖₂}(M) = M − t·Π_{‖·‖_* ≤ 1}(M / t).
            let eig = m.eigh()?;
            let scaled: Vec<f64> = eig.values.iter().map(|l| l / t).collect();
            let ball = project_l1_ball(&scaled, 1.0);
            let shifted: Vec<f64> = eig.values.iter().zip(&ball).map(|(l, b)| l - t * b).collect();
            let mut idx = 0;
            Ok(eig.reassemble(|_| {
                let v = shifted[idx];
                idx += 1;
                v
            }))
        }
    }
}

/// Euclidean projection onto `{v : ‖v‖₁ ≤ radius}`.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in mags.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - radius) / (j as f64 + 1.0);
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    v.iter().map(|x| x.signum() * (x.abs() - theta).max(0.0)).collect()
}

/// Euclidean projection onto `{v ≥ 0, Σv ≤ radius}`.
pub fn project_capped_nonnegative(v: &[f64], radius: f64) -> Vec<f64> {
    let clamped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    if clamped.iter().sum::<f64>() <= radius {
        return clamped;
    }
    // Active sum constraint: projection onto the simplex Σv = radius.
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - radius) / (j as f64 + 1.0);
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    pub(crate) fn random_hermitian(p: usize, rng: &mut impl Rng) -> HermitianMatrix {
        let a = DMatrix::from_fn(p, p, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        HermitianMatrix::symmetrized(&a + a.adjoint())
    }

    #[test]
    fn construction_rejects_asymmetric_input() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(HermitianMatrix::new(m), Err(Error::NotHermitian { .. })));
        assert!(HermitianMatrix::new(DMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn construction_symmetrizes_small_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0, 1e-14), c(0.5, 0.25), c(0.5 + 1e-14, -0.25), c(2.0, 0.0)]);
        let h = HermitianMatrix::new(m).unwrap();
        assert_eq!(h.get(0, 0).im, 0.0);
        assert_eq!(h.get(0, 1), h.get(1, 0).conj());
    }

    #[test]
    fn quad_form_examples() {
        let x = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(quad_form(&HermitianMatrix::identity(2), &x).unwrap(), 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = CVector::from_fn(3, |_, _| c(rng.gen(), rng.gen()));
        x /= C64::new(x.norm(), 0.0);
        let q = quad_form(&HermitianMatrix::identity(3), &x).unwrap();
        assert!((q - 1.0).abs() < 1e-15);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let x = CVector::from_vec(vec![c(s, 0.0), c(s, 0.0)]);
        let q = quad_form(&HermitianMatrix::from_diagonal(&[2.0, 0.5]), &x).unwrap();
        assert!((q - 1.25).abs() < 1e-15);

        let bad = CVector::from_vec(vec![c(1.0, 0.0)]);
        assert!(matches!(
            quad_form(&HermitianMatrix::identity(2), &bad),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn eigh_residual_meets_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in [1, 2, 5, 10, 30] {
            let m = random_hermitian(p, &mut rng);
            let eig = m.eigh().unwrap();
            let norm = m.frobenius_norm();
            for j in 0..p {
                let v = eig.vectors.column(j).into_owned();
                let r = m.as_matrix() * &v - &v * C64::new(eig.values[j], 0.0);
                assert!(r.norm() <= 1e-10 * norm, "p={p} residual {}", r.norm());
            }
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn psd_project_examples() {
        let m = HermitianMatrix::from_diagonal(&[1.0, -1.0]);
        let proj = psd_project(&m).unwrap();
        assert!((&proj - &HermitianMatrix::from_diagonal(&[1.0, 0.0])).frobenius_norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_hermitian(4, &mut rng);
        let psd = HermitianMatrix::symmetrized(a.as_matrix() * a.as_matrix().adjoint());
        let proj = psd_project(&psd).unwrap();
        assert!((&proj - &psd).frobenius_norm() < 1e-12);
    }

    #[test]
    fn real_vectorize_examples() {
        assert_eq!(real_vectorize(&HermitianMatrix::identity(2)), vec![1.0, 1.0, 0.0, 0.0]);
        let swap = HermitianMatrix::new(DMatrix::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
        ))
        .unwrap();
        let v = real_vectorize(&swap);
        assert_eq!(v[..2], [0.0, 0.0]);
        assert!((v[2] - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(v[3], 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_hermitian(5, &mut rng);
        let v = real_vectorize(&m);
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((vnorm - m.frobenius_norm()).abs() < 1e-12);
        let back = from_real_vec(5, &v).unwrap();
        assert!((&back - &m).frobenius_norm() < 1e-14);
    }

    #[test]
    fn norm_examples() {
        let i3 = HermitianMatrix::identity(3);
        assert!((matrix_norm(&i3, NormKind::Frobenius).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        let d = HermitianMatrix::from_diagonal(&[3.0, -1.0]);
        assert!((matrix_norm(&d, NormKind::Spectral).unwrap() - 3.0).abs() < 1e-14);
        assert!((matrix_norm(&d, NormKind::Trace).unwrap() - 4.0).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let m = random_hermitian(6, &mut rng);
            let tr = matrix_norm(&m, NormKind::Trace).unwrap();
            let sp = matrix_norm(&m, NormKind::Spectral).unwrap();
            let fro = matrix_norm(&m, NormKind::Frobenius).unwrap();
            assert!(tr >= sp - 1e-12);
            assert!(sp >= fro / 6f64.sqrt() - 1e-12);
        }
    }

    #[test]
    fn norm_prox_examples() {
        let zero = HermitianMatrix::zeros(3);
        for kind in NormKind::ALL {
            let out = norm_prox(&zero, kind, 0.7).unwrap();
            assert!(out.frobenius_norm() < 1e-15, "{kind}");
        }
        let small = HermitianMatrix::from_diagonal(&[0.3, -0.4]);
        assert!(norm_prox(&small, NormKind::Frobenius, 0.5).unwrap().frobenius_norm() < 1e-15);

        let m = HermitianMatrix::from_diagonal(&[3.0, 0.5]);
        let out = norm_prox(&m, NormKind::Trace, 1.0).unwrap();
        assert!((&out - &HermitianMatrix::from_diagonal(&[2.0, 0.0])).frobenius_norm() < 1e-14);

        // Spectral prox clips the largest magnitudes: diag(3, 0.5), t = 1 → diag(2, 0.5).
        let out = norm_prox(&m, NormKind::Spectral, 1.0).unwrap();
        assert!((&out - &HermitianMatrix::from_diagonal(&[2.0, 0.5])).frobenius_norm() < 1e-14);

        assert!(norm_prox(&m, NormKind::Trace, 0.0).is_err());
    }

    #[test]
    fn simplex_style_projections() {
        assert_eq!(project_l1_ball(&[0.2, -0.3], 1.0), vec![0.2, -0.3]);
        let p = project_l1_ball(&[3.0, -1.0], 1.0);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1].abs() < 1e-15);
        let q = project_capped_nonnegative(&[-1.0, 0.5, 2.0], 1.0);
        assert_eq!(q, vec![0.0, 0.0, 1.0]);
        let q = project_capped_nonnegative(&[-1.0, 0.25, 0.5], 1.0);
        assert_eq!(q, vec![0.0, 0.25, 0.5]);
    }
}
