//! Affine structure sets `{B₀ + Σ aᵢBᵢ} ∩ PSD` and their trace-fixed
//! reparametrizations.
//!
//! Basis ordering conventions (coefficient vectors depend on them):
//!
//! * Toeplitz: `I`, then the real symmetric off-diagonal indicators for
//!   offsets `1..p`, then the imaginary antisymmetric ones (`+j` above the
//!   diagonal) for the same offsets.
//! * Banded: the `p` diagonal units `E_ii`, then `E_ih + E_hi` for
//!   `0 < h − i ≤ b` in row-major order, then `jE_ih − jE_hi` in the same
//!   order.
//! * DOA: one steering outer product `b(θ)b(θ)ᴴ` per grid angle, with
//!   nonnegative coefficients.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::hermitian::{project_capped_nonnegative, project_l1_ball, CVector, HermitianMatrix, C64};

const INDEPENDENCE_RATIO: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;

/// Uniform-linear-array angle grid for the DOA structure.
#[derive(Debug, Clone, PartialEq)]
pub struct DoaGrid {
    pub p: usize,
    pub angles: Vec<f64>,
    pub noise_power: f64,
}

impl DoaGrid {
    pub fn new(p: usize, angles: Vec<f64>, noise_power: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument("sensor count must be at least 1".into()));
        }
        if angles.is_empty() {
            return Err(Error::InvalidArgument("DOA grid needs at least one angle".into()));
        }
        if angles.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument(
                "DOA grid angles must be strictly increasing".into(),
            ));
        }
        if !(noise_power > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise power must be positive, got {noise_power}"
            )));
        }
        Ok(Self { p, angles, noise_power })
    }

    /// `count` grid points at the midpoints of equal subintervals of
    /// `[low, high]`.
    pub fn uniform(p: usize, count: usize, low: f64, high: f64, noise_power: f64) -> Result<Self> {
        if count == 0 || !(high > low) {
            return Err(Error::InvalidArgument(format!(
                "invalid DOA grid: {count} points on [{low}, {high}]"
            )));
        }
        let width = (high - low) / count as f64;
        let angles = (0..count).map(|k| low + (k as f64 + 0.5) * width).collect();
        Self::new(p, angles, noise_power)
    }
}

/// Uniform linear array steering vector `(1, e^{jθ}, .., e^{j(p−1)θ})`.
pub fn steering_vector(p: usize, theta: f64) -> CVector {
    CVector::from_fn(p, |k, _| C64::from_polar(1.0, k as f64 * theta))
}

#[derive(Debug, Clone, PartialEq)]
pub enum StructureFamily {
    Toeplitz,
    Banded { band: usize },
    Doa(DoaGrid),
    Custom,
}

impl StructureFamily {
    pub fn name(&self) -> &'static str {
        match self {
            StructureFamily::Toeplitz => "toeplitz",
            StructureFamily::Banded { .. } => "banded",
            StructureFamily::Doa(_) => "doa",
            StructureFamily::Custom => "custom",
        }
    }
}

/// Constraints on the coefficient vector beyond the affine hull.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CoefficientBounds {
    pub nonnegative: bool,
    pub l1_bound: Option<f64>,
}

impl CoefficientBounds {
    pub fn is_free(&self) -> bool {
        !self.nonnegative && self.l1_bound.is_none()
    }

    /// Euclidean projection of a coefficient vector onto the bound set.
    pub fn project(&self, a: &[f64]) -> Vec<f64> {
        match (self.nonnegative, self.l1_bound) {
            (false, None) => a.to_vec(),
            (true, None) => a.iter().map(|x| x.max(0.0)).collect(),
            (true, Some(r)) => project_capped_nonnegative(a, r),
            (false, Some(r)) => project_l1_ball(a, r),
        }
    }

    pub fn violation(&self, a: &[f64]) -> f64 {
        let projected = self.project(a);
        a.iter()
            .zip(&projected)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Affine set `offset + span(basis)` intersected with the PSD cone.
#[derive(Debug, Clone)]
pub struct AffineStructure {
    p: usize,
    family: StructureFamily,
    offset: HermitianMatrix,
    basis: Vec<HermitianMatrix>,
    trace_target: Option<f64>,
    bounds: CoefficientBounds,
    basis_vec: DMatrix<f64>,
    offset_vec: DVector<f64>,
    gram: DMatrix<f64>,
    gram_chol: Option<Cholesky<f64, Dyn>>,
}

impl AffineStructure {
    /// Validate and cache. `trace_target` marks the structure as
    /// scale-fixed and requires a trace-free basis.
    pub fn new(
        family: StructureFamily,
        offset: HermitianMatrix,
        basis: Vec<HermitianMatrix>,
        trace_target: Option<f64>,
        bounds: CoefficientBounds,
    ) -> Result<Self> {
        let p = offset.dim();
        for b in &basis {
            if b.dim() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: b.dim(),
                });
            }
        }
        let offset_min = offset.min_eigenvalue()?;
        if offset_min < -1e-12 * offset.frobenius_norm().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "structure offset must be PSD (min eigenvalue {offset_min:e})"
            )));
        }
        if let Some(t) = trace_target {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "trace target must be positive, got {t}"
                )));
            }
            if (offset.trace() - t).abs() > TRACE_TOL * t.max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "offset trace {} differs from trace target {t}",
                    offset.trace()
                )));
            }
            for (i, b) in basis.iter().enumerate() {
                if b.trace().abs() > TRACE_TOL * b.frobenius_norm().max(1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "basis element {i} of a scale-fixed structure has trace {}",
                        b.trace()
                    )));
                }
            }
        }
        if let Some(r) = bounds.l1_bound {
            if !(r > 0.0) {
                return Err(Error::InvalidArgument(format!("l1 bound must be positive, got {r}")));
            }
        }

        let k = basis.len();
        let columns: Vec<Vec<f64>> = basis.iter().map(HermitianMatrix::real_vectorize).collect();
        let basis_vec = DMatrix::from_fn(p * p, k, |r, c| columns[c][r]);
        let offset_vec = DVector::from_vec(offset.real_vectorize());
        check_independence(&basis_vec)?;
        let gram = basis_vec.transpose() * &basis_vec;
        let gram_chol = if k > 0 {
            Some(gram.clone().cholesky().ok_or(Error::DependentBasis {
                indices: (0..k).collect(),
            })?)
        } else {
            None
        };
        Ok(Self {
            p,
            family,
            offset,
            basis,
            trace_target,
            bounds,
            basis_vec,
            offset_vec,
            gram,
            gram_chol,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of free coefficients.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn family(&self) -> &StructureFamily {
        &self.family
    }

    pub fn offset(&self) -> &HermitianMatrix {
        &self.offset
    }

    pub fn basis(&self) -> &[HermitianMatrix] {
        &self.basis
    }

    pub fn is_scale_fixed(&self) -> bool {
        self.trace_target.is_some()
    }

    pub fn trace_target(&self) -> Option<f64> {
        self.trace_target
    }

    pub fn bounds(&self) -> CoefficientBounds {
        self.bounds
    }

    /// Impose an `ℓ₁` bound on the coefficients.
    pub fn with_l1_bound(mut self, bound: Option<f64>) -> Result<Self> {
        if let Some(r) = bound {
            if !(r > 0.0) {
                return Err(Error::InvalidArgument(format!("l1 bound must be positive, got {r}")));
            }
        }
        self.bounds.l1_bound = bound;
        Ok(self)
    }

    /// Real-vectorized basis, `p² × k`.
    pub fn basis_vec(&self) -> &DMatrix<f64> {
        &self.basis_vec
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `offset + Σ aᵢ basisᵢ`.
    pub fn matrix(&self, coefficients: &[f64]) -> Result<HermitianMatrix> {
        if coefficients.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: coefficients.len(),
            });
        }
        let mut out = self.offset.clone();
        for (a, b) in coefficients.iter().zip(&self.basis) {
            if *a != 0.0 {
                out.axpy(*a, b);
            }
        }
        Ok(out)
    }

    /// `(⟨basisᵢ, M⟩)ᵢ`.
    pub fn basis_inner(&self, m: &HermitianMatrix) -> DVector<f64> {
        let v = DVector::from_vec(m.real_vectorize());
        self.basis_vec.tr_mul(&v)
    }

    /// Least-squares coefficients of the nearest point of the affine hull.
    pub fn affine_coefficients(&self, m: &HermitianMatrix) -> Result<Vec<f64>> {
        if m.dim() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                found: m.dim(),
            });
        }
        let Some(chol) = &self.gram_chol else {
            return Ok(Vec::new());
        };
        let v = DVector::from_vec(m.real_vectorize()) - &self.offset_vec;
        let rhs = self.basis_vec.tr_mul(&v);
        Ok(chol.solve(&rhs).iter().copied().collect())
    }

    /// Frobenius projection onto the affine hull (coefficient bounds ignored).
    pub fn affine_project(&self, m: &HermitianMatrix) -> Result<(Vec<f64>, HermitianMatrix)> {
        let a = self.affine_coefficients(m)?;
        let proj = self.matrix(&a)?;
        Ok((a, proj))
    }

    /// Frobenius projection onto `{offset + Σ aᵢ basisᵢ : a within bounds}`.
    pub fn bounded_project(&self, m: &HermitianMatrix) -> Result<(Vec<f64>, HermitianMatrix)> {
        let free = self.affine_coefficients(m)?;
        if self.bounds.is_free() || self.dim() == 0 {
            let proj = self.matrix(&free)?;
            return Ok((free, proj));
        }
        let a = self.bounded_coefficients(&free);
        let proj = self.matrix(&a)?;
        Ok((a, proj))
    }

    /// Minimize `½(a − a*)ᵀ G (a − a*)` over the coefficient bounds.
    fn bounded_coefficients(&self, free: &[f64]) -> Vec<f64> {
        let k = free.len();
        let g = &self.gram;
        let target = DVector::from_column_slice(free);
        if self.bounds.l1_bound.is_none() {
            // Nonnegativity only: cyclic coordinate descent with clamped steps.
            let mut a = self.bounds.project(free);
            let scale = free.iter().fold(1e-300_f64, |m, x| m.max(x.abs()));
            for _ in 0..10_000 {
                let mut max_step = 0.0_f64;
                for j in 0..k {
                    let mut grad = 0.0;
                    for l in 0..k {
                        grad += g[(j, l)] * (a[l] - target[l]);
                    }
                    let next = (a[j] - grad / g[(j, j)]).max(0.0);
                    max_step = max_step.max((next - a[j]).abs());
                    a[j] = next;
                }
                if max_step <= 1e-15 * scale {
                    break;
                }
            }
            return a;
        }
        // With an ℓ₁ cap: accelerated projected gradient.
        let lipschitz = g.clone().symmetric_eigenvalues().iter().fold(0.0_f64, |m, &l| m.max(l));
        let step = 1.0 / lipschitz;
        let mut a = DVector::from_vec(self.bounds.project(free));
        let mut y = a.clone();
        let mut t = 1.0_f64;
        for _ in 0..20_000 {
            let grad = g * (&y - &target);
            let next = DVector::from_vec(self.bounds.project((&y - grad * step).as_slice()));
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let moved = (&next - &a).norm();
            y = &next + (&next - &a) * ((t - 1.0) / t_next);
            a = next;
            t = t_next;
            if moved <= 1e-15 * (1.0 + a.norm()) {
                break;
            }
        }
        a.iter().copied().collect()
    }

    /// Distance from `M` to the affine hull plus any coefficient-bound violation.
    pub fn membership_residual(&self, m: &HermitianMatrix) -> Result<f64> {
        let (a, proj) = self.affine_project(m)?;
        let affine = (m - &proj).frobenius_norm();
        Ok(affine + self.bounds.violation(&a))
    }

    /// Nearest point of `affine set ∩ PSD` (Frobenius), by Dykstra's
    /// alternating projections.
    pub fn structure_project(&self, m: &HermitianMatrix) -> Result<StructureProjection> {
        structure_project_with(self, m, &DykstraOptions::default())
    }
}

fn check_independence(basis_vec: &DMatrix<f64>) -> Result<()> {
    let k = basis_vec.ncols();
    if k == 0 {
        return Ok(());
    }
    if k > basis_vec.nrows() {
        return Err(Error::DependentBasis {
            indices: (0..k).collect(),
        });
    }
    let svd = basis_vec.clone().svd(false, true);
    let values = &svd.singular_values;
    let largest = values.iter().fold(0.0_f64, |m, &s| m.max(s));
    let threshold = INDEPENDENCE_RATIO * largest;
    if largest > 0.0 && values.iter().all(|&s| s > threshold) {
        return Ok(());
    }
    // Null directions: right singular vectors of the tiny singular values.
    let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
    let mut indices = Vec::new();
    for (r, &s) in values.iter().enumerate() {
        if s <= threshold {
            let row = v_t.row(r);
            let peak = row.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            for (c, x) in row.iter().enumerate() {
                if x.abs() > 1e-6 * peak && !indices.contains(&c) {
                    indices.push(c);
                }
            }
        }
    }
    indices.sort_unstable();
    Err(Error::DependentBasis { indices })
}

fn unit(p: usize, i: usize, h: usize, z: C64) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(p, p);
    m[(i, h)] = z;
    m
}

fn symmetric_pair(p: usize, i: usize, h: usize) -> HermitianMatrix {
    let mut m = unit(p, i, h, C64::new(1.0, 0.0));
    m[(h, i)] = C64::new(1.0, 0.0);
    HermitianMatrix::symmetrized(m)
}

fn antisymmetric_pair(p: usize, i: usize, h: usize) -> HermitianMatrix {
    let mut m = unit(p, i, h, C64::new(0.0, 1.0));
    m[(h, i)] = C64::new(0.0, -1.0);
    HermitianMatrix::symmetrized(m)
}

/// Hermitian Toeplitz matrices, `k = 2p − 1`.
pub fn toeplitz_structure(p: usize) -> Result<AffineStructure> {
    if p == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    let mut basis = vec![HermitianMatrix::identity(p)];
    for offset in 1..p {
        let mut m = DMatrix::zeros(p, p);
        for r in 0..(p - offset) {
            m[(r, r + offset)] = C64::new(1.0, 0.0);
            m[(r + offset, r)] = C64::new(1.0, 0.0);
        }
        basis.push(HermitianMatrix::symmetrized(m));
    }
    for offset in 1..p {
        let mut m = DMatrix::zeros(p, p);
        for r in 0..(p - offset) {
            m[(r, r + offset)] = C64::new(0.0, 1.0);
            m[(r + offset, r)] = C64::new(0.0, -1.0);
        }
        basis.push(HermitianMatrix::symmetrized(m));
    }
    AffineStructure::new(
        StructureFamily::Toeplitz,
        HermitianMatrix::zeros(p),
        basis,
        None,
        CoefficientBounds::default(),
    )
}

fn band_pairs(p: usize, band: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..p {
        for h in (i + 1)..p.min(i + band + 1) {
            pairs.push((i, h));
        }
    }
    pairs
}

/// Hermitian `b`-banded matrices, `k = p(2b + 1) − b(b + 1)`.
pub fn banded_structure(p: usize, band: usize) -> Result<AffineStructure> {
    if p == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if band >= p {
        return Err(Error::InvalidArgument(format!(
            "band width {band} out of range for p = {p} (need b ≤ p − 1)"
        )));
    }
    let pairs = band_pairs(p, band);
    let mut basis: Vec<HermitianMatrix> = (0..p)
        .map(|i| {
            let mut d = vec![0.0; p];
            d[i] = 1.0;
            HermitianMatrix::from_diagonal(&d)
        })
        .collect();
    basis.extend(pairs.iter().map(|&(i, h)| symmetric_pair(p, i, h)));
    basis.extend(pairs.iter().map(|&(i, h)| antisymmetric_pair(p, i, h)));
    AffineStructure::new(
        StructureFamily::Banded { band },
        HermitianMatrix::zeros(p),
        basis,
        None,
        CoefficientBounds::default(),
    )
}

/// `σ²I + Σ aᵢ b(θᵢ)b(θᵢ)ᴴ` with `aᵢ ≥ 0`.
pub fn doa_structure(grid: &DoaGrid) -> Result<AffineStructure> {
    let p = grid.p;
    let basis = grid
        .angles
        .iter()
        .map(|&theta| HermitianMatrix::outer(&steering_vector(p, theta)))
        .collect();
    AffineStructure::new(
        StructureFamily::Doa(grid.clone()),
        HermitianMatrix::identity(p).scale(grid.noise_power),
        basis,
        None,
        CoefficientBounds {
            nonnegative: true,
            l1_bound: None,
        },
    )
}

/// Trace-fixed reparametrization with a trace-free basis.
///
/// Toeplitz drops the identity coefficient; banded keeps `E_ii − E_pp` for
/// the first `p − 1` diagonal units; DOA uses `b bᴴ − I`. The offset is
/// `(trace_target / p) · I` in each case (`σ²I` for DOA with the natural
/// target `σ²p`).
pub fn scale_fix(structure: &AffineStructure, trace_target: f64) -> Result<AffineStructure> {
    if structure.is_scale_fixed() {
        return Err(Error::InvalidArgument("structure is already scale-fixed".into()));
    }
    if !(trace_target > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "trace target must be positive, got {trace_target}"
        )));
    }
    let p = structure.p();
    let offset = HermitianMatrix::identity(p).scale(trace_target / p as f64);
    let basis: Vec<HermitianMatrix> = match structure.family() {
        StructureFamily::Toeplitz => structure.basis()[1..].to_vec(),
        StructureFamily::Banded { .. } => {
            let last = &structure.basis()[p - 1];
            let mut out: Vec<HermitianMatrix> = structure.basis()[..p - 1].iter().map(|b| b - last).collect();
            out.extend_from_slice(&structure.basis()[p..]);
            out
        }
        StructureFamily::Doa(_) => {
            let eye = HermitianMatrix::identity(p);
            structure.basis().iter().map(|b| b - &eye).collect()
        }
        StructureFamily::Custom => return scale_fix_generic(structure, trace_target),
    };
    AffineStructure::new(
        structure.family().clone(),
        offset,
        basis,
        Some(trace_target),
        structure.bounds(),
    )
}

/// Generic trace fixing: eliminate the basis element with the largest trace.
fn scale_fix_generic(structure: &AffineStructure, trace_target: f64) -> Result<AffineStructure> {
    let basis = structure.basis();
    let (pivot, pivot_trace) = basis
        .iter()
        .enumerate()
        .map(|(i, b)| (i, b.trace()))
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .ok_or_else(|| Error::InvalidArgument("cannot fix the scale of a structure without basis".into()))?;
    if pivot_trace.abs() < TRACE_TOL {
        return Err(Error::InvalidArgument(
            "structure basis is trace-free; the trace cannot be fixed".into(),
        ));
    }
    let mut offset = structure.offset().clone();
    offset.axpy((trace_target - offset.trace()) / pivot_trace, &basis[pivot]);
    let reduced = basis
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != pivot)
        .map(|(_, b)| {
            let mut d = b.clone();
            d.axpy(-b.trace() / pivot_trace, &basis[pivot]);
            d
        })
        .collect();
    AffineStructure::new(
        StructureFamily::Custom,
        offset,
        reduced,
        Some(trace_target),
        structure.bounds(),
    )
}

/// All hermitian matrices of trace `trace_target`, `k′ = p² − 1`.
pub fn full_hyperplane(p: usize, trace_target: f64) -> Result<AffineStructure> {
    let full = banded_structure(p, p.saturating_sub(1))?;
    scale_fix(&full, trace_target)
}

#[derive(Debug, Clone, Copy)]
pub struct DykstraOptions {
    /// Stop once a sweep moves the iterate less than this (Frobenius).
    pub step_tol: f64,
    pub max_sweeps: usize,
    /// Feasibility required of the returned point.
    pub feasibility_tol: f64,
}

impl Default for DykstraOptions {
    fn default() -> Self {
        Self {
            step_tol: 1e-9,
            max_sweeps: 10_000,
            feasibility_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StructureProjection {
    pub coefficients: Vec<f64>,
    pub matrix: HermitianMatrix,
    pub sweeps: usize,
    pub min_eigenvalue: f64,
}

/// Dykstra's algorithm between the (bounded) affine set and the PSD cone.
pub fn structure_project_with(
    structure: &AffineStructure,
    m: &HermitianMatrix,
    opts: &DykstraOptions,
) -> Result<StructureProjection> {
    if m.dim() != structure.p() {
        return Err(Error::DimensionMismatch {
            expected: structure.p(),
            found: m.dim(),
        });
    }
    let p = structure.p();
    let mut x = m.clone();
    let mut affine_corr = HermitianMatrix::zeros(p);
    let mut psd_corr = HermitianMatrix::zeros(p);
    let mut last_y: Option<HermitianMatrix> = None;
    for sweep in 1..=opts.max_sweeps {
        let shifted = &x + &affine_corr;
        let (a, y) = structure.bounded_project(&shifted)?;
        affine_corr = &shifted - &y;
        let shifted = &y + &psd_corr;
        let x_next = shifted.psd_project()?;
        psd_corr = &shifted - &x_next;

        let moved = last_y
            .as_ref()
            .map_or(f64::INFINITY, |prev| (&y - prev).frobenius_norm());
        let gap = (&y - &x_next).frobenius_norm();
        x = x_next;
        if moved < opts.step_tol && gap < opts.feasibility_tol {
            let min_eigenvalue = y.min_eigenvalue()?;
            if min_eigenvalue >= -opts.feasibility_tol {
                return Ok(StructureProjection {
                    coefficients: a,
                    matrix: y,
                    sweeps: sweep,
                    min_eigenvalue,
                });
            }
        }
        last_y = Some(y);
    }
    let y = last_y.expect("at least one sweep");
    Err(Error::ProjectionNotConverged {
        sweeps: opts.max_sweeps,
        affine_residual: (&y - &x).frobenius_norm(),
        min_eigenvalue: y.min_eigenvalue()?,
    })
}

/// Convenience wrapper over [`AffineStructure::structure_project`].
pub fn structure_project(structure: &AffineStructure, m: &HermitianMatrix) -> Result<HermitianMatrix> {
    Ok(structure.structure_project(m)?.matrix)
}
