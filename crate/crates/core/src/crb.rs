//! Fisher information and Cramér–Rao bound of the scale-fixed CAE model.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hermitian::{quad_form, CVector, HermitianMatrix};
use crate::structures::AffineStructure;

/// FIM condition numbers above this are treated as non-identifiable.
pub const MAX_CONDITION: f64 = 1e12;
const MEMBERSHIP_TOL: f64 = 1e-8;
const IMAGINARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct CrbReport {
    /// Per-sample Fisher information in the structure coefficients.
    pub fim: DMatrix<f64>,
    /// `Tr(J FIM⁻¹ Jᵀ)`, the per-sample bound on `E‖Θ̂ − Θ₀‖²_F`.
    pub crb_theta_trace: f64,
    /// Real-vectorized basis, `p² × k`.
    pub jacobian: DMatrix<f64>,
    pub condition: f64,
}

/// Closed-form per-sample FIM of the CAE model at `Θ₀`:
/// `FIM_hm = [p Tr(Θ₀⁻¹D_mΘ₀⁻¹D_h) − Tr(Θ₀⁻¹D_h) Tr(Θ₀⁻¹D_m)] / (p + 1)`.
pub fn fim(structure: &AffineStructure, theta0: &HermitianMatrix) -> Result<CrbReport> {
    let p = structure.p();
    if theta0.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: theta0.dim(),
        });
    }
    let residual = structure.membership_residual(theta0)?;
    if !(residual < MEMBERSHIP_TOL) {
        return Err(Error::InvalidArgument(format!(
            "Θ₀ is not a member of the structure (residual {residual:e})"
        )));
    }
    let inv = theta0.inverse_pd()?;
    let k = structure.dim();
    let pf = p as f64;

    let products: Vec<DMatrix<_>> = structure
        .basis()
        .iter()
        .map(|d| inv.as_matrix() * d.as_matrix())
        .collect();
    let traces: Vec<f64> = products
        .iter()
        .map(|m| {
            let t = m.trace();
            debug_assert!(t.im.abs() <= IMAGINARY_TOL * (1.0 + t.re.abs()));
            t.re
        })
        .collect();
    let mut f = DMatrix::zeros(k, k);
    for h in 0..k {
        for m in h..k {
            let t = (&products[m] * &products[h]).trace();
            if t.im.abs() > IMAGINARY_TOL * (1.0 + t.re.abs()) {
                return Err(Error::InvalidArgument(format!(
                    "trace product has imaginary part {:e}; basis is not hermitian",
                    t.im
                )));
            }
            let v = (pf * t.re - traces[h] * traces[m]) / (pf + 1.0);
            f[(h, m)] = v;
            f[(m, h)] = v;
        }
    }
    let jacobian = structure.basis_vec().clone();
    if k == 0 {
        return Ok(CrbReport {
            fim: f,
            crb_theta_trace: 0.0,
            jacobian,
            condition: 1.0,
        });
    }

    let eig = f.clone().symmetric_eigen();
    let (lo_idx, lo) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("k > 0");
    let hi = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::NonIdentifiable {
            condition,
            direction: eig.eigenvectors.column(lo_idx).iter().copied().collect(),
        });
    }
    let chol = f.clone().cholesky().ok_or(Error::NonIdentifiable {
        condition,
        direction: eig.eigenvectors.column(lo_idx).iter().copied().collect(),
    })?;
    // Tr(J F⁻¹ Jᵀ) = Tr(F⁻¹ JᵀJ).
    let solved = chol.solve(structure.gram());
    let crb_theta_trace = solved.trace();
    Ok(CrbReport {
        fim: f,
        crb_theta_trace,
        jacobian,
        condition,
    })
}

/// Bound on the mean squared Frobenius error from `n` samples.
pub fn mse_bound(report: &CrbReport, n: usize) -> f64 {
    report.crb_theta_trace / n as f64
}

/// Default finite-difference step: `1e-4 · λ_min(Θ₀)`.
pub fn default_step(theta0: &HermitianMatrix) -> Result<f64> {
    Ok(1e-4 * theta0.min_eigenvalue()?)
}

/// Central-difference score of the CAE log-density in the structure
/// coefficients. The perturbed shapes do not depend on the sample, so their
/// inverses and determinants are computed once.
#[derive(Debug, Clone)]
pub struct ScoreOracle {
    p: f64,
    step: f64,
    /// `(Θ₀ + step·D_j)⁻¹, log|…|` and the same for `−step`.
    plus: Vec<(HermitianMatrix, f64)>,
    minus: Vec<(HermitianMatrix, f64)>,
}

impl ScoreOracle {
    pub fn new(structure: &AffineStructure, theta0: &HermitianMatrix, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "finite-difference step must be positive, got {step}"
            )));
        }
        let perturbed = |sign: f64| -> Result<Vec<(HermitianMatrix, f64)>> {
            structure
                .basis()
                .iter()
                .map(|d| {
                    let mut t = theta0.clone();
                    t.axpy(sign * step, d);
                    let inv = t.inverse_pd().map_err(|_| {
                        Error::InvalidArgument(format!("finite-difference step {step} leaves the PD cone"))
                    })?;
                    Ok((inv, t.log_det_pd()?))
                })
                .collect()
        };
        Ok(Self {
            p: structure.p() as f64,
            step,
            plus: perturbed(1.0)?,
            minus: perturbed(-1.0)?,
        })
    }

    pub fn score(&self, x: &CVector) -> Result<DVector<f64>> {
        let log_density = |(inv, log_det): &(HermitianMatrix, f64)| -> Result<f64> {
            Ok(-log_det - self.p * quad_form(inv, x)?.ln())
        };
        let mut out = DVector::zeros(self.plus.len());
        for (j, (hi, lo)) in self.plus.iter().zip(&self.minus).enumerate() {
            out[j] = (log_density(hi)? - log_density(lo)?) / (2.0 * self.step);
        }
        Ok(out)
    }
}

/// One-shot central-difference score.
pub fn score_fd(structure: &AffineStructure, theta0: &HermitianMatrix, x: &CVector, step: f64) -> Result<DVector<f64>> {
    ScoreOracle::new(structure, theta0, step)?.score(x)
}
