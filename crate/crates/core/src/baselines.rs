//! Reference estimators: sample covariance, Tyler's fixed point and the
//! projection of either onto a structure set.

use std::fmt;

use nalgebra::DMatrix;

use crate::coca::CocaDiagnostics;
use crate::error::{Error, Result};
use crate::hermitian::{quad_form, HermitianMatrix};
use crate::sampling::SampleSet;
use crate::structures::AffineStructure;

/// Quadratic forms below this signal a singular iterate.
pub const SINGULAR_QUAD_FORM: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    SampleCovariance,
    Tyler,
    ProjectedTyler,
    ProjectedSampleCovariance,
    Coca,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::SampleCovariance => "sc",
            Method::Tyler => "tyler",
            Method::ProjectedTyler => "proj_tyler",
            Method::ProjectedSampleCovariance => "proj_sc",
            Method::Coca => "coca",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Fewer than `p + 1` samples: Tyler need not exist and COCA need not be unique.
    InsufficientSamples { n: usize, p: usize },
    /// Some `p` samples fail to span the space.
    NotGeneralPosition,
    /// The iteration stopped at its cap before meeting the tolerance.
    IterationCap,
}

/// Output of every estimator.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    /// The estimate. For a Tyler run with `existed == false` this is the last
    /// iterate and carries no statistical meaning.
    pub theta_hat: HermitianMatrix,
    pub coefficients: Option<Vec<f64>>,
    pub method: Method,
    pub iterations: usize,
    pub residual: f64,
    pub objective: Option<f64>,
    pub existed: bool,
    pub warnings: Vec<Warning>,
    pub coca: Option<CocaDiagnostics>,
}

impl EstimateReport {
    fn simple(theta_hat: HermitianMatrix, method: Method) -> Self {
        Self {
            theta_hat,
            coefficients: None,
            method,
            iterations: 0,
            residual: 0.0,
            objective: None,
            existed: true,
            warnings: Vec::new(),
            coca: None,
        }
    }
}

/// `(1/n) Σ xᵢxᵢᴴ`, optionally rescaled to a trace target.
pub fn sample_covariance(samples: &SampleSet, trace_target: Option<f64>) -> Result<EstimateReport> {
    if samples.n() == 0 {
        return Err(Error::InvalidArgument(
            "sample covariance needs at least one sample".into(),
        ));
    }
    let mut acc = HermitianMatrix::zeros(samples.p());
    let w = 1.0 / samples.n() as f64;
    for x in samples.samples() {
        acc.add_outer(w, x);
    }
    if let Some(t) = trace_target {
        acc = acc.with_trace(t);
    }
    Ok(EstimateReport::simple(acc, Method::SampleCovariance))
}

#[derive(Debug, Clone, Copy)]
pub struct TylerOptions {
    /// Relative Frobenius change that stops the iteration.
    pub tol: f64,
    pub max_iter: usize,
    /// Trace of the returned estimate; `None` keeps the internal gauge `Tr = p`.
    pub trace_target: Option<f64>,
}

impl Default for TylerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 1000,
            trace_target: None,
        }
    }
}

/// One application of `f(Θ) = (p/n) Σ xxᴴ / (xᴴΘ⁻¹x)`.
///
/// Returns `None` when some quadratic form is numerically zero.
pub fn tyler_map(samples: &SampleSet, theta: &HermitianMatrix) -> Result<Option<HermitianMatrix>> {
    let Ok(inv) = theta.inverse_pd() else {
        return Ok(None);
    };
    let p = samples.p() as f64;
    let n = samples.n() as f64;
    let mut acc = HermitianMatrix::zeros(samples.p());
    for x in samples.samples() {
        let q = quad_form(&inv, x)?;
        if !(q >= SINGULAR_QUAD_FORM) {
            return Ok(None);
        }
        acc.add_outer(p / (n * q), x);
    }
    Ok(Some(acc))
}

/// Tyler's M-estimator started from the identity.
pub fn tyler(samples: &SampleSet, opts: &TylerOptions) -> Result<EstimateReport> {
    tyler_from(samples, &HermitianMatrix::identity(samples.p()), opts)
}

/// Fixed-point iteration from an arbitrary positive-definite start.
pub fn tyler_from(samples: &SampleSet, init: &HermitianMatrix, opts: &TylerOptions) -> Result<EstimateReport> {
    let p = samples.p();
    let n = samples.n();
    if init.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: init.dim(),
        });
    }
    let mut warnings = Vec::new();
    if n <= p {
        warnings.push(Warning::InsufficientSamples { n, p });
    } else if !in_general_position(samples) {
        warnings.push(Warning::NotGeneralPosition);
    }

    let gauge = p as f64;
    let mut theta = init.with_trace(gauge);
    let mut iterations = 0;
    let mut existed = n > p;
    let mut converged = false;
    while existed && iterations < opts.max_iter {
        iterations += 1;
        let Some(next) = tyler_map(samples, &theta)? else {
            existed = false;
            break;
        };
        let next = next.with_trace(gauge);
        if !next.trace().is_finite() {
            existed = false;
            break;
        }
        let change = (&next - &theta).frobenius_norm() / theta.frobenius_norm();
        theta = next;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if existed && !converged {
        warnings.push(Warning::IterationCap);
    }
    let residual = match tyler_map(samples, &theta)? {
        Some(f) if existed => (&theta - &f).frobenius_norm(),
        _ => {
            existed = false;
            f64::INFINITY
        }
    };
    if let Some(t) = opts.trace_target {
        theta = theta.with_trace(t);
    }
    Ok(EstimateReport {
        theta_hat: theta,
        coefficients: None,
        method: Method::Tyler,
        iterations,
        residual,
        objective: None,
        existed,
        warnings,
        coca: None,
    })
}

/// Whether every `p` of the samples span `ℂᵖ`.
///
/// All subsets are checked when there are at most 5000 of them; beyond
/// that only the contiguous windows are.
pub fn in_general_position(samples: &SampleSet) -> bool {
    let p = samples.p();
    let n = samples.n();
    if n < p {
        return false;
    }
    let xs = samples.samples();
    let spans = |idx: &[usize]| {
        let m = DMatrix::from_fn(p, p, |r, c| xs[idx[c]][r]);
        let s = m.singular_values();
        let top = s.iter().fold(0.0_f64, |a, &b| a.max(b));
        s.iter().all(|&v| v > 1e-10 * top)
    };
    if binomial(n, p) <= 5000 {
        let mut idx: Vec<usize> = (0..p).collect();
        loop {
            if !spans(&idx) {
                return false;
            }
            if !next_combination(&mut idx, n) {
                return true;
            }
        }
    }
    (0..n).all(|start| {
        let idx: Vec<usize> = (0..p).map(|k| (start + k) % n).collect();
        spans(&idx)
    })
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in (i + 1)..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return acc;
        }
    }
    acc
}

/// Mean CAE negative log-likelihood `log|Θ| + p·mean log(xᴴΘ⁻¹x)`.
pub fn cae_neg_log_likelihood(theta: &HermitianMatrix, samples: &SampleSet) -> Result<f64> {
    let inv = theta.inverse_pd()?;
    let log_det = theta.log_det_pd()?;
    let p = samples.p() as f64;
    let mut acc = 0.0;
    for x in samples.samples() {
        acc += quad_form(&inv, x)?.ln();
    }
    Ok(log_det + p * acc / samples.n() as f64)
}

/// Project Tyler's estimate onto the structure when it exists, otherwise the
/// sample covariance.
pub fn projection_estimator(
    samples: &SampleSet,
    structure: &AffineStructure,
    tyler_opts: &TylerOptions,
) -> Result<EstimateReport> {
    let target = structure
        .trace_target()
        .ok_or_else(|| Error::InvalidArgument("projection estimator needs a scale-fixed structure".into()))?;
    let tyler_report = tyler(samples, tyler_opts)?;
    projection_from(samples, structure, &tyler_report, target)
}

/// Projection estimator reusing an already computed Tyler report.
pub fn projection_from(
    samples: &SampleSet,
    structure: &AffineStructure,
    tyler_report: &EstimateReport,
    trace_target: f64,
) -> Result<EstimateReport> {
    let (start, method) = if tyler_report.existed {
        (tyler_report.theta_hat.with_trace(trace_target), Method::ProjectedTyler)
    } else {
        (
            sample_covariance(samples, Some(trace_target))?.theta_hat,
            Method::ProjectedSampleCovariance,
        )
    };
    let proj = structure.structure_project(&start)?;
    Ok(EstimateReport {
        theta_hat: proj.matrix,
        coefficients: Some(proj.coefficients),
        method,
        iterations: proj.sweeps,
        residual: proj.min_eigenvalue.min(0.0).abs(),
        objective: None,
        existed: true,
        warnings: tyler_report.warnings.clone(),
        coca: None,
    })
}

/// `xᴴΘ⁻¹x` for every sample.
pub fn quad_forms(samples: &SampleSet, theta: &HermitianMatrix) -> Result<Vec<f64>> {
    let inv = theta.inverse_pd()?;
    samples.samples().iter().map(|x| quad_form(&inv, x)).collect()
}
