//! Compound-Gaussian generation and normalization to the complex angular
//! elliptical (CAE) sphere.
//!
//! Every sample draws from its own ChaCha stream keyed by
//! `(seed, trial, sample, stream)`, so a trial can be regenerated without
//! replaying the ones before it and trials can run in any order.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hermitian::{CVector, HermitianMatrix, C64};

/// Default chi-square degrees of freedom for the texture variable.
pub const DEFAULT_CHI_SQUARE_DF: f64 = 3.0;

const GAUSSIAN_STREAM: u64 = 0;
const TEXTURE_STREAM: u64 = 1;

/// Law of the positive texture variable `τ` in `s = √τ · v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TextureLaw {
    ChiSquare { degrees_of_freedom: f64 },
    Constant(f64),
}

impl Default for TextureLaw {
    fn default() -> Self {
        TextureLaw::ChiSquare {
            degrees_of_freedom: DEFAULT_CHI_SQUARE_DF,
        }
    }
}

impl TextureLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TextureLaw::ChiSquare { degrees_of_freedom } if !(degrees_of_freedom > 0.0) => Err(Error::InvalidArgument(
                format!("chi-square degrees of freedom must be positive, got {degrees_of_freedom}"),
            )),
            TextureLaw::Constant(v) if !(v > 0.0) => Err(Error::InvalidArgument(format!(
                "constant texture must be positive, got {v}"
            ))),
            _ => Ok(()),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            TextureLaw::ChiSquare { degrees_of_freedom } => ChiSquared::new(degrees_of_freedom)
                .expect("validated degrees of freedom")
                .sample(rng),
            TextureLaw::Constant(v) => v,
        }
    }
}

impl fmt::Display for TextureLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TextureLaw::ChiSquare { degrees_of_freedom } => write!(f, "chi_square({degrees_of_freedom})"),
            TextureLaw::Constant(v) => write!(f, "constant({v})"),
        }
    }
}

/// One raw sample `s = √τ · g`, kept in factored form.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub gaussian: CVector,
    pub texture: f64,
}

impl RawSample {
    /// A raw vector with no separate texture factor.
    pub fn from_vector(v: CVector) -> Self {
        Self {
            gaussian: v,
            texture: 1.0,
        }
    }

    pub fn value(&self) -> CVector {
        &self.gaussian * C64::new(self.texture.sqrt(), 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.texture.sqrt() * self.gaussian.norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSamples {
    pub p: usize,
    pub samples: Vec<RawSample>,
    pub seed: u64,
    pub texture: TextureLaw,
}

/// `n` unit-norm complex `p`-vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    p: usize,
    samples: Vec<CVector>,
    pub seed: u64,
    pub texture: TextureLaw,
}

impl SampleSet {
    /// Build from vectors that are already on the unit sphere (checked to 1e-12).
    pub fn from_unit_vectors(p: usize, samples: Vec<CVector>, seed: u64, texture: TextureLaw) -> Result<Self> {
        for (index, x) in samples.iter().enumerate() {
            if x.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: x.len(),
                });
            }
            let norm = x.norm();
            if norm == 0.0 {
                return Err(Error::ZeroNormSample { index });
            }
            if (norm - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "sample {index} has norm {norm}, expected unit norm"
                )));
            }
        }
        Ok(Self {
            p,
            samples,
            seed,
            texture,
        })
    }

    /// Normalize arbitrary nonzero vectors onto the sphere.
    pub fn from_vectors(p: usize, vectors: Vec<CVector>, seed: u64) -> Result<Self> {
        let raw = RawSamples {
            p,
            samples: vectors.into_iter().map(RawSample::from_vector).collect(),
            seed,
            texture: TextureLaw::Constant(1.0),
        };
        normalize_to_cae(raw)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[CVector] {
        &self.samples
    }

    pub fn outer_products(&self) -> Vec<HermitianMatrix> {
        self.samples.iter().map(HermitianMatrix::outer).collect()
    }
}

/// Key of one per-sample random stream.
fn stream_rng(seed: u64, trial: u64, sample: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&trial.to_le_bytes());
    key[16..24].copy_from_slice(&sample.to_le_bytes());
    key[24..].copy_from_slice(&stream.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Circular complex Gaussian with unit variance per coordinate.
fn complex_gaussian(p: usize, rng: &mut impl Rng) -> CVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVector::from_fn(p, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

fn shape_factor(theta0: &HermitianMatrix) -> Result<DMatrix<C64>> {
    let eig = theta0.eigh()?;
    if !(eig.min() > 1e-12 * eig.max()) {
        return Err(Error::NotPositiveDefinite);
    }
    let chol = theta0.cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(chol.l())
}

/// Draw `n` compound-Gaussian samples `sᵢ = √τᵢ · L uᵢ` with `L Lᴴ = Θ₀`.
///
/// `trial` selects an independent family of streams under the same seed.
pub fn sample_compound_gaussian(
    theta0: &HermitianMatrix,
    n: usize,
    texture: TextureLaw,
    seed: u64,
    trial: u64,
) -> Result<RawSamples> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    texture.validate()?;
    let factor = shape_factor(theta0)?;
    let p = theta0.dim();
    let samples = (0..n as u64)
        .map(|i| {
            let mut g_rng = stream_rng(seed, trial, i, GAUSSIAN_STREAM);
            let mut t_rng = stream_rng(seed, trial, i, TEXTURE_STREAM);
            let u = complex_gaussian(p, &mut g_rng);
            RawSample {
                gaussian: &factor * u,
                texture: texture.draw(&mut t_rng),
            }
        })
        .collect();
    Ok(RawSamples {
        p,
        samples,
        seed,
        texture,
    })
}

/// Project raw samples onto the unit sphere, `x = s / ‖s‖`.
///
/// The positive texture factor cancels, so only the Gaussian part is
/// rescaled; the result is identical for every texture law.
pub fn normalize_to_cae(raw: RawSamples) -> Result<SampleSet> {
    let mut samples = Vec::with_capacity(raw.samples.len());
    for (index, s) in raw.samples.into_iter().enumerate() {
        if s.gaussian.len() != raw.p {
            return Err(Error::DimensionMismatch {
                expected: raw.p,
                found: s.gaussian.len(),
            });
        }
        if !(s.texture > 0.0) || !(s.norm() >= 1e-300) {
            return Err(Error::ZeroNormSample { index });
        }
        let g = s.gaussian.norm();
        samples.push(s.gaussian.map(|z| z / g));
    }
    Ok(SampleSet {
        p: raw.p,
        samples,
        seed: raw.seed,
        texture: raw.texture,
    })
}

/// CAE samples with shape `Θ₀` (trial 0 of `seed`).
pub fn sample_cae(theta0: &HermitianMatrix, n: usize, seed: u64) -> Result<SampleSet> {
    sample_cae_trial(theta0, n, seed, 0)
}

pub fn sample_cae_trial(theta0: &HermitianMatrix, n: usize, seed: u64, trial: u64) -> Result<SampleSet> {
    normalize_to_cae(sample_compound_gaussian(
        theta0,
        n,
        TextureLaw::Constant(1.0),
        seed,
        trial,
    )?)
}

/// Mean of `p · x xᴴ / (xᴴ Θ⁻¹ x)` over the sample set.
pub fn normalized_moment(samples: &SampleSet, theta: &HermitianMatrix) -> Result<HermitianMatrix> {
    let inv = theta.inverse_pd()?;
    let p = samples.p() as f64;
    let n = samples.n() as f64;
    let mut acc = HermitianMatrix::zeros(samples.p());
    for x in samples.samples() {
        let q = crate::hermitian::quad_form(&inv, x)?;
        acc.add_outer(p / (n * q), x);
    }
    Ok(acc)
}
