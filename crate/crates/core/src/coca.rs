//! COCA: the convex relaxation of the structured GMM program
//!
//! ```text
//! minimize   ‖Θ(a) − (1/n) Σ dᵢ xᵢxᵢᴴ‖
//! subject to Θ(a) − (dᵢ/p) xᵢxᵢᴴ ⪰ 0,  Θ(a) ⪰ 0,  dᵢ ≥ d_floor
//! ```
//!
//! solved by a primal log-barrier method with Newton centering. For `Θ ≻ 0`
//! each sample LMI is equivalent to `dᵢ ≤ cᵢ(Θ) = p / (xᵢᴴΘ⁻¹xᵢ)`, and `cᵢ`
//! is concave, so `−log(cᵢ(Θ) − dᵢ)` is a convex barrier contributing one
//! unit to the gap bound. A single Cholesky factor of `Θ` serves all `n`
//! constraints. The norm
//! is handled in epigraph form: a second-order cone for Frobenius,
//! `sI ± M ⪰ 0` for spectral, and `M = P − N` with `P, N ⪰ 0` for trace.

use nalgebra::{DMatrix, DVector};

use crate::baselines::{sample_covariance, tyler, EstimateReport, Method, TylerOptions, Warning};
use crate::error::{Error, Result};
use crate::hermitian::{from_real_vec, quad_form, CVector, HermitianMatrix, NormKind};
use crate::sampling::SampleSet;
use crate::structures::{full_hyperplane, AffineStructure};

/// Relative slack under which an LMI counts as active.
const ACTIVE_TOL: f64 = 1e-6;
const HISTORY_TAIL: usize = 50;
const STAGNATION: f64 = 1e-13;
const MAX_ROUND_STEPS: usize = 80;
const LOOSE_CENTERING: f64 = 1e-4;
const STRUCTURED_RESIDUAL: f64 = 1e-12;

/// Data of one COCA instance.
#[derive(Debug, Clone, Copy)]
pub struct CocaProblem<'a> {
    pub samples: &'a SampleSet,
    pub structure: &'a AffineStructure,
    pub norm: NormKind,
    pub d_floor: f64,
}

impl<'a> CocaProblem<'a> {
    /// Problem with the default weight floor `1e-8 · p`.
    pub fn new(samples: &'a SampleSet, structure: &'a AffineStructure, norm: NormKind) -> Result<Self> {
        if samples.p() != structure.p() {
            return Err(Error::DimensionMismatch {
                expected: structure.p(),
                found: samples.p(),
            });
        }
        if !structure.is_scale_fixed() {
            return Err(Error::InvalidArgument("COCA needs a scale-fixed structure".into()));
        }
        if samples.n() == 0 {
            return Err(Error::InvalidArgument("COCA needs at least one sample".into()));
        }
        Ok(Self {
            samples,
            structure,
            norm,
            d_floor: 1e-8 * samples.p() as f64,
        })
    }

    pub fn with_d_floor(mut self, d_floor: f64) -> Result<Self> {
        if !(d_floor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "d_floor must be positive, got {d_floor}"
            )));
        }
        self.d_floor = d_floor;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CocaOptions {
    /// Stop once the duality-gap bound falls below
    /// `tol_abs + tol_rel · |objective|`.
    pub tol_abs: f64,
    pub tol_rel: f64,
    /// Cap on Newton steps over all centering rounds.
    pub max_iter: usize,
    /// Factor applied to the barrier weight after each centering round.
    pub barrier_growth: f64,
    /// Centering stops when half the squared Newton decrement is below this.
    pub centering_tol: f64,
    /// Start from Tyler (or the sample covariance) instead of the offset.
    pub warm_start: bool,
    /// Keep every centering round in the diagnostics instead of only the tail.
    pub record_history: bool,
}

impl Default for CocaOptions {
    fn default() -> Self {
        Self {
            tol_abs: 1e-7,
            tol_rel: 1e-6,
            max_iter: 500,
            barrier_growth: 4.0,
            centering_tol: 1e-9,
            warm_start: true,
            record_history: false,
        }
    }
}

/// One centering round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// Newton steps taken so far.
    pub iteration: usize,
    pub barrier_weight: f64,
    /// Bound `ν / t` on the suboptimality of the centered point.
    pub duality_gap: f64,
    pub newton_decrement: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarmStartSource {
    Cold,
    Tyler,
    SampleCovariance,
    Provided,
}

#[derive(Debug, Clone)]
pub struct CocaDiagnostics {
    /// Auxiliary weights `dᵢ`, each above `d_floor`.
    pub weights: Vec<f64>,
    pub duality_gap: f64,
    pub newton_decrement: f64,
    pub barrier_weight: f64,
    pub history: Vec<IterationRecord>,
    /// Smallest eigenvalue over `Θ` and every slack `Θ − (dᵢ/p) xᵢxᵢᴴ`.
    pub min_slack_eigenvalue: f64,
    /// Number of sample LMIs tight to within a relative `1e-6`.
    pub active_constraints: usize,
    /// Condition number of the structure basis joined with the active
    /// sample directions; large values flag a non-unique optimum.
    pub active_set_condition: f64,
    pub warm_start: WarmStartSource,
}

/// Coefficient of one coordinate inside an affine LMI.
enum Coef {
    Dense(HermitianMatrix),
    /// `scale · x xᴴ`.
    RankOne(CVector, f64),
}

/// Barrier `−weight · log det(base + Σ z_j G_j)`.
struct Lmi {
    weight: f64,
    base: HermitianMatrix,
    terms: Vec<(usize, Coef)>,
}

impl Lmi {
    fn matrix(&self, z: &DVector<f64>) -> HermitianMatrix {
        let mut g = self.base.clone();
        for (j, coef) in &self.terms {
            match coef {
                Coef::Dense(m) => g.axpy(z[*j], m),
                Coef::RankOne(x, s) => g.add_outer(z[*j] * s, x),
            }
        }
        g
    }

    fn value(&self, z: &DVector<f64>) -> Option<f64> {
        let chol = self.matrix(z).cholesky()?;
        Some(-self.weight * log_det_from_factor(chol.l_dirty()))
    }

    fn accumulate(&self, z: &DVector<f64>, sys: &mut NewtonSystem) -> Option<()> {
        let g = self.matrix(z);
        let p = g.dim();
        let l = g.cholesky()?.l();
        let mut v = DMatrix::<f64>::zeros(p * p, self.terms.len());
        for (c, (j, coef)) in self.terms.iter().enumerate() {
            // W = L⁻¹ G_j L⁻ᴴ, so Tr(G⁻¹G_j) = Tr W and the Hessian is a Gram matrix.
            let w = match coef {
                Coef::Dense(m) => {
                    let x = l.solve_lower_triangular(m.as_matrix())?;
                    HermitianMatrix::symmetrized(l.solve_lower_triangular(&x.adjoint())?)
                }
                Coef::RankOne(x, s) => HermitianMatrix::outer(&l.solve_lower_triangular(x)?).scale(*s),
            };
            sys.grad[*j] -= self.weight * w.trace();
            v.column_mut(c).copy_from_slice(&w.real_vectorize());
        }
        let touches_weights = self
            .terms
            .iter()
            .any(|(j, _)| matches!(sys.layout.slot(*j), Slot::D(_)));
        if touches_weights {
            let root = self.weight.sqrt();
            let mut f = DMatrix::zeros(p * p, sys.layout.len);
            for (c, (j, _)) in self.terms.iter().enumerate() {
                f.column_mut(*j).axpy(root, &v.column(c), 1.0);
            }
            sys.factors.push(f);
        } else {
            let h = v.transpose() * &v;
            for (c1, (j1, _)) in self.terms.iter().enumerate() {
                for (c2, (j2, _)) in self.terms.iter().enumerate() {
                    sys.add(*j1, *j2, self.weight * h[(c1, c2)]);
                }
            }
        }
        Some(())
    }
}

/// Barrier `−log(c0 + hᵀz)`.
struct Halfspace {
    c0: f64,
    h: Vec<(usize, f64)>,
}

impl Halfspace {
    fn slack(&self, z: &DVector<f64>) -> f64 {
        self.c0 + self.h.iter().map(|(j, v)| v * z[*j]).sum::<f64>()
    }
}

fn log_det_from_factor(l: &DMatrix<crate::hermitian::C64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>()
}

/// Second-order cone `‖m0 + A z_{a,d}‖ ≤ s` for the Frobenius epigraph.
struct Soc {
    s: usize,
    cols: DMatrix<f64>,
    m0: DVector<f64>,
}

impl Soc {
    fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        let m = self.cols.ncols();
        &self.m0 + &self.cols * z.rows(0, m)
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    k: usize,
    n: usize,
    len: usize,
}

/// Position of a coordinate in the Newton system: the weights `d` form a
/// separate block, everything else is collected in `S`.
#[derive(Debug, Clone, Copy)]
enum Slot {
    S(usize),
    D(usize),
}

impl Layout {
    fn slot(&self, j: usize) -> Slot {
        if j < self.k {
            Slot::S(j)
        } else if j < self.k + self.n {
            Slot::D(j - self.k)
        } else {
            Slot::S(j - self.n)
        }
    }

    fn s_len(&self) -> usize {
        self.len - self.n
    }
}

/// Gradient and Hessian `[[ss, sd], [sdᵀ, diag(dd)]] + Σ FᵀF` of the barrier.
struct NewtonSystem {
    layout: Layout,
    grad: DVector<f64>,
    ss: DMatrix<f64>,
    sd: DMatrix<f64>,
    dd: DVector<f64>,
    /// Low-rank terms, each `r × len` in coordinate order.
    factors: Vec<DMatrix<f64>>,
}

impl NewtonSystem {
    fn new(layout: Layout) -> Self {
        let s = layout.s_len();
        Self {
            layout,
            grad: DVector::zeros(layout.len),
            ss: DMatrix::zeros(s, s),
            sd: DMatrix::zeros(s, layout.n),
            dd: DVector::zeros(layout.n),
            factors: Vec::new(),
        }
    }

    fn add(&mut self, j1: usize, j2: usize, v: f64) {
        match (self.layout.slot(j1), self.layout.slot(j2)) {
            (Slot::S(a), Slot::S(b)) => self.ss[(a, b)] += v,
            (Slot::S(a), Slot::D(i)) => self.sd[(a, i)] += v,
            (Slot::D(_), Slot::S(_)) => {}
            (Slot::D(i), Slot::D(h)) => {
                debug_assert_eq!(i, h, "weights only couple through factors");
                self.dd[i] += v;
            }
        }
    }

    fn split_factors(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let l = self.layout;
        let r: usize = self.factors.iter().map(|f| f.nrows()).sum();
        let mut fs = DMatrix::zeros(r, l.s_len());
        let mut fd = DMatrix::zeros(r, l.n);
        let mut row = 0;
        for f in &self.factors {
            let rows = f.nrows();
            fs.view_mut((row, 0), (rows, l.k)).copy_from(&f.columns(0, l.k));
            fd.view_mut((row, 0), (rows, l.n)).copy_from(&f.columns(l.k, l.n));
            let tail = l.len - l.k - l.n;
            fs.view_mut((row, l.k), (rows, tail))
                .copy_from(&f.columns(l.k + l.n, tail));
            row += rows;
        }
        (fs, fd)
    }

    fn dense(&self) -> DMatrix<f64> {
        let l = self.layout;
        let mut h = DMatrix::zeros(l.len, l.len);
        let z_of = |a: usize| if a < l.k { a } else { a + l.n };
        for a in 0..l.s_len() {
            for b in 0..l.s_len() {
                h[(z_of(a), z_of(b))] = self.ss[(a, b)];
            }
            for i in 0..l.n {
                h[(z_of(a), l.k + i)] = self.sd[(a, i)];
                h[(l.k + i, z_of(a))] = self.sd[(a, i)];
            }
        }
        for i in 0..l.n {
            h[(l.k + i, l.k + i)] = self.dd[i];
        }
        for f in &self.factors {
            h.gemm_tr(1.0, f, f, 1.0);
        }
        h
    }

    /// `H⁻¹ rhs`. Many weights are eliminated through the diagonal-plus-low-rank
    /// structure of their block; the result is checked against `H` and the
    /// dense factorization is used if the check fails.
    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let l = self.layout;
        let r: usize = self.factors.iter().map(|f| f.nrows()).sum();
        if l.n <= r + l.s_len() || self.dd.iter().any(|v| !(*v > 0.0)) {
            return solve_spd(&self.dense(), rhs);
        }
        self.solve_structured(rhs).or_else(|| solve_spd(&self.dense(), rhs))
    }

    fn solve_structured(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let l = self.layout;
        let (fs, fd) = self.split_factors();
        let dinv = self.dd.map(|v| 1.0 / v);
        let mut fd_dinv = fd.clone();
        for (i, mut c) in fd_dinv.column_iter_mut().enumerate() {
            c *= dinv[i];
        }
        let mut g = &fd_dinv * fd.transpose();
        for i in 0..g.nrows() {
            g[(i, i)] += 1.0;
        }
        let gch = g.cholesky()?;
        // (diag(dd) + FdᵀFd)⁻¹ Y by the Woodbury identity.
        let apply = |y: &DMatrix<f64>| -> DMatrix<f64> {
            let mut dy = y.clone();
            for (i, mut row) in dy.row_iter_mut().enumerate() {
                row *= dinv[i];
            }
            let u = gch.solve(&(&fd * &dy));
            dy - fd_dinv.transpose() * u
        };

        let hss = &self.ss + fs.transpose() * &fs;
        let hsd = &self.sd + fs.transpose() * &fd;
        let zm = apply(&hsd.transpose());
        let mut sc = &hss - &hsd * &zm;
        sc = (&sc + sc.transpose()) * 0.5;

        let mut b_s = DVector::zeros(l.s_len());
        let mut b_d = DMatrix::zeros(l.n, 1);
        for j in 0..l.len {
            match l.slot(j) {
                Slot::S(a) => b_s[a] = rhs[j],
                Slot::D(i) => b_d[(i, 0)] = rhs[j],
            }
        }
        let yd = apply(&b_d).column(0).into_owned();
        let xs = solve_spd(&sc, &(&b_s - &hsd * &yd))?;
        let xd = yd - &zm * &xs;

        // Residual in the norm induced by the Jacobi preconditioner.
        let top = &hss * &xs + &hsd * &xd - &b_s;
        let bottom = hsd.transpose() * &xs + self.dd.component_mul(&xd) + fd.transpose() * (&fd * &xd) - b_d.column(0);
        let mut measure = 0.0;
        for a in 0..l.s_len() {
            measure += top[a] * top[a] / hss[(a, a)].max(f64::MIN_POSITIVE);
        }
        for i in 0..l.n {
            let diag = self.dd[i] + fd.column(i).norm_squared();
            measure += bottom[i] * bottom[i] / diag;
        }
        let energy = b_s.dot(&xs) + b_d.column(0).dot(&xd);
        if !(measure <= STRUCTURED_RESIDUAL * energy.abs() + f64::MIN_POSITIVE) {
            return None;
        }
        let mut x = DVector::zeros(l.len);
        for j in 0..l.len {
            x[j] = match l.slot(j) {
                Slot::S(a) => xs[a],
                Slot::D(i) => xd[i],
            };
        }
        Some(x)
    }
}

/// Barrier formulation of one problem instance.
struct Program<'a> {
    problem: CocaProblem<'a>,
    layout: Layout,
    p: f64,
    theta: Lmi,
    basis: Vec<HermitianMatrix>,
    /// Real-vectorized basis, one column per coefficient.
    basis_vec: DMatrix<f64>,
    soc: Option<Soc>,
    cones: Vec<Lmi>,
    halfspaces: Vec<Halfspace>,
    /// Linear objective `cost · z + cost0`.
    cost: DVector<f64>,
    cost0: f64,
    /// First coordinate of the epigraph block.
    norm_start: usize,
    /// First coordinate of the ℓ₁ auxiliaries, when present.
    aux_start: Option<usize>,
    nu: f64,
}

impl<'a> Program<'a> {
    fn new(problem: CocaProblem<'a>) -> Self {
        let structure = problem.structure;
        let samples = problem.samples.samples();
        let p = structure.p();
        let k = structure.dim();
        let n = samples.len();
        let nf = n as f64;
        let basis = structure.basis();
        let offset = structure.offset();
        let bounds = structure.bounds();

        let norm_start = k + n;
        let norm_len = match problem.norm {
            NormKind::Frobenius | NormKind::Spectral => 1,
            NormKind::Trace => p * p,
        };
        let free_l1 = !bounds.nonnegative && bounds.l1_bound.is_some();
        let aux_start = free_l1.then_some(norm_start + norm_len);
        let len = norm_start + norm_len + if free_l1 { k } else { 0 };
        let layout = Layout { k, n, len };

        let theta = Lmi {
            weight: 1.0,
            base: offset.clone(),
            terms: basis.iter().cloned().map(Coef::Dense).enumerate().collect(),
        };
        let mut nu = (p + n) as f64;

        // M(z) = offset + Σ a_j D_j − (1/n) Σ dᵢ xᵢxᵢᴴ, with optional sign flip.
        let m_terms = |sign: f64| -> Vec<(usize, Coef)> {
            let mut terms: Vec<(usize, Coef)> = basis
                .iter()
                .enumerate()
                .map(|(j, b)| (j, Coef::Dense(b.scale(sign))))
                .collect();
            terms.extend(
                samples
                    .iter()
                    .enumerate()
                    .map(|(i, x)| (k + i, Coef::RankOne(x.clone(), -sign / nf))),
            );
            terms
        };

        let mut cost = DVector::zeros(len);
        let mut cost0 = 0.0;
        let mut soc = None;
        let mut cones = Vec::new();
        match problem.norm {
            NormKind::Frobenius => {
                let mut cols = DMatrix::zeros(p * p, k + n);
                for (j, b) in basis.iter().enumerate() {
                    cols.column_mut(j).copy_from_slice(&b.real_vectorize());
                }
                for (i, x) in samples.iter().enumerate() {
                    let v = HermitianMatrix::outer(x).scale(-1.0 / nf).real_vectorize();
                    cols.column_mut(k + i).copy_from_slice(&v);
                }
                soc = Some(Soc {
                    s: norm_start,
                    cols,
                    m0: DVector::from_vec(offset.real_vectorize()),
                });
                cost[norm_start] = 1.0;
                nu += 2.0;
            }
            NormKind::Spectral => {
                for sign in [-1.0, 1.0] {
                    let mut terms = m_terms(sign);
                    terms.push((norm_start, Coef::Dense(HermitianMatrix::identity(p))));
                    cones.push(Lmi {
                        weight: 1.0,
                        base: offset.scale(sign),
                        terms,
                    });
                }
                cost[norm_start] = 1.0;
                nu += 2.0 * p as f64;
            }
            NormKind::Trace => {
                let units: Vec<HermitianMatrix> = (0..p * p)
                    .map(|r| {
                        let mut e = vec![0.0; p * p];
                        e[r] = 1.0;
                        from_real_vec(p, &e).expect("square length")
                    })
                    .collect();
                let p_terms = || -> Vec<(usize, Coef)> {
                    units
                        .iter()
                        .enumerate()
                        .map(|(r, e)| (norm_start + r, Coef::Dense(e.clone())))
                        .collect()
                };
                cones.push(Lmi {
                    weight: 1.0,
                    base: HermitianMatrix::zeros(p),
                    terms: p_terms(),
                });
                let mut terms = p_terms();
                terms.extend(m_terms(-1.0));
                cones.push(Lmi {
                    weight: 1.0,
                    base: offset.scale(-1.0),
                    terms,
                });
                // Tr(P) + Tr(P − M).
                for (r, e) in units.iter().enumerate() {
                    cost[norm_start + r] = 2.0 * e.trace();
                }
                for (j, b) in basis.iter().enumerate() {
                    cost[j] = -b.trace();
                }
                for (i, x) in samples.iter().enumerate() {
                    cost[k + i] = x.norm_squared() / nf;
                }
                cost0 = -offset.trace();
                nu += 2.0 * p as f64;
            }
        }

        let mut halfspaces: Vec<Halfspace> = (0..n)
            .map(|i| Halfspace {
                c0: -problem.d_floor,
                h: vec![(k + i, 1.0)],
            })
            .collect();
        if bounds.nonnegative {
            halfspaces.extend((0..k).map(|j| Halfspace {
                c0: 0.0,
                h: vec![(j, 1.0)],
            }));
            if let Some(r) = bounds.l1_bound {
                halfspaces.push(Halfspace {
                    c0: r,
                    h: (0..k).map(|j| (j, -1.0)).collect(),
                });
            }
        } else if let (Some(r), Some(aux)) = (bounds.l1_bound, aux_start) {
            for j in 0..k {
                halfspaces.push(Halfspace {
                    c0: 0.0,
                    h: vec![(aux + j, 1.0), (j, -1.0)],
                });
                halfspaces.push(Halfspace {
                    c0: 0.0,
                    h: vec![(aux + j, 1.0), (j, 1.0)],
                });
            }
            halfspaces.push(Halfspace {
                c0: r,
                h: (0..k).map(|j| (aux + j, -1.0)).collect(),
            });
        }
        nu += halfspaces.len() as f64;

        Self {
            problem,
            layout,
            p: p as f64,
            theta,
            basis: basis.to_vec(),
            basis_vec: structure.basis_vec().clone(),
            soc,
            cones,
            halfspaces,
            cost,
            cost0,
            norm_start,
            aux_start,
            nu,
        }
    }

    fn objective(&self, z: &DVector<f64>) -> f64 {
        self.cost.dot(z) + self.cost0
    }

    fn coefficients(&self, z: &DVector<f64>) -> Vec<f64> {
        z.rows(0, self.layout.k).iter().copied().collect()
    }

    fn weights(&self, z: &DVector<f64>) -> Vec<f64> {
        z.rows(self.layout.k, self.layout.n).iter().copied().collect()
    }

    /// `Σ −log(cᵢ − dᵢ)`, or `None` outside the domain.
    fn sample_value(
        &self,
        theta_factor: &nalgebra::Cholesky<crate::hermitian::C64, nalgebra::Dyn>,
        z: &DVector<f64>,
    ) -> Option<f64> {
        let mut acc = 0.0;
        for (i, x) in self.problem.samples.samples().iter().enumerate() {
            let q = x.dotc(&theta_factor.solve(x)).re;
            let u = self.p / q - z[self.layout.k + i];
            if !(u > 0.0) {
                return None;
            }
            acc -= u.ln();
        }
        Some(acc)
    }

    fn barrier(&self, z: &DVector<f64>) -> Option<f64> {
        let theta = self.theta.matrix(z);
        let factor = theta.cholesky()?;
        let mut acc = -self.theta.weight * log_det_from_factor(factor.l_dirty());
        acc += self.sample_value(&factor, z)?;
        if let Some(soc) = &self.soc {
            let s = z[soc.s];
            let u = soc.residual(z);
            let r = s * s - u.norm_squared();
            if !(s > 0.0 && r > 0.0) {
                return None;
            }
            acc -= r.ln();
        }
        for cone in &self.cones {
            acc += cone.value(z)?;
        }
        for h in &self.halfspaces {
            let s = h.slack(z);
            if !(s > 0.0) {
                return None;
            }
            acc -= s.ln();
        }
        acc.is_finite().then_some(acc)
    }

    fn derivatives(&self, z: &DVector<f64>) -> Option<NewtonSystem> {
        let (k, n) = (self.layout.k, self.layout.n);
        let mut sys = NewtonSystem::new(self.layout);
        self.theta.accumulate(z, &mut sys)?;
        self.sample_terms(z, &mut sys)?;

        if let Some(soc) = &self.soc {
            let s = z[soc.s];
            let u = soc.residual(z);
            let norm_u = u.norm();
            let r = s * s - norm_u * norm_u;
            if !(s > 0.0 && r > 0.0) {
                return None;
            }
            let width = k + n;
            let atu = soc.cols.transpose() * &u;
            sys.grad[soc.s] -= 2.0 * s / r;
            for c in 0..width {
                sys.grad[c] += 2.0 * atu[c] / r;
            }
            // In (s, u) the Hessian is (2/r)·I on u ⟂ e, and on span{(1, e), (1, −e)}
            // it has eigenvalues (2/r²)(s ∓ ‖u‖)² with e = u/‖u‖.
            let rows = u.len();
            let mut f = DMatrix::zeros(rows + 2, self.layout.len);
            let (e, ate) = if norm_u > 0.0 {
                (&u / norm_u, &atu / norm_u)
            } else {
                let mut e = DVector::zeros(rows);
                e[0] = 1.0;
                let ate = soc.cols.row(0).transpose().into_owned();
                (e, ate)
            };
            let minus = (s - norm_u) / r;
            let plus = (s + norm_u) / r;
            f[(0, soc.s)] = minus;
            f[(1, soc.s)] = plus;
            for c in 0..width {
                f[(0, c)] = minus * ate[c];
                f[(1, c)] = -plus * ate[c];
            }
            let root = (2.0 / r).sqrt();
            let mut proj = soc.cols.clone();
            proj.ger(-1.0, &e, &ate, 1.0);
            f.view_mut((2, 0), (rows, width)).copy_from(&(proj * root));
            sys.factors.push(f);
        }
        for cone in &self.cones {
            cone.accumulate(z, &mut sys)?;
        }
        for h in &self.halfspaces {
            let s = h.slack(z);
            if !(s > 0.0) {
                return None;
            }
            for &(j1, v1) in &h.h {
                sys.grad[j1] -= v1 / s;
                for &(j2, v2) in &h.h {
                    sys.add(j1, j2, v1 * v2 / (s * s));
                }
            }
        }
        Some(sys)
    }

    /// Terms of `Σ −log(cᵢ(a) − dᵢ)` with `cᵢ = p / (xᵢᴴΘ⁻¹xᵢ)`.
    fn sample_terms(&self, z: &DVector<f64>, sys: &mut NewtonSystem) -> Option<()> {
        use crate::hermitian::C64;
        let (k, n) = (self.layout.k, self.layout.n);
        let p = self.p;
        let theta = self.theta.matrix(z);
        let dim = theta.dim();
        let inv = theta.cholesky()?.inverse();

        // With y = Θ⁻¹x and q = xᴴy: ∂q/∂a_j = −g_j where g_j = yᴴD_j y, and
        // ∂²q/∂a_j∂a_h = 2 Re(yᴴD_jΘ⁻¹D_h y). The latter sums over samples
        // into Re Tr(D_jΘ⁻¹D_h Y) with Y = Σ cᵢ yᵢyᵢᴴ.
        let mut yv = DMatrix::<f64>::zeros(n, dim * dim);
        let mut ysum = DMatrix::<C64>::zeros(dim, dim);
        let mut slack = Vec::with_capacity(n);
        for (i, x) in self.problem.samples.samples().iter().enumerate() {
            let y = &inv * x;
            let q = x.dotc(&y).re;
            let u = p / q - z[k + i];
            if !(u > 0.0 && q > 0.0) {
                return None;
            }
            let c = 2.0 * p / (q * q * u);
            for b in 0..dim {
                for a in 0..dim {
                    ysum[(a, b)] += y[a] * y[b].conj() * c;
                }
            }
            let mut col = 0;
            for a in 0..dim {
                yv[(i, col)] = y[a].norm_sqr();
                col += 1;
            }
            for a in 0..dim {
                for b in (a + 1)..dim {
                    let v = y[a] * y[b].conj() * std::f64::consts::SQRT_2;
                    yv[(i, col)] = v.re;
                    yv[(i, col + 1)] = v.im;
                    col += 2;
                }
            }
            slack.push((q, u));
        }
        let g = &yv * &self.basis_vec;

        let mut gg_weight = DMatrix::zeros(n, k);
        let mut grad_weight = DVector::zeros(n);
        for (i, &(q, u)) in slack.iter().enumerate() {
            let dc = p / (q * q);
            sys.grad[k + i] += 1.0 / u;
            sys.dd[i] += 1.0 / (u * u);
            grad_weight[i] = dc / u;
            let w = -2.0 * p / (q * q * q * u) + dc * dc / (u * u);
            for j in 0..k {
                gg_weight[(i, j)] = w * g[(i, j)];
                sys.sd[(j, i)] -= dc * g[(i, j)] / (u * u);
            }
        }
        let ga = g.transpose() * &grad_weight;
        for j in 0..k {
            sys.grad[j] -= ga[j];
        }
        let hg = g.transpose() * &gg_weight;

        let left: Vec<DMatrix<C64>> = self.basis.iter().map(|b| b.as_matrix() * &inv).collect();
        let right: Vec<DMatrix<C64>> = self.basis.iter().map(|b| b.as_matrix() * &ysum).collect();
        for j in 0..k {
            for h in j..k {
                let mut tr = 0.0;
                for a in 0..dim {
                    for b in 0..dim {
                        tr += (left[j][(a, b)] * right[h][(b, a)]).re;
                    }
                }
                let v = tr + hg[(j, h)];
                sys.ss[(j, h)] += v;
                if h != j {
                    sys.ss[(h, j)] += v;
                }
            }
        }
        Some(())
    }

    /// Step along the central-path tangent `dz/dt = −H⁻¹c` from weight `t`
    /// to `next_t`, shortened until it stays interior and does not worsen
    /// the merit function at `next_t`.
    fn predict(&self, z: &DVector<f64>, t: f64, next_t: f64) -> Option<DVector<f64>> {
        let sys = self.derivatives(z)?;
        let tangent = sys.solve(&-&self.cost)?;
        let merit = |w: &DVector<f64>| self.barrier(w).map(|b| next_t * self.objective(w) + b);
        let base = merit(z)?;
        let mut step = next_t - t;
        for _ in 0..40 {
            let candidate = z + &tangent * step;
            if let Some(m) = merit(&candidate) {
                if m < base {
                    return Some(candidate);
                }
            }
            step *= 0.5;
        }
        None
    }

    /// Strictly feasible point built from a starting shape.
    fn initial_point(&self, init: &HermitianMatrix) -> Option<DVector<f64>> {
        let structure = self.problem.structure;
        let k = self.layout.k;
        let base = structure.affine_coefficients(init).unwrap_or_else(|_| vec![0.0; k]);
        let half: Vec<f64> = base.iter().map(|v| 0.5 * v).collect();
        for candidate in [base, half, vec![0.0; k]] {
            let a = self.interior_coefficients(candidate);
            if let Some(z) = self.complete_point(&a) {
                return Some(z);
            }
        }
        None
    }

    fn interior_coefficients(&self, mut a: Vec<f64>) -> Vec<f64> {
        let structure = self.problem.structure;
        let bounds = structure.bounds();
        let k = a.len().max(1) as f64;
        let target = structure.trace_target().unwrap_or(self.p);
        if bounds.nonnegative {
            let delta = 1e-3 * target / (self.p * k);
            for v in &mut a {
                *v = v.max(delta);
            }
        }
        if let Some(r) = bounds.l1_bound {
            let total: f64 = a.iter().map(|v| v.abs()).sum();
            if total > 0.9 * r {
                let shrink = 0.9 * r / total;
                for v in &mut a {
                    *v *= shrink;
                }
            }
        }
        a
    }

    fn complete_point(&self, a: &[f64]) -> Option<DVector<f64>> {
        let structure = self.problem.structure;
        let samples = self.problem.samples;
        let (k, n) = (self.layout.k, self.layout.n);
        let floor = self.problem.d_floor;
        let theta = structure.matrix(a).ok()?;
        let factor = theta.cholesky()?;
        let mut z = DVector::zeros(self.layout.len);
        for (j, v) in a.iter().enumerate() {
            z[j] = *v;
        }
        for (i, x) in samples.samples().iter().enumerate() {
            let c = self.p / x.dotc(&factor.solve(x)).re;
            if !(c > 4.0 * floor) {
                return None;
            }
            z[k + i] = floor + 0.5 * (c - floor);
        }
        let weights: Vec<f64> = z.rows(k, n).iter().copied().collect();
        let m = residual_matrix(&theta, samples, &weights);
        match self.problem.norm {
            NormKind::Frobenius => z[self.norm_start] = 2.0 * m.frobenius_norm() + 1e-6,
            NormKind::Spectral => {
                let eig = m.eigh().ok()?;
                z[self.norm_start] = 2.0 * eig.min().abs().max(eig.max().abs()) + 1e-6;
            }
            NormKind::Trace => {
                let eig = m.eigh().ok()?;
                let shift = 0.5 * eig.min().abs().max(eig.max().abs()) + 1e-6;
                let pos = eig.reassemble(|l| l.max(0.0) + shift);
                for (r, v) in pos.real_vectorize().into_iter().enumerate() {
                    z[self.norm_start + r] = v;
                }
            }
        }
        if let (Some(aux), Some(r)) = (self.aux_start, structure.bounds().l1_bound) {
            let total: f64 = a.iter().map(|v| v.abs()).sum();
            let margin = (r - total) / (2.0 * k.max(1) as f64);
            for j in 0..k {
                z[aux + j] = a[j].abs() + margin;
            }
        }
        self.barrier(&z).map(|_| z)
    }
}

fn residual_matrix(theta: &HermitianMatrix, samples: &SampleSet, weights: &[f64]) -> HermitianMatrix {
    let n = samples.n() as f64;
    let mut diff = theta.clone();
    for (x, d) in samples.samples().iter().zip(weights) {
        diff.add_outer(-d / n, x);
    }
    diff
}

/// `H⁻¹ rhs` with symmetric diagonal scaling; a small ridge is added only if
/// the scaled matrix fails to factor.
fn solve_spd(hess: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let m = hess.nrows();
    let scale = DVector::from_fn(m, |i, _| 1.0 / hess[(i, i)].max(f64::MIN_POSITIVE).sqrt());
    let scaled = DMatrix::from_fn(m, m, |r, c| hess[(r, c)] * scale[r] * scale[c]);
    let rhs = rhs.component_mul(&scale);
    for ridge in [0.0, 1e-14, 1e-12, 1e-10, 1e-8] {
        let mut a = scaled.clone();
        for i in 0..m {
            a[(i, i)] += ridge;
        }
        if let Some(ch) = a.cholesky() {
            return Some(ch.solve(&rhs).component_mul(&scale));
        }
    }
    None
}

/// `‖Θ − (1/n) Σ dᵢ xᵢxᵢᴴ‖` in the chosen norm.
pub fn relaxed_objective(theta: &HermitianMatrix, samples: &SampleSet, weights: &[f64], norm: NormKind) -> Result<f64> {
    if weights.len() != samples.n() {
        return Err(Error::DimensionMismatch {
            expected: samples.n(),
            found: weights.len(),
        });
    }
    residual_matrix(theta, samples, weights).norm(norm)
}

/// Solve COCA. The warm start follows `opts.warm_start`.
pub fn coca_solve(problem: &CocaProblem<'_>, opts: &CocaOptions) -> Result<EstimateReport> {
    let (init, source) = if opts.warm_start {
        warm_start_matrix(problem)?
    } else {
        (problem.structure.offset().clone(), WarmStartSource::Cold)
    };
    solve_from(problem, opts, &init, source)
}

/// Solve COCA from a caller-supplied starting shape (e.g. an already
/// computed Tyler estimate).
pub fn coca_solve_from(
    problem: &CocaProblem<'_>,
    opts: &CocaOptions,
    init: &HermitianMatrix,
) -> Result<EstimateReport> {
    solve_from(problem, opts, init, WarmStartSource::Provided)
}

fn warm_start_matrix(problem: &CocaProblem<'_>) -> Result<(HermitianMatrix, WarmStartSource)> {
    let target = problem.structure.trace_target().expect("checked scale-fixed");
    let t = tyler(problem.samples, &TylerOptions::default())?;
    if t.existed {
        Ok((t.theta_hat.with_trace(target), WarmStartSource::Tyler))
    } else {
        Ok((
            sample_covariance(problem.samples, Some(target))?.theta_hat,
            WarmStartSource::SampleCovariance,
        ))
    }
}

fn solve_from(
    problem: &CocaProblem<'_>,
    opts: &CocaOptions,
    init: &HermitianMatrix,
    source: WarmStartSource,
) -> Result<EstimateReport> {
    if !(opts.barrier_growth > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "barrier growth must exceed 1, got {}",
            opts.barrier_growth
        )));
    }
    if !(opts.tol_abs > 0.0 && opts.tol_rel >= 0.0 && opts.centering_tol > 0.0) {
        return Err(Error::InvalidArgument("COCA tolerances must be positive".into()));
    }
    let structure = problem.structure;
    let samples = problem.samples;
    let (p, n) = (samples.p(), samples.n());
    let program = Program::new(*problem);
    let mut z = program.initial_point(init).ok_or(Error::Infeasible { iteration: 0 })?;

    let nu = program.nu;
    let mut t = nu / program.objective(&z).abs().max(1e-3);
    let mut history = Vec::new();
    let mut steps = 0;
    let mut decrement;
    loop {
        decrement = f64::INFINITY;
        let mut round_steps = 0;
        loop {
            if steps >= opts.max_iter {
                return Err(Error::SolverNotConverged {
                    iterations: steps,
                    history,
                });
            }
            steps += 1;
            let mut sys = program.derivatives(&z).ok_or(Error::Infeasible { iteration: steps })?;
            sys.grad += &program.cost * t;
            let grad = sys.grad.clone();
            let Some(dz) = sys.solve(&-&grad) else {
                break;
            };
            decrement = -grad.dot(&dz);
            if !(decrement / 2.0 > opts.centering_tol) {
                break;
            }
            let f0 = t * program.objective(&z) + program.barrier(&z).expect("current point is interior");
            let mut alpha = 1.0;
            let mut decrease = None;
            while alpha > 1e-12 {
                let candidate = &z + &dz * alpha;
                if let Some(b) = program.barrier(&candidate) {
                    let f1 = t * program.objective(&candidate) + b;
                    if f1 <= f0 - 0.25 * alpha * decrement {
                        z = candidate;
                        decrease = Some(f0 - f1);
                        break;
                    }
                }
                alpha *= 0.5;
            }
            round_steps += 1;
            // Progress below rounding of the merit function ends the round.
            match decrease {
                Some(delta) if delta > STAGNATION * f0.abs().max(1.0) && round_steps < MAX_ROUND_STEPS => {}
                _ => break,
            }
        }
        let gap = nu / t;
        let objective = program.objective(&z);
        history.push(IterationRecord {
            iteration: steps,
            barrier_weight: t,
            duality_gap: gap,
            newton_decrement: decrement,
            objective,
        });
        if !opts.record_history && history.len() > HISTORY_TAIL {
            history.remove(0);
        }
        // The gap bound only holds near the central path.
        let centered = decrement / 2.0 <= LOOSE_CENTERING;
        if centered && gap <= opts.tol_abs + opts.tol_rel * objective.abs() {
            break;
        }
        let next_t = t * opts.barrier_growth;
        if let Some(next) = program.predict(&z, t, next_t) {
            z = next;
        }
        t = next_t;
    }

    let coefficients = program.coefficients(&z);
    let weights = program.weights(&z);
    let target = structure.trace_target().expect("checked scale-fixed");
    let theta = structure.matrix(&coefficients)?.with_trace(target);
    let objective = relaxed_objective(&theta, samples, &weights, problem.norm)?;
    let audit = audit_constraints(&theta, samples, &weights, structure)?;
    let gap = nu / t;

    let mut warnings = Vec::new();
    if n <= p {
        warnings.push(Warning::InsufficientSamples { n, p });
    }
    Ok(EstimateReport {
        theta_hat: theta,
        coefficients: Some(coefficients),
        method: Method::Coca,
        iterations: steps,
        residual: gap,
        objective: Some(objective),
        existed: true,
        warnings,
        coca: Some(CocaDiagnostics {
            weights,
            duality_gap: gap,
            newton_decrement: decrement,
            barrier_weight: t,
            history,
            min_slack_eigenvalue: audit.min_slack_eigenvalue,
            active_constraints: audit.active,
            active_set_condition: audit.condition,
            warm_start: source,
        }),
    })
}

struct Audit {
    min_slack_eigenvalue: f64,
    active: usize,
    condition: f64,
}

fn audit_constraints(
    theta: &HermitianMatrix,
    samples: &SampleSet,
    weights: &[f64],
    structure: &AffineStructure,
) -> Result<Audit> {
    let p = samples.p() as f64;
    let mut min_eig = theta.min_eigenvalue()?;
    let inv = theta.inverse_pd().ok();
    let mut active_dirs = Vec::new();
    for (x, &d) in samples.samples().iter().zip(weights) {
        let mut slack = theta.clone();
        slack.add_outer(-d / p, x);
        min_eig = min_eig.min(slack.min_eigenvalue()?);
        if let Some(inv) = &inv {
            let bound = p / quad_form(inv, x)?;
            if d >= (1.0 - ACTIVE_TOL) * bound {
                active_dirs.push(HermitianMatrix::outer(x).real_vectorize());
            }
        }
    }
    let k = structure.dim();
    let cols = k + active_dirs.len();
    let rows = structure.p() * structure.p();
    let condition = if cols == 0 {
        1.0
    } else if cols > rows {
        f64::INFINITY
    } else {
        let jac = structure.basis_vec();
        let m = DMatrix::from_fn(
            rows,
            cols,
            |r, c| if c < k { jac[(r, c)] } else { active_dirs[c - k][r] },
        );
        let s = m.singular_values();
        let top = s.iter().fold(0.0_f64, |a, &b| a.max(b));
        let bottom = s.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if bottom > 0.0 {
            top / bottom
        } else {
            f64::INFINITY
        }
    };
    Ok(Audit {
        min_slack_eigenvalue: min_eig,
        active: active_dirs.len(),
        condition,
    })
}

/// Unstructured COCA: the whole trace-`p` hyperplane with the Frobenius norm.
/// For `n ≥ p + 1` samples in general position this reproduces Tyler's
/// estimator.
pub fn coca_unconstrained(samples: &SampleSet, opts: &CocaOptions) -> Result<EstimateReport> {
    let p = samples.p();
    let structure = full_hyperplane(p, p as f64)?;
    let problem = CocaProblem::new(samples, &structure, NormKind::Frobenius)?;
    coca_solve(&problem, opts)
}

/// Non-relaxed GMM objective `‖Θ − f(Θ)‖` with Tyler's map `f`.
pub fn gmm_objective(theta: &HermitianMatrix, samples: &SampleSet, norm: NormKind) -> Result<f64> {
    let inv = theta.inverse_pd()?;
    let p = samples.p() as f64;
    let n = samples.n() as f64;
    let mut diff = theta.clone();
    for x in samples.samples() {
        let q = quad_form(&inv, x)?;
        diff.add_outer(-p / (n * q), x);
    }
    diff.norm(norm)
}

/// LMI test `Θ − (d/p) x xᴴ ⪰ −1e-10 · I` for positive-definite `Θ`.
pub fn schur_check(theta: &HermitianMatrix, x: &CVector, d: f64) -> Result<bool> {
    if !theta.is_positive_definite() {
        return Err(Error::NotPositiveDefinite);
    }
    let p = theta.dim() as f64;
    let mut slack = theta.clone();
    slack.add_outer(-d / p, x);
    Ok(slack.min_eigenvalue()? >= -1e-10)
}

/// Scalar form of the same constraint, `d ≤ p / (xᴴΘ⁻¹x)`.
pub fn schur_scalar_check(theta: &HermitianMatrix, x: &CVector, d: f64) -> Result<bool> {
    let inv = theta.inverse_pd()?;
    let p = theta.dim() as f64;
    Ok(d <= p / quad_form(&inv, x)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermitian::C64;
    use crate::sampling::sample_cae;
    use crate::structures::{doa_structure, scale_fix, toeplitz_structure, DoaGrid};

    fn real_vector(v: &[f64]) -> CVector {
        CVector::from_iterator(v.len(), v.iter().map(|x| C64::new(*x, 0.0)))
    }

    #[test]
    fn schur_boundary_cases() {
        let theta = HermitianMatrix::identity(3);
        let e1 = real_vector(&[1.0, 0.0, 0.0]);
        assert!(schur_check(&theta, &e1, 3.0).unwrap());
        let mut slack = theta.clone();
        slack.add_outer(-1.0, &e1);
        assert_eq!(slack.min_eigenvalue().unwrap(), 0.0);
        assert!(!schur_check(&theta, &e1, 4.0).unwrap());
        assert!(schur_scalar_check(&theta, &e1, 3.0).unwrap());
        assert!(!schur_scalar_check(&theta, &e1, 4.0).unwrap());
        let singular = HermitianMatrix::from_diagonal(&[1.0, 0.0, 1.0]);
        assert!(matches!(
            schur_check(&singular, &e1, 1.0),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn gmm_objective_zero_at_tyler() {
        let theta0 = HermitianMatrix::from_diagonal(&[3.0, 1.0, 0.5]);
        let set = sample_cae(&theta0, 20, 4).unwrap();
        let t = tyler(&set, &TylerOptions::default()).unwrap();
        assert!(gmm_objective(&t.theta_hat, &set, NormKind::Frobenius).unwrap() < 1e-8);
        let at_identity = gmm_objective(&HermitianMatrix::identity(3), &set, NormKind::Frobenius).unwrap();
        assert!(at_identity > 0.1);
        assert!(gmm_objective(
            &HermitianMatrix::from_diagonal(&[1.0, 0.0, 1.0]),
            &set,
            NormKind::Frobenius
        )
        .is_err());
    }

    fn relative_to_tyler(set: &SampleSet, opts: &CocaOptions) -> (f64, EstimateReport) {
        let coca = coca_unconstrained(set, opts).unwrap();
        let t = tyler(set, &TylerOptions::default()).unwrap();
        let reference = t.theta_hat.with_trace(set.p() as f64);
        let rel = (&coca.theta_hat - &reference).frobenius_norm() / reference.frobenius_norm();
        (rel, coca)
    }

    #[test]
    fn unconstrained_recovers_tyler() {
        let theta0 = HermitianMatrix::from_diagonal(&[2.0, 1.0, 0.5]);
        let set = sample_cae(&theta0, 12, 10).unwrap();
        let (rel, coca) = relative_to_tyler(&set, &CocaOptions::default());
        assert!(rel < 1e-4, "relative distance {rel}");
        assert!(coca.objective.unwrap() < 1e-6);
        assert_eq!(coca.coca.as_ref().unwrap().warm_start, WarmStartSource::Tyler);

        for (p, n) in [(2, 6), (5, 11)] {
            let set = sample_cae(&HermitianMatrix::identity(p), n, 3).unwrap();
            let (rel, _) = relative_to_tyler(&set, &CocaOptions::default());
            assert!(rel < 1e-4, "p={p}: relative distance {rel}");
        }
    }

    #[test]
    fn unconstrained_cold_start_recovers_tyler() {
        let theta0 = HermitianMatrix::from_diagonal(&[2.0, 1.0, 0.5]);
        let set = sample_cae(&theta0, 12, 10).unwrap();
        let opts = CocaOptions {
            warm_start: false,
            ..Default::default()
        };
        let (rel, coca) = relative_to_tyler(&set, &opts);
        assert!(rel < 1e-4, "relative distance {rel}");
        assert_eq!(coca.coca.unwrap().warm_start, WarmStartSource::Cold);
    }

    #[test]
    fn tightness_of_the_summed_inequality() {
        let theta0 = HermitianMatrix::from_diagonal(&[4.0, 1.0, 1.0, 0.25]);
        let set = sample_cae(&theta0, 15, 21).unwrap();
        let coca = coca_unconstrained(&set, &CocaOptions::default()).unwrap();
        let f = crate::baselines::tyler_map(&set, &coca.theta_hat).unwrap().unwrap();
        let diff = &f - &coca.theta_hat;
        assert!(diff.min_eigenvalue().unwrap() >= -1e-6);
        assert!(diff.frobenius_norm() < 1e-5);
    }

    #[test]
    fn feasibility_at_return() {
        let theta0 = HermitianMatrix::from_diagonal(&[2.0, 1.5, 1.0, 0.5]);
        let structure = scale_fix(&toeplitz_structure(4).unwrap(), 4.0).unwrap();
        for n in [2, 4, 9] {
            let set = sample_cae(&theta0, n, 5).unwrap();
            let problem = CocaProblem::new(&set, &structure, NormKind::Frobenius).unwrap();
            let report = coca_solve(&problem, &CocaOptions::default()).unwrap();
            let diag = report.coca.as_ref().unwrap();
            assert!(diag.min_slack_eigenvalue >= -1e-6);
            assert!(diag.weights.iter().all(|&d| d >= problem.d_floor));
            assert!(structure.membership_residual(&report.theta_hat).unwrap() < 1e-7);
            assert!((report.theta_hat.trace() - 4.0).abs() < 1e-12);
            assert_eq!(report.warnings.is_empty(), n > 4);
        }
    }

    #[test]
    fn single_sample_matches_grid_oracle() {
        // p = 2 Toeplitz, trace 2: Θ = I + a₁·[[0,1],[1,0]] + a₂·[[0,i],[−i,0]].
        let structure = scale_fix(&toeplitz_structure(2).unwrap(), 2.0).unwrap();
        let x = real_vector(&[0.8, 0.6]);
        let set = SampleSet::from_unit_vectors(2, vec![x.clone()], 0, Default::default()).unwrap();
        let problem = CocaProblem::new(&set, &structure, NormKind::Frobenius).unwrap();
        let report = coca_solve(&problem, &CocaOptions::default()).unwrap();

        let mut best = f64::INFINITY;
        let steps = 2000;
        for ia in 1..steps {
            let a1 = -1.0 + 2.0 * ia as f64 / steps as f64;
            let theta = structure.matrix(&[a1, 0.0]).unwrap();
            let bound = 2.0 / quad_form(&theta.inverse_pd().unwrap(), &x).unwrap();
            for id in 0..=steps {
                let d = bound * id as f64 / steps as f64;
                let value = relaxed_objective(&theta, &set, &[d], NormKind::Frobenius).unwrap();
                best = best.min(value);
            }
        }
        let solved = report.objective.unwrap();
        assert!(solved <= best + 1e-9, "solver {solved} vs grid {best}");
        assert!(best - solved < 5e-3, "solver {solved} vs grid {best}");
        assert!(report.coefficients.as_ref().unwrap()[1].abs() < 1e-5);
    }

    #[test]
    fn inactive_weights_are_stationary() {
        let theta0 = HermitianMatrix::from_diagonal(&[3.0, 1.0, 1.0, 0.5, 0.5]);
        let structure = scale_fix(&toeplitz_structure(5).unwrap(), 5.0).unwrap();
        let set = sample_cae(&theta0, 20, 8).unwrap();
        let problem = CocaProblem::new(&set, &structure, NormKind::Frobenius).unwrap();
        let report = coca_solve(&problem, &CocaOptions::default()).unwrap();
        let weights = &report.coca.as_ref().unwrap().weights;
        let inv = report.theta_hat.inverse_pd().unwrap();
        let residual = residual_matrix(&report.theta_hat, &set, weights);
        let scale = residual.frobenius_norm();
        for (x, &d) in set.samples().iter().zip(weights) {
            let bound = 5.0 / quad_form(&inv, x).unwrap();
            // Derivative of the objective along dᵢ.
            let slope = -quad_form(&residual, x).unwrap() / (20.0 * scale);
            // A descent direction is only allowed against a nearly active constraint.
            if slope < -1e-5 {
                assert!(
                    (bound - d) * -slope <= 1e-6,
                    "weight {d} (bound {bound}) with slope {slope}"
                );
            } else if slope > 1e-5 {
                assert!(
                    (d - problem.d_floor) * slope <= 1e-6,
                    "weight {d} off the floor with slope {slope}"
                );
            }
        }
    }

    #[test]
    fn norms_agree_on_a_toeplitz_problem() {
        let theta0 = HermitianMatrix::from_diagonal(&[2.0, 1.0, 1.0, 0.5]);
        let structure = scale_fix(&toeplitz_structure(4).unwrap(), 4.0).unwrap();
        let set = sample_cae(&theta0, 128, 2).unwrap();
        let mut estimates = Vec::new();
        for norm in NormKind::ALL {
            let problem = CocaProblem::new(&set, &structure, norm).unwrap();
            let report = coca_solve(&problem, &CocaOptions::default()).unwrap();
            assert!(report.coca.as_ref().unwrap().min_slack_eigenvalue >= -1e-6);
            estimates.push(report.theta_hat);
        }
        for i in 0..3 {
            for j in (i + 1)..3 {
                let rel = (&estimates[i] - &estimates[j]).frobenius_norm() / estimates[i].frobenius_norm();
                assert!(rel < 0.1, "{i} vs {j}: {rel}");
            }
        }
    }

    #[test]
    fn doa_coefficients_stay_nonnegative() {
        let grid = DoaGrid::uniform(6, 5, 0.0, std::f64::consts::PI, 0.1).unwrap();
        let structure = scale_fix(&doa_structure(&grid).unwrap(), 0.6).unwrap();
        let mut theta0 = HermitianMatrix::identity(6).scale(0.1);
        theta0.add_outer(1.0, &crate::structures::steering_vector(6, grid.angles[1]));
        let set = sample_cae(&theta0, 30, 6).unwrap();
        let problem = CocaProblem::new(&set, &structure, NormKind::Frobenius).unwrap();
        let report = coca_solve(&problem, &CocaOptions::default()).unwrap();
        assert!(report.coefficients.unwrap().iter().all(|&a| a > 0.0));
    }

    #[test]
    fn l1_cap_is_respected() {
        let theta0 = HermitianMatrix::from_diagonal(&[2.0, 1.0, 0.5]);
        let structure = scale_fix(&toeplitz_structure(3).unwrap(), 3.0)
            .unwrap()
            .with_l1_bound(Some(0.05))
            .unwrap();
        let set = sample_cae(&theta0, 10, 9).unwrap();
        let problem = CocaProblem::new(&set, &structure, NormKind::Frobenius).unwrap();
        let report = coca_solve(&problem, &CocaOptions::default()).unwrap();
        let total: f64 = report.coefficients.unwrap().iter().map(|a| a.abs()).sum();
        assert!(total <= 0.05);
    }

    #[test]
    fn structure_without_definite_member_is_infeasible() {
        let offset = HermitianMatrix::from_diagonal(&[2.0, 0.0]);
        let off =
            HermitianMatrix::from_fn(2, |i, h| if i != h { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }).unwrap();
        let structure = AffineStructure::new(
            crate::structures::StructureFamily::Custom,
            offset,
            vec![off],
            Some(2.0),
            Default::default(),
        )
        .unwrap();
        let set = sample_cae(&HermitianMatrix::identity(2), 4, 1).unwrap();
        let problem = CocaProblem::new(&set, &structure, NormKind::Frobenius).unwrap();
        assert!(matches!(
            coca_solve(&problem, &CocaOptions::default()),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn problem_validation() {
        let set = sample_cae(&HermitianMatrix::identity(3), 5, 1).unwrap();
        let unscaled = toeplitz_structure(3).unwrap();
        assert!(CocaProblem::new(&set, &unscaled, NormKind::Frobenius).is_err());
        let wrong_p = scale_fix(&toeplitz_structure(2).unwrap(), 2.0).unwrap();
        assert!(CocaProblem::new(&set, &wrong_p, NormKind::Frobenius).is_err());
        let ok = scale_fix(&unscaled, 3.0).unwrap();
        let problem = CocaProblem::new(&set, &ok, NormKind::Frobenius).unwrap();
        assert!((problem.d_floor - 3e-8).abs() < 1e-20);
        assert!(problem.with_d_floor(0.0).is_err());
    }
}
