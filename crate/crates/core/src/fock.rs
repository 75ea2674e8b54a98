//! Truncated Fock space: states, canonical operators and operator algebra.
//!
//! The basis is ordered by photon number, `|0>, |1>, ..., |dim-1>`, and the
//! matrix row/column index of every operator is the photon number.

use std::ops::{Add, Mul, Sub};

use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::gadgets::NonlinearFunction;

/// Discarded tail weight accepted by the truncation guards.
pub const TAIL_TOLERANCE: f64 = 1e-10;

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-8;
const PSD_TOL: f64 = 1e-8;

/// Whether truncation guards reject states that leak past the cutoff.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Guard {
    #[default]
    Enforce,
    Off,
}

impl Guard {
    pub fn from_disabled(disabled: bool) -> Self {
        if disabled {
            Guard::Off
        } else {
            Guard::Enforce
        }
    }

    pub fn is_on(self) -> bool {
        self == Guard::Enforce
    }
}

/// Dense complex matrix on the truncated Fock basis.
#[derive(Clone, Debug, PartialEq)]
pub struct FockOperator {
    mat: Mat<C64>,
}

impl FockOperator {
    pub fn from_mat(mat: Mat<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                found: mat.ncols(),
            });
        }
        check_dim(mat.nrows())?;
        Ok(Self { mat })
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            mat: Mat::from_fn(dim, dim, f),
        })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            mat: Mat::zeros(dim, dim),
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            mat: Mat::identity(dim, dim),
        })
    }

    /// Diagonal operator with the given real entries.
    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::from_fn(values.len(), |i, j| {
            if i == j {
                C64::new(values[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_mat(&self) -> MatRef<'_, C64> {
        self.mat.as_ref()
    }

    pub fn into_mat(self) -> Mat<C64> {
        self.mat
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.mat[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self {
            mat: self.mat.adjoint().to_owned(),
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            mat: Mat::from_fn(self.dim(), self.dim(), |i, j| self.mat[(i, j)] * factor),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.mat[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(self.mat.as_ref())
    }

    /// Largest elementwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &FockOperator) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        let mut worst = 0.0_f64;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                worst = worst.max((self.mat[(i, j)] - other.mat[(i, j)]).norm());
            }
        }
        worst
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(self.mat.as_ref())
    }

    pub fn try_matmul(&self, rhs: &FockOperator) -> Result<FockOperator> {
        same_dim(self.dim(), rhs.dim())?;
        Ok(Self {
            mat: &self.mat * &rhs.mat,
        })
    }

    /// `[self, other] = self * other - other * self`.
    pub fn commutator(&self, other: &FockOperator) -> Result<FockOperator> {
        Ok(&self.try_matmul(other)? - &other.try_matmul(self)?)
    }

    /// Applies the operator to a ket, returning the (unnormalized) amplitudes.
    pub fn apply(&self, ket: &StateVector) -> Result<Vec<C64>> {
        self.apply_amplitudes(ket.amplitudes())
    }

    pub fn apply_amplitudes(&self, amps: &[C64]) -> Result<Vec<C64>> {
        same_dim(self.dim(), amps.len())?;
        let d = self.dim();
        Ok((0..d)
            .map(|i| (0..d).map(|j| self.mat[(i, j)] * amps[j]).sum())
            .collect())
    }

    /// `<bra| self |ket>`.
    pub fn matrix_element(&self, bra: &StateVector, ket: &StateVector) -> Result<C64> {
        let applied = self.apply(ket)?;
        Ok(bra
            .amplitudes()
            .iter()
            .zip(&applied)
            .map(|(b, k)| b.conj() * k)
            .sum())
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        self.mat
            .singular_values()
            .map_err(|e| Error::Numerical(format!("{e:?}")))
    }
}

impl Add for &FockOperator {
    type Output = FockOperator;

    fn add(self, rhs: &FockOperator) -> FockOperator {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        FockOperator {
            mat: &self.mat + &rhs.mat,
        }
    }
}

impl Sub for &FockOperator {
    type Output = FockOperator;

    fn sub(self, rhs: &FockOperator) -> FockOperator {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        FockOperator {
            mat: &self.mat - &rhs.mat,
        }
    }
}

impl Mul for &FockOperator {
    type Output = FockOperator;

    fn mul(self, rhs: &FockOperator) -> FockOperator {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        FockOperator {
            mat: &self.mat * &rhs.mat,
        }
    }
}

/// Normalized ket on the truncated basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Vec<C64>,
}

impl StateVector {
    /// Normalizes the given amplitudes. Fails for a zero vector.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        check_dim(amps.len())?;
        let norm = amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidState(format!("cannot normalize vector of norm {norm}")));
        }
        Ok(Self {
            amps: amps.into_iter().map(|c| c / norm).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        same_dim(self.dim(), other.dim())?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|self><other|`.
    pub fn outer(&self, other: &StateVector) -> Result<FockOperator> {
        same_dim(self.dim(), other.dim())?;
        FockOperator::from_fn(self.dim(), |i, j| self.amps[i] * other.amps[j].conj())
    }

    pub fn projector(&self) -> FockOperator {
        self.outer(self).expect("same state")
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            op: self.projector(),
        }
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amps.iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Hermitian, unit-trace, positive semidefinite operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    op: FockOperator,
}

impl DensityMatrix {
    /// Validates hermiticity, trace and positivity.
    pub fn new(op: FockOperator) -> Result<Self> {
        Self::validated(op).map(|(rho, _)| rho)
    }

    /// Validates and also returns the smallest eigenvalue.
    pub(crate) fn validated(op: FockOperator) -> Result<(Self, f64)> {
        let herm = op.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (error {herm:.3e})")));
        }
        let tr = op.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min_eig = min_eigenvalue(op.as_mat())?;
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:.3e}")));
        }
        Ok((Self { op }, min_eig))
    }

    /// Hermitizes and rescales to unit trace, then validates.
    pub fn from_operator_normalized(op: FockOperator) -> Result<Self> {
        let mat = op.as_mat();
        let d = op.dim();
        let herm = Mat::from_fn(d, d, |i, j| (mat[(i, j)] + mat[(j, i)].conj()) * 0.5);
        let tr: f64 = (0..d).map(|i| herm[(i, i)].re).sum();
        if !(tr.is_finite() && tr.abs() > f64::MIN_POSITIVE) {
            return Err(Error::InvalidState(format!("cannot normalize trace {tr}")));
        }
        let scaled = Mat::from_fn(d, d, |i, j| herm[(i, j)] / tr);
        Self::new(FockOperator::from_mat(scaled)?)
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        psi.to_density()
    }

    /// Diagonal state with the given populations (normalized here).
    pub fn from_populations(p: &[f64]) -> Result<Self> {
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidState("populations must be finite and nonnegative".into()));
        }
        let total: f64 = p.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidState("populations sum to zero".into()));
        }
        let scaled: Vec<f64> = p.iter().map(|x| x / total).collect();
        Ok(Self {
            op: FockOperator::diagonal(&scaled)?,
        })
    }

    /// Bose-Einstein state with mean photon number `nbar`.
    pub fn thermal(nbar: f64, dim: usize, guard: Guard) -> Result<Self> {
        check_dim(dim)?;
        if !(nbar.is_finite() && nbar >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "nbar".into(),
                reason: format!("must be finite and nonnegative, got {nbar}"),
            });
        }
        if nbar == 0.0 {
            return Ok(fock_state(0, dim)?.to_density());
        }
        let ratio = nbar / (nbar + 1.0);
        let tail = ratio.powi(dim as i32);
        if guard.is_on() && tail >= TAIL_TOLERANCE {
            let min_dim = (TAIL_TOLERANCE.ln() / ratio.ln()).ceil() as usize + 1;
            return Err(Error::TruncationLeakage {
                what: format!("thermal state nbar={nbar}"),
                weight: tail,
                min_dim,
            });
        }
        let p: Vec<f64> = (0..dim).map(|n| ratio.powi(n as i32)).collect();
        Self::from_populations(&p)
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        Self::from_populations(&vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn op(&self) -> &FockOperator {
        &self.op
    }

    pub fn as_mat(&self) -> MatRef<'_, C64> {
        self.op.as_mat()
    }

    pub fn into_op(self) -> FockOperator {
        self.op
    }

    pub fn population(&self, n: usize) -> f64 {
        self.op.get(n, n).re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|n| self.population(n)).collect()
    }

    pub fn trace_error(&self) -> f64 {
        (self.op.trace() - C64::new(1.0, 0.0)).norm()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        min_eigenvalue(self.as_mat())
    }

    /// Half the trace norm of `self - other`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        same_dim(self.dim(), other.dim())?;
        let diff = &self.op - &other.op;
        let eig = hermitian_eigenvalues(diff.as_mat())?;
        Ok(0.5 * eig.iter().map(|x| x.abs()).sum::<f64>())
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        Err(Error::InvalidDimension(dim))
    } else {
        Ok(())
    }
}

pub(crate) fn same_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn frobenius(mat: MatRef<'_, C64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..mat.ncols() {
        for i in 0..mat.nrows() {
            acc += mat[(i, j)].norm_sqr();
        }
    }
    acc.sqrt()
}

pub(crate) fn hermiticity_error(mat: MatRef<'_, C64>) -> f64 {
    let mut worst = 0.0_f64;
    for j in 0..mat.ncols() {
        for i in 0..=j {
            worst = worst.max((mat[(i, j)] - mat[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues (ascending) of the Hermitian part of `mat`.
pub(crate) fn hermitian_eigenvalues(mat: MatRef<'_, C64>) -> Result<Vec<f64>> {
    let d = mat.nrows();
    let herm = Mat::from_fn(d, d, |i, j| (mat[(i, j)] + mat[(j, i)].conj()) * 0.5);
    herm.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("{e:?}")))
}

pub(crate) fn min_eigenvalue(mat: MatRef<'_, C64>) -> Result<f64> {
    Ok(hermitian_eigenvalues(mat)?.first().copied().unwrap_or(0.0))
}

/// Annihilation operator `a` with `<n-1|a|n> = sqrt(n)`.
pub fn annihilation(dim: usize) -> Result<FockOperator> {
    FockOperator::from_fn(dim, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Creation operator, the exact conjugate transpose of [`annihilation`].
pub fn creation(dim: usize) -> Result<FockOperator> {
    Ok(annihilation(dim)?.adjoint())
}

/// Number operator `a^dagger a`.
pub fn number(dim: usize) -> Result<FockOperator> {
    let values: Vec<f64> = (0..dim).map(|n| n as f64).collect();
    check_dim(dim)?;
    FockOperator::diagonal(&values)
}

/// Diagonal operator `f(a^dagger a)`.
pub fn diagonal_function_operator(f: &NonlinearFunction, dim: usize) -> Result<FockOperator> {
    check_dim(dim)?;
    let values: Vec<f64> = (0..dim).map(|n| f.value(n as f64)).collect();
    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "f".into(),
            reason: format!("non-finite value at n = {bad}"),
        });
    }
    FockOperator::diagonal(&values)
}

pub fn fock_state(n: usize, dim: usize) -> Result<StateVector> {
    check_dim(dim)?;
    if n >= dim {
        return Err(Error::OutOfRange { n, dim });
    }
    let mut amps = vec![C64::new(0.0, 0.0); dim];
    amps[n] = C64::new(1.0, 0.0);
    Ok(StateVector { amps })
}

pub(crate) fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn poisson_ln_pmf(n: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    n as f64 * mean.ln() - mean - ln_factorial(n)
}

/// Poisson weight `P(N >= dim)` for the given mean.
pub fn poisson_tail(mean: f64, dim: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let stop = dim.max((mean + 40.0 * mean.sqrt() + 60.0) as usize);
    let mut acc = 0.0;
    let mut ln_p = poisson_ln_pmf(dim, mean);
    for n in dim..=stop {
        let term = ln_p.exp();
        acc += term;
        if n as f64 > mean && term < acc * 1e-18 {
            break;
        }
        ln_p += mean.ln() - ((n + 1) as f64).ln();
    }
    acc
}

/// Smallest dimension whose Poisson tail falls below [`TAIL_TOLERANCE`].
pub fn min_coherent_dim(alpha: C64) -> usize {
    let mean = alpha.norm_sqr();
    let mut dim = 2;
    while poisson_tail(mean, dim) >= TAIL_TOLERANCE {
        dim += 1;
    }
    dim
}

/// Coherent state `|alpha>`, renormalized after truncation.
pub fn coherent_state(alpha: C64, dim: usize) -> Result<StateVector> {
    coherent_state_with(alpha, dim, Guard::Enforce)
}

pub fn coherent_state_with(alpha: C64, dim: usize, guard: Guard) -> Result<StateVector> {
    check_dim(dim)?;
    if !(alpha.re.is_finite() && alpha.im.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "alpha".into(),
            reason: "must be finite".into(),
        });
    }
    let mean = alpha.norm_sqr();
    if guard.is_on() {
        let tail = poisson_tail(mean, dim);
        if tail >= TAIL_TOLERANCE {
            return Err(Error::TruncationLeakage {
                what: format!("coherent state alpha={alpha}"),
                weight: tail,
                min_dim: min_coherent_dim(alpha),
            });
        }
    }
    if mean == 0.0 {
        return fock_state(0, dim);
    }
    let phase = alpha.arg();
    let amps = (0..dim)
        .map(|n| {
            let ln_mod = 0.5 * poisson_ln_pmf(n, mean);
            C64::from_polar(ln_mod.exp(), n as f64 * phase)
        })
        .collect();
    StateVector::from_amplitudes(amps)
}

/// `<y| a^k (a^dagger)^k |y> = ||(a^dagger)^k |y>||^2`.
///
/// The top `k` amplitudes of `y` must be negligible, otherwise `(a^dagger)^k`
/// pushes weight past the cutoff.
pub fn normal_order_norm(y: &StateVector, k: usize) -> Result<f64> {
    Ok(raise(y, k)?.iter().map(|c| c.norm_sqr()).sum())
}

/// `(a^dagger)^k |y>` with the spill-over guard applied.
pub(crate) fn raise(y: &StateVector, k: usize) -> Result<Vec<C64>> {
    let dim = y.dim();
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "k".into(),
            reason: "must be at least 1".into(),
        });
    }
    if k >= dim {
        return Err(Error::TruncationLeakage {
            what: format!("(a^dagger)^{k} on dimension {dim}"),
            weight: 1.0,
            min_dim: k + 1,
        });
    }
    let spill = y.amplitudes()[dim - k..]
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    if spill >= TAIL_TOLERANCE {
        // The amplitudes beyond the cutoff are unknown, so only a lower bound is reported.
        return Err(Error::TruncationLeakage {
            what: format!("(a^dagger)^{k} pushes amplitude past the cutoff"),
            weight: spill,
            min_dim: dim + k,
        });
    }
    let create = creation(dim)?;
    let mut v = y.amplitudes().to_vec();
    for _ in 0..k {
        v = create.apply_amplitudes(&v)?;
    }
    Ok(v)
}
