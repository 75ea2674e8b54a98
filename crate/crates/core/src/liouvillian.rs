//! The master equation
//!
//! ```text
//! d rho/dt = -i[H, rho] + Gamma (nbar+1) L(a) rho + Gamma nbar L(a^dagger) rho + gamma L(A) rho
//! ```
//!
//! with the dissipator convention `L(x) rho = 2 x rho x^dagger - x^dagger x rho - rho x^dagger x`
//! (factor 2, no one-half). Every rate in this crate is interpreted under that
//! convention: a Fock state `|1>` under `L(a)` with rate `Gamma` decays as
//! `exp(-2 Gamma t)`.
//!
//! The coherent drive is `H = i Omega (a^dagger - a)`, so that the driven
//! steady state of pure loss has `<a> = +Omega/Gamma`.
//!
//! Density matrices are vectorized column-stacked: `vec(rho)[i + j*dim] = rho[i][j]`.

use faer::{Accum, Mat, MatMut, MatRef, Par};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::{self, DensityMatrix, FockOperator};

/// Default largest `dim` for which the superoperator is materialized.
pub const DEFAULT_SUPEROPERATOR_CAP: usize = 64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// A linear map on column-major `dim x dim` matrices.
pub trait Generator: Sync {
    fn dim(&self) -> usize;

    /// Writes the generator applied to `rho` into `out` (both column-major).
    fn apply(&self, rho: &[C64], out: &mut [C64]);
}

#[derive(Clone, Debug, PartialEq)]
pub struct LindbladChannel {
    rate: f64,
    op: FockOperator,
}

impl LindbladChannel {
    pub fn new(rate: f64, op: FockOperator) -> Result<Self> {
        check_rate("rate", rate)?;
        Ok(Self { rate, op })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn op(&self) -> &FockOperator {
        &self.op
    }
}

/// Linear loss, thermal pumping and drive parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rates {
    /// Linear loss rate `Gamma`.
    pub gamma_linear: f64,
    /// Engineered loss rate `gamma`.
    pub gamma_nonlinear: f64,
    /// Thermal photon number `nbar`.
    pub nbar: f64,
    /// Coherent drive amplitude `Omega`.
    pub omega: f64,
}

impl Rates {
    pub fn validate(&self) -> Result<()> {
        check_rate("gamma_linear", self.gamma_linear)?;
        check_rate("gamma_nonlinear", self.gamma_nonlinear)?;
        check_rate("nbar", self.nbar)?;
        if !self.omega.is_finite() {
            return Err(Error::InvalidParameter {
                name: "omega".into(),
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }
}

fn check_rate(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: name.into(),
            reason: format!("must be finite and nonnegative, got {value}"),
        })
    }
}

/// Single-mode master equation with the three canonical channels
/// `(Gamma (nbar+1), a)`, `(Gamma nbar, a^dagger)` and `(gamma, A)`.
#[derive(Clone, Debug)]
pub struct MasterEquation {
    rates: Rates,
    hamiltonian: FockOperator,
    engineered: FockOperator,
    channels: Vec<LindbladChannel>,
    compiled: Lindbladian,
}

impl MasterEquation {
    pub fn new(rates: Rates, engineered: FockOperator) -> Result<Self> {
        rates.validate()?;
        let dim = engineered.dim();
        let a = fock::annihilation(dim)?;
        let ad = a.adjoint();
        let hamiltonian = FockOperator::from_fn(dim, |i, j| {
            // i Omega (a^dagger - a)
            let v = ad.get(i, j) - a.get(i, j);
            C64::new(0.0, rates.omega) * v
        })?;
        let channels = vec![
            LindbladChannel::new(rates.gamma_linear * (rates.nbar + 1.0), a)?,
            LindbladChannel::new(rates.gamma_linear * rates.nbar, ad)?,
            LindbladChannel::new(rates.gamma_nonlinear, engineered.clone())?,
        ];
        let compiled = Lindbladian::new(&hamiltonian, &channels)?;
        Ok(Self {
            rates,
            hamiltonian,
            engineered,
            channels,
            compiled,
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn rates(&self) -> Rates {
        self.rates
    }

    pub fn gamma_linear(&self) -> f64 {
        self.rates.gamma_linear
    }

    pub fn gamma_nonlinear(&self) -> f64 {
        self.rates.gamma_nonlinear
    }

    pub fn nbar(&self) -> f64 {
        self.rates.nbar
    }

    pub fn omega(&self) -> f64 {
        self.rates.omega
    }

    /// `epsilon = Gamma / gamma`; `None` without engineered loss.
    pub fn epsilon(&self) -> Option<f64> {
        (self.rates.gamma_nonlinear > 0.0).then(|| self.rates.gamma_linear / self.rates.gamma_nonlinear)
    }

    /// `alpha0 = Omega / gamma`; `None` without engineered loss.
    pub fn alpha0(&self) -> Option<f64> {
        (self.rates.gamma_nonlinear > 0.0).then(|| self.rates.omega / self.rates.gamma_nonlinear)
    }

    pub fn hamiltonian(&self) -> &FockOperator {
        &self.hamiltonian
    }

    /// The engineered Lindblad operator `A`.
    pub fn engineered(&self) -> &FockOperator {
        &self.engineered
    }

    pub fn channels(&self) -> &[LindbladChannel] {
        &self.channels
    }

    pub fn lindbladian(&self) -> &Lindbladian {
        &self.compiled
    }
}

/// `L(x) rho = 2 x rho x^dagger - x^dagger x rho - rho x^dagger x`.
pub fn dissipator(x: &FockOperator, rho: &DensityMatrix) -> Result<FockOperator> {
    fock::same_dim(x.dim(), rho.dim())?;
    let r = rho.op();
    let xd = x.adjoint();
    let xdx = &xd * x;
    let jump = &(&(x * r) * &xd).scale(C64::new(2.0, 0.0)) - &(&xdx * r);
    Ok(&jump - &(r * &xdx))
}

/// Right-hand side of the master equation for `rho`.
pub fn rhs(me: &MasterEquation, rho: &DensityMatrix) -> Result<FockOperator> {
    fock::same_dim(me.dim(), rho.dim())?;
    Ok(apply_to_operator(me.lindbladian(), rho.op()))
}

/// Applies any generator to an operator.
pub fn apply_to_operator(gen: &dyn Generator, op: &FockOperator) -> FockOperator {
    let d = gen.dim();
    let input = to_column_major(op.as_mat());
    let mut out = vec![ZERO; d * d];
    gen.apply(&input, &mut out);
    from_column_major(&out, d)
}

pub(crate) fn to_column_major(mat: MatRef<'_, C64>) -> Vec<C64> {
    let d = mat.nrows();
    let mut v = Vec::with_capacity(d * mat.ncols());
    for j in 0..mat.ncols() {
        for i in 0..d {
            v.push(mat[(i, j)]);
        }
    }
    v
}

pub(crate) fn from_column_major(data: &[C64], dim: usize) -> FockOperator {
    FockOperator::from_mat(Mat::from_fn(dim, dim, |i, j| data[i + j * dim]))
        .expect("square buffer of valid dimension")
}

/// Superoperator matrix of size `dim^2 x dim^2` in column-stacking order.
pub fn superoperator_matrix(me: &MasterEquation) -> Result<Mat<C64>> {
    superoperator_matrix_capped(me, DEFAULT_SUPEROPERATOR_CAP)
}

pub fn superoperator_matrix_capped(me: &MasterEquation, cap: usize) -> Result<Mat<C64>> {
    materialize(me.lindbladian(), cap)
}

/// Materializes a generator column by column. Cost is `dim^2` applications.
pub fn materialize(gen: &dyn Generator, cap: usize) -> Result<Mat<C64>> {
    let d = gen.dim();
    if d > cap {
        return Err(Error::DimensionCap { dim: d, cap });
    }
    let n = d * d;
    let mut out = Mat::<C64>::zeros(n, n);
    let mut basis = vec![ZERO; n];
    let mut col = vec![ZERO; n];
    for k in 0..n {
        basis[k] = C64::new(1.0, 0.0);
        gen.apply(&basis, &mut col);
        basis[k] = ZERO;
        for (i, v) in col.iter().enumerate() {
            if *v != ZERO {
                out[(i, k)] = *v;
            }
        }
    }
    Ok(out)
}

/// An operator stored either as a few nonzero diagonals or densely.
#[derive(Clone, Debug)]
pub(crate) enum Structured {
    /// `(offset, values)` with `M[i][i + offset] = values[i - max(0, -offset)]`.
    Banded(Vec<(isize, Vec<C64>)>),
    Dense(Mat<C64>),
}

const MAX_BANDS: usize = 3;

impl Structured {
    pub(crate) fn from_mat(mat: MatRef<'_, C64>) -> Self {
        let d = mat.nrows() as isize;
        let mut bands = Vec::new();
        for offset in -(d - 1)..d {
            let lo = 0.max(-offset);
            let hi = d.min(d - offset);
            let values: Vec<C64> = (lo..hi)
                .map(|i| mat[(i as usize, (i + offset) as usize)])
                .collect();
            if values.iter().any(|v| *v != ZERO) {
                if bands.len() == MAX_BANDS {
                    return Structured::Dense(mat.to_owned());
                }
                bands.push((offset, values));
            }
        }
        Structured::Banded(bands)
    }

    /// `out (+)= coeff * M * rho`.
    fn left(&self, rho: &[C64], out: &mut [C64], d: usize, coeff: C64, accum: bool) {
        match self {
            Structured::Dense(m) => {
                let rho = MatRef::from_column_major_slice(rho, d, d);
                let out = MatMut::from_column_major_slice_mut(out, d, d);
                let acc = if accum { Accum::Add } else { Accum::Replace };
                faer::linalg::matmul::matmul(out, acc, m.as_ref(), rho, coeff, Par::Seq);
            }
            Structured::Banded(bands) => {
                if !accum {
                    out.fill(ZERO);
                }
                for (offset, values) in bands {
                    let lo = 0.max(-offset) as usize;
                    for j in 0..d {
                        let col = j * d;
                        for (t, v) in values.iter().enumerate() {
                            let i = t + lo;
                            let k = (i as isize + offset) as usize;
                            out[col + i] += coeff * v * rho[col + k];
                        }
                    }
                }
            }
        }
    }

    /// `out += coeff * rho * M^dagger`.
    fn right_adjoint(&self, rho: &[C64], out: &mut [C64], d: usize, coeff: C64) {
        match self {
            Structured::Dense(m) => {
                let rho = MatRef::from_column_major_slice(rho, d, d);
                let out = MatMut::from_column_major_slice_mut(out, d, d);
                faer::linalg::matmul::matmul(out, Accum::Add, rho, m.adjoint(), coeff, Par::Seq);
            }
            Structured::Banded(bands) => {
                // (rho M^dagger)[i][j] = sum_offset rho[i][j + offset] conj(M[j][j + offset])
                for (offset, values) in bands {
                    let lo = 0.max(-offset) as usize;
                    for (t, v) in values.iter().enumerate() {
                        let j = t + lo;
                        let k = (j as isize + offset) as usize;
                        let w = coeff * v.conj();
                        let src = &rho[k * d..(k + 1) * d];
                        let dst = &mut out[j * d..(j + 1) * d];
                        for (o, s) in dst.iter_mut().zip(src) {
                            *o += w * s;
                        }
                    }
                }
            }
        }
    }

    /// `out += coeff * M rho M^dagger`, using `scratch` for dense operators.
    fn sandwich(&self, rho: &[C64], out: &mut [C64], scratch: &mut [C64], d: usize, coeff: C64) {
        match self {
            Structured::Dense(_) => {
                self.left(rho, scratch, d, C64::new(1.0, 0.0), false);
                self.right_adjoint(scratch, out, d, coeff);
            }
            Structured::Banded(bands) => {
                for (ol, vl) in bands {
                    let lo_l = 0.max(-ol) as usize;
                    for (or, vr) in bands {
                        let lo_r = 0.max(-or) as usize;
                        for (tj, wr) in vr.iter().enumerate() {
                            let j = tj + lo_r;
                            let l = (j as isize + or) as usize;
                            let w = coeff * wr.conj();
                            let src = &rho[l * d..(l + 1) * d];
                            let dst = &mut out[j * d..(j + 1) * d];
                            for (ti, v) in vl.iter().enumerate() {
                                let i = ti + lo_l;
                                let k = (i as isize + ol) as usize;
                                dst[i] += w * v * src[k];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Lindblad generator compiled to `-i(H_eff rho - rho H_eff^dagger) + sum 2 r x rho x^dagger`
/// with `H_eff = H - i sum r x^dagger x`.
#[derive(Clone, Debug)]
pub struct Lindbladian {
    dim: usize,
    h_eff: Structured,
    jumps: Vec<(f64, Structured)>,
}

impl Lindbladian {
    pub fn new(hamiltonian: &FockOperator, channels: &[LindbladChannel]) -> Result<Self> {
        let dim = hamiltonian.dim();
        let mut h_eff = hamiltonian.as_mat().to_owned();
        let mut jumps = Vec::new();
        for ch in channels {
            fock::same_dim(dim, ch.op.dim())?;
            if ch.rate == 0.0 {
                continue;
            }
            let x = ch.op.as_mat();
            let xdx = x.adjoint() * x;
            h_eff -= &xdx * faer::Scale(C64::new(0.0, ch.rate));
            jumps.push((ch.rate, Structured::from_mat(x)));
        }
        Ok(Self {
            dim,
            h_eff: Structured::from_mat(h_eff.as_ref()),
            jumps,
        })
    }

    pub fn is_banded(&self) -> bool {
        matches!(self.h_eff, Structured::Banded(_))
            && self.jumps.iter().all(|(_, s)| matches!(s, Structured::Banded(_)))
    }
}

impl Generator for Lindbladian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        let minus_i = C64::new(0.0, -1.0);
        self.h_eff.left(rho, out, d, minus_i, false);
        self.h_eff.right_adjoint(rho, out, d, C64::new(0.0, 1.0));
        let needs_scratch = self.jumps.iter().any(|(_, s)| matches!(s, Structured::Dense(_)));
        let mut scratch = if needs_scratch { vec![ZERO; d * d] } else { Vec::new() };
        for (rate, x) in &self.jumps {
            x.sandwich(rho, out, &mut scratch, d, C64::new(2.0 * rate, 0.0));
        }
    }
}
