//! Steady states: exact null-space solving, the diagonal recurrences and the
//! peak estimates for nonlinear coherent loss.

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::evolve::{self, SteadyOptions};
use crate::fock::{self, DensityMatrix, FockOperator};
use crate::gadgets::{ncl_lindblad, NonlinearFunction};
use crate::liouvillian::{self, Generator, MasterEquation, DEFAULT_SUPEROPERATOR_CAP};

/// Largest admissible weight in the last level of a recurrence distribution.
pub const RECURRENCE_TAIL: f64 = 1e-12;
/// Largest admissible `||rhs||_F` of a null-space steady state.
pub const NULLSPACE_RESIDUAL: f64 = 1e-10;
/// Singular-value threshold below which the steady state is not unique; raised to the
/// roundoff floor `n eps max|K_ij|` of the bordered matrix when that is larger.
pub const UNIQUENESS_THRESHOLD: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Photon-number distribution `p_0, ..., p_{dim-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalDistribution {
    probs: Vec<f64>,
}

impl DiagonalDistribution {
    /// Accepts nonnegative weights summing to 1 within `1e-12`.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidState("probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) || weights.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidState("weights must be nonnegative with positive sum".into()));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| (n as f64 - m).powi(2) * p)
            .sum()
    }

    /// Mandel `Q = variance / mean - 1`.
    pub fn mandel_q(&self) -> Result<f64> {
        let m = self.mean();
        if m <= 0.0 {
            return Err(Error::UndefinedQ);
        }
        Ok(self.variance() / m - 1.0)
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_populations(&self.probs).expect("validated distribution")
    }
}

/// Location and width of the steady distribution peak.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeakEstimate {
    pub n0: usize,
    pub variance: f64,
    pub q_estimate: f64,
}

/// Null-space steady state together with its quality measures.
#[derive(Clone, Debug)]
pub struct NullspaceSolution {
    pub state: DensityMatrix,
    /// `||L rho||_F` of the returned state.
    pub residual: f64,
    /// Estimated smallest singular value of the bordered generator.
    pub sigma_min: f64,
}

/// Steady state from the null space of the superoperator (`dim <= 64`).
pub fn steady_state_nullspace(me: &MasterEquation) -> Result<DensityMatrix> {
    steady_state_nullspace_capped(me, DEFAULT_SUPEROPERATOR_CAP).map(|s| s.state)
}

pub fn steady_state_nullspace_capped(me: &MasterEquation, cap: usize) -> Result<NullspaceSolution> {
    nullspace_steady(me.lindbladian(), cap)
}

/// Solves `L x = 0`, `Tr x = 1` through the bordered system
/// `(L + w t^T) x = w` with `t = vec(I)` and `w = vec(I) / dim`.
/// The bordered matrix is nonsingular exactly when the null space is one-dimensional.
pub fn nullspace_steady(gen: &dyn Generator, cap: usize) -> Result<NullspaceSolution> {
    let d = gen.dim();
    let mut k = liouvillian::materialize(gen, cap)?;
    let n = d * d;
    let w = 1.0 / d as f64;
    for col in 0..d {
        let c = col + col * d;
        for row in 0..d {
            let r = row + row * d;
            k[(r, c)] += C64::new(w, 0.0);
        }
    }
    let scale = (0..n)
        .flat_map(|j| (0..n).map(move |i| (i, j)))
        .map(|(i, j)| k[(i, j)].norm())
        .fold(0.0, f64::max);
    let threshold = UNIQUENESS_THRESHOLD.max(n as f64 * f64::EPSILON * scale);
    let lu = k.partial_piv_lu();

    let sigma = smallest_singular_value(&lu, n);
    if !(sigma.is_finite() && sigma > threshold) {
        return Err(Error::NonUniqueSteadyState {
            sigma: if sigma.is_finite() { sigma } else { 0.0 },
        });
    }

    let rhs = Mat::<C64>::from_fn(n, 1, |i, _| {
        if i % (d + 1) == 0 {
            C64::new(w, 0.0)
        } else {
            ZERO
        }
    });
    let mut x = lu.solve(&rhs);
    // Two rounds of iterative refinement.
    for _ in 0..2 {
        let r = Mat::<C64>::from_fn(n, 1, |i, _| {
            let mut acc = rhs[(i, 0)];
            for j in 0..n {
                acc -= k[(i, j)] * x[(j, 0)];
            }
            acc
        });
        let dx = lu.solve(&r);
        for i in 0..n {
            x[(i, 0)] += dx[(i, 0)];
        }
    }
    if (0..n).any(|i| !(x[(i, 0)].re.is_finite() && x[(i, 0)].im.is_finite())) {
        return Err(Error::NonUniqueSteadyState { sigma: 0.0 });
    }
    let buf: Vec<C64> = (0..n).map(|i| x[(i, 0)]).collect();
    let state = DensityMatrix::from_operator_normalized(liouvillian::from_column_major(&buf, d))?;
    let residual = generator_residual(gen, &state);
    if residual > NULLSPACE_RESIDUAL {
        return Err(Error::SteadyResidual {
            residual,
            limit: NULLSPACE_RESIDUAL,
        });
    }
    Ok(NullspaceSolution {
        state,
        residual,
        sigma_min: sigma,
    })
}

/// Inverse iteration on `K^H K` using the LU factors.
fn smallest_singular_value(lu: &faer::linalg::solvers::PartialPivLu<C64>, n: usize) -> f64 {
    let mut v = Mat::<C64>::from_fn(n, 1, |i, _| {
        C64::new(1.0 + (i % 7) as f64 * 0.1, ((i % 5) as f64 - 2.0) * 0.05)
    });
    let mut estimate = f64::INFINITY;
    for _ in 0..6 {
        let norm = col_norm(&v);
        if !(norm.is_finite() && norm > 0.0) {
            return 0.0;
        }
        for i in 0..n {
            v[(i, 0)] /= norm;
        }
        let y = lu.solve(&v);
        let z = lu.solve_adjoint(&y);
        let growth = col_norm(&z);
        if !growth.is_finite() || growth == 0.0 {
            return 0.0;
        }
        estimate = 1.0 / growth.sqrt();
        v = z;
    }
    estimate
}

fn col_norm(v: &Mat<C64>) -> f64 {
    (0..v.nrows()).map(|i| v[(i, 0)].norm_sqr()).sum::<f64>().sqrt()
}

fn generator_residual(gen: &dyn Generator, rho: &DensityMatrix) -> f64 {
    liouvillian::apply_to_operator(gen, rho.op()).frobenius_norm()
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: name.into(),
            reason: format!("must be finite and nonnegative, got {v}"),
        })
    }
}

/// Normalizes log-weights and applies the tail guard.
fn from_log_weights(logs: &[f64]) -> Result<DiagonalDistribution> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let dist = DiagonalDistribution::from_weights(weights)?;
    let tail = dist.get(dist.dim() - 1);
    if tail >= RECURRENCE_TAIL {
        return Err(Error::TailGuard { tail, dim: dist.dim() });
    }
    Ok(dist)
}

/// Steady diagonal of the approximate equation:
/// `p_n = p_{n-1} alpha0^2 / (n (f(n)^2 + epsilon)^2)`, starting from `p_0`.
pub fn ncl_recurrence(
    f: &NonlinearFunction,
    alpha0: f64,
    epsilon: f64,
    dim: usize,
) -> Result<DiagonalDistribution> {
    ncl_recurrence_from(f, alpha0, epsilon, dim, 0)
}

/// As [`ncl_recurrence`], seeded at `p_start` with all lower levels empty.
/// Use a start above a zero of `f` when `epsilon = 0`.
pub fn ncl_recurrence_from(
    f: &NonlinearFunction,
    alpha0: f64,
    epsilon: f64,
    dim: usize,
    start: usize,
) -> Result<DiagonalDistribution> {
    check_nonneg("alpha0", alpha0)?;
    check_nonneg("epsilon", epsilon)?;
    if dim < 2 || start >= dim {
        return Err(Error::InvalidDimension(dim));
    }
    let ln_a2 = 2.0 * alpha0.ln();
    let mut logs = vec![f64::NEG_INFINITY; dim];
    logs[start] = 0.0;
    for n in start + 1..dim {
        let fv = f.value(n as f64);
        let denom = fv * fv + epsilon;
        if !denom.is_finite() {
            return Err(Error::Numerical(format!("f({n}) is not finite")));
        }
        if denom == 0.0 {
            return Err(Error::BlockedRecurrence { n });
        }
        logs[n] = logs[n - 1] + ln_a2 - (n as f64).ln() - 2.0 * denom.ln();
    }
    from_log_weights(&logs)
}

/// Steady diagonal without drive:
/// `p_n = p_{n-1} nbar / ((nbar + 1) + ratio f(n)^2)` with `ratio = gamma / Gamma`.
pub fn thermal_recurrence(
    f: &NonlinearFunction,
    nbar: f64,
    ratio: f64,
    dim: usize,
) -> Result<DiagonalDistribution> {
    if !(nbar.is_finite() && nbar > 0.0) {
        return Err(Error::InvalidParameter {
            name: "nbar".into(),
            reason: format!("must be positive, got {nbar}"),
        });
    }
    check_nonneg("loss_ratio", ratio)?;
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let mut logs = vec![0.0; dim];
    for n in 1..dim {
        let fv = f.value(n as f64);
        let denom = nbar + 1.0 + ratio * fv * fv;
        if !denom.is_finite() {
            return Err(Error::Numerical(format!("f({n}) is not finite")));
        }
        logs[n] = logs[n - 1] + nbar.ln() - denom.ln();
    }
    from_log_weights(&logs)
}

/// `1 + 4 n0 f'(n0) f(n0) / (f(n0)^2 + epsilon)`.
fn width_factor(f: &NonlinearFunction, n0: f64, epsilon: f64) -> f64 {
    let fv = f.value(n0);
    1.0 + 4.0 * n0 * f.derivative(n0) * fv / (fv * fv + epsilon)
}

/// Peak `n0` minimizing `|n (f(n)^2 + epsilon)^2 - alpha0^2|` over `[0, dim)`,
/// with the variance and Q predicted by the Gaussian approximation.
pub fn peak_condition(
    f: &NonlinearFunction,
    alpha0: f64,
    epsilon: f64,
    dim: usize,
) -> Result<PeakEstimate> {
    if !(alpha0.is_finite() && alpha0 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "alpha0".into(),
            reason: format!("must be positive, got {alpha0}"),
        });
    }
    check_nonneg("epsilon", epsilon)?;
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let target = alpha0 * alpha0;
    let mut best = (0usize, f64::INFINITY);
    for n in 0..dim {
        let fv = f.value(n as f64);
        let g = fv * fv + epsilon;
        let gap = (n as f64 * g * g - target).abs();
        if gap < best.1 {
            best = (n, gap);
        }
    }
    let n0 = best.0;
    if n0 == dim - 1 {
        return Err(Error::WindowTooSmall { n: n0 });
    }
    if n0 == 0 {
        return Err(Error::UndefinedQ);
    }
    let factor = width_factor(f, n0 as f64, epsilon);
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::Numerical(format!(
            "width factor {factor} at n0 = {n0} is not positive"
        )));
    }
    let variance = n0 as f64 / factor;
    Ok(PeakEstimate {
        n0,
        variance,
        q_estimate: variance / n0 as f64 - 1.0,
    })
}

/// Predicted ratio `p_{n0 + delta_n} / p_{n0}` of the Gaussian profile around the peak.
pub fn gaussian_profile(f: &NonlinearFunction, n0: usize, epsilon: f64, delta_n: i64) -> f64 {
    let n0f = n0 as f64;
    let d = delta_n.unsigned_abs() as f64;
    (-(d * (d + 1.0) / (2.0 * n0f)) * width_factor(f, n0f, epsilon)).exp()
}

/// Approximate nonlinear-loss generator in the `B = a (f(N)^2 + epsilon)` form,
/// without the double-commutator term:
///
/// ```text
/// gamma ( a rho G a^dagger + a G rho a^dagger - N G rho - rho G N )
///   + Omega ( a^dagger rho - rho a^dagger - a rho + rho a )
/// ```
///
/// with `G = f(N)^2 + epsilon`. Its stationary state satisfies `B rho = alpha0 rho`.
#[derive(Clone, Debug)]
pub struct ApproximateGenerator {
    dim: usize,
    gamma: f64,
    omega: f64,
    g: Vec<f64>,
    sqrt_n: Vec<f64>,
}

impl ApproximateGenerator {
    /// Requires `nbar = 0`, `gamma > 0` and an engineered operator equal to `a f(N)`.
    pub fn new(me: &MasterEquation, f: &NonlinearFunction) -> Result<Self> {
        let dim = me.dim();
        let bad = |reason: &str| Error::InvalidParameter {
            name: "master_equation".into(),
            reason: reason.into(),
        };
        if me.nbar() != 0.0 {
            return Err(bad("approximate equation requires nbar = 0"));
        }
        let epsilon = me.epsilon().ok_or_else(|| bad("approximate equation requires gamma > 0"))?;
        let expected = ncl_lindblad(f, dim)?;
        if expected.max_abs_diff(me.engineered()) > 1e-12 * (1.0 + expected.frobenius_norm()) {
            return Err(bad("engineered operator is not a f(N) for the given f"));
        }
        let g = f
            .table(dim)
            .into_iter()
            .map(|v| v * v + epsilon)
            .collect();
        Ok(Self {
            dim,
            gamma: me.gamma_nonlinear(),
            omega: me.omega(),
            g,
            sqrt_n: (0..=dim).map(|n| (n as f64).sqrt()).collect(),
        })
    }

    /// `B = a (f(N)^2 + epsilon)`.
    pub fn b_operator(&self) -> FockOperator {
        FockOperator::from_fn(self.dim, |i, j| {
            if j == i + 1 {
                C64::new(self.sqrt_n[j] * self.g[j], 0.0)
            } else {
                ZERO
            }
        })
        .expect("valid dimension")
    }

    pub fn alpha0(&self) -> f64 {
        self.omega / self.gamma
    }
}

impl Generator for ApproximateGenerator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        let s = &self.sqrt_n;
        let g = &self.g;
        let at = |i: usize, j: usize| -> C64 {
            if i < d && j < d {
                rho[i + j * d]
            } else {
                ZERO
            }
        };
        for j in 0..d {
            for i in 0..d {
                let r = rho[i + j * d];
                // a rho G a^dagger + a G rho a^dagger
                let jump = if i + 1 < d && j + 1 < d {
                    rho[(i + 1) + (j + 1) * d] * (s[i + 1] * s[j + 1] * (g[j + 1] + g[i + 1]))
                } else {
                    ZERO
                };
                let decay = r * (i as f64 * g[i] + j as f64 * g[j]);
                let mut drive = ZERO;
                if i >= 1 {
                    drive += rho[(i - 1) + j * d] * s[i];
                }
                if j >= 1 {
                    drive += rho[i + (j - 1) * d] * s[j];
                }
                drive -= at(i + 1, j) * s[i + 1];
                drive -= at(i, j + 1) * s[j + 1];
                out[i + j * d] = (jump - decay) * self.gamma + drive * self.omega;
            }
        }
    }
}

/// Right-hand side of the approximate equation for `rho`.
pub fn approximate_rhs(
    me: &MasterEquation,
    f: &NonlinearFunction,
    rho: &DensityMatrix,
) -> Result<FockOperator> {
    fock::same_dim(me.dim(), rho.dim())?;
    let gen = ApproximateGenerator::new(me, f)?;
    Ok(liouvillian::apply_to_operator(&gen, rho.op()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ApproximateMethod {
    /// Integrate from the vacuum until the right-hand side vanishes.
    Evolve(SteadyOptions),
    /// Null space of the materialized approximate generator.
    Nullspace { cap: usize },
}

impl Default for ApproximateMethod {
    fn default() -> Self {
        ApproximateMethod::Evolve(SteadyOptions::default())
    }
}

#[derive(Clone, Debug)]
pub struct ApproximateSteady {
    pub state: DensityMatrix,
    pub converged: bool,
    /// `||rhs||_F` of the returned state under the approximate equation.
    pub residual: f64,
    /// `||B rho - alpha0 rho||_F`.
    pub eigen_residual: f64,
}

/// Stationary state of the approximate equation.
pub fn approximate_steady_state(
    me: &MasterEquation,
    f: &NonlinearFunction,
    method: ApproximateMethod,
) -> Result<ApproximateSteady> {
    let gen = ApproximateGenerator::new(me, f)?;
    let (state, converged, residual) = match method {
        ApproximateMethod::Evolve(opts) => {
            let rho0 = fock::fock_state(0, gen.dim)?.to_density();
            let out = evolve::evolve_generator_to_steady(&gen, &rho0, &opts)?;
            (out.state, out.converged, out.residual)
        }
        ApproximateMethod::Nullspace { cap } => {
            let sol = nullspace_steady(&gen, cap)?;
            (sol.state, true, sol.residual)
        }
    };
    let b = gen.b_operator();
    let br = b.try_matmul(state.op())?;
    let eigen_residual = (&br - &state.op().scale(C64::new(gen.alpha0(), 0.0))).frobenius_norm();
    Ok(ApproximateSteady {
        state,
        converged,
        residual,
        eigen_residual,
    })
}
