//! Engineered Lindblad operators and their analytic diagnostics.
//!
//! Two families are provided:
//!
//! * the projector gadget `A = |phi><y| a^k`, which moves population from the
//!   source `|y>` to the target `|phi>`;
//! * nonlinear coherent loss `A = a f(a^dagger a)` for a real function `f`
//!   on photon numbers.

use std::fmt;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::{self, DensityMatrix, FockOperator, StateVector};
use crate::liouvillian::MasterEquation;

const PARALLEL_TOL: f64 = 1e-12;

/// Real function `f` on photon numbers, used as `f(a^dagger a)`.
#[derive(Clone, Debug, PartialEq)]
pub enum NonlinearFunction {
    /// `sum_i coeffs[i] * (x - shift)^i`.
    Polynomial { shift: f64, coeffs: Vec<f64> },
    /// `x^k`.
    Power { k: u32 },
    /// `values[n]` at integer `n`; undefined past the table.
    Tabulated { values: Vec<f64> },
}

impl NonlinearFunction {
    /// `(x - shift)^power`.
    pub fn shifted_power(shift: f64, power: usize) -> Self {
        let mut coeffs = vec![0.0; power + 1];
        coeffs[power] = 1.0;
        NonlinearFunction::Polynomial { shift, coeffs }
    }

    pub fn constant(value: f64) -> Self {
        NonlinearFunction::Polynomial {
            shift: 0.0,
            coeffs: vec![value],
        }
    }

    /// Parses a preset name: `x-1`, `(x-1)^2`, `(x-1)^3`, `x^k`, or a constant.
    pub fn preset(name: &str) -> Result<Self> {
        let compact: String = name.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::InvalidParameter {
            name: "f".into(),
            reason: format!("unknown preset `{name}`"),
        };
        match compact.as_str() {
            "x-1" | "(x-1)" | "(x-1)^1" => return Ok(Self::shifted_power(1.0, 1)),
            "(x-1)^2" => return Ok(Self::shifted_power(1.0, 2)),
            "(x-1)^3" => return Ok(Self::shifted_power(1.0, 3)),
            "x" => return Ok(NonlinearFunction::Power { k: 1 }),
            _ => {}
        }
        if let Some(k) = compact.strip_prefix("x^") {
            let k: u32 = k.parse().map_err(|_| bad())?;
            return Ok(NonlinearFunction::Power { k });
        }
        if let Ok(c) = compact.parse::<f64>() {
            if c.is_finite() {
                return Ok(Self::constant(c));
            }
        }
        Err(bad())
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            NonlinearFunction::Polynomial { shift, coeffs } => {
                let u = x - shift;
                coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
            }
            NonlinearFunction::Power { k } => x.powi(*k as i32),
            NonlinearFunction::Tabulated { values } => {
                let n = x.round();
                if n < 0.0 || (n - x).abs() > 1e-9 {
                    return f64::NAN;
                }
                values.get(n as usize).copied().unwrap_or(f64::NAN)
            }
        }
    }

    /// Exact derivative for polynomial forms; central difference
    /// `(f(n+1) - f(n-1)) / 2` for tabulated forms (one-sided at the ends).
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            NonlinearFunction::Polynomial { shift, coeffs } => {
                let u = x - shift;
                coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .fold(0.0, |acc, (i, c)| acc * u + i as f64 * c)
            }
            NonlinearFunction::Power { k } => {
                if *k == 0 {
                    0.0
                } else {
                    *k as f64 * x.powi(*k as i32 - 1)
                }
            }
            NonlinearFunction::Tabulated { values } => {
                let n = x.round();
                if n < 0.0 || n as usize >= values.len() || values.len() < 2 {
                    return f64::NAN;
                }
                let n = n as usize;
                if n == 0 {
                    values[1] - values[0]
                } else if n + 1 == values.len() {
                    values[n] - values[n - 1]
                } else {
                    0.5 * (values[n + 1] - values[n - 1])
                }
            }
        }
    }

    /// Values `f(0), ..., f(dim - 1)`.
    pub fn table(&self, dim: usize) -> Vec<f64> {
        (0..dim).map(|n| self.value(n as f64)).collect()
    }
}

impl fmt::Display for NonlinearFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NonlinearFunction::Polynomial { shift, coeffs } => {
                let nonzero: Vec<usize> = (0..coeffs.len()).filter(|&i| coeffs[i] != 0.0).collect();
                if let [single] = nonzero.as_slice() {
                    if coeffs[*single] == 1.0 && *single > 0 {
                        let base = if *shift == 0.0 {
                            "x".to_string()
                        } else {
                            format!("(x-{shift})")
                        };
                        return if *single == 1 {
                            write!(f, "{}", base.trim_start_matches('(').trim_end_matches(')'))
                        } else {
                            write!(f, "{base}^{single}")
                        };
                    }
                }
                write!(f, "poly(shift={shift}, coeffs={coeffs:?})")
            }
            NonlinearFunction::Power { k } => write!(f, "x^{k}"),
            NonlinearFunction::Tabulated { values } => write!(f, "table[{}]", values.len()),
        }
    }
}

/// `A = |phi><y| a^k` together with its derived subspace quantities.
#[derive(Clone, Debug)]
pub struct ProjectorGadget {
    target: StateVector,
    source: StateVector,
    k: usize,
    psi: StateVector,
    norm_factor: f64,
    overlap: C64,
    complement: StateVector,
    projector: FockOperator,
}

impl ProjectorGadget {
    pub fn new(target: StateVector, source: StateVector, k: usize) -> Result<Self> {
        fock::same_dim(target.dim(), source.dim())?;
        let raised = fock::raise(&source, k)?;
        let norm_factor: f64 = raised.iter().map(|c| c.norm_sqr()).sum();
        if norm_factor <= 0.0 {
            return Err(Error::InvalidState("(a^dagger)^k |y> vanishes".into()));
        }
        let psi = StateVector::from_amplitudes(raised)?;
        let overlap = target.inner(&psi)?;
        let parallel = 1.0 - overlap.norm();
        if parallel <= PARALLEL_TOL {
            return Err(Error::ParallelTarget {
                overlap: overlap.norm(),
            });
        }
        // |0> = (|phi> - <Psi|phi> |Psi>) / sqrt(1 - |<phi|Psi>|^2)
        let psi_phi = overlap.conj();
        let scale = (1.0 - overlap.norm_sqr()).sqrt();
        let raw: Vec<C64> = target
            .amplitudes()
            .iter()
            .zip(psi.amplitudes())
            .map(|(p, s)| (p - psi_phi * s) / scale)
            .collect();
        let complement = StateVector::from_amplitudes(raw)?;
        let projector = &psi.projector() + &complement.projector();
        Ok(Self {
            target,
            source,
            k,
            psi,
            norm_factor,
            overlap,
            complement,
            projector,
        })
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn target(&self) -> &StateVector {
        &self.target
    }

    pub fn source(&self) -> &StateVector {
        &self.source
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `|Psi> = N^{-1/2} (a^dagger)^k |y>`.
    pub fn psi(&self) -> &StateVector {
        &self.psi
    }

    /// `N = <y| a^k (a^dagger)^k |y>`.
    pub fn norm_factor(&self) -> f64 {
        self.norm_factor
    }

    /// `<phi|Psi>`.
    pub fn overlap(&self) -> C64 {
        self.overlap
    }

    /// Orthogonal complement of `|Psi>` inside `span{|phi>, |Psi>}`.
    pub fn complement(&self) -> &StateVector {
        &self.complement
    }

    pub fn projector(&self) -> &FockOperator {
        &self.projector
    }

    /// The construction is valid for `k = 1`, but the loss-suppression argument
    /// assumes `k > 1`.
    pub fn outside_stated_regime(&self) -> bool {
        self.k == 1
    }
}

/// `|phi><y| a^k` as a dense matrix.
pub fn projector_lindblad(g: &ProjectorGadget, dim: usize) -> Result<FockOperator> {
    fock::same_dim(g.dim(), dim)?;
    // <y| a^k is the bra of (a^dagger)^k |y> = sqrt(N) |Psi>.
    let scale = g.norm_factor.sqrt();
    let phi = g.target.amplitudes();
    let w = g.psi.amplitudes();
    FockOperator::from_fn(dim, |i, j| phi[i] * w[j].conj() * scale)
}

/// `a f(a^dagger a)`.
pub fn ncl_lindblad(f: &NonlinearFunction, dim: usize) -> Result<FockOperator> {
    let a = fock::annihilation(dim)?;
    let diag = fock::diagonal_function_operator(f, dim)?;
    a.try_matmul(&diag)
}

/// `min{1, 2(1 - |<phi|Psi>|^2)} N gamma`.
pub fn gamma_eff(g: &ProjectorGadget, gamma: f64) -> f64 {
    let factor = (2.0 * (1.0 - g.overlap.norm_sqr())).min(1.0);
    factor * g.norm_factor * gamma
}

/// Closed-form long-time target population `(1 - |<phi|Psi>|^2) Tr{P rho(0)}`.
pub fn steady_fidelity_prediction(g: &ProjectorGadget, rho0: &DensityMatrix) -> Result<f64> {
    let p_rho = g.projector.try_matmul(rho0.op())?;
    let weight = p_rho.trace().re;
    Ok((1.0 - g.overlap.norm_sqr()) * weight)
}

/// Ratio of linear to engineered jump rates in the state `psi`:
/// `Gamma (nbar + 1) <a^dagger a> / (gamma <A^dagger A>)`.
pub fn jump_rate_ratio(me: &MasterEquation, psi: &StateVector) -> Result<f64> {
    fock::same_dim(me.dim(), psi.dim())?;
    let engineered = me.engineered().apply(psi)?;
    let jump = me.gamma_nonlinear() * engineered.iter().map(|c| c.norm_sqr()).sum::<f64>();
    if !(jump > 1e-14) {
        return Err(Error::UndefinedRatio);
    }
    let mean_n: f64 = psi
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(n, c)| n as f64 * c.norm_sqr())
        .sum();
    Ok(me.gamma_linear() * (me.nbar() + 1.0) * mean_n / jump)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, fock_state};
    use crate::liouvillian::Rates;
    use approx::assert_abs_diff_eq;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn presets_parse() {
        let f = NonlinearFunction::preset("x-1").unwrap();
        assert_eq!(f.value(3.0), 2.0);
        assert_eq!(f.derivative(3.0), 1.0);
        let g = NonlinearFunction::preset("(x-1)^3").unwrap();
        assert_eq!(g.value(3.0), 8.0);
        assert_eq!(g.derivative(3.0), 12.0);
        let h = NonlinearFunction::preset("x^2").unwrap();
        assert_eq!(h, NonlinearFunction::Power { k: 2 });
        assert_eq!(h.derivative(3.0), 6.0);
        assert_eq!(NonlinearFunction::preset("x^0").unwrap().value(7.0), 1.0);
        assert!(NonlinearFunction::preset("sin(x)").is_err());
        assert_eq!(f.to_string(), "x-1");
        assert_eq!(g.to_string(), "(x-1)^3");
    }

    #[test]
    fn tabulated_derivative_is_central_difference() {
        let f = NonlinearFunction::Tabulated {
            values: vec![0.0, 1.0, 4.0, 9.0],
        };
        assert_eq!(f.derivative(1.0), 2.0);
        assert_eq!(f.derivative(2.0), 4.0);
        assert_eq!(f.derivative(0.0), 1.0);
        assert!(f.value(4.0).is_nan());
    }

    #[test]
    fn projector_single_element() {
        let dim = 6;
        let g = ProjectorGadget::new(fock_state(2, dim).unwrap(), fock_state(0, dim).unwrap(), 1)
            .unwrap();
        assert!(g.outside_stated_regime());
        let a_op = projector_lindblad(&g, dim).unwrap();
        let out = a_op.apply(&fock_state(1, dim).unwrap()).unwrap();
        for (n, amp) in out.iter().enumerate() {
            let want = if n == 2 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(amp.re, want, epsilon = 1e-14);
            assert_abs_diff_eq!(amp.im, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn projector_kernel_and_rank() {
        let dim = 40;
        let y = coherent_state(c(2.0), dim).unwrap();
        let g = ProjectorGadget::new(fock_state(2, dim).unwrap(), y, 2).unwrap();
        assert_abs_diff_eq!(g.norm_factor(), 34.0, epsilon = 1e-8);
        let a_op = projector_lindblad(&g, dim).unwrap();
        // Orthogonal to (a^dagger)^2|y>: Gram-Schmidt |5> against Psi.
        let five = fock_state(5, dim).unwrap();
        let ov = g.psi().inner(&five).unwrap();
        let raw: Vec<C64> = five
            .amplitudes()
            .iter()
            .zip(g.psi().amplitudes())
            .map(|(x, p)| x - ov * p)
            .collect();
        let orth = StateVector::from_amplitudes(raw).unwrap();
        let out = a_op.apply(&orth).unwrap();
        assert!(out.iter().all(|x| x.norm() < 1e-12));
        let sv = a_op.singular_values().unwrap();
        assert!(sv[0] > 1.0);
        assert!(sv[1] < 1e-10);
    }

    #[test]
    fn figure_one_operators_build() {
        for alpha in [2.0, 3.0, 4.0, 5.0] {
            let dim = 90;
            let y = coherent_state(c(alpha), dim).unwrap();
            let g = ProjectorGadget::new(fock_state(2, dim).unwrap(), y, 2).unwrap();
            let closed = alpha.powi(4) + 4.0 * alpha * alpha + 2.0;
            assert_abs_diff_eq!(g.norm_factor(), closed, epsilon = 1e-7 * closed);
            projector_lindblad(&g, dim).unwrap();
        }
    }

    #[test]
    fn projector_invariants() {
        let dim = 30;
        let y = coherent_state(c(1.3), dim).unwrap();
        let phi = StateVector::from_amplitudes(
            (0..dim).map(|n| if n < 3 { c(1.0) } else { c(0.0) }).collect(),
        )
        .unwrap();
        let g = ProjectorGadget::new(phi.clone(), y, 2).unwrap();
        let p = g.projector();
        assert!(p.hermiticity_error() < 1e-10);
        assert!((&(p * p) - p).frobenius_norm() < 1e-10);
        assert!(g.complement().inner(g.psi()).unwrap().norm() < 1e-10);
        let fixed = p.apply(&phi).unwrap();
        let err: f64 = fixed
            .iter()
            .zip(phi.amplitudes())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10);
        let sv = p.singular_values().unwrap();
        assert!(sv[2] < 1e-10);
    }

    #[test]
    fn parallel_target_rejected() {
        let dim = 6;
        let g = ProjectorGadget::new(fock_state(1, dim).unwrap(), fock_state(0, dim).unwrap(), 1);
        assert!(matches!(g, Err(Error::ParallelTarget { .. })));
    }

    #[test]
    fn ncl_action() {
        let f = NonlinearFunction::preset("x-1").unwrap();
        let a_op = ncl_lindblad(&f, 5).unwrap();
        let one = a_op.apply(&fock_state(1, 5).unwrap()).unwrap();
        assert!(one.iter().all(|x| x.norm() == 0.0));
        let two = a_op.apply(&fock_state(2, 5).unwrap()).unwrap();
        assert_abs_diff_eq!(two[1].re, 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn gamma_eff_cases() {
        let dim = 8;
        let g = ProjectorGadget::new(fock_state(0, dim).unwrap(), fock_state(0, dim).unwrap(), 2)
            .unwrap();
        assert_eq!(g.overlap(), c(0.0));
        assert_abs_diff_eq!(gamma_eff(&g, 3.0), 3.0 * g.norm_factor());
    }

    #[test]
    fn gamma_eff_high_overlap() {
        // phi chosen so that |<phi|Psi>|^2 = 0.9 with Psi = |2>.
        let dim = 8;
        let amps: Vec<C64> = (0..dim)
            .map(|n| match n {
                2 => c(0.9f64.sqrt()),
                5 => c(0.1f64.sqrt()),
                _ => c(0.0),
            })
            .collect();
        let phi = StateVector::from_amplitudes(amps).unwrap();
        let g = ProjectorGadget::new(phi, fock_state(0, dim).unwrap(), 2).unwrap();
        assert_abs_diff_eq!(g.overlap().norm_sqr(), 0.9, epsilon = 1e-14);
        assert_abs_diff_eq!(gamma_eff(&g, 1.0), 0.2 * 2.0, epsilon = 1e-13);
    }

    #[test]
    fn gamma_eff_brute_force() {
        let dim = 40;
        let y = coherent_state(c(2.0), dim).unwrap();
        let g = ProjectorGadget::new(fock_state(2, dim).unwrap(), y.clone(), 2).unwrap();
        // Independent inner product: <2|Psi> = sqrt(2) <0|y> / sqrt(N).
        let expected = 2f64.sqrt() * y.amplitudes()[0].re / 34f64.sqrt();
        assert_abs_diff_eq!(g.overlap().re, expected, epsilon = 1e-10);
        let factor = (2.0 * (1.0 - expected * expected)).min(1.0);
        assert_abs_diff_eq!(gamma_eff(&g, 0.5), factor * 34.0 * 0.5, epsilon = 1e-7);
    }

    #[test]
    fn fidelity_prediction_cases() {
        let dim = 8;
        let g = ProjectorGadget::new(fock_state(0, dim).unwrap(), fock_state(0, dim).unwrap(), 2)
            .unwrap();
        // Psi = |2>, phi = |0>: overlap zero. rho0 = |2><2| lies in P.
        let rho = fock_state(2, dim).unwrap().to_density();
        assert_abs_diff_eq!(steady_fidelity_prediction(&g, &rho).unwrap(), 1.0, epsilon = 1e-14);
        let outside = fock_state(5, dim).unwrap().to_density();
        assert_abs_diff_eq!(steady_fidelity_prediction(&g, &outside).unwrap(), 0.0);
    }

    #[test]
    fn jump_ratio_cases() {
        let dim = 12;
        let f = NonlinearFunction::preset("x-1").unwrap();
        let op = ncl_lindblad(&f, dim).unwrap();
        let rates = Rates {
            gamma_linear: 0.0,
            gamma_nonlinear: 1.0,
            nbar: 0.0,
            omega: 0.0,
        };
        let me = MasterEquation::new(rates, op.clone()).unwrap();
        assert_eq!(jump_rate_ratio(&me, &fock_state(3, dim).unwrap()).unwrap(), 0.0);
        let lossy = MasterEquation::new(Rates { gamma_linear: 2.0, ..rates }, op).unwrap();
        assert_eq!(
            jump_rate_ratio(&lossy, &fock_state(1, dim).unwrap()),
            Err(Error::UndefinedRatio)
        );
        // |3>: <N> = 3, <A^dagger A> = 3 f(3)^2 = 12.
        let r = jump_rate_ratio(&lossy, &fock_state(3, dim).unwrap()).unwrap();
        assert_abs_diff_eq!(r, 2.0 * 3.0 / 12.0, epsilon = 1e-14);
    }

    #[test]
    fn jump_ratio_large_alpha_matches_norm_form() {
        let dim = 90;
        let alpha = 5.0;
        let y = coherent_state(c(alpha), dim).unwrap();
        let g = ProjectorGadget::new(fock_state(2, dim).unwrap(), y, 2).unwrap();
        let op = projector_lindblad(&g, dim).unwrap();
        let rates = Rates {
            gamma_linear: 1.0,
            gamma_nonlinear: 0.2,
            nbar: 0.0,
            omega: 0.0,
        };
        let me = MasterEquation::new(rates, op).unwrap();
        let r = jump_rate_ratio(&me, g.psi()).unwrap();
        // <Psi|A^dagger A|Psi> = N exactly; <Psi|a^dagger a|Psi> = |alpha|^2 + O(1).
        let simple = rates.gamma_linear / (rates.gamma_nonlinear * g.norm_factor());
        let mean_n: f64 = g.psi().populations().iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        assert_abs_diff_eq!(r, simple * mean_n, epsilon = 1e-9);
        assert!((r / simple - alpha * alpha).abs() / (alpha * alpha) < 0.2);
    }
}
