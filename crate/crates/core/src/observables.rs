//! Photon statistics and state diagnostics.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::{self, DensityMatrix, StateVector};
use crate::steady::DiagonalDistribution;

/// Diagonal entries below this are clipped to zero.
pub const CLIP_TOLERANCE: f64 = 1e-10;
/// Smallest diagonal mass accepted after clipping.
pub const MIN_MASS: f64 = 0.999;

#[derive(Clone, Debug, PartialEq)]
pub struct ObservableReport {
    pub mean_n: f64,
    pub variance_n: f64,
    /// `None` for the vacuum.
    pub mandel_q: Option<f64>,
    pub purity: f64,
    pub fidelity: Option<f64>,
    pub distribution: DiagonalDistribution,
}

impl ObservableReport {
    pub fn new(rho: &DensityMatrix, target: Option<&StateVector>) -> Result<Self> {
        let distribution = photon_distribution(rho)?;
        let fidelity = target.map(|phi| fidelity_to_pure(rho, phi)).transpose()?;
        Ok(Self {
            mean_n: distribution.mean(),
            variance_n: distribution.variance(),
            mandel_q: distribution.mandel_q().ok(),
            purity: purity(rho),
            fidelity,
            distribution,
        })
    }
}

/// `Q = (<N^2> - <N>^2) / <N> - 1` from the diagonal of `rho`.
pub fn mandel_q(rho: &DensityMatrix) -> Result<f64> {
    photon_distribution(rho)?.mandel_q()
}

/// `<phi| rho |phi>`.
pub fn fidelity_to_pure(rho: &DensityMatrix, phi: &StateVector) -> Result<f64> {
    Ok(rho.op().matrix_element(phi, phi)?.re)
}

/// Diagonal of `rho`. Entries in `[-1e-10, 0)` are clipped to zero; more
/// negative entries or a mass below `0.999` mean the state is corrupted.
pub fn photon_distribution(rho: &DensityMatrix) -> Result<DiagonalDistribution> {
    let mut p = rho.populations();
    for v in p.iter_mut() {
        if *v < -CLIP_TOLERANCE {
            return Err(Error::CorruptedState { mass: *v });
        }
        *v = v.max(0.0);
    }
    let mass: f64 = p.iter().sum();
    if mass < MIN_MASS {
        return Err(Error::CorruptedState { mass });
    }
    DiagonalDistribution::from_weights(p)
}

/// `Tr rho^2`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    // Tr rho^2 = sum |rho_ij|^2 for Hermitian rho.
    fock::frobenius(rho.as_mat()).powi(2)
}

/// `exp(i theta N) rho exp(-i theta N)`.
pub fn phase_rotate(rho: &DensityMatrix, theta: f64) -> DensityMatrix {
    let op = rho.op();
    let rotated = fock::FockOperator::from_fn(op.dim(), |i, j| {
        op.get(i, j) * C64::from_polar(1.0, theta * (i as f64 - j as f64))
    })
    .expect("same dimension");
    DensityMatrix::new(rotated).expect("unitary rotation preserves validity")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, fock_state, number, Guard};
    use crate::liouvillian::tests::random_density;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn q_examples() {
        let coh = coherent_state(C64::new(2.0, 0.0), 40).unwrap().to_density();
        assert_abs_diff_eq!(mandel_q(&coh).unwrap(), 0.0, epsilon = 1e-8);
        let f5 = fock_state(5, 10).unwrap().to_density();
        assert_abs_diff_eq!(mandel_q(&f5).unwrap(), -1.0, epsilon = 1e-14);
        let th = DensityMatrix::thermal(2.0, 120, Guard::Enforce).unwrap();
        assert_abs_diff_eq!(mandel_q(&th).unwrap(), 2.0, epsilon = 1e-8);
        let vac = fock_state(0, 4).unwrap().to_density();
        assert_eq!(mandel_q(&vac).unwrap_err(), Error::UndefinedQ);
    }

    #[test]
    fn fidelity_examples() {
        let phi = fock_state(2, 6).unwrap();
        assert_abs_diff_eq!(fidelity_to_pure(&phi.to_density(), &phi).unwrap(), 1.0, epsilon = 1e-15);
        let vac = fock_state(0, 6).unwrap().to_density();
        assert_eq!(fidelity_to_pure(&vac, &phi).unwrap(), 0.0);
        let short = fock_state(2, 5).unwrap();
        assert!(fidelity_to_pure(&vac, &short).is_err());
    }

    #[test]
    fn distribution_examples() {
        let d = photon_distribution(&fock_state(2, 5).unwrap().to_density()).unwrap();
        assert_eq!(d.probs(), &[0.0, 0.0, 1.0, 0.0, 0.0]);
        let alpha = C64::new(1.5, -0.5);
        let dim = 30;
        let d = photon_distribution(&coherent_state(alpha, dim).unwrap().to_density()).unwrap();
        let mean = alpha.norm_sqr();
        for n in 0..dim {
            let want = (n as f64 * mean.ln() - mean - fock::ln_factorial(n)).exp();
            assert_abs_diff_eq!(d.get(n), want, epsilon = 1e-8);
        }
    }

    #[test]
    fn purity_examples() {
        let psi = coherent_state(C64::new(1.0, 1.0), 20).unwrap().to_density();
        assert_abs_diff_eq!(purity(&psi), 1.0, epsilon = 1e-12);
        let mixed = DensityMatrix::maximally_mixed(4).unwrap();
        assert_abs_diff_eq!(purity(&mixed), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn report_fields() {
        let th = DensityMatrix::thermal(0.5, 60, Guard::Enforce).unwrap();
        let phi = fock_state(1, 60).unwrap();
        let r = ObservableReport::new(&th, Some(&phi)).unwrap();
        assert_abs_diff_eq!(r.mean_n, 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(r.variance_n, 0.75, epsilon = 1e-10);
        assert_abs_diff_eq!(r.fidelity.unwrap(), 0.5 / 1.5 / 1.5, epsilon = 1e-12);
        let vac = ObservableReport::new(&fock_state(0, 3).unwrap().to_density(), None).unwrap();
        assert_eq!(vac.mandel_q, None);
        assert_eq!(vac.fidelity, None);
    }

    fn random_state(seed: u64, dim: usize) -> DensityMatrix {
        random_density(dim, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    proptest! {
        #[test]
        fn q_is_phase_invariant(seed in any::<u64>(), theta in -3.2f64..3.2) {
            let rho = random_state(seed, 6);
            let q = mandel_q(&rho).unwrap();
            let q2 = mandel_q(&phase_rotate(&rho, theta)).unwrap();
            prop_assert!((q - q2).abs() < 1e-10);
        }

        #[test]
        fn fidelity_in_unit_interval(seed in any::<u64>(), n in 0usize..6) {
            let rho = random_state(seed, 6);
            let f = fidelity_to_pure(&rho, &fock_state(n, 6).unwrap()).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
        }

        #[test]
        fn moments_match_operators(seed in any::<u64>()) {
            let rho = random_state(seed, 7);
            let d = photon_distribution(&rho).unwrap();
            let n = number(7).unwrap();
            let n2 = &n * &n;
            let mean = n.try_matmul(rho.op()).unwrap().trace().re;
            let second = n2.try_matmul(rho.op()).unwrap().trace().re;
            prop_assert!((d.mean() - mean).abs() < 1e-10);
            prop_assert!((d.variance() - (second - mean * mean)).abs() < 1e-10);
        }
    }
}
