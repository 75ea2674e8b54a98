//! Time propagation of density matrices.
//!
//! Integration uses the Dormand-Prince 5(4) pair with a PI step controller.
//! The local error estimate is controlled per unit step: an accepted step of
//! size `h` has `max |error| <= tol * h`. After every accepted step the state
//! is replaced by its Hermitian part; positivity is monitored at the recorded
//! times but never projected.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::{self, DensityMatrix, Guard};
use crate::gadgets::ProjectorGadget;
use crate::liouvillian::{self, Generator, MasterEquation};

/// Largest population tolerated in the top Fock level.
pub const TOP_LEVEL_LIMIT: f64 = 1e-6;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
// PI exponents for an error estimate of order h^4 (error per unit step).
const ALPHA: f64 = 0.7 / 4.0;
const BETA: f64 = 0.4 / 4.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stepper {
    /// Embedded 5(4) pair with PI step control.
    Adaptive,
    /// Fixed step without error control.
    Fixed { step: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagateOptions {
    pub tol: f64,
    pub stepper: Stepper,
    pub guard: Guard,
    /// Initial step; chosen automatically when `None`.
    pub initial_step: Option<f64>,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            stepper: Stepper::Adaptive,
            guard: Guard::Enforce,
            initial_step: None,
        }
    }
}

/// Health of the state at a recorded time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub trace_error: f64,
    /// Largest anti-Hermitian residue removed since the previous record.
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
    pub top_population: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&DensityMatrix> {
        self.states.last()
    }
}

/// `n` equally spaced points on `[start, end]`.
pub fn linear_grid(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `0` followed by `n` log-spaced points on `[first, end]`.
pub fn log_grid(first: f64, end: f64, n: usize) -> Vec<f64> {
    let mut grid = vec![0.0];
    if n == 1 {
        grid.push(end);
    } else if n > 1 {
        let (l0, l1) = (first.ln(), end.ln());
        grid.extend((0..n).map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp()));
    }
    grid
}

/// Integrates the master equation, recording the state at every grid time.
/// `rho0` is the state at `grid[0]`.
pub fn propagate(
    me: &MasterEquation,
    rho0: &DensityMatrix,
    grid: &[f64],
    opts: &PropagateOptions,
) -> Result<Trajectory> {
    propagate_generator(me.lindbladian(), rho0, grid, opts)
}

pub fn propagate_generator(
    gen: &dyn Generator,
    rho0: &DensityMatrix,
    grid: &[f64],
    opts: &PropagateOptions,
) -> Result<Trajectory> {
    fock::same_dim(gen.dim(), rho0.dim())?;
    validate_grid(grid)?;
    validate_options(opts)?;
    let mut integ = Integrator::new(gen, rho0, grid[0], opts);
    let mut traj = Trajectory {
        times: Vec::with_capacity(grid.len()),
        states: Vec::with_capacity(grid.len()),
        diagnostics: Vec::with_capacity(grid.len()),
        accepted_steps: 0,
        rejected_steps: 0,
    };
    for &t in grid {
        integ.advance_to(t, |_| false)?;
        let (state, diag) = integ.record()?;
        traj.times.push(t);
        traj.states.push(state);
        traj.diagnostics.push(diag);
    }
    traj.accepted_steps = integ.accepted;
    traj.rejected_steps = integ.rejected;
    Ok(traj)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteadyOptions {
    /// Convergence threshold on the Frobenius norm of the right-hand side.
    pub tol: f64,
    pub t_max: f64,
    /// Integration settings; the tolerance is capped at `tol / 100`.
    pub propagate: PropagateOptions,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            t_max: 1e4,
            propagate: PropagateOptions::default(),
        }
    }
}

/// Final state of a long-time integration.
#[derive(Clone, Debug)]
pub struct SteadyOutcome {
    pub state: DensityMatrix,
    pub converged: bool,
    pub time: f64,
    /// Frobenius norm of the right-hand side at the final state.
    pub residual: f64,
    pub diagnostics: StepDiagnostics,
}

/// Integrates until the right-hand side norm drops below `opts.tol` or
/// `opts.t_max` is reached. An unconverged result is returned flagged.
pub fn evolve_to_steady(
    me: &MasterEquation,
    rho0: &DensityMatrix,
    opts: &SteadyOptions,
) -> Result<SteadyOutcome> {
    evolve_generator_to_steady(me.lindbladian(), rho0, opts)
}

pub fn evolve_generator_to_steady(
    gen: &dyn Generator,
    rho0: &DensityMatrix,
    opts: &SteadyOptions,
) -> Result<SteadyOutcome> {
    fock::same_dim(gen.dim(), rho0.dim())?;
    validate_options(&opts.propagate)?;
    if !(opts.tol > 0.0 && opts.t_max > 0.0) {
        return Err(Error::InvalidParameter {
            name: "steady".into(),
            reason: "tol and t_max must be positive".into(),
        });
    }
    // Stiff modes stay excited at roughly the local error level, so the
    // integration tolerance has to sit below the convergence threshold.
    let mut prop = opts.propagate;
    prop.tol = prop.tol.min(1e-2 * opts.tol);
    let mut integ = Integrator::new(gen, rho0, 0.0, &prop);
    let tol = opts.tol;
    integ.advance_to(opts.t_max, |k| frob(k) < tol)?;
    let residual = frob(&integ.k[0]);
    let time = integ.t;
    let (state, diagnostics) = integ.record()?;
    Ok(SteadyOutcome {
        state,
        converged: residual < tol,
        time,
        residual,
        diagnostics,
    })
}

/// Exponential fit of the subspace relaxation toward `Tr{P rho(0)} |0><0|`.
#[derive(Clone, Debug)]
pub struct DecayFit {
    pub rate: f64,
    /// `(t, residual)` for every trajectory point.
    pub residuals: Vec<(f64, f64)>,
    /// Number of points inside the fit window.
    pub used: usize,
}

pub const FIT_WINDOW: (f64, f64) = (1e-8, 1e-2);

/// Residual `||P rho(t) P - Tr{P rho(0)} |0><0|||_F` at every trajectory point.
pub fn subspace_residuals(traj: &Trajectory, g: &ProjectorGadget) -> Result<Vec<(f64, f64)>> {
    let first = traj.states.first().ok_or(Error::InsufficientDecay)?;
    let p = g.projector();
    let weight = p.try_matmul(first.op())?.trace().re;
    let target = g.complement().projector().scale(C64::new(weight, 0.0));
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, rho)| {
            let sandwich = p.try_matmul(rho.op())?.try_matmul(p)?;
            Ok((t, (&sandwich - &target).frobenius_norm()))
        })
        .collect()
}

/// Least-squares slope of `log residual` over the samples inside [`FIT_WINDOW`].
pub fn decay_rate_fit(traj: &Trajectory, g: &ProjectorGadget) -> Result<DecayFit> {
    let residuals = subspace_residuals(traj, g)?;
    let pts: Vec<(f64, f64)> = residuals
        .iter()
        .filter(|(_, e)| *e >= FIT_WINDOW.0 && *e <= FIT_WINDOW.1)
        .map(|&(t, e)| (t, e.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientDecay);
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientDecay);
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    Ok(DecayFit {
        rate: -sxy / sxx,
        residuals,
        used: pts.len(),
    })
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    let bad = |reason: &str| Error::InvalidParameter {
        name: "grid".into(),
        reason: reason.into(),
    };
    if grid.is_empty() {
        return Err(bad("time grid is empty"));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(bad("time grid must be finite"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad("time grid must be strictly increasing"));
    }
    Ok(())
}

fn validate_options(opts: &PropagateOptions) -> Result<()> {
    if !(opts.tol.is_finite() && opts.tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol".into(),
            reason: format!("must be positive, got {}", opts.tol),
        });
    }
    if let Stepper::Fixed { step } = opts.stepper {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidParameter {
                name: "step".into(),
                reason: format!("must be positive, got {step}"),
            });
        }
    }
    Ok(())
}

fn frob(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn max_abs(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [&[f64]; 7] = [
    &[],
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Difference between the 5th and embedded 4th order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Integrator<'a> {
    gen: &'a dyn Generator,
    dim: usize,
    opts: PropagateOptions,
    t: f64,
    h: f64,
    y: Vec<C64>,
    /// Stage derivatives; `k[0]` always holds the derivative at `y`.
    k: [Vec<C64>; 7],
    stage: Vec<C64>,
    err_prev: f64,
    herm_err: f64,
    accepted: usize,
    rejected: usize,
}

impl<'a> Integrator<'a> {
    fn new(gen: &'a dyn Generator, rho0: &DensityMatrix, t0: f64, opts: &PropagateOptions) -> Self {
        let dim = gen.dim();
        let n = dim * dim;
        let y = liouvillian::to_column_major(rho0.as_mat());
        let mut k: [Vec<C64>; 7] = std::array::from_fn(|_| vec![C64::new(0.0, 0.0); n]);
        gen.apply(&y, &mut k[0]);
        let mut integ = Self {
            gen,
            dim,
            opts: *opts,
            t: t0,
            h: 0.0,
            y,
            k,
            stage: vec![C64::new(0.0, 0.0); n],
            err_prev: 1e-4,
            herm_err: 0.0,
            accepted: 0,
            rejected: 0,
        };
        integ.h = match opts.stepper {
            Stepper::Fixed { step } => step,
            Stepper::Adaptive => opts.initial_step.unwrap_or_else(|| integ.initial_step()),
        };
        integ
    }

    fn initial_step(&mut self) -> f64 {
        let d0 = max_abs(&self.y).max(1e-5);
        let d1 = max_abs(&self.k[0]);
        let h0 = if d1 < 1e-12 { 1e-6 } else { 0.01 * d0 / d1 };
        for (s, (y, f)) in self.stage.iter_mut().zip(self.y.iter().zip(&self.k[0])) {
            *s = y + f * h0;
        }
        let mut f1 = vec![C64::new(0.0, 0.0); self.y.len()];
        self.gen.apply(&self.stage, &mut f1);
        let d2 = f1
            .iter()
            .zip(&self.k[0])
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1)
    }

    /// Computes stages 2..7 and the candidate state for step `h` into `self.stage`.
    /// Returns the max-norm of the local error estimate.
    fn attempt(&mut self, h: f64) -> f64 {
        let n = self.y.len();
        for s in 1..7 {
            let row = A[s];
            for idx in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for (j, a) in row.iter().enumerate() {
                    if *a != 0.0 {
                        acc += self.k[j][idx] * *a;
                    }
                }
                self.stage[idx] = self.y[idx] + acc * h;
            }
            let (head, tail) = self.k.split_at_mut(s);
            let _ = head;
            self.gen.apply(&self.stage, &mut tail[0]);
        }
        // stage now holds the 5th-order solution (row 7 equals the b weights).
        let mut err = 0.0_f64;
        for idx in 0..n {
            let mut e = C64::new(0.0, 0.0);
            for (j, w) in E.iter().enumerate() {
                if *w != 0.0 {
                    e += self.k[j][idx] * *w;
                }
            }
            err = err.max((e * h).norm());
        }
        let _ = C;
        err
    }

    fn accept(&mut self, h: f64) {
        std::mem::swap(&mut self.y, &mut self.stage);
        let last = std::mem::take(&mut self.k[6]);
        self.k[6] = std::mem::replace(&mut self.k[0], last);
        self.t += h;
        let d = self.dim;
        let mut herm = 0.0_f64;
        for j in 0..d {
            for i in 0..j {
                let (ij, ji) = (i + j * d, j + i * d);
                let a = self.y[ij];
                let b = self.y[ji];
                herm = herm.max((a - b.conj()).norm());
                let avg = (a + b.conj()) * 0.5;
                self.y[ij] = avg;
                self.y[ji] = avg.conj();
                let ka = self.k[0][ij];
                let kb = self.k[0][ji];
                let kavg = (ka + kb.conj()) * 0.5;
                self.k[0][ij] = kavg;
                self.k[0][ji] = kavg.conj();
            }
            let jj = j + j * d;
            herm = herm.max(2.0 * self.y[jj].im.abs());
            self.y[jj].im = 0.0;
            self.k[0][jj].im = 0.0;
        }
        self.herm_err = self.herm_err.max(herm);
        self.accepted += 1;
    }

    fn top_population(&self) -> f64 {
        let d = self.dim;
        self.y[(d - 1) + (d - 1) * d].re
    }

    /// Steps until `t_end`, or until `stop(derivative)` returns true after an
    /// accepted step.
    fn advance_to(&mut self, t_end: f64, mut stop: impl FnMut(&[C64]) -> bool) -> Result<()> {
        if stop(&self.k[0]) {
            return Ok(());
        }
        while self.t < t_end {
            let remaining = t_end - self.t;
            if remaining <= 1e-13 * t_end.abs().max(1.0) {
                self.t = t_end;
                break;
            }
            let h = self.h.min(remaining);
            let err = self.attempt(h);
            match self.opts.stepper {
                Stepper::Fixed { .. } => {
                    self.accept(h);
                }
                Stepper::Adaptive => {
                    let ratio = err / (self.opts.tol * h);
                    if !ratio.is_finite() || ratio > 1.0 {
                        self.rejected += 1;
                        let fac = if ratio.is_finite() {
                            (SAFETY * ratio.powf(-1.0 / 4.0)).max(MIN_FACTOR)
                        } else {
                            MIN_FACTOR
                        };
                        self.h = h * fac;
                        if self.h < 1e-14 * self.t.abs().max(1.0) {
                            return Err(Error::StepUnderflow {
                                time: self.t,
                                step: self.h,
                            });
                        }
                        continue;
                    }
                    self.accept(h);
                    let ratio = ratio.max(1e-10);
                    let fac = SAFETY * ratio.powf(-ALPHA) * self.err_prev.powf(BETA);
                    let fac = fac.clamp(MIN_FACTOR, MAX_FACTOR);
                    self.err_prev = ratio;
                    // Keep the controller's step when the last step was clipped by the grid.
                    if h == self.h || fac < 1.0 {
                        self.h = h * fac;
                    } else {
                        self.h = self.h.max(h * fac);
                    }
                }
            }
            if self.opts.guard.is_on() {
                let top = self.top_population();
                if top > TOP_LEVEL_LIMIT {
                    return Err(Error::TruncationBreach {
                        time: self.t,
                        population: top,
                    });
                }
            }
            if stop(&self.k[0]) {
                return Ok(());
            }
        }
        Ok(())
    }

    fn record(&mut self) -> Result<(DensityMatrix, StepDiagnostics)> {
        let op = liouvillian::from_column_major(&self.y, self.dim);
        let trace_error = (op.trace() - C64::new(1.0, 0.0)).norm();
        let top_population = self.top_population();
        let hermiticity_error = self.herm_err;
        self.herm_err = 0.0;
        let t = self.t;
        let (state, min_eigenvalue) = DensityMatrix::validated(op).map_err(|e| {
            Error::InvalidState(format!("at t = {t}: {e}"))
        })?;
        Ok((
            state,
            StepDiagnostics {
                trace_error,
                hermiticity_error,
                min_eigenvalue,
                top_population,
            },
        ))
    }
}
