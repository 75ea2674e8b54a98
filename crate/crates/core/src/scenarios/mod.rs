//! Scenario execution: single runs, parameter sweeps and the figure presets.

mod config;
mod presets;

use rayon::prelude::*;

pub use config::{
    Equation, FunctionSpec, Gadget, GadgetSpec, GridKind, InitialSpec, OutputSpec, PolynomialSpec,
    Problem, RecurrenceKind, ScenarioConfig, SolverSpec, StateSpec, SteadyMethod, SweepParameter,
    SweepSpec, TimeUnit,
};
pub use presets::{preset_families, run_preset, Family, PresetResult, PRESETS};

use crate::error::{Error, Result};
use crate::evolve::{self, StepDiagnostics, TOP_LEVEL_LIMIT};
use crate::fock::{self, StateVector};
use crate::observables::ObservableReport;
use crate::steady::{self, ApproximateMethod, DiagonalDistribution, PeakEstimate};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResultKind {
    TimeSeries,
    Steady,
    Recurrence,
}

/// Observables along a propagated trajectory.
#[derive(Clone, Debug)]
pub struct SeriesPoint {
    /// Grid values in the configured time unit.
    pub axis: Vec<f64>,
    pub reports: Vec<ObservableReport>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl SeriesPoint {
    /// Index of the largest fidelity.
    pub fn max_fidelity_index(&self) -> Option<usize> {
        argbest(self.reports.iter().map(|r| r.fidelity), |a, b| a > b)
    }

    /// Index of the smallest Mandel Q.
    pub fn min_q_index(&self) -> Option<usize> {
        argbest(self.reports.iter().map(|r| r.mandel_q), |a, b| a < b)
    }
}

fn argbest(values: impl Iterator<Item = Option<f64>>, better: impl Fn(f64, f64) -> bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        let Some(v) = v else { continue };
        if best.is_none_or(|(_, b)| better(v, b)) {
            best = Some((i, v));
        }
    }
    best.map(|b| b.0)
}

#[derive(Clone, Debug)]
pub struct SteadyReport {
    pub report: ObservableReport,
    pub converged: bool,
    /// `||rhs||_F` at the returned state.
    pub residual: f64,
    /// `nullspace` or `evolve`.
    pub solver: &'static str,
    /// `||B rho - alpha0 rho||_F` for the approximate equation.
    pub eigen_residual: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RecurrenceReport {
    pub distribution: DiagonalDistribution,
    pub mean_n: f64,
    pub mandel_q: Option<f64>,
    /// `sum p_n^2`, the purity of the diagonal state.
    pub purity: f64,
    pub peak: Option<PeakEstimate>,
}

#[derive(Clone, Debug)]
pub enum PointOutcome {
    Series(SeriesPoint),
    Steady(SteadyReport),
    Recurrence(RecurrenceReport),
}

impl PointOutcome {
    pub fn converged(&self) -> bool {
        match self {
            PointOutcome::Steady(s) => s.converged,
            _ => true,
        }
    }

    pub fn as_series(&self) -> Option<&SeriesPoint> {
        match self {
            PointOutcome::Series(s) => Some(s),
            _ => None,
        }
    }

    /// `(mandel_q, mean_n, purity, distribution)` of a stationary outcome.
    pub fn stationary(&self) -> Option<(Option<f64>, f64, f64, &DiagonalDistribution)> {
        match self {
            PointOutcome::Steady(s) => Some((s.report.mandel_q, s.report.mean_n, s.report.purity, &s.report.distribution)),
            PointOutcome::Recurrence(r) => Some((r.mandel_q, r.mean_n, r.purity, &r.distribution)),
            PointOutcome::Series(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PointResult {
    pub index: usize,
    pub sweep_value: Option<f64>,
    pub dim: usize,
    pub outcome: Result<PointOutcome>,
}

#[derive(Clone, Debug)]
pub struct Provenance {
    /// The full config as TOML.
    pub config: String,
    pub version: String,
    pub tolerances: Vec<(String, f64)>,
}

impl Provenance {
    fn new(cfg: &ScenarioConfig) -> Self {
        let mut tolerances = vec![
            ("truncation_tail".to_string(), fock::TAIL_TOLERANCE),
            ("top_level_population".to_string(), TOP_LEVEL_LIMIT),
        ];
        match &cfg.solver {
            SolverSpec::Propagate { tol, .. } => tolerances.push(("propagate_tol".into(), *tol)),
            SolverSpec::Steady { tol, .. } => {
                tolerances.push(("steady_tol".into(), *tol));
                tolerances.push(("nullspace_residual".into(), steady::NULLSPACE_RESIDUAL));
            }
            SolverSpec::Recurrence { .. } => {
                tolerances.push(("recurrence_tail".into(), steady::RECURRENCE_TAIL))
            }
        }
        Self {
            config: cfg.to_toml(),
            version: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            tolerances,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioResult {
    pub name: String,
    pub kind: ResultKind,
    pub sweep_parameter: Option<SweepParameter>,
    pub time_unit: Option<TimeUnit>,
    pub points: Vec<PointResult>,
    pub provenance: Provenance,
}

impl ScenarioResult {
    pub fn all_converged(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.outcome.as_ref().map_or(true, |o| o.converged()))
    }

    pub fn errors(&self) -> impl Iterator<Item = (&PointResult, &Error)> {
        self.points
            .iter()
            .filter_map(|p| p.outcome.as_ref().err().map(|e| (p, e)))
    }
}

/// Builds every point of a config without solving anything.
pub fn validate(cfg: &ScenarioConfig) -> Result<usize> {
    let points = cfg.expand()?;
    for (value, point) in &points {
        point.build().map_err(|e| annotate(e, *value))?;
        if let SolverSpec::Propagate { .. } = point.solver {
            point.time_grid()?;
        }
        if let SolverSpec::Recurrence { kind, .. } = point.solver {
            recurrence_inputs(point, kind)?;
        }
    }
    Ok(points.len())
}

fn annotate(e: Error, value: Option<f64>) -> Error {
    match (value, e) {
        (Some(v), Error::Config(msg)) => Error::Config(format!("sweep value {v}: {msg}")),
        (_, e) => e,
    }
}

/// Runs each sweep point independently and in parallel; results keep the value order.
pub fn run_sweep(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    let points = cfg.expand()?;
    let kind = match cfg.solver {
        SolverSpec::Propagate { .. } => ResultKind::TimeSeries,
        SolverSpec::Steady { .. } => ResultKind::Steady,
        SolverSpec::Recurrence { .. } => ResultKind::Recurrence,
    };
    let time_unit = match &cfg.solver {
        SolverSpec::Propagate { time_unit, .. } => Some(*time_unit),
        _ => None,
    };
    let results: Vec<PointResult> = points
        .into_par_iter()
        .enumerate()
        .map(|(index, (sweep_value, point))| PointResult {
            index,
            sweep_value,
            dim: point.dim,
            outcome: run_point(&point),
        })
        .collect();
    Ok(ScenarioResult {
        name: cfg.name.clone().unwrap_or_else(|| "scenario".into()),
        kind,
        sweep_parameter: cfg.sweep.as_ref().map(|s| s.parameter),
        time_unit,
        points: results,
        provenance: Provenance::new(cfg),
    })
}

/// Runs a single point (the config's sweep, if any, is ignored).
pub fn run_point(cfg: &ScenarioConfig) -> Result<PointOutcome> {
    match &cfg.solver {
        SolverSpec::Propagate { fidelity_target, .. } => {
            let problem = cfg.build()?;
            let target = fidelity_state(&problem, *fidelity_target, cfg.dim)?;
            let (times, axis) = cfg.time_grid()?;
            let traj = evolve::propagate(
                &problem.master_equation,
                &problem.initial,
                &times,
                &cfg.propagate_options(),
            )?;
            let reports = traj
                .states
                .iter()
                .map(|s| ObservableReport::new(s, target.as_ref()))
                .collect::<Result<Vec<_>>>()?;
            Ok(PointOutcome::Series(SeriesPoint {
                axis,
                reports,
                diagnostics: traj.diagnostics,
                accepted_steps: traj.accepted_steps,
                rejected_steps: traj.rejected_steps,
            }))
        }
        SolverSpec::Steady {
            solve,
            equation,
            cap,
            ..
        } => {
            let problem = cfg.build()?;
            let me = &problem.master_equation;
            let use_nullspace = match solve {
                SteadyMethod::Auto => cfg.dim <= *cap,
                SteadyMethod::Nullspace => true,
                SteadyMethod::Evolve => false,
            };
            let solver = if use_nullspace { "nullspace" } else { "evolve" };
            let (state, converged, residual, eigen_residual) = match equation {
                Equation::Full => {
                    if use_nullspace {
                        let s = steady::steady_state_nullspace_capped(me, *cap)?;
                        (s.state, true, s.residual, None)
                    } else {
                        let s = evolve::evolve_to_steady(me, &problem.initial, &cfg.steady_options())?;
                        (s.state, s.converged, s.residual, None)
                    }
                }
                Equation::Approximate => {
                    let Gadget::Ncl(f) = &problem.gadget else {
                        return Err(Error::Config("the approximate equation needs an ncl gadget".into()));
                    };
                    let method = if use_nullspace {
                        ApproximateMethod::Nullspace { cap: *cap }
                    } else {
                        ApproximateMethod::Evolve(cfg.steady_options())
                    };
                    let s = steady::approximate_steady_state(me, f, method)?;
                    (s.state, s.converged, s.residual, Some(s.eigen_residual))
                }
            };
            let top = state.population(cfg.dim - 1);
            if problem.guard.is_on() && top > TOP_LEVEL_LIMIT {
                return Err(Error::TruncationBreach {
                    time: f64::INFINITY,
                    population: top,
                });
            }
            let target = fidelity_state(&problem, None, cfg.dim)?;
            Ok(PointOutcome::Steady(SteadyReport {
                report: ObservableReport::new(&state, target.as_ref())?,
                converged,
                residual,
                solver,
                eigen_residual,
            }))
        }
        SolverSpec::Recurrence { kind, start } => {
            cfg.check()?;
            let inputs = recurrence_inputs(cfg, *kind)?;
            let (distribution, peak) = match inputs {
                RecurrenceInputs::Ncl { f, alpha0, epsilon } => {
                    let d = steady::ncl_recurrence_from(&f, alpha0, epsilon, cfg.dim, *start)?;
                    let peak = steady::peak_condition(&f, alpha0, epsilon, cfg.dim).ok();
                    (d, peak)
                }
                RecurrenceInputs::Thermal { f, nbar, ratio } => {
                    (steady::thermal_recurrence(&f, nbar, ratio, cfg.dim)?, None)
                }
            };
            Ok(PointOutcome::Recurrence(RecurrenceReport {
                mean_n: distribution.mean(),
                mandel_q: distribution.mandel_q().ok(),
                purity: distribution.probs().iter().map(|p| p * p).sum(),
                distribution,
                peak,
            }))
        }
    }
}

enum RecurrenceInputs {
    Ncl {
        f: crate::gadgets::NonlinearFunction,
        alpha0: f64,
        epsilon: f64,
    },
    Thermal {
        f: crate::gadgets::NonlinearFunction,
        nbar: f64,
        ratio: f64,
    },
}

fn recurrence_inputs(cfg: &ScenarioConfig, kind: RecurrenceKind) -> Result<RecurrenceInputs> {
    let GadgetSpec::Ncl { f } = &cfg.gadget else {
        return Err(Error::Config("recurrences need an ncl gadget".into()));
    };
    let f = f.build()?;
    match kind {
        RecurrenceKind::Ncl => {
            if cfg.gamma_nonlinear <= 0.0 {
                return Err(Error::InvalidParameter {
                    name: "gamma_nonlinear".into(),
                    reason: "must be positive for the ncl recurrence".into(),
                });
            }
            if cfg.nbar != 0.0 {
                return Err(Error::InvalidParameter {
                    name: "nbar".into(),
                    reason: "the ncl recurrence assumes nbar = 0".into(),
                });
            }
            Ok(RecurrenceInputs::Ncl {
                f,
                alpha0: cfg.omega.abs() / cfg.gamma_nonlinear,
                epsilon: cfg.gamma_linear / cfg.gamma_nonlinear,
            })
        }
        RecurrenceKind::Thermal => {
            if cfg.gamma_linear <= 0.0 {
                return Err(Error::InvalidParameter {
                    name: "gamma_linear".into(),
                    reason: "must be positive for the thermal recurrence".into(),
                });
            }
            if cfg.omega != 0.0 {
                return Err(Error::InvalidParameter {
                    name: "omega".into(),
                    reason: "the thermal recurrence assumes no drive".into(),
                });
            }
            Ok(RecurrenceInputs::Thermal {
                f,
                nbar: cfg.nbar,
                ratio: cfg.gamma_nonlinear / cfg.gamma_linear,
            })
        }
    }
}

fn fidelity_state(problem: &Problem, target: Option<usize>, dim: usize) -> Result<Option<StateVector>> {
    match (target, &problem.gadget) {
        (Some(n), _) => fock::fock_state(n, dim).map(Some),
        (None, Gadget::Projector(g)) => Ok(Some(g.target().clone())),
        (None, Gadget::Ncl(_)) => Ok(None),
    }
}

/// Poisson distribution with the given mean on `dim` levels, renormalized.
pub fn poisson_reference(mean: f64, dim: usize) -> Result<DiagonalDistribution> {
    if !(mean.is_finite() && mean >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "mean".into(),
            reason: format!("must be nonnegative, got {mean}"),
        });
    }
    if mean == 0.0 {
        let mut p = vec![0.0; dim.max(1)];
        p[0] = 1.0;
        return DiagonalDistribution::new(p);
    }
    let w = (0..dim)
        .map(|n| (n as f64 * mean.ln() - mean - fock::ln_factorial(n)).exp())
        .collect();
    DiagonalDistribution::from_weights(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ScenarioConfig {
        ScenarioConfig::from_toml(
            r#"
name = "t"
dim = 24
gamma_linear = 0.2
gamma_nonlinear = 1.0
omega = 2.0

[gadget]
kind = "ncl"
f = "x-1"

[solver]
method = "steady"
"#,
        )
        .unwrap()
    }

    #[test]
    fn single_value_sweep_equals_single_run() {
        let mut cfg = base();
        let single = run_sweep(&cfg).unwrap();
        cfg.sweep = Some(SweepSpec {
            parameter: SweepParameter::Alpha0,
            values: vec![2.0],
            dims: None,
        });
        let swept = run_sweep(&cfg).unwrap();
        let a = single.points[0].outcome.as_ref().unwrap().stationary().unwrap();
        let b = swept.points[0].outcome.as_ref().unwrap().stationary().unwrap();
        assert_eq!(a.3, b.3);
        assert_eq!(swept.points[0].sweep_value, Some(2.0));
    }

    #[test]
    fn sweep_isolates_failures_and_keeps_order() {
        let mut cfg = base();
        cfg.solver = SolverSpec::Recurrence {
            kind: RecurrenceKind::Ncl,
            start: 0,
        };
        cfg.sweep = Some(SweepSpec {
            parameter: SweepParameter::Alpha0,
            values: vec![1.0, 500.0, 2.0],
            dims: None,
        });
        let r = run_sweep(&cfg).unwrap();
        assert_eq!(r.points.len(), 3);
        assert!(r.points[0].outcome.is_ok());
        assert!(matches!(r.points[1].outcome, Err(Error::TailGuard { .. })));
        assert!(r.points[2].outcome.is_ok());
        assert_eq!(r.errors().count(), 1);
        let values: Vec<_> = r.points.iter().map(|p| p.sweep_value.unwrap()).collect();
        assert_eq!(values, vec![1.0, 500.0, 2.0]);
    }

    #[test]
    fn auto_method_follows_cap() {
        let mut cfg = base();
        let r = run_point(&cfg).unwrap();
        let PointOutcome::Steady(s) = r else { panic!() };
        assert_eq!(s.solver, "nullspace");
        cfg.solver = SolverSpec::Steady {
            solve: SteadyMethod::Auto,
            equation: Equation::Full,
            tol: 1e-10,
            t_max: 1e4,
            cap: 8,
        };
        let PointOutcome::Steady(e) = run_point(&cfg).unwrap() else { panic!() };
        assert_eq!(e.solver, "evolve");
        assert!(e.converged);
        assert!((e.report.mandel_q.unwrap() - s.report.mandel_q.unwrap()).abs() < 1e-6);
    }

    #[test]
    fn recurrence_inputs_are_checked() {
        let mut cfg = base();
        cfg.solver = SolverSpec::Recurrence {
            kind: RecurrenceKind::Thermal,
            start: 0,
        };
        assert!(matches!(run_point(&cfg), Err(Error::InvalidParameter { ref name, .. }) if name == "omega"));
        assert!(validate(&cfg).is_err());
    }

    #[test]
    fn argbest_prefers_first() {
        let v = [Some(1.0), None, Some(3.0), Some(3.0)];
        assert_eq!(argbest(v.into_iter(), |a, b| a > b), Some(2));
        assert_eq!(argbest([None, None].into_iter(), |a: f64, b| a > b), None);
    }

    #[test]
    fn poisson_reference_mean() {
        let p = poisson_reference(4.0, 40).unwrap();
        assert!((p.mean() - 4.0).abs() < 1e-9);
        assert_eq!(poisson_reference(0.0, 3).unwrap().probs(), &[1.0, 0.0, 0.0]);
    }
}
