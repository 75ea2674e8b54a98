//! Scenario configuration in TOML.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{self, PropagateOptions, SteadyOptions};
use crate::fock::{self, DensityMatrix, Guard, StateVector};
use crate::gadgets::{ncl_lindblad, projector_lindblad, NonlinearFunction, ProjectorGadget};
use crate::liouvillian::{MasterEquation, Rates, DEFAULT_SUPEROPERATOR_CAP};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dim: usize,
    /// Linear loss rate `Gamma`.
    pub gamma_linear: f64,
    /// Engineered loss rate `gamma`.
    pub gamma_nonlinear: f64,
    #[serde(default)]
    pub nbar: f64,
    #[serde(default)]
    pub omega: f64,
    /// Disables the truncation guards.
    #[serde(default)]
    pub unguarded: bool,
    pub gadget: GadgetSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    pub solver: SolverSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GadgetSpec {
    /// `A = |target><Psi| sqrt(N)` with `Psi ~ (a^dagger)^k |source>`.
    Projector {
        target: StateSpec,
        source: StateSpec,
        k: usize,
    },
    /// `A = a f(a^dagger a)`.
    Ncl { f: FunctionSpec },
}

/// A preset name such as `"x-1"`, or polynomial coefficients in `(x - shift)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionSpec {
    Preset(String),
    Polynomial(PolynomialSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialSpec {
    #[serde(default)]
    pub shift: i64,
    pub coeffs: Vec<f64>,
}

impl FunctionSpec {
    pub fn build(&self) -> Result<NonlinearFunction> {
        match self {
            FunctionSpec::Preset(name) => NonlinearFunction::preset(name),
            FunctionSpec::Polynomial(p) => {
                if p.coeffs.is_empty() || p.coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Config("polynomial coefficients must be finite and nonempty".into()));
                }
                Ok(NonlinearFunction::Polynomial {
                    shift: p.shift as f64,
                    coeffs: p.coeffs.clone(),
                })
            }
        }
    }
}

/// A pure state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StateSpec {
    Fock {
        n: usize,
    },
    Coherent {
        alpha: f64,
        #[serde(default)]
        alpha_im: f64,
    },
    Vacuum,
}

impl StateSpec {
    pub fn build(&self, dim: usize, guard: Guard) -> Result<StateVector> {
        match self {
            StateSpec::Fock { n } => fock::fock_state(*n, dim),
            StateSpec::Coherent { alpha, alpha_im } => {
                fock::coherent_state_with(C64::new(*alpha, *alpha_im), dim, guard)
            }
            StateSpec::Vacuum => fock::fock_state(0, dim),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSpec {
    Fock {
        n: usize,
    },
    Coherent {
        alpha: f64,
        #[serde(default)]
        alpha_im: f64,
    },
    Thermal {
        nbar: f64,
    },
    #[default]
    Vacuum,
}

impl InitialSpec {
    pub fn build(&self, dim: usize, guard: Guard) -> Result<DensityMatrix> {
        match self {
            InitialSpec::Fock { n } => Ok(fock::fock_state(*n, dim)?.to_density()),
            InitialSpec::Coherent { alpha, alpha_im } => {
                Ok(fock::coherent_state_with(C64::new(*alpha, *alpha_im), dim, guard)?.to_density())
            }
            InitialSpec::Thermal { nbar } => DensityMatrix::thermal(*nbar, dim, guard),
            InitialSpec::Vacuum => Ok(fock::fock_state(0, dim)?.to_density()),
        }
    }
}

/// Which rate sets the time axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    /// Grid values are `Gamma t`.
    #[default]
    GammaLinear,
    /// Grid values are `gamma t`.
    GammaNonlinear,
    /// Grid values are `t`.
    Absolute,
}

impl TimeUnit {
    pub fn label(self) -> &'static str {
        match self {
            TimeUnit::GammaLinear => "Gamma t",
            TimeUnit::GammaNonlinear => "gamma t",
            TimeUnit::Absolute => "t",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    #[default]
    Linear,
    /// `0` followed by log-spaced points from `t_first` to `t_end`.
    Log,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SteadyMethod {
    /// Null space up to the cap, long-time integration above it.
    #[default]
    Auto,
    Nullspace,
    Evolve,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equation {
    #[default]
    Full,
    /// The `B`-form without the double-commutator term.
    Approximate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecurrenceKind {
    /// Driven nonlinear loss, `p_n / p_{n-1} = alpha0^2 / (n (f^2 + epsilon)^2)`.
    Ncl,
    /// Undriven, `p_n / p_{n-1} = nbar / ((nbar + 1) + (gamma / Gamma) f^2)`.
    Thermal,
}

fn default_tol() -> f64 {
    1e-9
}

fn default_steady_tol() -> f64 {
    1e-10
}

fn default_t_max() -> f64 {
    1e4
}

fn default_cap() -> usize {
    DEFAULT_SUPEROPERATOR_CAP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum SolverSpec {
    Propagate {
        t_end: f64,
        points: usize,
        #[serde(default)]
        grid: GridKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_first: Option<f64>,
        #[serde(default)]
        time_unit: TimeUnit,
        #[serde(default = "default_tol")]
        tol: f64,
        /// Fock state used for the fidelity column; defaults to the projector target.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fidelity_target: Option<usize>,
    },
    Steady {
        #[serde(default)]
        solve: SteadyMethod,
        #[serde(default)]
        equation: Equation,
        #[serde(default = "default_steady_tol")]
        tol: f64,
        #[serde(default = "default_t_max")]
        t_max: f64,
        #[serde(default = "default_cap")]
        cap: usize,
    },
    Recurrence {
        kind: RecurrenceKind,
        #[serde(default)]
        start: usize,
    },
}

impl SolverSpec {
    pub fn method_name(&self) -> &'static str {
        match self {
            SolverSpec::Propagate { .. } => "propagate",
            SolverSpec::Steady { .. } => "steady",
            SolverSpec::Recurrence { .. } => "recurrence",
        }
    }
}

/// Parameters a sweep may vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Coherent amplitude of the initial state and of a coherent projector source.
    Alpha,
    /// `Omega / gamma`; sets `omega`.
    Alpha0,
    /// `Gamma / gamma`; sets `gamma_linear`.
    Epsilon,
    Nbar,
    Omega,
    GammaLinear,
    GammaNonlinear,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Alpha => "alpha",
            SweepParameter::Alpha0 => "alpha0",
            SweepParameter::Epsilon => "epsilon",
            SweepParameter::Nbar => "nbar",
            SweepParameter::Omega => "omega",
            SweepParameter::GammaLinear => "gamma_linear",
            SweepParameter::GammaNonlinear => "gamma_nonlinear",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Per-point dimension, overriding `dim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Output directory for the CLI.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    /// File name stem; defaults to the scenario name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem: Option<String>,
    /// Also write photon-number distributions.
    #[serde(default)]
    pub distributions: bool,
}

/// The operator side of a scenario.
#[derive(Clone, Debug)]
pub enum Gadget {
    Projector(ProjectorGadget),
    Ncl(NonlinearFunction),
}

/// Everything needed to run one point.
#[derive(Clone, Debug)]
pub struct Problem {
    pub master_equation: MasterEquation,
    pub gadget: Gadget,
    pub initial: DensityMatrix,
    pub guard: Guard,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn guard(&self) -> Guard {
        Guard::from_disabled(self.unguarded)
    }

    pub fn rates(&self) -> Rates {
        Rates {
            gamma_linear: self.gamma_linear,
            gamma_nonlinear: self.gamma_nonlinear,
            nbar: self.nbar,
            omega: self.omega,
        }
    }

    /// Checks field ranges that do not need a built problem.
    pub fn check(&self) -> Result<()> {
        let rate = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name: name.into(),
                    reason: format!("must be finite and nonnegative, got {v}"),
                })
            }
        };
        rate("gamma_linear", self.gamma_linear)?;
        rate("gamma_nonlinear", self.gamma_nonlinear)?;
        rate("nbar", self.nbar)?;
        if !self.omega.is_finite() {
            return Err(Error::InvalidParameter {
                name: "omega".into(),
                reason: "must be finite".into(),
            });
        }
        if self.dim < 2 {
            return Err(Error::InvalidDimension(self.dim));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::InvalidParameter {
                    name: "sweep.values".into(),
                    reason: "must be nonempty".into(),
                });
            }
            if sweep.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "sweep.values".into(),
                    reason: "must be finite".into(),
                });
            }
            if let Some(dims) = &sweep.dims {
                if dims.len() != sweep.values.len() {
                    return Err(Error::InvalidParameter {
                        name: "sweep.dims".into(),
                        reason: format!(
                            "has {} entries for {} values",
                            dims.len(),
                            sweep.values.len()
                        ),
                    });
                }
            }
        }
        match &self.solver {
            SolverSpec::Propagate {
                t_end,
                points,
                grid,
                t_first,
                tol,
                ..
            } => {
                let positive = |name: &str, v: f64| {
                    if v.is_finite() && v > 0.0 {
                        Ok(())
                    } else {
                        Err(Error::InvalidParameter {
                            name: name.into(),
                            reason: format!("must be positive, got {v}"),
                        })
                    }
                };
                positive("solver.t_end", *t_end)?;
                positive("solver.tol", *tol)?;
                if *points < 1 {
                    return Err(Error::InvalidParameter {
                        name: "solver.points".into(),
                        reason: "must be at least 1".into(),
                    });
                }
                if *grid == GridKind::Log {
                    let first = t_first.ok_or_else(|| Error::InvalidParameter {
                        name: "solver.t_first".into(),
                        reason: "required for a log grid".into(),
                    })?;
                    positive("solver.t_first", first)?;
                    if first >= *t_end {
                        return Err(Error::InvalidParameter {
                            name: "solver.t_first".into(),
                            reason: "must be below t_end".into(),
                        });
                    }
                }
            }
            SolverSpec::Steady { tol, t_max, .. } => {
                if !(tol.is_finite() && *tol > 0.0 && t_max.is_finite() && *t_max > 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "solver".into(),
                        reason: "tol and t_max must be positive".into(),
                    });
                }
            }
            SolverSpec::Recurrence { .. } => {}
        }
        Ok(())
    }

    /// Sweep values paired with their point configs; a single point without a sweep.
    pub fn expand(&self) -> Result<Vec<(Option<f64>, ScenarioConfig)>> {
        self.check()?;
        let Some(sweep) = &self.sweep else {
            return Ok(vec![(None, self.clone())]);
        };
        sweep
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut cfg = self.clone();
                cfg.sweep = None;
                if let Some(dims) = &sweep.dims {
                    cfg.dim = dims[i];
                }
                cfg.set_parameter(sweep.parameter, v)?;
                cfg.check()?;
                Ok((Some(v), cfg))
            })
            .collect()
    }

    pub fn set_parameter(&mut self, p: SweepParameter, v: f64) -> Result<()> {
        match p {
            SweepParameter::Alpha => {
                let mut touched = false;
                if let InitialSpec::Coherent { alpha, .. } = &mut self.initial {
                    *alpha = v;
                    touched = true;
                }
                if let GadgetSpec::Projector {
                    source: StateSpec::Coherent { alpha, .. },
                    ..
                } = &mut self.gadget
                {
                    *alpha = v;
                    touched = true;
                }
                if !touched {
                    return Err(Error::InvalidParameter {
                        name: "sweep.parameter".into(),
                        reason: "alpha needs a coherent initial state or source".into(),
                    });
                }
            }
            SweepParameter::Alpha0 => self.omega = v * self.gamma_nonlinear,
            SweepParameter::Epsilon => self.gamma_linear = v * self.gamma_nonlinear,
            SweepParameter::Nbar => self.nbar = v,
            SweepParameter::Omega => self.omega = v,
            SweepParameter::GammaLinear => self.gamma_linear = v,
            SweepParameter::GammaNonlinear => self.gamma_nonlinear = v,
        }
        Ok(())
    }

    /// Builds the master equation and initial state with all guards applied.
    pub fn build(&self) -> Result<Problem> {
        self.check()?;
        let guard = self.guard();
        let dim = self.dim;
        let (engineered, gadget) = match &self.gadget {
            GadgetSpec::Projector { target, source, k } => {
                let g = ProjectorGadget::new(target.build(dim, guard)?, source.build(dim, guard)?, *k)?;
                (projector_lindblad(&g, dim)?, Gadget::Projector(g))
            }
            GadgetSpec::Ncl { f } => {
                let f = f.build()?;
                (ncl_lindblad(&f, dim)?, Gadget::Ncl(f))
            }
        };
        let master_equation = MasterEquation::new(self.rates(), engineered)?;
        let initial = self.initial.build(dim, guard)?;
        Ok(Problem {
            master_equation,
            gadget,
            initial,
            guard,
        })
    }

    /// Physical times of the propagation grid and their axis values.
    pub fn time_grid(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let SolverSpec::Propagate {
            t_end,
            points,
            grid,
            t_first,
            time_unit,
            ..
        } = &self.solver
        else {
            return Err(Error::Config("time grid requires the propagate method".into()));
        };
        let axis = match grid {
            GridKind::Linear => evolve::linear_grid(0.0, *t_end, *points),
            GridKind::Log => evolve::log_grid(t_first.unwrap_or(*t_end), *t_end, *points),
        };
        let rate = match time_unit {
            TimeUnit::GammaLinear => self.gamma_linear,
            TimeUnit::GammaNonlinear => self.gamma_nonlinear,
            TimeUnit::Absolute => 1.0,
        };
        if rate <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "solver.time_unit".into(),
                reason: "the selected rate is zero".into(),
            });
        }
        let times = axis.iter().map(|x| x / rate).collect();
        Ok((times, axis))
    }

    pub fn propagate_options(&self) -> PropagateOptions {
        let tol = match &self.solver {
            SolverSpec::Propagate { tol, .. } => *tol,
            _ => default_tol(),
        };
        PropagateOptions {
            tol,
            guard: self.guard(),
            ..Default::default()
        }
    }

    pub fn steady_options(&self) -> SteadyOptions {
        match &self.solver {
            SolverSpec::Steady { tol, t_max, .. } => SteadyOptions {
                tol: *tol,
                t_max: *t_max,
                propagate: PropagateOptions {
                    guard: self.guard(),
                    ..Default::default()
                },
            },
            _ => SteadyOptions::default(),
        }
    }

    /// Sets a dotted key such as `solver.tol` from a TOML literal; bare words are strings.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let parsed = parse_literal(value);
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(format!("bad override key `{key}`")));
        }
        let mut node = &mut root;
        for part in &parts[..parts.len() - 1] {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("`{key}`: `{part}` is not a table")))?;
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()));
        }
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{key}` does not name a table entry")))?;
        table.insert(parts[parts.len() - 1].to_string(), parsed);
        let text = toml::to_string(&root).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("override `{key}={value}`: {e}")))
    }
}

fn parse_literal(value: &str) -> toml::Value {
    let doc = format!("v = {value}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(value.into())),
        Err(_) => toml::Value::String(value.into()),
    }
}
