//! Named parameter sets for the two figure families.

use super::config::*;
use super::{run_sweep, ScenarioResult};
use crate::error::{Error, Result};

pub const PRESETS: [&str; 8] = [
    "fig1a", "fig1b", "fig1c", "fig1d", "fig2a", "fig2b", "fig2c", "fig2d",
];

/// One curve family of a preset.
#[derive(Clone, Debug, PartialEq)]
pub struct Family {
    pub label: String,
    pub config: ScenarioConfig,
}

#[derive(Clone, Debug)]
pub struct PresetResult {
    pub name: String,
    pub families: Vec<(String, ScenarioResult)>,
}

/// Log-spaced `alpha0` grid on `[1, 150]`.
fn alpha0_grid() -> Vec<f64> {
    let n = 13;
    (0..n)
        .map(|i| {
            let v = 150f64.powf(i as f64 / (n - 1) as f64);
            (v * 1e6).round() / 1e6
        })
        .collect()
}

fn figure_one(name: &str) -> Vec<Family> {
    let (gadget, sweep, solver, label) = if name == "fig1a" || name == "fig1b" {
        (
            GadgetSpec::Projector {
                target: StateSpec::Fock { n: 2 },
                source: StateSpec::Coherent {
                    alpha: 2.0,
                    alpha_im: 0.0,
                },
                k: 2,
            },
            SweepSpec {
                parameter: SweepParameter::Alpha,
                values: vec![2.0, 3.0, 4.0, 5.0],
                dims: Some(vec![90; 4]),
            },
            SolverSpec::Propagate {
                t_end: 0.5,
                points: 501,
                grid: GridKind::Linear,
                t_first: None,
                time_unit: TimeUnit::GammaLinear,
                tol: 1e-9,
                fidelity_target: Some(2),
            },
            "projector",
        )
    } else {
        (
            GadgetSpec::Ncl {
                f: FunctionSpec::Preset("x-1".into()),
            },
            SweepSpec {
                parameter: SweepParameter::Alpha,
                values: vec![2.0, 4.0, 6.0, 8.0],
                dims: Some(vec![30, 56, 88, 130]),
            },
            SolverSpec::Propagate {
                t_end: 0.3,
                points: 80,
                grid: GridKind::Log,
                t_first: Some(1e-4),
                time_unit: TimeUnit::GammaLinear,
                tol: 1e-9,
                fidelity_target: None,
            },
            "ncl",
        )
    };
    vec![Family {
        label: label.into(),
        config: ScenarioConfig {
            name: Some(format!("{name}_{label}")),
            dim: 90,
            gamma_linear: 1.0,
            gamma_nonlinear: 0.2,
            nbar: 0.0,
            omega: 0.0,
            unguarded: false,
            gadget,
            initial: InitialSpec::Coherent {
                alpha: 2.0,
                alpha_im: 0.0,
            },
            solver,
            sweep: Some(sweep),
            output: OutputSpec::default(),
        },
    }]
}

fn ncl_steady(name: &str, label: &str, f: &str, epsilon: f64, equation: Equation) -> Family {
    Family {
        label: label.into(),
        config: ScenarioConfig {
            name: Some(format!("{name}_{label}")),
            dim: 64,
            gamma_linear: epsilon,
            gamma_nonlinear: 1.0,
            nbar: 0.0,
            omega: 1.0,
            unguarded: false,
            gadget: GadgetSpec::Ncl {
                f: FunctionSpec::Preset(f.into()),
            },
            initial: InitialSpec::Vacuum,
            solver: SolverSpec::Steady {
                solve: SteadyMethod::Auto,
                equation,
                tol: 1e-10,
                t_max: 1e4,
                cap: 64,
            },
            sweep: Some(SweepSpec {
                parameter: SweepParameter::Alpha0,
                values: alpha0_grid(),
                dims: None,
            }),
            output: OutputSpec {
                distributions: true,
                ..Default::default()
            },
        },
    }
}

fn figure_two_comparison(name: &str, f: &str) -> Vec<Family> {
    let mut rec = ncl_steady(name, "recurrence", f, 1.0, Equation::Full);
    rec.config.solver = SolverSpec::Recurrence {
        kind: RecurrenceKind::Ncl,
        start: 0,
    };
    vec![
        ncl_steady(name, "exact", f, 1.0, Equation::Full),
        ncl_steady(name, "approximate", f, 1.0, Equation::Approximate),
        rec,
    ]
}

fn figure_two_thermal() -> Vec<Family> {
    let base = ScenarioConfig {
        name: None,
        dim: 48,
        gamma_linear: 1.0,
        gamma_nonlinear: 0.2,
        nbar: 1.0,
        omega: 0.0,
        unguarded: false,
        gadget: GadgetSpec::Ncl {
            f: FunctionSpec::Preset("(x-1)^3".into()),
        },
        initial: InitialSpec::Vacuum,
        solver: SolverSpec::Recurrence {
            kind: RecurrenceKind::Thermal,
            start: 0,
        },
        sweep: None,
        output: OutputSpec {
            distributions: true,
            ..Default::default()
        },
    };
    let mut rec = base.clone();
    rec.name = Some("fig2d_recurrence".into());
    rec.sweep = Some(SweepSpec {
        parameter: SweepParameter::Nbar,
        values: (1..=40).map(|i| i as f64 * 0.25).collect(),
        dims: None,
    });
    let mut exact = base;
    exact.name = Some("fig2d_exact".into());
    exact.solver = SolverSpec::Steady {
        solve: SteadyMethod::Auto,
        equation: Equation::Full,
        tol: 1e-10,
        t_max: 1e4,
        cap: 64,
    };
    exact.sweep = Some(SweepSpec {
        parameter: SweepParameter::Nbar,
        values: vec![0.25, 0.5, 1.0, 2.0, 4.0, 7.0, 10.0],
        dims: None,
    });
    vec![
        Family {
            label: "recurrence".into(),
            config: rec,
        },
        Family {
            label: "exact".into(),
            config: exact,
        },
    ]
}

/// Curve families of a preset, as plain configs.
pub fn preset_families(name: &str) -> Result<Vec<Family>> {
    Ok(match name {
        "fig1a" | "fig1b" | "fig1c" | "fig1d" => figure_one(name),
        "fig2a" => [1.0, 5.0, 10.0]
            .iter()
            .map(|&eps| {
                ncl_steady("fig2a", &format!("epsilon_{eps}"), "x-1", eps, Equation::Full)
            })
            .collect(),
        "fig2b" => figure_two_comparison("fig2b", "x-1"),
        "fig2c" => figure_two_comparison("fig2c", "(x-1)^2"),
        "fig2d" => figure_two_thermal(),
        _ => {
            return Err(Error::Config(format!(
                "unknown preset `{name}`; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    })
}

/// Runs every family of a preset after applying `key=value` overrides to each.
pub fn run_preset(name: &str, overrides: &[(String, String)]) -> Result<PresetResult> {
    let mut families = Vec::new();
    for fam in preset_families(name)? {
        let mut cfg = fam.config;
        for (k, v) in overrides {
            cfg = cfg.with_override(k, v)?;
        }
        families.push((fam.label, run_sweep(&cfg)?));
    }
    Ok(PresetResult {
        name: name.into(),
        families,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::validate;

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            for fam in preset_families(name).unwrap() {
                validate(&fam.config).unwrap_or_else(|e| panic!("{name}/{}: {e}", fam.label));
            }
        }
        assert!(preset_families("fig3").is_err());
    }

    #[test]
    fn preset_parameters() {
        let f = preset_families("fig1c").unwrap();
        let sweep = f[0].config.sweep.as_ref().unwrap();
        assert_eq!(sweep.values, vec![2.0, 4.0, 6.0, 8.0]);
        assert_eq!(f[0].config.gamma_nonlinear, f[0].config.gamma_linear / 5.0);
        let f = preset_families("fig2a").unwrap();
        let eps: Vec<f64> = f.iter().map(|x| x.config.gamma_linear / x.config.gamma_nonlinear).collect();
        assert_eq!(eps, vec![1.0, 5.0, 10.0]);
        assert!(f[0].config.sweep.as_ref().unwrap().values.contains(&150.0));
        let f = preset_families("fig2d").unwrap();
        assert_eq!(f[0].config.omega, 0.0);
        assert_eq!(f[0].config.gadget, GadgetSpec::Ncl { f: FunctionSpec::Preset("(x-1)^3".into()) });
    }

    #[test]
    fn overrides_reach_every_family() {
        let r = run_preset(
            "fig2d",
            &[
                ("sweep.values".into(), "[1.0]".into()),
                ("dim".into(), "24".into()),
            ],
        )
        .unwrap();
        assert_eq!(r.families.len(), 2);
        for (_, res) in &r.families {
            assert_eq!(res.points.len(), 1);
            assert_eq!(res.points[0].dim, 24);
        }
    }
}
