//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Runtime limits count toward the verdict.

use std::time::{Duration, Instant};

use nldiss::evolve::{
    self, decay_rate_fit, evolve_to_steady, linear_grid, PropagateOptions, StepDiagnostics,
    SteadyOptions, TOP_LEVEL_LIMIT,
};
use nldiss::fock::{self, coherent_state, fock_state, DensityMatrix, FockOperator};
use nldiss::gadgets::{
    gamma_eff, ncl_lindblad, projector_lindblad, steady_fidelity_prediction, NonlinearFunction,
    ProjectorGadget,
};
use nldiss::liouvillian::{self, MasterEquation, Rates};
use nldiss::scenarios::{self, preset_families, PointOutcome, ScenarioResult};
use nldiss::steady::{
    approximate_rhs, approximate_steady_state, ncl_recurrence, ncl_recurrence_from,
    steady_state_nullspace, thermal_recurrence, ApproximateMethod,
};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Diagnostics from every propagation, checked by the invariant criterion.
#[derive(Default)]
struct Collected {
    diagnostics: Vec<(String, StepDiagnostics)>,
}

impl Collected {
    fn extend(&mut self, label: &str, d: impl IntoIterator<Item = StepDiagnostics>) {
        self.diagnostics.extend(d.into_iter().map(|x| (label.to_string(), x)));
    }

    fn series(&mut self, label: &str, r: &ScenarioResult) {
        for p in &r.points {
            if let Ok(PointOutcome::Series(s)) = &p.outcome {
                self.extend(&format!("{label} point {}", p.index), s.diagnostics.iter().copied());
            }
        }
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rates(gamma_linear: f64, gamma_nonlinear: f64, nbar: f64, omega: f64) -> Rates {
    Rates {
        gamma_linear,
        gamma_nonlinear,
        nbar,
        omega,
    }
}

fn ncl_me(f: &NonlinearFunction, dim: usize, r: Rates) -> Result<MasterEquation, String> {
    MasterEquation::new(r, ncl_lindblad(f, dim).map_err(err)?).map_err(err)
}

fn preset(name: &str, values: &str) -> Result<Vec<(String, ScenarioResult)>, String> {
    let mut out = Vec::new();
    for fam in preset_families(name).map_err(err)? {
        let mut cfg = fam.config;
        if !values.is_empty() {
            cfg = cfg.with_override("sweep.values", values).map_err(err)?;
        }
        out.push((fam.label, scenarios::run_sweep(&cfg).map_err(err)?));
    }
    Ok(out)
}

fn c1_thermal_recurrence() -> Outcome {
    let dim = 40;
    let f = NonlinearFunction::preset("(x-1)^3").map_err(err)?;
    let me = ncl_me(&f, dim, rates(1.0, 0.2, 2.0, 0.0))?;
    let rho = steady_state_nullspace(&me).map_err(err)?;
    let rec = thermal_recurrence(&f, 2.0, 0.2, dim).map_err(err)?;
    let dev = (0..dim)
        .map(|n| (rho.population(n) - rec.probs()[n]).abs())
        .fold(0.0, f64::max);
    check(dev <= 1e-8, format!("max |p_n - recurrence| = {dev:.2e} (limit 1e-8)"))
}

fn c2_asymptotic_q() -> Outcome {
    let f = NonlinearFunction::preset("x-1").map_err(err)?;
    let d = ncl_recurrence_from(&f, 1e4, 0.0, 800, 1).map_err(err)?;
    let q = d.mandel_q().map_err(err)?;
    check((-0.85..=-0.75).contains(&q), format!("Q = {q:.5} (want [-0.85, -0.75])"))
}

fn c3_power_law() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, dim) in [(1u32, 600usize), (2, 120)] {
        let f = NonlinearFunction::Power { k };
        let q = ncl_recurrence(&f, 1e6, 0.0, dim)
            .and_then(|d| d.mandel_q())
            .map_err(err)?;
        let want = -4.0 * k as f64 / (4.0 * k as f64 + 1.0);
        ok &= (q - want).abs() <= 0.1;
        parts.push(format!("k={k}: Q = {q:.4} vs {want:.4}"));
    }
    check(ok, format!("{} (limit 0.1)", parts.join(", ")))
}

fn projector_setup(dim: usize) -> Result<(ProjectorGadget, MasterEquation, DensityMatrix), String> {
    let y = coherent_state(C64::new(3.0, 0.0), dim).map_err(err)?;
    let g = ProjectorGadget::new(fock_state(2, dim).map_err(err)?, y.clone(), 2).map_err(err)?;
    let me = MasterEquation::new(rates(0.0, 1.0, 0.0, 0.0), projector_lindblad(&g, dim).map_err(err)?)
        .map_err(err)?;
    Ok((g, me, y.to_density()))
}

fn c4_fidelity_prediction(c: &mut Collected) -> Outcome {
    let (g, me, rho0) = projector_setup(56)?;
    let s = evolve_to_steady(&me, &rho0, &SteadyOptions::default()).map_err(err)?;
    c.extend("C4 evolve_to_steady", [s.diagnostics]);
    let fidelity = s.state.population(2);
    let want = steady_fidelity_prediction(&g, &rho0).map_err(err)?;
    let dev = (fidelity - want).abs();
    check(
        s.converged && dev <= 1e-4,
        format!("fidelity {fidelity:.6} vs prediction {want:.6}, |diff| = {dev:.2e} (limit 1e-4), converged = {}", s.converged),
    )
}

fn c5_decay_rate(c: &mut Collected) -> Outcome {
    let (g, me, rho0) = projector_setup(56)?;
    let ge = gamma_eff(&g, 1.0);
    // Index 40 sits at gamma_eff t = 10.
    let grid = linear_grid(0.0, 25.0 / ge, 101);
    let opts = PropagateOptions {
        tol: 1e-12,
        ..Default::default()
    };
    let traj = evolve::propagate(&me, &rho0, &grid, &opts).map_err(err)?;
    c.extend("C5 propagate", traj.diagnostics.iter().copied());
    let fit = decay_rate_fit(&traj, &g).map_err(err)?;
    let at10 = fit.residuals[40].1;
    let ratio = fit.rate / ge;
    check(
        (0.5..=2.0).contains(&ratio) && at10 < 1e-3,
        format!("rate {:.4e} vs gamma_eff {ge:.4e} (ratio {ratio:.3}), residual at gamma_eff t = 10: {at10:.2e} (limit 1e-3)", fit.rate),
    )
}

fn c6_fig1a(c: &mut Collected) -> Outcome {
    let (_, r) = preset("fig1a", "")?.remove(0);
    c.series("C6 fig1a", &r);
    let mut peaks = Vec::new();
    for p in &r.points {
        let s = p.outcome.as_ref().map_err(err)?.as_series().ok_or("not a series")?;
        let i = s.max_fidelity_index().ok_or("no fidelity")?;
        peaks.push((p.sweep_value.unwrap(), s.reports[i].fidelity.unwrap(), s.axis[i]));
    }
    let up = peaks.windows(2).all(|w| w[1].1 > w[0].1);
    let faster = peaks.windows(2).all(|w| w[1].2 < w[0].2);
    let detail = peaks
        .iter()
        .map(|(a, f, t)| format!("alpha={a}: F={f:.4} at Gamma t={t:.3}"))
        .collect::<Vec<_>>()
        .join("; ");
    check(up && faster && peaks.len() == 4, detail)
}

fn c7_fig1c(c: &mut Collected) -> Outcome {
    let (_, r) = preset("fig1c", "")?.remove(0);
    c.series("C7 fig1c", &r);
    let mut mins = Vec::new();
    for p in &r.points {
        let s = p.outcome.as_ref().map_err(err)?.as_series().ok_or("not a series")?;
        let i = s.min_q_index().ok_or("no Q")?;
        mins.push((p.sweep_value.unwrap(), s.reports[i].mandel_q.unwrap()));
    }
    let ok = mins.len() == 4
        && mins.iter().all(|m| m.1 < 0.0)
        && mins.windows(2).all(|w| w[1].1 < w[0].1);
    let detail = mins
        .iter()
        .map(|(a, q)| format!("alpha={a}: min Q={q:.4}"))
        .collect::<Vec<_>>()
        .join("; ");
    check(ok, detail)
}

fn c8_fig2a() -> Outcome {
    let fams = preset("fig2a", "[5.0, 150.0]")?;
    let mut at5 = Vec::new();
    let mut at150 = Vec::new();
    for (_, r) in &fams {
        for p in &r.points {
            let (q, ..) = p.outcome.as_ref().map_err(err)?.stationary().ok_or("not stationary")?;
            let q = q.ok_or("Q undefined")?;
            if p.sweep_value == Some(5.0) {
                at5.push(q);
            } else {
                at150.push(q);
            }
        }
    }
    let spread = |v: &[f64]| {
        v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let (s5, s150) = (spread(&at5), spread(&at150));
    check(
        at150.len() == 3 && at150.iter().all(|q| *q <= -0.5) && s150 < s5,
        format!("Q(150) for eps 1,5,10 = {at150:.4?}; spread {s150:.4} at 150 vs {s5:.4} at 5"),
    )
}

fn random_density(dim: usize, rng: &mut ChaCha8Rng) -> Result<DensityMatrix, String> {
    let m = FockOperator::from_fn(dim, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
    .map_err(err)?;
    let pos = m.try_matmul(&m.adjoint()).map_err(err)?;
    DensityMatrix::from_operator_normalized(pos).map_err(err)
}

fn c9_approximate_equation() -> Outcome {
    let dim = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let a = fock::annihilation(dim).map_err(err)?;
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let f = NonlinearFunction::preset(if i % 2 == 0 { "x-1" } else { "(x-1)^2" }).map_err(err)?;
        let r = rates(rng.random_range(0.1..2.0), rng.random_range(0.1..2.0), 0.0, rng.random_range(-2.0..2.0));
        let me = ncl_me(&f, dim, r)?;
        let rho = random_density(dim, &mut rng)?;
        let full = liouvillian::rhs(&me, &rho).map_err(err)?;
        let approx = approximate_rhs(&me, &f, &rho).map_err(err)?;
        let fop = fock::diagonal_function_operator(&f, dim).map_err(err)?;
        let dc = rho.op().commutator(&fop).and_then(|x| x.commutator(&fop)).map_err(err)?;
        let dc = &(&a * &dc) * &a.adjoint();
        let diff = &(&full - &approx) + &dc.scale(C64::new(me.gamma_nonlinear(), 0.0));
        worst = worst.max(diff.frobenius_norm());
    }
    let f = NonlinearFunction::preset("x-1").map_err(err)?;
    let dim = 30;
    let me = ncl_me(&f, dim, rates(1.0, 1.0, 0.0, 3.0))?;
    let s = approximate_steady_state(&me, &f, ApproximateMethod::Nullspace { cap: 64 }).map_err(err)?;
    let rec = ncl_recurrence(&f, 3.0, 1.0, dim).map_err(err)?;
    let dev = (0..dim)
        .map(|n| (s.state.population(n) - rec.probs()[n]).abs())
        .fold(0.0, f64::max);
    check(
        worst <= 1e-10 && dev <= 1e-8,
        format!("identity residual {worst:.2e} (limit 1e-10); steady diagonal vs recurrence {dev:.2e} (limit 1e-8)"),
    )
}

fn c10_thermal_rescue() -> Outcome {
    let dim = 48;
    let f = NonlinearFunction::preset("(x-1)^3").map_err(err)?;
    let grid: Vec<f64> = (1..=40).map(|i| i as f64 * 0.25).collect();
    let mut qs = Vec::new();
    for &nbar in &grid {
        qs.push(thermal_recurrence(&f, nbar, 0.2, dim).and_then(|d| d.mandel_q()).map_err(err)?);
    }
    let (imin, qmin) = qs
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let interior = imin > 0 && imin + 1 < grid.len();
    let nbar = grid[imin];
    let me = ncl_me(&f, dim, rates(1.0, 0.2, nbar, 0.0))?;
    let rho = steady_state_nullspace(&me).map_err(err)?;
    let rec = thermal_recurrence(&f, nbar, 0.2, dim).map_err(err)?;
    let dev = (0..dim)
        .map(|n| (rho.population(n) - rec.probs()[n]).abs())
        .fold(0.0, f64::max);
    check(
        qmin < 0.0 && interior && dev <= 1e-8,
        format!("min Q = {qmin:.4} at nbar = {nbar} (grid 0.25..10); nullspace vs recurrence at that nbar {dev:.2e}"),
    )
}

fn c11_invariants(c: &mut Collected) -> Outcome {
    // Cross-solver checks where evolution and the null space both apply.
    let mut cross = Vec::new();
    let f = NonlinearFunction::preset("x-1").map_err(err)?;
    for (label, dim, r) in [
        ("ncl drive", 24, rates(0.2, 1.0, 0.0, 2.0)),
        ("ncl thermal", 20, rates(1.0, 0.2, 1.0, 0.0)),
    ] {
        let me = ncl_me(&f, dim, r)?;
        let vac = fock_state(0, dim).map_err(err)?.to_density();
        let e = evolve_to_steady(&me, &vac, &SteadyOptions::default()).map_err(err)?;
        c.extend(&format!("C11 {label}"), [e.diagnostics]);
        let n = steady_state_nullspace(&me).map_err(err)?;
        let d = e.state.trace_distance(&n).map_err(err)?;
        cross.push((label, d, e.converged));
    }
    let mut worst = [0.0f64; 3];
    let mut top: f64 = 0.0;
    let mut offenders = Vec::new();
    for (label, d) in &c.diagnostics {
        worst[0] = worst[0].max(d.trace_error);
        worst[1] = worst[1].max(d.hermiticity_error);
        worst[2] = worst[2].max(-d.min_eigenvalue);
        top = top.max(d.top_population);
        if d.trace_error > 1e-8 || d.hermiticity_error > 1e-10 || d.min_eigenvalue < -1e-8 || d.top_population > TOP_LEVEL_LIMIT {
            offenders.push(label.clone());
        }
    }
    offenders.dedup();
    let cross_ok = cross.iter().all(|(_, d, conv)| *d <= 1e-7 && *conv);
    let detail = format!(
        "{} records; max trace error {:.1e}, hermiticity {:.1e}, negativity {:.1e}, top population {:.1e}; cross-solver {}{}",
        c.diagnostics.len(),
        worst[0],
        worst[1],
        worst[2],
        top,
        cross
            .iter()
            .map(|(l, d, _)| format!("{l} {d:.1e}"))
            .collect::<Vec<_>>()
            .join(", "),
        if offenders.is_empty() { String::new() } else { format!("; violations in {offenders:?}") }
    );
    check(offenders.is_empty() && cross_ok && !c.diagnostics.is_empty(), detail)
}

fn main() {
    let mut collected = Collected::default();
    let mut failures = 0;
    let mut run = |id: &str, name: &str, limit: Option<Duration>, f: &mut dyn FnMut(&mut Collected) -> Outcome| {
        let start = Instant::now();
        let outcome = f(&mut collected);
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let (pass, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "{} {id} {name}: {detail} [{:.2} s{}{}]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.map(|l| format!(", limit {} s", l.as_secs())).unwrap_or_default(),
            if in_time { "" } else { ", over time" }
        );
    };
    let secs = |s| Some(Duration::from_secs(s));
    run("C1", "thermal recurrence exactness", secs(5), &mut |_| c1_thermal_recurrence());
    run("C2", "asymptotic Q for x-1", secs(1), &mut |_| c2_asymptotic_q());
    run("C3", "power-law asymptotics", secs(1), &mut |_| c3_power_law());
    run("C4", "steady fidelity closed form", secs(30), &mut c4_fidelity_prediction);
    run("C5", "subspace decay rate", secs(60), &mut c5_decay_rate);
    run("C6", "fidelity peak ordering", secs(120), &mut c6_fig1a);
    run("C7", "sub-Poissonian transient", secs(300), &mut c7_fig1c);
    run("C8", "loss robustness", secs(300), &mut |_| c8_fig2a());
    run("C9", "approximate equation consistency", secs(10), &mut |_| c9_approximate_equation());
    run("C10", "thermal rescue", secs(30), &mut |_| c10_thermal_rescue());
    run("C11", "invariant suite", None, &mut c11_invariants);
    println!("acceptance: {} of 11 criteria passed", 11 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
