//! Figure presets: per-family tables plus figure-shaped extracts and plots.

use std::path::{Path, PathBuf};

use nldiss::scenarios::{
    self, ResultKind, ScenarioConfig, ScenarioResult, SweepParameter, TimeUnit,
};
use serde_json::json;

use crate::csv_out::{fmt_f64, fmt_opt, Table};
use crate::svg::{BarGroup, Chart, Line};
use crate::{
    family_provenance, parse_overrides, report_files, summarize, write_provenance, write_result,
    write_svg, write_table, Failure, Outputs,
};

/// Levels shown in distribution plots: up to the last one above this weight.
const PLOT_WEIGHT: f64 = 1e-3;

fn axis_label(unit: Option<TimeUnit>) -> &'static str {
    match unit {
        Some(TimeUnit::GammaNonlinear) => "γt",
        Some(TimeUnit::Absolute) => "t",
        _ => "Γt",
    }
}

fn parameter_label(p: Option<SweepParameter>) -> &'static str {
    match p {
        Some(SweepParameter::Alpha) => "α",
        Some(SweepParameter::Alpha0) => "α₀",
        Some(SweepParameter::Epsilon) => "ε = Γ/γ",
        Some(SweepParameter::Nbar) => "n̄",
        Some(SweepParameter::Omega) => "Ω",
        Some(SweepParameter::GammaLinear) => "Γ",
        Some(SweepParameter::GammaNonlinear) => "γ",
        None => "point",
    }
}

fn wide_positive(xs: &[f64]) -> bool {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(0.0, f64::max);
    lo > 0.0 && hi / lo > 100.0
}

fn value_label(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

/// Number of levels worth plotting for a set of distributions.
fn plot_levels<'a>(dists: impl Iterator<Item = &'a [f64]>) -> usize {
    dists
        .map(|p| p.iter().rposition(|x| *x > PLOT_WEIGHT).map_or(1, |i| i + 2).min(p.len()))
        .max()
        .unwrap_or(1)
}

/// Default plot for a single result: trajectories, a parameter curve or one distribution.
pub(crate) fn overview_chart(result: &ScenarioResult, title: &str) -> Chart {
    let mut chart = Chart {
        title: title.into(),
        ..Default::default()
    };
    match result.kind {
        ResultKind::TimeSeries => {
            let series: Vec<_> = result
                .points
                .iter()
                .filter_map(|p| Some((p.sweep_value, p.outcome.as_ref().ok()?.as_series()?)))
                .collect();
            let fidelity = series
                .iter()
                .any(|(_, s)| s.reports.iter().any(|r| r.fidelity.is_some()));
            chart.x_label = axis_label(result.time_unit).into();
            chart.y_label = if fidelity { "fidelity" } else { "Q" }.into();
            let mut all_x = Vec::new();
            for (v, s) in series {
                let points: Vec<(f64, f64)> = s
                    .axis
                    .iter()
                    .zip(&s.reports)
                    .filter_map(|(t, r)| Some((*t, if fidelity { r.fidelity? } else { r.mandel_q? })))
                    .collect();
                all_x.extend(points.iter().map(|p| p.0).filter(|t| *t > 0.0));
                chart.lines.push(Line {
                    label: format!("{} = {}", parameter_label(result.sweep_parameter), value_label(v)),
                    points,
                });
            }
            chart.log_x = wide_positive(&all_x);
        }
        ResultKind::Steady | ResultKind::Recurrence => {
            let rows: Vec<_> = result
                .points
                .iter()
                .filter_map(|p| Some((p.sweep_value, p.outcome.as_ref().ok()?.stationary()?)))
                .collect();
            if rows.len() > 1 && rows.iter().all(|r| r.0.is_some()) {
                let points: Vec<(f64, f64)> =
                    rows.iter().filter_map(|(v, s)| Some((v.unwrap(), s.0?))).collect();
                let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
                chart.log_x = wide_positive(&xs);
                chart.x_label = parameter_label(result.sweep_parameter).into();
                chart.y_label = "Q".into();
                chart.lines.push(Line {
                    label: "Q".into(),
                    points,
                });
            } else if let Some((v, s)) = rows.first() {
                let p = s.3.probs();
                let n = plot_levels(std::iter::once(p));
                chart.x_label = "n".into();
                chart.y_label = "p_n".into();
                chart.bars.push(BarGroup {
                    label: value_label(*v),
                    values: p[..n].to_vec(),
                });
            }
        }
    }
    chart
}

struct Run {
    label: String,
    config: ScenarioConfig,
    result: ScenarioResult,
}

impl Run {
    fn series(&self) -> impl Iterator<Item = (f64, &scenarios::SeriesPoint, usize)> {
        self.result.points.iter().filter_map(|p| {
            let s = p.outcome.as_ref().ok()?.as_series()?;
            Some((p.sweep_value.unwrap_or(f64::NAN), s, p.dim))
        })
    }

    fn stationary_q(&self) -> Vec<(f64, f64)> {
        self.result
            .points
            .iter()
            .filter_map(|p| Some((p.sweep_value?, p.outcome.as_ref().ok()?.stationary()?.0?)))
            .collect()
    }
}

pub(crate) fn run_figure(preset: &str, outputs: &Outputs) -> Result<i32, Failure> {
    let overrides = parse_overrides(&outputs.overrides)?;
    let mut configs = Vec::new();
    for fam in scenarios::preset_families(preset)? {
        let mut cfg = fam.config;
        for (k, v) in &overrides {
            cfg = cfg.with_override(k, v)?;
        }
        scenarios::validate(&cfg)?;
        configs.push((fam.label, cfg));
    }
    let mut runs = Vec::new();
    for (label, config) in configs {
        let result = scenarios::run_sweep(&config)?;
        runs.push(Run {
            label,
            config,
            result,
        });
    }

    let dir = outputs.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    std::fs::create_dir_all(&dir)?;
    let plots = !outputs.no_svg;
    let mut files = Vec::new();
    for r in &runs {
        let stem = format!("{preset}_{}", r.label);
        write_result(&r.result, &dir, &stem, r.config.output.distributions, plots, &mut files)?;
    }
    write_extract(preset, &runs, &dir, plots, &mut files)?;

    let provenance = json!({
        "command": "figure",
        "preset": preset,
        "overrides": overrides.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>(),
        "families": runs.iter().map(|r| family_provenance(&r.label, &r.result)).collect::<Vec<_>>(),
    });
    write_provenance(&dir, preset, provenance, &mut files)?;
    report_files(&files);
    let results: Vec<ScenarioResult> = runs.into_iter().map(|r| r.result).collect();
    Ok(summarize(&results))
}

fn write_extract(
    preset: &str,
    runs: &[Run],
    dir: &Path,
    plots: bool,
    files: &mut Vec<PathBuf>,
) -> std::io::Result<()> {
    let (table, chart, suffix) = match preset {
        "fig1a" => fig1_series(preset, &runs[0], true),
        "fig1c" => fig1_series(preset, &runs[0], false),
        "fig1b" => fig1_distributions(preset, &runs[0], true),
        "fig1d" => fig1_distributions(preset, &runs[0], false),
        "fig2a" => {
            let mut t = Table::new(&["alpha0", "epsilon", "mandel_q"]);
            let mut chart = q_chart(preset, "α₀");
            for r in runs {
                let eps = r.config.gamma_linear / r.config.gamma_nonlinear;
                let pts = r.stationary_q();
                for (a, q) in &pts {
                    t.push(vec![fmt_f64(*a), fmt_f64(eps), fmt_f64(*q)]);
                }
                chart.lines.push(Line {
                    label: format!("ε = {eps}"),
                    points: pts,
                });
            }
            (t, chart, "mandel_q")
        }
        "fig2b" | "fig2c" => {
            let mut t = Table::new(&["family", "alpha0", "mandel_q"]);
            let mut chart = q_chart(preset, "α₀");
            for r in runs {
                let pts = r.stationary_q();
                for (a, q) in &pts {
                    t.push(vec![r.label.clone(), fmt_f64(*a), fmt_f64(*q)]);
                }
                chart.lines.push(Line {
                    label: r.label.clone(),
                    points: pts,
                });
            }
            (t, chart, "mandel_q")
        }
        "fig2d" => {
            let mut t = Table::new(&["family", "nbar", "mandel_q"]);
            let mut chart = q_chart(preset, "n̄");
            chart.log_x = false;
            for r in runs {
                let pts = r.stationary_q();
                for (n, q) in &pts {
                    t.push(vec![r.label.clone(), fmt_f64(*n), fmt_f64(*q)]);
                }
                if r.label == "recurrence" {
                    if let Some(&(n, q)) = pts.iter().min_by(|a, b| a.1.total_cmp(&b.1)) {
                        chart.markers.push((n, q, format!("min Q = {q:.3} at n̄ = {n}")));
                    }
                    chart.lines.push(Line {
                        label: "Q(n̄)".into(),
                        points: pts,
                    });
                }
            }
            (t, chart, "mandel_q")
        }
        _ => return Ok(()),
    };
    write_table(&table, &dir.join(format!("{preset}_{suffix}.csv")), files)?;
    if plots {
        write_svg(&chart, &dir.join(format!("{preset}_{suffix}.svg")), files)?;
    }
    Ok(())
}

fn q_chart(title: &str, x_label: &str) -> Chart {
    Chart {
        title: title.into(),
        x_label: x_label.into(),
        y_label: "Q".into(),
        log_x: true,
        ..Default::default()
    }
}

/// Fidelity or Mandel Q against time, one curve per amplitude.
fn fig1_series(preset: &str, run: &Run, fidelity: bool) -> (Table, Chart, &'static str) {
    let column = if fidelity { "fidelity" } else { "mandel_q" };
    let mut t = Table::new(&["t_Gamma", "alpha", column]);
    let mut chart = Chart {
        title: preset.into(),
        x_label: "Γt".into(),
        y_label: if fidelity { "fidelity" } else { "Q" }.into(),
        log_x: !fidelity,
        ..Default::default()
    };
    for (alpha, s, _) in run.series() {
        let mut pts = Vec::new();
        for (time, r) in s.axis.iter().zip(&s.reports) {
            let v = if fidelity { r.fidelity } else { r.mandel_q };
            t.push(vec![fmt_f64(*time), fmt_f64(alpha), fmt_opt(v)]);
            if let Some(v) = v {
                pts.push((*time, v));
            }
        }
        chart.lines.push(Line {
            label: format!("α = {alpha}"),
            points: pts,
        });
    }
    (t, chart, if fidelity { "fidelity" } else { "mandel_q" })
}

/// Photon statistics at the best time of each trajectory: maximal fidelity or minimal Q.
fn fig1_distributions(preset: &str, run: &Run, fidelity: bool) -> (Table, Chart, &'static str) {
    let header: &[&str] = if fidelity {
        &["alpha", "t_Gamma", "n", "p_n"]
    } else {
        &["alpha", "t_Gamma", "n", "p_n", "poisson"]
    };
    let mut t = Table::new(header);
    let mut chart = Chart {
        title: preset.into(),
        x_label: "n".into(),
        y_label: "p_n".into(),
        ..Default::default()
    };
    let mut picked = Vec::new();
    for (alpha, s, dim) in run.series() {
        let idx = if fidelity { s.max_fidelity_index() } else { s.min_q_index() };
        let Some(i) = idx else { continue };
        let r = &s.reports[i];
        let poisson = scenarios::poisson_reference(r.mean_n, dim).ok();
        for (n, p) in r.distribution.probs().iter().enumerate() {
            let mut row = vec![fmt_f64(alpha), fmt_f64(s.axis[i]), n.to_string(), fmt_f64(*p)];
            if !fidelity {
                row.push(fmt_opt(poisson.as_ref().map(|d| d.probs()[n])));
            }
            t.push(row);
        }
        picked.push((alpha, r.distribution.probs().to_vec(), poisson));
    }
    let levels = plot_levels(picked.iter().map(|p| p.1.as_slice()));
    for (alpha, probs, poisson) in picked {
        if fidelity {
            chart.bars.push(BarGroup {
                label: format!("α = {alpha}"),
                values: probs[..levels.min(probs.len())].to_vec(),
            });
        } else {
            let line = |p: &[f64]| p.iter().enumerate().map(|(n, v)| (n as f64, *v)).collect();
            chart.lines.push(Line {
                label: format!("α = {alpha}"),
                points: line(&probs),
            });
            if let Some(d) = poisson {
                chart.lines.push(Line {
                    label: format!("Poisson, α = {alpha}"),
                    points: line(d.probs()),
                });
            }
        }
    }
    (t, chart, "distributions")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_levels_cover_the_bulk() {
        let a = [0.5, 0.4, 0.1, 1e-5, 0.0];
        assert_eq!(plot_levels(std::iter::once(&a[..])), 4);
        let b = [0.0, 0.0, 0.0, 0.0, 0.9];
        assert_eq!(plot_levels([&a[..], &b[..]].into_iter()), 5);
    }

    #[test]
    fn log_axis_only_for_wide_positive_ranges() {
        assert!(wide_positive(&[1e-4, 0.3]));
        assert!(!wide_positive(&[0.0, 0.3]));
        assert!(!wide_positive(&[1.0, 50.0]));
    }
}
