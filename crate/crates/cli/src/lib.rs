//! Command-line front end for the `nldiss` simulations.

mod csv_out;
mod figures;
mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nldiss::scenarios::{self, ResultKind, ScenarioConfig, ScenarioResult};
use nldiss::Error;
use serde_json::{json, Value};

pub use csv_out::{fmt_f64, DISTRIBUTION_HEADER, SERIES_HEADER, STEADY_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_UNCONVERGED: i32 = 3;

/// Worker-count variable for the sweep thread pool.
pub const THREADS_VAR: &str = "NLDISS_THREADS";

#[derive(Parser, Debug)]
#[command(name = "nldiss", version, about = "Nonlinear dissipation simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Propagate the master equation over a time grid.
    Evolve(RunArgs),
    /// Compute stationary states.
    Steady(RunArgs),
    /// Evaluate a closed-form stationary recurrence.
    Recurrence(RunArgs),
    /// Run a config with a `[sweep]` table, whatever its solver.
    Sweep(RunArgs),
    /// Reproduce a named figure preset.
    Figure(FigureArgs),
    /// Parse a config and check every point without solving.
    Validate {
        config: PathBuf,
    },
}

#[derive(Args, Debug)]
struct Outputs {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip SVG plots.
    #[arg(long)]
    no_svg: bool,
    /// Replace a config value, as `dotted.key=toml-value`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    config: PathBuf,
    #[command(flatten)]
    outputs: Outputs,
}

#[derive(Args, Debug)]
struct FigureArgs {
    preset: String,
    #[command(flatten)]
    outputs: Outputs,
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: error_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: EXIT_NUMERICAL,
            message: format!("I/O error: {e}"),
        }
    }
}

fn config_failure(message: String) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message,
    }
}

fn error_code(e: &Error) -> i32 {
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Err(f) = setup_threads() {
        eprintln!("error: {}", f.message);
        return f.code;
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn setup_threads() -> Result<(), Failure> {
    faer::set_global_parallelism(faer::Par::Seq);
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| config_failure(format!("{THREADS_VAR} must be a positive integer, got `{raw}`")))?;
    // A second initialization in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(cmd: Command) -> Result<i32, Failure> {
    match cmd {
        Command::Validate { config } => {
            let cfg = load_config(&config, &[])?;
            let n = scenarios::validate(&cfg)?;
            println!("{}: ok ({n} point{})", config.display(), if n == 1 { "" } else { "s" });
            Ok(EXIT_OK)
        }
        Command::Evolve(a) => run_config(a, Some("propagate"), "evolve"),
        Command::Steady(a) => run_config(a, Some("steady"), "steady"),
        Command::Recurrence(a) => run_config(a, Some("recurrence"), "recurrence"),
        Command::Sweep(a) => run_config(a, None, "sweep"),
        Command::Figure(a) => figures::run_figure(&a.preset, &a.outputs),
    }
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, Failure> {
    raw.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .filter(|(k, _)| !k.is_empty())
                .ok_or_else(|| config_failure(format!("override `{s}` is not of the form key=value")))
        })
        .collect()
}

fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<ScenarioConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_failure(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ScenarioConfig::from_toml(&text)?;
    for (k, v) in overrides {
        cfg = cfg.with_override(k, v)?;
    }
    Ok(cfg)
}

fn run_config(args: RunArgs, method: Option<&str>, command: &str) -> Result<i32, Failure> {
    let overrides = parse_overrides(&args.outputs.overrides)?;
    let cfg = load_config(&args.config, &overrides)?;
    match method {
        Some(m) if cfg.solver.method_name() != m => {
            return Err(config_failure(format!(
                "`{command}` needs solver method \"{m}\", the config has \"{}\"",
                cfg.solver.method_name()
            )))
        }
        None if cfg.sweep.is_none() => {
            return Err(config_failure("`sweep` needs a [sweep] table in the config".into()))
        }
        _ => {}
    }
    scenarios::validate(&cfg)?;
    let result = scenarios::run_sweep(&cfg)?;

    let dir = args
        .outputs
        .out
        .clone()
        .or_else(|| cfg.output.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    let stem = cfg.output.stem.clone().unwrap_or_else(|| result.name.clone());
    let mut files = Vec::new();
    write_result(&result, &dir, &stem, cfg.output.distributions, !args.outputs.no_svg, &mut files)?;
    let provenance = json!({
        "command": command,
        "overrides": overrides.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>(),
        "families": [family_provenance(&stem, &result)],
    });
    write_provenance(&dir, &stem, provenance, &mut files)?;
    report_files(&files);
    Ok(summarize(std::slice::from_ref(&result)))
}

/// Per-kind CSV tables plus an optional overview plot.
fn write_result(
    result: &ScenarioResult,
    dir: &Path,
    stem: &str,
    distributions: bool,
    plots: bool,
    files: &mut Vec<PathBuf>,
) -> std::io::Result<()> {
    let (table, suffix) = match result.kind {
        ResultKind::TimeSeries => (csv_out::series_table(result), "series"),
        ResultKind::Steady | ResultKind::Recurrence => (csv_out::steady_table(result), "steady"),
    };
    write_table(&table, &dir.join(format!("{stem}_{suffix}.csv")), files)?;
    if distributions {
        let d = csv_out::distribution_table(result);
        write_table(&d, &dir.join(format!("{stem}_distribution.csv")), files)?;
    }
    if plots {
        let chart = figures::overview_chart(result, stem);
        write_svg(&chart, &dir.join(format!("{stem}_{suffix}.svg")), files)?;
    }
    Ok(())
}

fn write_table(t: &csv_out::Table, path: &Path, files: &mut Vec<PathBuf>) -> std::io::Result<()> {
    t.write(path)?;
    files.push(path.to_path_buf());
    Ok(())
}

fn write_svg(chart: &svg::Chart, path: &Path, files: &mut Vec<PathBuf>) -> std::io::Result<()> {
    std::fs::write(path, chart.render())?;
    files.push(path.to_path_buf());
    Ok(())
}

fn family_provenance(label: &str, result: &ScenarioResult) -> Value {
    let points: Vec<Value> = result
        .points
        .iter()
        .map(|p| {
            let mut v = json!({
                "index": p.index,
                "sweep_value": p.sweep_value,
                "dim": p.dim,
            });
            match &p.outcome {
                Ok(o) => {
                    v["status"] = json!(if o.converged() { "ok" } else { "unconverged" });
                    if let scenarios::PointOutcome::Steady(s) = o {
                        v["solver"] = json!(s.solver);
                        v["residual"] = json!(s.residual);
                        if let Some(e) = s.eigen_residual {
                            v["eigen_residual"] = json!(e);
                        }
                    }
                    if let scenarios::PointOutcome::Series(s) = o {
                        v["accepted_steps"] = json!(s.accepted_steps);
                        v["rejected_steps"] = json!(s.rejected_steps);
                    }
                }
                Err(e) => {
                    v["status"] = json!("error");
                    v["error"] = json!(e.to_string());
                }
            }
            v
        })
        .collect();
    let tolerances: serde_json::Map<String, Value> = result
        .provenance
        .tolerances
        .iter()
        .map(|(k, v)| (k.clone(), json!(v)))
        .collect();
    json!({
        "label": label,
        "name": result.name,
        "sweep_parameter": result.sweep_parameter.map(|p| p.name()),
        "time_unit": result.time_unit.map(|u| u.label()),
        "config": result.provenance.config,
        "tolerances": tolerances,
        "points": points,
    })
}

fn write_provenance(dir: &Path, stem: &str, mut body: Value, files: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let path = dir.join(format!("{stem}_provenance.json"));
    body["version"] = json!(format!("nldiss-cli {}", env!("CARGO_PKG_VERSION")));
    body["files"] = json!(files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>());
    let text = serde_json::to_string_pretty(&body).map_err(std::io::Error::other)? + "\n";
    std::fs::write(&path, text)?;
    files.push(path);
    Ok(())
}

fn report_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

/// Exit code for emitted results: point errors first, then convergence.
fn summarize(results: &[ScenarioResult]) -> i32 {
    let mut code = EXIT_OK;
    for r in results {
        for (p, e) in r.errors() {
            let at = p.sweep_value.map(|v| format!(" (sweep value {v})")).unwrap_or_default();
            eprintln!("error: {} point {}{at}: {e}", r.name, p.index);
            code = code.max(error_code(e));
        }
    }
    if code != EXIT_OK {
        return code;
    }
    if results.iter().all(ScenarioResult::all_converged) {
        EXIT_OK
    } else {
        eprintln!("warning: some points did not converge; results were written anyway");
        EXIT_UNCONVERGED
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_need_an_equals_sign() {
        assert!(parse_overrides(&["dim=3".into()]).is_ok());
        assert_eq!(parse_overrides(&["dim".into()]).unwrap_err().code, EXIT_CONFIG);
        assert_eq!(parse_overrides(&["=3".into()]).unwrap_err().code, EXIT_CONFIG);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["nldiss", "bogus"]), EXIT_CONFIG);
        assert_eq!(run(["nldiss", "validate"]), EXIT_CONFIG);
        assert_eq!(run(["nldiss", "figure", "fig1a", "--bogus"]), EXIT_CONFIG);
        assert_eq!(run(["nldiss", "figure", "fig9", "--no-svg"]), EXIT_CONFIG);
        assert_eq!(run(["nldiss", "--help"]), EXIT_OK);
    }
}
