//! CSV tables with fixed column sets.

use std::io::Write;
use std::path::Path;

use nldiss::scenarios::{PointOutcome, ScenarioResult};
use nldiss::steady::DiagonalDistribution;

pub const SERIES_HEADER: [&str; 8] = [
    "time",
    "sweep_value",
    "mean_n",
    "variance_n",
    "mandel_q",
    "fidelity",
    "purity",
    "trace_error",
];
pub const DISTRIBUTION_HEADER: [&str; 3] = ["sweep_value", "n", "p_n"];
pub const STEADY_HEADER: [&str; 5] = ["sweep_value", "mandel_q", "mean_n", "purity", "converged"];

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// A header and rows, written in one go.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_to(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| std::io::Error::other(e.to_string()))
    }
}

pub fn series_table(result: &ScenarioResult) -> Table {
    let mut t = Table::new(&SERIES_HEADER);
    for p in &result.points {
        let Ok(PointOutcome::Series(s)) = &p.outcome else { continue };
        for ((time, r), d) in s.axis.iter().zip(&s.reports).zip(&s.diagnostics) {
            t.push(vec![
                fmt_f64(*time),
                fmt_opt(p.sweep_value),
                fmt_f64(r.mean_n),
                fmt_f64(r.variance_n),
                fmt_opt(r.mandel_q),
                fmt_opt(r.fidelity),
                fmt_f64(r.purity),
                fmt_f64(d.trace_error),
            ]);
        }
    }
    t
}

pub fn steady_table(result: &ScenarioResult) -> Table {
    let mut t = Table::new(&STEADY_HEADER);
    for p in &result.points {
        let Ok(o) = &p.outcome else { continue };
        let Some((q, mean, purity, _)) = o.stationary() else { continue };
        t.push(vec![
            fmt_opt(p.sweep_value),
            fmt_opt(q),
            fmt_f64(mean),
            fmt_f64(purity),
            o.converged().to_string(),
        ]);
    }
    t
}

pub fn push_distribution(t: &mut Table, sweep_value: Option<f64>, d: &DiagonalDistribution) {
    for (n, p) in d.probs().iter().enumerate() {
        t.push(vec![fmt_opt(sweep_value), n.to_string(), fmt_f64(*p)]);
    }
}

/// Stationary distributions, or the final-time distribution of each trajectory.
pub fn distribution_table(result: &ScenarioResult) -> Table {
    let mut t = Table::new(&DISTRIBUTION_HEADER);
    for p in &result.points {
        let Ok(o) = &p.outcome else { continue };
        match o {
            PointOutcome::Series(s) => {
                if let Some(r) = s.reports.last() {
                    push_distribution(&mut t, p.sweep_value, &r.distribution);
                }
            }
            _ => {
                if let Some((_, _, _, d)) = o.stationary() {
                    push_distribution(&mut t, p.sweep_value, d);
                }
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123456789.12345679, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn writes_header_and_rows() {
        let mut t = Table::new(&DISTRIBUTION_HEADER);
        t.push(vec!["".into(), "0".into(), fmt_f64(1.0)]);
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "sweep_value,n,p_n\r\n,0,1.0000000000000000e0\r\n");
    }
}
