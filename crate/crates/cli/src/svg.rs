//! Minimal static SVG line and bar charts.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const DASHES: [&str; 4] = ["", "2,3", "7,4", "7,3,2,3"];

#[derive(Clone, Debug)]
pub struct Line {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct BarGroup {
    pub label: String,
    /// Height per category index.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub lines: Vec<Line>,
    pub bars: Vec<BarGroup>,
    /// Highlighted points with a caption.
    pub markers: Vec<(f64, f64, String)>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    log_x: bool,
}

impl Frame {
    fn tx(&self, x: f64) -> f64 {
        let (x, a, b) = if self.log_x {
            (x.log10(), self.x0.log10(), self.x1.log10())
        } else {
            (x, self.x0, self.x1)
        };
        LEFT + (x - a) / (b - a) * (WIDTH - LEFT - RIGHT)
    }

    fn ty(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn span(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values
        .filter(|v| v.is_finite())
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((a, b)) => Some((a.min(v), b.max(v))),
        })
}

fn pad((a, b): (f64, f64)) -> (f64, f64) {
    if a == b {
        (a - 0.5, b + 0.5)
    } else {
        let m = 0.05 * (b - a);
        (a - m, b + m)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn ticks(a: f64, b: f64, log: bool) -> Vec<f64> {
    if log {
        let (lo, hi) = (a.log10().floor() as i32, b.log10().ceil() as i32);
        return (lo..=hi).map(|e| 10f64.powi(e)).filter(|t| *t >= a && *t <= b).collect();
    }
    let raw = (b - a) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (a / step).ceil() * step;
    let mut out = Vec::new();
    while t <= b + 1e-12 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

impl Chart {
    pub fn render(&self) -> String {
        let bar_count = self.bars.iter().map(|g| g.values.len()).max().unwrap_or(0);
        let xs = self
            .lines
            .iter()
            .flat_map(|l| l.points.iter().map(|p| p.0))
            .chain(self.markers.iter().map(|m| m.0))
            .filter(|x| !self.log_x || *x > 0.0);
        let ys = self
            .lines
            .iter()
            .flat_map(|l| l.points.iter().map(|p| p.1))
            .chain(self.bars.iter().flat_map(|g| g.values.iter().copied()))
            .chain(self.markers.iter().map(|m| m.1));
        let (mut x0, mut x1) = span(xs).unwrap_or((0.0, 1.0));
        if bar_count > 0 {
            x0 = x0.min(-0.5);
            x1 = x1.max(bar_count as f64 - 0.5);
        } else if !self.log_x {
            (x0, x1) = pad((x0, x1));
        } else if x0 == x1 {
            (x0, x1) = (x0 / 2.0, x1 * 2.0);
        }
        let (mut y0, y1) = pad(span(ys).unwrap_or((0.0, 1.0)));
        if !self.bars.is_empty() {
            y0 = 0.0;
        }
        let f = Frame {
            x0,
            x1,
            y0,
            y1,
            log_x: self.log_x,
        };

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            (LEFT + WIDTH - RIGHT) / 2.0,
            escape(&self.title)
        );
        let (px0, px1, py0, py1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
        let _ = writeln!(
            s,
            r#"<rect x="{px0}" y="{py0}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            px1 - px0,
            py1 - py0
        );
        let x_ticks = if bar_count > 0 {
            let step = (bar_count as f64 / 10.0).ceil().max(1.0) as usize;
            (0..bar_count).step_by(step).map(|i| i as f64).collect()
        } else {
            ticks(x0, x1, self.log_x)
        };
        for t in x_ticks {
            let x = f.tx(t);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.1}" y1="{py1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                py1 + 5.0,
                py1 + 18.0,
                tick_label(t)
            );
        }
        for t in ticks(y0, y1, false) {
            let y = f.ty(t);
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{y:.1}" x2="{px0}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                px0 - 5.0,
                px0 - 8.0,
                y + 4.0,
                tick_label(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (px0 + px1) / 2.0,
            HEIGHT - 18.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            (py0 + py1) / 2.0,
            (py0 + py1) / 2.0,
            escape(&self.y_label)
        );

        let groups = self.bars.len().max(1) as f64;
        let bw = 0.8 / groups;
        for (gi, g) in self.bars.iter().enumerate() {
            let color = COLORS[gi % COLORS.len()];
            for (i, v) in g.values.iter().enumerate() {
                let left = i as f64 - 0.4 + gi as f64 * bw;
                let (xa, xb) = (f.tx(left), f.tx(left + bw));
                let (ya, yb) = (f.ty(v.max(0.0)), f.ty(0.0));
                let _ = writeln!(
                    s,
                    r#"<rect x="{xa:.2}" y="{ya:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                    (xb - xa).max(0.1),
                    (yb - ya).max(0.0)
                );
            }
        }
        for (li, l) in self.lines.iter().enumerate() {
            let color = COLORS[(li + self.bars.len()) % COLORS.len()];
            let dash = DASHES[li % DASHES.len()];
            let pts: Vec<String> = l
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_x || *x > 0.0))
                .map(|(x, y)| format!("{:.2},{:.2}", f.tx(*x), f.ty(*y)))
                .collect();
            let dash_attr = if dash.is_empty() {
                String::new()
            } else {
                format!(r#" stroke-dasharray="{dash}""#)
            };
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash_attr} points="{}"/>"#,
                pts.join(" ")
            );
        }
        for (x, y, caption) in &self.markers {
            let (cx, cy) = (f.tx(*x), f.ty(*y));
            let _ = writeln!(
                s,
                r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="4" fill="none" stroke="black"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                cx + 6.0,
                cy - 6.0,
                escape(caption)
            );
        }

        let legend: Vec<(&str, usize)> = self
            .bars
            .iter()
            .map(|g| g.label.as_str())
            .chain(self.lines.iter().map(|l| l.label.as_str()))
            .enumerate()
            .map(|(i, l)| (l, i))
            .collect();
        for (label, i) in legend {
            let y = TOP + 10.0 + 18.0 * i as f64;
            let x = WIDTH - RIGHT + 12.0;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{:.1}" width="14" height="4" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                y - 4.0,
                COLORS[i % COLORS.len()],
                x + 20.0,
                y + 2.0,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_lines_and_labels() {
        let chart = Chart {
            title: "t".into(),
            x_label: "Γt".into(),
            y_label: "Q".into(),
            lines: (0..4)
                .map(|i| Line {
                    label: format!("α = {i}"),
                    points: vec![(0.0, 0.0), (1.0, i as f64)],
                })
                .collect(),
            ..Default::default()
        };
        let s = chart.render();
        assert_eq!(s.matches("<polyline").count(), 4);
        assert!(s.contains("Γt") && s.contains(">Q<"));
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn renders_bars_and_markers() {
        let chart = Chart {
            bars: vec![BarGroup {
                label: "a".into(),
                values: vec![0.2, 0.5, 0.3],
            }],
            markers: vec![(1.0, 0.5, "min".into())],
            ..Default::default()
        };
        let s = chart.render();
        assert_eq!(s.matches("<rect x=").count(), 3 + 1 + 1);
        assert!(s.contains("<circle"));
    }

    #[test]
    fn linear_ticks_are_round() {
        assert_eq!(ticks(0.0, 1.0, false), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(ticks(1.0, 150.0, true), vec![1.0, 10.0, 100.0]);
        assert_eq!(tick_label(0.6000000000000001), "0.6");
    }
}
