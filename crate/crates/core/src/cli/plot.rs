//! Standalone SVG figures, written as plain text so the output is
//! byte-for-byte reproducible.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::controller::SimulationLog;
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

const COLORS: [&str; 2] = ["#1f4fd8", "#d62728"];

/// Round-number tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|k| k * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let s = format!("{:.3}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Data range padded so flat series still get a visible band.
fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo < 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }

    fn open(&self, title: &str, xlabel: &str, ylabel: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(
            s,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{title}</text>"#,
            WIDTH / 2.0
        );
        let (x0, x1) = (LEFT, WIDTH - RIGHT);
        let (y0, y1) = (HEIGHT - BOTTOM, TOP);
        let _ = writeln!(
            s,
            r#"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"#
        );
        for t in ticks(self.x.0, self.x.1) {
            let p = self.px(t);
            let _ = writeln!(
                s,
                r#"<line x1="{p:.2}" y1="{y0:.2}" x2="{p:.2}" y2="{:.2}" stroke="black"/><text x="{p:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                y0 + 5.0,
                y0 + 18.0,
                tick_label(t)
            );
        }
        for t in ticks(self.y.0, self.y.1) {
            let p = self.py(t);
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{p:.2}" x2="{x1:.2}" y2="{p:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                x0,
                x0 - 8.0,
                p + 4.0,
                tick_label(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{xlabel}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 12.0
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{ylabel}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0
        );
        s
    }

    fn series(&self, s: &mut String, points: &[(f64, f64)], color: &str) {
        let coords: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", self.px(*x), self.py(*y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
        if let [(x, y)] = points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                self.px(*x),
                self.py(*y)
            );
        }
    }
}

fn legend(s: &mut String, labels: &[&str]) {
    for (i, (label, color)) in labels.iter().zip(COLORS).enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = WIDTH - RIGHT - 90.0;
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{label}</text>"#,
            x + 24.0,
            x + 30.0,
            y + 4.0
        );
    }
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

/// `x₁` (blue) and `x₂` (red) against time, one point per plant step.
pub fn angles_svg(log: &SimulationLog) -> String {
    let rows: Vec<_> = log.advanced().collect();
    let shown = rows.first().map_or(0, |r| r.state.len().min(2));
    let series: Vec<Vec<(f64, f64)>> = (0..shown)
        .map(|i| rows.iter().map(|r| (r.time, r.state[i])).collect())
        .collect();
    let (tx0, tx1) = extent(rows.iter().map(|r| r.time));
    let (vy0, vy1) = extent(series.iter().flatten().map(|p| p.1));
    let frame = Frame {
        x: if rows.len() > 1 {
            (tx0, tx1)
        } else {
            padded(tx0, tx1)
        },
        y: padded(vy0, vy1),
    };
    let mut s = frame.open("Angles", "time (s)", "angle (rad)");
    for (points, color) in series.iter().zip(COLORS) {
        frame.series(&mut s, points, color);
    }
    legend(&mut s, &["x1", "x2"][..shown]);
    s.push_str("</svg>\n");
    s
}

/// Horizon against decision index as a step plot, re-solves included.
pub fn horizon_svg(log: &SimulationLog) -> String {
    let horizons: Vec<f64> = log.records.iter().map(|r| r.horizon as f64).collect();
    let mut points = Vec::with_capacity(2 * horizons.len());
    for (i, n) in horizons.iter().enumerate() {
        points.push((i as f64, *n));
        points.push((i as f64 + 1.0, *n));
    }
    let top = horizons.iter().copied().fold(0.0, f64::max);
    let frame = Frame {
        x: (0.0, horizons.len().max(1) as f64),
        y: (-0.5, top + 1.0),
    };
    let mut s = frame.open("Prediction horizon", "decision index", "N");
    frame.series(&mut s, &points, COLORS[0]);
    s.push_str("</svg>\n");
    s
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_svg_plots(log: &SimulationLog, angles: &Path, horizon: &Path) -> Result<()> {
    if log.records.is_empty() {
        return Err(Error::InvalidParameter {
            name: "log",
            reason: "nothing to plot".into(),
        });
    }
    write(angles, &angles_svg(log))?;
    write(horizon, &horizon_svg(log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{LyapunovWindowReport, SimulationStatus, StepRecord};
    use nalgebra::dvector;

    fn log(horizons: &[usize]) -> SimulationLog {
        let records = horizons
            .iter()
            .enumerate()
            .map(|(k, n)| StepRecord {
                step_index: k,
                time: 0.1 * k as f64,
                advanced: true,
                state: dvector![1.0 / (k + 1) as f64, -0.5, 0.0, 0.0],
                control: dvector![0.0, 0.0],
                horizon: *n,
                next_horizon: n.saturating_sub(1),
                resolves: 0,
                solver_iters: 1,
                converged: true,
                cost: 0.0,
                vf_terminal: 0.0,
                window_pass: true,
                solve_seconds: 0.0,
                extension: Vec::new(),
                window: LyapunovWindowReport::undefined(),
                saturated: false,
            })
            .collect();
        SimulationLog {
            records,
            final_state: dvector![0.0, 0.0, 0.0, 0.0],
            status: SimulationStatus::Completed,
        }
    }

    #[test]
    fn tick_positions() {
        assert_eq!(ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(ticks(-0.5, 6.0), vec![0.0, 2.0, 4.0, 6.0]);
        assert_eq!(tick_label(-0.0), "0");
        assert_eq!(tick_label(0.25), "0.25");
    }

    #[test]
    fn angle_plot_has_two_colored_series() {
        let svg = angles_svg(&log(&[3, 2, 1, 0]));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(COLORS[0]) && svg.contains(COLORS[1]));
        assert!(svg.contains("time (s)"));
    }

    #[test]
    fn horizon_plot_is_a_step_function() {
        let svg = horizon_svg(&log(&[2, 1, 2]));
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let points = line.split('"').nth(1).unwrap();
        // two vertices per decision
        assert_eq!(points.split(' ').count(), 6);
    }

    #[test]
    fn single_row_log_renders() {
        let l = log(&[0]);
        for svg in [angles_svg(&l), horizon_svg(&l)] {
            assert!(!svg.contains("NaN") && !svg.contains("inf"), "{svg}");
            assert!(svg.trim_end().ends_with("</svg>"));
        }
        assert_eq!(angles_svg(&l).matches("<circle").count(), 2);
    }

    #[test]
    fn output_is_deterministic() {
        let l = log(&[5, 4, 5, 3, 0]);
        assert_eq!(angles_svg(&l), angles_svg(&l));
        assert_eq!(horizon_svg(&l), horizon_svg(&l));
    }
}
