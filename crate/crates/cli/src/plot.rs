//! Minimal deterministic SVG line plots, plus the equivalent gnuplot script.
//!
//! Output depends only on the data: fixed canvas size, fixed number
//! formatting and no timestamps.

use std::fmt::Write;

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 480.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;

pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Solid,
    Dashed,
}

/// Where gnuplot finds a series: 1-based columns of a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct DataRef {
    pub file: String,
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub style: Style,
    pub color: &'static str,
    pub points: Vec<[f64; 2]>,
    pub source: Option<DataRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub at: [f64; 2],
    pub label: String,
    pub color: &'static str,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub markers: Vec<Marker>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// About five round tick positions covering `[lo, hi]`, and the number of
/// decimals needed to print them.
pub fn ticks(lo: f64, hi: f64) -> (Vec<f64>, usize) {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    ((first..=last).map(|k| k as f64 * step).collect(), decimals)
}

impl Figure {
    fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let mut x = [f64::INFINITY, f64::NEG_INFINITY];
        let mut y = x;
        let pts = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .chain(self.markers.iter().map(|m| &m.at));
        for p in pts.filter(|p| p[0].is_finite() && p[1].is_finite()) {
            x = [x[0].min(p[0]), x[1].max(p[0])];
            y = [y[0].min(p[1]), y[1].max(p[1])];
        }
        let pad = |r: [f64; 2]| {
            if !r[0].is_finite() {
                return [-1.0, 1.0];
            }
            let w = r[1] - r[0];
            let w = if w > 0.0 { w } else { r[0].abs().max(1.0) };
            [r[0] - 0.05 * w, r[1] + 0.05 * w]
        };
        (pad(x), pad(y))
    }

    pub fn to_svg(&self) -> String {
        let (xr, yr) = self.bounds();
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - xr[0]) / (xr[1] - xr[0]) * pw;
        let sy = |y: f64| TOP + (yr[1] - y) / (yr[1] - yr[0]) * ph;
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
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let (xt, xd) = ticks(xr[0], xr[1]);
        for t in xt {
            let px = sx(t);
            let _ = writeln!(
                s,
                r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{t:.xd$}</text>"#,
                TOP + ph,
                TOP + ph + 5.0,
                TOP + ph + 18.0
            );
        }
        let (yt, yd) = ticks(yr[0], yr[1]);
        for t in yt {
            let py = sy(t);
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{t:.yd$}</text>"#,
                LEFT - 5.0,
                LEFT - 8.0,
                py + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for series in &self.series {
            let pts: Vec<String> = series
                .points
                .iter()
                .filter(|p| p[0].is_finite() && p[1].is_finite())
                .map(|p| format!("{:.2},{:.2}", sx(p[0]), sy(p[1])))
                .collect();
            let dash = match series.style {
                Style::Solid => "",
                Style::Dashed => r#" stroke-dasharray="6 4""#,
            };
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
                series.color,
                pts.join(" ")
            );
        }
        for m in &self.markers {
            let (px, py) = (sx(m.at[0]), sy(m.at[1]));
            let _ = writeln!(
                s,
                r#"<circle cx="{px:.2}" cy="{py:.2}" r="3.5" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                m.color,
                px + 6.0,
                py - 6.0,
                escape(&m.label)
            );
        }
        let longest = self
            .series
            .iter()
            .map(|s| s.label.chars().count())
            .max()
            .unwrap_or(0);
        let box_w = 40.0 + 6.6 * longest as f64;
        let x = WIDTH - RIGHT - 8.0 - box_w;
        if !self.series.is_empty() {
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{:.1}" width="{box_w:.1}" height="{:.1}" fill="white" fill-opacity="0.85" stroke="gray"/>"#,
                TOP + 4.0,
                16.0 * self.series.len() as f64 + 6.0
            );
        }
        for (k, series) in self.series.iter().enumerate() {
            let y = TOP + 20.0 + 16.0 * k as f64;
            let x = x + 6.0;
            let dash = match series.style {
                Style::Solid => "",
                Style::Dashed => r#" stroke-dasharray="6 4""#,
            };
            let _ = writeln!(
                s,
                r#"<line x1="{x:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="1.5"{dash}/><text x="{:.1}" y="{y:.1}">{}</text>"#,
                y - 4.0,
                x + 24.0,
                y - 4.0,
                series.color,
                x + 30.0,
                escape(&series.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }

    /// A gnuplot script drawing the same figure from the CSV files named in
    /// each series' [`DataRef`]; series without one are skipped.
    pub fn to_gnuplot(&self, output: &str) -> String {
        let q = |s: &str| s.replace('\'', "''");
        let mut s = String::new();
        let _ = writeln!(s, "set terminal svg size {WIDTH},{HEIGHT}");
        let _ = writeln!(s, "set output '{}'", q(output));
        let _ = writeln!(s, "set datafile separator ','");
        let _ = writeln!(s, "set key top right");
        let _ = writeln!(s, "set title '{}'", q(&self.title));
        let _ = writeln!(s, "set xlabel '{}'", q(&self.x_label));
        let _ = writeln!(s, "set ylabel '{}'", q(&self.y_label));
        for m in &self.markers {
            let _ = writeln!(
                s,
                "set label '{}' at {:e},{:e} point pt 7 offset 1,1",
                q(&m.label),
                m.at[0],
                m.at[1]
            );
        }
        let clauses: Vec<String> = self
            .series
            .iter()
            .filter_map(|series| {
                let d = series.source.as_ref()?;
                let dt = match series.style {
                    Style::Solid => 1,
                    Style::Dashed => 2,
                };
                Some(format!(
                    "'{}' every ::1 using {}:{} with lines lc rgb '{}' dt {dt} title '{}'",
                    q(&d.file),
                    d.x,
                    d.y,
                    series.color,
                    q(&series.label)
                ))
            })
            .collect();
        let _ = writeln!(s, "plot {}", clauses.join(", \\\n     "));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn figure() -> Figure {
        Figure {
            title: "a < b & c".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![Series {
                label: "line".into(),
                style: Style::Dashed,
                color: PALETTE[0],
                points: vec![[0.0, 0.0], [1.0, 2.0], [f64::NAN, 1.0]],
                source: Some(DataRef {
                    file: "d.csv".into(),
                    x: 1,
                    y: 2,
                }),
            }],
            markers: vec![Marker {
                at: [0.5, 1.0],
                label: "peak".into(),
                color: PALETTE[1],
            }],
        }
    }

    #[test]
    fn ticks_are_round() {
        let (t, d) = ticks(-0.05, 2.05);
        assert_eq!(t, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(d, 1);
        let (t, d) = ticks(0.0, 1000.0);
        assert_eq!(t.len(), 6);
        assert_eq!(d, 0);
    }

    #[test]
    fn svg_is_deterministic_and_escaped() {
        let a = figure().to_svg();
        assert_eq!(a, figure().to_svg());
        assert!(a.contains("a &lt; b &amp; c"));
        assert!(a.contains("stroke-dasharray"));
        assert!(!a.contains("NaN"));
        assert!(a.ends_with("</svg>\n"));
    }

    #[test]
    fn gnuplot_references_data() {
        let g = figure().to_gnuplot("out.svg");
        assert!(g.contains("'d.csv' every ::1 using 1:2"));
        assert!(g.contains("dt 2"));
    }

    #[test]
    fn empty_figure_still_renders() {
        let svg = Figure::default().to_svg();
        assert!(svg.starts_with("<svg"));
    }
}
