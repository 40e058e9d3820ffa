//! Minimal static SVG line plots.

use std::fmt::Write;
use std::io;
use std::path::Path;

use crate::results::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

impl Scale {
    fn name(self) -> &'static str {
        match self {
            Scale::Linear => "linear",
            Scale::Log => "log",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub y_scale: Scale,
    pub series: Vec<Series>,
}

const W: f64 = 720.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        let v = (t * 1e9).round() / 1e9;
        out.push(if v == 0.0 { 0.0 } else { v });
        t += step;
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LinePlot {
    fn y_value(&self, y: f64) -> Option<f64> {
        match self.y_scale {
            Scale::Linear => y.is_finite().then_some(y),
            Scale::Log => (y > 0.0 && y.is_finite()).then(|| y.log10()),
        }
    }

    pub fn to_svg(&self) -> String {
        let xs: Vec<f64> = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).filter(|x| x.is_finite()).collect();
        let ys: Vec<f64> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().filter_map(|p| self.y_value(p.1)))
            .collect();
        let range = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = range(&xs);
        let (mut y0, mut y1) = range(&ys);
        if self.y_scale == Scale::Log {
            y0 = y0.floor();
            y1 = y1.ceil().max(y0 + 1.0);
        }
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let py = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" data-x-scale="linear" data-y-scale="{}">"#,
            self.y_scale.name()
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );

        let _ = writeln!(s, r#"<g class="x-axis" data-scale="linear" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, TOP + ph, LEFT + pw, TOP + ph);
        for t in nice_ticks(x0, x1) {
            let x = px(t);
            let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{t}</text>"#, TOP + ph + 20.0);
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            H - 15.0,
            escape(&self.x_label)
        );
        s.push_str("</g>\n");

        let _ = writeln!(
            s,
            r#"<g class="y-axis" data-scale="{}" font-family="sans-serif" font-size="12">"#,
            self.y_scale.name()
        );
        let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, TOP + ph);
        let ticks: Vec<(f64, String)> = match self.y_scale {
            Scale::Linear => nice_ticks(y0, y1).into_iter().map(|t| (t, format!("{t}"))).collect(),
            Scale::Log => (y0 as i32..=y1 as i32).map(|e| (e as f64, format!("1e{e}"))).collect(),
        };
        for (t, label) in ticks {
            let y = py(t);
            let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
            let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#dddddd"/>"##, LEFT + pw);
            let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 8.0, y + 4.0);
        }
        let _ = writeln!(
            s,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        s.push_str("</g>\n");

        for (i, series) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
            for &(x, y) in &series.points {
                match self.y_value(y) {
                    Some(v) if x.is_finite() => segments.last_mut().unwrap().push((px(x), py(v))),
                    _ => segments.push(Vec::new()),
                }
            }
            let _ = writeln!(s, r#"<g class="series" data-label="{}">"#, escape(&series.label));
            for seg in segments.iter().filter(|s| !s.is_empty()) {
                let pts: Vec<String> = seg.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                    pts.join(" ")
                );
                for (x, y) in seg {
                    let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
                }
            }
            let ly = TOP + 10.0 + 20.0 * i as f64;
            let lx = LEFT + pw + 15.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
                lx + 20.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
                lx + 26.0,
                ly + 4.0,
                escape(&series.label)
            );
            s.push_str("</g>\n");
        }
        s.push_str("</svg>\n");
        s
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        write_atomic(path, self.to_svg().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plot(scale: Scale) -> LinePlot {
        LinePlot {
            title: "BER".into(),
            x_label: "SNR (dB)".into(),
            y_label: "BER".into(),
            y_scale: scale,
            series: vec![Series {
                label: "ddpm / awgn".into(),
                points: vec![(-25.0, 0.5), (-15.0, 0.2), (-5.0, 0.0), (0.0, 1e-3)],
            }],
        }
    }

    #[test]
    fn log_axis_is_declared() {
        let svg = plot(Scale::Log).to_svg();
        assert!(svg.contains(r#"data-y-scale="log""#));
        assert!(svg.contains(r#"<g class="y-axis" data-scale="log""#));
        assert!(svg.contains(">1e-3<"));
        // the zero BER point splits the line instead of being drawn
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn linear_axis() {
        let svg = plot(Scale::Linear).to_svg();
        assert!(svg.contains(r#"data-y-scale="linear""#));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn ticks_cover_range() {
        assert_eq!(nice_ticks(-25.0, -5.0), vec![-25.0, -20.0, -15.0, -10.0, -5.0]);
        assert_eq!(nice_ticks(0.0, 1.0), vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
    }
}
