//! Minimal standalone SVG line plots.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 540.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 395.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Solid,
    Dashed,
    Markers,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub style: Style,
}

impl Series {
    pub fn new(label: impl Into<String>, x: &[f64], y: &[f64], style: Style) -> Self {
        Self { label: label.into(), x: x.to_vec(), y: y.to_vec(), style }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
    /// Free text printed under the legend.
    pub notes: Vec<String>,
}

struct Axis {
    lo: f64,
    hi: f64,
    ticks: Vec<f64>,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if log {
            let (a, b) = (lo.floor(), hi.ceil().max(lo.floor() + 1.0));
            let ticks = (a as i64..=b as i64).map(|k| k as f64).collect();
            return Self { lo: a, hi: b, ticks, log };
        }
        if hi - lo < 1e-12 * (1.0 + lo.abs()) {
            lo -= 0.5;
            hi += 0.5;
        }
        let step = nice_step((hi - lo) / 5.0);
        let a = (lo / step).floor() * step;
        let b = (hi / step).ceil() * step;
        let n = ((b - a) / step).round() as i64;
        let ticks = (0..=n).map(|k| a + k as f64 * step).collect();
        Self { lo: a, hi: b, ticks, log }
    }

    fn label(&self, v: f64) -> String {
        if self.log {
            return format!("1e{}", v as i64);
        }
        let step = if self.ticks.len() > 1 { self.ticks[1] - self.ticks[0] } else { 1.0 };
        let digits = (-step.log10().floor()).max(0.0) as usize;
        let s = format!("{v:.digits$}");
        // Avoid "-0".
        if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
            s.trim_start_matches('-').to_string()
        } else {
            s
        }
    }
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl Plot {
    fn transform(v: f64, log: bool) -> Option<f64> {
        match (v.is_finite(), log) {
            (false, _) => None,
            (true, true) if v <= 0.0 => None,
            (true, true) => Some(v.log10()),
            (true, false) => Some(v),
        }
    }

    pub fn render(&self) -> String {
        let pts = |s: &Series| -> Vec<Option<(f64, f64)>> {
            s.x.iter()
                .zip(&s.y)
                .map(|(&x, &y)| Some((Self::transform(x, self.log_x)?, Self::transform(y, self.log_y)?)))
                .collect()
        };
        let all: Vec<Vec<Option<(f64, f64)>>> = self.series.iter().map(pts).collect();
        let flat = || all.iter().flatten().flatten();
        let xa = Axis::fit(flat().map(|p| p.0), self.log_x);
        let ya = Axis::fit(flat().map(|p| p.1), self.log_y);
        let px = |x: f64| LEFT + (x - xa.lo) / (xa.hi - xa.lo) * (RIGHT - LEFT);
        let py = |y: f64| BOTTOM - (y - ya.lo) / (ya.hi - ya.lo) * (BOTTOM - TOP);

        let mut o = String::new();
        let _ = writeln!(o, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            o,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(o, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            o,
            r#"<defs><clipPath id="area"><rect x="{LEFT}" y="{TOP}" width="{}" height="{}"/></clipPath></defs>"#,
            RIGHT - LEFT,
            BOTTOM - TOP
        );
        let _ = writeln!(
            o,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            (LEFT + RIGHT) / 2.0,
            escape(&self.title)
        );

        for &t in &xa.ticks {
            let x = px(t);
            let _ = writeln!(o, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{BOTTOM}" stroke="#e5e5e5"/>"##);
            let _ = writeln!(
                o,
                r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
                BOTTOM + 16.0,
                xa.label(t)
            );
        }
        for &t in &ya.ticks {
            let y = py(t);
            let _ = writeln!(o, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{RIGHT}" y2="{y:.2}" stroke="#e5e5e5"/>"##);
            let _ = writeln!(
                o,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                y + 4.0,
                ya.label(t)
            );
        }
        let _ = writeln!(
            o,
            r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            RIGHT - LEFT,
            BOTTOM - TOP
        );
        let _ = writeln!(
            o,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (LEFT + RIGHT) / 2.0,
            BOTTOM + 38.0,
            escape(&self.x_label)
        );
        let yc = (TOP + BOTTOM) / 2.0;
        let _ = writeln!(
            o,
            r#"<text x="18" y="{yc}" text-anchor="middle" transform="rotate(-90 18 {yc})">{}</text>"#,
            escape(&self.y_label)
        );

        let _ = writeln!(o, r#"<g clip-path="url(#area)" fill="none" stroke-width="1.5">"#);
        for (i, (s, p)) in self.series.iter().zip(&all).enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            match s.style {
                Style::Markers => {
                    for &(x, y) in p.iter().flatten() {
                        let _ = writeln!(
                            o,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" stroke="none"/>"#,
                            px(x),
                            py(y)
                        );
                    }
                }
                Style::Solid | Style::Dashed => {
                    let mut d = String::new();
                    let mut pen_down = false;
                    for q in p {
                        match q {
                            Some((x, y)) => {
                                let _ = write!(d, "{}{:.2} {:.2}", if pen_down { " L" } else { " M" }, px(*x), py(*y));
                                pen_down = true;
                            }
                            None => pen_down = false,
                        }
                    }
                    let dash = if s.style == Style::Dashed { r#" stroke-dasharray="6 4""# } else { "" };
                    let _ = writeln!(o, r#"<path d="{}" stroke="{color}"{dash}/>"#, d.trim_start());
                }
            }
        }
        let _ = writeln!(o, "</g>");

        let lx = RIGHT + 16.0;
        let mut ly = TOP + 10.0;
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            match s.style {
                Style::Markers => {
                    let _ = writeln!(o, r#"<circle cx="{}" cy="{ly}" r="3" fill="{color}"/>"#, lx + 12.0);
                }
                _ => {
                    let dash = if s.style == Style::Dashed { r#" stroke-dasharray="6 4""# } else { "" };
                    let _ = writeln!(
                        o,
                        r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                        lx + 24.0
                    );
                }
            }
            let _ = writeln!(o, r#"<text x="{}" y="{}">{}</text>"#, lx + 30.0, ly + 4.0, escape(&s.label));
            ly += 18.0;
        }
        ly += 10.0;
        for note in &self.notes {
            let _ = writeln!(o, r#"<text x="{lx}" y="{ly}">{}</text>"#, escape(note));
            ly += 16.0;
        }
        o.push_str("</svg>\n");
        o
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Plot {
        Plot {
            title: "a < b & c".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![
                Series::new("one", &[0.0, 1.0, 2.0], &[0.0, f64::NAN, 1.0], Style::Solid),
                Series::new("two", &[0.0, 2.0], &[1.0, 0.5], Style::Markers),
            ],
            notes: vec!["slope 0.5".into()],
            ..Plot::default()
        }
    }

    #[test]
    fn document_is_standalone_with_fixed_viewbox() {
        let s = sample().render();
        assert!(s.starts_with("<?xml"));
        assert!(s.contains(r#"viewBox="0 0 720 450""#));
        assert!(s.trim_end().ends_with("</svg>"));
        assert!(!s.contains("href"));
        assert!(s.contains("a &lt; b &amp; c"));
        // Tag balance for the container elements.
        for tag in ["svg", "g", "defs", "clipPath"] {
            assert_eq!(s.matches(&format!("<{tag}")).count(), s.matches(&format!("</{tag}>")).count(), "{tag}");
        }
    }

    #[test]
    fn gaps_break_the_path() {
        let s = sample().render();
        let path = s.lines().find(|l| l.starts_with("<path")).unwrap();
        assert_eq!(path.matches('M').count(), 2);
        assert!(!path.contains('L'));
    }

    #[test]
    fn log_axes_use_decades() {
        let plot = Plot {
            log_x: true,
            log_y: true,
            series: vec![Series::new("p", &[0.002, 0.1], &[1e-4, 0.3], Style::Solid)],
            ..Plot::default()
        };
        let s = plot.render();
        assert!(s.contains(">1e-3<") && s.contains(">1e-1<") && s.contains(">1e-4<"));
    }

    #[test]
    fn nice_steps() {
        assert_eq!(nice_step(0.23), 0.5);
        assert_eq!(nice_step(2.0), 2.0);
        assert_eq!(nice_step(7.0), 10.0);
    }
}
