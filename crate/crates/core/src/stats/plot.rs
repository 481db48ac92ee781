//! Minimal deterministic SVG charts: lines, scatter points and shaded bands.

use std::fmt::Write;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];
const MARGIN: f64 = 60.0;

#[derive(Debug, Clone)]
pub enum Mark {
    Line,
    /// Circles with per-point radius in pixels.
    Points(Vec<f64>),
    /// Filled area between `lower` and `upper`; drawn under the other marks.
    Band {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mark: Mark,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: f64,
    pub height: f64,
    pub series: Vec<Series>,
    /// Draws `y = x` across the plotting area.
    pub diagonal: bool,
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            width: 640.0,
            height: 420.0,
            series: Vec::new(),
            diagonal: false,
        }
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for s in &self.series {
            xs.extend(s.x.iter().filter(|v| v.is_finite()));
            ys.extend(s.y.iter().filter(|v| v.is_finite()));
            if let Mark::Band { lower, upper } = &s.mark {
                ys.extend(lower.iter().chain(upper).filter(|v| v.is_finite()));
            }
        }
        let span = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if lo == hi {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        let (mut x0, mut x1) = span(&xs);
        let (mut y0, mut y1) = span(&ys);
        if self.diagonal {
            x0 = x0.min(y0);
            y0 = x0;
            x1 = x1.max(y1);
            y1 = x1;
        }
        (x0, x1, y0, y1)
    }

    pub fn to_svg(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let (w, h) = (self.width, self.height);
        let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (w - 2.0 * MARGIN);
        let py = |y: f64| h - MARGIN - (y - y0) / (y1 - y0) * (h - 2.0 * MARGIN);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            w / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{m:.2}" y1="{b:.2}" x2="{r:.2}" y2="{b:.2}" stroke="black"/><line x1="{m:.2}" y1="{m:.2}" x2="{m:.2}" y2="{b:.2}" stroke="black"/>"#,
            m = MARGIN,
            b = h - MARGIN,
            r = w - MARGIN
        );
        for i in 0..=4 {
            let fx = x0 + (x1 - x0) * i as f64 / 4.0;
            let fy = y0 + (y1 - y0) * i as f64 / 4.0;
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                px(fx),
                h - MARGIN + 16.0,
                tick(fx)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                MARGIN - 6.0,
                py(fy) + 4.0,
                tick(fy)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            w / 2.0,
            h - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            h / 2.0,
            h / 2.0,
            escape(&self.y_label)
        );
        if self.diagonal {
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
                px(x0),
                py(x0),
                px(x1),
                py(x1)
            );
        }
        let ordered = self
            .series
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s.mark, Mark::Band { .. }))
            .chain(
                self.series
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| !matches!(s.mark, Mark::Band { .. })),
            );
        for (i, s) in ordered {
            let color = PALETTE[i % PALETTE.len()];
            match &s.mark {
                Mark::Band { lower, upper } => {
                    let mut pts: Vec<String> = Vec::new();
                    for (x, y) in s.x.iter().zip(upper) {
                        pts.push(format!("{:.2},{:.2}", px(*x), py(*y)));
                    }
                    for (x, y) in s.x.iter().zip(lower).rev() {
                        pts.push(format!("{:.2},{:.2}", px(*x), py(*y)));
                    }
                    let _ = writeln!(
                        out,
                        r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                        pts.join(" ")
                    );
                }
                Mark::Line => {
                    let mut d = String::new();
                    let mut pen_up = true;
                    for (x, y) in s.x.iter().zip(&s.y) {
                        if !y.is_finite() {
                            pen_up = true;
                            continue;
                        }
                        let _ = write!(
                            d,
                            "{}{:.2},{:.2} ",
                            if pen_up { "M" } else { "L" },
                            px(*x),
                            py(*y)
                        );
                        pen_up = false;
                    }
                    let _ = writeln!(
                        out,
                        r#"<path d="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                        d.trim_end()
                    );
                }
                Mark::Points(radius) => {
                    for ((x, y), r) in s.x.iter().zip(&s.y).zip(radius) {
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{color}" fill-opacity="0.6"/>"#,
                            px(*x),
                            py(*y),
                            r
                        );
                    }
                }
            }
        }
        let named: Vec<(usize, &Series)> = self
            .series
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.name.is_empty())
            .collect();
        for (row, (i, s)) in named.iter().enumerate() {
            let y = MARGIN + 14.0 * row as f64;
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                w - MARGIN - 120.0,
                y - 9.0,
                PALETTE[i % PALETTE.len()],
                w - MARGIN - 106.0,
                y,
                escape(&s.name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart() -> Chart {
        Chart::new("t <1>", "x", "y")
            .with(Series {
                name: "band".into(),
                x: vec![0.0, 1.0, 2.0],
                y: vec![],
                mark: Mark::Band {
                    lower: vec![0.0, 0.5, 1.0],
                    upper: vec![1.0, 1.5, 2.0],
                },
            })
            .with(Series {
                name: "line".into(),
                x: vec![0.0, 1.0, 2.0],
                y: vec![0.5, f64::NAN, 1.5],
                mark: Mark::Line,
            })
    }

    #[test]
    fn svg_is_deterministic_and_well_formed() {
        let a = chart().to_svg();
        assert_eq!(a, chart().to_svg());
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("t &lt;1&gt;"));
        assert_eq!(a.matches("<polygon").count(), 1);
        // The NaN point breaks the line into two subpaths.
        assert_eq!(a.matches('M').count(), 2);
    }
}
