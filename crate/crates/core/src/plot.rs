//! A tiny SVG writer for curves and point clouds.

use std::fmt::Write as _;

use crate::Vec2;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    /// Closed polyline.
    Loop,
    /// Open polyline.
    Line,
    Points,
}

#[derive(Debug, Clone)]
struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    style: Style,
}

/// Accumulates series, then renders them with equal axis scaling
/// (`equal_aspect`) or independent scaling.
#[derive(Debug, Clone)]
pub struct Plot {
    title: String,
    width: f64,
    height: f64,
    equal_aspect: bool,
    series: Vec<Series>,
}

impl Plot {
    pub fn new(title: &str) -> Self {
        Plot {
            title: title.to_string(),
            width: 640.0,
            height: 640.0,
            equal_aspect: true,
            series: Vec::new(),
        }
    }

    pub fn size(mut self, width: f64, height: f64) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn equal_aspect(mut self, yes: bool) -> Self {
        self.equal_aspect = yes;
        self
    }

    pub fn curve(&mut self, label: &str, points: &[Vec2], style: Style) -> &mut Self {
        self.xy(label, points.iter().map(|p| (p.x, p.y)).collect(), style)
    }

    pub fn xy(&mut self, label: &str, points: Vec<(f64, f64)>, style: Style) -> &mut Self {
        self.series.push(Series {
            label: label.to_string(),
            points: points.into_iter().filter(|(x, y)| x.is_finite() && y.is_finite()).collect(),
            style,
        });
        self
    }

    pub fn render(&self) -> String {
        let margin = 40.0;
        let (w, h) = (self.width, self.height);
        let all = self.series.iter().flat_map(|s| s.points.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-12 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let inner_w = w - 2.0 * margin;
        let inner_h = h - 2.0 * margin;
        let mut sx = inner_w / (x1 - x0);
        let mut sy = inner_h / (y1 - y0);
        if self.equal_aspect {
            sx = sx.min(sy);
            sy = sx;
        }
        let ox = margin + 0.5 * (inner_w - sx * (x1 - x0));
        let oy = margin + 0.5 * (inner_h - sy * (y1 - y0));
        let px = |x: f64| ox + sx * (x - x0);
        let py = |y: f64| h - oy - sy * (y - y0);

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
            w / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{margin}" y="{margin}" width="{inner_w}" height="{inner_h}" fill="none" stroke="#cccccc"/>"##
        );
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            match s.style {
                Style::Points => {
                    for &(x, y) in &s.points {
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{:.3}" cy="{:.3}" r="2" fill="{color}"/>"#,
                            px(x),
                            py(y)
                        );
                    }
                }
                Style::Loop | Style::Line => {
                    let tag = if s.style == Style::Loop { "polygon" } else { "polyline" };
                    let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.3},{:.3}", px(x), py(y))).collect();
                    let _ = writeln!(
                        out,
                        r#"<{tag} points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                        pts.join(" ")
                    );
                }
            }
            let ly = margin + 16.0 * (i as f64 + 1.0);
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
                margin + 6.0,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
