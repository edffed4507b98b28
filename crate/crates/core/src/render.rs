//! SVG line charts with detected regions and slope labels drawn on top.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{LabeledRegion, SlopeLabel};
use crate::sigproc::Signal;

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("{width}x{height} canvas leaves no room inside {margin}px margins")]
    SpecTooSmall { width: u32, height: u32, margin: u32 },
    #[error("index {index} is outside a signal of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    pub width: u32,
    pub height: u32,
    pub margin: u32,
    pub show_regions: bool,
    pub show_labels: bool,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec { width: 800, height: 400, margin: 40, show_regions: true, show_labels: true }
    }
}

const LINE_COLOR: &str = "#1f4e79";
const REGION_COLOR: &str = "#e8833a";
const REGION_OPACITY: f64 = 0.2;
const FONT_SIZE: u32 = 12;

/// Maps data coordinates onto the plot area, y pointing up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewport {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
}

impl Viewport {
    pub fn new(signal: &Signal, spec: &RenderSpec) -> Self {
        let xs = signal.xs();
        let (y0, y1) = signal.ys().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)));
        let m = f64::from(spec.margin);
        Viewport {
            x0: xs[0],
            x1: xs[xs.len() - 1],
            y0,
            y1,
            left: m,
            right: f64::from(spec.width) - m,
            top: m,
            bottom: f64::from(spec.height) - m,
        }
    }

    pub fn x(&self, x: f64) -> f64 {
        self.left + (x - self.x0) / (self.x1 - self.x0) * (self.right - self.left)
    }

    /// A flat signal sits on the vertical middle of the plot area.
    pub fn y(&self, y: f64) -> f64 {
        if self.y1 == self.y0 {
            return (self.top + self.bottom) / 2.0;
        }
        self.bottom - (y - self.y0) / (self.y1 - self.y0) * (self.bottom - self.top)
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn check_index(index: usize, len: usize) -> Result<(), RenderError> {
    if index < len {
        Ok(())
    } else {
        Err(RenderError::IndexOutOfRange { index, len })
    }
}

pub fn render_svg(
    signal: &Signal,
    regions: &[LabeledRegion],
    labels: &[SlopeLabel],
    spec: &RenderSpec,
) -> Result<String, RenderError> {
    if spec.width <= 2 * spec.margin || spec.height <= 2 * spec.margin {
        return Err(RenderError::SpecTooSmall { width: spec.width, height: spec.height, margin: spec.margin });
    }
    let n = signal.len();
    for r in regions {
        check_index(r.start_index.max(r.end_index), n)?;
    }
    for l in labels {
        check_index(l.start_index.max(l.end_index), n)?;
    }
    let vp = Viewport::new(signal, spec);
    let xs = signal.xs();
    let ys = signal.ys();

    let mut svg = String::new();
    // fmt::Write on a String never fails
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = spec.width,
        h = spec.height
    );
    if spec.show_regions {
        let _ = writeln!(svg, r#"<g class="regions">"#);
        for r in regions {
            let (a, b) = (vp.x(xs[r.start_index]), vp.x(xs[r.end_index]));
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{REGION_COLOR}" fill-opacity="{REGION_OPACITY}"/>"#,
                a,
                vp.top,
                b - a,
                vp.bottom - vp.top
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="{FONT_SIZE}" text-anchor="middle">{}</text>"#,
                (a + b) / 2.0,
                vp.top + f64::from(FONT_SIZE),
                escape(r.top_word())
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    let mut d = String::new();
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, vp.x(x), vp.y(y));
    }
    let _ = writeln!(svg, r#"<path d="{d}" fill="none" stroke="{LINE_COLOR}" stroke-width="1.5"/>"#);
    if spec.show_labels {
        let _ = writeln!(svg, r#"<g class="labels">"#);
        for l in labels {
            let mx = (xs[l.start_index] + xs[l.end_index]) / 2.0;
            let my = (ys[l.start_index] + ys[l.end_index]) / 2.0;
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="{FONT_SIZE}" text-anchor="middle">{} {}</text>"#,
                vp.x(mx),
                vp.y(my) - 6.0,
                escape(&l.adjective),
                escape(&l.verb)
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
