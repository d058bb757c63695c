//! SVG overlay of an original and an adapted trajectory.
//!
//! Original in blue, adapted in red, scene objects as labeled markers.

use std::fmt::Write as _;
use std::str::FromStr;

use trajedit_core::geometry::Vec3;
use trajedit_core::{Scene, Trajectory};

pub const ORIGINAL_COLOR: &str = "blue";
pub const ADAPTED_COLOR: &str = "red";

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Plane {
    /// Top-down.
    #[default]
    XY,
    XZ,
    YZ,
}

impl Plane {
    fn project(self, p: Vec3) -> (f64, f64) {
        match self {
            Plane::XY => (p[0], p[1]),
            Plane::XZ => (p[0], p[2]),
            Plane::YZ => (p[1], p[2]),
        }
    }

    fn axes(self) -> (&'static str, &'static str) {
        match self {
            Plane::XY => ("x", "y"),
            Plane::XZ => ("x", "z"),
            Plane::YZ => ("y", "z"),
        }
    }
}

impl FromStr for Plane {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "xy" => Ok(Plane::XY),
            "xz" => Ok(Plane::XZ),
            "yz" => Ok(Plane::YZ),
            _ => Err(format!("unknown plane '{s}' (expected xy, xz or yz)")),
        }
    }
}

struct Frame {
    min: (f64, f64),
    scale: f64,
    offset: (f64, f64),
}

impl Frame {
    fn fit(points: &[(f64, f64)]) -> Self {
        let (mut lo, mut hi) = (
            (f64::INFINITY, f64::INFINITY),
            (f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        for &(u, v) in points {
            lo = (lo.0.min(u), lo.1.min(v));
            hi = (hi.0.max(u), hi.1.max(v));
        }
        let span = ((hi.0 - lo.0).max(1e-9), (hi.1 - lo.1).max(1e-9));
        let scale = ((WIDTH - 2.0 * MARGIN) / span.0).min((HEIGHT - 2.0 * MARGIN) / span.1);
        // Center the drawing in the free direction.
        let offset = (
            (WIDTH - span.0 * scale) / 2.0,
            (HEIGHT - span.1 * scale) / 2.0,
        );
        Frame {
            min: lo,
            scale,
            offset,
        }
    }

    /// SVG y grows downward, so the vertical axis is flipped.
    fn map(&self, (u, v): (f64, f64)) -> (f64, f64) {
        (
            self.offset.0 + (u - self.min.0) * self.scale,
            HEIGHT - self.offset.1 - (v - self.min.1) * self.scale,
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn polyline(
    out: &mut String,
    frame: &Frame,
    plane: Plane,
    traj: &Trajectory,
    class: &str,
    color: &str,
) {
    let pts: Vec<String> = traj
        .waypoints()
        .iter()
        .map(|w| {
            let (x, y) = frame.map(plane.project(w.position()));
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(
        out,
        r#"  <polyline class="{class}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
        pts.join(" ")
    );
}

pub fn render_svg(
    original: &Trajectory,
    adapted: Option<&Trajectory>,
    scene: &Scene,
    plane: Plane,
) -> String {
    let mut pts: Vec<(f64, f64)> = original
        .positions()
        .into_iter()
        .map(|p| plane.project(p))
        .collect();
    if let Some(a) = adapted {
        pts.extend(a.positions().into_iter().map(|p| plane.project(p)));
    }
    pts.extend(scene.objects().iter().map(|o| plane.project(o.position)));
    let frame = Frame::fit(&pts);
    let (h, v) = plane.axes();

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"  <rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"  <text x="{}" y="{}" font-size="12" fill="gray">{h} →  {v} ↑</text>"#,
        MARGIN / 2.0,
        HEIGHT - MARGIN / 4.0
    );
    polyline(
        &mut out,
        &frame,
        plane,
        original,
        "original",
        ORIGINAL_COLOR,
    );
    if let Some(a) = adapted {
        polyline(&mut out, &frame, plane, a, "adapted", ADAPTED_COLOR);
    }
    let (sx, sy) = frame.map(plane.project(original.first().position()));
    let _ = writeln!(
        out,
        r#"  <circle class="start" cx="{sx:.2}" cy="{sy:.2}" r="4" fill="{ORIGINAL_COLOR}"/>"#
    );
    for o in scene.objects() {
        let (x, y) = frame.map(plane.project(o.position));
        let label = escape(&o.label);
        let _ = writeln!(
            out,
            r#"  <g class="object"><rect x="{:.2}" y="{:.2}" width="8" height="8" fill="black"/><text x="{:.2}" y="{:.2}" font-size="12">{label}</text></g>"#,
            x - 4.0,
            y - 4.0,
            x + 7.0,
            y - 6.0
        );
    }
    let _ = writeln!(
        out,
        r#"  <text x="{}" y="20" font-size="12" fill="{ORIGINAL_COLOR}">original</text>"#,
        WIDTH - 120.0
    );
    if adapted.is_some() {
        let _ = writeln!(
            out,
            r#"  <text x="{}" y="36" font-size="12" fill="{ADAPTED_COLOR}">adapted</text>"#,
            WIDTH - 120.0
        );
    }
    out.push_str("</svg>\n");
    out
}
