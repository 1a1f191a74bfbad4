//! Hand-emitted SVG figures: caustic drawn thick, bifurcation branches
//! thin, markers for vertices, critical points and intersections. No
//! plotting dependency; everything is drawn from the data that the sibling
//! CSV/JSON files carry.

use crate::bifurcation_tracer::{BifurcationDiagram, RegionBox};
use crate::critical_points::{Caustic, PhaseWindow, PointClass};
use crate::flow_engine::{EdgeKind, PhasePortraitGraph};
use std::fmt::Write;

struct Canvas {
    body: String,
    x_min: f64,
    y_min: f64,
    width: f64,
    height: f64,
    /// line widths scale with the view so figures look alike at any zoom
    unit: f64,
}

impl Canvas {
    fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        let width = x_max - x_min;
        let height = y_max - y_min;
        Self {
            body: String::new(),
            x_min,
            y_min,
            width,
            height,
            unit: width.max(height) / 400.0,
        }
    }

    fn polyline(&mut self, pts: &[[f64; 2]], stroke: &str, width_units: f64) {
        if pts.len() < 2 {
            return;
        }
        let mut d = String::new();
        for (i, p) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.6},{:.6} ", if i == 0 { "M " } else { "L " }, p[0], -p[1]);
        }
        let _ = writeln!(
            self.body,
            r#"<path d="{d}" fill="none" stroke="{stroke}" stroke-width="{:.6}"/>"#,
            width_units * self.unit
        );
    }

    fn circle(&mut self, p: [f64; 2], radius_units: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{:.6}" cy="{:.6}" r="{:.6}" fill="{fill}"/>"#,
            p[0],
            -p[1],
            radius_units * self.unit
        );
    }

    fn finish(self) -> String {
        format!(
            concat!(
                r#"<svg xmlns="http://www.w3.org/2000/svg" width="640" height="640" "#,
                r#"viewBox="{:.6} {:.6} {:.6} {:.6}">"#,
                "\n<rect x=\"{:.6}\" y=\"{:.6}\" width=\"{:.6}\" height=\"{:.6}\" fill=\"white\"/>\n",
                "{}",
                "</svg>\n"
            ),
            self.x_min,
            -(self.y_min + self.height),
            self.width,
            self.height,
            self.x_min,
            -(self.y_min + self.height),
            self.width,
            self.height,
            self.body
        )
    }
}

fn draw_caustic(canvas: &mut Canvas, caustic: &Caustic) {
    for arc in &caustic.arcs {
        let pts: Vec<[f64; 2]> = arc.points.iter().map(|p| p.coords()).collect();
        canvas.polyline(&pts, "#000000", 3.0);
    }
    for v in &caustic.vertices {
        canvas.circle(v.coords(), 4.0, "#000000");
    }
    if let Some(p) = caustic.point_caustic {
        canvas.circle(p.coords(), 4.0, "#000000");
    }
}

pub fn caustic_figure(caustic: &Caustic, region: &RegionBox) -> String {
    let mut canvas = Canvas::new(region.x1_min, region.x1_max, region.x2_min, region.x2_max);
    draw_caustic(&mut canvas, caustic);
    canvas.finish()
}

pub fn locus_figure(diagram: &BifurcationDiagram) -> String {
    let r = &diagram.region;
    let mut canvas = Canvas::new(r.x1_min, r.x1_max, r.x2_min, r.x2_max);
    draw_caustic(&mut canvas, &diagram.caustic);
    for b in &diagram.branches {
        canvas.polyline(&b.as_polyline(), "#bb2200", 1.2);
    }
    for i in &diagram.intersections {
        canvas.circle(i.x.coords(), 3.0, "#2255cc");
    }
    canvas.finish()
}

pub fn portrait_figure(portrait: &PhasePortraitGraph, window: &PhaseWindow) -> String {
    let mut canvas = Canvas::new(window.y1_min, window.y1_max, window.y2_min, window.y2_max);
    for e in &portrait.edges {
        let color = match e.kind {
            EdgeKind::NodeToSaddle => "#2255cc",
            EdgeKind::SaddleToSaddle => "#bb2200",
        };
        canvas.polyline(&e.samples, color, 1.4);
    }
    for n in &portrait.nodes {
        let fill = match n.class {
            PointClass::Saddle => "#bb2200",
            PointClass::UnstableNode | PointClass::StableNode => "#2255cc",
            _ => "#555555",
        };
        canvas.circle(n.y.coords(), 4.0, fill);
    }
    canvas.finish()
}
