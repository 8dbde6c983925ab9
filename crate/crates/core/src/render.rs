//! SVG snapshots of scenes and predictions.

use std::collections::HashMap;
use std::fmt::Write;

use crate::grouping::ScenePrediction;
use crate::scene::Scene;

const SIZE: f64 = 600.0;
const PAD: f64 = 40.0;
const NODE_RADIUS: f64 = 6.0;
const TICK: f64 = 16.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Maps world coordinates into the drawing square, keeping aspect ratio and
/// flipping y so it points up.
struct Frame {
    min_x: f64,
    max_y: f64,
    scale: f64,
}

impl Frame {
    fn fit(scene: &Scene) -> Self {
        let xs = scene.individuals.iter().map(|i| i.x);
        let ys = scene.individuals.iter().map(|i| i.y);
        let (min_x, max_x) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
        let (min_y, max_y) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
        let span = (max_x - min_x).max(max_y - min_y).max(1e-6);
        Frame {
            min_x,
            max_y,
            scale: (SIZE - 2.0 * PAD) / span,
        }
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        (
            PAD + (x - self.min_x) * self.scale,
            PAD + (self.max_y - y) * self.scale,
        )
    }
}

/// Renders one scene. Ground-truth group links are solid green, predicted
/// links dashed red, and each person carries a tick along their facing.
/// Output depends only on the inputs.
pub fn render_scene(scene: &Scene, prediction: Option<&ScenePrediction>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(&scene.frame_id));
    if scene.individuals.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let frame = Frame::fit(scene);
    let pos: HashMap<&str, (f64, f64)> = scene
        .individuals
        .iter()
        .map(|i| (i.id.as_str(), frame.map(i.x, i.y)))
        .collect();
    let line = |out: &mut String, a: &str, b: &str, style: &str| {
        if let (Some(&(x1, y1)), Some(&(x2, y2))) = (pos.get(a), pos.get(b)) {
            let _ = writeln!(
                out,
                r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" {style}/>"#
            );
        }
    };

    out.push_str("<g class=\"ground-truth\">\n");
    for g in scene.groups.iter().flatten() {
        for (k, a) in g.iter().enumerate() {
            for b in &g[k + 1..] {
                line(&mut out, a, b, r##"stroke="#2a9d3f" stroke-width="3""##);
            }
        }
    }
    out.push_str("</g>\n<g class=\"predicted\">\n");
    for e in prediction
        .iter()
        .flat_map(|p| &p.edges)
        .filter(|e| e.kept())
    {
        line(
            &mut out,
            &e.a,
            &e.b,
            r##"stroke="#d62828" stroke-width="1.5" stroke-dasharray="5,3""##,
        );
    }
    out.push_str("</g>\n<g class=\"people\">\n");
    for i in &scene.individuals {
        let (x, y) = pos[i.id.as_str()];
        let (tx, ty) = (x + TICK * i.theta.cos(), y - TICK * i.theta.sin());
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{tx:.2}" y2="{ty:.2}" stroke="black" stroke-width="2"/>"#
        );
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{NODE_RADIUS}" fill="white" stroke="black"><title>{}</title></circle>"#,
            escape(&i.id)
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}
