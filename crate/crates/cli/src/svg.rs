//! Minimal SVG writer for exit figures.
//!
//! Geometry is emitted in data coordinates inside a group whose transform maps
//! them to pixels with a uniform scale; strokes are non-scaling.

use std::fmt::Write;

use ldbridge::format::{sig, sig12};

const WIDTH: f64 = 800.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stroke {
    Solid,
    Dashed,
    Dotted,
}

impl Stroke {
    fn attrs(self) -> &'static str {
        match self {
            Stroke::Solid => r##"stroke="#1f4e9c""##,
            Stroke::Dashed => r##"stroke="#b2401c" stroke-dasharray="8 5""##,
            Stroke::Dotted => r##"stroke="#444444" stroke-dasharray="2 4""##,
        }
    }

    fn class(self) -> &'static str {
        match self {
            Stroke::Solid => "true",
            Stroke::Dashed => "frozen",
            Stroke::Dotted => "barrier",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Curve {
    pub points: Vec<[f64; 2]>,
    pub stroke: Stroke,
    /// Extra `data-*` attributes, e.g. the centre of a hyperbolic arc.
    pub data: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct Marker {
    pub at: [f64; 2],
    pub label: String,
    pub class: &'static str,
}

/// Vertical barrier drawn across the full height of the view.
#[derive(Debug, Clone, Default)]
pub struct Scene {
    pub curves: Vec<Curve>,
    pub markers: Vec<Marker>,
    pub vertical_barrier: Option<f64>,
    /// Straight barrier `n . z = c`, clipped to the view.
    pub line_barrier: Option<([f64; 2], f64)>,
}

/// `(x, y)` label at four significant digits.
pub fn point_label(p: [f64; 2]) -> String {
    format!("({}, {})", sig(p[0], 4), sig(p[1], 4))
}

fn extent(scene: &Scene) -> [f64; 4] {
    let mut e = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    let mut add = |p: [f64; 2]| {
        e[0] = e[0].min(p[0]);
        e[1] = e[1].min(p[1]);
        e[2] = e[2].max(p[0]);
        e[3] = e[3].max(p[1]);
    };
    scene.curves.iter().flat_map(|c| c.points.iter()).for_each(|p| add(*p));
    scene.markers.iter().for_each(|m| add(m.at));
    if let Some(x0) = scene.vertical_barrier {
        e[0] = e[0].min(x0);
        e[2] = e[2].max(x0);
    }
    let (w, h) = (e[2] - e[0], e[3] - e[1]);
    let pad = 0.1 * w.max(h).max(1e-9);
    [e[0] - pad, e[1] - pad, e[2] + pad, e[3] + pad]
}

fn px(v: f64) -> String {
    format!("{v:.3}")
}

fn clip_line(n: [f64; 2], c: f64, e: [f64; 4]) -> Option<[[f64; 2]; 2]> {
    let mut hits = Vec::new();
    if n[1] != 0.0 {
        for x in [e[0], e[2]] {
            let y = (c - n[0] * x) / n[1];
            if y >= e[1] && y <= e[3] {
                hits.push([x, y]);
            }
        }
    }
    if n[0] != 0.0 {
        for y in [e[1], e[3]] {
            let x = (c - n[1] * y) / n[0];
            if x >= e[0] && x <= e[2] {
                hits.push([x, y]);
            }
        }
    }
    (hits.len() >= 2).then(|| [hits[0], hits[hits.len() - 1]])
}

pub fn render(scene: &Scene, title: &str) -> String {
    let e = extent(scene);
    let scale = WIDTH / (e[2] - e[0]);
    let height = (e[3] - e[1]) * scale;
    let to_px = |p: [f64; 2]| [(p[0] - e[0]) * scale, (e[3] - p[1]) * scale];

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" data-xmin="{}" data-ymin="{}" data-xmax="{}" data-ymax="{}">"#,
        sig12(e[0]),
        sig12(e[1]),
        sig12(e[2]),
        sig12(e[3]),
        w = px(WIDTH),
        h = px(height),
    );
    let _ = writeln!(s, "<title>{title}</title>");
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g transform="matrix({} 0 0 {} {} {})" fill="none" stroke-width="1.5">"#,
        sig12(scale),
        sig12(-scale),
        sig12(-e[0] * scale),
        sig12(e[3] * scale),
    );
    let line = |s: &mut String, pts: &[[f64; 2]], stroke: Stroke, data: &[(String, f64)]| {
        let coords: Vec<String> = pts.iter().map(|p| format!("{},{}", sig12(p[0]), sig12(p[1]))).collect();
        let extra: String = data.iter().map(|(k, v)| format!(r#" data-{k}="{}""#, sig12(*v))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="{}" {} vector-effect="non-scaling-stroke"{extra} points="{}"/>"#,
            stroke.class(),
            stroke.attrs(),
            coords.join(" ")
        );
    };
    if let Some(x0) = scene.vertical_barrier {
        line(&mut s, &[[x0, e[1]], [x0, e[3]]], Stroke::Dotted, &[]);
    }
    if let Some((n, c)) = scene.line_barrier {
        if let Some(seg) = clip_line(n, c, e) {
            line(&mut s, &seg, Stroke::Dotted, &[]);
        }
    }
    for c in &scene.curves {
        line(&mut s, &c.points, c.stroke, &c.data);
    }
    let _ = writeln!(s, "</g>");
    for m in &scene.markers {
        let p = to_px(m.at);
        let _ = writeln!(
            s,
            r#"<circle class="{}" cx="{}" cy="{}" r="3.5" fill="black" data-x="{}" data-y="{}"/>"#,
            m.class,
            px(p[0]),
            px(p[1]),
            sig12(m.at[0]),
            sig12(m.at[1]),
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13">{}</text>"#,
            px(p[0] + 6.0),
            px(p[1] - 6.0),
            m.label
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_deterministic_and_uniform() {
        let scene = Scene {
            curves: vec![Curve {
                points: vec![[0.0, 0.0], [1.0, 2.0]],
                stroke: Stroke::Solid,
                data: vec![],
            }],
            markers: vec![Marker {
                at: [1.0, 2.0],
                label: point_label([1.0, 2.0]),
                class: "endpoint",
            }],
            vertical_barrier: Some(1.5),
            line_barrier: None,
        };
        let a = render(&scene, "t");
        assert_eq!(a, render(&scene, "t"));
        assert!(a.contains(r#"stroke-dasharray="2 4""#));
        assert!(a.contains("(1, 2)"));
        // extent 1.5 x 2 plus 10% of 2 on each side: 1.9 x 2.4
        assert!(a.contains(r#"width="800.000" height="1010.526""#), "{a}");
    }

    #[test]
    fn clipping() {
        let seg = clip_line([1.0, 1.0], 1.0, [0.0, 0.0, 2.0, 2.0]).unwrap();
        assert_eq!(seg, [[0.0, 1.0], [1.0, 0.0]]);
    }
}
