//! Ternary SVG diagrams of target cells, target boundaries and surrogate
//! level sets for three outcomes; a text table otherwise.
//!
//! Outcome 1 sits at the bottom left, outcome 2 at the top and outcome 3 at
//! the bottom right.

use std::fmt::Write as _;

use crate::error::Result;
use crate::geometry::{Distribution, SimplexPolytope};
use crate::targets::TargetLoss;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 40.0;
const CELL_FILLS: [&str; 6] = ["#fde0c5", "#e5f5e0", "#efedf5", "#fee6ce", "#deebf7", "#f7f7f7"];
pub const BOUNDARY_COLOUR: &str = "#e34a33";
pub const LEVEL_SET_COLOUR: &str = "#2166ac";

/// SVG for `n = 3`, a plain table for other outcome counts.
#[derive(Clone, Debug, PartialEq)]
pub enum Rendered {
    Svg(String),
    Table(String),
}

/// Screen coordinates of a distribution on three outcomes.
pub fn ternary_xy(p: &[f64]) -> (f64, f64) {
    let h = SIZE * 3f64.sqrt() / 2.0;
    let corners = [(0.0, h), (SIZE / 2.0, 0.0), (SIZE, h)];
    let x = p.iter().zip(&corners).map(|(w, c)| w * c.0).sum::<f64>();
    let y = p.iter().zip(&corners).map(|(w, c)| w * c.1).sum::<f64>();
    (x + MARGIN, y + MARGIN)
}

/// Vertices in angular order around their centroid.
fn polygon(vertices: &[Distribution]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = vertices.iter().map(|v| ternary_xy(v.probs())).collect();
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    pts.sort_by(|a, b| {
        let ta = (a.1 - cy).atan2(a.0 - cx);
        let tb = (b.1 - cy).atan2(b.0 - cx);
        ta.total_cmp(&tb)
    });
    pts
}

fn points_attr(pts: &[(f64, f64)]) -> String {
    pts.iter()
        .map(|(x, y)| format!("{x:.3},{y:.3}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn draw_polytope(out: &mut String, poly: &SimplexPolytope, stroke: &str, fill: &str, class: &str) {
    let pts = polygon(&poly.vertices);
    match pts.len() {
        0 => {}
        1 => {
            let _ = writeln!(
                out,
                r#"  <circle class="{class}" cx="{:.3}" cy="{:.3}" r="3.5" fill="{stroke}"/>"#,
                pts[0].0, pts[0].1
            );
        }
        2 => {
            let _ = writeln!(
                out,
                r#"  <line class="{class}" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="{stroke}" stroke-width="3"/>"#,
                pts[0].0, pts[0].1, pts[1].0, pts[1].1
            );
        }
        _ => {
            let _ = writeln!(
                out,
                r#"  <polygon class="{class}" points="{}" fill="{fill}" stroke="{stroke}" stroke-width="1"/>"#,
                points_attr(&pts)
            );
        }
    }
}

/// Cells shaded, pairwise boundaries as red segments, level sets in blue.
pub fn render(t: &TargetLoss, level_sets: &[SimplexPolytope], title: &str) -> Result<Rendered> {
    if t.outcomes() != 3 {
        return Ok(Rendered::Table(render_table(t)?));
    }
    let w = SIZE + 2.0 * MARGIN;
    let h = SIZE * 3f64.sqrt() / 2.0 + 2.0 * MARGIN;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    );
    let _ = writeln!(out, "  <title>{}</title>", escape(title));
    for r in 0..t.reports() {
        let cell = t.cell(r)?;
        let fill = CELL_FILLS[r % CELL_FILLS.len()];
        draw_polytope(&mut out, &cell.polytope, "#bdbdbd", fill, "cell");
        if let Some(c) = cell.polytope.barycenter() {
            let (x, y) = ternary_xy(c.probs());
            let _ = writeln!(
                out,
                r#"  <text x="{x:.1}" y="{y:.1}" font-size="13" text-anchor="middle">{}</text>"#,
                escape(t.label(r))
            );
        }
    }
    for a in 0..t.reports() {
        for b in a + 1..t.reports() {
            let bd = t.boundary(a, b)?;
            if bd.affine_dim().is_some_and(|d| d >= 1) {
                draw_polytope(&mut out, &bd, BOUNDARY_COLOUR, "none", "boundary");
            }
        }
    }
    for ls in level_sets {
        draw_polytope(&mut out, ls, LEVEL_SET_COLOUR, "#9ecae1", "level-set");
    }
    for (y, (dx, dy)) in [(-14.0, 16.0), (0.0, -10.0), (14.0, 16.0)].iter().enumerate() {
        let (x0, y0) = ternary_xy(Distribution::vertex(3, y).probs());
        let _ = writeln!(
            out,
            r#"  <text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">y={}</text>"#,
            x0 + dx,
            y0 + dy,
            y + 1
        );
    }
    out.push_str("</svg>\n");
    Ok(Rendered::Svg(out))
}

/// Cell vertices per report as aligned text.
pub fn render_table(t: &TargetLoss) -> Result<String> {
    let mut out = String::from("report\tvertices\n");
    for r in 0..t.reports() {
        let cell = t.cell(r)?;
        let verts = cell
            .polytope
            .vertices
            .iter()
            .map(|v| {
                let coords = v
                    .probs()
                    .iter()
                    .map(|x| format!("{x:.4}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                format!("({coords})")
            })
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(out, "{}\t{}", t.label(r), verts);
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordinal_svg_has_two_boundaries() {
        let Rendered::Svg(svg) = render(&TargetLoss::ordinal(3), &[], "ordinal").unwrap() else {
            panic!("expected svg");
        };
        assert_eq!(svg.matches(r#"class="boundary""#).count(), 2);
        assert_eq!(svg.matches(r#"class="cell""#).count(), 3);
    }

    #[test]
    fn binary_target_renders_table() {
        let r = render(&TargetLoss::abstain(0.25), &[], "abstain").unwrap();
        match r {
            Rendered::Table(t) => assert!(t.contains("abstain")),
            Rendered::Svg(_) => panic!("expected table"),
        }
    }

    #[test]
    fn corners_map_to_triangle() {
        let (x, y) = ternary_xy(&[0.0, 1.0, 0.0]);
        assert!((x - (MARGIN + SIZE / 2.0)).abs() < 1e-9 && (y - MARGIN).abs() < 1e-9);
    }
}
