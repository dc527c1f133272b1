//! Deterministic SVG drawings of planar flows.

use std::fmt::Write;

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::model::{Flow, VertexKind};

/// Longer side of the drawing in SVG units.
const CANVAS: f64 = 512.0;
const MARGIN: f64 = 0.05;
const TERMINAL_RADIUS: f64 = 2.0;
const BRANCHING_RADIUS: f64 = 1.0;
const MAX_STROKE: f64 = 3.0;

/// Edges as lines with width proportional to `c(|m|)` (the widest is
/// `3` units), terminals as filled circles of radius 2 and branching points
/// as open circles of radius 1. The output depends only on the input.
pub fn render_svg(flow: &Flow, cost: &CostModel) -> Result<String> {
    let d = flow.dimension().unwrap_or(2);
    if d != 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    if let Some(v) = flow.vertices.iter().find(|v| v.point.len() != 2) {
        return Err(Error::UnsupportedDimension(v.point.len()));
    }
    let xs = flow.vertices.iter().map(|v| v.point[0]);
    let ys = flow.vertices.iter().map(|v| v.point[1]);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let (x0, x1, y0, y1) = if flow.vertices.is_empty() {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        (x0, x1, y0, y1)
    };
    let span = (x1 - x0).max(y1 - y0);
    let scale = if span > 0.0 {
        CANVAS * (1.0 - 2.0 * MARGIN) / span
    } else {
        1.0
    };
    let pad = CANVAS * MARGIN;
    let width = (x1 - x0) * scale + 2.0 * pad;
    let height = (y1 - y0) * scale + 2.0 * pad;
    let map = |p: &[f64]| (pad + (p[0] - x0) * scale, pad + (y1 - p[1]) * scale);

    let widest = flow.edges.iter().map(|e| cost.c(e.mass)).fold(0.0f64, f64::max);
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width:.3} {height:.3}" width="{width:.3}" height="{height:.3}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(out, r#"<g stroke="black" stroke-linecap="round">"#).unwrap();
    for e in &flow.edges {
        let (Some(a), Some(b)) = (flow.vertex(&e.from), flow.vertex(&e.to)) else {
            continue;
        };
        let (ax, ay) = map(&a.point);
        let (bx, by) = map(&b.point);
        let w = if widest > 0.0 {
            MAX_STROKE * cost.c(e.mass) / widest
        } else {
            0.0
        };
        writeln!(
            out,
            r#"<line x1="{ax:.3}" y1="{ay:.3}" x2="{bx:.3}" y2="{by:.3}" stroke-width="{w:.3}"/>"#
        )
        .unwrap();
    }
    writeln!(out, "</g>").unwrap();
    for v in &flow.vertices {
        let (x, y) = map(&v.point);
        match v.kind {
            VertexKind::Terminal => writeln!(
                out,
                r#"<circle cx="{x:.3}" cy="{y:.3}" r="{TERMINAL_RADIUS:.3}" fill="black"/>"#
            ),
            VertexKind::Branching => writeln!(
                out,
                r#"<circle cx="{x:.3}" cy="{y:.3}" r="{BRANCHING_RADIUS:.3}" fill="white" stroke="black" stroke-width="0.5"/>"#
            ),
        }
        .unwrap();
    }
    out.push_str("</svg>\n");
    Ok(out)
}
