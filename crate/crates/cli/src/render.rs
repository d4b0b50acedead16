//! SVG and DOT drawings of a solved phase.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use aemod_core::planner::{NetworkInfo, PhaseResult};
use aemod_core::NodeId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Ratio at which the colour scale saturates.
pub const RATIO_CAP: f64 = 2.0;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 640.0;
const MARGIN: f64 = 80.0;
const LEGEND_H: f64 = 70.0;

const STOPS: [(f64, [u8; 3]); 3] = [(0.0, [44, 123, 182]), (0.5, [255, 255, 191]), (1.0, [215, 25, 28])];

/// Hex colour for a flow/capacity ratio: blue at 0, red at [`RATIO_CAP`] and above.
pub fn ratio_color(ratio: f64) -> String {
    let t = (ratio / RATIO_CAP).clamp(0.0, 1.0);
    let i = if t <= STOPS[1].0 { 0 } else { 1 };
    let (t0, c0) = STOPS[i];
    let (t1, c1) = STOPS[i + 1];
    let s = (t - t0) / (t1 - t0);
    let mix = |k: usize| (c0[k] as f64 + s * (c1[k] as f64 - c0[k] as f64)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(0), mix(1), mix(2))
}

/// Node positions in drawing coordinates.
pub fn layout(net: &NetworkInfo) -> BTreeMap<NodeId, (f64, f64)> {
    let raw = if !net.nodes.is_empty() && net.nodes.iter().all(|n| net.positions.contains_key(n)) {
        // scenario coordinates have y pointing up
        net.nodes.iter().map(|n| (*n, (net.positions[n].0, -net.positions[n].1))).collect()
    } else {
        force_layout(net)
    };
    fit(raw)
}

fn force_layout(net: &NetworkInfo) -> BTreeMap<NodeId, (f64, f64)> {
    let n = net.nodes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut pos: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    let index: BTreeMap<NodeId, usize> = net.nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let k = (1.0 / n.max(1) as f64).sqrt();
    let mut temp = 0.1;
    for _ in 0..300 {
        let mut disp = vec![(0.0, 0.0); n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (dx, dy) = (pos[i].0 - pos[j].0, pos[i].1 - pos[j].1);
                let d = (dx * dx + dy * dy).sqrt().max(1e-6);
                let f = k * k / d;
                disp[i].0 += dx / d * f;
                disp[i].1 += dy / d * f;
            }
        }
        for e in &net.edges {
            let (a, b) = (index[&e.from], index[&e.to]);
            let (dx, dy) = (pos[a].0 - pos[b].0, pos[a].1 - pos[b].1);
            let d = (dx * dx + dy * dy).sqrt().max(1e-6);
            let f = d * d / k;
            disp[a].0 -= dx / d * f;
            disp[a].1 -= dy / d * f;
            disp[b].0 += dx / d * f;
            disp[b].1 += dy / d * f;
        }
        for i in 0..n {
            let d = (disp[i].0 * disp[i].0 + disp[i].1 * disp[i].1).sqrt().max(1e-9);
            let step = d.min(temp);
            pos[i].0 += disp[i].0 / d * step;
            pos[i].1 += disp[i].1 / d * step;
        }
        temp *= 0.985;
    }
    net.nodes.iter().copied().zip(pos).collect()
}

fn fit(raw: BTreeMap<NodeId, (f64, f64)>) -> BTreeMap<NodeId, (f64, f64)> {
    let xs = || raw.values().map(|p| p.0);
    let ys = || raw.values().map(|p| p.1);
    let (x0, x1) = (xs().fold(f64::INFINITY, f64::min), xs().fold(f64::NEG_INFINITY, f64::max));
    let (y0, y1) = (ys().fold(f64::INFINITY, f64::min), ys().fold(f64::NEG_INFINITY, f64::max));
    let (w, h) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN - LEGEND_H);
    let scale = match (x1 - x0 > 0.0, y1 - y0 > 0.0) {
        (true, true) => (w / (x1 - x0)).min(h / (y1 - y0)),
        (true, false) => w / (x1 - x0),
        (false, true) => h / (y1 - y0),
        (false, false) => 1.0,
    };
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    raw.into_iter()
        .map(|(v, (x, y))| (v, (WIDTH / 2.0 + (x - cx) * scale, MARGIN + h / 2.0 + (y - cy) * scale)))
        .collect()
}

fn stroke_width(gamma: f64, max_gamma: f64) -> f64 {
    1.5 + 6.5 * (gamma / max_gamma).sqrt()
}

/// Endpoints of an edge, shifted sideways so both directions of a two-way road show.
fn edge_segment(a: (f64, f64), b: (f64, f64), offset: f64) -> ((f64, f64), (f64, f64)) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = (dx * dx + dy * dy).sqrt().max(1e-9);
    let (ux, uy) = (dx / len, dy / len);
    let (nx, ny) = (-uy * offset, ux * offset);
    let trim = 18.0;
    ((a.0 + ux * trim + nx, a.1 + uy * trim + ny), (b.0 - ux * trim + nx, b.1 - uy * trim + ny))
}

pub fn svg(net: &NetworkInfo, phase: &PhaseResult, title: &str) -> String {
    let pos = layout(net);
    let max_gamma = net.edges.iter().map(|e| e.gamma).fold(1e-9, f64::max);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="20" y="30" font-size="18">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<text x="20" y="52" font-size="12">exact cost {:.3} h, max ratio {:.3}, mean ratio {:.3}</text>"#,
        phase.exact_objective, phase.congestion.max, phase.congestion.mean
    );
    let _ = writeln!(s, r#"<g id="edges" stroke-linecap="round">"#);
    for (i, e) in net.edges.iter().enumerate() {
        let ratio = phase.congestion.ratios.get(i).copied().unwrap_or(0.0);
        let w = stroke_width(e.gamma, max_gamma);
        let ((x1, y1), (x2, y2)) = edge_segment(pos[&e.from], pos[&e.to], w / 2.0 + 2.0);
        let _ = writeln!(
            s,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{}" stroke-width="{w:.2}"><title>road {} ({} -&gt; {}): ratio {ratio:.3}, flow {:.2}, capacity {}</title></line>"#,
            ratio_color(ratio),
            i + 1,
            e.from,
            e.to,
            phase.solution.x.get(i).copied().unwrap_or(0.0),
            e.gamma
        );
        // direction tick near the head
        let (hx, hy) = (x1 + 0.8 * (x2 - x1), y1 + 0.8 * (y2 - y1));
        let _ = writeln!(s, r#"<circle cx="{hx:.2}" cy="{hy:.2}" r="2.5" fill="black"/>"#);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g id="nodes" font-size="13" text-anchor="middle">"#);
    for v in &net.nodes {
        let (x, y) = pos[v];
        let station = net.charging_stations.contains(v);
        let (fill, stroke) = if station { ("#1a9850", "#0b4f25") } else { ("#f0f0f0", "#333333") };
        let text = if station { "white" } else { "black" };
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="28" height="28" fill="{fill}" stroke="{stroke}" stroke-width="2"/><text x="{x:.2}" y="{:.2}" fill="{text}">{v}</text>"#,
            x - 14.0,
            y - 14.0,
            y + 4.5
        );
    }
    let _ = writeln!(s, "</g>");
    legend(&mut s, max_gamma);
    s.push_str("</svg>\n");
    s
}

fn legend(s: &mut String, max_gamma: f64) {
    let y = HEIGHT - LEGEND_H + 10.0;
    let _ = writeln!(s, r#"<g id="legend" font-size="12">"#);
    let _ = writeln!(s, r#"<defs><linearGradient id="ratio-scale" x1="0" x2="1" y1="0" y2="0">"#);
    for (t, _) in STOPS {
        let _ = writeln!(s, r#"<stop offset="{t}" stop-color="{}"/>"#, ratio_color(t * RATIO_CAP));
    }
    let _ = writeln!(s, "</linearGradient></defs>");
    let _ = writeln!(s, r#"<text x="20" y="{:.2}">flow / capacity</text>"#, y);
    let _ = writeln!(
        s,
        r##"<rect x="20" y="{:.2}" width="200" height="12" fill="url(#ratio-scale)" stroke="#333"/>"##,
        y + 8.0
    );
    let _ = writeln!(s, r#"<text x="20" y="{:.2}">0</text>"#, y + 36.0);
    let _ = writeln!(s, r#"<text x="110" y="{:.2}">{}</text>"#, y + 36.0, RATIO_CAP / 2.0);
    let _ = writeln!(s, r#"<text x="200" y="{:.2}">&#8805;{}</text>"#, y + 36.0, RATIO_CAP);
    let _ = writeln!(s, r#"<text x="270" y="{:.2}">width: capacity</text>"#, y);
    for (k, frac) in [0.25_f64, 1.0].into_iter().enumerate() {
        let x = 270.0 + 110.0 * k as f64;
        let w = stroke_width(frac * max_gamma, max_gamma);
        let _ = writeln!(
            s,
            r##"<line x1="{x}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#777" stroke-width="{w:.2}"/><text x="{:.2}" y="{:.2}">{:.0}/h</text>"##,
            y + 14.0,
            x + 40.0,
            y + 14.0,
            x,
            y + 36.0,
            frac * max_gamma
        );
    }
    let _ = writeln!(
        s,
        r##"<rect x="520" y="{:.2}" width="16" height="16" fill="#1a9850" stroke="#0b4f25"/><text x="542" y="{:.2}">charging station</text>"##,
        y + 5.0,
        y + 18.0
    );
    let _ = writeln!(
        s,
        r##"<rect x="680" y="{:.2}" width="16" height="16" fill="#f0f0f0" stroke="#333"/><text x="702" y="{:.2}">intersection</text>"##,
        y + 5.0,
        y + 18.0
    );
    let _ = writeln!(s, "</g>");
}

pub fn dot(net: &NetworkInfo, phase: &PhaseResult) -> String {
    let max_gamma = net.edges.iter().map(|e| e.gamma).fold(1e-9, f64::max);
    let mut s = String::from("digraph network {\n  node [shape=box, style=filled, fillcolor=\"#f0f0f0\"];\n");
    for v in &net.nodes {
        if net.charging_stations.contains(v) {
            let _ = writeln!(s, "  {v} [fillcolor=\"#1a9850\", fontcolor=white, xlabel=\"charger\"];");
        } else {
            let _ = writeln!(s, "  {v};");
        }
    }
    for (i, e) in net.edges.iter().enumerate() {
        let ratio = phase.congestion.ratios.get(i).copied().unwrap_or(0.0);
        let _ = writeln!(
            s,
            "  {} -> {} [color=\"{}\", penwidth={:.2}, label=\"{:.2}\"];",
            e.from,
            e.to,
            ratio_color(ratio),
            stroke_width(e.gamma, max_gamma) / 2.0,
            ratio
        );
    }
    s.push_str("}\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colour_scale_ends() {
        assert_eq!(ratio_color(0.0), "#2c7bb6");
        assert_eq!(ratio_color(RATIO_CAP), "#d7191c");
        assert_eq!(ratio_color(10.0), "#d7191c");
        assert_eq!(ratio_color(-1.0), "#2c7bb6");
        assert_eq!(ratio_color(RATIO_CAP / 2.0), "#ffffbf");
    }

    #[test]
    fn segment_offsets_are_opposite_for_reverse_edges() {
        let (a, b) = ((0.0, 0.0), (100.0, 0.0));
        let (p, _) = edge_segment(a, b, 3.0);
        let (_, q) = edge_segment(b, a, 3.0);
        assert!((p.1 + q.1).abs() < 1e-12 && p.1 != 0.0);
    }
}
