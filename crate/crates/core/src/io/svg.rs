//! Minimal standalone SVG rendering for line plots and heatmaps. Output is a
//! pure function of the input so files are byte-stable.

use std::fmt::Write;

use super::report::fmt6;

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 48.0;

pub struct Panel<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub points: Vec<(f64, f64)>,
}

impl Panel<'_> {
    /// Range `[0, max(values, 1)]`, widened so a flat series stays visible.
    pub fn unit_or_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
        let hi = values.fold(1.0_f64, f64::max);
        (0.0, hi)
    }
}

fn coord(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders panels side by side in one document.
pub fn render_panels(panels: &[Panel<'_>]) -> String {
    let total_w = PANEL_W * panels.len().max(1) as f64;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="11">"#,
        total_w, PANEL_H, total_w, PANEL_H
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    for (i, panel) in panels.iter().enumerate() {
        render_panel(&mut s, panel, PANEL_W * i as f64);
    }
    s.push_str("</svg>\n");
    s
}

fn render_panel(s: &mut String, p: &Panel<'_>, offset_x: f64) {
    let x0 = offset_x + MARGIN_L;
    let x1 = offset_x + PANEL_W - MARGIN_R;
    let y0 = PANEL_H - MARGIN_B;
    let y1 = MARGIN_T;
    let span = |r: (f64, f64)| if r.1 > r.0 { r.1 - r.0 } else { 1.0 };
    let sx = |v: f64| x0 + (v - p.x_range.0) / span(p.x_range) * (x1 - x0);
    let sy = |v: f64| y0 - (v - p.y_range.0) / span(p.y_range) * (y0 - y1);

    writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        coord((x0 + x1) / 2.0),
        escape(p.title)
    )
    .unwrap();
    writeln!(
        s,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        coord(x0),
        coord(y1),
        coord(x1 - x0),
        coord(y0 - y1)
    )
    .unwrap();
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = p.x_range.0 + f * span(p.x_range);
        let yv = p.y_range.0 + f * span(p.y_range);
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            coord(sx(xv)),
            coord(y0 + 14.0),
            fmt_tick(xv)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            coord(x0 - 4.0),
            coord(sy(yv) + 4.0),
            fmt_tick(yv)
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        coord((x0 + x1) / 2.0),
        coord(PANEL_H - 12.0),
        escape(p.x_label)
    )
    .unwrap();
    let ly = (y0 + y1) / 2.0;
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">{}</text>"#,
        coord(offset_x + 14.0),
        coord(ly),
        coord(offset_x + 14.0),
        coord(ly),
        escape(p.y_label)
    )
    .unwrap();
    if !p.points.is_empty() {
        let pts: Vec<String> = p
            .points
            .iter()
            .map(|&(x, y)| format!("{},{}", coord(sx(x)), coord(sy(y))))
            .collect();
        writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>"##,
            pts.join(" ")
        )
        .unwrap();
        for &(x, y) in &p.points {
            writeln!(
                s,
                r##"<circle cx="{}" cy="{}" r="2" fill="#1f77b4"/>"##,
                coord(sx(x)),
                coord(sy(y))
            )
            .unwrap();
        }
    }
}

fn fmt_tick(v: f64) -> String {
    let t = format!("{v:.2}");
    if t == "-0.00" {
        "0.00".into()
    } else {
        t
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Heatmap of a row-major grid with a diverging blue-white-red scale centred
/// at zero. Absent cells are drawn grey.
pub fn render_heatmap(grid_width: usize, grid_height: usize, values: &[Option<f64>], title: &str) -> String {
    const CELL_MAX: f64 = 8.0;
    let cell = (640.0 / grid_width.max(1) as f64).clamp(1.0, CELL_MAX);
    let w = cell * grid_width as f64;
    let h = cell * grid_height as f64;
    let scale = values.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="11">"#,
        coord(w + 20.0),
        coord(h + 60.0),
        coord(w + 20.0),
        coord(h + 60.0)
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="10" y="18" font-size="13">{} (scale ±{})</text>"#,
        escape(title),
        fmt6(scale)
    )
    .unwrap();
    for gy in 0..grid_height {
        for gx in 0..grid_width {
            let fill = match values[gy * grid_width + gx] {
                None => "#bdbdbd".to_string(),
                Some(v) => diverging(if scale > 0.0 { v / scale } else { 0.0 }),
            };
            writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
                coord(10.0 + gx as f64 * cell),
                coord(30.0 + gy as f64 * cell),
                coord(cell),
                coord(cell),
                fill
            )
            .unwrap();
        }
    }
    // Legend: -scale .. 0 .. +scale
    let ly = 40.0 + h;
    for k in 0..=20 {
        let t = k as f64 / 10.0 - 1.0;
        writeln!(
            s,
            r#"<rect x="{}" y="{}" width="8" height="8" fill="{}"/>"#,
            coord(10.0 + k as f64 * 8.0),
            coord(ly),
            diverging(t)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Maps `t` in [-1, 1] to blue (negative), white (zero), red (positive).
fn diverging(t: f64) -> String {
    let t = t.clamp(-1.0, 1.0);
    let fade = |m: f64| (255.0 * (1.0 - m)).round() as u8;
    let (r, g, b) = if t >= 0.0 {
        (255, fade(t), fade(t))
    } else {
        (fade(-t), fade(-t), 255)
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}
