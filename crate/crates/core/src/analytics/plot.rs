//! Minimal SVG renderings: labelled scatter plots, heatmaps and bar charts.

use std::fmt::Write;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
const W: f64 = 480.0;
const H: f64 = 400.0;
const MARGIN: f64 = 48.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#, w / 2.0, escape(title));
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Scatter plot coloured by label, with a legend in first-seen label order.
pub fn scatter_svg(coords: &[[f64; 2]], labels: &[String], title: &str) -> String {
    let (x0, x1) = range(coords.iter().map(|c| c[0]));
    let (y0, y1) = range(coords.iter().map(|c| c[1]));
    let mut classes: Vec<&str> = Vec::new();
    for l in labels {
        if !classes.contains(&l.as_str()) {
            classes.push(l);
        }
    }
    let mut out = String::new();
    header(&mut out, W, H, title);
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    for (i, c) in coords.iter().enumerate() {
        let px = MARGIN + (c[0] - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
        let py = H - MARGIN - (c[1] - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
        let class = labels.get(i).and_then(|l| classes.iter().position(|c| c == l)).unwrap_or(0);
        let _ = writeln!(out, r#"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="{}"/>"#, PALETTE[class % PALETTE.len()]);
    }
    for (k, class) in classes.iter().enumerate() {
        let y = MARGIN + 14.0 * k as f64 + 10.0;
        let _ = writeln!(out, r#"<circle cx="{}" cy="{y}" r="4" fill="{}"/>"#, W - MARGIN - 80.0, PALETTE[k % PALETTE.len()]);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            W - MARGIN - 72.0,
            y + 4.0,
            escape(class)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Diverging heatmap for values in [-1, 1]; missing cells are grey.
pub fn heatmap_svg(values: &[Vec<Option<f64>>], rows: &[String], cols: &[String], title: &str) -> String {
    let cell = 28.0;
    let left = 120.0;
    let top = 100.0;
    let w = left + cell * cols.len() as f64 + 20.0;
    let h = top + cell * rows.len() as f64 + 20.0;
    let mut out = String::new();
    header(&mut out, w, h, title);
    for (j, c) in cols.iter().enumerate() {
        let x = left + cell * (j as f64 + 0.5);
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" transform="rotate(-60 {x} {})" font-family="sans-serif" font-size="10">{}</text>"#,
            top - 6.0,
            top - 6.0,
            escape(c)
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="10">{}</text>"#,
            left - 6.0,
            y + cell * 0.65,
            escape(r)
        );
        for j in 0..cols.len() {
            let fill = match values.get(i).and_then(|row| row.get(j)).copied().flatten() {
                Some(v) => {
                    let v = v.clamp(-1.0, 1.0);
                    let fade = (255.0 * (1.0 - v.abs())) as u8;
                    if v >= 0.0 {
                        format!("rgb(255,{fade},{fade})")
                    } else {
                        format!("rgb({fade},{fade},255)")
                    }
                }
                None => "#bbbbbb".to_string(),
            };
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="white"/>"#,
                left + cell * j as f64
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Bars with optional ± error whiskers.
pub fn bar_svg(bars: &[(String, f64, Option<f64>)], title: &str, y_label: &str) -> String {
    let top_value = bars.iter().map(|b| b.1 + b.2.unwrap_or(0.0)).fold(0.0f64, f64::max).max(1e-12);
    let mut out = String::new();
    header(&mut out, W, H, title);
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    let slot = (W - 2.0 * MARGIN) / bars.len().max(1) as f64;
    let scale = (H - 2.0 * MARGIN) / (top_value * 1.1);
    for (i, (name, v, err)) in bars.iter().enumerate() {
        let x = MARGIN + slot * i as f64 + slot * 0.2;
        let bh = v.max(0.0) * scale;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{bh:.2}" fill="{}"/>"#,
            H - MARGIN - bh,
            slot * 0.6,
            PALETTE[i % PALETTE.len()]
        );
        if let Some(e) = err {
            let cx = x + slot * 0.3;
            let _ = writeln!(
                out,
                r#"<line x1="{cx:.2}" x2="{cx:.2}" y1="{:.2}" y2="{:.2}" stroke="black"/>"#,
                H - MARGIN - (v + e) * scale,
                H - MARGIN - (v - e).max(0.0) * scale
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10">{}</text>"#,
            x + slot * 0.3,
            H - MARGIN + 14.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}
