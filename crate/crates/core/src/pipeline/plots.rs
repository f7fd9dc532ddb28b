//! Minimal SVG line plots for ROC and Kaplan-Meier curves.

use std::fmt::Write;

use crate::evaluation::{KmCurve, RocCurve};

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const SIZE: f64 = 360.0;
const PAD: f64 = 48.0;

fn frame(title: &str, x_label: &str, y_label: &str) -> String {
    let full = SIZE + 2.0 * PAD;
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full}" height="{full}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    let _ = write!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, full / 2.0, PAD / 2.0, escape(title));
    let _ = write!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, full / 2.0, full - 12.0, x_label);
    let _ = write!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        full / 2.0,
        full / 2.0,
        y_label
    );
    for t in 0..=4 {
        let f = t as f64 / 4.0;
        let _ = write!(s, r#"<text x="{}" y="{}" text-anchor="middle">{f}</text>"#, PAD + f * SIZE, PAD + SIZE + 16.0);
        let _ = write!(s, r#"<text x="{}" y="{}" text-anchor="end">{f}</text>"#, PAD - 6.0, PAD + (1.0 - f) * SIZE + 4.0);
    }
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Points in unit coordinates, y up.
fn polyline(s: &mut String, pts: &[(f64, f64)], color: &str) {
    let coords: Vec<String> = pts
        .iter()
        .map(|(x, y)| format!("{:.2},{:.2}", PAD + x * SIZE, PAD + (1.0 - y) * SIZE))
        .collect();
    let _ = write!(
        s,
        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
        coords.join(" ")
    );
}

fn legend(s: &mut String, names: &[&str]) {
    for (i, n) in names.iter().enumerate() {
        let y = PAD + 16.0 + 16.0 * i as f64;
        let c = COLORS[i % COLORS.len()];
        let _ = write!(s, r#"<rect x="{}" y="{}" width="10" height="10" fill="{c}"/>"#, PAD + SIZE - 120.0, y - 9.0);
        let _ = write!(s, r#"<text x="{}" y="{y}">{}</text>"#, PAD + SIZE - 105.0, escape(n));
    }
}

pub fn roc_svg(title: &str, curves: &[(&str, &RocCurve)]) -> String {
    let mut s = frame(title, "1 - specificity", "sensitivity");
    polyline(&mut s, &[(0.0, 0.0), (1.0, 1.0)], "#bbbbbb");
    for (i, (_, c)) in curves.iter().enumerate() {
        let pts: Vec<(f64, f64)> = c.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        polyline(&mut s, &pts, COLORS[i % COLORS.len()]);
    }
    let names: Vec<String> = curves.iter().map(|(n, c)| format!("{n} ({:.3})", c.auc)).collect();
    legend(&mut s, &names.iter().map(String::as_str).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

pub fn km_svg(title: &str, curves: &[(&str, &KmCurve)]) -> String {
    let mut s = frame(title, "days", "survival");
    for (i, (_, c)) in curves.iter().enumerate() {
        let h = c.horizon.max(f64::MIN_POSITIVE);
        let mut pts = Vec::with_capacity(2 * c.steps.len() + 1);
        let mut last = 1.0;
        for step in &c.steps {
            pts.push((step.time / h, last));
            pts.push((step.time / h, step.survival));
            last = step.survival;
        }
        pts.push((1.0, last));
        polyline(&mut s, &pts, COLORS[i % COLORS.len()]);
    }
    legend(&mut s, &curves.iter().map(|(n, _)| *n).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}
