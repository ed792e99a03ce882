//! Minimal SVG emitters for the severity histogram and stability scatter.
//!
//! Output is plain text with fixed-precision coordinates so identical input
//! produces identical bytes.

use crate::severity::{class_key, Histogram, ScatterPoint};
use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn class_colour(class: &str) -> &'static str {
    match class {
        "AD" => "#d62728",
        "HC" => "#1f77b4",
        _ => "#7f7f7f",
    }
}

fn header(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let x = MARGIN + v * (WIDTH - 2.0 * MARGIN);
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{v:.2}</text>"#,
            HEIGHT - MARGIN + 16.0
        );
    }
}

fn legend(out: &mut String, classes: &[&str]) {
    for (i, class) in classes.iter().enumerate() {
        let y = MARGIN + 4.0 + 18.0 * i as f64;
        let x = WIDTH - MARGIN - 90.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{y:.1}" width="12" height="12" fill="{}"/>"#,
            class_colour(class)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            x + 18.0,
            y + 10.0,
            escape(class)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Side-by-side bars per bin, one colour per class.
pub fn histogram_svg(h: &Histogram, title: &str) -> String {
    let mut out = String::new();
    header(&mut out, title, "mean AD probability across folds", "subjects");
    let bins = h.edges.len().saturating_sub(1).max(1);
    let max = h.counts.values().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let bin_w = plot_w / bins as f64;
    let n_classes = h.counts.len().max(1) as f64;
    for (ci, (class, row)) in h.counts.iter().enumerate() {
        for (i, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let bar_w = bin_w / n_classes;
            let x = MARGIN + i as f64 * bin_w + ci as f64 * bar_w;
            let bar_h = plot_h * c as f64 / max;
            let y = HEIGHT - MARGIN - bar_h;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{bar_w:.2}" height="{bar_h:.2}" fill="{}"><title>{class} {c}</title></rect>"#,
                class_colour(class)
            );
        }
    }
    let classes: Vec<&str> = h.counts.keys().map(String::as_str).collect();
    legend(&mut out, &classes);
    out.push_str("</svg>\n");
    out
}

/// Vote rate against mean probability, one circle per subject.
pub fn scatter_svg(points: &[ScatterPoint], title: &str) -> String {
    let mut out = String::new();
    header(&mut out, title, "mean AD probability", "vote rate");
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let mut classes: Vec<&str> = Vec::new();
    for p in points {
        let class = class_key(p.label);
        if !classes.contains(&class) {
            classes.push(class);
        }
        let x = MARGIN + p.mean_prob * plot_w;
        let y = HEIGHT - MARGIN - p.vote_rate * plot_h;
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{}" fill-opacity="0.7"/>"#,
            class_colour(class)
        );
    }
    classes.sort_unstable();
    legend(&mut out, &classes);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::Label;
    use std::collections::BTreeMap;

    #[test]
    fn histogram_has_one_bar_per_nonzero_bin() {
        let mut counts = BTreeMap::new();
        counts.insert("AD".to_string(), vec![0, 2, 1, 0]);
        counts.insert("HC".to_string(), vec![3, 0, 0, 0]);
        let h = Histogram {
            edges: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            counts,
        };
        let svg = histogram_svg(&h, "dist");
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<title>").count(), 3);
    }

    #[test]
    fn scatter_has_one_circle_per_point() {
        let pts: Vec<ScatterPoint> = (0..5)
            .map(|i| ScatterPoint {
                subject_id: format!("s{i}"),
                mean_prob: i as f64 / 5.0,
                vote_rate: 1.0 - i as f64 / 5.0,
                label: Some(if i % 2 == 0 { Label::AD } else { Label::HC }),
            })
            .collect();
        let svg = scatter_svg(&pts, "stability");
        assert_eq!(svg.matches("<circle").count(), 5);
        assert_eq!(svg, scatter_svg(&pts, "stability"));
    }
}
