//! Bare SVG line and scatter charts; enough to eyeball a CEAC or a plane.

use std::fmt::Write;

use super::ceac::{Ceac, PlanePoint};

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 60.0;
const COLOURS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 1.0, hi + 1.0)
            }
        };
        Frame {
            x: widen(x),
            y: widen(y),
        }
    }
    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * PAD)
    }
    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * PAD)
    }
}

fn open(svg: &mut String, f: &Frame, title: &str, xlabel: &str, ylabel: &str) {
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>
<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>
<clipPath id="frame"><rect x="{PAD}" y="{PAD}" width="{}" height="{}"/></clipPath>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>
"#,
        W / 2.0,
        escape(title),
        W - 2.0 * PAD,
        H - 2.0 * PAD,
        W - 2.0 * PAD,
        H - 2.0 * PAD,
        W / 2.0,
        H - 18.0,
        escape(xlabel),
        H / 2.0,
        H / 2.0,
        escape(ylabel),
    );
    for (v, anchor) in [(f.x.0, "start"), (f.x.1, "end")] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="{anchor}">{}</text>"#,
            f.px(v),
            H - PAD + 16.0,
            tick(v)
        );
    }
    for v in [f.y.0, f.y.1] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            PAD - 4.0,
            f.py(v) + 4.0,
            tick(v)
        );
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn legend(svg: &mut String, labels: &[String]) {
    for (i, l) in labels.iter().enumerate() {
        let y = PAD + 16.0 + 16.0 * i as f64;
        let c = COLOURS[i % COLOURS.len()];
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{c}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            W - PAD - 110.0,
            W - PAD - 90.0,
            W - PAD - 84.0,
            y + 4.0,
            escape(l)
        );
    }
}

/// One line per intervention, probability against threshold.
pub fn ceac_svg(c: &Ceac) -> String {
    let lo = c.thresholds.first().copied().unwrap_or(0.0);
    let hi = c.thresholds.last().copied().unwrap_or(1.0);
    let f = Frame::new((lo, hi), (0.0, 1.0));
    let mut svg = String::new();
    open(
        &mut svg,
        &f,
        "Cost-effectiveness acceptability",
        "Threshold (GBP per QALY)",
        "Probability cost-effective",
    );
    for (k, _) in c.interventions.iter().enumerate() {
        let pts: Vec<String> = c
            .thresholds
            .iter()
            .zip(&c.probability)
            .map(|(t, p)| format!("{:.1},{:.1}", f.px(*t), f.py(p[k])))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            COLOURS[k % COLOURS.len()],
            pts.join(" ")
        );
    }
    legend(&mut svg, &c.interventions);
    svg.push_str("</svg>\n");
    svg
}

/// Scatter of per-draw increments with the axes through the origin and,
/// if given, a willingness-to-pay line.
pub fn plane_svg(points: &[PlanePoint], title: &str, threshold: Option<f64>) -> String {
    let span = |v: &mut dyn Iterator<Item = f64>| {
        v.fold((0.0f64, 0.0f64), |(lo, hi), x| (lo.min(x), hi.max(x)))
    };
    let x = span(&mut points.iter().map(|p| p.d_qaly));
    let y = span(&mut points.iter().map(|p| p.d_cost));
    let f = Frame::new(x, y);
    let mut svg = String::new();
    open(
        &mut svg,
        &f,
        title,
        "Incremental QALY",
        "Incremental cost (GBP)",
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{:.1}" y1="{PAD}" x2="{:.1}" y2="{}" stroke="#888"/><line x1="{PAD}" y1="{:.1}" x2="{}" y2="{:.1}" stroke="#888"/>"##,
        f.px(0.0),
        f.px(0.0),
        H - PAD,
        f.py(0.0),
        W - PAD,
        f.py(0.0)
    );
    if let Some(w) = threshold {
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#d62728" stroke-dasharray="4 3" clip-path="url(#frame)"/>"##,
            f.px(f.x.0),
            f.py(w * f.x.0),
            f.px(f.x.1),
            f.py(w * f.x.1)
        );
    }
    // thin out very large clouds; 5000 dots already read as a cloud
    let every = (points.len() / 5000).max(1);
    for p in points.iter().step_by(every) {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.1}" cy="{:.1}" r="1.5" fill="#1f77b4" fill-opacity="0.4"/>"##,
            f.px(p.d_qaly),
            f.py(p.d_cost)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
