//! Self-contained SVG figures: predicted curves against measured points with
//! error bars. The data table travels inside a comment block of the file.

use std::fmt::Write;

const W: f64 = 420.0;
const H: f64 = 300.0;
const PAD: f64 = 50.0;
const COLS: usize = 2;

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    /// Drawn as a polyline.
    pub curve: Vec<(f64, f64)>,
    /// `(x, y, err)`, drawn as dots with `+- err` bars.
    pub points: Vec<(f64, f64, f64)>,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.ln() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let m = 0.05 * (hi - lo);
        Axis {
            lo: lo - m,
            hi: hi + m,
            log,
        }
    }

    fn unit(&self, v: f64) -> f64 {
        let v = if self.log { v.ln() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn tick(&self, t: f64) -> f64 {
        let v = self.lo + t * (self.hi - self.lo);
        if self.log {
            v.exp()
        } else {
            v
        }
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn render_panel(out: &mut String, p: &Panel, ox: f64, oy: f64) {
    let xs = p
        .curve
        .iter()
        .map(|c| c.0)
        .chain(p.points.iter().map(|q| q.0));
    let ys = p
        .curve
        .iter()
        .map(|c| c.1)
        .chain(p.points.iter().flat_map(|q| [q.1 - q.2, q.1 + q.2]));
    let ax = Axis::fit(xs, p.log_x);
    let ay = Axis::fit(ys, false);
    let (pw, ph) = (W - 1.5 * PAD, H - 2.0 * PAD);
    let sx = |x: f64| ox + PAD + ax.unit(x) * pw;
    let sy = |y: f64| oy + PAD * 0.8 + (1.0 - ay.unit(y)) * ph;
    let _ = writeln!(
        out,
        r##"<g><rect x="{:.1}" y="{:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#888"/>"##,
        ox + PAD,
        oy + PAD * 0.8
    );
    let _ = writeln!(
        out,
        r##"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{}</text>"##,
        ox + PAD + pw / 2.0,
        oy + PAD * 0.5,
        esc(&p.title)
    );
    let _ = writeln!(
        out,
        r##"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"##,
        ox + PAD + pw / 2.0,
        oy + H - 8.0,
        esc(&p.x_label)
    );
    let _ = writeln!(
        out,
        r##"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{}</text>"##,
        ox + 12.0,
        oy + H / 2.0,
        ox + 12.0,
        oy + H / 2.0,
        esc(&p.y_label)
    );
    for t in [0.0, 0.5, 1.0] {
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="middle">{:.3}</text>"##,
            ox + PAD + t * pw,
            oy + PAD * 0.8 + ph + 12.0,
            ax.tick(t)
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="end">{:.3}</text>"##,
            ox + PAD - 3.0,
            oy + PAD * 0.8 + (1.0 - t) * ph + 3.0,
            ay.tick(t)
        );
    }
    if p.curve.len() > 1 {
        let pts: Vec<String> = p
            .curve
            .iter()
            .filter(|c| c.0.is_finite() && c.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r##"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"##,
            pts.join(" ")
        );
    }
    for &(x, y, e) in p
        .points
        .iter()
        .filter(|q| q.0.is_finite() && q.1.is_finite())
    {
        let (cx, cy) = (sx(x), sy(y));
        if e > 0.0 && e.is_finite() {
            let _ = writeln!(
                out,
                r##"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="firebrick"/>"##,
                sy(y - e),
                sy(y + e)
            );
        }
        let _ = writeln!(
            out,
            r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="firebrick"/>"##
        );
    }
    out.push_str("</g>\n");
}

/// Lays `panels` out two per row. `data` is embedded verbatim in a comment;
/// runs of `-` are broken up so the comment stays well formed.
pub fn render(panels: &[Panel], data: &str) -> String {
    let rows = panels.len().div_ceil(COLS).max(1);
    let cols = panels.len().clamp(1, COLS);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif">"##,
        cols as f64 * W,
        rows as f64 * H
    );
    let mut safe = data.replace("--", "- -");
    while safe.contains("--") {
        safe = safe.replace("--", "- -");
    }
    let _ = writeln!(out, "<!-- data\n{}\n-->", safe.trim_end_matches('-'));
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, (i % COLS) as f64 * W, (i / COLS) as f64 * H);
    }
    out.push_str("</svg>\n");
    out
}
