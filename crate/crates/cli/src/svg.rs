//! Minimal SVG writer for line plots, histograms and heat maps. Only
//! polylines, rects and text are emitted, with fixed number formatting so
//! the files are byte-stable.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Self {
        Self { x: span(xs), y: span(ys) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * MARGIN)
    }
}

fn span(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |a, x| (a.0.min(x), a.1.max(x)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn header(title: &str, xlabel: &str, ylabel: &str, f: &Frame) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    let _ = writeln!(s, r#"<text x="{}" y="30" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#, W / 2.0, H - 10.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 15 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    for (v, x, y, anchor) in [
        (f.x.0, MARGIN, H - MARGIN + 15.0, "start"),
        (f.x.1, W - MARGIN, H - MARGIN + 15.0, "end"),
        (f.y.0, MARGIN - 4.0, H - MARGIN, "end"),
        (f.y.1, MARGIN - 4.0, MARGIN + 10.0, "end"),
    ] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="10">{v:.4e}</text>"#);
    }
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One polyline per series, sharing axes.
pub fn lines(title: &str, xlabel: &str, ylabel: &str, series: &[(&str, &[f64], &[f64])]) -> String {
    let f = Frame::fit(
        series.iter().flat_map(|s| s.1.iter().copied()),
        series.iter().flat_map(|s| s.2.iter().copied()),
    );
    let mut s = header(title, xlabel, ylabel, &f);
    for (k, (name, xs, ys)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = xs
            .iter()
            .zip(ys.iter())
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
            W - MARGIN - 120.0,
            MARGIN + 15.0 + 14.0 * k as f64,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Bars of a histogram with uniform bins starting at `lo`.
pub fn histogram(title: &str, xlabel: &str, lo: f64, width: f64, counts: &[u64]) -> String {
    let hi = lo + width * counts.len() as f64;
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let f = Frame { x: span([lo, hi].into_iter()), y: (0.0, top) };
    let mut s = header(title, xlabel, "counts", &f);
    for (k, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let x0 = f.px(lo + k as f64 * width);
        let x1 = f.px(lo + (k + 1) as f64 * width);
        let y = f.py(c as f64);
        let _ = writeln!(
            s,
            r#"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            x1 - x0,
            f.py(0.0) - y,
            COLORS[0]
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grey-scale map of `z[row][col]`, rows along y and columns along x.
pub fn heatmap(title: &str, xlabel: &str, ylabel: &str, xs: &[f64], ys: &[f64], z: &[Vec<f64>]) -> String {
    let f = Frame { x: (0.0, xs.len().max(1) as f64), y: (0.0, ys.len().max(1) as f64) };
    let axes = Frame::fit(xs.iter().copied(), ys.iter().copied());
    let mut s = header(title, xlabel, ylabel, &axes);
    let (lo, hi) = span(z.iter().flatten().copied());
    for (r, row) in z.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let level = (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8;
            let (x0, x1) = (f.px(c as f64), f.px(c as f64 + 1.0));
            let (y0, y1) = (f.py(r as f64 + 1.0), f.py(r as f64));
            let _ = writeln!(
                s,
                r##"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="#{level:02x}{level:02x}{level:02x}"/>"##,
                x1 - x0,
                y1 - y0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documents_are_closed_and_stable() {
        let a = lines("t", "x", "y", &[("s", &[0.0, 1.0], &[1.0, 0.5])]);
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert_eq!(a, lines("t", "x", "y", &[("s", &[0.0, 1.0], &[1.0, 0.5])]));
        assert_eq!(histogram("h", "x", 0.0, 1.0, &[1, 0, 3]).matches("<rect").count(), 2 + 2);
        assert_eq!(heatmap("m", "x", "y", &[0.0, 1.0], &[0.0], &[vec![0.0, 1.0]]).matches("fill=\"#").count(), 2);
    }

    #[test]
    fn text_is_escaped() {
        assert!(lines("a<b & c", "x", "y", &[]).contains("a&lt;b &amp; c"));
    }
}
