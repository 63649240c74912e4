//! Bare-bones SVG charts: stacked line panels, box plots and bar histograms.

use std::fmt::Write;

use matchnet::stats::FiveNumber;

const W: f64 = 640.0;
const PANEL_H: f64 = 200.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn new(top: f64, xr: (f64, f64), yr: (f64, f64)) -> Self {
        let pad = |(a, b): (f64, f64)| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        let (xmin, xmax) = pad(xr);
        let (ymin, ymax) = pad(yr);
        Self {
            x0: MARGIN,
            y0: top + 20.0,
            w: W - 2.0 * MARGIN,
            h: PANEL_H - 50.0,
            xmin,
            xmax,
            ymin,
            ymax,
        }
    }

    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.xmin) / (self.xmax - self.xmin) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.ymin) / (self.ymax - self.ymin) * self.h
    }

    fn axes(&self, out: &mut String, title: &str) {
        let _ = write!(
            out,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##,
            self.x0, self.y0, self.w, self.h
        );
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="13">{}</text>"#,
            self.x0,
            self.y0 - 6.0,
            escape(title)
        );
        for (v, y) in [(self.ymin, self.y0 + self.h), (self.ymax, self.y0)] {
            let _ = write!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"#,
                self.x0 - 4.0,
                y + 3.0,
                tick(v)
            );
        }
        for (v, x) in [(self.xmin, self.x0), (self.xmax, self.x0 + self.w)] {
            let _ = write!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
                x,
                self.y0 + self.h + 14.0,
                tick(v)
            );
        }
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e5 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn document(height: f64, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{height}\" \
         viewBox=\"0 0 {W} {height}\" font-family=\"sans-serif\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}\n</svg>\n"
    )
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

/// One series: a legend label and step-function points.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Panels stacked vertically, each with any number of series.
pub fn line_panels(panels: &[(&str, Vec<Series>)]) -> String {
    let mut body = String::new();
    for (k, (title, series)) in panels.iter().enumerate() {
        let top = k as f64 * PANEL_H;
        let xr = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
        let yr = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
        let f = Frame::new(top, xr, (yr.0.min(0.0), yr.1));
        f.axes(&mut body, title);
        for (c, s) in series.iter().enumerate() {
            let color = COLORS[c % COLORS.len()];
            let mut d = String::new();
            for (i, &(x, y)) in s.points.iter().enumerate() {
                if i == 0 {
                    let _ = write!(d, "M{:.1},{:.1}", f.px(x), f.py(y));
                } else {
                    let _ = write!(d, " H{:.1} V{:.1}", f.px(x), f.py(y));
                }
            }
            let _ = write!(
                body,
                r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.2"/>"#
            );
            let _ = write!(
                body,
                r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{color}" text-anchor="end">{}</text>"#,
                f.x0 + f.w - 4.0,
                f.y0 + 12.0 + 12.0 * c as f64,
                escape(s.label)
            );
        }
        body.push('\n');
    }
    document(PANEL_H * panels.len().max(1) as f64, &body)
}

/// Side-by-side box plots.
pub fn box_plot(title: &str, groups: &[(&str, FiveNumber)]) -> String {
    let mut body = String::new();
    let yr = range(groups.iter().flat_map(|g| [g.1.min, g.1.max]));
    let f = Frame::new(0.0, (0.0, groups.len() as f64), (yr.0.min(0.0), yr.1));
    f.axes(&mut body, title);
    for (k, (label, q)) in groups.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let cx = f.px(k as f64 + 0.5);
        let half = f.w / groups.len() as f64 * 0.25;
        let _ = write!(
            body,
            r#"<line x1="{cx:.1}" x2="{cx:.1}" y1="{:.1}" y2="{:.1}" stroke="{color}"/>"#,
            f.py(q.min),
            f.py(q.max)
        );
        let _ = write!(
            body,
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="white" stroke="{color}"/>"#,
            cx - half,
            f.py(q.q3),
            2.0 * half,
            (f.py(q.q1) - f.py(q.q3)).max(0.5)
        );
        let _ = write!(
            body,
            r#"<line x1="{:.1}" x2="{:.1}" y1="{y:.1}" y2="{y:.1}" stroke="{color}" stroke-width="2"/>"#,
            cx - half,
            cx + half,
            y = f.py(q.median)
        );
        let _ = write!(
            body,
            r#"<text x="{cx:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
            f.y0 + f.h + 28.0,
            escape(label)
        );
    }
    document(PANEL_H + 20.0, &body)
}

/// Bars at integer values `0..counts.len()`, with labelled vertical markers.
pub fn histogram(title: &str, counts: &[u64], markers: &[(&str, f64)]) -> String {
    let mut body = String::new();
    let top = counts.iter().copied().max().unwrap_or(0) as f64;
    let xmax = markers
        .iter()
        .map(|m| m.1 + 1.0)
        .fold(counts.len() as f64, f64::max);
    let f = Frame::new(0.0, (0.0, xmax), (0.0, top));
    f.axes(&mut body, title);
    let bw = (f.px(1.0) - f.px(0.0)).max(0.5);
    for (v, &c) in counts.iter().enumerate() {
        if c > 0 {
            let _ = write!(
                body,
                r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#9ecae1" stroke="#3182bd" stroke-width="0.5"/>"##,
                f.px(v as f64),
                f.py(c as f64),
                bw,
                f.py(0.0) - f.py(c as f64)
            );
        }
    }
    for (k, (label, x)) in markers.iter().enumerate() {
        let color = COLORS[(k + 1) % COLORS.len()];
        let px = f.px(x + 0.5);
        let _ = write!(
            body,
            r#"<line x1="{px:.1}" x2="{px:.1}" y1="{:.1}" y2="{:.1}" stroke="{color}" stroke-dasharray="4 3"/>"#,
            f.y0,
            f.y0 + f.h
        );
        let _ = write!(
            body,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{color}">{} = {}</text>"#,
            px + 3.0,
            f.y0 + 12.0 + 12.0 * k as f64,
            escape(label),
            tick(*x)
        );
    }
    document(PANEL_H + 10.0, &body)
}
