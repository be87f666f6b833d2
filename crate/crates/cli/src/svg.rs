//! Minimal deterministic SVG rendering for rank scatters, effect curves and
//! filled-level heatmaps.

use std::fmt::Write;

use permdiag::effects::{EffectCurve, GridField};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Style {
    pub width: f64,
    pub height: f64,
    pub margin: f64,
    pub title: String,
}

impl Style {
    pub fn titled(title: impl Into<String>) -> Self {
        Self {
            width: 640.0,
            height: 420.0,
            margin: 48.0,
            title: title.into(),
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Maps data coordinates to the plot area.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    style: Style,
}

impl Frame {
    fn new(style: &Style, (x0, x1): (f64, f64), (y0, y1): (f64, f64)) -> Self {
        let pad = |a: f64, b: f64| if a == b { (a - 0.5, b + 0.5) } else { (a, b) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        Self {
            x0,
            x1,
            y0,
            y1,
            style: style.clone(),
        }
    }

    fn px(&self, x: f64) -> f64 {
        let m = self.style.margin;
        m + (x - self.x0) / (self.x1 - self.x0) * (self.style.width - 2.0 * m)
    }

    fn py(&self, y: f64) -> f64 {
        let m = self.style.margin;
        self.style.height - m - (y - self.y0) / (self.y1 - self.y0) * (self.style.height - 2.0 * m)
    }

    fn open(&self, out: &mut String) {
        let s = &self.style;
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.0} {:.0}\">",
            s.width, s.height, s.width, s.height
        );
        let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
            s.width / 2.0,
            s.margin / 2.0,
            escape(&s.title)
        );
    }

    fn axes(&self, out: &mut String, x_ticks: &[(f64, String)], y_ticks: &[(f64, String)]) {
        let (l, r) = (self.px(self.x0), self.px(self.x1));
        let (b, t) = (self.py(self.y0), self.py(self.y1));
        let _ = writeln!(
            out,
            "<rect x=\"{l:.2}\" y=\"{t:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\"/>",
            r - l,
            b - t
        );
        for (v, label) in x_ticks {
            let x = self.px(*v);
            let _ = writeln!(
                out,
                "<text x=\"{x:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
                b + 14.0,
                escape(label)
            );
        }
        for (v, label) in y_ticks {
            let y = self.py(*v);
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{}</text>",
                l - 4.0,
                y + 3.0,
                escape(label)
            );
        }
    }
}

fn numeric_ticks(lo: f64, hi: f64, k: usize) -> Vec<(f64, String)> {
    (0..=k)
        .map(|i| {
            let v = lo + (hi - lo) * i as f64 / k as f64;
            (v, format!("{v:.2}"))
        })
        .collect()
}

/// One set of mean ranks drawn with a letter marker.
#[derive(Debug, Clone, PartialEq)]
pub struct RankSeries {
    pub label: String,
    pub marker: char,
    pub names: Vec<String>,
    pub mean_rank: Vec<f64>,
}

pub fn render_rank_scatter(series: &[RankSeries], style: &Style) -> Result<String, CliError> {
    let Some(first) = series.first() else {
        return Err(CliError::Internal("rank scatter needs at least one series".into()));
    };
    let p = first.names.len();
    if p == 0 || series.iter().any(|s| s.names.len() != p || s.mean_rank.len() != p) {
        return Err(CliError::Internal("rank series must share a non-empty feature list".into()));
    }
    let frame = Frame::new(style, (0.5, p as f64 + 0.5), (0.5, p as f64 + 0.5));
    let mut out = String::new();
    frame.open(&mut out);
    let xt: Vec<(f64, String)> = first.names.iter().enumerate().map(|(j, n)| ((j + 1) as f64, n.clone())).collect();
    let yt: Vec<(f64, String)> = (1..=p).map(|r| (r as f64, r.to_string())).collect();
    frame.axes(&mut out, &xt, &yt);
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for (j, r) in s.mean_rank.iter().enumerate() {
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"{color}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
                frame.px((j + 1) as f64),
                frame.py(*r) + 4.0,
                escape(&s.marker.to_string())
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"{color}\" font-family=\"sans-serif\" font-size=\"10\">{} = {}</text>",
            style.width - style.margin + 4.0,
            style.margin + 14.0 * (k as f64 + 1.0),
            escape(&s.marker.to_string()),
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// One polyline with a per-point support flag.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSeries {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub supported: Vec<bool>,
    pub width: f64,
}

impl LineSeries {
    /// Every curve in `c`, labelled by row id (or "PD").
    pub fn from_curve(c: &EffectCurve, label: &str, width: f64) -> Vec<LineSeries> {
        c.values
            .iter()
            .enumerate()
            .map(|(r, v)| LineSeries {
                label: match c.row_ids.get(r) {
                    Some(id) => format!("{label} row {id}"),
                    None => label.to_string(),
                },
                x: c.grid.clone(),
                y: v.clone(),
                supported: c.support[r].clone(),
                width,
            })
            .collect()
    }
}

/// Maximal runs of segments sharing a support state. A segment is
/// supported when both of its end points are.
fn support_runs(supported: &[bool]) -> Vec<(usize, usize, bool)> {
    let mut runs = Vec::new();
    if supported.len() < 2 {
        if supported.len() == 1 {
            runs.push((0, 0, supported[0]));
        }
        return runs;
    }
    let seg = |i: usize| supported[i] && supported[i + 1];
    let mut start = 0;
    for i in 1..supported.len() - 1 {
        if seg(i) != seg(start) {
            runs.push((start, i, seg(start)));
            start = i;
        }
    }
    runs.push((start, supported.len() - 1, seg(start)));
    runs
}

/// Lines over a shared x range; supported stretches solid, the rest dashed.
pub fn render_lines(series: &[LineSeries], style: &Style) -> Result<String, CliError> {
    if series.is_empty() || series.iter().any(|s| s.x.is_empty()) {
        return Err(CliError::Internal("line chart needs at least one non-empty series".into()));
    }
    if series.iter().any(|s| s.x.len() != s.y.len() || s.x.len() != s.supported.len()) {
        return Err(CliError::Internal("line series have ragged coordinates".into()));
    }
    let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&LineSeries) -> &Vec<f64>| {
        series.iter().flat_map(|s| pick(s).iter().copied()).filter(|v| v.is_finite()).fold(init, f)
    };
    let (xmin, xmax) = (fold(f64::min, f64::INFINITY, |s| &s.x), fold(f64::max, f64::NEG_INFINITY, |s| &s.x));
    let (ymin, ymax) = (fold(f64::min, f64::INFINITY, |s| &s.y), fold(f64::max, f64::NEG_INFINITY, |s| &s.y));
    if !(xmin.is_finite() && ymin.is_finite()) {
        return Err(CliError::Internal("line chart has no finite values".into()));
    }
    let frame = Frame::new(style, (xmin, xmax), (ymin, ymax));
    let mut out = String::new();
    frame.open(&mut out);
    frame.axes(
        &mut out,
        &numeric_ticks(frame.x0, frame.x1, 4),
        &numeric_ticks(frame.y0, frame.y1, 4),
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(out, "<g><title>{}</title>", escape(&s.label));
        for (a, b, solid) in support_runs(&s.supported) {
            let pts: Vec<String> = (a..=b)
                .map(|i| format!("{:.2},{:.2}", frame.px(s.x[i]), frame.py(s.y[i])))
                .collect();
            let dash = if solid { "" } else { " stroke-dasharray=\"4 3\"" };
            let _ = writeln!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{:.2}\"{dash}/>",
                pts.join(" "),
                s.width
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldLayer {
    Mean,
    Sd,
}

const LEVELS: usize = 10;
const RAMP: [(u8, u8, u8); 5] = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)];

fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0) * (RAMP.len() - 1) as f64;
    let i = (t.floor() as usize).min(RAMP.len() - 2);
    let f = t - i as f64;
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * f).round() as u8;
    let (a, b) = (RAMP[i], RAMP[i + 1]);
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Heatmap of one layer with values binned into equal-width filled levels,
/// training points overlaid.
pub fn render_field(field: &GridField, layer: FieldLayer, style: &Style) -> Result<String, CliError> {
    let vals = match layer {
        FieldLayer::Mean => &field.mean,
        FieldLayer::Sd => &field.sd,
    };
    if vals.is_empty() || field.x1.len() < 2 || field.x2.len() < 2 {
        return Err(CliError::Internal("field has no cells".into()));
    }
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let frame = Frame::new(style, field.bounds[0], field.bounds[1]);
    let mut out = String::new();
    frame.open(&mut out);
    let dx = (field.x1[1] - field.x1[0]).abs();
    let dy = (field.x2[1] - field.x2[0]).abs();
    for (a, b, m, s) in field.cells() {
        let v = match layer {
            FieldLayer::Mean => m,
            FieldLayer::Sd => s,
        };
        let level = if hi > lo {
            (((v - lo) / (hi - lo)) * LEVELS as f64).floor().min((LEVELS - 1) as f64)
        } else {
            0.0
        };
        let x = frame.px(a - dx / 2.0);
        let y = frame.py(b + dy / 2.0);
        let w = frame.px(a + dx / 2.0) - x;
        let h = frame.py(b - dy / 2.0) - y;
        let _ = writeln!(
            out,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
            w + 0.05,
            h + 0.05,
            ramp(level / (LEVELS - 1) as f64)
        );
    }
    for p in &field.training_points {
        let _ = writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.6\" fill=\"none\" stroke=\"black\" stroke-width=\"0.6\"/>",
            frame.px(p[0]),
            frame.py(p[1])
        );
    }
    frame.axes(
        &mut out,
        &numeric_ticks(field.bounds[0].0, field.bounds[0].1, 4),
        &numeric_ticks(field.bounds[1].0, field.bounds[1].1, 4),
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">range {lo:.3} to {hi:.3}</text>",
        style.width - style.margin,
        style.height - 8.0
    );
    out.push_str("</svg>\n");
    Ok(out)
}
