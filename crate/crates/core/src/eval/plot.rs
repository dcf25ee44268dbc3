use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::TimeSeriesInstance;
use crate::error::{Error, Result};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Standalone SVG line plot: the ground truth in grey, the entries a method
/// could see as dots, and one coloured line per method.
pub fn render_series_svg(truth: &TimeSeriesInstance, visible: &[bool], predictions: &[(String, Vec<f64>)]) -> Result<String> {
    let n = truth.len();
    if visible.len() != n || predictions.iter().any(|(_, p)| p.len() != n) {
        return Err(Error::dim("plot inputs must match the series length"));
    }
    if n == 0 {
        return Err(Error::Data(format!("series `{}` is empty", truth.id)));
    }
    let ys = truth
        .values
        .iter()
        .zip(&truth.mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .chain(predictions.iter().flat_map(|(_, p)| p.iter().copied()))
        .filter(|v| v.is_finite());
    let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0) };
    let (t0, t1) = (truth.timestamps[0], truth.timestamps[n - 1]);
    let tspan = if t1 > t0 { t1 - t0 } else { 1.0 };
    let x = |t: f64| MARGIN + (t - t0) / tspan * (WIDTH - 2.0 * MARGIN);
    let y = |v: f64| HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN);
    let points = |vals: &[f64], known: &dyn Fn(usize) -> bool| {
        let mut s = String::new();
        for (i, &v) in vals.iter().enumerate() {
            if known(i) && v.is_finite() {
                if !s.is_empty() {
                    s.push(' ');
                }
                let _ = write!(s, "{:.2},{:.2}", x(truth.timestamps[i]), y(v));
            }
        }
        s
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{} ({})</text>"#,
        escape(&truth.id),
        escape(&truth.city)
    );
    let _ = writeln!(
        svg,
        r##"<polyline class="truth" fill="none" stroke="#888888" stroke-width="1.5" points="{}"/>"##,
        points(&truth.values, &|i| truth.mask[i])
    );
    for (k, (name, pred)) in predictions.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<polyline class="method" data-method="{}" fill="none" stroke="{colour}" stroke-width="1.2" points="{}"/>"#,
            escape(name),
            points(pred, &|_| true)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" fill="{colour}">{}</text>"#,
            WIDTH - MARGIN - 120.0,
            24.0 + 14.0 * k as f64,
            escape(name)
        );
    }
    for i in (0..n).filter(|&i| visible[i] && truth.values[i].is_finite()) {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="black"/>"#,
            x(truth.timestamps[i]),
            y(truth.values[i])
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn plot_series_svg(
    truth: &TimeSeriesInstance,
    visible: &[bool],
    predictions: &[(String, Vec<f64>)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let svg = render_series_svg(truth, visible, predictions)?;
    let path = path.as_ref();
    fs::write(path, svg).map_err(|e| Error::Io(e).context(path.display()))
}
