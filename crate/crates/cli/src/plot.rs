//! Minimal SVG line charts.

use std::fmt::Write as _;

use stationcast::metrics::ForecastSet;

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 200.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 32.0;

pub struct Line<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One chart panel with its top-left corner at `y0`. With `log_y` the y
/// values are plotted as log10 and ticks are labelled with the raw value.
fn panel(out: &mut String, y0: f64, title: &str, lines: &[Line], log_y: bool) {
    let ty = |y: f64| if log_y { y.log10() } else { y };
    let (x_lo, x_hi) = bounds(lines.iter().flat_map(|l| l.points.iter().map(|p| p.0)));
    let (y_lo, y_hi) = bounds(lines.iter().flat_map(|l| l.points.iter().map(|p| ty(p.1))));
    let (w, h) = (PANEL_W - MARGIN_L - MARGIN_R, PANEL_H - MARGIN_T - MARGIN_B);
    let sx = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * w;
    let sy = |y: f64| y0 + MARGIN_T + (1.0 - (ty(y) - y_lo) / (y_hi - y_lo)) * h;

    let _ = writeln!(
        out,
        r#"<text x="{MARGIN_L}" y="{:.2}" font-size="13">{}</text>"#,
        y0 + 18.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN_L}" y="{:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="#999"/>"##,
        y0 + MARGIN_T
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let yv = y_lo + f * (y_hi - y_lo);
        let label = if log_y { 10f64.powf(yv) } else { yv };
        let py = y0 + MARGIN_T + (1.0 - f) * h;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"#,
            MARGIN_L - 4.0,
            py + 3.0,
            tick(label)
        );
        let xv = x_lo + f * (x_hi - x_lo);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
            MARGIN_L + f * w,
            y0 + PANEL_H - MARGIN_B + 14.0,
            tick(xv)
        );
    }
    for (i, line) in lines.iter().enumerate() {
        let mut d = String::new();
        for (j, &(x, y)) in line.points.iter().filter(|p| p.1.is_finite() && (!log_y || p.1 > 0.0)).enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if j == 0 { "M" } else { " L" }, sx(x), sy(y));
        }
        let _ = writeln!(
            out,
            r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.5"><title>{}</title></path>"#,
            line.color,
            escape(line.label)
        );
        let lx = PANEL_W - MARGIN_R - 110.0;
        let ly = y0 + MARGIN_T + 12.0 + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
            ly - 3.0,
            lx + 16.0,
            ly - 3.0,
            line.color,
            lx + 20.0,
            ly,
            escape(line.label)
        );
    }
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e5).contains(&a) {
        format!("{v:.1e}")
    } else {
        format!("{:.2}", v)
    }
}

fn document(panels: usize, body: &str) -> String {
    let height = PANEL_H * panels as f64;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PANEL_W}\" height=\"{height}\" viewBox=\"0 0 {PANEL_W} {height}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

/// Prediction against truth over lead hours for one station and sample,
/// one panel per variable.
pub fn forecast_chart(set: &ForecastSet, station: usize, sample: usize) -> String {
    let mut body = String::new();
    for (v, var) in set.variables.iter().enumerate() {
        let series = |values: &[f64]| {
            (0..set.horizon)
                .map(|k| ((k + 1) as f64, values[set.index(sample, station, k, v)]))
                .collect::<Vec<_>>()
        };
        let title = format!(
            "{} sample {sample}: {} ({}) vs lead hour",
            set.station_ids[station],
            var.label(),
            var.unit()
        );
        let lines = [
            Line {
                label: "observed",
                color: "#222222",
                points: series(&set.targets),
            },
            Line {
                label: set.model.as_deref().unwrap_or("forecast"),
                color: "#d62728",
                points: series(&set.predictions),
            },
        ];
        panel(&mut body, PANEL_H * v as f64, &title, &lines, false);
    }
    document(set.variables.len(), &body)
}

/// Loss-curve columns after `iteration`, keyed by header name.
pub struct LossCurve {
    pub iterations: Vec<f64>,
    pub columns: Vec<(String, Vec<f64>)>,
}

pub fn parse_loss_curve(text: &str) -> Result<LossCurve, String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty loss curve")?.split(',').collect();
    if header.first() != Some(&"iteration") {
        return Err("loss curve must start with an `iteration` column".into());
    }
    let mut iterations = Vec::new();
    let mut columns: Vec<(String, Vec<f64>)> = header[1..].iter().map(|h| (h.to_string(), Vec::new())).collect();
    for (row, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(format!("row {}: {} cells, expected {}", row + 1, cells.len(), header.len()));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|_| format!("row {}: bad number `{s}`", row + 1));
        iterations.push(parse(cells[0])?);
        for (col, cell) in columns.iter_mut().zip(&cells[1..]) {
            col.1.push(parse(cell)?);
        }
    }
    if iterations.is_empty() {
        return Err("loss curve has no rows".into());
    }
    Ok(LossCurve { iterations, columns })
}

/// Loss terms against iteration on a log axis when every value is positive.
pub fn loss_chart(curve: &LossCurve) -> String {
    const SHOWN: [(&str, &str); 4] = [("total", "#222222"), ("L_data", "#1f77b4"), ("L_pw", "#ff7f0e"), ("L_smooth", "#2ca02c")];
    let lines: Vec<Line> = SHOWN
        .iter()
        .filter_map(|(name, color)| {
            let (_, values) = curve.columns.iter().find(|(h, _)| h == name)?;
            Some(Line {
                label: name,
                color,
                points: curve.iterations.iter().copied().zip(values.iter().copied()).collect(),
            })
        })
        .collect();
    let log_y = lines.iter().all(|l| l.points.iter().all(|p| p.1 > 0.0));
    let mut body = String::new();
    panel(&mut body, 0.0, if log_y { "training loss (log scale)" } else { "training loss" }, &lines, log_y);
    document(1, &body)
}
