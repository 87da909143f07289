//! Sweep CSV parsing and SVG rendering of mean metric versus `M/N`.

use std::fmt;

use crate::experiment::{CentroidRow, ReconstructRow, CENTROID_HEADER, RECONSTRUCT_HEADER};

const RECONSTRUCT_COLUMNS: &str = "lens_power,ratio,trial,pixel_id,m_count,osnr_db,iterations,converged";
const CENTROID_COLUMNS: &str = "lens_power,ratio,trial,pixel_id,m_count,error_px";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Reconstruct,
    Centroid,
}

/// One per-trial observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub lens_power: f64,
    pub ratio: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCsv {
    pub kind: SweepKind,
    /// Input SNR recorded by the reconstruction sweep.
    pub isnr_db: Option<f64>,
    pub points: Vec<SweepPoint>,
}

/// Parse failure with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvError {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for CsvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for CsvError {}

fn err(line: u64, message: impl Into<String>) -> CsvError {
    CsvError {
        line,
        message: message.into(),
    }
}

fn parse_banner(line: &str) -> Result<(SweepKind, Option<f64>), CsvError> {
    if line == CENTROID_HEADER {
        return Ok((SweepKind::Centroid, None));
    }
    let rest = line
        .strip_prefix(RECONSTRUCT_HEADER)
        .ok_or_else(|| err(1, format!("expected `{RECONSTRUCT_HEADER}` or `{CENTROID_HEADER}`")))?;
    if rest.is_empty() {
        return Ok((SweepKind::Reconstruct, None));
    }
    let v = rest
        .strip_prefix(" isnr_db=")
        .and_then(|v| v.parse::<f64>().ok())
        .filter(|v| v.is_finite())
        .ok_or_else(|| err(1, format!("bad header suffix `{rest}`")))?;
    Ok((SweepKind::Reconstruct, Some(v)))
}

/// Parses exactly the schema written by the sweep commands.
pub fn parse_sweep_csv(text: &str) -> Result<SweepCsv, CsvError> {
    let (banner, body) = match text.split_once('\n') {
        Some((b, rest)) => (b.trim_end_matches('\r'), rest),
        None => (text.trim_end_matches('\r'), ""),
    };
    let (kind, isnr_db) = parse_banner(banner)?;
    let columns = match kind {
        SweepKind::Reconstruct => RECONSTRUCT_COLUMNS,
        SweepKind::Centroid => CENTROID_COLUMNS,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(body.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| err(2, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != columns {
        return Err(err(2, format!("expected columns `{columns}`, found `{header}`")));
    }

    let mut points = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line() + 1;
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(err(line, e.to_string())),
        }
        let line = record.position().map_or(line, |p| p.line() + 1);
        let point = match kind {
            SweepKind::Reconstruct => {
                let r: ReconstructRow = record
                    .deserialize(None)
                    .map_err(|e| err(line, e.to_string()))?;
                SweepPoint {
                    lens_power: r.lens_power,
                    ratio: r.ratio,
                    value: r.osnr_db,
                }
            }
            SweepKind::Centroid => {
                let r: CentroidRow = record
                    .deserialize(None)
                    .map_err(|e| err(line, e.to_string()))?;
                SweepPoint {
                    lens_power: r.lens_power,
                    ratio: r.ratio,
                    value: r.error_px,
                }
            }
        };
        if !point.ratio.is_finite() || !point.lens_power.is_finite() || point.value.is_nan() {
            return Err(err(line, "non-finite lens power, ratio or NaN value"));
        }
        points.push(point);
    }
    if points.is_empty() {
        return Err(err(reader.position().line(), "no data rows"));
    }
    Ok(SweepCsv {
        kind,
        isnr_db,
        points,
    })
}

/// `(lens_power, [(ratio, mean)])` per lens.
pub type Series = Vec<(f64, Vec<(f64, f64)>)>;

/// Mean value per `(lens, ratio)`, lenses in first-seen order, ratios ascending.
pub fn series(csv: &SweepCsv) -> Series {
    // (lens, [(ratio, sum, count)])
    type Cells = Vec<(f64, f64, usize)>;
    let mut out: Vec<(f64, Cells)> = Vec::new();
    for p in &csv.points {
        let idx = match out.iter().position(|(l, _)| *l == p.lens_power) {
            Some(i) => i,
            None => {
                out.push((p.lens_power, Vec::new()));
                out.len() - 1
            }
        };
        let cells = &mut out[idx].1;
        match cells.iter_mut().find(|c| c.0 == p.ratio) {
            Some(c) => {
                c.1 += p.value;
                c.2 += 1;
            }
            None => cells.push((p.ratio, p.value, 1)),
        }
    }
    out.into_iter()
        .map(|(lens, mut cells)| {
            cells.sort_by(|a, b| a.0.total_cmp(&b.0));
            (lens, cells.into_iter().map(|(r, s, n)| (r, s / n as f64)).collect())
        })
        .collect()
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn label(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Renders mean metric per lens versus `M/N` in percent, with the dashed
/// guide at the iSNR (reconstruction) or at one pixel (centroid).
pub fn render_svg(csv: &SweepCsv) -> String {
    let lines = series(csv);
    let guide = match csv.kind {
        SweepKind::Reconstruct => csv.isnr_db,
        SweepKind::Centroid => Some(1.0),
    };
    let (y_label, title) = match csv.kind {
        SweepKind::Reconstruct => ("mean oSNR (dB)", "Reconstruction quality"),
        SweepKind::Centroid => ("mean centroid error (px)", "Compressive centroid error"),
    };

    let finite = lines
        .iter()
        .flat_map(|(_, c)| c.iter().map(|p| p.1))
        .filter(|v| v.is_finite());
    let (mut y_lo, mut y_hi) = finite
        .chain(guide)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (0.0, 1.0);
    }
    if csv.kind == SweepKind::Centroid {
        y_lo = y_lo.min(0.0);
    }
    let pad = ((y_hi - y_lo) * 0.08).max(1e-3);
    let (y_lo, y_hi) = (y_lo - pad, y_hi + pad);
    let xs = lines.iter().flat_map(|(_, c)| c.iter().map(|p| 100.0 * p.0));
    let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let xpad = ((x_hi - x_lo) * 0.05).max(0.05 * x_hi.abs()).max(1e-3);
    let (x_lo, x_hi) = ((x_lo - xpad).max(0.0), x_hi + xpad);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| {
        let y = if y.is_finite() { y } else { y_hi };
        TOP + (y_hi - y) / (y_hi - y_lo) * plot_h
    };

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str(&format!("<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"));
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
        LEFT + plot_w / 2.0
    ));
    s.push_str(&format!(
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"black\"/>\n"
    ));
    for t in nice_ticks(x_lo, x_hi) {
        let x = px(t);
        s.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{0:.2}\" x2=\"{x:.2}\" y2=\"{1:.2}\" stroke=\"black\"/>\n\
             <text x=\"{x:.2}\" y=\"{2:.2}\" text-anchor=\"middle\">{3}</text>\n",
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 19.0,
            label(t)
        ));
    }
    for t in nice_ticks(y_lo, y_hi) {
        let y = py(t);
        s.push_str(&format!(
            "<line x1=\"{0:.2}\" y1=\"{y:.2}\" x2=\"{LEFT}\" y2=\"{y:.2}\" stroke=\"black\"/>\n\
             <text x=\"{1:.2}\" y=\"{2:.2}\" text-anchor=\"end\">{3}</text>\n",
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0,
            label(t)
        ));
    }
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">M/N (%)</text>\n",
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    ));
    s.push_str(&format!(
        "<text x=\"16\" y=\"{0:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0:.1})\">{y_label}</text>\n",
        TOP + plot_h / 2.0
    ));
    if let Some(g) = guide {
        s.push_str(&format!(
            "<line class=\"guide\" x1=\"{LEFT}\" y1=\"{0:.2}\" x2=\"{1:.2}\" y2=\"{0:.2}\" \
             stroke=\"gray\" stroke-dasharray=\"4 3\" data-value=\"{g}\"/>\n",
            py(g),
            LEFT + plot_w
        ));
    }
    for (i, (lens, cells)) in lines.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = cells
            .iter()
            .map(|(r, v)| format!("{:.2},{:.2}", px(100.0 * r), py(*v)))
            .collect();
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\"/>\n",
            path.join(" ")
        ));
        for (r, v) in cells {
            s.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"{color}\"><title>{} D, {}%: {}</title></circle>\n",
                px(100.0 * r),
                py(*v),
                label(*lens),
                label(100.0 * r),
                v
            ));
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        s.push_str(&format!(
            "<line x1=\"{0:.1}\" y1=\"{ly:.1}\" x2=\"{1:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\"/>\n\
             <text x=\"{2:.1}\" y=\"{3:.1}\">{4} D</text>\n",
            WIDTH - RIGHT + 12.0,
            WIDTH - RIGHT + 32.0,
            WIDTH - RIGHT + 38.0,
            ly + 4.0,
            label(*lens)
        ));
    }
    s.push_str("</svg>\n");
    s
}
