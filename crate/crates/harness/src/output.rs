//! Result tables (CSV) and figures (SVG).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::regions::{DensityGrid, Region};

pub const COVERAGE_HEADER: [&str; 6] = [
    "multiplier",
    "method",
    "level",
    "coverage",
    "replications",
    "mean_width",
];
pub const KL_HEADER: [&str; 4] = ["outlier_len", "method", "mean_kl", "replications"];
pub const TIMING_HEADER: [&str; 3] = ["experiment", "method", "seconds"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub multiplier: f64,
    pub method: String,
    pub level: f64,
    pub coverage: f64,
    pub replications: usize,
    pub mean_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlRow {
    pub outlier_len: usize,
    pub method: String,
    pub mean_kl: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub experiment: String,
    pub method: String,
    pub seconds: f64,
}

/// Writes `rows` under a fixed header; an empty slice gives a header-only
/// file.
pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    writer.write_record(header)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Grid dump with columns `x,y,density,in_region`.
pub fn write_region_csv(path: &Path, grid: &DensityGrid, region: &Region) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["x", "y", "density", "in_region"])?;
    for (iy, y) in grid.ys.iter().enumerate() {
        for (ix, x) in grid.xs.iter().enumerate() {
            let k = iy * grid.nx() + ix;
            writer.write_record([
                x.to_string(),
                y.to_string(),
                grid.values[k].to_string(),
                u8::from(region.inside[k]).to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |r: (f64, f64)| if r.1 > r.0 { r } else { (r.0 - 0.5, r.0 + 0.5) };
        Self {
            x: widen(x),
            y: widen(y),
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn axes(&self, svg: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (x0, x1) = (self.px(self.x.0), self.px(self.x.1));
        let (y0, y1) = (self.py(self.y.0), self.py(self.y.1));
        let _ = writeln!(
            svg,
            r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y0 - y1
        );
        for t in 0..=4 {
            let fx = self.x.0 + (self.x.1 - self.x.0) * t as f64 / 4.0;
            let fy = self.y.0 + (self.y.1 - self.y.0) * t as f64 / 4.0;
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
                self.px(fx),
                y0 + 16.0,
                tick(fx)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
                x0 - 6.0,
                self.py(fy) + 4.0,
                tick(fy)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            MARGIN / 2.0,
            escape(title)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 15.0,
            escape(xlabel)
        );
        let _ = writeln!(
            svg,
            r#"<text x="15" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 15 {:.2})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(ylabel)
        );
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn open_svg() -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn save(path: &Path, mut svg: String) -> Result<()> {
    svg.push_str("</svg>\n");
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, svg)?;
    Ok(())
}

/// A named polyline for [`line_plot`].
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub fn line_plot(path: &Path, title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> Result<()> {
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut xr, mut yr) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
    for &(x, y) in all {
        xr = (xr.0.min(x), xr.1.max(x));
        yr = (yr.0.min(y), yr.1.max(y));
    }
    if !xr.0.is_finite() {
        xr = (0.0, 1.0);
        yr = (0.0, 1.0);
    }
    let frame = Frame::new(xr, (yr.0.min(0.0), yr.1));
    let mut svg = open_svg();
    frame.axes(&mut svg, title, xlabel, ylabel);
    for (k, s) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#,
                frame.px(x),
                frame.py(y)
            );
        }
        let ly = MARGIN + 16.0 * k as f64 + 10.0;
        let lx = WIDTH - MARGIN - 150.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    save(path, svg)
}

/// Highest-density region (shaded), the data points and the density peaks.
pub fn region_plot(
    path: &Path,
    title: &str,
    labels: (&str, &str),
    grid: &DensityGrid,
    region: &Region,
    points: &[DVector<f64>],
) -> Result<()> {
    let frame = Frame::new(grid.bounds.x, grid.bounds.y);
    let mut svg = open_svg();
    let dx = (grid.bounds.x.1 - grid.bounds.x.0) / grid.nx() as f64;
    let dy = (grid.bounds.y.1 - grid.bounds.y.0) / grid.ny() as f64;
    // one rectangle per horizontal run of in-region cells
    for iy in 0..grid.ny() {
        let mut ix = 0;
        while ix < grid.nx() {
            if !region.inside[iy * grid.nx() + ix] {
                ix += 1;
                continue;
            }
            let start = ix;
            while ix < grid.nx() && region.inside[iy * grid.nx() + ix] {
                ix += 1;
            }
            let x0 = grid.bounds.x.0 + start as f64 * dx;
            let x1 = grid.bounds.x.0 + ix as f64 * dx;
            let y0 = grid.bounds.y.0 + iy as f64 * dy;
            let (px0, px1) = (frame.px(x0), frame.px(x1));
            let (py_top, py_bottom) = (frame.py(y0 + dy), frame.py(y0));
            let _ = writeln!(
                svg,
                "<rect x=\"{px0:.2}\" y=\"{py_top:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#9ecae1\" stroke=\"none\"/>",
                px1 - px0,
                py_bottom - py_top
            );
        }
    }
    for p in points {
        if p[0] < grid.bounds.x.0 || p[0] > grid.bounds.x.1 || p[1] < grid.bounds.y.0 || p[1] > grid.bounds.y.1 {
            continue;
        }
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="black" fill-opacity="0.6"/>"#,
            frame.px(p[0]),
            frame.py(p[1])
        );
    }
    for (x, y, _) in grid.local_maxima(0.01) {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="none" stroke="red" stroke-width="2"/>"#,
            frame.px(x),
            frame.py(y)
        );
    }
    frame.axes(&mut svg, title, labels.0, labels.1);
    save(path, svg)
}
