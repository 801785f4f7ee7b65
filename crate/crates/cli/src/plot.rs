//! Static SVG plots of the CSV exports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Frame {
        let mut f = Frame {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for (x, y) in points {
            f.x0 = f.x0.min(x);
            f.x1 = f.x1.max(x);
            f.y0 = f.y0.min(y);
            f.y1 = f.y1.max(y);
        }
        if !f.x0.is_finite() {
            (f.x0, f.x1, f.y0, f.y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if f.x1 <= f.x0 {
            f.x1 = f.x0 + 1.0;
        }
        f.y0 = f.y0.min(0.0);
        if f.y1 <= f.y0 {
            f.y1 = f.y0 + 1.0;
        }
        f
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

fn axes(svg: &mut String, f: &Frame, title: &str, xlabel: &str, ylabel: &str) {
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-size="15">{title}</text>
<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>
<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>
"#,
        W / 2.0,
        H - BOTTOM,
        W - RIGHT,
        H - BOTTOM,
        H - BOTTOM
    );
    for k in 0..=4 {
        let x = f.x0 + (f.x1 - f.x0) * k as f64 / 4.0;
        let y = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            f.px(x),
            H - BOTTOM + 16.0,
            label(x)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{0:.1}" x2="{1}" y2="{0:.1}" stroke="#ddd"/><text x="{2}" y="{3:.1}" text-anchor="end">{4}</text>"##,
            f.py(y),
            W - RIGHT,
            LEFT - 6.0,
            f.py(y) + 4.0,
            label(y)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>
<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{ylabel}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 10.0,
        H / 2.0,
        H / 2.0
    );
}

fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &BTreeMap<String, Vec<(f64, f64)>>) -> String {
    let f = Frame::fit(series.values().flatten().copied());
    let mut svg = String::new();
    axes(&mut svg, &f, title, xlabel, ylabel);
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = TOP + 4.0 + 16.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{ly}" width="12" height="3" fill="{color}"/><text x="{}" y="{}">{name}</text>"#,
            W - RIGHT - 150.0,
            W - RIGHT - 132.0,
            ly + 5.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bar_chart(title: &str, xlabel: &str, bins: &[(f64, f64, f64)]) -> String {
    let f = Frame::fit(bins.iter().flat_map(|&(lo, hi, c)| [(lo, c), (hi, 0.0)]));
    let mut svg = String::new();
    axes(&mut svg, &f, title, xlabel, "runs");
    for &(lo, hi, c) in bins {
        let (x0, x1) = (f.px(lo), f.px(hi).max(f.px(lo) + 2.0));
        let _ = writeln!(
            svg,
            r##"<rect x="{x0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#1f77b4" stroke="white"/>"##,
            f.py(c),
            x1 - x0,
            f.py(0.0) - f.py(c)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn read_rows(path: &Path) -> Result<Vec<BTreeMap<String, String>>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = r.deserialize().collect::<Result<Vec<BTreeMap<String, String>>, _>>()?;
    Ok(rows)
}

fn num(row: &BTreeMap<String, String>, key: &str) -> Option<f64> {
    row.get(key)?.parse().ok()
}

fn grouped(
    rows: &[BTreeMap<String, String>],
    group: &str,
    x: &str,
    y: &str,
    suffix: &str,
) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for row in rows {
        if let (Some(g), Some(xv), Some(yv)) = (row.get(group), num(row, x), num(row, y)) {
            series.entry(format!("{g}{suffix}")).or_default().push((xv, yv));
        }
    }
    series
}

/// Writes a plot for every recognised CSV in `dir` and returns the files written.
pub fn plot_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut emit = |name: &str, svg: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, svg).with_context(|| format!("writing {}", p.display()))?;
        written.push(p);
        Ok(())
    };

    let nav = dir.join("nav_error.csv");
    if nav.exists() {
        let rows = read_rows(&nav)?;
        let series = grouped(&rows, "process", "t_s", "error", "");
        if !series.is_empty() {
            emit(
                "nav_error.svg",
                line_chart("Relative navigation error", "time (s)", "error (m)", &series),
            )?;
        }
    }

    let heap = dir.join("heap.csv");
    if heap.exists() {
        let rows = read_rows(&heap)?;
        let mut series = grouped(&rows, "process", "t_s", "transient", " transient");
        series.extend(grouped(&rows, "process", "t_s", "resting", " resting"));
        if !series.is_empty() {
            emit("heap.svg", line_chart("Process heap use", "time (s)", "bytes", &series))?;
        }
    }

    let hist = dir.join("histogram.csv");
    if hist.exists() {
        let rows = read_rows(&hist)?;
        let bins: Vec<(f64, f64, f64)> = rows
            .iter()
            .filter_map(|r| Some((num(r, "lower")?, num(r, "upper")?, num(r, "count")?)))
            .collect();
        if !bins.is_empty() {
            emit("histogram.svg", bar_chart("Monte Carlo distribution", "value", &bins))?;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_maps_corners() {
        let f = Frame::fit([(0.0, 0.0), (10.0, 5.0)].into_iter());
        assert_eq!(f.px(0.0), LEFT);
        assert_eq!(f.px(10.0), W - RIGHT);
        assert_eq!(f.py(0.0), H - BOTTOM);
        assert_eq!(f.py(5.0), TOP);
    }

    #[test]
    fn charts_are_closed_svg() {
        let mut s = BTreeMap::new();
        s.insert("A".to_string(), vec![(0.0, 1.0), (1.0, 2.0)]);
        let svg = line_chart("t", "x", "y", &s);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("<polyline"));
        let bars = bar_chart("h", "v", &[(0.0, 1.0, 3.0), (1.0, 2.0, 1.0)]);
        assert_eq!(bars.matches("fill=\"#1f77b4\"").count(), 2);
    }
}
