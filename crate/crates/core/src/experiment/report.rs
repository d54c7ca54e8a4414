//! CSV and SVG output.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::{ExperimentResult, SeriesRow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    SvgPlot,
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Parse {
        what: "report csv",
        detail: e.to_string(),
    }
}

/// Writes `t,mean,se,n`. Floats use the shortest round-trip representation,
/// so re-parsing is bit-exact.
pub fn write_series_csv<W: Write>(rows: &[SeriesRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "mean", "se", "n"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.t.to_string(), r.mean.to_string(), r.se.to_string(), r.n.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

/// Parses a series CSV into `(t, mean, se, n)` tuples.
pub fn read_series_csv<R: Read>(input: R) -> Result<Vec<(f64, f64, f64, usize)>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "mean", "se", "n"] {
        return Err(csv_err(format!("unexpected header {headers:?}")));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let f = |i: usize| rec[i].parse::<f64>().map_err(csv_err);
        out.push((f(0)?, f(1)?, f(2)?, rec[3].parse::<usize>().map_err(csv_err)?));
    }
    Ok(out)
}

/// Fit and theory information needed to redraw a plot.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub config_hash: String,
    pub metric: String,
    pub p: f64,
    pub base_seed: u64,
    pub replications: usize,
    pub fit_slope: Option<f64>,
    pub fit_intercept: Option<f64>,
    pub fit_slope_se: Option<f64>,
    /// `-(theory exponent)` for `E W_p^p`.
    pub theory_slope: f64,
    pub theory: String,
    pub tolerance: f64,
    pub floor: f64,
    pub pass: bool,
}

impl Summary {
    pub fn from_result(r: &ExperimentResult) -> Self {
        let v = r.verdict();
        Summary {
            config_hash: r.config_hash.clone(),
            metric: r.metric.tag().into(),
            p: r.p,
            base_seed: r.rows.first().map_or(0, |row| row.base_seed),
            replications: r.samples.len(),
            fit_slope: r.fit.map(|f| f.slope),
            fit_intercept: r.fit.map(|f| f.intercept),
            fit_slope_se: r.fit.map(|f| f.slope_se),
            theory_slope: v.theory_slope,
            theory: r.theory.to_string(),
            tolerance: v.tolerance,
            floor: r.floor,
            pass: v.pass,
        }
    }

    fn pairs(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        vec![
            ("config_hash", self.config_hash.clone()),
            ("metric", self.metric.clone()),
            ("p", self.p.to_string()),
            ("base_seed", self.base_seed.to_string()),
            ("replications", self.replications.to_string()),
            ("fit_slope", opt(self.fit_slope)),
            ("fit_intercept", opt(self.fit_intercept)),
            ("fit_slope_se", opt(self.fit_slope_se)),
            ("theory_slope", self.theory_slope.to_string()),
            ("theory", self.theory.clone()),
            ("tolerance", self.tolerance.to_string()),
            ("floor", self.floor.to_string()),
            ("pass", self.pass.to_string()),
        ]
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["key", "value"]).map_err(csv_err)?;
        for (k, v) in self.pairs() {
            w.write_record([k, v.as_str()]).map_err(csv_err)?;
        }
        w.flush().map_err(csv_err)
    }
}

/// Parses a `key,value` summary CSV.
pub fn read_summary_csv<R: Read>(input: R) -> Result<Summary> {
    let mut r = csv::Reader::from_reader(input);
    let mut map = std::collections::HashMap::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        map.insert(rec[0].to_string(), rec[1].to_string());
    }
    let get = |k: &str| map.get(k).cloned().ok_or_else(|| csv_err(format!("missing key {k}")));
    let num = |k: &str| get(k)?.parse::<f64>().map_err(csv_err);
    let opt = |k: &str| -> Result<Option<f64>> {
        let s = get(k)?;
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(csv_err)
        }
    };
    Ok(Summary {
        config_hash: get("config_hash")?,
        metric: get("metric")?,
        p: num("p")?,
        base_seed: get("base_seed")?.parse().map_err(csv_err)?,
        replications: get("replications")?.parse().map_err(csv_err)?,
        fit_slope: opt("fit_slope")?,
        fit_intercept: opt("fit_intercept")?,
        fit_slope_se: opt("fit_slope_se")?,
        theory_slope: num("theory_slope")?,
        theory: get("theory")?,
        tolerance: num("tolerance")?,
        floor: num("floor")?,
        pass: get("pass")?.parse().map_err(csv_err)?,
    })
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;

/// Log-log scatter of the series with the fitted line (`class="fit"`) and a
/// theory guide line (`class="theory"`) anchored at the first point.
pub fn render_svg(series: &[(f64, f64, f64, usize)], summary: &Summary) -> String {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|r| r.0 > 0.0 && r.1 > 0.0)
        .map(|r| (r.0.log10(), r.1.log10()))
        .collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let title = format!(
        "{} p={} theory slope {:.4} fitted {}",
        escape(&summary.metric),
        summary.p,
        summary.theory_slope,
        summary.fit_slope.map_or("n/a".into(), |s| format!("{s:.4}"))
    );
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="30" font-family="sans-serif" font-size="14">{}</text>"#, escape(&title));
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let (mut x0, mut x1) = bounds(pts.iter().map(|p| p.0));
    let (mut y0, mut y1) = bounds(pts.iter().map(|p| p.1));
    pad(&mut x0, &mut x1);
    pad(&mut y0, &mut y1);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let _ = writeln!(
        svg,
        r#"<line class="axis" x1="{MARGIN}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<line class="axis" x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{b}" stroke="black"/>"#,
        b = HEIGHT - MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">log10 t</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="10" y="{}" font-family="sans-serif" font-size="12">log10 mean</text>"#,
        HEIGHT / 2.0
    );
    for &(x, y) in &pts {
        let _ = writeln!(svg, r#"<circle class="point" cx="{:.3}" cy="{:.3}" r="3" fill="navy"/>"#, sx(x), sy(y));
    }
    let (lx0, lx1) = (pts[0].0, pts[pts.len() - 1].0);
    if let (Some(slope), Some(intercept)) = (summary.fit_slope, summary.fit_intercept) {
        // intercept is in natural-log units: ln m = a + b ln t
        let y = |x: f64| (intercept / std::f64::consts::LN_10) + slope * x;
        let _ = writeln!(
            svg,
            r#"<line class="fit" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="crimson" stroke-width="2"/>"#,
            sx(lx0),
            sy(y(lx0)),
            sx(lx1),
            sy(y(lx1))
        );
    }
    let anchor = pts[0];
    let ty = |x: f64| anchor.1 + summary.theory_slope * (x - anchor.0);
    let _ = writeln!(
        svg,
        r#"<line class="theory" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="gray" stroke-dasharray="6,4"/>"#,
        sx(lx0),
        sy(ty(lx0)),
        sx(lx1),
        sy(ty(lx1))
    );
    svg.push_str("</svg>\n");
    svg
}

fn bounds(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn pad(lo: &mut f64, hi: &mut f64) {
    let span = (*hi - *lo).max(1e-3);
    *lo -= 0.1 * span;
    *hi += 0.1 * span;
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes the report into `dir` under the config-hash file stem: the series
/// CSV plus summary (`Csv`) or the plot (`SvgPlot`). Returns the files written.
pub fn emit_report(result: &ExperimentResult, format: ReportFormat, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: String| -> Result<(PathBuf, std::fs::File)> {
        let path = dir.join(name);
        let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok((path, f))
    };
    let summary = Summary::from_result(result);
    match format {
        ReportFormat::Csv => {
            let (series_path, f) = create(format!("{stem}.csv"))?;
            write_series_csv(&result.rows, f)?;
            let (summary_path, f) = create(format!("{stem}-summary.csv"))?;
            summary.write(f)?;
            Ok(vec![series_path, summary_path])
        }
        ReportFormat::SvgPlot => {
            let series: Vec<_> = result.rows.iter().map(|r| (r.t, r.mean, r.se, r.n)).collect();
            let (path, mut f) = create(format!("{stem}.svg"))?;
            f.write_all(render_svg(&series, &summary).as_bytes()).map_err(|e| Error::io(&path, e))?;
            Ok(vec![path])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, mean: f64) -> SeriesRow {
        SeriesRow {
            t,
            mean,
            se: mean / 7.0,
            n: 8,
            replications: 0..8,
            base_seed: 1,
            floored: false,
        }
    }

    #[test]
    fn empty_series_is_header_only() {
        let mut buf = Vec::new();
        write_series_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,mean,se,n\n");
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let rows: Vec<SeriesRow> = (0..9).map(|k| row(16.0 * 2f64.powi(k), 0.1 / 3f64.sqrt().powi(k) + 1e-17)).collect();
        let mut buf = Vec::new();
        write_series_csv(&rows, &mut buf).unwrap();
        let back = read_series_csv(buf.as_slice()).unwrap();
        for (r, b) in rows.iter().zip(&back) {
            assert_eq!(r.t.to_bits(), b.0.to_bits());
            assert_eq!(r.mean.to_bits(), b.1.to_bits());
            assert_eq!(r.se.to_bits(), b.2.to_bits());
            assert_eq!(r.n, b.3);
        }
    }

    #[test]
    fn summary_round_trip() {
        let s = Summary {
            config_hash: "ab".into(),
            metric: "exact-1d".into(),
            p: 1.0,
            base_seed: 9,
            replications: 8,
            fit_slope: Some(-0.5),
            fit_intercept: None,
            fit_slope_se: Some(0.01),
            theory_slope: -0.5,
            theory: "E W_p^p <~ t^-0.5, x log".into(),
            tolerance: 0.1,
            floor: 0.0,
            pass: true,
        };
        let mut buf = Vec::new();
        s.write(&mut buf).unwrap();
        assert_eq!(read_summary_csv(buf.as_slice()).unwrap(), s);
    }
}
