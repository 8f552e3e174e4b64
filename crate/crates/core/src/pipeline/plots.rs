//! Deterministic SVG figures for a run report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use super::report::RunReport;
use crate::error::{Error, Result};

pub const PLOTS_DIR: &str = "plots";

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    left: f64,
    top: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64), left: f64, top: f64, width: f64, height: f64) -> Self {
        let widen = |(a, b): (f64, f64)| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        let (x0, x1) = widen(x);
        let (y0, y1) = widen(y);
        Frame {
            x0,
            x1,
            y0,
            y1,
            left,
            top,
            width,
            height,
        }
    }

    fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x0) / (self.x1 - self.x0) * self.width
    }

    fn py(&self, y: f64) -> f64 {
        self.top + self.height - (y - self.y0) / (self.y1 - self.y0) * self.height
    }

    fn axes(&self, svg: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (l, t, w, h) = (self.left, self.top, self.width, self.height);
        let _ = writeln!(
            svg,
            r##"<rect x="{l:.1}" y="{t:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#444"/>"##
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{}</text>"#,
            l + w / 2.0,
            t - 10.0,
            escape(title)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#,
            l + w / 2.0,
            t + h + 34.0,
            escape(xlabel)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
            l - 40.0,
            t + h / 2.0,
            l - 40.0,
            t + h / 2.0,
            escape(ylabel)
        );
        for i in 0..=4 {
            let fx = self.x0 + (self.x1 - self.x0) * i as f64 / 4.0;
            let fy = self.y0 + (self.y1 - self.y0) * i as f64 / 4.0;
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
                self.px(fx),
                t + h + 16.0,
                tick(fx)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"#,
                l - 6.0,
                self.py(fy) + 3.0,
                tick(fy)
            );
        }
    }

    fn polyline(&self, svg: &mut String, pts: &[(f64, f64)], color: &str) {
        let coords: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", self.px(*x), self.py(*y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
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

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn document(body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

fn legend(svg: &mut String, labels: &[String], left: f64, top: f64) {
    for (i, label) in labels.iter().enumerate() {
        let y = top + 14.0 * i as f64;
        let c = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<rect x="{left:.1}" y="{:.1}" width="10" height="3" fill="{c}"/>"#,
            y - 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{y:.1}" font-size="10">{}</text>"#,
            left + 14.0,
            escape(label)
        );
    }
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((a, b)) => Some((a.min(v), b.max(v))),
    })
}

/// Line chart of several named series.
pub fn line_chart(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> Result<String> {
    let xr = range(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let yr = range(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let (Some(xr), Some(yr)) = (xr, yr) else {
        return Err(Error::Plot(format!("{title}: no data")));
    };
    let f = Frame::new(
        xr,
        (yr.0.min(0.0), yr.1),
        MARGIN,
        36.0,
        W - MARGIN - 150.0,
        H - 36.0 - 48.0,
    );
    let mut svg = String::new();
    f.axes(&mut svg, title, xlabel, ylabel);
    for (i, (_, pts)) in series.iter().enumerate() {
        f.polyline(&mut svg, pts, PALETTE[i % PALETTE.len()]);
    }
    let labels: Vec<String> = series.iter().map(|s| s.0.clone()).collect();
    legend(&mut svg, &labels, W - 140.0, 48.0);
    Ok(document(&svg))
}

/// Vertical bars, one per labeled value.
pub fn bar_chart(title: &str, ylabel: &str, bars: &[(String, f64)]) -> Result<String> {
    if bars.is_empty() {
        return Err(Error::Plot(format!("{title}: no data")));
    }
    let top = bars.iter().map(|b| b.1).fold(0.0, f64::max);
    let f = Frame::new(
        (0.0, bars.len() as f64),
        (0.0, top),
        MARGIN,
        36.0,
        W - MARGIN - 16.0,
        H - 36.0 - 80.0,
    );
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="26" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let step = f.width / bars.len() as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = f.left + step * i as f64 + step * 0.1;
        let y = f.py(*v);
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            step * 0.8,
            f.top + f.height - y,
            PALETTE[0]
        );
        let cx = x + step * 0.4;
        let ly = f.top + f.height + 8.0;
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.2}" y="{ly:.2}" font-size="8" text-anchor="end" transform="rotate(-60 {cx:.2} {ly:.2})">{}</text>"#,
            escape(label)
        );
    }
    let _ = writeln!(
        svg,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#444"/>"##,
        f.left,
        f.top + f.height,
        f.left + f.width,
        f.top + f.height
    );
    for i in 0..=4 {
        let v = top * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"#,
            f.left - 6.0,
            f.py(v) + 3.0,
            tick(v)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.1}" text-anchor="middle" font-size="11" transform="rotate(-90 14 {:.1})">{}</text>"#,
        f.top + f.height / 2.0,
        f.top + f.height / 2.0,
        escape(ylabel)
    );
    Ok(document(&svg))
}

/// Equal-width bin counts over [lo, hi].
pub fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let span = if hi > lo { hi - lo } else { 1.0 };
    for v in values {
        let b = (((v - lo) / span) * bins as f64).floor();
        let b = (b.max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

fn histogram_panel(svg: &mut String, values: &[f64], bins: usize, f: &Frame, color: &str) {
    let counts = histogram(values, bins, f.x0, f.x1);
    let bw = (f.x1 - f.x0) / bins as f64;
    for (i, c) in counts.iter().enumerate() {
        let x0 = f.px(f.x0 + bw * i as f64);
        let x1 = f.px(f.x0 + bw * (i + 1) as f64);
        let y = f.py(*c as f64);
        let _ = writeln!(
            svg,
            r#"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.7"/>"#,
            (x1 - x0 - 1.0).max(0.5),
            f.top + f.height - y
        );
    }
}

/// Histogram of |rho| with its empirical CDF overlaid on a second scale.
pub fn selectivity_chart(title: &str, abs_rho: &[f64]) -> Result<String> {
    if abs_rho.is_empty() {
        return Err(Error::Plot(format!("{title}: no data")));
    }
    let bins = 20;
    let counts = histogram(abs_rho, bins, 0.0, 1.0);
    let top = *counts.iter().max().expect("bins > 0") as f64;
    let f = Frame::new(
        (0.0, 1.0),
        (0.0, top),
        MARGIN,
        36.0,
        W - 2.0 * MARGIN,
        H - 36.0 - 48.0,
    );
    let mut svg = String::new();
    f.axes(&mut svg, title, "|rho|", "count");
    histogram_panel(&mut svg, abs_rho, bins, &f, PALETTE[0]);
    let mut sorted = abs_rho.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let cdf = Frame::new((0.0, 1.0), (0.0, 1.0), f.left, f.top, f.width, f.height);
    let mut pts = vec![(0.0, 0.0)];
    pts.extend(
        sorted
            .iter()
            .enumerate()
            .map(|(i, v)| (*v, (i + 1) as f64 / n)),
    );
    pts.push((1.0, 1.0));
    cdf.polyline(&mut svg, &pts, PALETTE[1]);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="10" fill="{}">CDF (right axis, 0 to 1)</text>"#,
        f.left + f.width - 150.0,
        f.top + 14.0,
        PALETTE[1]
    );
    Ok(document(&svg))
}

/// Three side-by-side histograms of the manifold metrics.
pub fn metrics_chart(title: &str, panels: &[(&str, Vec<f64>)]) -> Result<String> {
    if panels.is_empty() || panels.iter().any(|p| p.1.is_empty()) {
        return Err(Error::Plot(format!("{title}: no data")));
    }
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let pw = (W - 40.0) / panels.len() as f64;
    for (i, (name, values)) in panels.iter().enumerate() {
        let (lo, hi) = range(values.iter().copied()).expect("non-empty");
        let bins = 10;
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        };
        let top = *histogram(values, bins, lo, hi)
            .iter()
            .max()
            .expect("bins > 0") as f64;
        let f = Frame::new(
            (lo, hi),
            (0.0, top),
            20.0 + pw * i as f64 + 36.0,
            48.0,
            pw - 52.0,
            H - 48.0 - 56.0,
        );
        f.axes(&mut svg, name, name, "count");
        histogram_panel(&mut svg, values, bins, &f, PALETTE[i % PALETTE.len()]);
    }
    Ok(document(&svg))
}

fn save(dir: &Path, name: &str, svg: Result<String>, out: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, svg?).map_err(|e| Error::io(&path, e))?;
    out.push(path);
    Ok(())
}

/// Writes one SVG per figure family; stages missing from the report are skipped with a warning.
pub fn emit_plots(report: &RunReport, output_dir: &Path) -> Result<Vec<PathBuf>> {
    let dir = output_dir.join(PLOTS_DIR);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut out = Vec::new();
    let skip = |what: &str| warn!("{what} missing from report; plot skipped");

    match &report.stage1 {
        Some(scores) if !scores.is_empty() => {
            let bars: Vec<(String, f64)> = scores
                .iter()
                .map(|s| (format!("blocks.{}.{}", s.block, s.submodule), s.score))
                .collect();
            save(
                &dir,
                "importance.svg",
                bar_chart("Forensic importance", "mean |logit change|", &bars),
                &mut out,
            )?;
        }
        _ => skip("stage 1 scores"),
    }

    match &report.stage2 {
        Some(s2) => {
            let mut series = Vec::new();
            for layer in &s2.layers {
                let pts = |f: &dyn Fn(&crate::sae::EpochRecord) -> f64| -> Vec<(f64, f64)> {
                    layer
                        .trace
                        .epochs
                        .iter()
                        .map(|e| (e.epoch as f64, f(e)))
                        .collect()
                };
                series.push((format!("{} total", layer.layer_id), pts(&|e| e.total_loss)));
                series.push((format!("{} recon", layer.layer_id), pts(&|e| e.recon_loss)));
                series.push((
                    format!("{} L1", layer.layer_id),
                    pts(&|e| e.sparsity_penalty),
                ));
            }
            save(
                &dir,
                "sae_loss.svg",
                line_chart("SAE training loss", "epoch", "loss", &series),
                &mut out,
            )?;
        }
        None => skip("stage 2"),
    }

    match &report.stage2b {
        Some(s2b) => {
            let abs_rho: Vec<f64> = s2b
                .iter()
                .flat_map(|a| a.layers.iter().flat_map(|m| m.rho.iter().map(|r| r.abs())))
                .collect();
            save(
                &dir,
                "selectivity.svg",
                selectivity_chart("Feature selectivity", &abs_rho),
                &mut out,
            )?;
            let reports: Vec<_> = s2b.iter().flat_map(|a| a.layers.iter()).collect();
            let panels = [
                (
                    "intrinsic dim",
                    reports.iter().map(|m| m.intrinsic_dim as f64).collect(),
                ),
                ("curvature", reports.iter().map(|m| m.curvature).collect()),
                (
                    "selectivity",
                    reports.iter().map(|m| m.selectivity).collect(),
                ),
            ];
            save(
                &dir,
                "manifold_metrics.svg",
                metrics_chart("Manifold metrics", &panels),
                &mut out,
            )?;
        }
        None => skip("stage 2b"),
    }

    match &report.stage3 {
        Some(curves) => {
            let series: Vec<(String, Vec<(f64, f64)>)> = curves
                .iter()
                .map(|c| {
                    (
                        c.vector_id.clone(),
                        c.alphas
                            .iter()
                            .copied()
                            .zip(c.accuracy.iter().copied())
                            .collect(),
                    )
                })
                .collect();
            save(
                &dir,
                "steering.svg",
                line_chart("Steering curves", "alpha", "accuracy", &series),
                &mut out,
            )?;
        }
        None => skip("stage 3"),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_selectivity_is_a_plot_error() {
        let err = selectivity_chart("sel", &[]).unwrap_err();
        assert!(matches!(err, Error::Plot(ref m) if m.contains("no data")));
    }

    #[test]
    fn charts_are_deterministic_svg() {
        let s = vec![("a".to_string(), vec![(0.0, 1.0), (1.0, 0.5)])];
        let a = line_chart("t", "x", "y", &s).unwrap();
        assert_eq!(a, line_chart("t", "x", "y", &s).unwrap());
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(bar_chart("b", "y", &[("x<1>".into(), 2.0)])
            .unwrap()
            .contains("x&lt;1&gt;"));
    }

    #[test]
    fn histogram_clamps_edges() {
        assert_eq!(
            histogram(&[0.0, 0.5, 1.0, 2.0, -1.0], 2, 0.0, 1.0),
            vec![2, 3]
        );
    }
}
