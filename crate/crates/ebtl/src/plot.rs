//! SVG rendering of run outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ebtl_core::energy::histogram;

use crate::analysis::mean_curve;
use crate::layout::{self, RunDir};
use crate::records::{read_csv, DivergenceRow, HeatmapRow, MetricsRow, ProgressRow, ScoreRow};
use crate::{Error, Result};

pub const HISTOGRAM_BINS: usize = 50;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// A labelled mean curve with its standard deviation band.
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub label: String,
    pub points: Vec<(u64, f64, f64)>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let widen = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        let (x0, x1) = widen(x0, x1);
        let (y0, y1) = widen(y0, y1);
        Self { x0, x1, y0, y1 }
    }

    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN - (v - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    s
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<path d="M{l},{t} L{l},{b} L{r},{b}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let xv = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let yv = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, f.x(xv), b + 16.0, tick(xv));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, l - 6.0, f.y(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel)
    );
}

fn legend(s: &mut String, labels: &[String]) {
    for (i, label) in labels.iter().enumerate() {
        let y = MARGIN + 4.0 + 16.0 * i as f64;
        let x = WIDTH - MARGIN - 150.0;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, r#"<rect x="{x}" y="{}" width="10" height="10" fill="{color}"/>"#, y - 9.0);
        let _ = writeln!(s, r#"<text x="{}" y="{y}">{}</text>"#, x + 14.0, escape(label));
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{:.0}k", v / 1000.0)
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mean curves with shaded plus-minus one standard deviation bands.
pub fn curves_svg(title: &str, ylabel: &str, bands: &[Band]) -> String {
    let pts = || bands.iter().flat_map(|b| b.points.iter());
    let xs = pts().map(|p| p.0 as f64);
    let x0 = xs.clone().fold(f64::INFINITY, f64::min);
    let x1 = xs.fold(f64::NEG_INFINITY, f64::max);
    let y0 = pts().map(|p| p.1 - p.2).filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min).min(0.0);
    let y1 = pts().map(|p| p.1 + p.2).filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max).max(y0 + 1e-9);
    let f = Frame::new(if x0.is_finite() { x0 } else { 0.0 }, if x1.is_finite() { x1 } else { 1.0 }, y0, y1);
    let mut s = open(title);
    axes(&mut s, &f, "environment steps", ylabel);
    for (i, b) in bands.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let valid: Vec<_> = b.points.iter().filter(|p| p.1.is_finite() && p.2.is_finite()).collect();
        if valid.is_empty() {
            continue;
        }
        let mut area = String::new();
        for (j, p) in valid.iter().enumerate() {
            let _ = write!(area, "{}{:.1},{:.1} ", if j == 0 { "M" } else { "L" }, f.x(p.0 as f64), f.y(p.1 + p.2));
        }
        for p in valid.iter().rev() {
            let _ = write!(area, "L{:.1},{:.1} ", f.x(p.0 as f64), f.y(p.1 - p.2));
        }
        let _ = writeln!(s, r#"<path d="{}Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, area);
        let line: Vec<String> = valid.iter().map(|p| format!("{:.1},{:.1}", f.x(p.0 as f64), f.y(p.1))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
    }
    legend(&mut s, &bands.iter().map(|b| b.label.clone()).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

/// Overlaid density histograms over a shared binning.
pub fn histogram_svg(title: &str, xlabel: &str, groups: &[(String, Vec<f64>)], bins: usize) -> String {
    let all = || groups.iter().flat_map(|g| g.1.iter().copied()).filter(|v| v.is_finite());
    let lo = all().fold(f64::INFINITY, f64::min);
    let hi = all().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let hists: Vec<Vec<f64>> = groups
        .iter()
        .map(|(_, v)| {
            let h = histogram(v, bins, lo, hi);
            let n = v.len().max(1) as f64;
            h.into_iter().map(|c| c / n).collect()
        })
        .collect();
    let top = hists.iter().flatten().copied().fold(0.0, f64::max);
    let f = Frame::new(lo, hi, 0.0, if top > 0.0 { top } else { 1.0 });
    let mut s = open(title);
    axes(&mut s, &f, xlabel, "fraction of states");
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 / bins as f64 };
    for (i, h) in hists.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for (b, &v) in h.iter().enumerate() {
            if v <= 0.0 {
                continue;
            }
            let xa = f.x(f.x0 + b as f64 * width);
            let xb = f.x(f.x0 + (b + 1) as f64 * width);
            let _ = writeln!(
                s,
                r#"<rect x="{xa:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{color}" fill-opacity="0.45"/>"#,
                f.y(v),
                (xb - xa).max(0.5),
                f.y(0.0) - f.y(v)
            );
        }
    }
    legend(&mut s, &groups.iter().map(|g| format!("{} (n={})", g.0, g.1.len())).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

/// Per-cell mean quantile, shaded from white (0) to blue (1); absent
/// cells are grey.
pub fn heatmap_svg(title: &str, rows: &[HeatmapRow]) -> String {
    let w = rows.iter().map(|r| r.x + 1).max().unwrap_or(1);
    let h = rows.iter().map(|r| r.y + 1).max().unwrap_or(1);
    let cell = ((HEIGHT - 2.0 * MARGIN) / h as f64).min((WIDTH - 2.0 * MARGIN) / w as f64);
    let left = (WIDTH - cell * w as f64) / 2.0;
    let mut s = open(title);
    for r in rows {
        let (x, y) = (left + r.x as f64 * cell, MARGIN + r.y as f64 * cell);
        let fill = match r.mean_quantile {
            Some(q) => {
                let q = q.clamp(0.0, 1.0);
                let c = |full: f64| (255.0 - (255.0 - full) * q).round() as u8;
                format!("rgb({},{},{})", c(31.0), c(119.0), c(180.0))
            }
            None => "#dddddd".to_string(),
        };
        let _ = writeln!(s, r#"<rect x="{x:.1}" y="{y:.1}" width="{cell:.1}" height="{cell:.1}" fill="{fill}" stroke="grey" stroke-width="0.5"/>"#);
        if let Some(q) = r.mean_quantile {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="9">{q:.2}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 3.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// A plain text table.
pub fn table_svg(title: &str, header: &[String], rows: &[Vec<String>]) -> String {
    let col = (WIDTH - 2.0 * MARGIN) / header.len().max(1) as f64;
    let mut s = open(title);
    for (r, row) in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)).enumerate() {
        let y = MARGIN + 18.0 * r as f64;
        let weight = if r == 0 { "bold" } else { "normal" };
        for (c, v) in row.iter().enumerate() {
            let _ = writeln!(s, r#"<text x="{:.1}" y="{y:.1}" font-weight="{weight}">{}</text>"#, MARGIN + col * c as f64, escape(v));
        }
    }
    s.push_str("</svg>\n");
    s
}

fn seed_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<(u64, PathBuf)> =
        layout::subdirs(dir)?.into_iter().filter_map(|d| layout::seed_of(&d).map(|s| (s, d))).collect();
    dirs.sort();
    Ok(dirs.into_iter().map(|d| d.1).collect())
}

fn write(path: PathBuf, svg: String, out: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    out.push(path);
    Ok(())
}

/// Renders every plot the run directory has data for and returns the
/// written files. Each seed directory found must hold its CSV.
pub fn emit_plots(run: &RunDir) -> Result<Vec<PathBuf>> {
    let teachers = seed_dirs(&run.root.join("teacher"))?;
    let groups = layout::subdirs(&run.transfers())?;
    let evaluations = seed_dirs(&run.evaluations())?;
    if teachers.is_empty() && groups.is_empty() && evaluations.is_empty() {
        return Err(Error::MissingFile(run.transfers()));
    }
    let dir = run.plots();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut out = Vec::new();

    if !teachers.is_empty() {
        let mut curves = Vec::new();
        for d in &teachers {
            let rows: Vec<ProgressRow> = read_csv(&d.join(layout::PROGRESS))?;
            curves.push(rows.iter().map(|r| (r.global_step, r.mean_eval_return)).collect());
        }
        let band = Band { label: "teacher".into(), points: mean_curve(&curves) };
        write(dir.join("teacher_curves.svg"), curves_svg("Teacher training", "mean eval return", &[band]), &mut out)?;
    }

    if !groups.is_empty() {
        let mut returns = Vec::new();
        let mut issue = Vec::new();
        for g in &groups {
            let label = g.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let mut ret_curves = Vec::new();
            let mut issue_curves = Vec::new();
            for d in seed_dirs(g)? {
                let rows: Vec<MetricsRow> = read_csv(&d.join(layout::METRICS))?;
                ret_curves.push(rows.iter().map(|r| (r.global_step, r.mean_eval_return)).collect());
                issue_curves.push(rows.iter().map(|r| (r.global_step, r.guidance_issue_rate)).collect());
            }
            returns.push(Band { label: label.clone(), points: mean_curve(&ret_curves) });
            issue.push(Band { label, points: mean_curve(&issue_curves) });
        }
        write(dir.join("transfer_returns.svg"), curves_svg("Transfer", "mean eval return", &returns), &mut out)?;
        write(dir.join("guidance_rates.svg"), curves_svg("Guidance", "guidance issue rate", &issue), &mut out)?;
    }

    let mut divergence_rows = Vec::new();
    let mut header = vec!["seed".to_string()];
    for d in &evaluations {
        let seed = layout::seed_of(d).unwrap_or_default();
        let scores: Vec<ScoreRow> = read_csv(&d.join(layout::SCORES))?;
        let mut keys: Vec<(String, Option<bool>)> = Vec::new();
        for r in &scores {
            let k = (r.origin.clone(), r.ground_truth_id);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        let groups: Vec<(String, Vec<f64>)> = keys
            .iter()
            .map(|(origin, id)| {
                let label = match id {
                    Some(true) => format!("{origin} id"),
                    Some(false) => format!("{origin} ood"),
                    None => origin.clone(),
                };
                let v = scores.iter().filter(|r| &r.origin == origin && r.ground_truth_id == *id).map(|r| r.phi).collect();
                (label, v)
            })
            .collect();
        let title = format!("Teacher energy scores, seed {seed}");
        write(dir.join(format!("energy_hist_seed-{seed}.svg")), histogram_svg(&title, "energy score", &groups, HISTOGRAM_BINS), &mut out)?;

        let heat: Vec<HeatmapRow> = read_csv(&d.join(layout::HEATMAP))?;
        let title = format!("Mean energy quantile per cell, seed {seed}");
        write(dir.join(format!("heatmap_seed-{seed}.svg")), heatmap_svg(&title, &heat), &mut out)?;

        let div: Vec<DivergenceRow> = read_csv(&d.join(layout::DIVERGENCE))?;
        if header.len() == 1 {
            header.extend(div.iter().map(|r| r.metric.clone()));
        }
        let mut row = vec![seed.to_string()];
        row.extend(div.iter().map(|r| format!("{:.4}", r.value)));
        divergence_rows.push(row);
    }
    if !divergence_rows.is_empty() {
        write(dir.join("divergence.svg"), table_svg("Divergence between ID and OOD energy", &header, &divergence_rows), &mut out)?;
    }
    Ok(out)
}
