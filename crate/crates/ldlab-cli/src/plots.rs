//! Plot-ready artifacts: self-contained SVG charts built from the CSV
//! curves a run produced.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

use crate::manifest::{write_artifact, Manifest};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub draw_line: bool,
    pub draw_markers: bool,
}

/// Render a chart with shared axes; returns the SVG text.
pub fn chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .collect();
    let (x0, x1) = padded_range(all.iter().map(|p| p.0));
    let (y0, y1) = padded_range(all.iter().map(|p| p.1));
    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y0) / (y1 - y0) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>
"#,
        WIDTH / 2.0,
        xml_escape(title)
    );
    // Axes.
    let _ = write!(
        svg,
        r#"<line x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>
<line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/>
"#,
        l = MARGIN_L,
        r = WIDTH - MARGIN_R,
        t = MARGIN_T,
        b = HEIGHT - MARGIN_B
    );
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * i as f64 / 5.0;
        let fy = y0 + (y1 - y0) * i as f64 / 5.0;
        let _ = write!(
            svg,
            r#"<line x1="{x}" y1="{b}" x2="{x}" y2="{b2}" stroke="black"/>
<text x="{x}" y="{ly}" text-anchor="middle" font-family="sans-serif" font-size="11">{lx}</text>
<line x1="{l}" y1="{y}" x2="{l2}" y2="{y}" stroke="black"/>
<text x="{ty}" y="{y2}" text-anchor="end" font-family="sans-serif" font-size="11">{lyv}</text>
"#,
            x = px(fx),
            b = HEIGHT - MARGIN_B,
            b2 = HEIGHT - MARGIN_B + 5.0,
            ly = HEIGHT - MARGIN_B + 18.0,
            lx = format_tick(fx),
            l = MARGIN_L,
            l2 = MARGIN_L - 5.0,
            y = py(fy),
            ty = MARGIN_L - 8.0,
            y2 = py(fy) + 4.0,
            lyv = format_tick(fy),
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>
<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 {})">{}</text>
"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 14.0,
        xml_escape(xlabel),
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        xml_escape(ylabel)
    );

    for (idx, s) in series.iter().enumerate() {
        let color = COLORS[idx % COLORS.len()];
        if s.draw_line && s.points.len() > 1 {
            let path: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                path.join(" ")
            );
        }
        if s.draw_markers {
            for &(x, y) in &s.points {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    px(x),
                    py(y)
                );
            }
        }
        // Legend entry.
        let ly = MARGIN_T + 16.0 * idx as f64;
        let _ = write!(
            svg,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>
<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>
"#,
            WIDTH - MARGIN_R - 170.0,
            ly,
            WIDTH - MARGIN_R - 155.0,
            ly + 9.0,
            xml_escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-12);
    (lo - pad, hi + pad)
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn read_csv(path: &Path) -> Result<Vec<std::collections::HashMap<String, String>>> {
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        rows.push(
            headers
                .iter()
                .zip(record.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect(),
        );
    }
    Ok(rows)
}

/// Generate SVG plots for every curve the manifest references; returns
/// the names written. A manifest without curves produces no files and a
/// warning.
pub fn emit_plots(manifest: &mut Manifest, run_dir: &Path) -> Result<Vec<String>> {
    let mut written = Vec::new();

    // Decay linearization: ln a_n against n^theta.
    let decay_path = run_dir.join("decay.csv");
    if decay_path.exists() {
        let rows = read_csv(&decay_path)?;
        if !rows.is_empty() {
            let theta = manifest
                .results
                .get("decay")
                .and_then(|d| d.get("fit"))
                .and_then(|f| f.get("theta"))
                .and_then(|t| t.as_f64());
            let (tx, label) = match theta {
                Some(t) => (t, format!("n^{t:.3}")),
                None => (1.0, "n".to_string()),
            };
            let mut pts = Vec::new();
            for row in &rows {
                let n: f64 = row["n"].parse()?;
                let a: f64 = row["a_n"].parse()?;
                if a > 0.0 {
                    pts.push((n.powf(tx), a.ln()));
                }
            }
            let mut series = vec![Series {
                name: "ln a_n (measured)".into(),
                points: pts.clone(),
                draw_line: false,
                draw_markers: true,
            }];
            if let Some(fit) = manifest.results.get("decay").and_then(|d| d.get("fit")) {
                let (c, tau) = (
                    fit.get("c").and_then(|v| v.as_f64()).unwrap_or(1.0),
                    fit.get("tau").and_then(|v| v.as_f64()).unwrap_or(1.0),
                );
                let line: Vec<(f64, f64)> =
                    pts.iter().map(|&(x, _)| (x, c.ln() - tau * x)).collect();
                series.push(Series {
                    name: "ln C - tau x (fit)".into(),
                    points: line,
                    draw_line: true,
                    draw_markers: false,
                });
            }
            let svg = chart("correlation decay, linearized", &label, "ln a_n", &series);
            let art = write_artifact(run_dir, "decay.svg", svg.as_bytes())?;
            written.push(art.path.clone());
            manifest.artifacts.push(art);
        }
    }

    // LD curves against the theorem bound.
    let ld_path = run_dir.join("ld.csv");
    if ld_path.exists() {
        let rows = read_csv(&ld_path)?;
        if !rows.is_empty() {
            let consts = manifest
                .results
                .get("verify")
                .and_then(|v| v.get("constants"))
                .cloned();
            let (theta_p, tau_p) = match &consts {
                Some(c) => (
                    c["theta_prime"].as_f64().unwrap_or(0.5),
                    Some(c["tau_prime"].as_f64().unwrap_or(1.0)),
                ),
                None => (0.5, None),
            };
            let mut by_eps: std::collections::BTreeMap<String, Vec<(f64, f64)>> =
                Default::default();
            for row in &rows {
                let eps = row["epsilon"].clone();
                let n: f64 = row["n"].parse()?;
                let p: f64 = row["estimate"].parse()?;
                if p > 0.0 {
                    by_eps
                        .entry(eps)
                        .or_default()
                        .push((n.powf(theta_p), p.ln()));
                }
            }
            let mut series = Vec::new();
            for (eps, pts) in &by_eps {
                series.push(Series {
                    name: format!("ln p_hat, eps = {eps}"),
                    points: pts.clone(),
                    draw_line: true,
                    draw_markers: true,
                });
                if let Some(tau_p) = tau_p {
                    let e: f64 = eps.parse().unwrap_or(0.1);
                    let bound: Vec<(f64, f64)> = pts
                        .iter()
                        .map(|&(x, _)| (x, (2.0_f64).ln() - tau_p * e.powf(2.0 * theta_p) * x))
                        .collect();
                    series.push(Series {
                        name: format!("bound, eps = {eps}"),
                        points: bound,
                        draw_line: true,
                        draw_markers: false,
                    });
                }
            }
            if !series.is_empty() {
                let svg = chart(
                    "large deviations vs bound",
                    &format!("n^{theta_p:.3}"),
                    "ln p",
                    &series,
                );
                let art = write_artifact(run_dir, "ld.svg", svg.as_bytes())?;
                written.push(art.path.clone());
                manifest.artifacts.push(art);
            }
        }
    }

    if written.is_empty() {
        log::warn!("no curves found in {}; nothing plotted", run_dir.display());
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_renders_well_formed_svg() {
        let s = [Series {
            name: "demo".into(),
            points: vec![(1.0, 2.0), (2.0, 1.0), (3.0, 0.5)],
            draw_line: true,
            draw_markers: true,
        }];
        let svg = chart("title", "x", "y", &s);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("circle"));
        assert!(svg.matches("<text").count() >= 10);
    }

    #[test]
    fn empty_manifest_emits_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::new("plots", 0, String::new());
        let written = emit_plots(&mut m, dir.path()).unwrap();
        assert!(written.is_empty());
    }
}
