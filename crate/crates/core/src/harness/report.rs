//! Output files: CSV tables, a summary and an optional SVG bar chart.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::Regime;

use super::table::ResultTable;
use super::HarnessError;

fn colour(regime: Regime) -> &'static str {
    match regime {
        Regime::None => "#9e9e9e",
        Regime::Partitioned => "#1f77b4",
        Regime::Joint => "#d62728",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Grouped bars of per-UE mean throughput, one group per UE and one bar
/// per regime, with one-standard-deviation whiskers.
pub fn bar_chart_svg(table: &ResultTable) -> String {
    let regimes = table.regimes();
    let ues = table.ues();
    let (bar, gap, left, top, plot_h) = (28.0, 24.0, 70.0, 40.0, 260.0);
    let group_w = bar * regimes.len() as f64 + gap;
    let width = left + group_w * ues.len() as f64 + 150.0;
    let height = top + plot_h + 60.0;
    let peak = table
        .aggregates
        .iter()
        .map(|a| a.mean_throughput_bps + a.std_throughput_bps)
        .fold(0.0f64, f64::max)
        .max(1.0);
    let scale = plot_h / (peak * 1.05);
    let base = top + plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="20" font-size="14">Mean throughput per UE (Mbit/s)</text>"#
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{base}" x2="{:.1}" y2="{base}" stroke="black"/>"#,
        width - 140.0
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{base}" stroke="black"/>"#
    );
    for i in 0..=4 {
        let v = peak * 1.05 * i as f64 / 4.0;
        let y = base - v * scale;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.0}</text>"#,
            left - 6.0,
            y + 4.0,
            v / 1e6
        );
    }
    for (g, &ue) in ues.iter().enumerate() {
        let x0 = left + gap / 2.0 + g as f64 * group_w;
        for (k, &regime) in regimes.iter().enumerate() {
            let Some(a) = table.aggregate(regime, ue) else {
                continue;
            };
            let x = x0 + k as f64 * bar;
            let h = a.mean_throughput_bps * scale;
            let _ = writeln!(
                s,
                r#"<rect class="bar" data-regime="{regime}" data-ue="{ue}" x="{x:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"/>"#,
                base - h,
                bar - 2.0,
                colour(regime)
            );
            let cx = x + (bar - 2.0) / 2.0;
            let lo = base - (a.mean_throughput_bps - a.std_throughput_bps).max(0.0) * scale;
            let hi = base - (a.mean_throughput_bps + a.std_throughput_bps) * scale;
            let _ = writeln!(
                s,
                r#"<line x1="{cx:.1}" y1="{lo:.1}" x2="{cx:.1}" y2="{hi:.1}" stroke="black"/>"#
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">UE {ue}</text>"#,
            x0 + bar * regimes.len() as f64 / 2.0,
            base + 18.0
        );
    }
    for (k, &regime) in regimes.iter().enumerate() {
        let y = top + 10.0 + 20.0 * k as f64;
        let x = width - 130.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{y:.1}">{}</text>"#,
            y - 10.0,
            colour(regime),
            x + 18.0,
            escape(regime.as_str())
        );
    }
    s.push_str("</svg>\n");
    s
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, HarnessError> {
    fs::write(&path, text).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok(path)
}

/// Writes `results.csv` and `aggregates.csv`, plus `chart.svg` when asked.
pub fn emit_report(
    table: &ResultTable,
    out: &Path,
    svg: bool,
) -> Result<Vec<PathBuf>, HarnessError> {
    if table.rows.is_empty() {
        return Err(HarnessError::Validation("nothing to report".into()));
    }
    fs::create_dir_all(out).map_err(|e| HarnessError::Io {
        path: out.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut files = vec![
        write(out.join("results.csv"), &table.results_csv())?,
        write(out.join("aggregates.csv"), &table.aggregates_csv())?,
    ];
    if svg {
        files.push(write(out.join("chart.svg"), &bar_chart_svg(table))?);
    }
    Ok(files)
}
