//! Human-readable tables and plots of performance metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use medmi_core::datagen::MdagLabel;
use medmi_core::impute::MethodKind;
use medmi_core::mediation::EstimatorKind;
use medmi_core::simstudy::MetricRow;
use medmi_core::variance::{Estimand, VarianceApproach};

use crate::io::{self, IoError};

/// Display label of an analysis, e.g. `MI-noint (MIBoot)`.
pub fn analysis_label(method: MethodKind, approach: Option<VarianceApproach>) -> String {
    let m = match method {
        MethodKind::Cca => "CCA",
        MethodKind::NoZY => "MI-noZY",
        MethodKind::NoY => "MI-noY",
        MethodKind::NoInt => "MI-noint",
        MethodKind::XInt => "MI-Xint",
        MethodKind::ZInt => "MI-Zint",
        MethodKind::YInt => "MI-Yint",
        MethodKind::HigherInt => "MI-higherint",
        MethodKind::Smcfcs => "MI-SMCFCS",
    };
    match approach {
        Some(VarianceApproach::MiBoot) => format!("{m} (MIBoot)"),
        Some(VarianceApproach::BootMi) => format!("{m} (BootMI)"),
        _ => m.to_string(),
    }
}

type Group = (MdagLabel, EstimatorKind, Estimand);

fn groups(rows: &[MetricRow]) -> BTreeMap<Group, Vec<&MetricRow>> {
    let mut g: BTreeMap<Group, Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        g.entry((r.mdag, r.estimator, r.estimand)).or_default().push(r);
    }
    for v in g.values_mut() {
        // MI-Boot rows first, then Boot-MI, each in method order.
        v.sort_by_key(|r| (r.approach == Some(VarianceApproach::BootMi), r.method));
    }
    g
}

fn opt(v: Option<f64>, mcse: Option<f64>, digits: usize) -> String {
    match (v, mcse) {
        (Some(v), Some(m)) => format!("{v:.digits$} ({m:.digits$})"),
        (Some(v), None) => format!("{v:.digits$}"),
        _ => "-".into(),
    }
}

/// One block per `(m-DAG, estimator, estimand)`. Empirical SEs are in
/// percentage points; MC standard errors are in parentheses.
pub fn format_table(rows: &[MetricRow]) -> Result<String, IoError> {
    if rows.is_empty() {
        return Err(IoError::Schema("no metrics to report".into()));
    }
    let mut s = String::new();
    for ((mdag, estimator, estimand), block) in groups(rows) {
        let truth = block[0].truth;
        writeln!(s, "m-DAG {mdag}, {estimator} g-computation, {estimand} effect (truth {truth:.4})").unwrap();
        writeln!(
            s,
            "{:<22} {:>9} {:>18} {:>16} {:>16} {:>16} {:>18} {:>6}",
            "Analysis", "Estimate", "Abs bias", "Rel bias %", "Coverage %", "Emp SE (pp)", "% err model SE", "Failed"
        )
        .unwrap();
        for r in block {
            writeln!(
                s,
                "{:<22} {:>9.4} {:>18} {:>16} {:>16} {:>16} {:>18} {:>6}",
                analysis_label(r.method, r.approach),
                r.mean,
                opt(Some(r.bias), Some(r.mcse_bias), 4),
                opt(Some(r.rel_bias), Some(r.mcse_rel_bias), 2),
                opt(r.coverage, r.mcse_coverage, 2),
                opt(Some(100.0 * r.emp_se), Some(100.0 * r.mcse_emp_se), 3),
                opt(r.se_error, r.mcse_se_error, 2),
                r.failed,
            )
            .unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Dot plot with ±1 MC-SE bars, one row per analysis.
pub fn svg_plot(title: &str, points: &[(String, f64, f64)]) -> String {
    let (row_h, left, width, top) = (22.0, 190.0, 420.0, 40.0);
    let height = top + row_h * points.len() as f64 + 40.0;
    let lo = points.iter().map(|p| p.1 - p.2).fold(0.0f64, f64::min);
    let hi = points.iter().map(|p| p.1 + p.2).fold(0.0f64, f64::max);
    let pad = ((hi - lo) * 0.05).max(1.0);
    let (lo, hi) = (lo - pad, hi + pad);
    let x = |v: f64| left + (v - lo) / (hi - lo) * width;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="12">"#,
        left + width + 30.0
    )
    .unwrap();
    writeln!(s, r#"<text x="10" y="20" font-size="14">{}</text>"#, escape(title)).unwrap();
    let bottom = top + row_h * points.len() as f64;
    writeln!(s, r##"<line x1="{0:.1}" y1="{top}" x2="{0:.1}" y2="{bottom}" stroke="#888" stroke-dasharray="4 3"/>"##, x(0.0)).unwrap();
    for (i, (label, v, se)) in points.iter().enumerate() {
        let y = top + row_h * (i as f64 + 0.5);
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 8.0, y + 4.0, escape(label)).unwrap();
        writeln!(s, r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="black"/>"#, x(v - se), x(v + se)).unwrap();
        writeln!(s, r#"<circle cx="{:.1}" cy="{y:.1}" r="3.5"/>"#, x(*v)).unwrap();
    }
    writeln!(s, r#"<line x1="{left}" y1="{bottom}" x2="{}" y2="{bottom}" stroke="black"/>"#, left + width).unwrap();
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#, x(v), bottom + 16.0).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Write `metrics.csv`, `report.txt` and, if asked, relative-bias and
/// SE-error plots per block. Returns the files written.
pub fn write_report(rows: &[MetricRow], dir: &Path, plots: bool) -> Result<Vec<PathBuf>, IoError> {
    let table = format_table(rows)?;
    let mut written = Vec::new();
    let csv = dir.join("metrics.csv");
    io::write_metrics(rows, io::create(&csv)?)?;
    written.push(csv);
    let txt = dir.join("report.txt");
    std::fs::write(&txt, &table).map_err(|source| IoError::File { path: txt.display().to_string(), source })?;
    written.push(txt);
    if plots {
        for ((mdag, estimator, estimand), block) in groups(rows) {
            let bias: Vec<_> =
                block.iter().map(|r| (analysis_label(r.method, r.approach), r.rel_bias, r.mcse_rel_bias)).collect();
            let se: Vec<_> = block
                .iter()
                .filter_map(|r| Some((analysis_label(r.method, r.approach), r.se_error?, r.mcse_se_error?)))
                .collect();
            let mut figs = vec![("rel-bias", "Relative bias (%)", bias)];
            if !se.is_empty() {
                figs.push(("se-error", "% error in model SE", se));
            }
            for (stem, what, points) in figs {
                let path = dir.join(format!("{stem}-{mdag}-{estimator}-{estimand}.svg"));
                let title = format!("{what}, {estimand} effect, m-DAG {mdag}, {estimator}");
                std::fs::write(&path, svg_plot(&title, &points))
                    .map_err(|source| IoError::File { path: path.display().to_string(), source })?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
