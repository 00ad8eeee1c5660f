//! Report emission: CSV tables, JSON run metadata, and minimal SVG charts.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::json;

use crate::evaluation::{AggregateMetrics, Comparison, IndividualMetrics, MetricsReport};
use crate::io::{canonical_json, IoError, TOOLKIT_VERSION};
use crate::sensitivity::SensitivityReport;
use crate::simulator::SimulationResult;

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, IoError> {
    w.into_inner().map_err(|e| IoError::Io(e.into_error()))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// `period,cooperation_rate,n` per period.
pub fn simulation_csv(result: &SimulationResult) -> Result<Vec<u8>, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["period", "cooperation_rate", "n"])?;
    for (t, (rate, n)) in result.per_period_cooperation.iter().zip(&result.actions).enumerate() {
        w.write_record([(t + 1).to_string(), rate.to_string(), n.to_string()])?;
    }
    finish(w)
}

/// Simulation output with everything needed to reproduce it.
pub fn simulation_json(result: &SimulationResult, model_fingerprint: Option<&str>) -> String {
    let value = json!({
        "toolkit_version": TOOLKIT_VERSION,
        "model_fingerprint": model_fingerprint,
        "result": serde_json::to_value(result).expect("result serializes"),
    });
    canonical_json(&value)
}

pub const METRICS_HEADER: [&str; 17] = [
    "model",
    "k",
    "fold",
    "n_structures",
    "n_t1",
    "n_tgt1",
    "accuracy_t1",
    "accuracy_tgt1",
    "error_rate_t1",
    "error_rate_tgt1",
    "loglik_t1",
    "loglik_tgt1",
    "n_points",
    "rmse_time",
    "cor_time",
    "rmse_avg",
    "cor_avg",
];

fn metrics_row(
    model: &str,
    k: usize,
    fold: &str,
    ind: Option<&IndividualMetrics>,
    agg: Option<&AggregateMetrics>,
) -> Vec<String> {
    let mut row = vec![model.to_string(), k.to_string(), fold.to_string()];
    let n_structures = ind.map(|m| m.n_structures).or(agg.map(|a| a.n_structures)).unwrap_or(0);
    row.push(n_structures.to_string());
    match ind {
        Some(m) => row.extend([
            m.n_t1.to_string(),
            m.n_tgt1.to_string(),
            m.accuracy_t1.to_string(),
            m.accuracy_tgt1.to_string(),
            m.error_rate_t1.to_string(),
            m.error_rate_tgt1.to_string(),
            m.loglik_t1.to_string(),
            m.loglik_tgt1.to_string(),
        ]),
        None => row.extend(std::iter::repeat_n(String::new(), 8)),
    }
    match agg {
        Some(a) => row.extend([
            a.n_points.to_string(),
            a.rmse_time.to_string(),
            opt(a.cor_time),
            a.rmse_avg.to_string(),
            opt(a.cor_avg),
        ]),
        None => row.extend(std::iter::repeat_n(String::new(), 5)),
    }
    row
}

/// One row per fold and a final `all` row per report.
pub fn metrics_csv(reports: &[MetricsReport]) -> Result<Vec<u8>, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER)?;
    for r in reports {
        let name = r.model_kind.name();
        let ind_folds = r.individual.as_ref().map(|i| i.per_fold.as_slice()).unwrap_or(&[]);
        let agg_folds = r.aggregate.as_ref().map(|a| a.per_fold.as_slice()).unwrap_or(&[]);
        let mut folds: Vec<usize> = ind_folds.iter().map(|f| f.0).chain(agg_folds.iter().map(|f| f.0)).collect();
        folds.sort_unstable();
        folds.dedup();
        for f in folds {
            let ind = ind_folds.iter().find(|x| x.0 == f).map(|x| &x.1);
            let agg = agg_folds.iter().find(|x| x.0 == f).map(|x| &x.1);
            w.write_record(metrics_row(name, r.k, &f.to_string(), ind, agg))?;
        }
        w.write_record(metrics_row(
            name,
            r.k,
            "all",
            r.individual.as_ref().map(|i| &i.summary),
            r.aggregate.as_ref().map(|a| &a.summary),
        ))?;
    }
    finish(w)
}

/// `reference,competitor,metric,t,df,p` per paired test.
pub fn comparisons_csv(comparisons: &[Comparison]) -> Result<Vec<u8>, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["reference", "competitor", "metric", "t", "df", "p"])?;
    for c in comparisons {
        for (metric, test) in &c.tests {
            let (t, df, p) = match test {
                Some((t, df, p)) => (t.to_string(), df.to_string(), p.to_string()),
                None => Default::default(),
            };
            w.write_record([c.reference.name(), c.competitor.name(), metric, &t, &df, &p])?;
        }
    }
    finish(w)
}

/// `variable,estimate,ci_low,ci_high` per design variable.
pub fn sensitivity_csv(report: &SensitivityReport) -> Result<Vec<u8>, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variable", "estimate", "ci_low", "ci_high"])?;
    for v in &report.variables {
        w.write_record([
            v.variable.name().to_string(),
            v.estimate.to_string(),
            v.ci_low.to_string(),
            v.ci_high.to_string(),
        ])?;
    }
    finish(w)
}

/// Any serializable value as canonical JSON.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    canonical_json(&serde_json::to_value(value).expect("value serializes"))
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Horizontal interval chart: one row per label with a point and its interval
/// on a fixed `[lo, hi]` axis, plus a zero reference line when in range.
pub fn interval_svg(title: &str, rows: &[(String, f64, f64, f64)], axis: (f64, f64)) -> String {
    let mut out = String::new();
    svg_open(&mut out, title);
    let (lo, hi) = axis;
    let x = |v: f64| MARGIN + (v.clamp(lo, hi) - lo) / (hi - lo) * (WIDTH - 2.0 * MARGIN);
    let step = (HEIGHT - 2.0 * MARGIN) / rows.len().max(1) as f64;
    let base = HEIGHT - MARGIN;
    let _ = writeln!(out, r#"<line x1="{}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, x(lo), x(hi));
    for tick in 0..=4 {
        let v = lo + (hi - lo) * tick as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{}" text-anchor="middle">{v:.2}</text>"#, x(v), base + 16.0);
    }
    if lo < 0.0 && hi > 0.0 {
        let _ = writeln!(
            out,
            r#"<line x1="{0:.1}" y1="{MARGIN}" x2="{0:.1}" y2="{base}" stroke="grey" stroke-dasharray="4 4"/>"#,
            x(0.0)
        );
    }
    for (i, (label, est, low, high)) in rows.iter().enumerate() {
        let y = MARGIN + step * (i as f64 + 0.5);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN - 6.0,
            y + 4.0,
            escape(label)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="black" stroke-width="2"/>"#,
            x(*low),
            x(*high)
        );
        let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{y:.1}" r="4" fill="steelblue"/>"#, x(*est));
    }
    out.push_str("</svg>\n");
    out
}

pub fn sensitivity_svg(report: &SensitivityReport) -> String {
    let rows: Vec<(String, f64, f64, f64)> =
        report.variables.iter().map(|v| (v.variable.name().to_string(), v.estimate, v.ci_low, v.ci_high)).collect();
    interval_svg("Partial rank correlation with mean cooperation", &rows, (-1.0, 1.0))
}

/// Line chart of named series over periods `1..`, y axis `[0, 1]`.
pub fn line_svg(title: &str, series: &[(String, Vec<f64>)]) -> String {
    const COLORS: [&str; 6] = ["steelblue", "darkorange", "seagreen", "firebrick", "purple", "grey"];
    let mut out = String::new();
    svg_open(&mut out, title);
    let n = series.iter().map(|s| s.1.len()).max().unwrap_or(1).max(2);
    let x = |t: usize| MARGIN + t as f64 / (n - 1) as f64 * (WIDTH - 2.0 * MARGIN);
    let y = |v: f64| HEIGHT - MARGIN - v.clamp(0.0, 1.0) * (HEIGHT - 2.0 * MARGIN);
    let _ = writeln!(out, r#"<line x1="{MARGIN}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, y(0.0), x(n - 1));
    let _ = writeln!(out, r#"<line x1="{MARGIN}" y1="{}" x2="{MARGIN}" y2="{}" stroke="black"/>"#, y(0.0), y(1.0));
    for t in 0..n {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, x(t), y(0.0) + 16.0, t + 1);
    }
    for v in [0.0, 0.5, 1.0] {
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.1}</text>"#, MARGIN - 6.0, y(v) + 4.0);
    }
    for (i, (name, values)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = values.iter().enumerate().map(|(t, &v)| format!("{:.1},{:.1}", x(t), y(v))).collect();
        let _ =
            writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, points.join(" "));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            WIDTH - MARGIN + 4.0,
            MARGIN + 16.0 * i as f64,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_well_formed_enough() {
        let s = interval_svg("t", &[("a<b".into(), 0.2, -0.1, 0.5)], (-1.0, 1.0));
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a&lt;b"));
        let l = line_svg("x", &[("obs".into(), vec![0.1, 0.5, 0.9])]);
        assert!(l.contains("<polyline"));
    }
}
