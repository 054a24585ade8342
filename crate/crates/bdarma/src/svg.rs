//! Minimal SVG charts: grouped bars and forecast panels.

use std::fmt::Write;

const PALETTE: [&str; 8] = [
    "#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb", "#000000",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Grouped bar chart: one group per label, one bar per series.
pub fn grouped_bars(title: &str, groups: &[String], series: &[(String, Vec<Option<f64>>)]) -> String {
    let (width, height, margin) = (720.0, 360.0, 50.0);
    let top = series
        .iter()
        .flat_map(|(_, v)| v.iter().flatten().copied())
        .filter(|v| v.is_finite())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let plot_w = width - 2.0 * margin;
    let plot_h = height - 2.0 * margin;
    let group_w = plot_w / groups.len().max(1) as f64;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<line x1="{margin}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        height - margin,
        width - margin,
        height - margin
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{top:.4}</text>"#, margin - 4.0, margin + 4.0);
    for (g, label) in groups.iter().enumerate() {
        let gx = margin + g as f64 * group_w + group_w * 0.1;
        for (s, (_, values)) in series.iter().enumerate() {
            if let Some(v) = values.get(g).copied().flatten().filter(|v| v.is_finite()) {
                let h = plot_h * v / top;
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}"><title>{v:.5}</title></rect>"#,
                    gx + s as f64 * bar_w,
                    height - margin - h,
                    bar_w,
                    h,
                    PALETTE[s % PALETTE.len()]
                );
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            margin + (g as f64 + 0.5) * group_w,
            height - margin + 16.0,
            escape(label)
        );
    }
    for (s, (name, _)) in series.iter().enumerate() {
        let y = margin + 14.0 * s as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            width - margin - 110.0,
            y - 9.0,
            PALETTE[s % PALETTE.len()],
            width - margin - 95.0,
            y,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Lower and upper rows of an interval band.
pub type Band<'a> = (&'a [Vec<f64>], &'a [Vec<f64>]);

/// Small multiples of actual vs forecast shares, one panel per component.
///
/// `lower`/`upper`, when given, are drawn as a band.
pub fn forecast_panels(
    title: &str,
    components: &[String],
    actual: &[Vec<f64>],
    forecast: &[Vec<f64>],
    band: Option<Band<'_>>,
) -> String {
    let cols = 3usize;
    let rows = components.len().div_ceil(cols);
    let (pw, ph, pad) = (240.0, 150.0, 30.0);
    let width = cols as f64 * pw;
    let height = rows as f64 * ph + 30.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(out, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, width / 2.0, escape(title));
    let steps = forecast.len().max(actual.len()).max(2);
    for (c, name) in components.iter().enumerate() {
        let ox = (c % cols) as f64 * pw;
        let oy = 30.0 + (c / cols) as f64 * ph;
        let mut values: Vec<f64> = actual.iter().chain(forecast).map(|r| r[c]).collect();
        if let Some((lo, hi)) = band {
            values.extend(lo.iter().chain(hi).map(|r| r[c]));
        }
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let span = if max > min { max - min } else { 1.0 };
        let x = |i: usize| ox + pad + (pw - 2.0 * pad) * i as f64 / (steps - 1) as f64;
        let y = |v: f64| oy + ph - pad - (ph - 2.0 * pad) * (v - min) / span;
        let path = |rows: &[Vec<f64>]| {
            rows.iter()
                .enumerate()
                .map(|(i, r)| format!("{:.1},{:.1}", x(i), y(r[c])))
                .collect::<Vec<_>>()
                .join(" ")
        };
        if let Some((lo, hi)) = band {
            let mut pts: Vec<String> = lo.iter().enumerate().map(|(i, r)| format!("{:.1},{:.1}", x(i), y(r[c]))).collect();
            pts.extend(hi.iter().enumerate().rev().map(|(i, r)| format!("{:.1},{:.1}", x(i), y(r[c]))));
            let _ = writeln!(out, r##"<polygon points="{}" fill="#4477aa" fill-opacity="0.2"/>"##, pts.join(" "));
        }
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, ox + pad, oy + 12.0, escape(name));
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="black"/>"#, path(actual));
        let _ = writeln!(out, r##"<polyline points="{}" fill="none" stroke="#ee6677"/>"##, path(forecast));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let s = grouped_bars(
            "a < b",
            &["S1".into(), "S2".into()],
            &[("x".into(), vec![Some(0.1), None]), ("y".into(), vec![Some(0.2), Some(0.3)])],
        );
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a &lt; b"));
        assert_eq!(s.matches("<rect").count(), 3 + 2);
        let rows = vec![vec![0.5, 0.5], vec![0.4, 0.6]];
        let p = forecast_panels("f", &["a".into(), "b".into()], &rows, &rows, Some((&rows, &rows)));
        assert_eq!(p.matches("<polyline").count(), 4);
    }
}
