//! Study and application tables as CSV, aligned text and SVG.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use bdarma_core::prior::PriorFamily;

use crate::application::ApplicationReport;
use crate::error::Result;
use crate::io::{write_table, write_text};
use crate::study::{Scenario, StudyReport};
use crate::svg;

fn fmt(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.digits$}"),
        _ => "-".into(),
    }
}

/// Blocks in table order: `beta`, then AR lags, MA lags, `gamma`.
fn block_order(blocks: &[String]) -> Vec<String> {
    let rank = |b: &str| -> (u8, usize) {
        let lag = b[1..].parse().unwrap_or(0);
        match b.as_bytes()[0] {
            b'b' => (0, 0),
            b'A' => (1, lag),
            b'B' => (2, lag),
            _ => (3, 0),
        }
    };
    let mut out = blocks.to_vec();
    out.sort_by_key(|b| rank(b));
    out
}

/// Parameter-recovery table of one scenario.
pub fn recovery_text(report: &StudyReport, scenario: Scenario) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:<13} {:>10} {:>10} {:>14} {:>9}",
        "Coefficient", "Prior", "Mean Bias", "Mean RMSE", "Mean CI Length", "Coverage"
    );
    let cells: Vec<_> = report.cells.iter().filter(|c| c.scenario == scenario).collect();
    let mut blocks: Vec<String> = Vec::new();
    for c in &cells {
        if let Some(r) = &c.recovery {
            for b in &r.blocks {
                if !blocks.contains(&b.block) {
                    blocks.push(b.block.clone());
                }
            }
        }
    }
    for block in block_order(&blocks) {
        for c in &cells {
            let b = c.recovery.as_ref().and_then(|r| r.block(&block));
            let _ = writeln!(
                out,
                "{:<12} {:<13} {:>10} {:>10} {:>14} {:>9}",
                block,
                c.prior.label(),
                fmt(b.map(|b| b.mean_bias), 3),
                fmt(b.map(|b| b.mean_rmse), 3),
                fmt(b.map(|b| b.mean_ci_length), 3),
                fmt(b.map(|b| b.coverage), 3)
            );
        }
    }
    out
}

fn priors_of(report: &StudyReport) -> Vec<PriorFamily> {
    let mut out = Vec::new();
    for c in &report.cells {
        if !out.contains(&c.prior) {
            out.push(c.prior);
        }
    }
    out
}

/// Forecast accuracy: M-RMSE and SD-RMSE per scenario.
pub fn forecast_text(report: &StudyReport) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<13}", "Prior");
    for s in &report.config.scenarios {
        let _ = write!(out, " {:>12} {:>12}", format!("{} M-RMSE", s.label()), format!("{} SD-RMSE", s.label()));
    }
    out.push('\n');
    for p in priors_of(report) {
        let _ = write!(out, "{:<13}", p.label());
        for s in &report.config.scenarios {
            let f = report.cell(*s, p).and_then(|c| c.forecast);
            let _ = write!(out, " {:>12} {:>12}", fmt(f.map(|f| f.m_rmse), 4), fmt(f.map(|f| f.sd_rmse), 5));
        }
        out.push('\n');
    }
    out
}

/// Cross-study and within-study ratio tables.
pub fn ratios_text(report: &StudyReport) -> String {
    let mut out = String::new();
    let pairs: Vec<(String, String)> = {
        let mut v: Vec<(String, String)> = Vec::new();
        for r in &report.ratios.cross {
            let key = (r.numerator.clone(), r.denominator.clone());
            if !v.contains(&key) {
                v.push(key);
            }
        }
        v
    };
    let _ = write!(out, "{:<13}", "Prior");
    for (n, d) in &pairs {
        let _ = write!(out, " {:>9}", format!("M {n}/{d}"));
    }
    for (n, d) in &pairs {
        let _ = write!(out, " {:>10}", format!("SD {n}/{d}"));
    }
    out.push('\n');
    for p in priors_of(report) {
        let _ = write!(out, "{:<13}", p.label());
        for (n, d) in &pairs {
            let r = report.ratios.cross_ratio(p.label(), n, d);
            let _ = write!(out, " {:>9}", fmt(r.and_then(|r| r.m_rmse), 3));
        }
        for (n, d) in &pairs {
            let r = report.ratios.cross_ratio(p.label(), n, d);
            let _ = write!(out, " {:>10}", fmt(r.and_then(|r| r.sd_rmse), 3));
        }
        out.push('\n');
    }
    out.push('\n');
    let _ = write!(out, "{:<13}", "Prior");
    for s in &report.config.scenarios {
        let _ = write!(out, " {:>9} {:>9}", format!("{} M", s.label()), format!("{} SD", s.label()));
    }
    out.push('\n');
    for p in priors_of(report) {
        let _ = write!(out, "{:<13}", p.label());
        for s in &report.config.scenarios {
            let r = report.ratios.within_ratio(s.label(), p.label());
            let _ = write!(
                out,
                " {:>9} {:>9}",
                fmt(r.and_then(|r| r.m_rmse), 3),
                fmt(r.and_then(|r| r.sd_rmse), 3)
            );
        }
        out.push('\n');
    }
    out
}

/// Every study table as one text document.
pub fn study_text(report: &StudyReport) -> String {
    let mut out = String::new();
    for s in &report.config.scenarios {
        let _ = writeln!(out, "Parameter recovery, {} scenario\n", s.name());
        out.push_str(&recovery_text(report, *s));
        out.push('\n');
    }
    out.push_str("Forecast accuracy\n\n");
    out.push_str(&forecast_text(report));
    out.push_str("\nForecast ratios (ratios above 1 are worse than the denominator)\n\n");
    out.push_str(&ratios_text(report));
    if !report.failures.is_empty() {
        let _ = writeln!(out, "\n{} failed fits excluded", report.failures.len());
    }
    out
}

/// Writes CSV tables, the text tables and a chart; returns the paths.
pub fn write_study_tables(dir: &Path, report: &StudyReport) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut rec_rows = Vec::new();
    let mut param_rows = Vec::new();
    let mut fc_rows = Vec::new();
    for c in &report.cells {
        if let Some(r) = &c.recovery {
            for b in &r.blocks {
                rec_rows.push(vec![
                    c.scenario.name().into(),
                    c.prior.id().into(),
                    b.block.clone(),
                    b.parameters.to_string(),
                    b.mean_bias.to_string(),
                    b.mean_rmse.to_string(),
                    b.mean_ci_length.to_string(),
                    b.coverage.to_string(),
                ]);
            }
            for p in &r.parameters {
                param_rows.push(vec![
                    c.scenario.name().into(),
                    c.prior.id().into(),
                    p.name.clone(),
                    p.truth.to_string(),
                    p.bias.to_string(),
                    p.rmse.to_string(),
                    p.ci_length.to_string(),
                    p.coverage.to_string(),
                ]);
            }
        }
        let f = c.forecast;
        fc_rows.push(vec![
            c.scenario.name().into(),
            c.prior.id().into(),
            c.fits.to_string(),
            c.failed.to_string(),
            c.divergence_flagged.to_string(),
            fmt(Some(c.max_rhat), 4),
            fmt(f.map(|f| f.m_rmse), 6),
            fmt(f.map(|f| f.sd_rmse), 6),
            fmt(f.map(|f| f.mae), 6),
            fmt(c.pooled_rmse, 6),
        ]);
    }
    let mut save = |name: &str, header: &[&str], rows: &[Vec<String>]| -> Result<()> {
        let path = dir.join(name);
        write_table(&path, header, rows)?;
        written.push(path);
        Ok(())
    };
    save(
        "recovery.csv",
        &["scenario", "prior", "block", "parameters", "mean_bias", "mean_rmse", "mean_ci_length", "coverage"],
        &rec_rows,
    )?;
    save(
        "parameters.csv",
        &["scenario", "prior", "parameter", "truth", "bias", "rmse", "ci_length", "coverage"],
        &param_rows,
    )?;
    save(
        "forecast.csv",
        &["scenario", "prior", "fits", "failed", "divergence_flagged", "max_rhat", "m_rmse", "sd_rmse", "mae", "pooled_rmse"],
        &fc_rows,
    )?;
    let cross: Vec<Vec<String>> = report
        .ratios
        .cross
        .iter()
        .map(|r| {
            vec![
                r.prior.clone(),
                format!("{}/{}", r.numerator, r.denominator),
                fmt(r.m_rmse, 6),
                fmt(r.sd_rmse, 6),
            ]
        })
        .collect();
    save("ratios_cross.csv", &["prior", "ratio", "m_rmse", "sd_rmse"], &cross)?;
    let within: Vec<Vec<String>> = report
        .ratios
        .within
        .iter()
        .map(|r| vec![r.study.clone(), r.prior.clone(), fmt(r.m_rmse, 6), fmt(r.sd_rmse, 6)])
        .collect();
    save("ratios_within.csv", &["study", "prior", "m_rmse", "sd_rmse"], &within)?;

    let text_path = dir.join("tables.txt");
    write_text(&text_path, &study_text(report))?;
    written.push(text_path);

    let groups: Vec<String> = report.config.scenarios.iter().map(|s| s.name().to_string()).collect();
    let series: Vec<(String, Vec<Option<f64>>)> = priors_of(report)
        .into_iter()
        .map(|p| {
            let v = report
                .config
                .scenarios
                .iter()
                .map(|s| report.cell(*s, p).and_then(|c| c.forecast).map(|f| f.m_rmse))
                .collect();
            (p.label().to_string(), v)
        })
        .collect();
    let svg_path = dir.join("forecast_rmse.svg");
    write_text(&svg_path, &svg::grouped_bars("Forecast M-RMSE by scenario and prior", &groups, &series))?;
    written.push(svg_path);
    Ok(written)
}

/// Aggregate holdout RMSE and MAE per prior.
pub fn application_text(report: &ApplicationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<13} {:>8} {:>8} {:>10} {:>7}",
        "Prior", "RMSE", "MAE", "div. rate", "R-hat"
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:<13} {:>8.4} {:>8.5} {:>10.3} {:>7.3}",
            r.prior.label(),
            r.rmse,
            r.mae,
            r.max_divergence_rate,
            r.max_rhat
        );
    }
    for (p, e) in &report.failures {
        let _ = writeln!(out, "{:<13} failed: {e}", p.label());
    }
    out
}

pub fn write_application_tables(dir: &Path, report: &ApplicationReport) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.prior.id().into(),
                r.rmse.to_string(),
                r.mae.to_string(),
                r.max_divergence_rate.to_string(),
                r.divergence_flagged.to_string(),
                r.max_rhat.to_string(),
                r.forecasts_on_simplex.to_string(),
            ]
        })
        .collect();
    let path = dir.join("application.csv");
    write_table(
        &path,
        &["prior", "rmse", "mae", "max_divergence_rate", "divergence_flagged", "max_rhat", "forecasts_on_simplex"],
        &rows,
    )?;
    written.push(path);
    let sector_rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .flat_map(|r| {
            report.sectors.iter().enumerate().map(move |(s, name)| {
                vec![
                    r.prior.id().into(),
                    name.clone(),
                    r.sector_rmse[s].to_string(),
                    r.sector_mae[s].to_string(),
                ]
            })
        })
        .collect();
    let path = dir.join("application_sectors.csv");
    write_table(&path, &["prior", "sector", "rmse", "mae"], &sector_rows)?;
    written.push(path);
    let path = dir.join("tables.txt");
    write_text(&path, &application_text(report))?;
    written.push(path);
    for r in &report.rows {
        let path = dir.join(format!("forecast_{}.svg", r.prior.id()));
        let title = format!("{} prior: holdout forecast vs actual", r.prior.label());
        write_text(&path, &svg::forecast_panels(&title, &report.sectors, &report.actual, &r.forecast, None))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_follow_table_order() {
        let b: Vec<String> = ["gamma", "B1", "A2", "beta", "A1", "A10"].iter().map(|s| s.to_string()).collect();
        assert_eq!(block_order(&b), ["beta", "A1", "A2", "A10", "B1", "gamma"]);
    }

    #[test]
    fn missing_values_print_as_dash() {
        assert_eq!(fmt(None, 3), "-");
        assert_eq!(fmt(Some(f64::NAN), 3), "-");
        assert_eq!(fmt(Some(0.12345), 3), "0.123");
    }
}
