//! Sector trading-value panels: CSV readers, date checks and a synthetic
//! generator that stands in for market data.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use bdarma_core::ingest::{CellProblem, SectorPanel};
use bdarma_core::model::{Design, DesignDescriptor, FourierDesign, ModelSpec};
use bdarma_core::simulator::simulate_with;
use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

fn parse_date(s: &str, path: &Path, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, DATE_FORMAT)
        .map_err(|_| Error::invalid(format!("{}:{line}: '{s}' is not an ISO date", path.display())))
}

fn parse_value(s: &str, path: &Path, line: usize) -> Result<f64> {
    if s.is_empty() || s.eq_ignore_ascii_case("na") {
        return Ok(f64::NAN);
    }
    s.parse()
        .map_err(|_| Error::invalid(format!("{}:{line}: '{s}' is not a number", path.display())))
}

/// Problems with the date axis: weekends, repeats and disorder.
pub fn date_problems(dates: &[NaiveDate]) -> Vec<String> {
    let mut out = Vec::new();
    for (i, d) in dates.iter().enumerate() {
        if matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(format!("{d} is a weekend day"));
        }
        if i > 0 && *d <= dates[i - 1] {
            out.push(format!("{d} does not follow {}", dates[i - 1]));
        }
    }
    out
}

/// Validation outcome, written as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows: usize,
    pub sectors: Vec<String>,
    pub first_date: Option<String>,
    pub last_date: Option<String>,
    pub date_problems: Vec<String>,
    pub cell_problems: Vec<CellProblem>,
}

impl ValidationReport {
    pub fn of(panel: &SectorPanel, dates: &[NaiveDate]) -> Self {
        ValidationReport {
            rows: panel.len(),
            sectors: panel.sectors.clone(),
            first_date: dates.first().map(|d| d.to_string()),
            last_date: dates.last().map(|d| d.to_string()),
            date_problems: date_problems(dates),
            cell_problems: panel.problems(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.date_problems.is_empty() && self.cell_problems.is_empty() && self.rows > 0
    }
}

/// A panel with its parsed dates.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedPanel {
    pub dates: Vec<NaiveDate>,
    pub panel: SectorPanel,
}

impl DatedPanel {
    pub fn new(dates: Vec<NaiveDate>, sectors: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let rows = dates.iter().map(|d| d.to_string()).collect();
        Ok(DatedPanel {
            dates,
            panel: SectorPanel::new(rows, sectors, values)?,
        })
    }

    pub fn validate(&self) -> ValidationReport {
        ValidationReport::of(&self.panel, &self.dates)
    }
}

/// Long form: `date,sector,value` rows in any order. Sectors keep first-seen
/// order; a date missing a sector leaves a gap that validation reports.
pub fn read_long(path: &Path) -> Result<DatedPanel> {
    let file = File::open(path).map_err(|e| Error::input(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::invalid(format!("{}: missing column '{name}'", path.display())))
    };
    let (dc, sc, vc) = (col("date")?, col("sector")?, col("value")?);
    let mut sectors: Vec<String> = Vec::new();
    let mut cells: HashMap<(NaiveDate, usize), f64> = HashMap::new();
    let mut dates: Vec<NaiveDate> = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| Error::invalid(format!("{}:{line}: {e}", path.display())))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let date = parse_date(field(dc), path, line)?;
        let sector = field(sc).to_string();
        let s = match sectors.iter().position(|x| *x == sector) {
            Some(s) => s,
            None => {
                sectors.push(sector.clone());
                sectors.len() - 1
            }
        };
        let value = parse_value(field(vc), path, line)?;
        if cells.insert((date, s), value).is_some() {
            return Err(Error::invalid(format!(
                "{}:{line}: duplicate entry for {date} / {sector}",
                path.display()
            )));
        }
        dates.push(date);
    }
    dates.sort();
    dates.dedup();
    let values = dates
        .iter()
        .map(|d| {
            (0..sectors.len())
                .map(|s| cells.get(&(*d, s)).copied().unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    DatedPanel::new(dates, sectors, values)}

/// Wide form: `date,<sector...>` with one row per trading day.
pub fn read_wide(path: &Path) -> Result<DatedPanel> {
    let file = File::open(path).map_err(|e| Error::input(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?
        .clone();
    if headers.len() < 3 || !headers[0].eq_ignore_ascii_case("date") {
        return Err(Error::invalid(format!(
            "{}: expected columns date,<sector...> with at least two sectors",
            path.display()
        )));
    }
    let sectors: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| Error::invalid(format!("{}:{line}: {e}", path.display())))?;
        dates.push(parse_date(&rec[0], path, line)?);
        values.push(
            rec.iter()
                .skip(1)
                .map(|f| parse_value(f, path, line))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    DatedPanel::new(dates, sectors, values)}

/// Writes the long form.
pub fn write_long(path: &Path, panel: &DatedPanel) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::failed(format!("cannot write {}: {e}", path.display())))?;
    let err = |e: csv::Error| Error::failed(format!("cannot write {}: {e}", path.display()));
    w.write_record(["date", "sector", "value"]).map_err(err)?;
    for (d, row) in panel.dates.iter().zip(&panel.panel.values) {
        for (s, v) in panel.panel.sectors.iter().zip(row) {
            w.write_record([d.to_string(), s.clone(), v.to_string()]).map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::output(path, e))
}

/// The eleven GICS sector names used by the synthetic panel.
pub const SECTORS: [&str; 11] = [
    "Communication Services",
    "Consumer Discretionary",
    "Consumer Staples",
    "Energy",
    "Financials",
    "Health Care",
    "Industrials",
    "Information Technology",
    "Materials",
    "Real Estate",
    "Utilities",
];

/// Average shares of the synthetic sectors, in [`SECTORS`] order.
const BASE_SHARES: [f64; 11] = [0.09, 0.13, 0.05, 0.06, 0.10, 0.11, 0.08, 0.27, 0.03, 0.03, 0.05];

/// Consecutive weekdays starting on `start` (moved forward to a weekday).
pub fn trading_days(start: NaiveDate, len: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(len);
    let mut d = start;
    while out.len() < len {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

/// Settings of the synthetic sector panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticPanel {
    pub len: usize,
    pub start: NaiveDate,
    pub seed: u64,
    /// Own-lag persistence of the ALR deviations.
    pub persistence: f64,
    /// Dirichlet precision.
    pub precision: f64,
    /// Amplitude of the seasonal terms on the ALR scale.
    pub seasonal_amplitude: f64,
}

impl Default for SyntheticPanel {
    fn default() -> Self {
        SyntheticPanel {
            len: 630,
            start: NaiveDate::from_ymd_opt(2021, 1, 4).expect("valid date"),
            seed: 2021,
            persistence: 0.5,
            precision: 500.0,
            seasonal_amplitude: 0.05,
        }
    }
}

impl SyntheticPanel {
    /// Dirichlet-perturbed seasonal shares driven by a first-order recursion,
    /// scaled by a random daily total into dollar values.
    pub fn generate(&self) -> Result<DatedPanel> {
        let j = SECTORS.len();
        let k = j - 1;
        let design = FourierDesign::trading_days(k);
        let width = design.block_width();
        let spec = ModelSpec::new(1, 0, j, k * width, width)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut theta = vec![0.0; spec.count_parameters()];
        for r in 0..k {
            theta[spec.ar_offset(1) + r * k + r] = self.persistence;
        }
        let last = BASE_SHARES[k].ln();
        for (c, share) in BASE_SHARES[..k].iter().enumerate() {
            let block = spec.beta_offset() + c * width;
            theta[block] = share.ln() - last;
            for s in 1..width {
                theta[block + s] = self.seasonal_amplitude * (2.0 * rng.random::<f64>() - 1.0) / (s as f64).sqrt();
            }
        }
        theta[spec.gamma_offset()] = self.precision.ln();
        let descriptor = DesignDescriptor::Fourier(design);
        debug_assert_eq!(descriptor.r_beta(), spec.r_beta);
        let start: Vec<f64> = BASE_SHARES.iter().map(|s| s * self.precision).collect();
        let shares = simulate_with(&spec, &descriptor, &theta, self.len, &start, &mut rng)?;
        let values = shares
            .iter()
            .map(|y| {
                let total = 4.0e11 * (0.2 * (rng.random::<f64>() - 0.5)).exp();
                y.as_slice().iter().map(|s| s * total).collect()
            })
            .collect();
        DatedPanel::new(
            trading_days(self.start, self.len),
            SECTORS.iter().map(|s| s.to_string()).collect(),
            values,
        )
    }
}
