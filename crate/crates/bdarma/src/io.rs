//! CSV and JSON files: composition series, posterior draws, summaries.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use bdarma_core::sampler::PosteriorDraws;
use bdarma_core::simplex::Composition;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest deviation from unit sum accepted when reading a series; rows are
/// renormalized exactly afterwards.
pub const READ_SUM_TOLERANCE: f64 = 1e-6;

/// Columns that label rows rather than hold components.
const LABEL_COLUMNS: [&str; 3] = ["t", "date", "step"];

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::output(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| Error::failed(format!("cannot write {}: {e}", path.display())))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::input(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn write_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::failed(format!("cannot write {}: {e}", path.display()))
}

fn parse_f64(field: &str, path: &Path, line: usize) -> Result<f64> {
    if field.is_empty() || field.eq_ignore_ascii_case("na") {
        return Ok(f64::NAN);
    }
    field
        .parse::<f64>()
        .map_err(|_| Error::invalid(format!("{}:{line}: '{field}' is not a number", path.display())))
}

/// A series of compositions with its component names.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub components: Vec<String>,
    pub labels: Vec<String>,
    pub rows: Vec<Composition>,
}

/// Reads a composition CSV. A leading `t`, `date` or `step` column is kept
/// as row labels; every other column is a component. Rows must be positive
/// and sum to one within [`READ_SUM_TOLERANCE`].
pub fn read_series(path: &Path) -> Result<Series> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?
        .clone();
    let label_col = headers
        .iter()
        .position(|h| LABEL_COLUMNS.contains(&h.to_ascii_lowercase().as_str()));
    let components: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_col)
        .map(|(_, h)| h.to_string())
        .collect();
    if components.len() < 2 {
        return Err(Error::invalid(format!(
            "{}: need at least 2 component columns",
            path.display()
        )));
    }
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| Error::invalid(format!("{}:{line}: {e}", path.display())))?;
        let mut values = Vec::with_capacity(components.len());
        for (i, field) in rec.iter().enumerate() {
            if Some(i) == label_col {
                labels.push(field.to_string());
            } else {
                values.push(parse_f64(field, path, line)?);
            }
        }
        let sum: f64 = values.iter().sum();
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) || (sum - 1.0).abs() > READ_SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "{}:{line}: not a composition (entries must be positive and sum to 1, got sum {sum})",
                path.display()
            )));
        }
        rows.push(Composition::from_weights(values)?);
    }
    if label_col.is_none() {
        labels = (0..rows.len()).map(|t| t.to_string()).collect();
    }
    if rows.is_empty() {
        return Err(Error::invalid(format!("{}: no rows", path.display())));
    }
    Ok(Series {
        components,
        labels,
        rows,
    })
}

/// Default component names `y1..yJ`.
pub fn component_names(j: usize) -> Vec<String> {
    (1..=j).map(|i| format!("y{i}")).collect()
}

/// Writes a composition CSV with a leading label column named `label`.
pub fn write_series(path: &Path, label: &str, labels: &[String], components: &[String], rows: &[Composition]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = write_err(path);
    let mut header = vec![label.to_string()];
    header.extend(components.iter().cloned());
    w.write_record(&header).map_err(&err)?;
    for (l, row) in labels.iter().zip(rows) {
        let mut rec = vec![l.clone()];
        rec.extend(row.as_slice().iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::output(path, e))
}

/// Writes draws as `chain,iteration,<names...>` rows.
pub fn write_draws(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = write_err(path);
    let mut header = vec!["chain".to_string(), "iteration".to_string()];
    header.extend(draws.names.iter().cloned());
    w.write_record(&header).map_err(&err)?;
    for c in 0..draws.chains {
        for i in 0..draws.sampling {
            let mut rec = vec![(c + 1).to_string(), (i + 1).to_string()];
            rec.extend(draws.draw(c, i).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(&err)?;
        }
    }
    w.flush().map_err(|e| Error::output(path, e))
}

/// Draws read back from [`write_draws`] output.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawTable {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_draws(path: &Path) -> Result<DrawTable> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?
        .clone();
    if headers.len() < 3 || &headers[0] != "chain" || &headers[1] != "iteration" {
        return Err(Error::invalid(format!(
            "{}: expected columns chain,iteration,<parameters...>",
            path.display()
        )));
    }
    let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::invalid(format!("{}:{}: {e}", path.display(), n + 2)))?;
        rows.push(
            rec.iter()
                .skip(2)
                .map(|f| parse_f64(f, path, n + 2))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    Ok(DrawTable { names, rows })
}

/// Writes a generic table of string cells.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = write_err(path);
    w.write_record(header).map_err(&err)?;
    for r in rows {
        w.write_record(r).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::output(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::output(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::failed(format!("cannot write {}: {e}", path.display())))?;
    w.write_all(b"\n").map_err(|e| Error::output(path, e))?;
    w.flush().map_err(|e| Error::output(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::input(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::output(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let rows = vec![
            Composition::new(vec![0.2, 0.3, 0.5]).unwrap(),
            Composition::new(vec![0.1, 0.1, 0.8]).unwrap(),
        ];
        let labels = vec!["0".to_string(), "1".to_string()];
        write_series(&path, "t", &labels, &component_names(3), &rows).unwrap();
        let s = read_series(&path).unwrap();
        assert_eq!(s.rows, rows);
        assert_eq!(s.components, ["y1", "y2", "y3"]);
        assert_eq!(s.labels, labels);
    }

    #[test]
    fn rejects_non_compositions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "a,b\n0.5,0.6\n").unwrap();
        let err = read_series(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
        assert_eq!(err.exit_code(), 1);
        fs::write(&path, "a,b\n0.5,x\n").unwrap();
        assert!(read_series(&path).is_err());
    }

    #[test]
    fn slightly_rounded_rows_are_renormalized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        fs::write(&path, "date,a,b,c\n2024-01-02,0.3333333,0.3333333,0.3333333\n").unwrap();
        let s = read_series(&path).unwrap();
        assert!((s.rows[0].as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(s.labels, ["2024-01-02"]);
    }

    #[test]
    fn missing_file_is_a_validation_error() {
        let err = read_series(Path::new("/nonexistent/x.csv")).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
