//! Raw sector values to share compositions, and train/test splits.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::Composition;

/// A `T x K` panel of positive values with a label per row (usually an ISO
/// date) and a name per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorPanel {
    pub rows: Vec<String>,
    pub sectors: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

/// A value that failed validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellProblem {
    pub row: String,
    pub sector: String,
    pub problem: String,
}

impl SectorPanel {
    pub fn new(rows: Vec<String>, sectors: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let panel = SectorPanel { rows, sectors, values };
        panel.check_shape()?;
        Ok(panel)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_shape(&self) -> Result<()> {
        if self.sectors.len() < 2 {
            return Err(Error::Config(format!(
                "a panel needs at least 2 sectors, got {}",
                self.sectors.len()
            )));
        }
        if self.rows.len() != self.values.len() {
            return Err(Error::Config(format!(
                "{} row labels for {} value rows",
                self.rows.len(),
                self.values.len()
            )));
        }
        if let Some((i, r)) = self.values.iter().enumerate().find(|(_, r)| r.len() != self.sectors.len()) {
            return Err(Error::Config(format!(
                "row {} has {} values, expected {}",
                self.rows[i],
                r.len(),
                self.sectors.len()
            )));
        }
        Ok(())
    }

    /// Every missing (NaN), infinite or nonpositive value.
    pub fn problems(&self) -> Vec<CellProblem> {
        let mut out = Vec::new();
        for (label, row) in self.rows.iter().zip(&self.values) {
            for (sector, &v) in self.sectors.iter().zip(row) {
                let problem = if v.is_nan() {
                    "missing"
                } else if !v.is_finite() {
                    "not finite"
                } else if v <= 0.0 {
                    "not positive"
                } else {
                    continue;
                };
                out.push(CellProblem {
                    row: label.clone(),
                    sector: sector.clone(),
                    problem: format!("{problem} ({v})"),
                });
            }
        }
        out
    }
}

/// Daily shares `y_kt = V_kt / sum_k V_kt`.
///
/// Fails listing every offending row and sector when a value is missing or
/// not positive.
pub fn to_shares(panel: &SectorPanel) -> Result<Vec<Composition>> {
    panel.check_shape()?;
    let problems = panel.problems();
    if !problems.is_empty() {
        let listed: Vec<String> = problems
            .iter()
            .take(20)
            .map(|p| format!("{} / {}: {}", p.row, p.sector, p.problem))
            .collect();
        let more = problems.len().saturating_sub(listed.len());
        let mut msg = listed.join("; ");
        if more > 0 {
            msg.push_str(&format!("; and {more} more"));
        }
        return Err(Error::InvalidComposition(msg));
    }
    panel.values.iter().map(|r| Composition::from_weights(r.clone())).collect()
}

/// Contiguous split keeping the final `test_len` rows for testing.
pub fn split<T: Clone>(series: &[T], test_len: usize) -> Result<(Vec<T>, Vec<T>)> {
    if test_len == 0 || test_len >= series.len() {
        return Err(Error::InsufficientData {
            needed: test_len + 1,
            available: series.len(),
        });
    }
    let cut = series.len() - test_len;
    Ok((series[..cut].to_vec(), series[cut..].to_vec()))
}

/// Split at a boundary row: rows `..=train_end` train, the next `test_len`
/// rows test. The boundary row belongs to the training set.
pub fn split_at<T: Clone>(series: &[T], train_end: usize, test_len: usize) -> Result<(Vec<T>, Vec<T>)> {
    let cut = train_end + 1;
    if test_len == 0 || cut + test_len > series.len() {
        return Err(Error::InsufficientData {
            needed: cut + test_len.max(1),
            available: series.len(),
        });
    }
    Ok((series[..cut].to_vec(), series[cut..cut + test_len].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use alloc::vec::Vec;

    fn panel(values: Vec<Vec<f64>>) -> SectorPanel {
        let k = values[0].len();
        SectorPanel::new(
            (0..values.len()).map(|i| format!("d{i}")).collect(),
            (0..k).map(|i| format!("s{i}")).collect(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn equal_values_give_equal_shares() {
        let y = to_shares(&panel(vec![vec![3.0; 11]])).unwrap();
        for v in y[0].as_slice() {
            assert!((v - 1.0 / 11.0).abs() < 1e-15);
        }
    }

    #[test]
    fn direct_normalization() {
        let y = to_shares(&panel(vec![vec![2.0, 1.0, 1.0]])).unwrap();
        assert_eq!(y[0].as_slice(), &[0.5, 0.25, 0.25]);
    }

    #[test]
    fn bad_cells_are_listed() {
        let p = panel(vec![vec![1.0, 1.0], vec![0.0, f64::NAN]]);
        let err = to_shares(&p).unwrap_err().to_string();
        assert!(err.contains("d1 / s0") && err.contains("d1 / s1"), "{err}");
    }

    #[test]
    fn split_conventions() {
        let rows: Vec<usize> = (0..700).collect();
        let (train, test) = split(&rows, 126).unwrap();
        assert_eq!((train.len(), test.len()), (574, 126));
        let (a, b) = split_at(&rows, 573, 126).unwrap();
        assert_eq!(a, train);
        assert_eq!(b, test);
        assert_eq!(*a.last().unwrap(), 573);
        assert_eq!(split(&rows, 126).unwrap(), (train.clone(), test.clone()));
        assert!(split(&rows, 700).is_err());
        assert!(split_at(&rows, 600, 126).is_err());
    }
}
