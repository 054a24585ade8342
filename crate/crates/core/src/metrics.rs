//! Parameter-recovery and forecast-accuracy metrics, and the ratio tables
//! that compare them across studies and priors.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::math::{abs, floor, sqrt};

/// Serde adapter writing non-finite floats as `null` and reading `null` back as NaN,
/// so reports with undefined cells survive a JSON round trip.
pub mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}


/// Linear-interpolation quantile (type 7) of already sorted data.
///
/// Returns NaN for empty input.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
            let lo = floor(h) as usize;
            if lo + 1 >= n {
                return sorted[n - 1];
            }
            let frac = h - lo as f64;
            sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
        }
    }
}

/// Type-7 quantile of unsorted data.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

/// A closed credible interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "nan_as_null")]
    pub lo: f64,
    #[serde(with = "nan_as_null")]
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Equal-tailed interval holding `level` of the draws.
pub fn equal_tailed(draws: &[f64], level: f64) -> Interval {
    let mut v = draws.to_vec();
    v.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    Interval::new(quantile_sorted(&v, tail), quantile_sorted(&v, 1.0 - tail))
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Recovery of a single parameter across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRecovery {
    pub name: String,
    pub block: String,
    #[serde(with = "nan_as_null")]
    pub truth: f64,
    #[serde(with = "nan_as_null")]
    pub bias: f64,
    #[serde(with = "nan_as_null")]
    pub rmse: f64,
    #[serde(with = "nan_as_null")]
    pub ci_length: f64,
    #[serde(with = "nan_as_null")]
    pub coverage: f64,
}

/// Block averages of the per-parameter metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecovery {
    pub block: String,
    pub parameters: usize,
    #[serde(with = "nan_as_null")]
    pub mean_bias: f64,
    #[serde(with = "nan_as_null")]
    pub mean_rmse: f64,
    #[serde(with = "nan_as_null")]
    pub mean_ci_length: f64,
    #[serde(with = "nan_as_null")]
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub replicates: usize,
    pub parameters: Vec<ParameterRecovery>,
    pub blocks: Vec<BlockRecovery>,
}

impl RecoverySummary {
    pub fn block(&self, name: &str) -> Option<&BlockRecovery> {
        self.blocks.iter().find(|b| b.block == name)
    }
}

/// What a recovered parameter is called and which table block it belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterLabel {
    pub name: String,
    pub block: String,
}

/// Bias, RMSE, interval length and coverage per parameter and per block.
///
/// `estimates[s][j]` and `intervals[s][j]` belong to replicate `s`. Only the
/// parameters listed in `labels`/`truth` are scored, so parameters a fitted
/// model omits are simply left out by the caller. Blocks keep first-seen order.
pub fn recovery_metrics(
    labels: &[ParameterLabel],
    truth: &[f64],
    estimates: &[Vec<f64>],
    intervals: &[Vec<Interval>],
) -> Result<RecoverySummary> {
    let c = truth.len();
    shape("parameter labels", c, labels.len())?;
    shape("interval replicates", estimates.len(), intervals.len())?;
    if estimates.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            available: 0,
        });
    }
    for (e, i) in estimates.iter().zip(intervals) {
        shape("replicate estimates", c, e.len())?;
        shape("replicate intervals", c, i.len())?;
    }
    let s = estimates.len() as f64;
    let parameters: Vec<ParameterRecovery> = (0..c)
        .map(|j| {
            let t = truth[j];
            let (mut err, mut sq, mut len, mut hit) = (0.0, 0.0, 0.0, 0.0);
            for (e, iv) in estimates.iter().zip(intervals) {
                let d = e[j] - t;
                err += d;
                sq += d * d;
                len += iv[j].length();
                if iv[j].contains(t) {
                    hit += 1.0;
                }
            }
            ParameterRecovery {
                name: labels[j].name.clone(),
                block: labels[j].block.clone(),
                truth: t,
                bias: err / s,
                rmse: sqrt(sq / s),
                ci_length: len / s,
                coverage: hit / s,
            }
        })
        .collect();

    let mut order: Vec<&str> = Vec::new();
    for l in labels {
        if !order.contains(&l.block.as_str()) {
            order.push(&l.block);
        }
    }
    let blocks = order
        .into_iter()
        .map(|b| {
            let members: Vec<&ParameterRecovery> = parameters.iter().filter(|p| p.block == b).collect();
            let avg = |f: fn(&ParameterRecovery) -> f64| {
                members.iter().map(|p| f(p)).sum::<f64>() / members.len() as f64
            };
            BlockRecovery {
                block: b.into(),
                parameters: members.len(),
                mean_bias: avg(|p| p.bias),
                mean_rmse: avg(|p| p.rmse),
                mean_ci_length: avg(|p| p.ci_length),
                coverage: avg(|p| p.coverage),
            }
        })
        .collect();
    Ok(RecoverySummary {
        replicates: estimates.len(),
        parameters,
        blocks,
    })
}

/// Root mean squared error over matching flat arrays.
pub fn rmse(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    shape("forecast values", actual.len(), forecast.len())?;
    if actual.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            available: 0,
        });
    }
    let sq: f64 = actual.iter().zip(forecast).map(|(a, f)| (a - f) * (a - f)).sum();
    Ok(sqrt(sq / actual.len() as f64))
}

/// Mean absolute error over matching flat arrays.
pub fn mae(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    shape("forecast values", actual.len(), forecast.len())?;
    if actual.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            available: 0,
        });
    }
    let s: f64 = actual.iter().zip(forecast).map(|(a, f)| abs(a - f)).sum();
    Ok(s / actual.len() as f64)
}

/// Pooled forecast RMSE: the square root of the grand mean of squared errors
/// over replicates, horizon steps and components.
///
/// Each replicate is a flat `H x J` array; all replicates must agree in size.
pub fn forecast_rmse<A: AsRef<[f64]>, F: AsRef<[f64]>>(actuals: &[A], forecasts: &[F]) -> Result<f64> {
    shape("forecast replicates", actuals.len(), forecasts.len())?;
    let width = actuals.first().map_or(0, |a| a.as_ref().len());
    let mut all_a = Vec::with_capacity(width * actuals.len());
    let mut all_f = Vec::with_capacity(width * actuals.len());
    for (a, f) in actuals.iter().zip(forecasts) {
        shape("replicate forecast", width, a.as_ref().len())?;
        all_a.extend_from_slice(a.as_ref());
        all_f.extend_from_slice(f.as_ref());
    }
    rmse(&all_a, &all_f)
}

/// Across-replicate forecast accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastSummary {
    /// Mean of the per-replicate RMSEs.
    #[serde(with = "nan_as_null")]
    pub m_rmse: f64,
    /// Sample standard deviation of the per-replicate RMSEs (0 for one replicate).
    #[serde(with = "nan_as_null")]
    pub sd_rmse: f64,
    /// Mean of the per-replicate MAEs.
    #[serde(with = "nan_as_null")]
    pub mae: f64,
    pub replicates: usize,
}

impl ForecastSummary {
    /// Summarizes per-replicate `(actual, forecast)` flat arrays.
    pub fn from_replicates<A: AsRef<[f64]>, F: AsRef<[f64]>>(actuals: &[A], forecasts: &[F]) -> Result<Self> {
        shape("forecast replicates", actuals.len(), forecasts.len())?;
        let mut rmses = Vec::with_capacity(actuals.len());
        let mut maes = Vec::with_capacity(actuals.len());
        for (a, f) in actuals.iter().zip(forecasts) {
            rmses.push(rmse(a.as_ref(), f.as_ref())?);
            maes.push(mae(a.as_ref(), f.as_ref())?);
        }
        Self::from_errors(&rmses, &maes)
    }

    /// Summarizes precomputed per-replicate RMSE and MAE values.
    pub fn from_errors(rmses: &[f64], maes: &[f64]) -> Result<Self> {
        shape("replicate MAEs", rmses.len(), maes.len())?;
        if rmses.is_empty() {
            return Err(Error::InsufficientData {
                needed: 1,
                available: 0,
            });
        }
        let n = rmses.len();
        let m = mean(rmses);
        let sd = if n > 1 {
            sqrt(rmses.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / (n - 1) as f64)
        } else {
            0.0
        };
        Ok(ForecastSummary {
            m_rmse: m,
            sd_rmse: sd,
            mae: mean(maes),
            replicates: n,
        })
    }
}

/// One cell of the input to [`ratio_tables`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub study: String,
    pub prior: String,
    pub m_rmse: f64,
    pub sd_rmse: f64,
}

/// `numerator / denominator` study ratios for one prior. `None` marks a hole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossStudyRatio {
    pub prior: String,
    pub numerator: String,
    pub denominator: String,
    pub m_rmse: Option<f64>,
    pub sd_rmse: Option<f64>,
}

/// A prior's metrics divided by the best prior's within one study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WithinStudyRatio {
    pub study: String,
    pub prior: String,
    pub m_rmse: Option<f64>,
    pub sd_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub cross: Vec<CrossStudyRatio>,
    pub within: Vec<WithinStudyRatio>,
}

impl RatioReport {
    pub fn cross_ratio(&self, prior: &str, numerator: &str, denominator: &str) -> Option<&CrossStudyRatio> {
        self.cross
            .iter()
            .find(|r| r.prior == prior && r.numerator == numerator && r.denominator == denominator)
    }

    pub fn within_ratio(&self, study: &str, prior: &str) -> Option<&WithinStudyRatio> {
        self.within.iter().find(|r| r.study == study && r.prior == prior)
    }
}

fn ratio(num: Option<f64>, den: Option<f64>) -> Option<f64> {
    match (num, den) {
        (Some(n), Some(d)) if d != 0.0 && n.is_finite() && d.is_finite() => Some(n / d),
        _ => None,
    }
}

/// Cross-study and within-study ratio tables.
///
/// `pairs` lists `(numerator, denominator)` study ids, for instance
/// `("S2", "S1")`. Priors and studies appear in first-seen order. Within a
/// study every metric is divided by its minimum over the priors present, so
/// the best prior scores exactly 1. Missing cells yield `None`, never a
/// guessed value.
pub fn ratio_tables(cells: &[SummaryCell], pairs: &[(&str, &str)]) -> RatioReport {
    let mut priors: Vec<&str> = Vec::new();
    let mut studies: Vec<&str> = Vec::new();
    for c in cells {
        if !priors.contains(&c.prior.as_str()) {
            priors.push(&c.prior);
        }
        if !studies.contains(&c.study.as_str()) {
            studies.push(&c.study);
        }
    }
    let get = |study: &str, prior: &str| cells.iter().find(|c| c.study == study && c.prior == prior);

    let mut cross = Vec::new();
    for &p in &priors {
        for &(num, den) in pairs {
            let (a, b) = (get(num, p), get(den, p));
            cross.push(CrossStudyRatio {
                prior: p.into(),
                numerator: num.into(),
                denominator: den.into(),
                m_rmse: ratio(a.map(|c| c.m_rmse), b.map(|c| c.m_rmse)),
                sd_rmse: ratio(a.map(|c| c.sd_rmse), b.map(|c| c.sd_rmse)),
            });
        }
    }

    let mut within = Vec::new();
    for &s in &studies {
        let present: Vec<&SummaryCell> = priors.iter().filter_map(|p| get(s, p)).collect();
        let best = |f: fn(&SummaryCell) -> f64| {
            present
                .iter()
                .map(|c| f(c))
                .filter(|v| v.is_finite())
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
        };
        let (best_m, best_sd) = (best(|c| c.m_rmse), best(|c| c.sd_rmse));
        for &p in &priors {
            let cell = get(s, p);
            within.push(WithinStudyRatio {
                study: s.into(),
                prior: p.into(),
                m_rmse: ratio(cell.map(|c| c.m_rmse), best_m),
                sd_rmse: ratio(cell.map(|c| c.sd_rmse), best_sd),
            });
        }
    }
    RatioReport { cross, within }
}

/// Default cross-study pairs: overfit and underfit against the correct order, and against each other.
pub const CROSS_STUDY_PAIRS: [(&str, &str); 4] = [("S2", "S1"), ("S3", "S1"), ("S3", "S2"), ("S2", "S3")];
