//! The sector-share application: Fourier-seasonal DARMA fits per prior and
//! their holdout forecasts.

use bdarma_core::forecast::{forecast_thetas, ForecastOptions};
use bdarma_core::ingest::split;
use bdarma_core::metrics::{mae, rmse};
use bdarma_core::model::{DesignDescriptor, FourierDesign, ModelShape};
use bdarma_core::posterior::Posterior;
use bdarma_core::prior::PriorFamily;
use bdarma_core::sampler::{sample, SamplerConfig};
use bdarma_core::simplex::{Composition, SUM_TOLERANCE};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::SyntheticPanel;
use crate::study::{derive_seed, PriorChoice, Profile};

/// Where the application reads its panel from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum PanelSource {
    Synthetic(SyntheticPanel),
    Long { path: std::path::PathBuf },
    Wide { path: std::path::PathBuf },
}

impl Default for PanelSource {
    fn default() -> Self {
        PanelSource::Synthetic(SyntheticPanel::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApplicationConfig {
    pub data: PanelSource,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    pub test_len: usize,
    pub weekly_pairs: usize,
    pub annual_pairs: usize,
    pub priors: Vec<PriorChoice>,
    pub sampler: SamplerConfig,
    pub seed: u64,
    pub forecast_thin: usize,
}

impl Default for ApplicationConfig {
    fn default() -> Self {
        ApplicationConfig::profile(Profile::Desk)
    }
}

impl ApplicationConfig {
    /// Desk runs a reduced two-lag model; the full profile runs ten lags.
    pub fn profile(profile: Profile) -> Self {
        ApplicationConfig {
            data: PanelSource::default(),
            p: match profile {
                Profile::Desk => 2,
                Profile::Paper => 10,
            },
            q: 0,
            test_len: 126,
            weekly_pairs: 2,
            annual_pairs: 5,
            priors: PriorChoice::all(),
            sampler: profile.sampler(),
            seed: 20230630,
            forecast_thin: 1,
        }
    }

    pub fn design(&self, k: usize) -> DesignDescriptor {
        DesignDescriptor::Fourier(FourierDesign {
            weekly_pairs: self.weekly_pairs,
            annual_pairs: self.annual_pairs,
            ..FourierDesign::trading_days(k)
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if self.priors.is_empty() {
            return Err(Error::invalid("no priors selected"));
        }
        if self.p + self.q == 0 {
            return Err(Error::invalid("the application model needs at least one lag"));
        }
        for prior in &self.priors {
            prior.resolve("application")?;
        }
        Ok(())
    }
}

/// Called once per prior with a one-line outcome.
pub type PriorProgress<'a> = &'a (dyn Fn(PriorFamily, &str) + Sync);

/// Holdout accuracy of one prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationRow {
    pub prior: PriorFamily,
    #[serde(with = "bdarma_core::metrics::nan_as_null")]
    pub rmse: f64,
    #[serde(with = "bdarma_core::metrics::nan_as_null")]
    pub mae: f64,
    pub sector_rmse: Vec<f64>,
    pub sector_mae: Vec<f64>,
    #[serde(with = "bdarma_core::metrics::nan_as_null")]
    pub max_divergence_rate: f64,
    pub divergence_flagged: bool,
    #[serde(with = "bdarma_core::metrics::nan_as_null")]
    pub max_rhat: f64,
    pub forecasts_on_simplex: bool,
    pub parameters: usize,
    /// Posterior-mean forecast, `test_len` rows of `J`.
    pub forecast: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationReport {
    pub config: ApplicationConfig,
    pub sectors: Vec<String>,
    pub train_len: usize,
    pub actual: Vec<Vec<f64>>,
    pub rows: Vec<ApplicationRow>,
    pub failures: Vec<(PriorFamily, String)>,
}

impl ApplicationReport {
    pub fn row(&self, prior: PriorFamily) -> Option<&ApplicationRow> {
        self.rows.iter().find(|r| r.prior == prior)
    }
}

fn on_simplex(rows: &[Vec<f64>]) -> bool {
    rows.iter().all(|r| {
        r.iter().all(|v| *v > 0.0 && v.is_finite()) && (r.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE
    })
}

/// Fits every prior to the training window and scores the holdout forecasts.
pub fn run_application(
    shares: &[Composition],
    sectors: &[String],
    cfg: &ApplicationConfig,
    progress: Option<PriorProgress<'_>>,
) -> Result<ApplicationReport> {
    cfg.validate()?;
    let j = sectors.len();
    let k = j - 1;
    let (train, test) = split(shares, cfg.test_len)?;
    let shape = ModelShape::new(cfg.p, cfg.q, j, cfg.design(k))?;
    // Each component's seasonal block needs at least as many modelled rows as it has columns.
    let needed = shape.spec.m() + shape.spec.r_gamma;
    if train.len() < needed {
        return Err(Error::Model(bdarma_core::Error::InsufficientData {
            needed: needed + cfg.test_len,
            available: shares.len(),
        }));
    }
    let actual: Vec<Vec<f64>> = test.iter().map(|y| y.as_slice().to_vec()).collect();
    let flat_actual: Vec<f64> = actual.iter().flatten().copied().collect();

    let results: Vec<(PriorFamily, Result<ApplicationRow>)> = cfg
        .priors
        .par_iter()
        .enumerate()
        .map(|(i, choice)| {
            let family = choice.family();
            let run = || -> Result<ApplicationRow> {
                let prior = choice.resolve("application")?;
                let post = Posterior::new(shape.spec, shape.design.clone(), &train, &prior)?;
                let sampler = SamplerConfig {
                    seed: derive_seed(cfg.seed, &[10, i as u64]),
                    ..cfg.sampler.clone()
                };
                let draws = sample(&post, &sampler, None)?;
                let thetas: Vec<&[f64]> = draws.iter().collect();
                let opts = ForecastOptions {
                    horizon: cfg.test_len,
                    thin: cfg.forecast_thin,
                    quantiles: false,
                    seed: derive_seed(cfg.seed, &[11, i as u64]),
                    ..ForecastOptions::default()
                };
                let fc = forecast_thetas(&shape.spec, &shape.design, &thetas, &train, &opts)?;
                let flat: Vec<f64> = fc.point.iter().flatten().copied().collect();
                let column = |rows: &[Vec<f64>], s: usize| rows.iter().map(|r| r[s]).collect::<Vec<f64>>();
                let sector_rmse = (0..j)
                    .map(|s| rmse(&column(&actual, s), &column(&fc.point, s)))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let sector_mae = (0..j)
                    .map(|s| mae(&column(&actual, s), &column(&fc.point, s)))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Ok(ApplicationRow {
                    prior: family,
                    rmse: rmse(&flat_actual, &flat)?,
                    mae: mae(&flat_actual, &flat)?,
                    sector_rmse,
                    sector_mae,
                    max_divergence_rate: draws
                        .chain_summaries
                        .iter()
                        .map(|c| c.divergence_rate)
                        .fold(0.0, f64::max),
                    divergence_flagged: draws.divergence_flagged(),
                    max_rhat: draws.max_rhat(),
                    forecasts_on_simplex: on_simplex(&fc.point),
                    parameters: shape.spec.count_parameters(),
                    forecast: fc.point,
                })
            };
            let res = run();
            if let Some(cb) = progress {
                match &res {
                    Ok(r) => cb(family, &format!("RMSE {:.4}, MAE {:.4}", r.rmse, r.mae)),
                    Err(e) => cb(family, &format!("failed: {e}")),
                }
            }
            (family, res)
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (family, res) in results {
        match res {
            Ok(r) => rows.push(r),
            Err(e) => failures.push((family, e.to_string())),
        }
    }
    Ok(ApplicationReport {
        config: cfg.clone(),
        sectors: sectors.to_vec(),
        train_len: train.len(),
        actual,
        rows,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles() {
        assert_eq!(ApplicationConfig::profile(Profile::Paper).p, 10);
        let desk = ApplicationConfig::profile(Profile::Desk);
        assert_eq!(desk.p, 2);
        let shape = ModelShape::new(10, 0, 11, desk.design(10)).unwrap();
        assert_eq!(shape.spec.count_parameters(), 1165);
    }

    #[test]
    fn simplex_check() {
        assert!(on_simplex(&[vec![0.5, 0.5]]));
        assert!(!on_simplex(&[vec![0.5, 0.6]]));
        assert!(!on_simplex(&[vec![1.0, 0.0]]));
    }

    #[test]
    fn too_short_panel_is_rejected() {
        let shares = vec![Composition::new(vec![0.5, 0.5]).unwrap(); 130];
        let cfg = ApplicationConfig::default();
        let err = run_application(&shares, &["a".into(), "b".into()], &cfg, None).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
