//! The simulation studies: simulate each replicate once, fit every
//! scenario and prior to it, score recovery and forecasts, and tabulate.

use std::sync::atomic::{AtomicUsize, Ordering};

use bdarma_core::forecast::{forecast_thetas, ForecastOptions};
use bdarma_core::metrics::{
    equal_tailed, ratio_tables, recovery_metrics, ForecastSummary, Interval, ParameterLabel, RatioReport,
    RecoverySummary, SummaryCell, CROSS_STUDY_PAIRS,
};
use bdarma_core::model::{ModelShape, ModelSpec, ParamRole, ParameterVector};
use bdarma_core::posterior::Posterior;
use bdarma_core::prior::{default_prior, PriorConfig, PriorFamily};
use bdarma_core::sampler::{sample, PosteriorDraws, SamplerConfig};
use bdarma_core::simplex::Composition;
use bdarma_core::simulator::{builtin_dgp, simulate, DgpConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Fitted lag orders relative to the true DARMA(2,1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Correct,
    Overfit,
    Underfit,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Correct, Scenario::Overfit, Scenario::Underfit];

    /// `(P, Q)` of the fitted model.
    pub fn orders(self) -> (usize, usize) {
        match self {
            Scenario::Correct => (2, 1),
            Scenario::Overfit => (4, 2),
            Scenario::Underfit => (1, 0),
        }
    }

    /// Prior-default key.
    pub fn study_id(self) -> &'static str {
        match self {
            Scenario::Correct => "sim-correct",
            Scenario::Overfit => "sim-overfit",
            Scenario::Underfit => "sim-underfit",
        }
    }

    /// Column label in the ratio tables.
    pub fn label(self) -> &'static str {
        match self {
            Scenario::Correct => "S1",
            Scenario::Overfit => "S2",
            Scenario::Underfit => "S3",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Correct => "correct",
            Scenario::Overfit => "overfit",
            Scenario::Underfit => "underfit",
        }
    }
}

/// A prior named by family (study defaults) or spelled out in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorChoice {
    Family(PriorFamily),
    Custom(PriorConfig),
}

impl PriorChoice {
    pub fn family(&self) -> PriorFamily {
        match self {
            PriorChoice::Family(f) => *f,
            PriorChoice::Custom(c) => c.family(),
        }
    }

    pub fn resolve(&self, study: &str) -> Result<PriorConfig> {
        match self {
            PriorChoice::Family(f) => Ok(default_prior(study, *f)?),
            PriorChoice::Custom(c) => Ok(c.clone()),
        }
    }

    pub fn all() -> Vec<PriorChoice> {
        PriorFamily::ALL.iter().map(|f| PriorChoice::Family(*f)).collect()
    }
}

/// Preset scale of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 10 replicates, 2 chains of 300 + 300 iterations.
    Desk,
    /// 50 replicates, 4 chains of 500 + 750 iterations.
    Paper,
}

impl Profile {
    pub fn sampler(self) -> SamplerConfig {
        match self {
            Profile::Desk => SamplerConfig::desk(),
            Profile::Paper => SamplerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// `main` or `supplementary`.
    pub dgp: String,
    pub scenarios: Vec<Scenario>,
    pub priors: Vec<PriorChoice>,
    pub replicates: usize,
    #[serde(rename = "T")]
    pub len: usize,
    pub train_len: usize,
    pub horizon: usize,
    pub sampler: SamplerConfig,
    pub seed: u64,
    /// Largest tolerated share of failed fits before the study aborts.
    pub max_failure_rate: f64,
    /// Keep every n-th draw for the forecasts.
    pub forecast_thin: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig::profile(Profile::Desk)
    }
}

impl StudyConfig {
    pub fn profile(profile: Profile) -> Self {
        StudyConfig {
            dgp: "main".into(),
            scenarios: Scenario::ALL.to_vec(),
            priors: PriorChoice::all(),
            replicates: match profile {
                Profile::Desk => 10,
                Profile::Paper => 50,
            },
            len: 100,
            train_len: 80,
            horizon: 20,
            sampler: profile.sampler(),
            seed: 20250101,
            max_failure_rate: 0.2,
            forecast_thin: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        builtin_dgp(&self.dgp)?;
        if self.scenarios.is_empty() || self.priors.is_empty() || self.replicates == 0 {
            return Err(Error::invalid("a study needs scenarios, priors and at least one replicate"));
        }
        if self.train_len + self.horizon != self.len {
            return Err(Error::invalid(format!(
                "train_len ({}) + horizon ({}) must equal T ({})",
                self.train_len, self.horizon, self.len
            )));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return Err(Error::invalid("max_failure_rate must lie in [0, 1]"));
        }
        for s in &self.scenarios {
            let (p, q) = s.orders();
            if self.train_len <= p.max(q) + 1 {
                return Err(Error::invalid("training window too short for the fitted lags"));
            }
            for prior in &self.priors {
                prior.resolve(s.study_id())?;
            }
        }
        Ok(())
    }
}

/// SplitMix64 finalizer over a sequence of words, for deriving independent
/// seeds from the master seed.
pub fn derive_seed(master: u64, words: &[u64]) -> u64 {
    let mut h = master;
    for w in words {
        h ^= w.wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

/// SHA-256 of the bit patterns of a series, as hex.
pub fn series_hash(series: &[Composition]) -> String {
    let mut hasher = Sha256::new();
    for y in series {
        for v in y.as_slice() {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// True coefficient for each parameter of a fitted model; lags the process
/// does not have are zero.
pub fn fitted_truth(fitted: &ModelSpec, truth_spec: &ModelSpec, truth: &ParameterVector) -> Vec<f64> {
    (0..fitted.count_parameters())
        .map(|i| match fitted.role(i) {
            ParamRole::Ar { lag, row, col } if lag <= truth_spec.p => truth.ar_entry(truth_spec, lag, row, col),
            ParamRole::Ma { lag, row, col } if lag <= truth_spec.q => truth.ma_entry(truth_spec, lag, row, col),
            ParamRole::Ar { .. } | ParamRole::Ma { .. } => 0.0,
            ParamRole::Beta { index } => truth.beta[index],
            ParamRole::Gamma { index } => truth.gamma[index],
        })
        .collect()
}

/// Parameter names and table blocks of a model.
pub fn parameter_labels(spec: &ModelSpec) -> Vec<ParameterLabel> {
    (0..spec.count_parameters())
        .map(|i| {
            let role = spec.role(i);
            ParameterLabel {
                name: role.name(),
                block: role.block(),
            }
        })
        .collect()
}

/// Outcome of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub replicate: usize,
    pub scenario: Scenario,
    pub prior: PriorFamily,
    pub data_hash: String,
    pub estimates: Vec<f64>,
    pub intervals: Vec<Interval>,
    /// Posterior-mean forecast, `horizon x J` row-major.
    pub forecast: Vec<f64>,
    #[serde(with = "bdarma_core::metrics::nan_as_null")]
    pub rmse: f64,
    #[serde(with = "bdarma_core::metrics::nan_as_null")]
    pub mae: f64,
    #[serde(with = "bdarma_core::metrics::nan_as_null")]
    pub max_rhat: f64,
    pub divergences: usize,
    pub divergence_flagged: bool,
    pub skipped_forecast_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub replicate: usize,
    pub scenario: Scenario,
    pub prior: PriorFamily,
    pub error: String,
}

/// Metrics of one scenario and prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub scenario: Scenario,
    pub prior: PriorFamily,
    pub fits: usize,
    pub failed: usize,
    pub divergence_flagged: usize,
    #[serde(with = "bdarma_core::metrics::nan_as_null")]
    pub max_rhat: f64,
    pub recovery: Option<RecoverySummary>,
    pub forecast: Option<ForecastSummary>,
    /// Square root of the mean squared error pooled over replicates, steps and components.
    pub pooled_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub data_hashes: Vec<String>,
    pub cells: Vec<CellReport>,
    pub ratios: RatioReport,
    pub failures: Vec<FailureRecord>,
    pub fits: Vec<FitRecord>,
}

impl StudyReport {
    pub fn cell(&self, scenario: Scenario, prior: PriorFamily) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.scenario == scenario && c.prior == prior)
    }

    pub fn failure_rate(&self) -> f64 {
        let total = self.fits.len() + self.failures.len();
        if total == 0 {
            0.0
        } else {
            self.failures.len() as f64 / total as f64
        }
    }
}

/// Progress notice for a finished fit.
#[derive(Debug, Clone)]
pub struct TaskEvent<'a> {
    pub done: usize,
    pub total: usize,
    pub replicate: usize,
    pub scenario: Scenario,
    pub prior: PriorFamily,
    pub outcome: std::result::Result<&'a FitRecord, &'a str>,
}

struct Replicate {
    train: Vec<Composition>,
    test: Vec<Composition>,
    hash: String,
}

fn point_estimates(draws: &PosteriorDraws, count: usize) -> (Vec<f64>, Vec<Interval>) {
    let mean = draws.posterior_mean();
    let intervals = (0..count).map(|i| equal_tailed(&draws.column(i), 0.95)).collect();
    (mean[..count].to_vec(), intervals)
}

/// Fits one model to one training window and scores its forecast.
fn fit_one(
    cfg: &StudyConfig,
    dgp: &DgpConfig,
    data: &Replicate,
    replicate: usize,
    scenario: Scenario,
    prior_index: usize,
) -> Result<FitRecord> {
    let choice = &cfg.priors[prior_index];
    let (p, q) = scenario.orders();
    let shape = ModelShape::new(p, q, dgp.spec().j, dgp.shape.design.clone())?;
    let hash = series_hash(&[data.train.as_slice(), data.test.as_slice()].concat());
    if hash != data.hash {
        return Err(Error::failed(format!("replicate {replicate}: data hash mismatch")));
    }
    let prior = choice.resolve(scenario.study_id())?;
    let post = Posterior::new(shape.spec, shape.design.clone(), &data.train, &prior)?;
    let scenario_index = Scenario::ALL.iter().position(|s| *s == scenario).unwrap_or(0) as u64;
    let sampler = SamplerConfig {
        seed: derive_seed(cfg.seed, &[2, replicate as u64, scenario_index, prior_index as u64]),
        ..cfg.sampler.clone()
    };
    let draws = sample(&post, &sampler, None)?;
    let c = shape.spec.count_parameters();
    let (estimates, intervals) = point_estimates(&draws, c);
    let thetas: Vec<&[f64]> = draws.iter().collect();
    let opts = ForecastOptions {
        horizon: cfg.horizon,
        thin: cfg.forecast_thin,
        quantiles: false,
        seed: derive_seed(cfg.seed, &[3, replicate as u64, scenario_index, prior_index as u64]),
        ..ForecastOptions::default()
    };
    let fc = forecast_thetas(&shape.spec, &shape.design, &thetas, &data.train, &opts)?;
    let forecast: Vec<f64> = fc.point.iter().flatten().copied().collect();
    let actual: Vec<f64> = data.test.iter().flat_map(|y| y.as_slice().to_vec()).collect();
    Ok(FitRecord {
        replicate,
        scenario,
        prior: choice.family(),
        data_hash: hash,
        estimates,
        intervals,
        rmse: bdarma_core::metrics::rmse(&actual, &forecast)?,
        mae: bdarma_core::metrics::mae(&actual, &forecast)?,
        forecast,
        max_rhat: draws.max_rhat(),
        divergences: draws.total_divergences(),
        divergence_flagged: draws.divergence_flagged(),
        skipped_forecast_draws: fc.skipped_draws,
    })
}

/// Runs the study on the global rayon pool.
///
/// Replicates are simulated up front; each (replicate, scenario, prior)
/// fit is an independent task seeded from the master seed, so the report
/// does not depend on scheduling. Once failures exceed
/// `max_failure_rate` of all planned fits, remaining tasks are skipped and
/// an error is returned alongside the partial report.
pub fn run_study(
    cfg: &StudyConfig,
    progress: Option<&(dyn Fn(TaskEvent<'_>) + Sync)>,
) -> std::result::Result<StudyReport, (Error, Option<Box<StudyReport>>)> {
    cfg.validate().map_err(|e| (e, None))?;
    let base = builtin_dgp(&cfg.dgp).map_err(|e| (e.into(), None))?.with_len(cfg.len);
    let replicates: Vec<Replicate> = (0..cfg.replicates)
        .map(|r| {
            let series = simulate(&base.clone().with_seed(derive_seed(cfg.seed, &[1, r as u64])))?;
            let (train, test) = series.split_at(cfg.train_len);
            Ok(Replicate {
                hash: series_hash(&series),
                train: train.to_vec(),
                test: test.to_vec(),
            })
        })
        .collect::<Result<_>>()
        .map_err(|e| (e, None))?;

    let tasks: Vec<(usize, Scenario, usize)> = (0..cfg.replicates)
        .flat_map(|r| {
            cfg.scenarios
                .iter()
                .flat_map(move |s| (0..cfg.priors.len()).map(move |p| (r, *s, p)))
        })
        .collect();
    let total = tasks.len();
    let allowed_failures = (cfg.max_failure_rate * total as f64).floor() as usize;
    let failures_so_far = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);

    let results: Vec<Option<std::result::Result<FitRecord, String>>> = tasks
        .par_iter()
        .map(|&(r, s, p)| {
            if failures_so_far.load(Ordering::SeqCst) > allowed_failures {
                return None;
            }
            let res = fit_one(cfg, &base, &replicates[r], r, s, p).map_err(|e| e.to_string());
            if res.is_err() {
                failures_so_far.fetch_add(1, Ordering::SeqCst);
            }
            let n = done.fetch_add(1, Ordering::SeqCst) + 1;
            if let Some(cb) = progress {
                cb(TaskEvent {
                    done: n,
                    total,
                    replicate: r,
                    scenario: s,
                    prior: cfg.priors[p].family(),
                    outcome: res.as_ref().map_err(String::as_str),
                });
            }
            Some(res)
        })
        .collect();

    let mut fits = Vec::new();
    let mut failures = Vec::new();
    let mut skipped = 0;
    for (&(r, s, p), res) in tasks.iter().zip(results) {
        match res {
            Some(Ok(fit)) => fits.push(fit),
            Some(Err(error)) => failures.push(FailureRecord {
                replicate: r,
                scenario: s,
                prior: cfg.priors[p].family(),
                error,
            }),
            None => skipped += 1,
        }
    }
    let report = assemble(cfg, &base, replicates.iter().map(|r| r.hash.clone()).collect(), fits, failures)
        .map_err(|e| (e, None))?;
    if report.failures.len() > allowed_failures {
        let err = Error::failed(format!(
            "{} of {total} fits failed (limit {allowed_failures}); {skipped} fits were not attempted",
            report.failures.len()
        ));
        return Err((err, Some(Box::new(report))));
    }
    Ok(report)
}

/// Builds the per-cell metrics and ratio tables from finished fits.
pub fn assemble(
    cfg: &StudyConfig,
    dgp: &DgpConfig,
    data_hashes: Vec<String>,
    fits: Vec<FitRecord>,
    failures: Vec<FailureRecord>,
) -> Result<StudyReport> {
    let mut cells = Vec::new();
    for &scenario in &cfg.scenarios {
        let (p, q) = scenario.orders();
        let shape = ModelShape::new(p, q, dgp.spec().j, dgp.shape.design.clone())?;
        let truth = fitted_truth(&shape.spec, dgp.spec(), &dgp.params);
        let labels = parameter_labels(&shape.spec);
        for choice in &cfg.priors {
            let prior = choice.family();
            let mine: Vec<&FitRecord> = fits
                .iter()
                .filter(|f| f.scenario == scenario && f.prior == prior)
                .collect();
            let failed = failures
                .iter()
                .filter(|f| f.scenario == scenario && f.prior == prior)
                .count();
            let (recovery, forecast, pooled_rmse) = if mine.is_empty() {
                (None, None, None)
            } else {
                let est: Vec<Vec<f64>> = mine.iter().map(|f| f.estimates.clone()).collect();
                let iv: Vec<Vec<Interval>> = mine.iter().map(|f| f.intervals.clone()).collect();
                let rmses: Vec<f64> = mine.iter().map(|f| f.rmse).collect();
                let maes: Vec<f64> = mine.iter().map(|f| f.mae).collect();
                let actual: Vec<Vec<f64>> = mine
                    .iter()
                    .map(|f| actual_for(dgp, cfg, f.replicate))
                    .collect::<Result<_>>()?;
                let fc: Vec<&[f64]> = mine.iter().map(|f| f.forecast.as_slice()).collect();
                (
                    Some(recovery_metrics(&labels, &truth, &est, &iv)?),
                    Some(ForecastSummary::from_errors(&rmses, &maes)?),
                    Some(bdarma_core::metrics::forecast_rmse(&actual, &fc)?),
                )
            };
            cells.push(CellReport {
                scenario,
                prior,
                fits: mine.len(),
                failed,
                divergence_flagged: mine.iter().filter(|f| f.divergence_flagged).count(),
                max_rhat: mine.iter().map(|f| f.max_rhat).fold(f64::NAN, f64::max),
                recovery,
                forecast,
                pooled_rmse,
            });
        }
    }
    let summary_cells: Vec<SummaryCell> = cells
        .iter()
        .filter_map(|c| {
            c.forecast.map(|f| SummaryCell {
                study: c.scenario.label().into(),
                prior: c.prior.label().into(),
                m_rmse: f.m_rmse,
                sd_rmse: f.sd_rmse,
            })
        })
        .collect();
    let ratios = ratio_tables(&summary_cells, &CROSS_STUDY_PAIRS);
    Ok(StudyReport {
        config: cfg.clone(),
        data_hashes,
        cells,
        ratios,
        failures,
        fits,
    })
}

/// Test-window compositions of replicate `r`, flattened.
fn actual_for(dgp: &DgpConfig, cfg: &StudyConfig, r: usize) -> Result<Vec<f64>> {
    let series = simulate(&dgp.clone().with_seed(derive_seed(cfg.seed, &[1, r as u64])))?;
    Ok(series[cfg.train_len..]
        .iter()
        .flat_map(|y| y.as_slice().to_vec())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_orders() {
        assert_eq!(Scenario::Correct.orders(), (2, 1));
        assert_eq!(Scenario::Overfit.orders(), (4, 2));
        assert_eq!(Scenario::Underfit.orders(), (1, 0));
    }

    #[test]
    fn truth_pads_extra_lags_with_zeros() {
        let dgp = builtin_dgp("main").unwrap();
        let over = ModelShape::new(4, 2, 6, dgp.shape.design.clone()).unwrap().spec;
        let truth = fitted_truth(&over, dgp.spec(), &dgp.params);
        assert_eq!(truth.len(), over.count_parameters());
        assert_eq!(truth[0], 0.8);
        assert!(truth[over.ar_offset(3)..over.ma_offset(1)].iter().all(|v| *v == 0.0));
        assert_eq!(truth[over.ma_offset(1)], 0.5);
        assert!(truth[over.ma_offset(2)..over.beta_offset()].iter().all(|v| *v == 0.0));
        let under = ModelShape::new(1, 0, 6, dgp.shape.design.clone()).unwrap().spec;
        let labels = parameter_labels(&under);
        assert!(labels.iter().all(|l| l.block != "A2" && l.block != "B1"));
    }

    #[test]
    fn seeds_differ_by_path() {
        assert_ne!(derive_seed(1, &[1, 0]), derive_seed(1, &[1, 1]));
        assert_ne!(derive_seed(1, &[1, 0]), derive_seed(2, &[1, 0]));
        assert_eq!(derive_seed(7, &[2, 3]), derive_seed(7, &[2, 3]));
    }

    #[test]
    fn config_validation() {
        let mut cfg = StudyConfig::profile(Profile::Desk);
        assert!(cfg.validate().is_ok());
        cfg.train_len = 70;
        assert!(cfg.validate().is_err());
        let mut cfg = StudyConfig::profile(Profile::Paper);
        assert_eq!(cfg.replicates, 50);
        cfg.dgp = "other".into();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn prior_choice_json() {
        let v: Vec<PriorChoice> = serde_json::from_str(r#"["horseshoe", {"family": "laplace", "ar_scale": 0.5, "ma_scale": 0.5, "beta_scale": 0.1}]"#).unwrap();
        assert_eq!(v[0], PriorChoice::Family(PriorFamily::Horseshoe));
        assert_eq!(v[1].family(), PriorFamily::Laplace);
    }

    #[test]
    fn smoke_run_is_reproducible() {
        let cfg = StudyConfig {
            replicates: 1,
            priors: vec![PriorChoice::Family(PriorFamily::Informative)],
            scenarios: vec![Scenario::Underfit],
            sampler: SamplerConfig {
                chains: 2,
                warmup: 60,
                sampling: 40,
                ..SamplerConfig::default()
            },
            ..StudyConfig::default()
        };
        let a = run_study(&cfg, None).map_err(|(e, _)| e).unwrap();
        let b = run_study(&cfg, None).map_err(|(e, _)| e).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let cell = a.cell(Scenario::Underfit, PriorFamily::Informative).unwrap();
        assert_eq!(cell.fits, 1);
        assert!(cell.forecast.unwrap().m_rmse.is_finite());
        assert!(cell.recovery.as_ref().unwrap().block("A1").is_some());
    }
}
