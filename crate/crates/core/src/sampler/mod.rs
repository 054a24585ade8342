//! Multinomial tree-doubling HMC with warmup adaptation, multi-chain runs
//! and convergence diagnostics.

mod adapt;
pub mod diagnostics;
mod nuts;

pub use adapt::{MetricAdaptation, StepSizeAdaptation};
pub use nuts::{hamiltonian, leapfrog, Nuts, PhasePoint, TransitionStats, MAX_ENERGY_ERROR};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::abs;

/// A differentiable log density on unconstrained reals.
pub trait LogDensity {
    fn dim(&self) -> usize;

    /// Log density at `x` (up to a constant) with its gradient in `grad`.
    fn log_density_grad(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64>;

    /// Width of the recorded draw; defaults to the sampling dimension.
    fn output_dim(&self) -> usize {
        self.dim()
    }

    /// Maps an unconstrained point to the recorded draw.
    fn write_output(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    fn output_names(&self) -> Vec<String> {
        (0..self.output_dim()).map(|i| format!("x[{}]", i + 1)).collect()
    }
}

/// Largest coordinate-wise discrepancy between the analytic gradient of
/// `target` at `x` and a central difference with step `h * max(1, |x_i|)`,
/// measured as `|a - b| / max(1, |a|, |b|)`.
pub fn gradient_check<T: LogDensity + ?Sized>(target: &mut T, x: &[f64], h: f64) -> Result<f64> {
    let n = target.dim();
    let mut grad = vec![0.0; n];
    target.log_density_grad(x, &mut grad)?;
    let mut scratch = vec![0.0; n];
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let step = h * abs(x[i]).max(1.0);
        probe[i] = x[i] + step;
        let up = target.log_density_grad(&probe, &mut scratch)?;
        probe[i] = x[i] - step;
        let down = target.log_density_grad(&probe, &mut scratch)?;
        probe[i] = x[i];
        let fd = (up - down) / (2.0 * step);
        let err = abs(grad[i] - fd) / abs(grad[i]).max(abs(fd)).max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Chain counts, warmup schedule and tuning targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub sampling: usize,
    #[serde(alias = "target-accept")]
    pub target_accept: f64,
    #[serde(alias = "max-treedepth")]
    pub max_treedepth: usize,
    #[serde(alias = "init-range")]
    pub init_range: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            warmup: 500,
            sampling: 750,
            target_accept: 0.85,
            max_treedepth: 11,
            init_range: 0.25,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    /// Reduced schedule for single-machine runs.
    pub fn desk() -> Self {
        SamplerConfig {
            chains: 2,
            warmup: 300,
            sampling: 300,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.sampling == 0 {
            return Err(Error::Config("chains and sampling must be positive".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!(
                "target acceptance must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if self.max_treedepth == 0 {
            return Err(Error::Config("max tree depth must be positive".into()));
        }
        if !(self.init_range >= 0.0 && self.init_range.is_finite()) {
            return Err(Error::Config("init range must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Line-oriented progress notification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProgressEvent {
    pub chain: usize,
    /// 1-based iteration counting warmup then sampling.
    pub iteration: usize,
    pub total: usize,
    pub warmup: bool,
}

pub type Progress<'a> = &'a (dyn Fn(ProgressEvent) + Sync);

/// Outcome of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    /// `sampling x output_dim`, row-major.
    pub draws: Vec<f64>,
    pub stats: Vec<TransitionStats>,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub warmup_divergences: usize,
    pub init_attempts: usize,
}

/// Summary statistics of one chain's sampling phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub divergence_rate: f64,
    /// Divergence rate above 20% of sampling iterations.
    pub flagged: bool,
    pub step_size: f64,
    pub mean_accept_stat: f64,
    pub mean_tree_depth: f64,
    pub max_treedepth_hits: usize,
    pub leapfrog_steps: usize,
}

/// Posterior draws from every chain plus per-parameter diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub chains: usize,
    pub sampling: usize,
    /// `chains x sampling x dim`, row-major.
    pub draws: Vec<f64>,
    pub chain_summaries: Vec<ChainSummary>,
    pub inv_metrics: Vec<Vec<f64>>,
    /// Per-parameter split R-hat; `None` with a single chain.
    pub rhat: Option<Vec<f64>>,
    pub ess_bulk: Vec<f64>,
    pub ess_tail: Vec<f64>,
}

impl PosteriorDraws {
    /// Assembles chain runs and computes diagnostics.
    pub fn from_runs(names: Vec<String>, runs: Vec<ChainRun>, max_treedepth: usize) -> Self {
        let chains = runs.len();
        let dim = names.len();
        let sampling = runs.first().map_or(0, |r| r.draws.len() / dim.max(1));
        let mut draws = Vec::with_capacity(chains * sampling * dim);
        let mut chain_summaries = Vec::with_capacity(chains);
        let mut inv_metrics = Vec::with_capacity(chains);
        for r in runs {
            draws.extend_from_slice(&r.draws);
            chain_summaries.push(summarize(&r, max_treedepth));
            inv_metrics.push(r.inv_metric);
        }
        let mut out = PosteriorDraws {
            names,
            chains,
            sampling,
            draws,
            chain_summaries,
            inv_metrics,
            rhat: None,
            ess_bulk: Vec::new(),
            ess_tail: Vec::new(),
        };
        let mut rhat = Vec::with_capacity(dim);
        for i in 0..dim {
            let chains = out.chain_values(i);
            let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
            out.ess_bulk.push(diagnostics::ess_bulk(&refs));
            out.ess_tail.push(diagnostics::ess_tail(&refs));
            if let Ok(r) = diagnostics::split_rhat(&refs) {
                rhat.push(r);
            }
        }
        if rhat.len() == dim {
            out.rhat = Some(rhat);
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.chains * self.sampling
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Draw `iter` of chain `chain`.
    pub fn draw(&self, chain: usize, iter: usize) -> &[f64] {
        let d = self.dim();
        &self.draws[(chain * self.sampling + iter) * d..][..d]
    }

    /// All draws in chain-major order.
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.draws.chunks_exact(self.dim().max(1))
    }

    /// Values of parameter `param`, one vector per chain.
    pub fn chain_values(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.chains)
            .map(|c| (0..self.sampling).map(|i| self.draw(c, i)[param]).collect())
            .collect()
    }

    /// Pooled values of parameter `param`.
    pub fn column(&self, param: usize) -> Vec<f64> {
        self.iter().map(|d| d[param]).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for d in self.iter() {
            for (a, v) in m.iter_mut().zip(d) {
                *a += v;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    pub fn total_divergences(&self) -> usize {
        self.chain_summaries.iter().map(|c| c.divergences).sum()
    }

    pub fn divergence_flagged(&self) -> bool {
        self.chain_summaries.iter().any(|c| c.flagged)
    }

    /// Largest R-hat over parameters (NaN with a single chain).
    pub fn max_rhat(&self) -> f64 {
        self.rhat
            .as_ref()
            .map_or(f64::NAN, |r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }
}

fn summarize(run: &ChainRun, max_treedepth: usize) -> ChainSummary {
    let n = run.stats.len().max(1) as f64;
    let divergences = run.stats.iter().filter(|s| s.divergent).count();
    let rate = divergences as f64 / n;
    ChainSummary {
        divergences,
        warmup_divergences: run.warmup_divergences,
        divergence_rate: rate,
        flagged: rate > 0.2,
        step_size: run.step_size,
        mean_accept_stat: run.stats.iter().map(|s| s.accept_stat).sum::<f64>() / n,
        mean_tree_depth: run.stats.iter().map(|s| s.tree_depth as f64).sum::<f64>() / n,
        max_treedepth_hits: run
            .stats
            .iter()
            .filter(|s| s.tree_depth >= max_treedepth)
            .count(),
        leapfrog_steps: run.stats.iter().map(|s| s.n_leapfrog).sum(),
    }
}

/// R-hat and effective sample sizes of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub rhat: f64,
    pub ess_bulk: f64,
    pub ess_tail: f64,
}

/// Per-parameter split R-hat and rank-normalized ESS.
pub fn diagnose(draws: &PosteriorDraws) -> Result<Vec<ParamDiagnostics>> {
    if draws.chains < 2 {
        return Err(Error::RhatUnavailable(format!(
            "need at least 2 chains, got {}",
            draws.chains
        )));
    }
    (0..draws.dim())
        .map(|i| {
            let chains = draws.chain_values(i);
            let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
            Ok(ParamDiagnostics {
                rhat: diagnostics::split_rhat(&refs)?,
                ess_bulk: diagnostics::ess_bulk(&refs),
                ess_tail: diagnostics::ess_tail(&refs),
            })
        })
        .collect()
}

const MAX_INIT_ATTEMPTS: usize = 100;
const PROGRESS_EVERY: usize = 100;

/// Runs chain `chain` of `cfg` on `target`.
pub fn run_chain<T: LogDensity + ?Sized>(
    target: &mut T,
    cfg: &SamplerConfig,
    chain: usize,
    progress: Option<Progress<'_>>,
) -> Result<ChainRun> {
    cfg.validate()?;
    let dim = target.dim();
    let out_dim = target.output_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(chain as u64));

    let mut start = None;
    let mut attempts = 0;
    while attempts < MAX_INIT_ATTEMPTS {
        attempts += 1;
        let q: Vec<f64> = (0..dim)
            .map(|_| cfg.init_range * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        let z = PhasePoint::at(target, q);
        if z.is_finite() {
            start = Some(z);
            break;
        }
    }
    let start = start.ok_or(Error::InitializationFailed { chain, attempts })?;

    let mut nuts = Nuts::new(target, &mut rng, start, cfg.max_treedepth);
    nuts.init_step_size()?;
    let mut step_adapt = StepSizeAdaptation::new(cfg.target_accept);
    step_adapt.set_mu(nuts.step_size);
    let mut metric_adapt = MetricAdaptation::new(dim, cfg.warmup);

    let total = cfg.warmup + cfg.sampling;
    let report = |iteration: usize| {
        if let Some(cb) = progress {
            if iteration % PROGRESS_EVERY == 0 || iteration == total {
                cb(ProgressEvent {
                    chain,
                    iteration,
                    total,
                    warmup: iteration <= cfg.warmup,
                });
            }
        }
    };

    let mut warmup_divergences = 0;
    for i in 0..cfg.warmup {
        let stats = nuts.transition();
        warmup_divergences += stats.divergent as usize;
        nuts.step_size = step_adapt.learn(stats.accept_stat);
        let mut inv_metric = core::mem::take(&mut nuts.inv_metric);
        let updated = metric_adapt.learn(&mut inv_metric, nuts.position());
        nuts.inv_metric = inv_metric;
        if updated {
            nuts.init_step_size()?;
            step_adapt.set_mu(nuts.step_size);
            step_adapt.restart();
        }
        report(i + 1);
    }
    if cfg.warmup > 0 {
        nuts.step_size = step_adapt.final_step_size();
    }

    let mut draws = vec![0.0; cfg.sampling * out_dim];
    let mut stats = Vec::with_capacity(cfg.sampling);
    for i in 0..cfg.sampling {
        stats.push(nuts.transition());
        let q = nuts.state().q.clone();
        nuts.target
            .write_output(&q, &mut draws[i * out_dim..(i + 1) * out_dim]);
        report(cfg.warmup + i + 1);
    }
    Ok(ChainRun {
        draws,
        stats,
        step_size: nuts.step_size,
        inv_metric: nuts.inv_metric.clone(),
        warmup_divergences,
        init_attempts: attempts,
    })
}

/// Runs all chains (in parallel with the `parallel` feature) and assembles
/// the draws. Each chain works on its own clone of `target`.
pub fn sample<T>(target: &T, cfg: &SamplerConfig, progress: Option<Progress<'_>>) -> Result<PosteriorDraws>
where
    T: LogDensity + Clone + Send + Sync,
{
    cfg.validate()?;
    let run = |c: usize| run_chain(&mut target.clone(), cfg, c, progress);
    #[cfg(feature = "parallel")]
    let runs: Vec<Result<ChainRun>> = {
        use rayon::prelude::*;
        (0..cfg.chains).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<Result<ChainRun>> = (0..cfg.chains).map(run).collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(PosteriorDraws::from_runs(
        target.output_names(),
        runs,
        cfg.max_treedepth,
    ))
}
