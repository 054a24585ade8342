//! Joint predictive distribution by recursive simulation from posterior draws.
//!
//! Each retained draw rolls the recursion forward from the end of the
//! history. Sampled future compositions feed both the AR and the MA terms,
//! and the linear predictor of every future step is kept, so the MA
//! innovation of a future step is its realized Dirichlet noise.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::metrics::quantile_sorted;
use crate::model::{linear_predictor, precision_at, predictor_path, Design, ModelSpec};
use crate::sampler::PosteriorDraws;
use crate::simplex::{alr_into, alr_inv_into, clamp_and_renormalize, dirichlet_sample_into, Composition, ALR_INV_FLOOR};

/// Forecast settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastOptions {
    pub horizon: usize,
    /// Keep every `thin`-th draw.
    pub thin: usize,
    /// Use the mean composition instead of a Dirichlet draw at every step
    /// (the infinite-precision limit).
    pub noise_free: bool,
    pub quantiles: bool,
    pub seed: u64,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        ForecastOptions {
            horizon: 1,
            thin: 1,
            noise_free: false,
            quantiles: true,
            seed: 0,
        }
    }
}

impl ForecastOptions {
    pub fn new(horizon: usize) -> Self {
        ForecastOptions {
            horizon,
            ..Self::default()
        }
    }
}

/// Predictive trajectories and their summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub horizon: usize,
    pub components: usize,
    /// `used_draws x horizon x J`, row-major.
    pub trajectories: Vec<f64>,
    /// Renormalized across-draw mean, `horizon` rows of `J`.
    pub point: Vec<Vec<f64>>,
    pub q05: Option<Vec<Vec<f64>>>,
    pub q50: Option<Vec<Vec<f64>>>,
    pub q95: Option<Vec<Vec<f64>>>,
    pub used_draws: usize,
    /// Draws dropped because they were non-finite or their rollout failed.
    pub skipped_draws: usize,
}

impl ForecastResult {
    pub fn trajectory(&self, draw: usize) -> &[f64] {
        let w = self.horizon * self.components;
        &self.trajectories[draw * w..(draw + 1) * w]
    }

    /// Point forecasts as compositions.
    pub fn point_compositions(&self) -> Result<Vec<Composition>> {
        self.point.iter().map(|r| Composition::new(r.clone())).collect()
    }
}

/// Mixes the bits of `theta` with `seed` so a draw's noise does not depend on
/// its position in the draw list.
fn draw_seed(theta: &[f64], seed: u64) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in theta {
        h ^= v.to_bits();
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 31;
    }
    h
}

/// One trajectory (`horizon x J`) for parameter vector `theta`.
pub fn rollout<D: Design + ?Sized>(
    spec: &ModelSpec,
    design: &D,
    theta: &[f64],
    history: &[Composition],
    opts: &ForecastOptions,
) -> Result<Vec<f64>> {
    shape("flat parameter vector", spec.count_parameters(), theta.len())?;
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite parameter draw".into()));
    }
    let (j, k, len) = (spec.j, spec.k(), history.len());
    let mut alr_hist: Vec<Vec<f64>> = history
        .iter()
        .map(|y| {
            let mut a = vec![0.0; k];
            alr_into(y.as_slice(), &mut a);
            a
        })
        .collect();
    let mut eta_hist = if spec.q > 0 {
        predictor_path(spec, theta, design, &alr_hist)?
    } else {
        Vec::new()
    };
    let gamma = &theta[spec.gamma_offset()..];
    let mut rng = ChaCha8Rng::seed_from_u64(draw_seed(theta, opts.seed));
    let mut out = Vec::with_capacity(opts.horizon * j);
    let mut mu = vec![0.0; j];
    let mut alpha = vec![0.0; j];
    let mut y = Vec::with_capacity(j);
    for h in 0..opts.horizon {
        let t = len + h;
        let eta = linear_predictor(spec, theta, design, &alr_hist, &eta_hist, t)?;
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::SimulationDiverged { t });
        }
        alr_inv_into(&eta, &mut mu);
        if opts.noise_free {
            y.clear();
            y.extend_from_slice(&mu);
        } else {
            let phi = precision_at(gamma, design, t)?;
            for (a, m) in alpha.iter_mut().zip(&mu) {
                *a = phi * m;
            }
            if alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                return Err(Error::SimulationDiverged { t });
            }
            dirichlet_sample_into(&alpha, &mut rng, &mut y);
        }
        let mut a = vec![0.0; k];
        alr_into(&y, &mut a);
        out.extend_from_slice(&y);
        alr_hist.push(a);
        if spec.q > 0 {
            eta_hist.push(eta);
        }
    }
    Ok(out)
}

/// Forecasts from raw parameter vectors (model parameters first; extra
/// trailing entries such as latent scales are ignored).
pub fn forecast_thetas<D, T>(
    spec: &ModelSpec,
    design: &D,
    thetas: &[T],
    history: &[Composition],
    opts: &ForecastOptions,
) -> Result<ForecastResult>
where
    D: Design + Sync + ?Sized,
    T: AsRef<[f64]> + Sync,
{
    if opts.horizon == 0 {
        return Err(Error::Config("forecast horizon must be at least 1".into()));
    }
    if history.len() <= spec.m() {
        return Err(Error::InsufficientData {
            needed: spec.m() + 1,
            available: history.len(),
        });
    }
    let c = spec.count_parameters();
    let thin = opts.thin.max(1);
    let kept: Vec<&[f64]> = thetas.iter().step_by(thin).map(|t| t.as_ref()).collect();
    if let Some(bad) = kept.iter().find(|t| t.len() < c) {
        shape("parameter draw", c, bad.len())?;
    }
    let run = |theta: &&[f64]| rollout(spec, design, &theta[..c], history, opts);
    #[cfg(feature = "parallel")]
    let results: Vec<Result<Vec<f64>>> = {
        use rayon::prelude::*;
        kept.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<Vec<f64>>> = kept.iter().map(run).collect();

    let (h, j) = (opts.horizon, spec.j);
    let mut trajectories = Vec::with_capacity(results.len() * h * j);
    let mut skipped = 0;
    for r in results {
        match r {
            Ok(t) => trajectories.extend_from_slice(&t),
            Err(_) => skipped += 1,
        }
    }
    let used = trajectories.len() / (h * j);
    if used == 0 {
        return Err(Error::Domain("every posterior draw failed to roll forward".into()));
    }

    let mut point = vec![vec![0.0; j]; h];
    for traj in trajectories.chunks_exact(h * j) {
        for (row, step) in point.iter_mut().zip(traj.chunks_exact(j)) {
            for (p, v) in row.iter_mut().zip(step) {
                *p += v;
            }
        }
    }
    for row in &mut point {
        clamp_and_renormalize(row, ALR_INV_FLOOR);
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= total);
    }

    let (q05, q50, q95) = if opts.quantiles {
        let mut lo = vec![vec![0.0; j]; h];
        let mut mid = vec![vec![0.0; j]; h];
        let mut hi = vec![vec![0.0; j]; h];
        let mut col = Vec::with_capacity(used);
        for step in 0..h {
            for comp in 0..j {
                col.clear();
                col.extend(
                    trajectories
                        .chunks_exact(h * j)
                        .map(|t| t[step * j + comp]),
                );
                col.sort_by(f64::total_cmp);
                lo[step][comp] = quantile_sorted(&col, 0.05);
                mid[step][comp] = quantile_sorted(&col, 0.5);
                hi[step][comp] = quantile_sorted(&col, 0.95);
            }
        }
        (Some(lo), Some(mid), Some(hi))
    } else {
        (None, None, None)
    };

    Ok(ForecastResult {
        horizon: h,
        components: j,
        trajectories,
        point,
        q05,
        q50,
        q95,
        used_draws: used,
        skipped_draws: skipped,
    })
}

/// Joint predictive distribution from posterior draws.
pub fn forecast<D: Design + Sync + ?Sized>(
    spec: &ModelSpec,
    design: &D,
    draws: &PosteriorDraws,
    history: &[Composition],
    opts: &ForecastOptions,
) -> Result<ForecastResult> {
    let thetas: Vec<&[f64]> = draws.iter().collect();
    forecast_thetas(spec, design, &thetas, history, opts)
}

/// Only the point forecast (`horizon` rows of `J`).
pub fn mean_forecast_only<D: Design + Sync + ?Sized>(
    spec: &ModelSpec,
    design: &D,
    draws: &PosteriorDraws,
    history: &[Composition],
    horizon: usize,
) -> Result<Vec<Vec<f64>>> {
    let opts = ForecastOptions {
        horizon,
        quantiles: false,
        ..ForecastOptions::default()
    };
    Ok(forecast(spec, design, draws, history, &opts)?.point)
}
