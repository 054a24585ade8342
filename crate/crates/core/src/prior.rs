//! The five coefficient prior families and the Normal priors on the
//! precision coefficients.
//!
//! Latent scales are carried on an unconstrained scale: `log` for the
//! half-Cauchy scales (horseshoe `tau`, `lambda_j`; hierarchical group
//! scales) and `logit` for the spike-and-slab mixing weights. [`PriorModel`]
//! evaluates the joint prior density of `(theta, latents)` with respect to
//! those unconstrained coordinates, so the log-Jacobians of the transforms
//! are part of the returned value.
//!
//! The spike-and-slab prior is the continuous relaxation
//! `w N(0, slab_sd^2) + (1 - w) N(0, spike_sd^2)`; the point mass at zero is
//! replaced by a narrow Normal so the density stays differentiable.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::math::{abs, exp, ln, ln_1p, log_sum_exp};
use crate::model::{ModelSpec, ParamRole};
use crate::special::ln_gamma;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Mean and standard deviation of a Normal block prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalBlock {
    pub mean: f64,
    pub sd: f64,
}

impl NormalBlock {
    pub const fn new(mean: f64, sd: f64) -> Self {
        NormalBlock { mean, sd }
    }
}

/// Normal priors on the precision coefficients: the intercept `gamma_1` and
/// any further (seasonal) entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionPrior {
    pub intercept: NormalBlock,
    pub seasonal: NormalBlock,
}

impl Default for PrecisionPrior {
    fn default() -> Self {
        PrecisionPrior {
            intercept: NormalBlock::new(7.0, 1.5),
            seasonal: NormalBlock::new(0.0, 0.1),
        }
    }
}

/// Prior family with all hyperparameters. The precision coefficients always
/// receive `precision` regardless of family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum PriorConfig {
    /// Independent Normal priors per block.
    #[serde(alias = "informative")]
    Normal {
        ar: NormalBlock,
        ma: NormalBlock,
        beta: NormalBlock,
        #[serde(default)]
        precision: PrecisionPrior,
    },
    /// `theta_j ~ N(0, tau^2 lambda_j^2)`, `tau ~ C+(0, global_scale)`,
    /// `lambda_j ~ C+(0, local_scale)`; sampled non-centered.
    Horseshoe {
        global_scale: f64,
        local_scale: f64,
        #[serde(default)]
        precision: PrecisionPrior,
    },
    /// `p(theta_j) = exp(-|theta_j| / b) / (2b)` with a per-block scale `b`.
    Laplace {
        ar_scale: f64,
        ma_scale: f64,
        beta_scale: f64,
        #[serde(default)]
        precision: PrecisionPrior,
    },
    /// `w_j N(0, slab_sd^2) + (1 - w_j) N(0, spike_sd^2)`, `w_j ~ Beta(mix_a, mix_b)`.
    SpikeSlab {
        slab_sd: f64,
        spike_sd: f64,
        mix_a: f64,
        mix_b: f64,
        #[serde(default)]
        precision: PrecisionPrior,
    },
    /// Group-level Normal scales with half-Cauchy hyperpriors. Groups:
    /// beta; diagonal of every `A_p`; off-diagonal of every `A_p`; every `B_q`.
    Hierarchical {
        ar_diag_mean: f64,
        ar_diag_scale: f64,
        ar_off_scale: f64,
        ma_scale: f64,
        beta_scale: f64,
        #[serde(default)]
        precision: PrecisionPrior,
    },
}

/// The five families by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorFamily {
    #[serde(alias = "normal")]
    Informative,
    Horseshoe,
    Laplace,
    SpikeSlab,
    Hierarchical,
}

impl PriorFamily {
    pub const ALL: [PriorFamily; 5] = [
        PriorFamily::Informative,
        PriorFamily::Horseshoe,
        PriorFamily::Laplace,
        PriorFamily::SpikeSlab,
        PriorFamily::Hierarchical,
    ];

    /// Identifier used in configs and on the command line.
    pub fn id(&self) -> &'static str {
        match self {
            PriorFamily::Informative => "informative",
            PriorFamily::Horseshoe => "horseshoe",
            PriorFamily::Laplace => "laplace",
            PriorFamily::SpikeSlab => "spike-slab",
            PriorFamily::Hierarchical => "hierarchical",
        }
    }

    /// Label used in report tables.
    pub fn label(&self) -> &'static str {
        match self {
            PriorFamily::Informative => "Informative",
            PriorFamily::Horseshoe => "Horseshoe",
            PriorFamily::Laplace => "Laplace",
            PriorFamily::SpikeSlab => "Spike-Slab",
            PriorFamily::Hierarchical => "Hierarchical",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        let lower = name.trim().to_ascii_lowercase().replace('_', "-");
        match lower.as_str() {
            "informative" | "normal" => Ok(PriorFamily::Informative),
            "horseshoe" => Ok(PriorFamily::Horseshoe),
            "laplace" => Ok(PriorFamily::Laplace),
            "spike-slab" | "spikeslab" | "spike-and-slab" => Ok(PriorFamily::SpikeSlab),
            "hierarchical" => Ok(PriorFamily::Hierarchical),
            _ => Err(Error::UnknownName {
                kind: "prior family",
                name: name.into(),
            }),
        }
    }
}

impl PriorConfig {
    pub fn family(&self) -> PriorFamily {
        match self {
            PriorConfig::Normal { .. } => PriorFamily::Informative,
            PriorConfig::Horseshoe { .. } => PriorFamily::Horseshoe,
            PriorConfig::Laplace { .. } => PriorFamily::Laplace,
            PriorConfig::SpikeSlab { .. } => PriorFamily::SpikeSlab,
            PriorConfig::Hierarchical { .. } => PriorFamily::Hierarchical,
        }
    }

    pub fn precision(&self) -> &PrecisionPrior {
        match self {
            PriorConfig::Normal { precision, .. }
            | PriorConfig::Horseshoe { precision, .. }
            | PriorConfig::Laplace { precision, .. }
            | PriorConfig::SpikeSlab { precision, .. }
            | PriorConfig::Hierarchical { precision, .. } => precision,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        let p = self.precision();
        positive("precision intercept sd", p.intercept.sd)?;
        positive("precision seasonal sd", p.seasonal.sd)?;
        match *self {
            PriorConfig::Normal { ar, ma, beta, .. } => {
                positive("ar sd", ar.sd)?;
                positive("ma sd", ma.sd)?;
                positive("beta sd", beta.sd)
            }
            PriorConfig::Horseshoe {
                global_scale,
                local_scale,
                ..
            } => {
                positive("global scale", global_scale)?;
                positive("local scale", local_scale)
            }
            PriorConfig::Laplace {
                ar_scale,
                ma_scale,
                beta_scale,
                ..
            } => {
                positive("ar scale", ar_scale)?;
                positive("ma scale", ma_scale)?;
                positive("beta scale", beta_scale)
            }
            PriorConfig::SpikeSlab {
                slab_sd,
                spike_sd,
                mix_a,
                mix_b,
                ..
            } => {
                positive("slab sd", slab_sd)?;
                positive("spike sd", spike_sd)?;
                positive("mixing a", mix_a)?;
                positive("mixing b", mix_b)
            }
            PriorConfig::Hierarchical {
                ar_diag_scale,
                ar_off_scale,
                ma_scale,
                beta_scale,
                ar_diag_mean,
                ..
            } => {
                if !ar_diag_mean.is_finite() {
                    return Err(Error::Config("diagonal mean must be finite".into()));
                }
                positive("ar diagonal scale", ar_diag_scale)?;
                positive("ar off-diagonal scale", ar_off_scale)?;
                positive("ma scale", ma_scale)?;
                positive("beta scale", beta_scale)
            }
        }
    }
}

/// Default configuration of `family` for a study id.
///
/// Study ids: `sim-correct`, `sim-overfit`, `sim-underfit`, `application`.
pub fn default_prior(study: &str, family: PriorFamily) -> Result<PriorConfig> {
    let application = match study {
        "sim-correct" | "sim-overfit" | "sim-underfit" => false,
        "application" => true,
        _ => {
            return Err(Error::UnknownName {
                kind: "study",
                name: study.into(),
            })
        }
    };
    let precision = PrecisionPrior::default();
    // simulations shrink the intercepts harder than the VARMA terms
    let beta_scale = if application { 1.0 } else { 0.1 };
    Ok(match family {
        PriorFamily::Informative => PriorConfig::Normal {
            ar: NormalBlock::new(0.0, 1.0),
            ma: NormalBlock::new(0.0, 1.0),
            beta: NormalBlock::new(0.0, 0.1),
            precision,
        },
        PriorFamily::Horseshoe => PriorConfig::Horseshoe {
            global_scale: 1.0,
            local_scale: 1.0,
            precision,
        },
        PriorFamily::Laplace => PriorConfig::Laplace {
            ar_scale: 1.0,
            ma_scale: 1.0,
            beta_scale,
            precision,
        },
        PriorFamily::SpikeSlab => PriorConfig::SpikeSlab {
            slab_sd: 1.0,
            spike_sd: 0.01,
            mix_a: 1.0,
            mix_b: 1.0,
            precision,
        },
        PriorFamily::Hierarchical => PriorConfig::Hierarchical {
            ar_diag_mean: if application { 0.5 } else { 0.0 },
            ar_diag_scale: 1.0,
            ar_off_scale: 1.0,
            ma_scale: 1.0,
            beta_scale,
            precision,
        },
    })
}

/// All five configured families for a study id, in table order.
pub fn default_study_priors(study: &str) -> Result<Vec<PriorConfig>> {
    PriorFamily::ALL
        .iter()
        .map(|f| default_prior(study, *f))
        .collect()
}

/// Latent scales in their natural (constrained) units.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LatentScales {
    /// Horseshoe global scale `tau`.
    pub global: Option<f64>,
    /// Horseshoe local scales `lambda_j`, one per coefficient.
    pub locals: Vec<f64>,
    /// Hierarchical group scales, one per non-empty group.
    pub group_scales: Vec<f64>,
    /// Spike-and-slab mixing weights `w_j`, one per coefficient.
    pub mixing: Vec<f64>,
}

/// Coefficient group of the hierarchical prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Beta,
    ArDiagonal,
    ArOffDiagonal,
    Ma,
}

impl Group {
    pub fn name(&self) -> &'static str {
        match self {
            Group::Beta => "sigma_beta",
            Group::ArDiagonal => "sigma_A_diag",
            Group::ArOffDiagonal => "sigma_A_off",
            Group::Ma => "sigma_B",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CoefPrior {
    Normal { mean: f64, sd: f64 },
    Laplace { scale: f64 },
    /// Scale comes from latents; the index is the latent slot.
    Horseshoe { local: usize },
    SpikeSlab { weight: usize },
    Grouped { mean: f64, group: usize },
}

/// Evaluates the joint prior for one model shape and configuration.
#[derive(Debug, Clone)]
pub struct PriorModel {
    spec: ModelSpec,
    config: PriorConfig,
    coefs: Vec<CoefPrior>,
    /// Hierarchical: (group, half-Cauchy scale) for each latent slot.
    groups: Vec<(Group, f64)>,
    n_latent: usize,
}

impl PriorModel {
    /// Assigns every coefficient to exactly one prior block and checks the
    /// hyperparameters.
    pub fn new(spec: &ModelSpec, config: &PriorConfig) -> Result<Self> {
        spec.validate()?;
        config.validate()?;
        let n = spec.coefficient_count();
        let mut coefs = Vec::with_capacity(n);
        let mut groups: Vec<(Group, f64)> = Vec::new();
        let mut n_latent = 0;
        match *config {
            PriorConfig::Normal { ar, ma, beta, .. } => {
                for i in 0..n {
                    let b = match spec.role(i) {
                        ParamRole::Ar { .. } => ar,
                        ParamRole::Ma { .. } => ma,
                        _ => beta,
                    };
                    coefs.push(CoefPrior::Normal {
                        mean: b.mean,
                        sd: b.sd,
                    });
                }
            }
            PriorConfig::Laplace {
                ar_scale,
                ma_scale,
                beta_scale,
                ..
            } => {
                for i in 0..n {
                    let scale = match spec.role(i) {
                        ParamRole::Ar { .. } => ar_scale,
                        ParamRole::Ma { .. } => ma_scale,
                        _ => beta_scale,
                    };
                    coefs.push(CoefPrior::Laplace { scale });
                }
            }
            PriorConfig::Horseshoe { .. } => {
                n_latent = 1 + n;
                coefs.extend((0..n).map(|i| CoefPrior::Horseshoe { local: 1 + i }));
            }
            PriorConfig::SpikeSlab { .. } => {
                n_latent = n;
                coefs.extend((0..n).map(|i| CoefPrior::SpikeSlab { weight: i }));
            }
            PriorConfig::Hierarchical {
                ar_diag_mean,
                ar_diag_scale,
                ar_off_scale,
                ma_scale,
                beta_scale,
                ..
            } => {
                let group_of = |i: usize| match spec.role(i) {
                    ParamRole::Ar { row, col, .. } if row == col => (Group::ArDiagonal, ar_diag_mean),
                    ParamRole::Ar { .. } => (Group::ArOffDiagonal, 0.0),
                    ParamRole::Ma { .. } => (Group::Ma, 0.0),
                    _ => (Group::Beta, 0.0),
                };
                for (g, scale) in [
                    (Group::ArDiagonal, ar_diag_scale),
                    (Group::ArOffDiagonal, ar_off_scale),
                    (Group::Ma, ma_scale),
                    (Group::Beta, beta_scale),
                ] {
                    if (0..n).any(|i| group_of(i).0 == g) {
                        groups.push((g, scale));
                    }
                }
                for i in 0..n {
                    let (g, mean) = group_of(i);
                    let slot = groups.iter().position(|(h, _)| *h == g).unwrap();
                    coefs.push(CoefPrior::Grouped { mean, group: slot });
                }
                n_latent = groups.len();
            }
        }
        let model = PriorModel {
            spec: *spec,
            config: config.clone(),
            coefs,
            groups,
            n_latent,
        };
        model.check_coverage()?;
        Ok(model)
    }

    /// Every coefficient (all of theta except gamma) covered exactly once,
    /// and every latent slot referenced consistently.
    fn check_coverage(&self) -> Result<()> {
        shape(
            "prior coefficient blocks",
            self.spec.coefficient_count(),
            self.coefs.len(),
        )?;
        let mut uses = vec![0usize; self.n_latent];
        for c in &self.coefs {
            match *c {
                CoefPrior::Horseshoe { local } => uses[local] += 1,
                CoefPrior::SpikeSlab { weight } => uses[weight] += 1,
                CoefPrior::Grouped { group, .. } => uses[group] += 1,
                _ => {}
            }
        }
        let per_coefficient = matches!(
            self.config,
            PriorConfig::Horseshoe { .. } | PriorConfig::SpikeSlab { .. }
        );
        for (slot, &u) in uses.iter().enumerate() {
            let horseshoe_global =
                matches!(self.config, PriorConfig::Horseshoe { .. }) && slot == 0;
            let ok = if horseshoe_global {
                u == 0
            } else if per_coefficient {
                u == 1
            } else {
                u >= 1
            };
            if !ok {
                return Err(Error::Config(format!(
                    "latent slot {slot} is referenced by {u} coefficients"
                )));
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn config(&self) -> &PriorConfig {
        &self.config
    }

    pub fn family(&self) -> PriorFamily {
        self.config.family()
    }

    pub fn latent_count(&self) -> usize {
        self.n_latent
    }

    /// Names of the latent slots, in order.
    pub fn latent_names(&self) -> Vec<String> {
        match self.config {
            PriorConfig::Horseshoe { .. } => {
                let mut names = vec![String::from("tau")];
                names.extend((0..self.n_latent - 1).map(|i| format!("lambda[{}]", i + 1)));
                names
            }
            PriorConfig::SpikeSlab { .. } => (0..self.n_latent)
                .map(|i| format!("w[{}]", i + 1))
                .collect(),
            PriorConfig::Hierarchical { .. } => {
                self.groups.iter().map(|(g, _)| String::from(g.name())).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Maps unconstrained latent coordinates to natural units.
    pub fn constrain_latents(&self, unconstrained: &[f64], out: &mut [f64]) {
        match self.config {
            PriorConfig::SpikeSlab { .. } => {
                for (o, &v) in out.iter_mut().zip(unconstrained) {
                    *o = logistic(v);
                }
            }
            _ => {
                for (o, &v) in out.iter_mut().zip(unconstrained) {
                    *o = exp(v);
                }
            }
        }
    }

    /// Inverse of [`constrain_latents`](Self::constrain_latents) for a [`LatentScales`].
    pub fn unconstrain(&self, latents: &LatentScales) -> Result<Vec<f64>> {
        let n = self.spec.coefficient_count();
        let bad = |what: &str| Error::Config(format!("latent {what} out of range"));
        match self.config {
            PriorConfig::Horseshoe { .. } => {
                let tau = latents
                    .global
                    .ok_or_else(|| Error::Config("horseshoe needs a global scale".into()))?;
                shape("horseshoe local scales", n, latents.locals.len())?;
                let mut v = Vec::with_capacity(1 + n);
                for &s in core::iter::once(&tau).chain(&latents.locals) {
                    if !(s > 0.0) {
                        return Err(bad("scale"));
                    }
                    v.push(ln(s));
                }
                Ok(v)
            }
            PriorConfig::SpikeSlab { .. } => {
                shape("mixing weights", n, latents.mixing.len())?;
                latents
                    .mixing
                    .iter()
                    .map(|&w| {
                        if w > 0.0 && w < 1.0 {
                            Ok(ln(w) - ln(1.0 - w))
                        } else {
                            Err(bad("mixing weight"))
                        }
                    })
                    .collect()
            }
            PriorConfig::Hierarchical { .. } => {
                shape("group scales", self.groups.len(), latents.group_scales.len())?;
                latents
                    .group_scales
                    .iter()
                    .map(|&s| if s > 0.0 { Ok(ln(s)) } else { Err(bad("group scale")) })
                    .collect()
            }
            _ => Ok(Vec::new()),
        }
    }

    /// Joint log prior density of `(theta, latents)` w.r.t. `theta` and the
    /// unconstrained latent coordinates, including transform Jacobians.
    /// Gradients are *added* to the provided buffers.
    pub fn log_density(
        &self,
        theta: &[f64],
        latents: &[f64],
        mut grad_theta: Option<&mut [f64]>,
        mut grad_latents: Option<&mut [f64]>,
    ) -> Result<f64> {
        shape("theta", self.spec.count_parameters(), theta.len())?;
        shape("latents", self.n_latent, latents.len())?;
        let n = self.spec.coefficient_count();
        let mut total = 0.0;

        // precision coefficients
        let pp = self.config.precision();
        for (i, &g) in theta[n..].iter().enumerate() {
            let b = if i == 0 { pp.intercept } else { pp.seasonal };
            let (v, d) = normal_lpdf(g, b.mean, b.sd);
            total += v;
            if let Some(gt) = grad_theta.as_deref_mut() {
                gt[n + i] += d;
            }
        }

        match self.config {
            PriorConfig::Normal { .. } | PriorConfig::Laplace { .. } => {
                for (i, c) in self.coefs.iter().enumerate() {
                    let (v, d) = match *c {
                        CoefPrior::Normal { mean, sd } => normal_lpdf(theta[i], mean, sd),
                        CoefPrior::Laplace { scale } => laplace_lpdf(theta[i], scale),
                        _ => unreachable!(),
                    };
                    total += v;
                    if let Some(gt) = grad_theta.as_deref_mut() {
                        gt[i] += d;
                    }
                }
            }
            PriorConfig::Horseshoe {
                global_scale,
                local_scale,
                ..
            } => {
                let log_tau = latents[0];
                let tau = exp(log_tau);
                let (v, d) = log_half_cauchy_log_scale(log_tau, global_scale);
                total += v;
                let mut d_log_tau = d;
                for (i, c) in self.coefs.iter().enumerate() {
                    let CoefPrior::Horseshoe { local } = *c else {
                        unreachable!()
                    };
                    let log_lambda = latents[local];
                    let (v, d) = log_half_cauchy_log_scale(log_lambda, local_scale);
                    total += v;
                    let log_s = log_tau + log_lambda;
                    let s = tau * exp(log_lambda);
                    let x = theta[i] / s;
                    total += -HALF_LN_2PI - log_s - 0.5 * x * x;
                    let d_log_s = x * x - 1.0;
                    d_log_tau += d_log_s;
                    if let Some(gt) = grad_theta.as_deref_mut() {
                        gt[i] += -x / s;
                    }
                    if let Some(gl) = grad_latents.as_deref_mut() {
                        gl[local] += d + d_log_s;
                    }
                }
                if let Some(gl) = grad_latents.as_deref_mut() {
                    gl[0] += d_log_tau;
                }
            }
            PriorConfig::SpikeSlab {
                slab_sd,
                spike_sd,
                mix_a,
                mix_b,
                ..
            } => {
                let log_beta_fn = ln_gamma(mix_a) + ln_gamma(mix_b) - ln_gamma(mix_a + mix_b);
                for (i, c) in self.coefs.iter().enumerate() {
                    let CoefPrior::SpikeSlab { weight } = *c else {
                        unreachable!()
                    };
                    let v = latents[weight];
                    let w = logistic(v);
                    let log_w = -softplus(-v);
                    let log_1mw = -softplus(v);
                    // Beta(a, b) on w plus the logit Jacobian w (1 - w)
                    total += mix_a * log_w + mix_b * log_1mw - log_beta_fn;
                    let (ls, ds) = normal_lpdf(theta[i], 0.0, slab_sd);
                    let (lz, dz) = normal_lpdf(theta[i], 0.0, spike_sd);
                    let l1 = log_w + ls;
                    let l0 = log_1mw + lz;
                    let lse = log_sum_exp(l1, l0);
                    total += lse;
                    let r = exp(l1 - lse);
                    if let Some(gt) = grad_theta.as_deref_mut() {
                        gt[i] += r * ds + (1.0 - r) * dz;
                    }
                    if let Some(gl) = grad_latents.as_deref_mut() {
                        gl[weight] += mix_a * (1.0 - w) - mix_b * w + (r - w);
                    }
                }
            }
            PriorConfig::Hierarchical { .. } => {
                let mut d_groups = [0.0f64; 4];
                for (slot, &(_, scale)) in self.groups.iter().enumerate() {
                    let (v, d) = log_half_cauchy_log_scale(latents[slot], scale);
                    total += v;
                    d_groups[slot] += d;
                }
                for (i, c) in self.coefs.iter().enumerate() {
                    let CoefPrior::Grouped { mean, group } = *c else {
                        unreachable!()
                    };
                    let log_s = latents[group];
                    let s = exp(log_s);
                    let x = (theta[i] - mean) / s;
                    total += -HALF_LN_2PI - log_s - 0.5 * x * x;
                    d_groups[group] += x * x - 1.0;
                    if let Some(gt) = grad_theta.as_deref_mut() {
                        gt[i] += -x / s;
                    }
                }
                if let Some(gl) = grad_latents {
                    for (g, d) in gl.iter_mut().zip(&d_groups) {
                        *g += d;
                    }
                }
            }
        }
        if total.is_nan() {
            return Err(Error::Domain("prior density is NaN".into()));
        }
        Ok(total)
    }
}

/// Result of [`log_prior`].
#[derive(Debug, Clone, PartialEq)]
pub struct PriorValue {
    pub value: f64,
    pub grad_theta: Vec<f64>,
    /// Gradient w.r.t. the unconstrained latent coordinates (log / logit).
    pub grad_latents: Vec<f64>,
}

/// Joint log prior of `theta` and `latents` under `config`.
pub fn log_prior(
    spec: &ModelSpec,
    theta: &[f64],
    latents: &LatentScales,
    config: &PriorConfig,
) -> Result<PriorValue> {
    let model = PriorModel::new(spec, config)?;
    let v = model.unconstrain(latents)?;
    let mut grad_theta = vec![0.0; theta.len()];
    let mut grad_latents = vec![0.0; v.len()];
    let value = model.log_density(theta, &v, Some(&mut grad_theta), Some(&mut grad_latents))?;
    Ok(PriorValue {
        value,
        grad_theta,
        grad_latents,
    })
}

/// `(log N(x | mean, sd^2), d/dx)`.
#[inline]
pub(crate) fn normal_lpdf(x: f64, mean: f64, sd: f64) -> (f64, f64) {
    let z = (x - mean) / sd;
    (-HALF_LN_2PI - ln(sd) - 0.5 * z * z, -z / sd)
}

/// `(log Laplace(x | 0, b), d/dx)` with derivative 0 at exactly 0.
#[inline]
fn laplace_lpdf(x: f64, scale: f64) -> (f64, f64) {
    let d = if x > 0.0 {
        -1.0 / scale
    } else if x < 0.0 {
        1.0 / scale
    } else {
        0.0
    };
    (-abs(x) / scale - ln(2.0 * scale), d)
}

/// Half-Cauchy(0, c) density of `s = exp(u)` expressed in `u`, including the
/// Jacobian `s`: `ln 2 - ln(pi c) - ln(1 + s^2/c^2) + u`, and its derivative in `u`.
#[inline]
fn log_half_cauchy_log_scale(u: f64, c: f64) -> (f64, f64) {
    let r = exp(u) / c;
    let r2 = r * r;
    let value = core::f64::consts::LN_2 - ln(PI * c) - ln_1p(r2) + u;
    let deriv = if r2.is_finite() { 1.0 - 2.0 * r2 / (1.0 + r2) } else { -1.0 };
    (value, deriv)
}

#[inline]
fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + exp(-v))
    } else {
        let e = exp(v);
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + ln_1p(exp(-x))
    } else {
        ln_1p(exp(x))
    }
}
