//! Joint log posterior on the unconstrained scale the sampler works in.
//!
//! Coordinates are the flat model parameters followed by the prior's latent
//! coordinates (log scales or logit weights). Under the horseshoe the
//! coefficient slots hold standardized `z_j` and the model coefficient is
//! `theta_j = tau * lambda_j * z_j`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape, Result};
use crate::math::exp;
use crate::model::{Design, ModelSpec, Likelihood};
use crate::prior::{PriorConfig, PriorFamily, PriorModel};
use crate::sampler::LogDensity;
use crate::simplex::Composition;

/// Log likelihood plus log prior plus every transform Jacobian.
#[derive(Debug, Clone)]
pub struct Posterior<D> {
    likelihood: Likelihood<D>,
    prior: PriorModel,
    non_centered: bool,
    theta: Vec<f64>,
    grad_theta: Vec<f64>,
    grad_latent: Vec<f64>,
}

impl<D: Design> Posterior<D> {
    pub fn new(spec: ModelSpec, design: D, series: &[Composition], prior: &PriorConfig) -> Result<Self> {
        let prior = PriorModel::new(&spec, prior)?;
        let likelihood = Likelihood::new(spec, design, series)?;
        let c = spec.count_parameters();
        Ok(Posterior {
            non_centered: prior.family() == PriorFamily::Horseshoe,
            grad_latent: vec![0.0; prior.latent_count()],
            likelihood,
            prior,
            theta: vec![0.0; c],
            grad_theta: vec![0.0; c],
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.likelihood.spec()
    }

    pub fn prior(&self) -> &PriorModel {
        &self.prior
    }

    pub fn likelihood(&self) -> &Likelihood<D> {
        &self.likelihood
    }

    /// Model parameters plus latent scales.
    pub fn total_dim(&self) -> usize {
        self.spec().count_parameters() + self.prior.latent_count()
    }

    /// Names of the constrained output columns: model parameters, then latents.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = self.spec().parameter_names();
        names.extend(self.prior.latent_names());
        names
    }

    /// Maps an unconstrained point to `(theta, latent scales)` in natural units.
    pub fn constrain(&self, unconstrained: &[f64], out: &mut [f64]) {
        let c = self.spec().count_parameters();
        let (theta, latents) = out.split_at_mut(c);
        fill_theta(
            self.spec(),
            self.non_centered,
            &unconstrained[..c],
            &unconstrained[c..],
            theta,
        );
        self.prior.constrain_latents(&unconstrained[c..], latents);
    }
}

fn fill_theta(spec: &ModelSpec, non_centered: bool, head: &[f64], latent: &[f64], theta: &mut [f64]) {
    theta.copy_from_slice(head);
    if non_centered {
        let tau = exp(latent[0]);
        for (i, t) in theta[..spec.coefficient_count()].iter_mut().enumerate() {
            *t *= tau * exp(latent[1 + i]);
        }
    }
}

impl<D: Design> LogDensity for Posterior<D> {
    fn dim(&self) -> usize {
        self.total_dim()
    }

    fn write_output(&self, x: &[f64], out: &mut [f64]) {
        self.constrain(x, out);
    }

    fn output_names(&self) -> Vec<String> {
        self.parameter_names()
    }

    fn log_density_grad(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let n_total = self.total_dim();
        shape("unconstrained point", n_total, x.len())?;
        shape("gradient buffer", n_total, grad.len())?;
        let spec = *self.spec();
        let c = spec.count_parameters();
        let (head, latent) = x.split_at(c);
        fill_theta(&spec, self.non_centered, head, latent, &mut self.theta);

        let ll = self
            .likelihood
            .value_and_grad(&self.theta, &mut self.grad_theta)?;
        self.grad_latent.iter_mut().for_each(|g| *g = 0.0);
        let lp = self.prior.log_density(
            &self.theta,
            latent,
            Some(&mut self.grad_theta),
            Some(&mut self.grad_latent),
        )?;
        let mut total = ll + lp;

        let (g_head, g_latent) = grad.split_at_mut(c);
        g_latent.copy_from_slice(&self.grad_latent);
        if self.non_centered {
            // theta_j = tau lambda_j z_j; Jacobian sum_j (log tau + log lambda_j)
            let n = spec.coefficient_count();
            let log_tau = latent[0];
            let mut d_log_tau = 0.0;
            for i in 0..n {
                let g = self.grad_theta[i];
                let scale = exp(log_tau + latent[1 + i]);
                g_head[i] = g * scale;
                let chain = g * self.theta[i] + 1.0;
                d_log_tau += chain;
                g_latent[1 + i] += chain;
                total += log_tau + latent[1 + i];
            }
            g_latent[0] += d_log_tau;
            g_head[n..].copy_from_slice(&self.grad_theta[n..]);
        } else {
            g_head.copy_from_slice(&self.grad_theta);
        }
        Ok(total)
    }
}
