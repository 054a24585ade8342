//! Log-likelihood of the Dirichlet ARMA model and its reverse-mode gradient.
//!
//! Time is 0-based: observations `0..m` form the conditioning set and emit no
//! likelihood term. For those indices the linear predictor is defined as
//! `eta_s = alr(y_s)`, so their MA innovations are exactly zero.

use alloc::vec;
use alloc::vec::Vec;

use super::{Design, ModelSpec, ParameterVector};
use crate::error::{shape, Error, Result};
use crate::math::{abs, dot, exp, ln};
use crate::simplex::{alr_into, alr_inv_into, Composition};
use crate::special::{digamma, ln_gamma};

/// Largest admissible `|z_t . gamma|`.
pub const LOG_PRECISION_GUARD: f64 = 700.0;

/// `eta_t` from the VARMA recursion:
/// `sum_p A_p [alr(y_{t-p}) - X_{t-p} beta] + sum_q B_q [alr(y_{t-q}) - eta_{t-q}] + X_t beta`.
///
/// `theta` is the flat parameter vector. `alr_history[s]` and
/// `eta_history[s]` are indexed by absolute time and must cover `t-P..t` and
/// `t-Q..t` respectively.
pub fn linear_predictor<D, H1, H2>(
    spec: &ModelSpec,
    theta: &[f64],
    design: &D,
    alr_history: &[H1],
    eta_history: &[H2],
    t: usize,
) -> Result<Vec<f64>>
where
    D: Design + ?Sized,
    H1: AsRef<[f64]>,
    H2: AsRef<[f64]>,
{
    shape("flat parameter vector", spec.count_parameters(), theta.len())?;
    if t < spec.m() {
        return Err(Error::MissingHistory { t, needed: 0 });
    }
    if spec.p > 0 && alr_history.len() < t {
        return Err(Error::MissingHistory { t, needed: t - 1 });
    }
    if spec.q > 0 && (eta_history.len() < t || alr_history.len() < t) {
        return Err(Error::MissingHistory { t, needed: t - 1 });
    }
    let k = spec.k();
    let beta = &theta[spec.beta_offset()..spec.gamma_offset()];
    let mut eta = vec![0.0; k];
    let mut xb = vec![0.0; k];
    design.apply(t, beta, &mut eta);
    for lag in 1..=spec.p {
        let s = t - lag;
        let a = alr_history[s].as_ref();
        shape("ALR history entry", k, a.len())?;
        design.apply(s, beta, &mut xb);
        let mat = &theta[spec.ar_offset(lag)..][..k * k];
        for (r, e) in eta.iter_mut().enumerate() {
            let row = &mat[r * k..(r + 1) * k];
            *e += row
                .iter()
                .zip(a.iter().zip(&xb))
                .map(|(c, (av, xv))| c * (av - xv))
                .sum::<f64>();
        }
    }
    for lag in 1..=spec.q {
        let s = t - lag;
        let a = alr_history[s].as_ref();
        let h = eta_history[s].as_ref();
        shape("eta history entry", k, h.len())?;
        let mat = &theta[spec.ma_offset(lag)..][..k * k];
        for (r, e) in eta.iter_mut().enumerate() {
            let row = &mat[r * k..(r + 1) * k];
            *e += row
                .iter()
                .zip(a.iter().zip(h))
                .map(|(c, (av, hv))| c * (av - hv))
                .sum::<f64>();
        }
    }
    Ok(eta)
}

/// Linear predictors `eta_0..eta_len` along an observed ALR path, with the
/// conditioning-set convention `eta_s = alr(y_s)` for `s < m`.
pub fn predictor_path<D, H>(spec: &ModelSpec, theta: &[f64], design: &D, alr_path: &[H]) -> Result<Vec<Vec<f64>>>
where
    D: Design + ?Sized,
    H: AsRef<[f64]>,
{
    let m = spec.m().min(alr_path.len());
    let mut eta: Vec<Vec<f64>> = alr_path[..m].iter().map(|a| a.as_ref().to_vec()).collect();
    for t in m..alr_path.len() {
        let e = linear_predictor(spec, theta, design, &alr_path[..t], &eta, t)?;
        eta.push(e);
    }
    Ok(eta)
}

/// `phi_t = exp(z_t . gamma)`; errors when the exponent leaves +/-700.
pub fn precision_at<D: Design + ?Sized>(gamma: &[f64], design: &D, t: usize) -> Result<f64> {
    shape("gamma", design.r_gamma(), gamma.len())?;
    let mut z = vec![0.0; gamma.len()];
    design.precision_covariates(t, &mut z);
    log_precision_checked(dot(&z, gamma), t).map(exp)
}

#[inline]
fn log_precision_checked(lp: f64, t: usize) -> Result<f64> {
    if !(abs(lp) <= LOG_PRECISION_GUARD) {
        return Err(Error::PrecisionOverflow {
            t,
            log_precision: lp,
        });
    }
    Ok(lp)
}

/// Convenience wrapper: log-likelihood and gradient for structured parameters.
pub fn log_likelihood<D: Design + Clone>(
    spec: &ModelSpec,
    params: &ParameterVector,
    design: &D,
    series: &[Composition],
) -> Result<(f64, Vec<f64>)> {
    params.check_shape(spec)?;
    let mut lik = Likelihood::new(*spec, design.clone(), series)?;
    let theta = params.pack();
    let mut grad = vec![0.0; theta.len()];
    let value = lik.value_and_grad(&theta, &mut grad)?;
    Ok((value, grad))
}

/// Reusable evaluation context for one series. Holds the transformed data
/// and scratch buffers; one context per chain.
#[derive(Debug, Clone)]
pub struct Likelihood<D> {
    spec: ModelSpec,
    design: D,
    len: usize,
    /// `alr(y_t)`, `len x K`.
    alr: Vec<f64>,
    /// `ln y_t`, `len x J`.
    log_y: Vec<f64>,
    /// `z_t`, `len x r_gamma`.
    z: Vec<f64>,
    xb: Vec<f64>,
    dev: Vec<f64>,
    eta: Vec<f64>,
    innov: Vec<f64>,
    adj: Vec<f64>,
    xb_adj: Vec<f64>,
    mu: Vec<f64>,
    tmp: Vec<f64>,
}

impl<D: Design> Likelihood<D> {
    pub fn new(spec: ModelSpec, design: D, series: &[Composition]) -> Result<Self> {
        spec.validate()?;
        shape("design ALR dimension", spec.k(), design.k())?;
        shape("design r_beta", spec.r_beta, design.r_beta())?;
        shape("design r_gamma", spec.r_gamma, design.r_gamma())?;
        let len = series.len();
        if len <= spec.m() {
            return Err(Error::InsufficientData {
                needed: spec.m() + 1,
                available: len,
            });
        }
        let (k, j) = (spec.k(), spec.j);
        let mut alr = vec![0.0; len * k];
        let mut log_y = vec![0.0; len * j];
        for (t, y) in series.iter().enumerate() {
            shape("composition length", j, y.len())?;
            alr_into(y.as_slice(), &mut alr[t * k..(t + 1) * k]);
            for (l, v) in log_y[t * j..(t + 1) * j].iter_mut().zip(y.as_slice()) {
                *l = ln(*v);
            }
        }
        let mut z = vec![0.0; len * spec.r_gamma];
        for t in 0..len {
            design.precision_covariates(t, &mut z[t * spec.r_gamma..(t + 1) * spec.r_gamma]);
        }
        Ok(Likelihood {
            spec,
            design,
            len,
            alr,
            log_y,
            z,
            xb: vec![0.0; len * k],
            dev: vec![0.0; len * k],
            eta: vec![0.0; len * k],
            innov: vec![0.0; len * k],
            adj: vec![0.0; len * k],
            xb_adj: vec![0.0; len * k],
            mu: vec![0.0; j],
            tmp: vec![0.0; k.max(j)],
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn design(&self) -> &D {
        &self.design
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Linear predictors of the last evaluation, `len x K` row-major.
    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn value(&mut self, theta: &[f64]) -> Result<f64> {
        self.evaluate(theta, None)
    }

    /// Log-likelihood with its gradient w.r.t. the flat parameters written to `grad`.
    pub fn value_and_grad(&mut self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.evaluate(theta, Some(grad))
    }

    fn evaluate(&mut self, theta: &[f64], mut grad: Option<&mut [f64]>) -> Result<f64> {
        let spec = self.spec;
        shape("flat parameter vector", spec.count_parameters(), theta.len())?;
        let (k, j, m, len) = (spec.k(), spec.j, spec.m(), self.len);
        let rg = spec.r_gamma;
        let beta = &theta[spec.beta_offset()..spec.gamma_offset()];
        let gamma = &theta[spec.gamma_offset()..];
        let want_grad = grad.is_some();
        if let Some(g) = grad.as_deref_mut() {
            shape("gradient buffer", theta.len(), g.len())?;
            g.iter_mut().for_each(|v| *v = 0.0);
        }

        for t in 0..len {
            let row = t * k..(t + 1) * k;
            self.design.apply(t, beta, &mut self.xb[row.clone()]);
            for i in row {
                self.dev[i] = self.alr[i] - self.xb[i];
            }
        }
        self.eta[..m * k].copy_from_slice(&self.alr[..m * k]);
        self.innov[..m * k].iter_mut().for_each(|v| *v = 0.0);

        let mut total = 0.0;
        for t in m..len {
            let (head, tail) = self.eta.split_at_mut(t * k);
            let eta_t = &mut tail[..k];
            eta_t.copy_from_slice(&self.xb[t * k..(t + 1) * k]);
            for lag in 1..=spec.p {
                let mat = &theta[spec.ar_offset(lag)..][..k * k];
                let d = &self.dev[(t - lag) * k..(t - lag + 1) * k];
                for (r, e) in eta_t.iter_mut().enumerate() {
                    *e += dot(&mat[r * k..(r + 1) * k], d);
                }
            }
            for lag in 1..=spec.q {
                let mat = &theta[spec.ma_offset(lag)..][..k * k];
                let u = &self.innov[(t - lag) * k..(t - lag + 1) * k];
                for (r, e) in eta_t.iter_mut().enumerate() {
                    *e += dot(&mat[r * k..(r + 1) * k], u);
                }
            }
            let _ = head;
            for r in 0..k {
                self.innov[t * k + r] = self.alr[t * k + r] - eta_t[r];
            }

            let zt = &self.z[t * rg..(t + 1) * rg];
            let lp = log_precision_checked(dot(zt, gamma), t)?;
            let phi = exp(lp);
            alr_inv_into(eta_t, &mut self.mu);
            let ly = &self.log_y[t * j..(t + 1) * j];
            let mut ll = ln_gamma(phi);
            for (&mu, &l) in self.mu.iter().zip(ly) {
                let a = phi * mu;
                ll += (a - 1.0) * l - ln_gamma(a);
            }
            if !ll.is_finite() {
                return Err(Error::LikelihoodEvaluation { t });
            }
            total += ll;

            if want_grad {
                // w_j = d ll / d mu_j ; s = sum_j mu_j w_j
                let w = &mut self.tmp[..j];
                let mut s = 0.0;
                for ((wj, &mu), &l) in w.iter_mut().zip(&self.mu).zip(ly) {
                    *wj = phi * (l - digamma(phi * mu));
                    s += mu * *wj;
                }
                let dlogphi = phi * digamma(phi) + s;
                let g = grad.as_deref_mut().unwrap();
                for (gv, &zv) in g[spec.gamma_offset()..].iter_mut().zip(zt) {
                    *gv += dlogphi * zv;
                }
                for r in 0..k {
                    self.adj[t * k + r] = self.mu[r] * (w[r] - s);
                }
            }
        }
        if !total.is_finite() {
            return Err(Error::LikelihoodEvaluation { t: len - 1 });
        }

        if let Some(g) = grad {
            self.backward(theta, g);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::LikelihoodEvaluation { t: m });
            }
        }
        Ok(total)
    }

    /// Reverse sweep. On entry `adj[t]` holds the direct derivative of the
    /// `t`-th likelihood term w.r.t. `eta_t`; MA feedback adds the indirect parts.
    fn backward(&mut self, theta: &[f64], g: &mut [f64]) {
        let spec = self.spec;
        let (k, m, len) = (spec.k(), spec.m(), self.len);
        self.xb_adj.iter_mut().for_each(|v| *v = 0.0);
        let tmp = &mut self.tmp[..k];
        for t in (m..len).rev() {
            let (before, from_t) = self.adj.split_at_mut(t * k);
            let a_t = &from_t[..k];
            for lag in 1..=spec.q {
                let s = t - lag;
                let off = spec.ma_offset(lag);
                let u = &self.innov[s * k..(s + 1) * k];
                for r in 0..k {
                    let gr = &mut g[off + r * k..off + (r + 1) * k];
                    for (gv, uv) in gr.iter_mut().zip(u) {
                        *gv += a_t[r] * uv;
                    }
                }
                if s >= m {
                    // innov_s = alr_s - eta_s
                    let mat = &theta[off..off + k * k];
                    let target = &mut before[s * k..(s + 1) * k];
                    for r in 0..k {
                        let ar = a_t[r];
                        for (tv, c) in target.iter_mut().zip(&mat[r * k..(r + 1) * k]) {
                            *tv -= ar * c;
                        }
                    }
                }
            }
            for lag in 1..=spec.p {
                let s = t - lag;
                let off = spec.ar_offset(lag);
                let d = &self.dev[s * k..(s + 1) * k];
                let mat = &theta[off..off + k * k];
                tmp.iter_mut().for_each(|v| *v = 0.0);
                for r in 0..k {
                    let ar = a_t[r];
                    let gr = &mut g[off + r * k..off + (r + 1) * k];
                    for ((gv, dv), (tv, c)) in gr
                        .iter_mut()
                        .zip(d)
                        .zip(tmp.iter_mut().zip(&mat[r * k..(r + 1) * k]))
                    {
                        *gv += ar * dv;
                        *tv += ar * c;
                    }
                }
                // dev_s = alr_s - X_s beta
                for (xa, tv) in self.xb_adj[s * k..(s + 1) * k].iter_mut().zip(tmp.iter()) {
                    *xa -= tv;
                }
            }
            for (xa, av) in self.xb_adj[t * k..(t + 1) * k].iter_mut().zip(a_t) {
                *xa += av;
            }
        }
        let gb = &mut g[spec.beta_offset()..spec.gamma_offset()];
        if !gb.is_empty() {
            for t in 0..len {
                let xa = &self.xb_adj[t * k..(t + 1) * k];
                if xa.iter().any(|v| *v != 0.0) {
                    self.design.apply_transpose(t, xa, gb);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DesignDescriptor;
    use crate::simplex::{alr, dirichlet_logpdf_alpha};

    fn comp(v: &[f64]) -> Composition {
        Composition::new(v.to_vec()).unwrap()
    }

    #[test]
    fn one_step_ar_example() {
        let spec = ModelSpec::new(1, 0, 2, 1, 1).unwrap();
        let design = DesignDescriptor::Intercept { k: 1 };
        let theta = [0.5, 0.0, 0.0];
        let hist = [vec![0.4]];
        let eta = linear_predictor(&spec, &theta, &design, &hist, &[] as &[Vec<f64>], 1).unwrap();
        assert!((eta[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_dynamics_reduce_to_regression() {
        let spec = ModelSpec::new(2, 1, 4, 3, 1).unwrap();
        let design = DesignDescriptor::Intercept { k: 3 };
        let mut theta = vec![0.0; spec.count_parameters()];
        theta[spec.beta_offset()..spec.gamma_offset()].copy_from_slice(&[0.3, -0.1, 0.2]);
        let hist = vec![vec![1.0, 2.0, 3.0]; 3];
        let eta = linear_predictor(&spec, &theta, &design, &hist, &hist, 2).unwrap();
        assert_eq!(eta, vec![0.3, -0.1, 0.2]);
    }

    #[test]
    fn predictor_requires_history() {
        let spec = ModelSpec::new(2, 0, 3, 2, 1).unwrap();
        let design = DesignDescriptor::Intercept { k: 2 };
        let theta = vec![0.0; spec.count_parameters()];
        let hist = vec![vec![0.0, 0.0]];
        let none: &[Vec<f64>] = &[];
        assert!(linear_predictor(&spec, &theta, &design, &hist, none, 1).is_err());
        assert!(linear_predictor(&spec, &theta, &design, &hist, none, 2).is_err());
    }

    #[test]
    fn precision_link() {
        let design = DesignDescriptor::Intercept { k: 5 };
        let phi = precision_at(&[7.0], &design, 3).unwrap();
        assert!((phi - 1_096.633_158_428_458_6).abs() < 1e-9);
        for t in 0..10 {
            assert_eq!(precision_at(&[1.3], &design, t).unwrap(), 1.3f64.exp());
        }
        assert!(matches!(
            precision_at(&[701.0], &design, 0),
            Err(Error::PrecisionOverflow { .. })
        ));
        assert!(precision_at(&[-700.5], &design, 0).is_err());
    }

    #[test]
    fn iid_case_is_sum_of_dirichlet_terms() {
        let spec = ModelSpec::new(0, 0, 3, 2, 1).unwrap();
        let design = DesignDescriptor::Intercept { k: 2 };
        let series = [
            comp(&[0.2, 0.3, 0.5]),
            comp(&[0.6, 0.3, 0.1]),
            comp(&[0.1, 0.1, 0.8]),
        ];
        let params = ParameterVector::zeros(&spec);
        let (value, _) = log_likelihood(&spec, &params, &design, &series).unwrap();
        let third = 1.0 / 3.0;
        let want: f64 = series
            .iter()
            .map(|y| dirichlet_logpdf_alpha(y.as_slice(), &[third; 3], None).unwrap())
            .sum();
        assert!((value - want).abs() < 1e-12);
    }

    #[test]
    fn short_series_is_rejected() {
        let spec = ModelSpec::new(2, 0, 3, 2, 1).unwrap();
        let series = [comp(&[0.2, 0.3, 0.5]), comp(&[0.6, 0.3, 0.1])];
        let design = DesignDescriptor::Intercept { k: 2 };
        assert!(Likelihood::new(spec, design, &series).is_err());
    }

    #[test]
    fn overflowing_precision_reports_time() {
        let spec = ModelSpec::new(1, 0, 3, 2, 1).unwrap();
        let series = [comp(&[0.2, 0.3, 0.5]), comp(&[0.6, 0.3, 0.1])];
        let mut lik = Likelihood::new(spec, DesignDescriptor::Intercept { k: 2 }, &series).unwrap();
        let mut theta = vec![0.0; spec.count_parameters()];
        *theta.last_mut().unwrap() = 800.0;
        assert_eq!(
            lik.value(&theta),
            Err(Error::PrecisionOverflow {
                t: 1,
                log_precision: 800.0
            })
        );
    }

    #[test]
    fn conditioning_set_eta_is_observed_alr() {
        let spec = ModelSpec::new(1, 2, 3, 2, 1).unwrap();
        let series = [
            comp(&[0.2, 0.3, 0.5]),
            comp(&[0.6, 0.3, 0.1]),
            comp(&[0.1, 0.1, 0.8]),
            comp(&[0.3, 0.3, 0.4]),
        ];
        let mut lik = Likelihood::new(spec, DesignDescriptor::Intercept { k: 2 }, &series).unwrap();
        let theta: Vec<f64> = (0..spec.count_parameters()).map(|i| 0.1 * i as f64 - 0.4).collect();
        lik.value(&theta).unwrap();
        for s in 0..2 {
            assert_eq!(&lik.eta()[s * 2..(s + 1) * 2], alr(&series[s]).as_slice());
        }
    }
}
