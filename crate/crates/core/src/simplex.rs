//! Compositions on the simplex, the additive log-ratio transform pair, and
//! the Dirichlet distribution.
//!
//! The last component is always the ALR reference; component order is the
//! caller's and is never permuted.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{abs, exp, ln};
use crate::special::{digamma, ln_gamma};

/// Absolute tolerance on the unit-sum invariant.
pub const SUM_TOLERANCE: f64 = 1e-10;
/// Floor applied to sampled and ingested proportions before renormalising.
pub const ZERO_FLOOR: f64 = 1e-12;
/// Floor applied by [`alr_inv`] so the output is never exactly zero.
pub const ALR_INV_FLOOR: f64 = 1e-300;

/// A point on the simplex: `J >= 2` strictly positive proportions summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Composition(Vec<f64>);

impl Composition {
    /// Validates and wraps `values` without modifying them.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidComposition(format!(
                "need at least 2 components, got {}",
                values.len()
            )));
        }
        let mut sum = 0.0;
        for (j, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidComposition(format!(
                    "component {j} is not finite ({v})"
                )));
            }
            if v <= 0.0 {
                return Err(Error::InvalidComposition(format!(
                    "component {j} is not strictly positive ({v})"
                )));
            }
            sum += v;
        }
        if abs(sum - 1.0) > SUM_TOLERANCE {
            return Err(Error::InvalidComposition(format!(
                "components sum to {sum}, not 1"
            )));
        }
        Ok(Composition(values))
    }

    /// Normalises positive weights onto the simplex, clamping entries below
    /// [`ZERO_FLOOR`] (relative to the total) and renormalising.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidComposition(format!(
                "weights must be finite, nonnegative and not all zero (sum {total})"
            )));
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
        clamp_and_renormalize(&mut weights, ZERO_FLOOR);
        Composition::new(weights)
    }

    pub(crate) fn from_raw_unchecked(values: Vec<f64>) -> Self {
        Composition(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for Composition {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Composition::new(values)
    }
}

impl From<Composition> for Vec<f64> {
    fn from(c: Composition) -> Self {
        c.0
    }
}

impl AsRef<[f64]> for Composition {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl core::ops::Index<usize> for Composition {
    type Output = f64;

    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}

/// Raises every entry below `floor` to `floor` and rescales to unit sum.
/// Only touches the vector when some entry is below the floor.
pub(crate) fn clamp_and_renormalize(values: &mut [f64], floor: f64) {
    if values.iter().all(|&v| v >= floor) {
        return;
    }
    for v in values.iter_mut() {
        if !(*v >= floor) {
            *v = floor;
        }
    }
    let total: f64 = values.iter().sum();
    for v in values.iter_mut() {
        *v /= total;
    }
}

/// An additive log-ratio vector of length `J - 1` with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AlrVector(Vec<f64>);

impl AlrVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((j, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidComposition(format!(
                "ALR entry {j} is not finite ({v})"
            )));
        }
        Ok(AlrVector(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for AlrVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        AlrVector::new(values)
    }
}

impl AsRef<[f64]> for AlrVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl From<AlrVector> for Vec<f64> {
    fn from(v: AlrVector) -> Self {
        v.0
    }
}

/// `(ln(c_1/c_J), ..., ln(c_{J-1}/c_J))`.
pub fn alr(c: &Composition) -> AlrVector {
    let mut out = alloc::vec![0.0; c.len() - 1];
    alr_into(c.as_slice(), &mut out);
    AlrVector(out)
}

/// Slice form of [`alr`]; `out.len()` must be `c.len() - 1`.
#[inline]
pub fn alr_into(c: &[f64], out: &mut [f64]) {
    let last = ln(c[c.len() - 1]);
    for (o, &v) in out.iter_mut().zip(c) {
        *o = ln(v) - last;
    }
}

/// Inverse ALR: softmax of `(v, 0)`, stabilised by subtracting the maximum.
pub fn alr_inv(v: &AlrVector) -> Composition {
    let mut out = alloc::vec![0.0; v.len() + 1];
    alr_inv_into(v.as_slice(), &mut out);
    Composition::from_raw_unchecked(out)
}

/// Slice form of [`alr_inv`]; `out.len()` must be `v.len() + 1`. Entries are
/// floored at [`ALR_INV_FLOOR`].
#[inline]
pub fn alr_inv_into(v: &[f64], out: &mut [f64]) {
    let k = v.len();
    let max = v.iter().fold(0.0f64, |m, &x| if x > m { x } else { m });
    let mut total = 0.0;
    for (o, &x) in out[..k].iter_mut().zip(v) {
        *o = exp(x - max);
        total += *o;
    }
    out[k] = exp(-max);
    total += out[k];
    for o in out.iter_mut() {
        *o /= total;
    }
    clamp_and_renormalize(out, ALR_INV_FLOOR);
}

/// Dirichlet parameters in mean/precision form; concentration is `precision * mean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletParams {
    mean: Composition,
    precision: f64,
}

impl DirichletParams {
    pub fn new(mean: Composition, precision: f64) -> Result<Self> {
        if !(precision > 0.0) || !precision.is_finite() {
            return Err(Error::Domain(format!(
                "precision must be positive and finite, got {precision}"
            )));
        }
        if let Some(j) = mean.as_slice().iter().position(|&m| !(m * precision > 0.0)) {
            return Err(Error::Domain(format!(
                "concentration component {j} underflows to zero"
            )));
        }
        Ok(DirichletParams { mean, precision })
    }

    /// Builds the mean/precision pair from a raw concentration vector.
    pub fn from_concentration(alpha: &[f64]) -> Result<Self> {
        check_concentration(alpha)?;
        let precision: f64 = alpha.iter().sum();
        let mean = alpha.iter().map(|a| a / precision).collect();
        DirichletParams::new(Composition::new(mean)?, precision)
    }

    pub fn mean(&self) -> &Composition {
        &self.mean
    }

    pub fn precision(&self) -> f64 {
        self.precision
    }

    pub fn concentration(&self) -> Vec<f64> {
        self.mean
            .as_slice()
            .iter()
            .map(|m| m * self.precision)
            .collect()
    }
}

fn check_concentration(alpha: &[f64]) -> Result<()> {
    match alpha.iter().position(|&a| !(a > 0.0) || !a.is_finite()) {
        Some(j) => Err(Error::Domain(format!(
            "concentration alpha[{j}] = {} must be positive and finite",
            alpha[j]
        ))),
        None => Ok(()),
    }
}

/// Log-density of `Dirichlet(alpha)` at `y`.
pub fn dirichlet_logpdf(y: &Composition, p: &DirichletParams) -> Result<f64> {
    dirichlet_logpdf_alpha(y.as_slice(), &p.concentration(), None)
}

/// Log-density and its gradient with respect to the concentration vector:
/// `d/d alpha_j = psi(sum alpha) - psi(alpha_j) + ln y_j`.
pub fn dirichlet_logpdf_grad(y: &Composition, p: &DirichletParams) -> Result<(f64, Vec<f64>)> {
    let alpha = p.concentration();
    let mut grad = alloc::vec![0.0; alpha.len()];
    let value = dirichlet_logpdf_alpha(y.as_slice(), &alpha, Some(&mut grad))?;
    Ok((value, grad))
}

/// Raw-slice Dirichlet log-density, optionally writing the gradient w.r.t. `alpha`.
pub fn dirichlet_logpdf_alpha(y: &[f64], alpha: &[f64], grad: Option<&mut [f64]>) -> Result<f64> {
    if y.len() != alpha.len() {
        return Err(Error::Shape {
            what: "dirichlet concentration",
            expected: y.len(),
            found: alpha.len(),
        });
    }
    check_concentration(alpha)?;
    let total: f64 = alpha.iter().sum();
    let mut value = ln_gamma(total);
    for (&a, &yj) in alpha.iter().zip(y) {
        value += (a - 1.0) * ln(yj) - ln_gamma(a);
    }
    if let Some(grad) = grad {
        let psi_total = digamma(total);
        for ((g, &a), &yj) in grad.iter_mut().zip(alpha).zip(y) {
            *g = psi_total - digamma(a) + ln(yj);
        }
    }
    Ok(value)
}

/// One Dirichlet draw via independent `Gamma(alpha_j, 1)` variates, normalised.
/// Entries below [`ZERO_FLOOR`] are clamped and the vector renormalised.
pub fn dirichlet_sample<R: Rng + ?Sized>(p: &DirichletParams, rng: &mut R) -> Composition {
    let alpha = p.concentration();
    dirichlet_sample_alpha(&alpha, rng).expect("validated concentration")
}

pub fn dirichlet_sample_alpha<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Composition> {
    check_concentration(alpha)?;
    let mut out = Vec::with_capacity(alpha.len());
    dirichlet_sample_into(alpha, rng, &mut out);
    Ok(Composition::from_raw_unchecked(out))
}

/// Hot-path sampler writing into a reusable buffer; `alpha` must be valid.
pub(crate) fn dirichlet_sample_into<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R, out: &mut Vec<f64>) {
    out.clear();
    let mut total = 0.0;
    for &a in alpha {
        let g: f64 = Gamma::new(a, 1.0).expect("positive shape").sample(rng);
        out.push(g);
        total += g;
    }
    if !(total > 0.0) {
        // every gamma variate underflowed; fall back to the mean
        let s: f64 = alpha.iter().sum();
        out.iter_mut().zip(alpha).for_each(|(o, a)| *o = a / s);
    } else {
        out.iter_mut().for_each(|o| *o /= total);
    }
    clamp_and_renormalize(out, ZERO_FLOOR);
}
