use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{cos, sin};

/// Known covariates: the `(J-1) x r_beta` matrix `X_t` of the mean recursion
/// and the `r_gamma` vector `z_t` of the precision link. Both must be
/// deterministic functions of the integer time index `t` (0-based, counted
/// from the first row of the series the model is fitted to).
pub trait Design {
    /// ALR dimension `J - 1`.
    fn k(&self) -> usize;
    fn r_beta(&self) -> usize;
    fn r_gamma(&self) -> usize;
    /// `out = X_t beta`.
    fn apply(&self, t: usize, beta: &[f64], out: &mut [f64]);
    /// `grad += X_t^T adj`.
    fn apply_transpose(&self, t: usize, adj: &[f64], grad: &mut [f64]);
    /// Writes `z_t`.
    fn precision_covariates(&self, t: usize, out: &mut [f64]);

    /// Dense row-major `X_t`, mostly for tests and export.
    fn matrix(&self, t: usize) -> Vec<f64> {
        let (k, r) = (self.k(), self.r_beta());
        let mut x = vec![0.0; k * r];
        let mut unit = vec![0.0; r];
        let mut col = vec![0.0; k];
        for c in 0..r {
            unit[c] = 1.0;
            self.apply(t, &unit, &mut col);
            unit[c] = 0.0;
            for row in 0..k {
                x[row * r + c] = col[row];
            }
        }
        x
    }
}

/// Fourier seasonality with a per-component intercept.
///
/// Each ALR component gets its own block of `1 + 2 * (weekly_pairs +
/// annual_pairs)` coefficients: an intercept followed by the seasonal
/// columns `sin(2 pi n d / period), cos(2 pi n d / period)` for the weekly
/// pairs `n = 1..=weekly_pairs` and then the annual pairs. The precision
/// covariates are an intercept plus the same seasonal columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierDesign {
    pub k: usize,
    pub weekly_pairs: usize,
    pub weekly_period: f64,
    pub annual_pairs: usize,
    pub annual_period: f64,
    /// Day index of `t = 0`.
    #[serde(default)]
    pub origin: usize,
}

impl FourierDesign {
    /// Two weekly pairs on a 5-day cycle and five annual pairs on 252 days.
    pub fn trading_days(k: usize) -> Self {
        FourierDesign {
            k,
            weekly_pairs: 2,
            weekly_period: 5.0,
            annual_pairs: 5,
            annual_period: 252.0,
            origin: 0,
        }
    }

    pub fn seasonal_columns(&self) -> usize {
        2 * (self.weekly_pairs + self.annual_pairs)
    }

    /// Coefficients per ALR component (intercept + seasonal).
    pub fn block_width(&self) -> usize {
        1 + self.seasonal_columns()
    }

    /// Writes `[1, seasonal columns...]` for day index `d`.
    pub fn features(&self, d: usize, out: &mut [f64]) {
        out[0] = 1.0;
        let mut col = 1;
        for &(pairs, period) in &[
            (self.weekly_pairs, self.weekly_period),
            (self.annual_pairs, self.annual_period),
        ] {
            // reduce the phase before taking sin/cos so large d stays exact
            let phase = (d as f64 % period) / period;
            for n in 1..=pairs {
                let angle = 2.0 * PI * ((n as f64 * phase) % 1.0);
                out[col] = sin(angle);
                out[col + 1] = cos(angle);
                col += 2;
            }
        }
    }
}

/// Serializable description of the supported designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignDescriptor {
    /// `X_t = I_{J-1}` (beta is a per-component intercept), `z_t = (1)`.
    Intercept { k: usize },
    /// Per-component intercept + Fourier seasonality; `z_t` shares the seasonal columns.
    Fourier(FourierDesign),
    /// Explicit matrices for `t < len`, repeated periodically beyond.
    Tabulated {
        k: usize,
        r_beta: usize,
        r_gamma: usize,
        len: usize,
        /// `len` row-major `k x r_beta` blocks.
        x: Vec<f64>,
        /// `len` blocks of `r_gamma`.
        z: Vec<f64>,
    },
}

impl DesignDescriptor {
    pub fn check_dimension(&self, k: usize) -> Result<()> {
        if self.k() != k {
            return Err(Error::Config(format!(
                "design is for {} ALR components, model has {k}",
                self.k()
            )));
        }
        if let DesignDescriptor::Tabulated {
            k,
            r_beta,
            r_gamma,
            len,
            x,
            z,
        } = self
        {
            if *len == 0 || x.len() != len * k * r_beta || z.len() != len * r_gamma {
                return Err(Error::Config("tabulated design has inconsistent sizes".into()));
            }
            if x.iter().chain(z).any(|v| !v.is_finite()) {
                return Err(Error::Config("tabulated design has non-finite entries".into()));
            }
        }
        Ok(())
    }
}

impl Design for DesignDescriptor {
    fn k(&self) -> usize {
        match self {
            DesignDescriptor::Intercept { k } => *k,
            DesignDescriptor::Fourier(f) => f.k,
            DesignDescriptor::Tabulated { k, .. } => *k,
        }
    }

    fn r_beta(&self) -> usize {
        match self {
            DesignDescriptor::Intercept { k } => *k,
            DesignDescriptor::Fourier(f) => f.k * f.block_width(),
            DesignDescriptor::Tabulated { r_beta, .. } => *r_beta,
        }
    }

    fn r_gamma(&self) -> usize {
        match self {
            DesignDescriptor::Intercept { .. } => 1,
            DesignDescriptor::Fourier(f) => f.block_width(),
            DesignDescriptor::Tabulated { r_gamma, .. } => *r_gamma,
        }
    }

    fn apply(&self, t: usize, beta: &[f64], out: &mut [f64]) {
        match self {
            DesignDescriptor::Intercept { .. } => out.copy_from_slice(beta),
            DesignDescriptor::Fourier(f) => {
                let w = f.block_width();
                let mut feat = [0.0; 64];
                let feat = &mut feat[..w];
                f.features(t + f.origin, feat);
                for (row, o) in out.iter_mut().enumerate() {
                    *o = crate::math::dot(feat, &beta[row * w..(row + 1) * w]);
                }
            }
            DesignDescriptor::Tabulated {
                k, r_beta, len, x, ..
            } => {
                let block = &x[(t % len) * k * r_beta..][..k * r_beta];
                for (row, o) in out.iter_mut().enumerate() {
                    *o = crate::math::dot(&block[row * r_beta..(row + 1) * r_beta], beta);
                }
            }
        }
    }

    fn apply_transpose(&self, t: usize, adj: &[f64], grad: &mut [f64]) {
        match self {
            DesignDescriptor::Intercept { .. } => {
                for (g, a) in grad.iter_mut().zip(adj) {
                    *g += a;
                }
            }
            DesignDescriptor::Fourier(f) => {
                let w = f.block_width();
                let mut feat = [0.0; 64];
                let feat = &mut feat[..w];
                f.features(t + f.origin, feat);
                for (row, &a) in adj.iter().enumerate() {
                    for (g, fv) in grad[row * w..(row + 1) * w].iter_mut().zip(feat.iter()) {
                        *g += a * fv;
                    }
                }
            }
            DesignDescriptor::Tabulated {
                k, r_beta, len, x, ..
            } => {
                let block = &x[(t % len) * k * r_beta..][..k * r_beta];
                for (row, &a) in adj.iter().enumerate() {
                    for (g, xv) in grad.iter_mut().zip(&block[row * r_beta..(row + 1) * r_beta]) {
                        *g += a * xv;
                    }
                }
            }
        }
    }

    fn precision_covariates(&self, t: usize, out: &mut [f64]) {
        match self {
            DesignDescriptor::Intercept { .. } => out[0] = 1.0,
            DesignDescriptor::Fourier(f) => f.features(t + f.origin, out),
            DesignDescriptor::Tabulated { r_gamma, len, z, .. } => {
                out.copy_from_slice(&z[(t % len) * r_gamma..][..*r_gamma]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_origin_features() {
        let f = FourierDesign::trading_days(10);
        let mut feat = [0.0; 15];
        f.features(0, &mut feat);
        assert_eq!(feat[0], 1.0);
        for pair in 0..7 {
            assert_eq!(feat[1 + 2 * pair], 0.0);
            assert_eq!(feat[2 + 2 * pair], 1.0);
        }
        // full weekly period returns exactly to the origin
        f.features(5, &mut feat);
        assert_eq!(feat[1], 0.0);
        assert_eq!(feat[2], 1.0);
    }

    #[test]
    fn fourier_dimensions_match_application() {
        let d = DesignDescriptor::Fourier(FourierDesign::trading_days(10));
        assert_eq!(d.r_beta(), 150);
        assert_eq!(d.r_gamma(), 15);
        let spec = crate::model::ModelSpec::new(10, 0, 11, d.r_beta(), d.r_gamma()).unwrap();
        assert_eq!(spec.count_parameters(), 1165);
    }

    #[test]
    fn fourier_columns_average_to_zero_over_a_period() {
        let f = FourierDesign {
            k: 1,
            weekly_pairs: 2,
            weekly_period: 5.0,
            annual_pairs: 5,
            annual_period: 20.0,
            origin: 0,
        };
        // 20 days is a whole number of both periods
        let mut sums = [0.0; 15];
        let mut feat = [0.0; 15];
        for d in 0..20 {
            f.features(d, &mut feat);
            for (s, v) in sums.iter_mut().zip(feat) {
                *s += v;
            }
        }
        for s in &sums[1..] {
            assert!((s / 20.0).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_is_adjoint_of_apply() {
        let designs = [
            DesignDescriptor::Intercept { k: 3 },
            DesignDescriptor::Fourier(FourierDesign::trading_days(3)),
            DesignDescriptor::Tabulated {
                k: 3,
                r_beta: 2,
                r_gamma: 1,
                len: 2,
                x: (0..12).map(|v| v as f64 * 0.3 - 1.0).collect(),
                z: vec![1.0, 1.0],
            },
        ];
        for d in &designs {
            let r = d.r_beta();
            let beta: Vec<f64> = (0..r).map(|i| (i as f64 * 0.7).sin()).collect();
            let adj = [0.3, -1.2, 0.5];
            for t in [0usize, 1, 7, 300] {
                let mut xb = [0.0; 3];
                d.apply(t, &beta, &mut xb);
                let mut g = vec![0.0; r];
                d.apply_transpose(t, &adj, &mut g);
                let lhs: f64 = xb.iter().zip(&adj).map(|(a, b)| a * b).sum();
                let rhs: f64 = g.iter().zip(&beta).map(|(a, b)| a * b).sum();
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn intercept_matrix_is_identity() {
        let d = DesignDescriptor::Intercept { k: 5 };
        let x = d.matrix(17);
        for r in 0..5 {
            for c in 0..5 {
                assert_eq!(x[r * 5 + c], if r == c { 1.0 } else { 0.0 });
            }
        }
    }
}
