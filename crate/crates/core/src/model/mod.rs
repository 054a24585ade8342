//! The Dirichlet ARMA model: shape, parameter layout, VARMA recursion in ALR
//! space, precision link and log-likelihood.

mod design;
mod likelihood;

pub use design::{Design, DesignDescriptor, FourierDesign};
pub use likelihood::{
    linear_predictor, log_likelihood, precision_at, predictor_path, Likelihood, LOG_PRECISION_GUARD,
};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orders and dimensions of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// AR order.
    #[serde(rename = "P")]
    pub p: usize,
    /// MA order.
    #[serde(rename = "Q")]
    pub q: usize,
    /// Number of components of each composition.
    #[serde(rename = "J")]
    pub j: usize,
    pub r_beta: usize,
    pub r_gamma: usize,
}

impl ModelSpec {
    pub fn new(p: usize, q: usize, j: usize, r_beta: usize, r_gamma: usize) -> Result<Self> {
        let spec = ModelSpec {
            p,
            q,
            j,
            r_beta,
            r_gamma,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.j < 2 {
            return Err(Error::Config(format!("J must be at least 2, got {}", self.j)));
        }
        if self.r_gamma < 1 {
            return Err(Error::Config(
                "r_gamma must be at least 1 (precision intercept)".into(),
            ));
        }
        Ok(())
    }

    /// Number of conditioning observations, `max(P, Q)`.
    pub fn m(&self) -> usize {
        self.p.max(self.q)
    }

    /// Dimension of the ALR space, `J - 1`.
    pub fn k(&self) -> usize {
        self.j - 1
    }

    /// `(P + Q)(J - 1)^2 + r_beta + r_gamma`.
    pub fn count_parameters(&self) -> usize {
        (self.p + self.q) * self.k() * self.k() + self.r_beta + self.r_gamma
    }

    /// Offset of `A_lag` (1-based lag) in the flat vector.
    pub fn ar_offset(&self, lag: usize) -> usize {
        debug_assert!(lag >= 1 && lag <= self.p);
        (lag - 1) * self.k() * self.k()
    }

    /// Offset of `B_lag` (1-based lag) in the flat vector.
    pub fn ma_offset(&self, lag: usize) -> usize {
        debug_assert!(lag >= 1 && lag <= self.q);
        (self.p + lag - 1) * self.k() * self.k()
    }

    pub fn beta_offset(&self) -> usize {
        (self.p + self.q) * self.k() * self.k()
    }

    pub fn gamma_offset(&self) -> usize {
        self.beta_offset() + self.r_beta
    }

    /// Number of regression-type coefficients (everything except gamma).
    pub fn coefficient_count(&self) -> usize {
        self.gamma_offset()
    }

    /// Role of flat index `idx`.
    pub fn role(&self, idx: usize) -> ParamRole {
        let k2 = self.k() * self.k();
        let matrices = (self.p + self.q) * k2;
        if idx < matrices {
            let which = idx / k2;
            let within = idx % k2;
            let (row, col) = (within / self.k(), within % self.k());
            if which < self.p {
                ParamRole::Ar {
                    lag: which + 1,
                    row,
                    col,
                }
            } else {
                ParamRole::Ma {
                    lag: which - self.p + 1,
                    row,
                    col,
                }
            }
        } else if idx < self.gamma_offset() {
            ParamRole::Beta {
                index: idx - matrices,
            }
        } else {
            ParamRole::Gamma {
                index: idx - self.gamma_offset(),
            }
        }
    }

    /// Human-readable names in flat order, 1-based as in `A1[r,c]`.
    pub fn parameter_names(&self) -> Vec<String> {
        (0..self.count_parameters())
            .map(|i| self.role(i).name())
            .collect()
    }
}

/// Where a flat parameter lives in the structured view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Ar { lag: usize, row: usize, col: usize },
    Ma { lag: usize, row: usize, col: usize },
    Beta { index: usize },
    Gamma { index: usize },
}

impl ParamRole {
    pub fn name(&self) -> String {
        match *self {
            ParamRole::Ar { lag, row, col } => format!("A{lag}[{},{}]", row + 1, col + 1),
            ParamRole::Ma { lag, row, col } => format!("B{lag}[{},{}]", row + 1, col + 1),
            ParamRole::Beta { index } => format!("beta[{}]", index + 1),
            ParamRole::Gamma { index } => format!("gamma[{}]", index + 1),
        }
    }

    /// Table block label: `A1`, `B2`, `beta`, `gamma`.
    pub fn block(&self) -> String {
        match *self {
            ParamRole::Ar { lag, .. } => format!("A{lag}"),
            ParamRole::Ma { lag, .. } => format!("B{lag}"),
            ParamRole::Beta { .. } => "beta".into(),
            ParamRole::Gamma { .. } => "gamma".into(),
        }
    }
}

/// Structured parameters: `A_1..A_P`, `B_1..B_Q` (row-major `(J-1)x(J-1)`),
/// `beta`, `gamma`. Flattened in exactly that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub ar: Vec<Vec<f64>>,
    pub ma: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ParameterVector {
    /// All-zero parameters shaped to `spec`.
    pub fn zeros(spec: &ModelSpec) -> Self {
        let k2 = spec.k() * spec.k();
        ParameterVector {
            ar: vec![vec![0.0; k2]; spec.p],
            ma: vec![vec![0.0; k2]; spec.q],
            beta: vec![0.0; spec.r_beta],
            gamma: vec![0.0; spec.r_gamma],
        }
    }

    pub fn check_shape(&self, spec: &ModelSpec) -> Result<()> {
        let k2 = spec.k() * spec.k();
        crate::error::shape("AR lag count", spec.p, self.ar.len())?;
        crate::error::shape("MA lag count", spec.q, self.ma.len())?;
        for a in self.ar.iter().chain(&self.ma) {
            crate::error::shape("coefficient matrix", k2, a.len())?;
        }
        crate::error::shape("beta", spec.r_beta, self.beta.len())?;
        crate::error::shape("gamma", spec.r_gamma, self.gamma.len())
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(
            self.ar.iter().chain(&self.ma).map(Vec::len).sum::<usize>()
                + self.beta.len()
                + self.gamma.len(),
        );
        for a in self.ar.iter().chain(&self.ma) {
            flat.extend_from_slice(a);
        }
        flat.extend_from_slice(&self.beta);
        flat.extend_from_slice(&self.gamma);
        flat
    }

    pub fn unpack(spec: &ModelSpec, flat: &[f64]) -> Result<Self> {
        crate::error::shape("flat parameter vector", spec.count_parameters(), flat.len())?;
        let k2 = spec.k() * spec.k();
        let mut chunks = flat[..spec.beta_offset()].chunks_exact(k2.max(1));
        let mut take = |n: usize| -> Vec<Vec<f64>> {
            if k2 == 0 {
                return vec![Vec::new(); n];
            }
            (0..n).map(|_| chunks.next().unwrap().to_vec()).collect()
        };
        let ar = take(spec.p);
        let ma = take(spec.q);
        Ok(ParameterVector {
            ar,
            ma,
            beta: flat[spec.beta_offset()..spec.gamma_offset()].to_vec(),
            gamma: flat[spec.gamma_offset()..].to_vec(),
        })
    }

    /// `A_lag[row][col]`, 1-based lag.
    pub fn ar_entry(&self, spec: &ModelSpec, lag: usize, row: usize, col: usize) -> f64 {
        self.ar[lag - 1][row * spec.k() + col]
    }

    pub fn ma_entry(&self, spec: &ModelSpec, lag: usize, row: usize, col: usize) -> f64 {
        self.ma[lag - 1][row * spec.k() + col]
    }
}

/// Shape plus design, serialised as `{P, Q, J, r_beta, r_gamma, design}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    #[serde(flatten)]
    pub spec: ModelSpec,
    pub design: DesignDescriptor,
}

impl ModelShape {
    pub fn new(p: usize, q: usize, j: usize, design: DesignDescriptor) -> Result<Self> {
        design.check_dimension(j - 1)?;
        let spec = ModelSpec::new(p, q, j, design.r_beta(), design.r_gamma())?;
        Ok(ModelShape { spec, design })
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.design.check_dimension(self.spec.k())?;
        crate::error::shape("design r_beta", self.spec.r_beta, self.design.r_beta())?;
        crate::error::shape("design r_gamma", self.spec.r_gamma, self.design.r_gamma())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        assert_eq!(ModelSpec::new(10, 0, 11, 150, 15).unwrap().count_parameters(), 1165);
        assert_eq!(ModelSpec::new(0, 0, 2, 3, 1).unwrap().count_parameters(), 4);
        assert_eq!(ModelSpec::new(2, 1, 6, 5, 1).unwrap().count_parameters(), 81);
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::new(1, 0, 1, 0, 1).is_err());
        assert!(ModelSpec::new(1, 0, 3, 0, 0).is_err());
        assert_eq!(ModelSpec::new(4, 2, 6, 5, 1).unwrap().m(), 4);
        assert_eq!(ModelSpec::new(1, 3, 6, 5, 1).unwrap().m(), 3);
    }

    #[test]
    fn roles_cover_layout() {
        let spec = ModelSpec::new(2, 1, 3, 2, 1).unwrap();
        let names = spec.parameter_names();
        assert_eq!(names.len(), 3 * 4 + 2 + 1);
        assert_eq!(names[0], "A1[1,1]");
        assert_eq!(names[3], "A1[2,2]");
        assert_eq!(names[4], "A2[1,1]");
        assert_eq!(names[8], "B1[1,1]");
        assert_eq!(names[12], "beta[1]");
        assert_eq!(names[14], "gamma[1]");
        assert_eq!(spec.role(9), ParamRole::Ma { lag: 1, row: 0, col: 1 });
    }

    #[test]
    fn unpack_rejects_wrong_length() {
        let spec = ModelSpec::new(1, 0, 3, 2, 1).unwrap();
        assert!(ParameterVector::unpack(&spec, &[0.0; 6]).is_err());
        let p = ParameterVector::unpack(&spec, &[1., 2., 3., 4., 5., 6., 7.]).unwrap();
        assert_eq!(p.ar_entry(&spec, 1, 1, 0), 3.0);
        assert_eq!(p.beta, vec![5.0, 6.0]);
        assert_eq!(p.gamma, vec![7.0]);
    }
}
