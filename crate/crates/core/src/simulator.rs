//! Forward simulation of Dirichlet ARMA processes and the built-in study
//! processes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::math::ln;
use crate::model::{linear_predictor, precision_at, Design, DesignDescriptor, ModelShape, ModelSpec, ParameterVector};
use crate::simplex::{alr_into, alr_inv_into, dirichlet_sample_alpha, Composition};

/// Everything needed to generate one synthetic series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub shape: ModelShape,
    pub params: ParameterVector,
    #[serde(rename = "T")]
    pub len: usize,
    #[serde(default)]
    pub seed: u64,
    /// Dirichlet concentration of the first `m` observations; empty means all ones.
    #[serde(default)]
    pub initial_concentration: Vec<f64>,
}

impl DgpConfig {
    pub fn spec(&self) -> &ModelSpec {
        &self.shape.spec
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        self.params.check_shape(&self.shape.spec)?;
        if !self.initial_concentration.is_empty() {
            shape("initial concentration", self.shape.spec.j, self.initial_concentration.len())?;
            if self.initial_concentration.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                return Err(Error::Config("initial concentration must be positive".into()));
            }
        }
        if self.len <= self.shape.spec.m() {
            return Err(Error::Config(format!(
                "series length {} does not exceed the {} conditioning observations",
                self.len,
                self.shape.spec.m()
            )));
        }
        Ok(())
    }

    /// Same process with a different seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_len(mut self, len: usize) -> Self {
        self.len = len;
        self
    }
}

/// Simulates `cfg.len` compositions with a generator seeded from `cfg.seed`.
pub fn simulate(cfg: &DgpConfig) -> Result<Vec<Composition>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    simulate_with(
        &cfg.shape.spec,
        &cfg.shape.design,
        &cfg.params.pack(),
        cfg.len,
        &cfg.initial_concentration,
        &mut rng,
    )
}

/// Core recursion: the first `m` points are drawn from the initial Dirichlet,
/// then `y_t ~ Dirichlet(phi_t alr_inv(eta_t))`.
pub fn simulate_with<D: Design + ?Sized, R: Rng + ?Sized>(
    spec: &ModelSpec,
    design: &D,
    theta: &[f64],
    len: usize,
    initial_concentration: &[f64],
    rng: &mut R,
) -> Result<Vec<Composition>> {
    shape("flat parameter vector", spec.count_parameters(), theta.len())?;
    let (j, k, m) = (spec.j, spec.k(), spec.m());
    let ones = vec![1.0; j];
    let init = if initial_concentration.is_empty() {
        &ones[..]
    } else {
        initial_concentration
    };
    let gamma = &theta[spec.gamma_offset()..];
    let mut series = Vec::with_capacity(len);
    let mut alr_hist: Vec<Vec<f64>> = Vec::with_capacity(len);
    let mut eta_hist: Vec<Vec<f64>> = Vec::with_capacity(len);
    let mut mu = vec![0.0; j];
    let mut alpha = vec![0.0; j];
    for t in 0..len {
        let y = if t < m {
            dirichlet_sample_alpha(init, rng)?
        } else {
            let eta = linear_predictor(spec, theta, design, &alr_hist, &eta_hist, t)?;
            if eta.iter().any(|v| !v.is_finite()) {
                return Err(Error::SimulationDiverged { t });
            }
            let phi = precision_at(gamma, design, t)?;
            alr_inv_into(&eta, &mut mu);
            for (a, u) in alpha.iter_mut().zip(&mu) {
                *a = phi * u;
            }
            eta_hist.push(eta);
            dirichlet_sample_alpha(&alpha, rng).map_err(|_| Error::SimulationDiverged { t })?
        };
        let mut a = vec![0.0; k];
        alr_into(y.as_slice(), &mut a);
        if t < m {
            eta_hist.push(a.clone());
        }
        alr_hist.push(a);
        series.push(y);
    }
    Ok(series)
}

const MAIN: &str = include_str!("../data/dgp_main.txt");
const SUPPLEMENTARY: &str = include_str!("../data/dgp_supplementary.txt");

/// Named blocks of a process description file.
fn parse_blocks(text: &str) -> Result<Vec<(String, Vec<f64>)>> {
    let mut blocks: Vec<(String, Vec<f64>)> = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.chars().next().is_some_and(char::is_alphabetic) {
            blocks.push((line.into(), Vec::new()));
            continue;
        }
        let block = blocks
            .last_mut()
            .ok_or_else(|| Error::Config("values before the first block label".into()))?;
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Config(format!("bad number '{tok}'")))?;
            block.1.push(v);
        }
    }
    Ok(blocks)
}

fn dgp_from_text(text: &str) -> Result<DgpConfig> {
    let blocks = parse_blocks(text)?;
    let get = |name: &str| -> Result<&Vec<f64>> {
        blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::Config(format!("missing block {name}")))
    };
    let beta = get("beta")?.clone();
    let k = beta.len();
    let shape = ModelShape::new(2, 1, k + 1, DesignDescriptor::Intercept { k })?;
    let mut params = ParameterVector::zeros(&shape.spec);
    params.ar = vec![get("A1")?.clone(), get("A2")?.clone()];
    params.ma = vec![get("B1")?.clone()];
    params.beta = beta;
    let phi = get("phi")?;
    params.gamma = vec![ln(phi[0])];
    let cfg = DgpConfig {
        shape,
        params,
        len: 100,
        seed: 0,
        initial_concentration: Vec::new(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// The simulation-study processes: `main` or `supplementary`.
pub fn builtin_dgp(name: &str) -> Result<DgpConfig> {
    match name {
        "main" => dgp_from_text(MAIN),
        "supplementary" => dgp_from_text(SUPPLEMENTARY),
        _ => Err(Error::UnknownName {
            kind: "data-generating process",
            name: name.into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[rustfmt::skip]
    const MAIN_A1: [f64; 25] = [
         0.80,  0.05, -0.04, -0.05, -0.05,
        -0.01,  0.70, -0.03,  0.02, -0.01,
         0.02,  0.00,  0.90,  0.02,  0.04,
        -0.03, -0.07, -0.02,  0.85, -0.01,
         0.04, -0.02,  0.01, -0.01,  0.75,
    ];
    #[rustfmt::skip]
    const MAIN_A2: [f64; 25] = [
        -0.30,  0.03,  0.02,  0.05, -0.04,
         0.02, -0.20, -0.01, -0.02,  0.01,
        -0.01,  0.05, -0.25, -0.01,  0.01,
        -0.01,  0.04,  0.01, -0.15,  0.00,
         0.06,  0.00, -0.11, -0.02, -0.20,
    ];
    #[rustfmt::skip]
    const MAIN_B1: [f64; 25] = [
         0.50, -0.02,  0.03,  0.00,  0.03,
         0.05,  0.40,  0.03, -0.01,  0.02,
         0.02,  0.01,  0.45, -0.02,  0.13,
        -0.01,  0.10,  0.05,  0.35,  0.01,
        -0.01,  0.04, -0.11,  0.10,  0.40,
    ];
    #[rustfmt::skip]
    const SUPP_A1: [f64; 25] = [
         0.80, -0.08, -0.08, -0.09, -0.08,
        -0.06,  0.70, -0.08,  0.06,  0.06,
        -0.06,  0.07,  0.90,  0.05, -0.09,
         0.07,  0.09,  0.07,  0.85,  0.08,
         0.05, -0.09, -0.07, -0.09,  0.75,
    ];
    #[rustfmt::skip]
    const SUPP_A2: [f64; 25] = [
        -0.30, -0.07, -0.06, -0.08,  0.09,
         0.06, -0.20, -0.07, -0.07, -0.09,
         0.05, -0.07, -0.25,  0.07, -0.05,
        -0.06,  0.08, -0.09, -0.15,  0.07,
        -0.05,  0.06,  0.10,  0.07, -0.20,
    ];
    #[rustfmt::skip]
    const SUPP_B1: [f64; 25] = [
         0.50, -0.06, -0.06,  0.05,  0.09,
         0.07,  0.40,  0.07,  0.08, -0.06,
        -0.10, -0.05,  0.45,  0.08,  0.10,
         0.09,  0.08, -0.09,  0.35,  0.10,
         0.09, -0.08,  0.06, -0.09,  0.40,
    ];

    /// Order-sensitive checksum so transposed entries are caught too.
    fn checksum(v: &[f64]) -> f64 {
        v.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).sum()
    }

    #[test]
    fn data_files_match_hand_entered_matrices() {
        let main = builtin_dgp("main").unwrap();
        let supp = builtin_dgp("supplementary").unwrap();
        for (got, want) in [
            (&main.params.ar[0], &MAIN_A1),
            (&main.params.ar[1], &MAIN_A2),
            (&main.params.ma[0], &MAIN_B1),
            (&supp.params.ar[0], &SUPP_A1),
            (&supp.params.ar[1], &SUPP_A2),
            (&supp.params.ma[0], &SUPP_B1),
        ] {
            assert_eq!(got.as_slice(), want.as_slice());
            assert!((checksum(got) - checksum(want)).abs() < 1e-12);
        }
    }

    #[test]
    fn builtin_entries() {
        let main = builtin_dgp("main").unwrap();
        let s = main.shape.spec;
        assert_eq!(main.params.ar_entry(&s, 1, 0, 0), 0.80);
        assert_eq!(main.params.ar_entry(&s, 2, 0, 0), -0.30);
        assert_eq!(main.params.ma_entry(&s, 1, 0, 0), 0.50);
        assert_eq!(main.params.beta, vec![0.1, -0.05, 0.03, -0.02, 0.04]);
        assert!((main.params.gamma[0].exp() - 500.0).abs() < 1e-9);
        assert_eq!((s.p, s.q, s.j), (2, 1, 6));
        let supp = builtin_dgp("supplementary").unwrap();
        assert_eq!(supp.params.ar_entry(&s, 1, 0, 1), -0.08);
        assert!(builtin_dgp("tertiary").is_err());
    }

    #[test]
    fn simulated_points_are_compositions() {
        let cfg = builtin_dgp("main").unwrap().with_seed(11);
        let series = simulate(&cfg).unwrap();
        assert_eq!(series.len(), 100);
        for y in &series {
            assert_eq!(y.len(), 6);
            assert!(y.as_slice().iter().all(|v| *v > 0.0));
            assert!((y.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn seeds_reproduce_and_differ() {
        let cfg = builtin_dgp("main").unwrap();
        let a = simulate(&cfg.clone().with_seed(5)).unwrap();
        let b = simulate(&cfg.clone().with_seed(5)).unwrap();
        let c = simulate(&cfg.with_seed(6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn diverging_recursion_is_reported() {
        let mut cfg = builtin_dgp("main").unwrap();
        cfg.params.ar[0] = vec![1e308; 25];
        assert!(matches!(simulate(&cfg), Err(Error::SimulationDiverged { .. })));
    }
}
