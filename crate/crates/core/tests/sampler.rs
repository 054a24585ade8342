use bdarma_core::error::Result;
use bdarma_core::sampler::{sample, LogDensity, SamplerConfig};

#[derive(Clone)]
struct StdNormal(usize);

impl LogDensity for StdNormal {
    fn dim(&self) -> usize {
        self.0
    }

    fn log_density_grad(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        for (g, v) in grad.iter_mut().zip(x) {
            *g = -v;
        }
        Ok(-0.5 * x.iter().map(|v| v * v).sum::<f64>())
    }
}

#[derive(Clone)]
struct Scaled(Vec<f64>);

impl LogDensity for Scaled {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn log_density_grad(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let mut lp = 0.0;
        for ((g, v), s) in grad.iter_mut().zip(x).zip(&self.0) {
            *g = -v / (s * s);
            lp -= 0.5 * v * v / (s * s);
        }
        Ok(lp)
    }
}

fn moments(col: &[f64]) -> (f64, f64) {
    let n = col.len() as f64;
    let m = col.iter().sum::<f64>() / n;
    let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

#[test]
fn standard_normal_50d() {
    let cfg = SamplerConfig {
        seed: 11,
        ..SamplerConfig::default()
    };
    let draws = sample(&StdNormal(50), &cfg, None).unwrap();
    assert_eq!(draws.len(), 4 * 750);
    assert_eq!(draws.total_divergences(), 0);
    assert!(draws.max_rhat() < 1.05, "rhat {}", draws.max_rhat());
    for i in 0..50 {
        let (m, sd) = moments(&draws.column(i));
        assert!(m.abs() < 0.05, "mean {m}");
        assert!((0.9..=1.1).contains(&sd), "sd {sd}");
    }
}

#[test]
fn metric_adapts_to_scales() {
    let scales: Vec<f64> = (0..10).map(|i| 0.01 * 10f64.powf(i as f64 / 3.0)).collect();
    let cfg = SamplerConfig {
        seed: 5,
        chains: 2,
        ..SamplerConfig::default()
    };
    let draws = sample(&Scaled(scales.clone()), &cfg, None).unwrap();
    for (i, s) in scales.iter().enumerate() {
        let (_, sd) = moments(&draws.column(i));
        assert!((sd / s - 1.0).abs() < 0.15, "coordinate {i}: sd {sd}, want {s}");
        let var = draws.inv_metrics[0][i];
        assert!((var.sqrt() / s - 1.0).abs() < 0.3, "metric {var} for scale {s}");
    }
}

#[test]
fn runs_are_reproducible() {
    let cfg = SamplerConfig {
        seed: 3,
        chains: 2,
        warmup: 100,
        sampling: 50,
        ..SamplerConfig::default()
    };
    let a = sample(&StdNormal(3), &cfg, None).unwrap();
    let b = sample(&StdNormal(3), &cfg, None).unwrap();
    assert_eq!(a.draws, b.draws);
    let c = sample(&StdNormal(3), &SamplerConfig { seed: 4, ..cfg }, None).unwrap();
    assert_ne!(a.draws, c.draws);
}
