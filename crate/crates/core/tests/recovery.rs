use bdarma_core::metrics::equal_tailed;
use bdarma_core::model::{DesignDescriptor, ModelSpec};
use bdarma_core::posterior::Posterior;
use bdarma_core::prior::{NormalBlock, PrecisionPrior, PriorConfig};
use bdarma_core::sampler::{sample, SamplerConfig};
use bdarma_core::simulator::simulate_with;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TRUTH: [f64; 7] = [0.6, 0.1, -0.2, 0.4, 0.3, -0.2, 4.6];

fn weak_normal() -> PriorConfig {
    PriorConfig::Normal {
        ar: NormalBlock::new(0.0, 1.0),
        ma: NormalBlock::new(0.0, 1.0),
        beta: NormalBlock::new(0.0, 1.0),
        precision: PrecisionPrior::default(),
    }
}

/// Fits a DARMA(1,0) with J = 3 to 200 simulated points and counts how many
/// of the six coefficients land inside their 95% intervals.
fn covered(seed: u64) -> usize {
    let spec = ModelSpec::new(1, 0, 3, 2, 1).unwrap();
    let design = DesignDescriptor::Intercept { k: 2 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let series = simulate_with(&spec, &design, &TRUTH, 200, &[], &mut rng).unwrap();
    let post = Posterior::new(spec, design, &series, &weak_normal()).unwrap();
    let cfg = SamplerConfig {
        seed,
        ..SamplerConfig::desk()
    };
    let draws = sample(&post, &cfg, None).unwrap();
    assert!(draws.max_rhat() < 1.05, "rhat {}", draws.max_rhat());
    (0..6)
        .filter(|&i| equal_tailed(&draws.column(i), 0.95).contains(TRUTH[i]))
        .count()
}

#[test]
fn intervals_cover_known_coefficients() {
    let hits: usize = (0..3).map(covered).sum();
    assert!(hits >= 15, "{hits} of 18 covered");
}
