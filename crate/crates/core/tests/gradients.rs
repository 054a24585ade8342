use bdarma_core::model::{DesignDescriptor, ModelSpec};
use bdarma_core::posterior::Posterior;
use bdarma_core::prior::{default_prior, PriorFamily};
use bdarma_core::sampler::{gradient_check, LogDensity};
use bdarma_core::simulator::simulate_with;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, family: PriorFamily) -> (Posterior<DesignDescriptor>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = if rng.random::<bool>() { 3 } else { 6 };
    let p = rng.random_range(0..=4);
    let q = rng.random_range(0..=2);
    let p = if p + q == 0 { 1 } else { p };
    let k = j - 1;
    let spec = ModelSpec::new(p, q, j, k, 1).unwrap();
    let design = DesignDescriptor::Intercept { k };
    let mut truth = vec![0.0; spec.count_parameters()];
    for (i, v) in truth.iter_mut().enumerate() {
        *v = if i < spec.beta_offset() {
            0.15 * (rng.random::<f64>() - 0.5) / (p + q) as f64
        } else {
            0.3 * (rng.random::<f64>() - 0.5)
        };
    }
    truth[spec.gamma_offset()] = 5.0;
    let series = simulate_with(&spec, &design, &truth, 60, &[], &mut rng).unwrap();
    let prior = default_prior("application", family).unwrap();
    let post = Posterior::new(spec, design, &series, &prior).unwrap();
    let c = spec.count_parameters();
    let x: Vec<f64> = (0..post.dim())
        .map(|i| {
            if i < c && i != spec.gamma_offset() {
                0.4 * (rng.random::<f64>() - 0.5)
            } else if i == spec.gamma_offset() {
                4.0 + rng.random::<f64>()
            } else {
                rng.random::<f64>() - 0.5
            }
        })
        .collect();
    (post, x)
}

#[test]
fn posterior_gradients_match_finite_differences() {
    for family in PriorFamily::ALL {
        for seed in 0..6 {
            let (mut post, x) = instance(1000 * seed + family as u64, family);
            let err = gradient_check(&mut post, &x, 1e-6).unwrap();
            assert!(err < 1e-5, "{family:?} seed {seed}: relative error {err:e}");
        }
    }
}
