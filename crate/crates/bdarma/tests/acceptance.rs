//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Run a subset with `cargo test -p bdarma --test acceptance -- 1 2 3`.
//! The process fails only when a criterion outside [`KNOWN_UNATTAINABLE`]
//! fails.

use std::time::{Duration, Instant};

use bdarma::application::{run_application, ApplicationConfig};
use bdarma::panel::SyntheticPanel;
use bdarma::study::{run_study, PriorChoice, Profile, Scenario, StudyConfig, StudyReport};
use bdarma_core::ingest::to_shares;
use bdarma_core::metrics::{equal_tailed, ratio_tables, recovery_metrics, Interval, ParameterLabel, SummaryCell};
use bdarma_core::model::{DesignDescriptor, ModelSpec};
use bdarma_core::posterior::Posterior;
use bdarma_core::prior::{default_prior, NormalBlock, PrecisionPrior, PriorConfig, PriorFamily};
use bdarma_core::sampler::{gradient_check, sample, LogDensity, SamplerConfig};
use bdarma_core::simplex::{alr, alr_inv, dirichlet_logpdf_alpha, dirichlet_sample_alpha, Composition};
use bdarma_core::simulator::simulate_with;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria whose target does not follow from the inputs it is computed from.
const KNOWN_UNATTAINABLE: [(usize, &str); 1] = [(
    9,
    "0.0324 / 0.0313 is 1.035, so the 1.091 target cannot be met by any correct ratio",
)];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = fn() -> Outcome;

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn gradient_instance(seed: u64, family: PriorFamily) -> (Posterior<DesignDescriptor>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = if rng.random::<bool>() { 3 } else { 6 };
    let q = rng.random_range(0..=2);
    let p = rng.random_range(if q == 0 { 1 } else { 0 }..=4);
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
    let prior = default_prior("sim-correct", family).unwrap();
    let post = Posterior::new(spec, design, &series, &prior).unwrap();
    let c = spec.count_parameters();
    let x = (0..post.dim())
        .map(|i| match i {
            _ if i == spec.gamma_offset() => 4.0 + rng.random::<f64>(),
            _ if i < c => 0.4 * (rng.random::<f64>() - 0.5),
            _ => rng.random::<f64>() - 0.5,
        })
        .collect();
    (post, x)
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for instance in 0..20u64 {
        for family in PriorFamily::ALL {
            let (mut post, x) = gradient_instance(7919 * instance + 17, family);
            worst = worst.max(gradient_check(&mut post, &x, 1e-6).unwrap_or(f64::INFINITY));
        }
    }
    let t = start.elapsed();
    Outcome::new(
        worst < 1e-5 && within(t, 60),
        format!("20 instances x 5 priors, max relative error {worst:.2e}, {:.1}s", t.as_secs_f64()),
    )
}

/// Midpoint rule over `0 < y1`, `0 < y2 < 1 - y1`.
fn dirichlet_mass(alpha: &[f64], n: usize) -> f64 {
    let mut total = 0.0;
    let h1 = 1.0 / n as f64;
    for a in 0..n {
        let y1 = (a as f64 + 0.5) * h1;
        let h2 = (1.0 - y1) / n as f64;
        for b in 0..n {
            let y2 = (b as f64 + 0.5) * h2;
            let y = [y1, y2, 1.0 - y1 - y2];
            total += dirichlet_logpdf_alpha(&y, alpha, None).unwrap().exp() * h1 * h2;
        }
    }
    total
}

fn simplex() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut alr_err = 0.0_f64;
    for _ in 0..1000 {
        let j = rng.random_range(2..=12);
        let w: Vec<f64> = (0..j).map(|_| rng.random::<f64>().powi(3) + 1e-9).collect();
        let y = Composition::from_weights(w).unwrap();
        let back = alr_inv(&alr(&y));
        for (a, b) in y.as_slice().iter().zip(back.as_slice()) {
            alr_err = alr_err.max((a - b).abs());
        }
    }

    let grids = [[1.0, 1.0, 1.0], [2.0, 3.0, 4.0], [1.5, 5.0, 2.5], [8.0, 6.0, 10.0]];
    let mass_err = grids
        .iter()
        .map(|a| (dirichlet_mass(a, 400) - 1.0).abs())
        .fold(0.0_f64, f64::max);

    let n = 100_000;
    let alpha = [0.5, 2.0, 7.5];
    let a0: f64 = alpha.iter().sum();
    let mut draws: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(n)).collect();
    for _ in 0..n {
        let y = dirichlet_sample_alpha(&alpha, &mut rng).unwrap();
        for (d, v) in draws.iter_mut().zip(y.as_slice()) {
            d.push(*v);
        }
    }
    let mut worst_z = 0.0_f64;
    for (j, d) in draws.iter().enumerate() {
        let mu = alpha[j] / a0;
        let var = mu * (1.0 - mu) / (a0 + 1.0);
        let m = d.iter().sum::<f64>() / n as f64;
        let s2 = d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let m4 = d.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n as f64;
        worst_z = worst_z.max((m - mu).abs() / (var / n as f64).sqrt());
        worst_z = worst_z.max((s2 - var).abs() / ((m4 - s2 * s2) / n as f64).sqrt());
    }
    let t = start.elapsed();
    Outcome::new(
        alr_err < 1e-12 && mass_err < 1e-3 && worst_z < 3.0 && within(t, 60),
        format!(
            "ALR round trip {alr_err:.1e}, Dirichlet mass error {mass_err:.1e}, moments within {worst_z:.2} SE, {:.1}s",
            t.as_secs_f64()
        ),
    )
}

#[derive(Clone)]
struct StdNormal(usize);

impl LogDensity for StdNormal {
    fn dim(&self) -> usize {
        self.0
    }

    fn log_density_grad(&mut self, x: &[f64], grad: &mut [f64]) -> bdarma_core::Result<f64> {
        for (g, v) in grad.iter_mut().zip(x) {
            *g = -v;
        }
        Ok(-0.5 * x.iter().map(|v| v * v).sum::<f64>())
    }
}

fn calibration() -> Outcome {
    let start = Instant::now();
    let cfg = SamplerConfig {
        seed: 50,
        ..SamplerConfig::default()
    };
    let draws = sample(&StdNormal(50), &cfg, None).unwrap();
    let (mut worst_mean, mut sd_lo, mut sd_hi) = (0.0_f64, f64::INFINITY, 0.0_f64);
    for i in 0..50 {
        let col = draws.column(i);
        let n = col.len() as f64;
        let m = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        worst_mean = worst_mean.max(m.abs());
        sd_lo = sd_lo.min(sd);
        sd_hi = sd_hi.max(sd);
    }
    let rhat = draws.max_rhat();
    let div = draws.total_divergences();
    let t = start.elapsed();
    Outcome::new(
        worst_mean <= 0.05 && sd_lo >= 0.9 && sd_hi <= 1.1 && rhat < 1.05 && div == 0 && within(t, 120),
        format!(
            "max |mean| {worst_mean:.3}, sd in [{sd_lo:.3}, {sd_hi:.3}], max R-hat {rhat:.3}, {div} divergences, {:.1}s",
            t.as_secs_f64()
        ),
    )
}

const RECOVERY_TRUTH: [f64; 7] = [0.6, 0.1, -0.2, 0.4, 0.3, -0.2, 4.6];

fn recovery() -> Outcome {
    let start = Instant::now();
    let spec = ModelSpec::new(1, 0, 3, 2, 1).unwrap();
    let prior = PriorConfig::Normal {
        ar: NormalBlock::new(0.0, 1.0),
        ma: NormalBlock::new(0.0, 1.0),
        beta: NormalBlock::new(0.0, 1.0),
        precision: PrecisionPrior::default(),
    };
    let (mut hits, mut total) = (0, 0);
    for seed in 0..10u64 {
        let design = DesignDescriptor::Intercept { k: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let series = simulate_with(&spec, &design, &RECOVERY_TRUTH, 200, &[], &mut rng).unwrap();
        let post = Posterior::new(spec, design, &series, &prior).unwrap();
        let cfg = SamplerConfig {
            seed: 200 + seed,
            ..SamplerConfig::desk()
        };
        let draws = sample(&post, &cfg, None).unwrap();
        for (i, truth) in RECOVERY_TRUTH.iter().enumerate() {
            total += 1;
            if equal_tailed(&draws.column(i), 0.95).contains(*truth) {
                hits += 1;
            }
        }
    }
    let t = start.elapsed();
    let rate = hits as f64 / total as f64;
    Outcome::new(
        rate >= 0.9 && within(t, 15 * 60),
        format!("{hits} of {total} coefficients covered ({:.0}%), {:.1}s", 100.0 * rate, t.as_secs_f64()),
    )
}

fn desk_study(scenario: Scenario, priors: &[PriorFamily]) -> Result<StudyReport, String> {
    let cfg = StudyConfig {
        scenarios: vec![scenario],
        priors: priors.iter().map(|p| PriorChoice::Family(*p)).collect(),
        ..StudyConfig::profile(Profile::Desk)
    };
    run_study(&cfg, None).map_err(|(e, _)| e.to_string())
}

fn block_metric(r: &StudyReport, s: Scenario, p: PriorFamily, block: &str, f: fn(f64, f64) -> f64) -> f64 {
    r.cell(s, p)
        .and_then(|c| c.recovery.as_ref())
        .and_then(|rec| rec.block(block))
        .map_or(f64::NAN, |b| f(b.mean_rmse, b.coverage))
}

fn rmse_of(r: &StudyReport, s: Scenario, p: PriorFamily, block: &str) -> f64 {
    block_metric(r, s, p, block, |rmse, _| rmse)
}

fn coverage_of(r: &StudyReport, s: Scenario, p: PriorFamily, block: &str) -> f64 {
    block_metric(r, s, p, block, |_, cov| cov)
}

fn study_correct() -> Outcome {
    use PriorFamily::{Horseshoe, Informative};
    let start = Instant::now();
    let s = Scenario::Correct;
    let r = match desk_study(s, &[Informative, Horseshoe]) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("study failed: {e}")),
    };
    let (inf, hs) = (rmse_of(&r, s, Informative, "A1"), rmse_of(&r, s, Horseshoe, "A1"));
    let cov = [coverage_of(&r, s, Informative, "A1"), coverage_of(&r, s, Horseshoe, "A1")];
    let m = [Informative, Horseshoe].map(|p| r.cell(s, p).and_then(|c| c.forecast).map_or(f64::NAN, |f| f.m_rmse));
    let t = start.elapsed();
    Outcome::new(
        hs <= inf
            && cov.iter().all(|c| (0.80..=1.0).contains(c))
            && m.iter().all(|v| (0.025..=0.040).contains(v))
            && within(t, 90 * 60),
        format!(
            "A1 RMSE horseshoe {hs:.3} vs informative {inf:.3}; A1 coverage {:.3}/{:.3}; M-RMSE {:.4}/{:.4}; {} failed fits; {:.0}s",
            cov[0],
            cov[1],
            m[0],
            m[1],
            r.failures.len(),
            t.as_secs_f64()
        ),
    )
}

fn study_overfit() -> Outcome {
    use PriorFamily::{Horseshoe, Informative};
    let start = Instant::now();
    let s = Scenario::Overfit;
    let r = match desk_study(s, &[Informative, Horseshoe]) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("study failed: {e}")),
    };
    let hs = [rmse_of(&r, s, Horseshoe, "A3"), rmse_of(&r, s, Horseshoe, "A4")];
    let inf = [rmse_of(&r, s, Informative, "A3"), rmse_of(&r, s, Informative, "A4")];
    let t = start.elapsed();
    Outcome::new(
        hs.iter().zip(&inf).all(|(h, i)| *h < 0.06 && h < i) && within(t, 120 * 60),
        format!(
            "A3 RMSE horseshoe {:.3} vs informative {:.3}; A4 {:.3} vs {:.3}; {} failed fits; {:.0}s",
            hs[0],
            inf[0],
            hs[1],
            inf[1],
            r.failures.len(),
            t.as_secs_f64()
        ),
    )
}

fn study_underfit() -> Outcome {
    let start = Instant::now();
    let s = Scenario::Underfit;
    let r = match desk_study(s, &PriorFamily::ALL) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("study failed: {e}")),
    };
    let cov: Vec<f64> = PriorFamily::ALL.iter().map(|p| coverage_of(&r, s, *p, "A1")).collect();
    let t = start.elapsed();
    Outcome::new(
        cov.iter().all(|c| *c < 0.85),
        format!(
            "A1 coverage {}; {:.0}s",
            PriorFamily::ALL
                .iter()
                .zip(&cov)
                .map(|(p, c)| format!("{} {c:.3}", p.label()))
                .collect::<Vec<_>>()
                .join(", "),
            t.as_secs_f64()
        ),
    )
}

fn application() -> Outcome {
    let start = Instant::now();
    let panel = SyntheticPanel::default().generate().unwrap();
    let shares = to_shares(&panel.panel).unwrap();
    let cfg = ApplicationConfig::profile(Profile::Desk);
    let report = match run_application(&shares, &panel.panel.sectors, &cfg, None) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("application failed: {e}")),
    };
    let all_fit = report.failures.is_empty() && report.rows.len() == PriorFamily::ALL.len();
    let worst_div = report.rows.iter().map(|r| r.max_divergence_rate).fold(0.0, f64::max);
    let simplex = report.rows.iter().all(|r| r.forecasts_on_simplex);
    let informative = report.row(PriorFamily::Informative).map_or(f64::NAN, |r| r.rmse);
    let best_shrinkage = report
        .rows
        .iter()
        .filter(|r| r.prior != PriorFamily::Informative)
        .map(|r| r.rmse)
        .fold(f64::INFINITY, f64::min);
    let t = start.elapsed();
    Outcome::new(
        all_fit && worst_div <= 0.2 && simplex && best_shrinkage <= informative,
        format!(
            "K={} T={} B-DARMA({},{}): {} priors fitted, max divergence rate {worst_div:.3}, on simplex {simplex}, \
             RMSE {}; {:.0}s",
            report.sectors.len(),
            shares.len(),
            cfg.p,
            cfg.q,
            report.rows.len(),
            report
                .rows
                .iter()
                .map(|r| format!("{} {:.4}", r.prior.label(), r.rmse))
                .collect::<Vec<_>>()
                .join(", "),
            t.as_secs_f64()
        ),
    )
}

fn metric_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let reps = rng.random_range(2..60);
        let truth = 4.0 * rng.random::<f64>() - 2.0;
        let est: Vec<Vec<f64>> = (0..reps).map(|_| vec![truth + 3.0 * rng.random::<f64>() - 1.0]).collect();
        let iv: Vec<Vec<Interval>> = est.iter().map(|e| vec![Interval { lo: e[0] - 1.0, hi: e[0] + 1.0 }]).collect();
        let labels = [ParameterLabel {
            name: "x".into(),
            block: "A1".into(),
        }];
        let p = &recovery_metrics(&labels, &[truth], &est, &iv).unwrap().parameters[0];
        let mean = est.iter().map(|e| e[0]).sum::<f64>() / reps as f64;
        let var = est.iter().map(|e| (e[0] - mean).powi(2)).sum::<f64>() / reps as f64;
        worst = worst.max((p.rmse.powi(2) - p.bias.powi(2) - var).abs());
    }

    let cell = |study: &str, m: f64, sd: f64| SummaryCell {
        study: study.into(),
        prior: "Informative".into(),
        m_rmse: m,
        sd_rmse: sd,
    };
    let cells = [cell("S1", 0.0313, 0.0039), cell("S2", 0.0324, 0.0039), cell("S3", 0.0322, 0.0041)];
    let ratios = ratio_tables(&cells, &[("S2", "S1")]);
    let s2s1 = ratios
        .cross_ratio("Informative", "S2", "S1")
        .and_then(|r| r.m_rmse)
        .unwrap_or(f64::NAN);
    Outcome::new(
        worst < 1e-12 && (s2s1 - 1.091).abs() <= 0.001,
        format!("RMSE^2 - Bias^2 - variance max {worst:.1e}; informative S2/S1 from M-RMSE 0.0324/0.0313 = {s2s1:.4} (target 1.091)"),
    )
}

fn main() {
    let criteria: [(usize, &str, Check); 9] = [
        (1, "gradient correctness", gradients),
        (2, "simplex numerics", simplex),
        (3, "sampler calibration", calibration),
        (4, "posterior recovery", recovery),
        (5, "study 1, correct order", study_correct),
        (6, "study 2, overfit", study_overfit),
        (7, "study 3, underfit", study_underfit),
        (8, "sector application", application),
        (9, "metric algebra", metric_algebra),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let outcome = check();
        let known = KNOWN_UNATTAINABLE.iter().find(|(k, _)| *k == id);
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        println!("{status} {id} {name}: {}", outcome.detail);
        if !outcome.pass {
            match known {
                Some((_, why)) => println!("     known unattainable: {why}"),
                None => unexpected.push(id),
            }
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
