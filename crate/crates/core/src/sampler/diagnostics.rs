//! Rank-normalized split R-hat and effective sample size.
//!
//! Chains are split in half (dropping the middle draw of odd-length chains),
//! pooled draws are replaced by normal scores of their average ranks
//! `(r - 3/8) / (S + 1/4)`, and the classic between/within variance ratio and
//! Geyer's initial-monotone autocorrelation sum are applied to the scores.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{abs, log10, sqrt};
use crate::special::norm_quantile;

/// Both halves of every chain.
pub fn split_chains(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let n = c.len();
        if n < 2 {
            out.push(c.to_vec());
            continue;
        }
        let half = n / 2;
        out.push(c[..half].to_vec());
        out.push(c[n - half..].to_vec());
    }
    out
}

/// Replaces every draw by the normal score of its average pooled rank.
pub fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(Vec::len).sum();
    let mut idx: Vec<(f64, usize, usize)> = Vec::with_capacity(total);
    for (c, chain) in chains.iter().enumerate() {
        idx.extend(chain.iter().enumerate().map(|(i, &v)| (v, c, i)));
    }
    idx.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let s = total as f64;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && idx[end].0 == idx[start].0 {
            end += 1;
        }
        // 1-based average rank of the tie block
        let rank = (start + 1 + end) as f64 / 2.0;
        let score = norm_quantile((rank - 0.375) / (s + 0.25));
        for &(_, c, i) in &idx[start..end] {
            out[c][i] = score;
        }
        start = end;
    }
    out
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Classic potential scale reduction on equal-length chains.
fn rhat_basic(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let b = n * sample_var(&means);
    let w = mean(&chains.iter().map(|c| sample_var(c)).collect::<Vec<_>>());
    if !(w > 0.0) {
        return if b > 0.0 { f64::INFINITY } else { 1.0 };
    }
    let var_hat = (n - 1.0) / n * w + b / n;
    sqrt(var_hat / w)
}

fn median(x: &mut [f64]) -> f64 {
    x.sort_by(f64::total_cmp);
    let n = x.len();
    if n % 2 == 1 {
        x[n / 2]
    } else {
        0.5 * (x[n / 2 - 1] + x[n / 2])
    }
}

fn check_chains(chains: &[&[f64]]) -> Result<()> {
    if chains.len() < 2 {
        return Err(Error::RhatUnavailable(format!(
            "need at least 2 chains, got {}",
            chains.len()
        )));
    }
    let n = chains[0].len();
    if n < 4 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::RhatUnavailable(
            "chains must have equal length of at least 4 draws".into(),
        ));
    }
    Ok(())
}

/// Maximum of the bulk and tail rank-normalized split R-hat, floored at 1.
pub fn split_rhat(chains: &[&[f64]]) -> Result<f64> {
    check_chains(chains)?;
    let split = split_chains(chains);
    let bulk = rhat_basic(&rank_normalize(&split));
    let mut pooled: Vec<f64> = split.iter().flatten().copied().collect();
    let med = median(&mut pooled);
    let folded: Vec<Vec<f64>> = split
        .iter()
        .map(|c| c.iter().map(|v| abs(v - med)).collect())
        .collect();
    let tail = rhat_basic(&rank_normalize(&folded));
    Ok(bulk.max(tail).max(1.0))
}

/// Effective sample size of equal-length chains (no splitting or ranking).
pub fn ess_raw(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    if n < 3 {
        return f64::NAN;
    }
    let nf = n as f64;
    let centered: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| {
            let mu = mean(c);
            c.iter().map(|v| v - mu).collect()
        })
        .collect();
    // biased autocovariance averaged over chains
    let acov = |lag: usize| -> f64 {
        centered
            .iter()
            .map(|c| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / nf)
            .sum::<f64>()
            / m as f64
    };
    let mean_var = acov(0) * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
        var_plus += sample_var(&means);
    }
    if !(var_plus > 0.0) {
        return f64::NAN;
    }

    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut even = 1.0;
    let mut odd = 1.0 - (mean_var - acov(1)) / var_plus;
    rho[1] = odd;
    let mut t = 0;
    while t + 5 < n && !(even + odd).is_nan() && even + odd > 0.0 {
        t += 2;
        even = 1.0 - (mean_var - acov(t)) / var_plus;
        odd = 1.0 - (mean_var - acov(t + 1)) / var_plus;
        if even + odd >= 0.0 {
            rho[t] = even;
            rho[t + 1] = odd;
        }
    }
    let max_t = t;
    if even > 0.0 {
        rho[max_t] = even;
    }
    // initial monotone sequence
    let mut t = 0;
    while t + 4 <= max_t {
        t += 2;
        if rho[t] + rho[t + 1] > rho[t - 2] + rho[t - 1] {
            let v = 0.5 * (rho[t - 2] + rho[t - 1]);
            rho[t] = v;
            rho[t + 1] = v;
        }
    }
    let draws = (m * n) as f64;
    let sum: f64 = rho[..max_t.max(1)].iter().sum();
    let tau = (-1.0 + 2.0 * sum + rho[max_t]).max(1.0 / log10(draws));
    draws / tau
}

/// Bulk effective sample size (rank-normalized split chains).
pub fn ess_bulk(chains: &[&[f64]]) -> f64 {
    if chains.is_empty() || chains[0].len() < 4 {
        return f64::NAN;
    }
    ess_raw(&rank_normalize(&split_chains(chains)))
}

/// Tail effective sample size: the smaller of the ESS of the 5% and 95%
/// quantile indicators.
pub fn ess_tail(chains: &[&[f64]]) -> f64 {
    if chains.is_empty() || chains[0].len() < 4 {
        return f64::NAN;
    }
    let split = split_chains(chains);
    let mut pooled: Vec<f64> = split.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let q = |p: f64| crate::metrics::quantile_sorted(&pooled, p);
    let ind = |cut: f64| -> Vec<Vec<f64>> {
        split
            .iter()
            .map(|c| c.iter().map(|&v| if v <= cut { 1.0 } else { 0.0 }).collect())
            .collect()
    };
    let lo = ess_raw(&ind(q(0.05)));
    let hi = ess_raw(&ind(q(0.95)));
    lo.min(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normals(seed: u64, n: usize, shift: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn single_chain_is_an_error() {
        let c = normals(1, 100, 0.0);
        assert!(matches!(split_rhat(&[&c]), Err(Error::RhatUnavailable(_))));
    }

    #[test]
    fn copied_chains_give_exactly_one() {
        // second half mirrors the first so the split halves agree exactly
        let mut c = normals(2, 50, 0.0);
        let back: Vec<f64> = c.iter().rev().copied().collect();
        c.extend(back);
        assert_eq!(split_rhat(&[&c, &c]).unwrap(), 1.0);
        let d = normals(3, 100, 0.0);
        assert!(split_rhat(&[&d, &d]).unwrap() >= 1.0);
    }

    #[test]
    fn separated_chains_are_flagged() {
        let a = normals(4, 200, 0.0);
        let b = normals(5, 200, 5.0);
        assert!(split_rhat(&[&a, &b]).unwrap() > 1.5);
    }

    #[test]
    fn iid_draws_have_full_ess() {
        let chains: Vec<Vec<f64>> = (0..4).map(|s| normals(10 + s, 500, 0.0)).collect();
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        let ess = ess_bulk(&refs);
        assert!((ess / 2000.0 - 1.0).abs() < 0.2, "ess = {ess}");
        let tail = ess_tail(&refs);
        assert!(tail > 1000.0, "tail ess = {tail}");
    }

    #[test]
    fn autocorrelated_draws_have_reduced_ess() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..1000)
                    .map(|_| {
                        x = 0.9 * x + rng.sample::<f64, _>(StandardNormal);
                        x
                    })
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        // AR(1) with 0.9: ESS / N = (1 - 0.9) / (1 + 0.9)
        let ratio = ess_bulk(&refs) / 4000.0;
        assert!((ratio - 0.1 / 1.9).abs() < 0.02, "ratio = {ratio}");
    }

    #[test]
    fn ranks_average_ties() {
        let z = rank_normalize(&[vec![1.0, 1.0, 2.0]]);
        assert_eq!(z[0][0], z[0][1]);
        assert!(z[0][2] > z[0][0]);
    }

    #[test]
    fn constant_parameter_is_guarded() {
        let c = vec![0.5; 100];
        assert_eq!(split_rhat(&[&c, &c]).unwrap(), 1.0);
        assert!(ess_bulk(&[&c, &c]).is_nan());
    }

    #[test]
    fn rhat_never_below_one() {
        for s in 0..20 {
            let a = normals(100 + s, 60, 0.0);
            let b = normals(200 + s, 60, 0.0);
            assert!(split_rhat(&[&a, &b]).unwrap() >= 1.0 - 1e-6);
        }
    }
}
