//! Multinomial tree-doubling HMC transition with the generalized no-U-turn
//! criterion and a diagonal Euclidean metric.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::LogDensity;
use crate::error::{Error, Result};
use crate::math::{exp, ln, log_sum_exp, sqrt};

/// Energy error beyond which a trajectory is flagged divergent.
pub const MAX_ENERGY_ERROR: f64 = 1000.0;

/// Position, momentum, log density and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub log_density: f64,
}

impl PhasePoint {
    /// Evaluates the target at `q`; failures become `-inf` density.
    pub fn at<T: LogDensity + ?Sized>(target: &mut T, q: Vec<f64>) -> Self {
        let n = q.len();
        let mut z = PhasePoint {
            q,
            p: vec![0.0; n],
            grad: vec![0.0; n],
            log_density: 0.0,
        };
        z.refresh(target);
        z
    }

    fn refresh<T: LogDensity + ?Sized>(&mut self, target: &mut T) {
        self.log_density = match target.log_density_grad(&self.q, &mut self.grad) {
            Ok(v) if v.is_finite() && self.grad.iter().all(|g| g.is_finite()) => v,
            _ => {
                self.grad.iter_mut().for_each(|g| *g = 0.0);
                f64::NEG_INFINITY
            }
        };
    }

    pub fn is_finite(&self) -> bool {
        self.log_density.is_finite()
    }
}

/// `-log p(q) + p' M^-1 p / 2`.
pub fn hamiltonian(z: &PhasePoint, inv_metric: &[f64]) -> f64 {
    let kinetic: f64 = z
        .p
        .iter()
        .zip(inv_metric)
        .map(|(p, m)| m * p * p)
        .sum::<f64>();
    let h = -z.log_density + 0.5 * kinetic;
    if h.is_nan() {
        f64::INFINITY
    } else {
        h
    }
}

/// One velocity-Verlet step of size `step` (negative to integrate backwards).
pub fn leapfrog<T: LogDensity + ?Sized>(target: &mut T, z: &mut PhasePoint, inv_metric: &[f64], step: f64) {
    let half = 0.5 * step;
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += half * g;
    }
    for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(inv_metric) {
        *q += step * m * p;
    }
    z.refresh(target);
    for (p, g) in z.p.iter_mut().zip(&z.grad) {
        *p += half * g;
    }
}

fn sample_momentum(z: &mut PhasePoint, inv_metric: &[f64], rng: &mut ChaCha8Rng) {
    for (p, m) in z.p.iter_mut().zip(inv_metric) {
        let n: f64 = rng.sample(StandardNormal);
        *p = n / sqrt(*m);
    }
}

fn sharp(p: &[f64], inv_metric: &[f64], out: &mut [f64]) {
    for ((o, p), m) in out.iter_mut().zip(p).zip(inv_metric) {
        *o = m * p;
    }
}

fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    let a: f64 = p_sharp_plus.iter().zip(rho).map(|(x, r)| x * r).sum();
    let b: f64 = p_sharp_minus.iter().zip(rho).map(|(x, r)| x * r).sum();
    a > 0.0 && b > 0.0
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Per-transition statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionStats {
    pub accept_stat: f64,
    pub tree_depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
    pub energy: f64,
}

/// Transition kernel state for one chain.
pub struct Nuts<'a, T: ?Sized> {
    pub target: &'a mut T,
    pub rng: &'a mut ChaCha8Rng,
    pub inv_metric: Vec<f64>,
    pub step_size: f64,
    pub max_depth: usize,
    z: PhasePoint,
    n_leapfrog: usize,
    sum_metro: f64,
    divergent: bool,
}

impl<'a, T: LogDensity + ?Sized> Nuts<'a, T> {
    pub fn new(target: &'a mut T, rng: &'a mut ChaCha8Rng, start: PhasePoint, max_depth: usize) -> Self {
        let n = start.q.len();
        Nuts {
            target,
            rng,
            inv_metric: vec![1.0; n],
            step_size: 1.0,
            max_depth,
            z: start,
            n_leapfrog: 0,
            sum_metro: 0.0,
            divergent: false,
        }
    }

    pub fn position(&self) -> &[f64] {
        &self.z.q
    }

    pub fn state(&self) -> &PhasePoint {
        &self.z
    }

    /// Doubles or halves the step size until a single leapfrog step crosses
    /// an acceptance of 0.8.
    pub fn init_step_size(&mut self) -> Result<()> {
        let eps = self.step_size;
        if eps == 0.0 || eps > 1e7 || eps.is_nan() {
            return Ok(());
        }
        let start = self.z.clone();
        let threshold = ln(0.8);
        let mut direction = 0i8;
        loop {
            self.z.clone_from(&start);
            sample_momentum(&mut self.z, &self.inv_metric, self.rng);
            let h0 = hamiltonian(&self.z, &self.inv_metric);
            leapfrog(self.target, &mut self.z, &self.inv_metric, self.step_size);
            let delta = h0 - hamiltonian(&self.z, &self.inv_metric);
            if direction == 0 {
                direction = if delta > threshold { 1 } else { -1 };
            }
            if direction == 1 && !(delta > threshold) || direction == -1 && !(delta < threshold) {
                break;
            }
            self.step_size = if direction == 1 {
                2.0 * self.step_size
            } else {
                0.5 * self.step_size
            };
            if self.step_size > 1e7 {
                self.z = start;
                return Err(Error::Domain("posterior is improper: step size diverged".into()));
            }
            if self.step_size == 0.0 {
                self.z = start;
                return Err(Error::Domain("no acceptably small step size".into()));
            }
        }
        self.z = start;
        Ok(())
    }

    /// One multinomial NUTS transition from the current position.
    pub fn transition(&mut self) -> TransitionStats {
        sample_momentum(&mut self.z, &self.inv_metric, self.rng);
        let n = self.z.q.len();
        let mut z_fwd = self.z.clone();
        let mut z_bck = self.z.clone();
        let mut z_sample = self.z.clone();
        let mut z_propose = self.z.clone();

        let p0 = self.z.p.clone();
        let mut p_sharp0 = vec![0.0; n];
        sharp(&p0, &self.inv_metric, &mut p_sharp0);
        let (mut p_fwd_fwd, mut p_fwd_bck) = (p0.clone(), p0.clone());
        let (mut p_bck_fwd, mut p_bck_bck) = (p0.clone(), p0.clone());
        let (mut ps_fwd_fwd, mut ps_fwd_bck) = (p_sharp0.clone(), p_sharp0.clone());
        let (mut ps_bck_fwd, mut ps_bck_bck) = (p_sharp0.clone(), p_sharp0);
        let mut rho = p0;

        let mut log_sum_weight = 0.0;
        let h0 = hamiltonian(&self.z, &self.inv_metric);
        self.n_leapfrog = 0;
        self.sum_metro = 0.0;
        self.divergent = false;
        let mut depth = 0;

        while depth < self.max_depth {
            let mut rho_fwd = vec![0.0; n];
            let mut rho_bck = vec![0.0; n];
            let mut lsw_subtree = f64::NEG_INFINITY;
            let valid = if self.rng.random::<f64>() > 0.5 {
                self.z.clone_from(&z_fwd);
                rho_bck.copy_from_slice(&rho);
                p_bck_fwd.copy_from_slice(&p_fwd_bck);
                ps_bck_fwd.copy_from_slice(&ps_fwd_bck);
                let ok = self.build_tree(
                    depth,
                    &mut z_propose,
                    &mut ps_fwd_bck,
                    &mut ps_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    h0,
                    1.0,
                    &mut lsw_subtree,
                );
                z_fwd.clone_from(&self.z);
                ok
            } else {
                self.z.clone_from(&z_bck);
                rho_fwd.copy_from_slice(&rho);
                p_fwd_bck.copy_from_slice(&p_bck_fwd);
                ps_fwd_bck.copy_from_slice(&ps_bck_fwd);
                let ok = self.build_tree(
                    depth,
                    &mut z_propose,
                    &mut ps_bck_fwd,
                    &mut ps_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    h0,
                    -1.0,
                    &mut lsw_subtree,
                );
                z_bck.clone_from(&self.z);
                ok
            };
            if !valid {
                break;
            }
            depth += 1;

            if lsw_subtree > log_sum_weight {
                z_sample.clone_from(&z_propose);
            } else {
                let accept = exp(lsw_subtree - log_sum_weight);
                if self.rng.random::<f64>() < accept {
                    z_sample.clone_from(&z_propose);
                }
            }
            log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

            rho = add(&rho_bck, &rho_fwd);
            let mut persist = no_u_turn(&ps_bck_bck, &ps_fwd_fwd, &rho);
            let rho_ext = add(&rho_bck, &p_fwd_bck);
            persist &= no_u_turn(&ps_bck_bck, &ps_fwd_bck, &rho_ext);
            let rho_ext = add(&rho_fwd, &p_bck_fwd);
            persist &= no_u_turn(&ps_bck_fwd, &ps_fwd_fwd, &rho_ext);
            if !persist {
                break;
            }
        }

        self.z = z_sample;
        TransitionStats {
            accept_stat: self.sum_metro / self.n_leapfrog as f64,
            tree_depth: depth,
            n_leapfrog: self.n_leapfrog,
            divergent: self.divergent,
            energy: hamiltonian(&self.z, &self.inv_metric),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree(
        &mut self,
        depth: usize,
        z_propose: &mut PhasePoint,
        ps_beg: &mut [f64],
        ps_end: &mut [f64],
        rho: &mut [f64],
        p_beg: &mut [f64],
        p_end: &mut [f64],
        h0: f64,
        sign: f64,
        log_sum_weight: &mut f64,
    ) -> bool {
        if depth == 0 {
            leapfrog(self.target, &mut self.z, &self.inv_metric, sign * self.step_size);
            self.n_leapfrog += 1;
            let h = hamiltonian(&self.z, &self.inv_metric);
            if h - h0 > MAX_ENERGY_ERROR {
                self.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, h0 - h);
            self.sum_metro += if h0 - h > 0.0 { 1.0 } else { exp(h0 - h) };
            z_propose.clone_from(&self.z);
            sharp(&self.z.p, &self.inv_metric, ps_beg);
            ps_end.copy_from_slice(ps_beg);
            for (r, p) in rho.iter_mut().zip(&self.z.p) {
                *r += p;
            }
            p_beg.copy_from_slice(&self.z.p);
            p_end.copy_from_slice(&self.z.p);
            return !self.divergent;
        }
        let n = rho.len();

        let mut lsw_init = f64::NEG_INFINITY;
        let mut p_init_end = vec![0.0; n];
        let mut ps_init_end = vec![0.0; n];
        let mut rho_init = vec![0.0; n];
        if !self.build_tree(
            depth - 1,
            z_propose,
            ps_beg,
            &mut ps_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            h0,
            sign,
            &mut lsw_init,
        ) {
            return false;
        }

        let mut z_propose_final = self.z.clone();
        let mut lsw_final = f64::NEG_INFINITY;
        let mut p_final_beg = vec![0.0; n];
        let mut ps_final_beg = vec![0.0; n];
        let mut rho_final = vec![0.0; n];
        if !self.build_tree(
            depth - 1,
            &mut z_propose_final,
            &mut ps_final_beg,
            ps_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            h0,
            sign,
            &mut lsw_final,
        ) {
            return false;
        }

        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree {
            *z_propose = z_propose_final;
        } else {
            let accept = exp(lsw_final - lsw_subtree);
            if self.rng.random::<f64>() < accept {
                *z_propose = z_propose_final;
            }
        }

        let rho_subtree = add(&rho_init, &rho_final);
        for (r, s) in rho.iter_mut().zip(&rho_subtree) {
            *r += s;
        }
        let mut persist = no_u_turn(ps_beg, ps_end, &rho_subtree);
        let rho_ext = add(&rho_init, &p_final_beg);
        persist &= no_u_turn(ps_beg, &ps_final_beg, &rho_ext);
        let rho_ext = add(&rho_final, &p_init_end);
        persist &= no_u_turn(&ps_init_end, ps_end, &rho_ext);
        persist
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    struct Gaussian;

    impl LogDensity for Gaussian {
        fn dim(&self) -> usize {
            3
        }
        fn log_density_grad(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
            let mut v = 0.0;
            for (i, (g, &xi)) in grad.iter_mut().zip(x).enumerate() {
                let prec = (i + 1) as f64;
                *g = -prec * xi;
                v -= 0.5 * prec * xi * xi;
            }
            Ok(v)
        }
    }

    #[test]
    fn leapfrog_is_reversible() {
        let mut target = Gaussian;
        let m = [1.0, 0.5, 2.0];
        let mut z = PhasePoint::at(&mut target, vec![0.3, -1.2, 0.8]);
        z.p = vec![0.5, 0.1, -0.7];
        let start = z.clone();
        for _ in 0..25 {
            leapfrog(&mut target, &mut z, &m, 0.1);
        }
        z.p.iter_mut().for_each(|p| *p = -*p);
        for _ in 0..25 {
            leapfrog(&mut target, &mut z, &m, 0.1);
        }
        for (a, b) in z.q.iter().zip(&start.q) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn small_step_conserves_energy() {
        let mut target = Gaussian;
        let m = [1.0; 3];
        let mut z = PhasePoint::at(&mut target, vec![1.0, -0.4, 0.2]);
        z.p = vec![-0.3, 0.9, 1.1];
        let h0 = hamiltonian(&z, &m);
        leapfrog(&mut target, &mut z, &m, 1e-3);
        assert!((hamiltonian(&z, &m) - h0).abs() < 1e-4);
    }

    #[test]
    fn criterion_sign_logic() {
        assert!(no_u_turn(&[1.0], &[1.0], &[2.0]));
        assert!(!no_u_turn(&[1.0], &[-1.0], &[2.0]));
    }

    #[test]
    fn failing_density_is_divergent() {
        struct Wall;
        impl LogDensity for Wall {
            fn dim(&self) -> usize {
                1
            }
            fn log_density_grad(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
                if x[0].abs() > 0.5 {
                    return Err(Error::Domain("outside".into()));
                }
                grad[0] = -x[0];
                Ok(-0.5 * x[0] * x[0])
            }
        }
        let mut target = Wall;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let start = PhasePoint::at(&mut target, vec![0.0]);
        let mut nuts = Nuts::new(&mut target, &mut rng, start, 10);
        nuts.step_size = 5.0;
        let stats = nuts.transition();
        assert!(stats.divergent);
        assert_eq!(nuts.position(), &[0.0]);
    }
}
