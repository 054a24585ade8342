//! Warmup adaptation: dual-averaging step size and windowed diagonal metric.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{ln, powf, sqrt};

/// Nesterov dual averaging of `log(step size)` towards a target acceptance.
#[derive(Debug, Clone)]
pub struct StepSizeAdaptation {
    target: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl StepSizeAdaptation {
    pub fn new(target: f64) -> Self {
        StepSizeAdaptation {
            target,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            mu: ln(10.0),
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
        }
    }

    /// Centres the iterates on `log(10 * step_size)`.
    pub fn set_mu(&mut self, step_size: f64) {
        self.mu = ln(10.0 * step_size);
    }

    pub fn restart(&mut self) {
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    /// One update from the mean Metropolis acceptance of the last transition.
    pub fn learn(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let accept = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept);
        let x = self.mu - self.s_bar * sqrt(self.counter) / self.gamma;
        let x_eta = powf(self.counter, -self.kappa);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        libm::exp(x)
    }

    /// Step size to use after warmup.
    pub fn final_step_size(&self) -> f64 {
        libm::exp(self.x_bar)
    }
}

/// Welford accumulator of per-coordinate means and variances.
#[derive(Debug, Clone)]
struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Welford {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn restart(&mut self) {
        self.n = 0;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.m2.iter_mut().for_each(|v| *v = 0.0);
    }

    fn add(&mut self, q: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(q) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
    }
}

/// Slow-phase schedule: an initial fast buffer, doubling metric windows and
/// a terminal fast buffer.
#[derive(Debug, Clone)]
pub struct MetricAdaptation {
    num_warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    counter: usize,
    window_size: usize,
    next_window: usize,
    estimator: Welford,
}

impl MetricAdaptation {
    pub fn new(dim: usize, num_warmup: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut base_window) = (75, 50, 25);
        if num_warmup >= 20 && init_buffer + base_window + term_buffer > num_warmup {
            init_buffer = (0.15 * num_warmup as f64) as usize;
            term_buffer = (0.1 * num_warmup as f64) as usize;
            base_window = num_warmup - (init_buffer + term_buffer);
        }
        MetricAdaptation {
            num_warmup,
            init_buffer,
            term_buffer,
            counter: 0,
            window_size: base_window,
            next_window: init_buffer + base_window - 1,
            estimator: Welford::new(dim),
        }
    }

    /// `(init buffer, terminal buffer, first window)`.
    pub fn schedule(&self) -> (usize, usize, usize) {
        (self.init_buffer, self.term_buffer, self.window_size)
    }

    fn in_window(&self) -> bool {
        self.counter >= self.init_buffer
            && self.counter + self.term_buffer < self.num_warmup
            && self.counter != self.num_warmup
    }

    fn window_ends(&self) -> bool {
        self.counter == self.next_window && self.counter != self.num_warmup
    }

    fn compute_next_window(&mut self) {
        let last = self.num_warmup as isize - self.term_buffer as isize - 1;
        if self.next_window as isize == last {
            return;
        }
        self.window_size *= 2;
        self.next_window = self.counter + self.window_size;
        if self.next_window as isize != last {
            let boundary = self.next_window + 2 * self.window_size;
            if boundary as isize >= self.num_warmup as isize - self.term_buffer as isize {
                self.next_window = last.max(0) as usize;
            }
        }
    }

    /// Feeds one warmup position. Returns `true` when a window closed and
    /// `inv_metric` was replaced by the regularized variance estimate.
    pub fn learn(&mut self, inv_metric: &mut [f64], q: &[f64]) -> bool {
        if self.in_window() {
            self.estimator.add(q);
        }
        if self.window_ends() {
            self.compute_next_window();
            let n = self.estimator.n as f64;
            if self.estimator.n > 1 {
                for (v, s) in inv_metric.iter_mut().zip(&self.estimator.m2) {
                    let var = s / (n - 1.0);
                    *v = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
                }
            }
            self.estimator.restart();
            self.counter += 1;
            return true;
        }
        self.counter += 1;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window_ends(num_warmup: usize) -> Vec<usize> {
        let mut a = MetricAdaptation::new(1, num_warmup);
        let mut m = [1.0];
        (0..num_warmup)
            .filter(|&i| a.learn(&mut m, &[i as f64]))
            .collect()
    }

    #[test]
    fn default_windows_for_long_warmup() {
        // 75 + 25, 50, 100, then the last window stretches to warmup - 50
        assert_eq!(window_ends(1000), vec![99, 149, 249, 449, 949]);
    }

    #[test]
    fn short_warmup_uses_proportional_buffers() {
        let a = MetricAdaptation::new(1, 100);
        assert_eq!(a.schedule(), (15, 10, 75));
        assert_eq!(window_ends(100), vec![89]);
    }

    #[test]
    fn warmup_of_500() {
        assert_eq!(window_ends(500), vec![99, 149, 249, 449]);
    }

    #[test]
    fn variance_is_regularized() {
        let mut a = MetricAdaptation::new(1, 100);
        let mut m = [1.0];
        let draws: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        for x in &draws {
            a.learn(&mut m, &[*x]);
        }
        // window covers indices 15..=89: 75 draws alternating +/-1
        let n = 75.0;
        let mean: f64 = draws[15..90].iter().sum::<f64>() / n;
        let var = draws[15..90].iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let want = n / (n + 5.0) * var + 1e-3 * 5.0 / (n + 5.0);
        assert!((m[0] - want).abs() < 1e-14);
    }

    #[test]
    fn dual_averaging_moves_towards_target() {
        let mut s = StepSizeAdaptation::new(0.8);
        s.set_mu(1.0);
        // always accepting: step size should grow
        let mut eps = 1.0;
        for _ in 0..50 {
            eps = s.learn(1.0);
        }
        assert!(eps > 1.0);
        s.restart();
        for _ in 0..50 {
            eps = s.learn(0.0);
        }
        assert!(eps < 1.0);
        assert!(s.final_step_size() < 1.0);
    }
}
