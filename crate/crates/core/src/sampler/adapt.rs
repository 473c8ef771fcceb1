//! Warmup adaptation: dual-averaging step size and windowed diagonal metric.

#[derive(Debug, Clone, Copy)]
pub struct DualAverageOptions {
    pub kappa: f64,
    pub t0: f64,
    pub gamma: f64,
}

impl Default for DualAverageOptions {
    fn default() -> Self {
        Self {
            kappa: 0.75,
            t0: 10.0,
            gamma: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DualAverage {
    log_step: f64,
    log_step_adapted: f64,
    hbar: f64,
    mu: f64,
    count: u64,
    opts: DualAverageOptions,
}

impl DualAverage {
    pub fn new(opts: DualAverageOptions, initial_step: f64) -> Self {
        Self {
            log_step: initial_step.ln(),
            log_step_adapted: 0.0,
            hbar: 0.0,
            mu: (10.0 * initial_step).ln(),
            count: 0,
            opts,
        }
    }

    pub fn advance(&mut self, accept_stat: f64, target: f64) {
        self.count += 1;
        let t = self.count as f64;
        let w = 1.0 / (t + self.opts.t0);
        self.hbar = (1.0 - w) * self.hbar + w * (target - accept_stat);
        self.log_step = self.mu - self.hbar * t.sqrt() / self.opts.gamma;
        let eta = t.powf(-self.opts.kappa);
        self.log_step_adapted = eta * self.log_step + (1.0 - eta) * self.log_step_adapted;
    }

    pub fn current_step_size(&self) -> f64 {
        self.log_step.exp()
    }

    pub fn final_step_size(&self) -> f64 {
        self.log_step_adapted.exp()
    }
}

/// Welford accumulator for per-coordinate variances.
#[derive(Debug, Clone)]
pub struct VarianceEstimator {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl VarianceEstimator {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Sample variances shrunk towards `1e-3`, as in Stan's diagonal adaptation.
    pub fn regularized_variance(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|s| {
                let var = s / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }

    pub fn reset(&mut self) {
        self.n = 0;
        self.mean.iter_mut().for_each(|m| *m = 0.0);
        self.m2.iter_mut().for_each(|m| *m = 0.0);
    }

    pub fn count(&self) -> usize {
        self.n
    }
}

/// Slow metric-adaptation windows `[start, end)` within `warmup` iterations:
/// an initial fast buffer of 75, doubling windows from 25, and a terminal
/// fast buffer of 50 (scaled to 15% / 75% / 10% for short warmups).
pub fn metric_windows(warmup: usize) -> Vec<(usize, usize)> {
    if warmup < 20 {
        return Vec::new();
    }
    let (mut init, mut term, mut base) = (75usize, 50usize, 25usize);
    if init + base + term > warmup {
        init = (0.15 * warmup as f64) as usize;
        term = (0.1 * warmup as f64) as usize;
        base = warmup - init - term;
    }
    let end_slow = warmup - term;
    let mut windows = Vec::new();
    let mut start = init;
    let mut size = base;
    while start < end_slow {
        let mut end = start + size;
        if end + 2 * size > end_slow {
            end = end_slow;
        }
        windows.push((start, end));
        start = end;
        size *= 2;
    }
    windows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_windows() {
        assert_eq!(
            metric_windows(1000),
            vec![(75, 100), (100, 150), (150, 250), (250, 450), (450, 950)]
        );
        assert_eq!(
            metric_windows(500),
            vec![(75, 100), (100, 150), (150, 250), (250, 450)]
        );
        let short = metric_windows(100);
        assert_eq!(short.first().unwrap().0, 15);
        assert_eq!(short.last().unwrap().1, 90);
        assert!(metric_windows(10).is_empty());
    }

    #[test]
    fn dual_averaging_moves_towards_target() {
        let mut da = DualAverage::new(DualAverageOptions::default(), 1.0);
        // persistently low acceptance shrinks the step
        for _ in 0..50 {
            da.advance(0.2, 0.8);
        }
        assert!(da.current_step_size() < 1.0);
        assert!(da.final_step_size() < 1.0);
        let mut da = DualAverage::new(DualAverageOptions::default(), 1.0);
        for _ in 0..50 {
            da.advance(1.0, 0.8);
        }
        assert!(da.final_step_size() > 1.0);
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [[1.0, 10.0], [2.0, 12.0], [4.0, 9.0], [8.0, 11.0]];
        let mut est = VarianceEstimator::new(2);
        for x in &xs {
            est.add(x);
        }
        let n = 4.0;
        for d in 0..2 {
            let col: Vec<f64> = xs.iter().map(|x| x[d]).collect();
            let var = crate::math::sample_variance(&col);
            let expected = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
            assert!((est.regularized_variance()[d] - expected).abs() < 1e-12);
        }
    }
}
